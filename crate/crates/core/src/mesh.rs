//! Concentric-ring triangulation of the closed unit disk.

use std::f64::consts::PI;
use std::io::{self, Write};

use crate::error::{Error, Result};

/// Triangulation of the unit disk. Ring `k` (`k = 0..=n_rings`) sits at radius
/// `k / n_rings` and carries `max(1, 6k)` equally spaced nodes; the outermost
/// ring is the boundary, listed counterclockwise in `boundary_nodes`.
#[derive(Clone, Debug)]
pub struct DiskMesh {
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary_nodes: Vec<usize>,
    is_boundary: Vec<bool>,
    n_rings: usize,
}

fn ring_start(k: usize) -> usize {
    if k == 0 {
        0
    } else {
        1 + 3 * k * (k - 1)
    }
}

fn ring_len(k: usize) -> usize {
    if k == 0 {
        1
    } else {
        6 * k
    }
}

fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

impl DiskMesh {
    pub fn build(n_rings: usize) -> Result<Self> {
        if n_rings < 2 {
            return Err(Error::Domain(format!("n_rings must be at least 2, got {n_rings}")));
        }
        let n_nodes = ring_start(n_rings) + ring_len(n_rings);
        let mut nodes = Vec::with_capacity(n_nodes);
        nodes.push([0.0, 0.0]);
        for k in 1..=n_rings {
            let rad = k as f64 / n_rings as f64;
            let m = ring_len(k);
            for j in 0..m {
                let th = 2.0 * PI * j as f64 / m as f64;
                let (s, c) = th.sin_cos();
                if k == n_rings {
                    // exactly on the circle
                    nodes.push([c, s]);
                } else {
                    nodes.push([rad * c, rad * s]);
                }
            }
        }

        let mut triangles = Vec::with_capacity(6 * n_rings * n_rings);
        for k in 1..=n_rings {
            let (i0, m) = (ring_start(k - 1), ring_len(k - 1));
            let (o0, big) = (ring_start(k), ring_len(k));
            // the centre node fans out to the whole first ring
            let (mut i, mut j) = (if k == 1 { m } else { 0 }, 0usize);
            // Merge the two rings by angle, always closing the quadrilateral
            // with the angularly shorter diagonal; integer arithmetic keeps
            // ties exact.
            while i < m || j < big {
                let advance_outer = if j == big {
                    false
                } else if i == m {
                    true
                } else {
                    (2 * j + 1) * m < (2 * i + 1) * big
                };
                let a = i0 + (i % m);
                let b = o0 + (j % big);
                let tri = if advance_outer {
                    let c = o0 + ((j + 1) % big);
                    j += 1;
                    [a, b, c]
                } else {
                    let c = i0 + ((i + 1) % m);
                    i += 1;
                    [a, b, c]
                };
                let tri = if signed_area(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]) < 0.0 {
                    [tri[0], tri[2], tri[1]]
                } else {
                    tri
                };
                triangles.push(tri);
            }
        }

        let boundary_nodes: Vec<usize> = (ring_start(n_rings)..n_nodes).collect();
        let mut is_boundary = vec![false; n_nodes];
        for &b in &boundary_nodes {
            is_boundary[b] = true;
        }
        Ok(Self { nodes, triangles, boundary_nodes, is_boundary, n_rings })
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.is_boundary[node]
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_rings(&self) -> usize {
        self.n_rings
    }

    /// Nominal mesh size `1 / n_rings`.
    pub fn h(&self) -> f64 {
        1.0 / self.n_rings as f64
    }

    pub fn triangle_area(&self, tri: usize) -> f64 {
        let [a, b, c] = self.triangles[tri];
        signed_area(self.nodes[a], self.nodes[b], self.nodes[c])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|i| self.triangle_area(i)).sum()
    }

    /// Plain-text dump: a `nodes` section (`index t s`), a `triangles` section
    /// (`index a b c`) and a `boundary` section (one node index per line).
    pub fn write_text<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# nodes {}", self.nodes.len())?;
        for (i, [t, s]) in self.nodes.iter().enumerate() {
            writeln!(w, "{i} {t:.17e} {s:.17e}")?;
        }
        writeln!(w, "# triangles {}", self.triangles.len())?;
        for (i, [a, b, c]) in self.triangles.iter().enumerate() {
            writeln!(w, "{i} {a} {b} {c}")?;
        }
        writeln!(w, "# boundary {}", self.boundary_nodes.len())?;
        for b in &self.boundary_nodes {
            writeln!(w, "{b}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        let m = DiskMesh::build(2).unwrap();
        assert_eq!(m.n_nodes(), 19);
        assert_eq!(m.boundary_nodes().len(), 12);
        assert_eq!(m.triangles().len(), 24);
        assert!(matches!(DiskMesh::build(1), Err(Error::Domain(_))));
        assert!(DiskMesh::build(0).is_err());
    }

    #[test]
    fn invariants() {
        for n in [2, 3, 5, 8, 17] {
            let m = DiskMesh::build(n).unwrap();
            for [t, s] in m.nodes() {
                assert!(t * t + s * s <= 1.0 + 1e-12);
            }
            for &b in m.boundary_nodes() {
                let [t, s] = m.nodes()[b];
                assert!((t * t + s * s - 1.0).abs() <= 1e-10);
            }
            for i in 0..m.triangles().len() {
                assert!(m.triangle_area(i) > 0.0);
            }
            // boundary traversed once, counterclockwise
            let bn = m.boundary_nodes();
            let mut angle = 0.0;
            for w in 0..bn.len() {
                let a = m.nodes()[bn[w]];
                let b = m.nodes()[bn[(w + 1) % bn.len()]];
                let da = b[1].atan2(b[0]) - a[1].atan2(a[0]);
                let da = (da + PI).rem_euclid(2.0 * PI) - PI;
                assert!(da > 0.0);
                angle += da;
            }
            assert!((angle - 2.0 * PI).abs() < 1e-12);
            // every interior edge is shared by exactly two triangles
            let mut edges = std::collections::HashMap::new();
            for tri in m.triangles() {
                for e in 0..3 {
                    let (a, b) = (tri[e], tri[(e + 1) % 3]);
                    *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
                }
            }
            let boundary_edges = edges.values().filter(|&&c| c == 1).count();
            assert_eq!(boundary_edges, bn.len());
            assert!(edges.values().all(|&c| c == 1 || c == 2));
        }
    }

    #[test]
    fn all_angles_acute() {
        for n in [2, 3, 7, 16, 40] {
            let m = DiskMesh::build(n).unwrap();
            for t in m.triangles() {
                for e in 0..3 {
                    let p = m.nodes()[t[e]];
                    let a = m.nodes()[t[(e + 1) % 3]];
                    let b = m.nodes()[t[(e + 2) % 3]];
                    let dot = (a[0] - p[0]) * (b[0] - p[0]) + (a[1] - p[1]) * (b[1] - p[1]);
                    assert!(dot > 0.0, "right or obtuse angle in {t:?}");
                }
            }
        }
    }

    #[test]
    fn area_converges_to_pi() {
        // inscribed regular polygon with 6n sides bounds the error from above
        let m = DiskMesh::build(4).unwrap();
        let polygon = 0.5 * 24.0 * (2.0 * PI / 24.0).sin();
        assert!((m.total_area() - polygon).abs() < 1e-12);
        assert!((m.total_area() - PI).abs() < 0.04);
        let e16 = PI - DiskMesh::build(16).unwrap().total_area();
        let e32 = PI - DiskMesh::build(32).unwrap().total_area();
        assert!(((e16 / e32).log2() - 2.0).abs() < 0.05);
    }

    #[test]
    fn text_export() {
        let m = DiskMesh::build(2).unwrap();
        let mut buf = Vec::new();
        m.write_text(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# nodes 19\n"));
        assert!(text.contains("# triangles 24\n"));
        assert_eq!(text.lines().count(), 3 + 19 + 24 + 12);
    }
}
