//! Weighted finite-element operators on the disk that carry the metric factor
//! `(l + r t)` of the reduction, so that disk sums reproduce torus integrals:
//!
//! * stiffness `K_ij = 2 pi int_D (l + r t) grad phi_i . grad phi_j`
//! * lumped volume mass `M_i = 2 pi r^2 int_D (l + r t) phi_i`
//! * lumped boundary mass `B_i = 2 pi r int_{dD} (l + r t) phi_i d sigma`
//!
//! Stiffness uses one centroid point per triangle, which is exact for
//! piecewise-linear gradients against the affine weight.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::TorusParams;
use crate::linalg::CsrMatrix;
use crate::mesh::DiskMesh;

/// Largest exponent accepted before reporting an overflow.
pub const EXP_ARG_CAP: f64 = 700.0;

/// `exp(x)`, refusing arguments above [`EXP_ARG_CAP`] instead of saturating.
#[inline]
pub fn checked_exp(x: f64, what: &str) -> Result<f64> {
    if x > EXP_ARG_CAP || x.is_nan() {
        return Err(Error::Overflow(format!("exp({x:.3e}) in {what}")));
    }
    Ok(x.exp())
}

/// Nodal values of a reduced G-invariant function `phi(t, s)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiskField {
    pub values: Vec<f64>,
}

impl DiskField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("field value {v} is not finite")));
        }
        Ok(Self { values })
    }

    pub fn constant(mesh: &DiskMesh, c: f64) -> Self {
        Self { values: vec![c; mesh.n_nodes()] }
    }

    pub fn zeros(mesh: &DiskMesh) -> Self {
        Self::constant(mesh, 0.0)
    }

    /// Samples `f(t, s)` at every mesh node.
    pub fn from_fn(mesh: &DiskMesh, f: impl Fn(f64, f64) -> f64) -> Self {
        Self { values: mesh.nodes().iter().map(|&[t, s]| f(t, s)).collect() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn shifted(&self, c: f64) -> Self {
        Self { values: self.values.iter().map(|v| v + c).collect() }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { values: self.values.iter().map(|v| v * c).collect() }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Geometry of one triangle needed by element-wise integrands.
#[derive(Clone, Debug)]
pub struct Element {
    pub nodes: [usize; 3],
    pub area: f64,
    /// Gradients of the three barycentric basis functions.
    pub grads: [[f64; 2]; 3],
    /// `l + r t` at the centroid (times the perturbation factor, if any).
    pub centroid_weight: f64,
}

impl Element {
    /// Gradient of the piecewise-linear interpolant of `values` on this element.
    pub fn gradient(&self, values: &[f64]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for k in 0..3 {
            let v = values[self.nodes[k]];
            g[0] += v * self.grads[k][0];
            g[1] += v * self.grads[k][1];
        }
        g
    }

    pub fn centroid_value(&self, values: &[f64]) -> f64 {
        (values[self.nodes[0]] + values[self.nodes[1]] + values[self.nodes[2]]) / 3.0
    }
}

/// Weighted stiffness, lumped volume and boundary masses for one mesh and one
/// torus.
#[derive(Clone, Debug)]
pub struct WeightedOperators {
    params: TorusParams,
    stiffness: CsrMatrix,
    volume_mass: Vec<f64>,
    boundary_mass: Vec<f64>,
    elements: Vec<Element>,
    boundary: Vec<usize>,
    is_boundary: Vec<bool>,
    h: f64,
}

impl WeightedOperators {
    pub fn assemble(mesh: &DiskMesh, p: &TorusParams) -> Self {
        Self::assemble_perturbed(mesh, p, 0.0)
    }

    /// Assembly with the weight replaced by `(l + r t)(1 + perturbation)`.
    /// Only meant for fault-injection runs of the identity checks.
    pub fn assemble_perturbed(mesh: &DiskMesh, p: &TorusParams, perturbation: f64) -> Self {
        let n = mesh.n_nodes();
        let (l, r) = (p.l(), p.r());
        let scale = 1.0 + perturbation;
        let weight = |t: f64| (l + r * t) * scale;
        let two_pi = 2.0 * std::f64::consts::PI;
        let nodes = mesh.nodes();

        let mut triplets = Vec::with_capacity(9 * mesh.triangles().len());
        let mut volume_mass = vec![0.0; n];
        let mut elements = Vec::with_capacity(mesh.triangles().len());
        for (ti, &tri) in mesh.triangles().iter().enumerate() {
            let area = mesh.triangle_area(ti);
            let [a, b, c] = tri.map(|i| nodes[i]);
            let pts = [a, b, c];
            let mut grads = [[0.0; 2]; 3];
            for k in 0..3 {
                let p1 = pts[(k + 1) % 3];
                let p2 = pts[(k + 2) % 3];
                grads[k] = [(p1[1] - p2[1]) / (2.0 * area), (p2[0] - p1[0]) / (2.0 * area)];
            }
            let tc = (a[0] + b[0] + c[0]) / 3.0;
            let wc = weight(tc);
            for i in 0..3 {
                for j in 0..3 {
                    let g = grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1];
                    triplets.push((tri[i], tri[j], two_pi * wc * area * g));
                }
            }
            let w = pts.map(|q| weight(q[0]));
            for i in 0..3 {
                let exact = area * (2.0 * w[i] + w[(i + 1) % 3] + w[(i + 2) % 3]) / 12.0;
                volume_mass[tri[i]] += two_pi * r * r * exact;
            }
            elements.push(Element { nodes: tri, area, grads, centroid_weight: wc });
        }

        let mut boundary_mass = vec![0.0; n];
        let bn = mesh.boundary_nodes();
        for k in 0..bn.len() {
            let (i, j) = (bn[k], bn[(k + 1) % bn.len()]);
            let (pi, pj) = (nodes[i], nodes[j]);
            let len = (pi[0] - pj[0]).hypot(pi[1] - pj[1]);
            let (wi, wj) = (weight(pi[0]), weight(pj[0]));
            boundary_mass[i] += two_pi * r * len * (2.0 * wi + wj) / 6.0;
            boundary_mass[j] += two_pi * r * len * (wi + 2.0 * wj) / 6.0;
        }

        let is_boundary = (0..n).map(|i| mesh.is_boundary(i)).collect();
        Self {
            params: *p,
            stiffness: CsrMatrix::from_triplets(n, triplets),
            volume_mass,
            boundary_mass,
            elements,
            boundary: bn.to_vec(),
            is_boundary,
            h: mesh.h(),
        }
    }

    pub fn params(&self) -> &TorusParams {
        &self.params
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    pub fn volume_mass(&self) -> &[f64] {
        &self.volume_mass
    }

    pub fn boundary_mass(&self) -> &[f64] {
        &self.boundary_mass
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.is_boundary[node]
    }

    pub fn n_nodes(&self) -> usize {
        self.volume_mass.len()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Discrete `Vol(T)`: the sum of the lumped volume masses.
    pub fn discrete_volume(&self) -> f64 {
        self.volume_mass.iter().sum()
    }

    /// Discrete `Vol(dT)`.
    pub fn discrete_boundary_area(&self) -> f64 {
        self.boundary.iter().map(|&i| self.boundary_mass[i]).sum()
    }

    pub fn check_field(&self, field: &DiskField) -> Result<()> {
        if field.len() != self.n_nodes() {
            return Err(Error::FieldLength { expected: self.n_nodes(), got: field.len() });
        }
        Ok(())
    }

    /// `sum_i M_i transform(v_i)`, approximating `int_T transform(v) dV`.
    pub fn integrate_volume(&self, field: &DiskField, transform: impl Fn(f64) -> f64) -> Result<f64> {
        self.check_field(field)?;
        let mut acc = 0.0;
        for (m, &v) in self.volume_mass.iter().zip(&field.values) {
            let y = transform(v);
            if !y.is_finite() {
                return Err(Error::Overflow(format!("volume integrand at value {v:.6e}")));
            }
            acc += m * y;
        }
        Ok(acc)
    }

    /// `sum_{i in dD} B_i transform(v_i)`, approximating `int_{dT} transform(v) dS`.
    pub fn integrate_boundary(&self, field: &DiskField, transform: impl Fn(f64) -> f64) -> Result<f64> {
        self.check_field(field)?;
        let mut acc = 0.0;
        for &i in &self.boundary {
            let v = field.values[i];
            let y = transform(v);
            if !y.is_finite() {
                return Err(Error::Overflow(format!("boundary integrand at value {v:.6e}")));
            }
            acc += self.boundary_mass[i] * y;
        }
        Ok(acc)
    }

    /// `v^T K v = ||grad v||^2_{L^2(T)}`.
    pub fn dirichlet_energy(&self, field: &DiskField) -> Result<f64> {
        self.check_field(field)?;
        Ok(self.stiffness.quadratic_form(&field.values))
    }

    /// Weighted `L^2(T)` norm with the lumped mass.
    pub fn l2_norm(&self, field: &DiskField) -> Result<f64> {
        Ok(self.integrate_volume(field, |v| v * v)?.sqrt())
    }

    pub fn l2_distance(&self, a: &DiskField, b: &DiskField) -> Result<f64> {
        self.check_field(a)?;
        self.check_field(b)?;
        let diff = DiskField { values: a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect() };
        self.l2_norm(&diff)
    }
}
