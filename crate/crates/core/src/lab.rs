//! Blow-up families and both sides of the exponential (Moser-Trudinger type)
//! inequalities on the torus: closed-form and mesh evaluations, constant
//! estimates `C_hat` and the `e^{alpha v^2}` corollary.

use std::f64::consts::PI;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::geometry::{orbit_distance, Orbit, TorusParams, TorusPoint};
use crate::mesh::DiskMesh;
use crate::operators::{DiskField, WeightedOperators};

/// Largest admissible tube radius as a fraction of the orbit radius.
pub const MAX_TUBE_FRACTION: f64 = 0.5;

/// `v_alpha(Q) = -2 ln(alpha + d^2) + 2 ln(alpha + delta^2)` for `d < delta`,
/// zero outside, where `d` is the distance from `Q` to the centre orbit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowupFamily {
    pub alpha: f64,
    pub delta: f64,
    pub orbit: Orbit,
    pub params: TorusParams,
}

impl BlowupFamily {
    pub fn new(params: TorusParams, orbit: Orbit, delta: f64, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Domain(format!("alpha must be positive, got {alpha}")));
        }
        if !(delta > 0.0 && delta <= MAX_TUBE_FRACTION * orbit.l_p) {
            return Err(Error::Domain(format!(
                "tube radius {delta} must lie in (0, {MAX_TUBE_FRACTION} l_P] with l_P = {}",
                orbit.l_p
            )));
        }
        Ok(Self { alpha, delta, orbit, params })
    }

    /// The family at the minimal orbit `(l - r, 0)` with `delta = fraction * (l - r)`.
    pub fn at_minimal_orbit(params: TorusParams, fraction: f64, alpha: f64) -> Result<Self> {
        let orbit = Orbit::minimal(&params);
        Self::new(params, orbit, fraction * orbit.l_p, alpha)
    }

    /// The family on the core circle `(l, 0)` filling the whole cross-section
    /// (`delta = r`); vanishes on the boundary.
    pub fn at_core(params: TorusParams, alpha: f64) -> Result<Self> {
        Self::new(params, Orbit::central(&params), params.r(), alpha)
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Self::new(self.params, self.orbit, self.delta, alpha)
    }

    pub fn value_at_distance(&self, d: f64) -> f64 {
        if d >= self.delta {
            0.0
        } else {
            2.0 * ((self.alpha + self.delta * self.delta) / (self.alpha + d * d)).ln()
        }
    }

    /// Peak value on the centre orbit.
    pub fn peak(&self) -> f64 {
        self.value_at_distance(0.0)
    }

    /// The core `d <~ sqrt(alpha)` is resolved by a mesh of size `h` when
    /// `h <= sqrt(alpha) / (2 r)` (disk units).
    pub fn resolved_by(&self, h: f64) -> bool {
        h <= self.alpha.sqrt() / (2.0 * self.params.r())
    }
}

pub fn blowup_field(mesh: &DiskMesh, fam: &BlowupFamily) -> DiskField {
    let p = &fam.params;
    DiskField {
        values: mesh
            .nodes()
            .iter()
            .map(|&[t, s]| fam.value_at_distance(orbit_distance(&TorusPoint::from_disk(p, t, s), &fam.orbit)))
            .collect(),
    }
}

/// Exact integrals of the profile over the tube cross-section rescaled to the
/// unit disk `D` (`d = delta * rho`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiskClosedForms {
    /// `int_D e^phi = pi (alpha + delta^2) / alpha`
    pub exp_integral: f64,
    /// `int_D |grad phi|^2 = 16 pi [ln((alpha + delta^2)/alpha) - delta^2/(alpha + delta^2)]`
    pub grad_integral: f64,
    /// `int_D phi = 2 pi [1 + (alpha/delta^2) ln(alpha/(alpha + delta^2))]`
    pub integral: f64,
}

pub fn blowup_closed_forms(fam: &BlowupFamily) -> DiskClosedForms {
    let (a, d2) = (fam.alpha, fam.delta * fam.delta);
    // ln((a + d2)/a) without cancellation for large a
    let log_ratio = (d2 / a).ln_1p();
    DiskClosedForms {
        exp_integral: PI * (a + d2) / a,
        grad_integral: 16.0 * PI * (log_ratio - d2 / (a + d2)),
        integral: 2.0 * PI * (1.0 - (a / d2) * log_ratio),
    }
}

/// Which constant `mu` multiplies the Dirichlet energy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum MtMode {
    /// `mu = 1/(32 pi^2 (l - r))`, fields vanishing on the boundary.
    InteriorDirichlet,
    /// `mu = 1/(16 pi^2 (l - r))`, all of `H^1`.
    InteriorFull,
    /// Boundary integral with a caller-chosen `mu > 1/(8 pi^2 (l - r))`.
    BoundaryTrace { mu: f64 },
}

impl MtMode {
    pub fn mu(&self, p: &TorusParams) -> Result<f64> {
        let lr = p.l() - p.r();
        match *self {
            MtMode::InteriorDirichlet => Ok(1.0 / (32.0 * PI * PI * lr)),
            MtMode::InteriorFull => Ok(1.0 / (16.0 * PI * PI * lr)),
            MtMode::BoundaryTrace { mu } => {
                let min = 1.0 / (8.0 * PI * PI * lr);
                if mu > min && mu.is_finite() {
                    Ok(mu)
                } else {
                    Err(Error::Mode(format!("trace constant {mu} must exceed {min:.6e}")))
                }
            }
        }
    }
}

/// The two sides of the inequality for one field: `lhs = int e^v` (volume or
/// boundary) and `exponent_rhs = mu |grad v|^2 + mean(v)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MtSides {
    pub lhs: f64,
    pub exponent_rhs: f64,
    pub mu: f64,
}

impl MtSides {
    /// Empirical constant `lhs / exp(exponent_rhs)`.
    pub fn c_hat(&self) -> f64 {
        (self.lhs.ln() - self.exponent_rhs).exp()
    }
}

/// Boundary values must vanish to this tolerance in Dirichlet mode.
pub const DIRICHLET_TOL: f64 = 1e-10;

pub fn mt_inequality_check(ops: &WeightedOperators, field: &DiskField, mode: MtMode) -> Result<MtSides> {
    ops.check_field(field)?;
    let mu = mode.mu(ops.params())?;
    if mode == MtMode::InteriorDirichlet {
        if let Some(&i) = ops.boundary_nodes().iter().find(|&&i| field.values[i].abs() > DIRICHLET_TOL) {
            return Err(Error::Mode(format!(
                "Dirichlet mode needs zero boundary values (node {i} has {:.3e})",
                field.values[i]
            )));
        }
    }
    let energy = ops.dirichlet_energy(field)?;
    let (lhs, mean) = match mode {
        MtMode::BoundaryTrace { .. } => (
            ops.integrate_boundary(field, f64::exp)?,
            ops.integrate_boundary(field, |x| x)? / ops.discrete_boundary_area(),
        ),
        _ => (ops.integrate_volume(field, f64::exp)?, ops.integrate_volume(field, |x| x)? / ops.discrete_volume()),
    };
    Ok(MtSides { lhs, exponent_rhs: mu * energy + mean, mu })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MtScanRow {
    pub alpha: f64,
    pub grad_energy: f64,
    pub log_integral: f64,
    pub mean_term: f64,
    pub ratio: f64,
    pub c_hat: f64,
    pub resolved: bool,
}

impl MtScanRow {
    fn new(alpha: f64, grad_energy: f64, log_integral: f64, mean_term: f64, mu: f64, resolved: bool) -> Self {
        Self {
            alpha,
            grad_energy,
            log_integral,
            mean_term,
            ratio: grad_energy / (log_integral - mean_term),
            c_hat: (log_integral - mu * grad_energy - mean_term).exp(),
            resolved,
        }
    }
}

/// `32 pi^2 l_P`, the limit of the scan ratio for a family on the orbit of radius `l_P`.
pub fn ratio_limit(fam: &BlowupFamily) -> f64 {
    32.0 * PI * PI * fam.orbit.l_p
}

/// The band `[1 - delta/l_P, 1 + delta/l_P] * ratio_limit` coming from the
/// weight bounds `2 pi (l_P -+ delta)` across the tube.
pub fn ratio_band(fam: &BlowupFamily) -> (f64, f64) {
    let eps = fam.delta / fam.orbit.l_p;
    let lim = ratio_limit(fam);
    ((1.0 - eps) * lim, (1.0 + eps) * lim)
}

/// One closed-form scan row: the tube integrals are the disk closed forms
/// scaled by the orbit length `2 pi l_P` and the area factor `delta^2`; the
/// field is 0 on the rest of the torus, which contributes `Vol(T) - 2 pi^2 l_P delta^2`
/// to `int e^v`.
pub fn mt_row_closed_form(fam: &BlowupFamily, mu: f64) -> MtScanRow {
    let cf = blowup_closed_forms(fam);
    let p = &fam.params;
    let w = 2.0 * PI * fam.orbit.l_p;
    let d2 = fam.delta * fam.delta;
    let grad = w * cf.grad_integral;
    let exp_tube = w * d2 * cf.exp_integral;
    let log_integral = (exp_tube + p.volume() - w * PI * d2).ln();
    let mean = w * d2 * cf.integral / p.volume();
    MtScanRow::new(fam.alpha, grad, log_integral, mean, mu, true)
}

pub fn mt_scan_closed_form(fam: &BlowupFamily, alphas: &[f64], mu: f64, exec: Execution) -> Result<Vec<MtScanRow>> {
    check_alphas(alphas)?;
    let fams: Vec<BlowupFamily> = alphas.iter().map(|&a| fam.with_alpha(a)).collect::<Result<_>>()?;
    Ok(exec::map(exec, &fams, |f| mt_row_closed_form(f, mu)))
}

/// Scan rows from nodal blow-up fields and the weighted mesh quadrature.
pub fn mt_scan_mesh(
    mesh: &DiskMesh,
    ops: &WeightedOperators,
    fam: &BlowupFamily,
    alphas: &[f64],
    mu: f64,
    exec: Execution,
) -> Result<Vec<MtScanRow>> {
    check_alphas(alphas)?;
    let fams: Vec<BlowupFamily> = alphas.iter().map(|&a| fam.with_alpha(a)).collect::<Result<_>>()?;
    exec::map(exec, &fams, |f| {
        let v = blowup_field(mesh, f);
        let grad = ops.dirichlet_energy(&v)?;
        let lhs = ops.integrate_volume(&v, f64::exp)?;
        let mean = ops.integrate_volume(&v, |x| x)? / ops.discrete_volume();
        Ok(MtScanRow::new(f.alpha, grad, lhs.ln(), mean, mu, f.resolved_by(mesh.h())))
    })
    .into_iter()
    .collect()
}

fn check_alphas(alphas: &[f64]) -> Result<()> {
    if alphas.is_empty() || alphas.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
        return Err(Error::Domain("alphas must be positive and finite".into()));
    }
    if alphas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Domain("alphas must be strictly decreasing".into()));
    }
    Ok(())
}

/// Decade-spaced `10^{-from}, ..., 10^{-to}`.
pub fn decade_alphas(from: i32, to: i32) -> Vec<f64> {
    (from..=to).map(|k| 10f64.powi(-k)).collect()
}

/// Unweighted integrals over the unit disk of the nodal field: `int_D e^v`
/// (lumped) and `int_D |grad v|^2` (piecewise linear).
pub fn disk_integrals(mesh: &DiskMesh, field: &DiskField) -> Result<(f64, f64)> {
    if field.len() != mesh.n_nodes() {
        return Err(Error::FieldLength { expected: mesh.n_nodes(), got: field.len() });
    }
    let v = &field.values;
    let nodes = mesh.nodes();
    let (mut exp_int, mut grad_int) = (0.0, 0.0);
    for (k, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.triangle_area(k);
        let [a, b, c] = tri.map(|i| nodes[i]);
        // gradient of the linear interpolant
        let det = 2.0 * area;
        let gx = (v[tri[0]] * (b[1] - c[1]) + v[tri[1]] * (c[1] - a[1]) + v[tri[2]] * (a[1] - b[1])) / det;
        let gy = (v[tri[0]] * (c[0] - b[0]) + v[tri[1]] * (a[0] - c[0]) + v[tri[2]] * (b[0] - a[0])) / det;
        grad_int += area * (gx * gx + gy * gy);
        exp_int += area / 3.0 * tri.iter().map(|&i| v[i].exp()).sum::<f64>();
    }
    if !exp_int.is_finite() {
        return Err(Error::Overflow("disk exponential integral".into()));
    }
    Ok((exp_int, grad_int))
}

/// Radial truncated logarithm on the cross-section around the core circle:
/// `w_rho(d) = min(ln(r/d), ln(1/rho)) / sqrt(2 pi ln(1/rho))`, zero on the boundary.
pub fn moser_field(mesh: &DiskMesh, p: &TorusParams, rho: f64) -> Result<DiskField> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Domain(format!("rho must lie in (0, 1), got {rho}")));
    }
    let orbit = Orbit::central(p);
    let big = (1.0 / rho).ln();
    let norm = (2.0 * PI * big).sqrt();
    Ok(DiskField {
        values: mesh
            .nodes()
            .iter()
            .map(|&[t, s]| {
                let d = orbit_distance(&TorusPoint::from_disk(p, t, s), &orbit);
                let v = if d <= 0.0 { big } else { (p.r() / d).ln().clamp(0.0, big) };
                v / norm
            })
            .collect(),
    })
}

/// `2 pi (l + r)`, the energy bound of the corollary.
pub fn gradient_bound(p: &TorusParams) -> f64 {
    2.0 * PI * (p.l() + p.r())
}

/// `v * sqrt(2 pi (l + r)) / |grad v|`
pub fn rescale_to_gradient_bound(ops: &WeightedOperators, field: &DiskField) -> Result<DiskField> {
    let e = ops.dirichlet_energy(field)?;
    if !(e > 0.0) {
        return Err(Error::Domain("cannot rescale a field with zero energy".into()));
    }
    Ok(field.scaled((gradient_bound(ops.params()) / e).sqrt()))
}

/// `int_T e^{alpha v^2}` for a field vanishing on the boundary with
/// `|grad v|^2 <= 2 pi (l + r)`.
pub fn corollary_check(ops: &WeightedOperators, field: &DiskField, alpha_exp: f64) -> Result<f64> {
    ops.check_field(field)?;
    if let Some(&i) = ops.boundary_nodes().iter().find(|&&i| field.values[i].abs() > DIRICHLET_TOL) {
        return Err(Error::Mode(format!("field must vanish on the boundary (node {i})")));
    }
    let energy = ops.dirichlet_energy(field)?;
    let bound = gradient_bound(ops.params());
    if energy > bound * (1.0 + 1e-8) {
        return Err(Error::GradientBound { energy, bound });
    }
    ops.integrate_volume(field, |x| (alpha_exp * x * x).exp())
}

pub const SCAN_CSV_HEADER: &str = "alpha,grad_energy,log_integral,mean_term,ratio,C_hat,resolved_flag";

/// Writes scan rows as CSV with 17 significant digits.
pub fn write_scan_csv<W: Write>(mut w: W, rows: &[MtScanRow]) -> io::Result<()> {
    writeln!(w, "{SCAN_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            r.alpha,
            r.grad_energy,
            r.log_integral,
            r.mean_term,
            r.ratio,
            r.c_hat,
            u8::from(r.resolved)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> TorusParams {
        TorusParams::new(2.0, 1.0).unwrap()
    }

    #[test]
    fn family_validation() {
        let p = params();
        assert!(BlowupFamily::new(p, Orbit::central(&p), 1.0, 0.1).is_ok());
        assert!(matches!(BlowupFamily::new(p, Orbit::central(&p), 1.5, 0.1), Err(Error::Domain(_))));
        assert!(BlowupFamily::new(p, Orbit::central(&p), 0.5, 0.0).is_err());
        assert!(BlowupFamily::new(p, Orbit::central(&p), -0.5, 1.0).is_err());
    }

    #[test]
    fn field_values() {
        let p = params();
        let fam = BlowupFamily::at_core(p, 1e-2).unwrap();
        let mesh = DiskMesh::build(8).unwrap();
        let v = blowup_field(&mesh, &fam);
        assert_relative_eq!(v.values[0], 2.0 * ((1e-2 + 1.0) / 1e-2f64).ln(), max_relative = 1e-14);
        for &b in mesh.boundary_nodes() {
            assert!(v.values[b].abs() < 1e-12);
        }
        assert_eq!(fam.value_at_distance(1.0), 0.0);
        assert_eq!(fam.value_at_distance(3.0), 0.0);
        assert!(fam.value_at_distance(0.999_999) > 0.0);
    }

    #[test]
    fn closed_form_examples() {
        let p = params();
        let fam = BlowupFamily::new(p, Orbit::central(&p), 0.3, 0.09).unwrap();
        let cf = blowup_closed_forms(&fam);
        assert_relative_eq!(cf.exp_integral, 2.0 * PI, max_relative = 1e-14);
        assert_relative_eq!(cf.grad_integral, 16.0 * PI * (2f64.ln() - 0.5), max_relative = 1e-14);
        // 1D quadrature of 2 pi rho |phi'(rho)|^2 on [0, 1]
        assert_relative_eq!(cf.grad_integral, 9.708636216139288, max_relative = 1e-13);
        let flat = blowup_closed_forms(&fam.with_alpha(1e12).unwrap());
        assert_relative_eq!(flat.exp_integral, PI, max_relative = 1e-12);
        assert!(flat.grad_integral.abs() < 1e-20);
        assert!(flat.integral.abs() < 1e-12);
    }

    #[test]
    fn full_mode_zero_field() {
        let p = params();
        let mesh = DiskMesh::build(16).unwrap();
        let ops = WeightedOperators::assemble(&mesh, &p);
        let s = mt_inequality_check(&ops, &DiskField::zeros(&mesh), MtMode::InteriorFull).unwrap();
        assert_relative_eq!(s.lhs, ops.discrete_volume(), max_relative = 1e-14);
        assert_eq!(s.exponent_rhs, 0.0);
        assert_relative_eq!(s.c_hat(), ops.discrete_volume(), max_relative = 1e-14);
        // Dirichlet mode rejects nonzero boundary values
        let one = DiskField::constant(&mesh, 1.0);
        assert!(matches!(mt_inequality_check(&ops, &one, MtMode::InteriorDirichlet), Err(Error::Mode(_))));
        assert!(MtMode::BoundaryTrace { mu: 1.0 / (8.0 * PI * PI) }.mu(&p).is_err());
        assert!(MtMode::BoundaryTrace { mu: 1.1 / (8.0 * PI * PI) }.mu(&p).is_ok());
    }

    #[test]
    fn csv_layout() {
        let p = params();
        let fam = BlowupFamily::at_minimal_orbit(p, 0.1, 1e-2).unwrap();
        let rows = mt_scan_closed_form(&fam, &[1e-2, 1e-3], 1.0, Execution::Sequential).unwrap();
        let mut buf = Vec::new();
        write_scan_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], SCAN_CSV_HEADER);
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("1.0000000000000000e-2,"));
        assert!(text.ends_with("1\n"));
        assert!(mt_scan_closed_form(&fam, &[1e-3, 1e-2], 1.0, Execution::Sequential).is_err());
    }
}
