//! Variational functionals, constraints and integral identities for the two
//! model problems, evaluated on disk fields with the weighted operators.
//!
//! Sign convention throughout: `Delta v = -div grad v`, so
//!
//! * (P1)  `Delta v + gamma = f e^v` in T, `v = 0` on dT
//! * (P2)  `Delta v + a + f e^v = 0` in T, `dv/dn + b + g e^v = 0` on dT
//!
//! and the weak forms use the positive semidefinite stiffness directly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{orbit_distance, Orbit, TorusParams, TorusPoint};
use crate::mesh::DiskMesh;
use crate::operators::{checked_exp, DiskField, WeightedOperators};

/// Boundary condition attached to (P1). `Dirichlet` is the problem as posed;
/// `Natural` is the unconstrained class in which the constrained minimization
/// over `{ int f e^v = gamma Vol(T) }` lives (its Euler equation carries a
/// homogeneous Neumann condition).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum P1Boundary {
    #[default]
    Dirichlet,
    Natural,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemP1 {
    pub gamma: f64,
    pub f: DiskField,
    pub boundary: P1Boundary,
}

impl ProblemP1 {
    pub fn new(gamma: f64, f: DiskField) -> Result<Self> {
        Self::with_boundary(gamma, f, P1Boundary::Dirichlet)
    }

    pub fn with_boundary(gamma: f64, f: DiskField, boundary: P1Boundary) -> Result<Self> {
        if !gamma.is_finite() {
            return Err(Error::Domain("gamma must be finite".into()));
        }
        let f = DiskField::new(f.values)?;
        Ok(Self { gamma, f, boundary })
    }

    /// Upper end of the sufficient existence window `0 < gamma < 8(l-r)/(l r^2)`
    /// for `gamma > 0`.
    pub fn gamma_window(p: &TorusParams) -> f64 {
        8.0 * (p.l() - p.r()) / (p.l() * p.r() * p.r())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemP2 {
    pub a: f64,
    pub b: f64,
    pub f: DiskField,
    /// Only the boundary-node values are used.
    pub g: DiskField,
    r_total: f64,
}

impl ProblemP2 {
    pub fn new(p: &TorusParams, a: f64, b: f64, f: DiskField, g: DiskField) -> Result<Self> {
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::Domain("a and b must be finite".into()));
        }
        let f = DiskField::new(f.values)?;
        let g = DiskField::new(g.values)?;
        if f.len() != g.len() {
            return Err(Error::FieldLength { expected: f.len(), got: g.len() });
        }
        Ok(Self { a, b, f, g, r_total: a * p.volume() + b * p.boundary_area() })
    }

    /// `R = a Vol(T) + b Vol(dT)` with the exact measures.
    pub fn r_total(&self) -> f64 {
        self.r_total
    }

    /// Per-node coefficient of `e^{v_i}` in the lumped `int f e^v + int g e^v`.
    pub fn exp_coefficients(&self, ops: &WeightedOperators) -> Vec<f64> {
        let (m, bm) = (ops.volume_mass(), ops.boundary_mass());
        (0..ops.n_nodes())
            .map(|i| m[i] * self.f.values[i] + if ops.is_boundary(i) { bm[i] * self.g.values[i] } else { 0.0 })
            .collect()
    }

    fn f_g_both_nonnegative(&self, ops: &WeightedOperators) -> bool {
        self.f.values.iter().all(|&v| v >= 0.0) && ops.boundary_nodes().iter().all(|&i| self.g.values[i] >= 0.0)
    }

    fn f_g_identically_zero(&self, ops: &WeightedOperators) -> bool {
        self.f.values.iter().all(|&v| v == 0.0) && ops.boundary_nodes().iter().all(|&i| self.g.values[i] == 0.0)
    }
}

/// `I(v) = int |grad v|^2 + 2 gamma int v`
pub fn functional_i_p1(ops: &WeightedOperators, field: &DiskField, prob: &ProblemP1) -> Result<f64> {
    let energy = ops.dirichlet_energy(field)?;
    if prob.gamma == 0.0 {
        return Ok(energy);
    }
    Ok(energy + 2.0 * prob.gamma * ops.integrate_volume(field, |x| x)?)
}

/// `int f e^v - gamma Vol(T)`; zero exactly on the constraint set.
pub fn constraint_a_p1(ops: &WeightedOperators, field: &DiskField, prob: &ProblemP1) -> Result<f64> {
    ops.check_field(field)?;
    ops.check_field(&prob.f)?;
    let mut acc = 0.0;
    for (i, &m) in ops.volume_mass().iter().enumerate() {
        acc += m * prob.f.values[i] * checked_exp(field.values[i], "constraint A")?;
    }
    Ok(acc - prob.gamma * ops.discrete_volume())
}

/// `I(v) = 1/2 int |grad v|^2 + a int v + b int_dT v`
pub fn functional_i_p2(ops: &WeightedOperators, field: &DiskField, prob: &ProblemP2) -> Result<f64> {
    let mut out = 0.5 * ops.dirichlet_energy(field)?;
    if prob.a != 0.0 {
        out += prob.a * ops.integrate_volume(field, |x| x)?;
    }
    if prob.b != 0.0 {
        out += prob.b * ops.integrate_boundary(field, |x| x)?;
    }
    Ok(out)
}

/// `K(v) = a Vol(T) + b Vol(dT) + int f e^v + int_dT g e^v`
pub fn constraint_k(ops: &WeightedOperators, field: &DiskField, prob: &ProblemP2) -> Result<f64> {
    ops.check_field(field)?;
    ops.check_field(&prob.f)?;
    let coeff = prob.exp_coefficients(ops);
    let mut acc = prob.a * ops.discrete_volume() + prob.b * ops.discrete_boundary_area();
    for (c, &v) in coeff.iter().zip(&field.values) {
        if *c != 0.0 {
            acc += c * checked_exp(v, "constraint K")?;
        }
    }
    Ok(acc)
}

/// `|a| Vol(T) + |b| Vol(dT) + int |f| e^v + int_dT |g| e^v`, the size of the
/// terms that cancel in `K(v)`.
pub fn constraint_k_scale(ops: &WeightedOperators, field: &DiskField, prob: &ProblemP2) -> Result<f64> {
    ops.check_field(field)?;
    let coeff = prob.exp_coefficients(ops);
    let mut acc = prob.a.abs() * ops.discrete_volume() + prob.b.abs() * ops.discrete_boundary_area();
    let (m, bm) = (ops.volume_mass(), ops.boundary_mass());
    for (i, &v) in field.values.iter().enumerate() {
        if coeff[i] != 0.0 || prob.f.values[i] != 0.0 {
            let g = if ops.is_boundary(i) { bm[i] * prob.g.values[i].abs() } else { 0.0 };
            acc += (m[i] * prob.f.values[i].abs() + g) * checked_exp(v, "constraint K scale")?;
        }
    }
    Ok(acc)
}

/// The five terms of the `e^{-v}`-tested identity for (P2).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpMinusIdentity {
    pub a_term: f64,
    pub b_term: f64,
    pub f_term: f64,
    pub g_term: f64,
    pub gradient_term: f64,
}

impl ExpMinusIdentity {
    /// `a int e^-v + b int_dT e^-v + int f + int_dT g - int e^-v |grad v|^2`
    pub fn residual(&self) -> f64 {
        self.a_term + self.b_term + self.f_term + self.g_term - self.gradient_term
    }

    /// Sum of absolute term values, the natural scale of the residual.
    pub fn scale(&self) -> f64 {
        self.a_term.abs() + self.b_term.abs() + self.f_term.abs() + self.g_term.abs() + self.gradient_term.abs()
    }
}

/// Evaluates the identity terms: lumped quadrature for the first four,
/// piecewise-constant `|grad v|^2` with `e^{-v}` at centroids for the last.
pub fn exp_minus_identity(ops: &WeightedOperators, field: &DiskField, prob: &ProblemP2) -> Result<ExpMinusIdentity> {
    ops.check_field(field)?;
    for &v in &field.values {
        checked_exp(-v, "identity e^-v")?;
    }
    let a_term = prob.a * ops.integrate_volume(field, |x| (-x).exp())?;
    let b_term = prob.b * ops.integrate_boundary(field, |x| (-x).exp())?;
    let f_term = ops.integrate_volume(&prob.f, |x| x)?;
    let g_term = ops.integrate_boundary(&prob.g, |x| x)?;
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut gradient_term = 0.0;
    for el in ops.elements() {
        let g = el.gradient(&field.values);
        let vc = el.centroid_value(&field.values);
        gradient_term += two_pi * el.centroid_weight * el.area * (-vc).exp() * (g[0] * g[0] + g[1] * g[1]);
    }
    Ok(ExpMinusIdentity { a_term, b_term, f_term, g_term, gradient_term })
}

pub fn exp_minus_identity_residual(ops: &WeightedOperators, field: &DiskField, prob: &ProblemP2) -> Result<f64> {
    Ok(exp_minus_identity(ops, field, prob)?.residual())
}

/// Where a mean value is taken.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Volume,
    Boundary,
}

pub fn mean_value(ops: &WeightedOperators, field: &DiskField, region: Region) -> Result<f64> {
    match region {
        Region::Volume => Ok(ops.integrate_volume(field, |x| x)? / ops.discrete_volume()),
        Region::Boundary => Ok(ops.integrate_boundary(field, |x| x)? / ops.discrete_boundary_area()),
    }
}

/// Smooth cutoff: 1 on `[0, 1/2]`, 0 on `[1, inf)`, `C^inf` in between.
pub fn cutoff(x: f64) -> f64 {
    fn psi(y: f64) -> f64 {
        if y > 0.0 {
            (-1.0 / y).exp()
        } else {
            0.0
        }
    }
    if x <= 0.5 {
        1.0
    } else if x >= 1.0 {
        0.0
    } else {
        let a = psi(1.0 - x);
        a / (a + psi(x - 0.5))
    }
}

/// A radial bump `v = amplitude * cutoff(d / delta)` around the orbit through
/// one mesh node.
#[derive(Clone, Debug)]
pub struct Bump {
    pub center_node: usize,
    pub orbit: Orbit,
    pub delta: f64,
    pub amplitude: f64,
    /// `cutoff(d_j / delta)` per node.
    pub profile: Vec<f64>,
}

impl Bump {
    pub fn field(&self) -> DiskField {
        DiskField { values: self.profile.iter().map(|e| self.amplitude * e).collect() }
    }
}

const BUMP_AMPLITUDE_MAX: f64 = 60.0;

/// Finds a bump `v` with `sum_i coeff_i e^{v_i} = 0`, given `sum_i coeff_i > 0`
/// and some negative coefficient. The bump is centred at the node with the most
/// negative `coeff_i / density_i` and its radius is half the torus distance to
/// the nearest node with a nonnegative coefficient, so every node it touches
/// pulls the sum down and the sum decreases monotonically in the amplitude.
pub fn zero_sum_bump(mesh: &DiskMesh, p: &TorusParams, coeff: &[f64], density: &[f64]) -> Result<Bump> {
    let total: f64 = coeff.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Infeasible(format!("coefficient sum {total:.6e} is not positive")));
    }
    let center = (0..coeff.len())
        .filter(|&i| coeff[i] < 0.0)
        .min_by(|&i, &j| (coeff[i] / density[i]).total_cmp(&(coeff[j] / density[j])))
        .ok_or_else(|| Error::Infeasible("no node with a negative coefficient".into()))?;
    let nodes = mesh.nodes();
    let [tc, sc] = nodes[center];
    let orbit = Orbit::through_disk_point(p, tc, sc);
    let dist: Vec<f64> = nodes.iter().map(|&[t, s]| orbit_distance(&TorusPoint::from_disk(p, t, s), &orbit)).collect();
    let nearest_nonneg = (0..coeff.len()).filter(|&i| coeff[i] >= 0.0).map(|i| dist[i]).fold(f64::INFINITY, f64::min);
    let delta = 0.5 * nearest_nonneg;
    let profile: Vec<f64> = dist.iter().map(|d| cutoff(d / delta)).collect();

    let sum_at = |amp: f64| -> f64 {
        coeff.iter().zip(&profile).map(|(c, e)| if *e == 0.0 { *c } else { c * (amp * e).exp() }).sum()
    };
    let scale: f64 = coeff.iter().map(|c| c.abs()).sum::<f64>();
    let (mut lo, mut hi) = (0.0, BUMP_AMPLITUDE_MAX);
    if sum_at(hi) > 0.0 {
        return Err(Error::NoRoot(format!("bump amplitude bracket [0, {BUMP_AMPLITUDE_MAX}] does not change sign")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let val = sum_at(mid);
        if val > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if val.abs() <= 1e-14 * scale || hi - lo <= 1e-15 * hi {
            break;
        }
    }
    // pick the endpoint with the smaller residual
    let amplitude = if sum_at(lo).abs() < sum_at(hi).abs() { lo } else { hi };
    Ok(Bump { center_node: center, orbit, delta, amplitude, profile })
}

/// A field in the constraint set `{K = 0}` of (P2) with `a = b = 0`, built from
/// a smooth bump placed where `f` (or `g` on the boundary) is most negative.
pub fn construct_feasible_p2(mesh: &DiskMesh, ops: &WeightedOperators, prob: &ProblemP2) -> Result<DiskField> {
    if prob.a != 0.0 || prob.b != 0.0 {
        return Err(Error::Domain("construct_feasible_p2 requires a = b = 0".into()));
    }
    ops.check_field(&prob.f)?;
    if prob.f_g_identically_zero(ops) {
        return Err(Error::Infeasible("f and g are both identically 0".into()));
    }
    let integral = ops.integrate_volume(&prob.f, |x| x)? + ops.integrate_boundary(&prob.g, |x| x)?;
    if !(integral > 0.0) {
        return Err(Error::Infeasible(format!("int f + int g = {integral:.6e} must be positive")));
    }
    if prob.f_g_both_nonnegative(ops) {
        return Err(Error::Infeasible("f and g are both >= 0".into()));
    }
    let coeff = prob.exp_coefficients(ops);
    let density: Vec<f64> = (0..ops.n_nodes()).map(|i| ops.volume_mass()[i] + ops.boundary_mass()[i]).collect();
    Ok(zero_sum_bump(mesh, ops.params(), &coeff, &density)?.field())
}

/// Weak-form residual of (P1) on its free rows and the weighted norm
/// `sqrt(sum R_i^2 / M_i)` (a discrete `L^2` norm of the strong residual).
pub fn residual_p1(ops: &WeightedOperators, field: &DiskField, prob: &ProblemP1) -> Result<(Vec<f64>, f64)> {
    ops.check_field(field)?;
    let kv = ops.stiffness().matvec(&field.values);
    let m = ops.volume_mass();
    let mut res = vec![0.0; ops.n_nodes()];
    let mut norm2 = 0.0;
    for i in 0..ops.n_nodes() {
        if prob.boundary == P1Boundary::Dirichlet && ops.is_boundary(i) {
            continue;
        }
        let e = checked_exp(field.values[i], "P1 residual")?;
        res[i] = kv[i] + m[i] * (prob.gamma - prob.f.values[i] * e);
        norm2 += res[i] * res[i] / m[i];
    }
    Ok((res, norm2.sqrt()))
}

/// Weak-form residual of (P2) on all rows, with norm `sqrt(sum R_i^2 / (M_i + B_i))`.
pub fn residual_p2(ops: &WeightedOperators, field: &DiskField, prob: &ProblemP2) -> Result<(Vec<f64>, f64)> {
    ops.check_field(field)?;
    let kv = ops.stiffness().matvec(&field.values);
    let (m, bm) = (ops.volume_mass(), ops.boundary_mass());
    let mut res = vec![0.0; ops.n_nodes()];
    let mut norm2 = 0.0;
    for i in 0..ops.n_nodes() {
        let e = checked_exp(field.values[i], "P2 residual")?;
        res[i] = kv[i] + m[i] * (prob.a + prob.f.values[i] * e);
        let mut d = m[i];
        if ops.is_boundary(i) {
            res[i] += bm[i] * (prob.b + prob.g.values[i] * e);
            d += bm[i];
        }
        norm2 += res[i] * res[i] / d;
    }
    Ok((res, norm2.sqrt()))
}

/// Boundary values of a Dirichlet field must vanish to this tolerance.
pub const DIRICHLET_TOL: f64 = 1e-10;

pub fn vanishes_on_boundary(ops: &WeightedOperators, field: &DiskField) -> bool {
    ops.boundary_nodes().iter().all(|&i| field.values[i].abs() <= DIRICHLET_TOL)
}
