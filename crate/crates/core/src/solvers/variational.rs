//! Constrained minimization by preconditioned (Sobolev) gradient descent.
//!
//! Both problems reduce to minimizing `J(v) = 1/2 v'Kv + l'v` over
//! `{ S(v) = sum_i c_i e^{v_i} = T }`. When `T != 0` a uniform shift restores
//! the constraint exactly. When `T = 0` the problem is shift invariant; the
//! gauge is fixed by `int v = 0` and `S = 0` is restored by a 1D Newton
//! along the preconditioned constraint gradient.

use crate::error::{Error, Result};
use crate::functionals::{
    constraint_a_p1, constraint_k, functional_i_p1, functional_i_p2, residual_p1, residual_p2, zero_sum_bump,
    P1Boundary, ProblemP1, ProblemP2,
};
use crate::linalg::{dot, SparseLu};
use crate::mesh::DiskMesh;
use crate::operators::{DiskField, WeightedOperators};

use super::newton::{newton, ExpSystem};
use super::{p1_window_warning, p2_window_warning, Method, SolveReport, SolverOptions, TraceEntry};

struct Constrained<'a> {
    ops: &'a WeightedOperators,
    lin: Vec<f64>,
    coeff: Vec<f64>,
    target: f64,
    gauge: bool,
    weight: Vec<f64>,
    precond: SparseLu,
}

struct State {
    v: Vec<f64>,
    j: f64,
    /// `r = grad J - sum theta_k grad C_k`
    r: Vec<f64>,
    rnorm: f64,
    /// Multiplier of the exponential constraint.
    theta: f64,
}

impl<'a> Constrained<'a> {
    fn new(
        ops: &'a WeightedOperators,
        lin: Vec<f64>,
        coeff: Vec<f64>,
        target: f64,
        gauge: bool,
        weight: Vec<f64>,
    ) -> Result<Self> {
        let precond = SparseLu::factor_full(ops.stiffness(), ops.volume_mass())?;
        Ok(Self { ops, lin, coeff, target, gauge, weight, precond })
    }

    fn exp_sum(&self, v: &[f64]) -> f64 {
        self.coeff.iter().zip(v).map(|(c, x)| if *c == 0.0 { 0.0 } else { c * x.exp() }).sum()
    }

    fn objective(&self, v: &[f64]) -> f64 {
        0.5 * self.ops.stiffness().quadratic_form(v) + dot(&self.lin, v)
    }

    /// `J(w) - J(v)` evaluated without cancellation.
    fn objective_change(&self, v: &[f64], w: &[f64]) -> f64 {
        let sum: Vec<f64> = v.iter().zip(w).map(|(a, b)| a + b).collect();
        let ks = self.ops.stiffness().matvec(&sum);
        (0..v.len()).map(|i| (w[i] - v[i]) * (0.5 * ks[i] + self.lin[i])).sum()
    }

    fn volume_mean(&self, v: &[f64]) -> f64 {
        dot(self.ops.volume_mass(), v) / self.ops.discrete_volume()
    }

    /// Moves `v` back onto the constraint set; `None` if that is not possible
    /// from here.
    fn restore(&self, mut v: Vec<f64>) -> Result<Option<Vec<f64>>> {
        if v.iter().any(|x| !x.is_finite() || *x > crate::operators::EXP_ARG_CAP) {
            return Ok(None);
        }
        if !self.gauge {
            let s = self.exp_sum(&v);
            if !(s.is_finite() && s * self.target > 0.0) {
                return Ok(None);
            }
            let shift = (self.target / s).ln();
            v.iter_mut().for_each(|x| *x += shift);
            return Ok(Some(v));
        }
        let n1: Vec<f64> = self.coeff.iter().zip(&v).map(|(c, x)| c * x.exp()).collect();
        let u = self.precond.solve(&n1)?;
        let scale: f64 = self.coeff.iter().zip(&v).map(|(c, x)| c.abs() * x.exp()).sum();
        let phi = |sigma: f64| -> (f64, f64) {
            let mut val = 0.0;
            let mut der = 0.0;
            for i in 0..v.len() {
                if self.coeff[i] != 0.0 {
                    let e = self.coeff[i] * (v[i] + sigma * u[i]).exp();
                    val += e;
                    der += e * u[i];
                }
            }
            (val, der)
        };
        let mut sigma = 0.0;
        let (mut val, mut der) = phi(sigma);
        let mut ok = false;
        for _ in 0..100 {
            if val.abs() <= 1e-14 * scale {
                ok = true;
                break;
            }
            if !(der.is_finite() && der != 0.0) {
                break;
            }
            let mut step = -val / der;
            // halve until |phi| decreases
            let mut accepted = false;
            for _ in 0..60 {
                let (nv, nd) = phi(sigma + step);
                if nv.is_finite() && nv.abs() < val.abs() {
                    sigma += step;
                    val = nv;
                    der = nd;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if !ok {
            return Ok(None);
        }
        for i in 0..v.len() {
            v[i] += sigma * u[i];
        }
        let mean = self.volume_mean(&v);
        v.iter_mut().for_each(|x| *x -= mean);
        Ok(Some(v))
    }

    fn state(&self, v: Vec<f64>) -> Result<State> {
        let kv = self.ops.stiffness().matvec(&v);
        let g: Vec<f64> = kv.iter().zip(&self.lin).map(|(a, b)| a + b).collect();
        let n1: Vec<f64> = self.coeff.iter().zip(&v).map(|(c, x)| c * x.exp()).collect();
        let pg = self.precond.solve(&g)?;
        let pn1 = self.precond.solve(&n1)?;
        let (theta, r) = if self.gauge {
            let n0 = self.ops.volume_mass();
            let pn0 = self.precond.solve(n0)?;
            // 2x2 Gram system in the preconditioner metric
            let (a11, a10, a00) = (dot(&n1, &pn1), dot(&n1, &pn0), dot(n0, &pn0));
            let (b1, b0) = (dot(&n1, &pg), dot(n0, &pg));
            let det = a11 * a00 - a10 * a10;
            if !(det.abs() > 0.0) {
                return Err(Error::SingularJacobian("degenerate constraint gradients".into()));
            }
            let t1 = (b1 * a00 - b0 * a10) / det;
            let t0 = (a11 * b0 - a10 * b1) / det;
            (t1, (0..v.len()).map(|i| g[i] - t1 * n1[i] - t0 * n0[i]).collect::<Vec<_>>())
        } else {
            let t1 = dot(&n1, &pg) / dot(&n1, &pn1);
            (t1, (0..v.len()).map(|i| g[i] - t1 * n1[i]).collect::<Vec<_>>())
        };
        let rnorm = r.iter().zip(&self.weight).map(|(x, w)| x * x / w).sum::<f64>().sqrt();
        let j = self.objective(&v);
        Ok(State { v, j, r, rnorm, theta })
    }

    /// Descent until the residual drops to `stop_at` (or below the absolute
    /// tolerance relative to the first residual when `stop_at` is `None`).
    fn minimize(
        &self,
        init: Vec<f64>,
        opts: &SolverOptions,
        stop_ratio: f64,
    ) -> Result<(State, usize, Vec<TraceEntry>)> {
        let v = self
            .restore(init)?
            .ok_or_else(|| Error::Infeasible("could not project the starting point onto the constraint set".into()))?;
        let st = self.state(v)?;
        let r0 = st.rnorm;
        let trace = vec![TraceEntry { residual: r0, step: 0.0 }];
        self.descend(st, 0, trace, opts.target(r0).max(stop_ratio * r0), opts)
    }

    fn descend(
        &self,
        mut st: State,
        mut iter: usize,
        mut trace: Vec<TraceEntry>,
        target: f64,
        opts: &SolverOptions,
    ) -> Result<(State, usize, Vec<TraceEntry>)> {
        let mut tau: f64 = 1.0;
        while st.rnorm > target {
            if iter >= opts.max_descent_iter {
                return Err(Error::NonConvergence { iterations: iter, residual: st.rnorm });
            }
            let dir = self.precond.solve(&st.r)?;
            let slope = dot(&st.r, &dir);
            let mut next = None;
            while tau >= 1e-14 {
                let trial: Vec<f64> = st.v.iter().zip(&dir).map(|(x, d)| x - tau * d).collect();
                if let Some(w) = self.restore(trial)? {
                    let dj = self.objective_change(&st.v, &w);
                    let decrease = 1e-4 * tau * slope;
                    if dj <= -decrease && decrease > 1e-15 * (1.0 + st.j.abs()) {
                        next = Some(self.state(w)?);
                        break;
                    }
                    // below the resolution of J fall back to the residual
                    if dj.abs() <= 1e-13 * (1.0 + st.j.abs()) {
                        let cand = self.state(w)?;
                        if cand.rnorm < st.rnorm {
                            next = Some(cand);
                            break;
                        }
                    }
                }
                tau *= 0.5;
            }
            let Some(cand) = next else {
                return Err(Error::NonConvergence { iterations: iter, residual: st.rnorm });
            };
            st = cand;
            iter += 1;
            trace.push(TraceEntry { residual: st.rnorm, step: tau });
            tau = (2.0 * tau).min(16.0);
        }
        Ok((st, iter, trace))
    }

    /// Descent to a moderate residual, then Newton on the Euler equation in
    /// its scaled form `K w + l + sign * c e^w = 0`, where `w` is the
    /// minimizer shifted by the logarithm of the recovered multiplier. Falls back
    /// to plain descent if the Newton refinement fails.
    fn solve(&self, init: Vec<f64>, opts: &SolverOptions, sign: f64) -> Result<Outcome> {
        let (st, iter, trace) = self.minimize(init, opts, POLISH_RATIO)?;
        let r0 = trace[0].residual;
        let scale = sign * st.theta;
        if st.rnorm > opts.target(r0) && scale < 0.0 {
            let shift = if self.gauge { (-scale).ln() } else { 0.0 };
            let mut w: Vec<f64> = st.v.iter().map(|x| x + shift).collect();
            let sys = ExpSystem::natural(
                self.ops,
                self.lin.clone(),
                self.coeff.iter().map(|c| sign * c).collect(),
                self.weight.clone(),
            );
            let polish = *opts;
            if let Ok((newton_iter, newton_trace)) = newton(&sys, &mut w, &polish) {
                let mut trace = trace;
                trace.extend(newton_trace.into_iter().skip(1));
                // back to the constrained normalization
                let mean = if self.gauge { self.volume_mean(&w) } else { 0.0 };
                let v: Vec<f64> = w.iter().map(|x| x - mean).collect();
                let st = self.state(v)?;
                return Ok(Outcome { st, iterations: iter + newton_iter, trace });
            }
        }
        let (st, iterations, trace) = self.descend(st, iter, trace, opts.target(r0), opts)?;
        Ok(Outcome { st, iterations, trace })
    }
}

struct Outcome {
    st: State,
    iterations: usize,
    trace: Vec<TraceEntry>,
}

/// Residual reduction after which the descent hands over to Newton.
const POLISH_RATIO: f64 = 1e-4;

/// Starting point with `T * S(v) > 0` (or `S(v) = 0` in the gauge case), built
/// from a bump where the coefficients have the required sign.
fn starting_point(
    mesh: &DiskMesh,
    ops: &WeightedOperators,
    coeff: &[f64],
    target: f64,
    gauge: bool,
) -> Result<Vec<f64>> {
    let n = ops.n_nodes();
    let total: f64 = coeff.iter().sum();
    let density: Vec<f64> = (0..n).map(|i| ops.volume_mass()[i] + ops.boundary_mass()[i]).collect();
    if gauge {
        if total == 0.0 {
            return Ok(vec![0.0; n]);
        }
        let q: Vec<f64> = coeff.iter().map(|c| total.signum() * c).collect();
        return Ok(zero_sum_bump(mesh, ops.params(), &q, &density)?.field().values);
    }
    if total * target > 0.0 {
        return Ok(vec![0.0; n]);
    }
    let q: Vec<f64> = coeff.iter().map(|c| -target.signum() * c).collect();
    let mut bump = zero_sum_bump(mesh, ops.params(), &q, &density)?;
    bump.amplitude += 1.0;
    Ok(bump.field().values)
}

/// Constrained minimization of `int |grad v|^2 + 2 gamma int v` over
/// `{ int f e^v = gamma Vol(T) }` (or, for `gamma = 0`, over
/// `{ int v = 0, int f e^v = 0 }` followed by the shift `v + ln lambda`).
/// The minimization runs in the natural (Neumann) class regardless of
/// `prob.boundary`.
pub fn solve_p1_variational(
    mesh: &DiskMesh,
    ops: &WeightedOperators,
    prob: &ProblemP1,
    opts: &SolverOptions,
) -> Result<SolveReport> {
    ops.check_field(&prob.f)?;
    let f = &prob.f.values;
    let gamma = prob.gamma;
    let m = ops.volume_mass();
    if gamma > 0.0 && !f.iter().any(|&x| x > 0.0) {
        return Err(Error::Infeasible("gamma > 0 needs f > 0 somewhere".into()));
    }
    if gamma < 0.0 && !f.iter().any(|&x| x < 0.0) {
        return Err(Error::Infeasible("gamma < 0 needs f < 0 somewhere".into()));
    }
    if gamma == 0.0 {
        let int_f: f64 = dot(m, f);
        if !(int_f < 0.0 && f.iter().any(|&x| x > 0.0)) {
            return Err(Error::Infeasible("gamma = 0 needs a sign-changing f with int f < 0".into()));
        }
    }
    let gauge = gamma == 0.0;
    let coeff: Vec<f64> = m.iter().zip(f).map(|(a, b)| a * b).collect();
    let target = gamma * ops.discrete_volume();
    let sys = Constrained::new(ops, m.iter().map(|x| gamma * x).collect(), coeff.clone(), target, gauge, m.to_vec())?;
    let init = starting_point(mesh, ops, &coeff, target, gauge)?;
    let Outcome { st, iterations, trace } = sys.solve(init, opts, -1.0)?;

    let natural = ProblemP1 { boundary: P1Boundary::Natural, ..prob.clone() };
    let mut warnings: Vec<String> = p1_window_warning(ops.params(), prob).into_iter().collect();
    if prob.boundary == P1Boundary::Dirichlet {
        warnings.push("variational solve uses the natural boundary condition".into());
    }
    let mut values = st.v;
    if gauge {
        let lambda = st.theta;
        if !(lambda > 0.0) {
            return Err(Error::Infeasible(format!("recovered lambda = {lambda:.6e} is not positive")));
        }
        let shift = lambda.ln();
        values.iter_mut().for_each(|x| *x += shift);
    }
    let field = DiskField { values };
    Ok(SolveReport {
        method: Method::Variational,
        residual_norm: residual_p1(ops, &field, &natural)?.1,
        constraint_value: constraint_a_p1(ops, &field, prob)?,
        functional_value: functional_i_p1(ops, &field, prob)?,
        field,
        converged: true,
        iterations,
        multiplier: Some(st.theta),
        multiplier_check: None,
        trace,
        warnings,
    })
}

/// Constrained minimization of `1/2 int |grad v|^2 + a int v + b int_dT v` over
/// `{ K(v) = 0 }`. For `R = 0` the minimizer `v` (normalized to mean zero)
/// solves the problem with coefficients scaled by `kappa`, and the returned
/// field is `v + ln kappa`.
pub fn solve_p2_variational(
    mesh: &DiskMesh,
    ops: &WeightedOperators,
    prob: &ProblemP2,
    opts: &SolverOptions,
) -> Result<SolveReport> {
    ops.check_field(&prob.f)?;
    let coeff = prob.exp_coefficients(ops);
    if coeff.iter().all(|&c| c == 0.0) {
        return Err(Error::Infeasible("f and g are both identically 0".into()));
    }
    let (m, bm) = (ops.volume_mass(), ops.boundary_mass());
    let n = ops.n_nodes();
    let bnd = |i: usize| if ops.is_boundary(i) { bm[i] } else { 0.0 };
    let lin: Vec<f64> = (0..n).map(|i| prob.a * m[i] + prob.b * bnd(i)).collect();
    let r_discrete = prob.a * ops.discrete_volume() + prob.b * ops.discrete_boundary_area();
    let r_scale = prob.a.abs() * ops.discrete_volume() + prob.b.abs() * ops.discrete_boundary_area();
    let gauge = r_discrete.abs() <= 1e-13 * r_scale;
    let target = if gauge { 0.0 } else { -r_discrete };
    if gauge {
        let int_fg: f64 = coeff.iter().sum();
        if coeff.iter().all(|&c| c >= 0.0) || coeff.iter().all(|&c| c <= 0.0) {
            return Err(Error::Infeasible("R = 0 needs f, g with both signs".into()));
        }
        if int_fg == 0.0 {
            return Err(Error::Infeasible("R = 0 needs int f + int g != 0".into()));
        }
    } else if !coeff.iter().any(|&c| c * target > 0.0) {
        return Err(Error::Infeasible("no node where f or g has the sign required by R".into()));
    }
    let weight: Vec<f64> = (0..n).map(|i| m[i] + bnd(i)).collect();
    let sys = Constrained::new(ops, lin, coeff.clone(), target, gauge, weight)?;
    let init = starting_point(mesh, ops, &coeff, target, gauge)?;
    let Outcome { st, iterations, trace } = sys.solve(init, opts, 1.0)?;

    let multiplier = -st.theta;
    let mut values = st.v;
    let mut multiplier_check = None;
    if gauge {
        if !(multiplier > 0.0) {
            return Err(Error::Infeasible(format!("recovered kappa = {multiplier:.6e} is not positive")));
        }
        let raw = DiskField { values: values.clone() };
        let id = crate::functionals::exp_minus_identity(ops, &raw, prob)?;
        multiplier_check = Some((id.gradient_term - id.a_term - id.b_term) / (id.f_term + id.g_term));
        let shift = multiplier.ln();
        values.iter_mut().for_each(|x| *x += shift);
    }
    let field = DiskField { values };
    Ok(SolveReport {
        method: Method::Variational,
        residual_norm: residual_p2(ops, &field, prob)?.1,
        constraint_value: constraint_k(ops, &field, prob)?,
        functional_value: functional_i_p2(ops, &field, prob)?,
        field,
        converged: true,
        iterations,
        multiplier: Some(multiplier),
        multiplier_check,
        trace,
        warnings: p2_window_warning(ops.params(), prob).into_iter().collect(),
    })
}
