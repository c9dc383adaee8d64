use crate::error::{Error, Result};
use crate::functionals::{constraint_k, functional_i_p2, residual_p2, ProblemP2};
use crate::linalg::{norm_inf, SparseLu};
use crate::operators::{checked_exp, DiskField, WeightedOperators};

use super::{p2_window_warning, Method, SolveReport, SolverOptions, TraceEntry};

/// Nodal weak residual `K v + M(a + f e^v) + B(b + g e^v)` and a per-node
/// magnitude used to scale the sign tests.
fn weak_residual(ops: &WeightedOperators, prob: &ProblemP2, v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let k = ops.stiffness();
    let (m, bm) = (ops.volume_mass(), ops.boundary_mass());
    let mut res = Vec::with_capacity(v.len());
    let mut mag = Vec::with_capacity(v.len());
    for i in 0..v.len() {
        let e = checked_exp(v[i], "monotone residual")?;
        let mut r = 0.0;
        let mut s = 0.0;
        for (j, a) in k.row(i) {
            r += a * v[j];
            s += (a * v[j]).abs();
        }
        r += m[i] * (prob.a + prob.f.values[i] * e);
        s += m[i] * (prob.a.abs() + (prob.f.values[i] * e).abs());
        if ops.is_boundary(i) {
            r += bm[i] * (prob.b + prob.g.values[i] * e);
            s += bm[i] * (prob.b.abs() + (prob.g.values[i] * e).abs());
        }
        res.push(r);
        mag.push(s);
    }
    Ok((res, mag))
}

const SIGN_TOL: f64 = 1e-10;

/// Monotone iteration from `sub` toward `sup`. Each step solves
/// `(K + s M + s_b B) v_{k+1} = s M v_k + s_b B v_k - M(a + f e^{v_k}) - B(b + g e^{v_k})`
/// with `s >= max|f| e^{max sup} + 1` and `s_b` likewise on the boundary.
pub fn solve_p2_monotone(
    ops: &WeightedOperators,
    prob: &ProblemP2,
    sub: &DiskField,
    sup: &DiskField,
    opts: &SolverOptions,
) -> Result<SolveReport> {
    solve_p2_monotone_observed(ops, prob, sub, sup, opts, |_, _| {})
}

/// [`solve_p2_monotone`] that hands every iterate (starting with `sub` as
/// iterate 0) to `observe`.
pub fn solve_p2_monotone_observed(
    ops: &WeightedOperators,
    prob: &ProblemP2,
    sub: &DiskField,
    sup: &DiskField,
    opts: &SolverOptions,
    mut observe: impl FnMut(usize, &[f64]),
) -> Result<SolveReport> {
    ops.check_field(sub)?;
    ops.check_field(sup)?;
    ops.check_field(&prob.f)?;
    let n = ops.n_nodes();
    if let Some(i) = (0..n).find(|&i| sub.values[i] > sup.values[i]) {
        return Err(Error::OrderingViolation(format!(
            "sub > super at node {i}: {} > {}",
            sub.values[i], sup.values[i]
        )));
    }
    let (rs, ms) = weak_residual(ops, prob, &sub.values)?;
    if let Some(i) = (0..n).find(|&i| rs[i] > SIGN_TOL * ms[i] + 1e-300) {
        return Err(Error::OrderingViolation(format!(
            "lower function violates the subsolution inequality at node {i}"
        )));
    }
    let (rp, mp) = weak_residual(ops, prob, &sup.values)?;
    if let Some(i) = (0..n).find(|&i| rp[i] < -SIGN_TOL * mp[i] - 1e-300) {
        return Err(Error::OrderingViolation(format!(
            "upper function violates the supersolution inequality at node {i}"
        )));
    }

    let emax = checked_exp(sup.max(), "monotone shift")?;
    let fmax = prob.f.values.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let gmax = ops.boundary_nodes().iter().fold(0.0f64, |a, &i| a.max(prob.g.values[i].abs()));
    let sigma = fmax * emax + 1.0;
    let sigma_b = gmax * emax + 1.0;
    let (m, bm) = (ops.volume_mass(), ops.boundary_mass());
    let shift: Vec<f64> =
        (0..n).map(|i| sigma * m[i] + if ops.is_boundary(i) { sigma_b * bm[i] } else { 0.0 }).collect();
    let lu = SparseLu::factor_full(ops.stiffness(), &shift)?;

    let order_tol = |x: f64| 1e-10 * (1.0 + x.abs());
    let mut v = sub.values.clone();
    let mut trace = Vec::new();
    let mut iterations = 0;
    observe(0, &v);
    loop {
        if iterations >= opts.max_monotone_iter {
            let r = residual_p2(ops, &DiskField { values: v }, prob)?.1;
            return Err(Error::NonConvergence { iterations, residual: r });
        }
        let rhs: Vec<f64> = (0..n)
            .map(|i| {
                let e = v[i].exp();
                let mut x = shift[i] * v[i] - m[i] * (prob.a + prob.f.values[i] * e);
                if ops.is_boundary(i) {
                    x -= bm[i] * (prob.b + prob.g.values[i] * e);
                }
                x
            })
            .collect();
        let next = lu.solve(&rhs)?;
        observe(iterations + 1, &next);
        for i in 0..n {
            if next[i] < v[i] - order_tol(v[i]) || next[i] > sup.values[i] + order_tol(sup.values[i]) {
                return Err(Error::OrderingViolation(format!(
                    "iterate {} leaves [v_k, super] at node {i}: {} not in [{}, {}]",
                    iterations + 1,
                    next[i],
                    v[i],
                    sup.values[i]
                )));
            }
        }
        let diff: Vec<f64> = next.iter().zip(&v).map(|(a, b)| a - b).collect();
        let change = norm_inf(&diff);
        v = next;
        iterations += 1;
        trace.push(TraceEntry { residual: change, step: 1.0 });
        if change <= opts.tol_abs {
            break;
        }
    }
    let field = DiskField { values: v };
    Ok(SolveReport {
        method: Method::Monotone,
        residual_norm: residual_p2(ops, &field, prob)?.1,
        constraint_value: constraint_k(ops, &field, prob)?,
        functional_value: functional_i_p2(ops, &field, prob)?,
        field,
        converged: true,
        iterations,
        multiplier: None,
        multiplier_check: None,
        trace,
        warnings: p2_window_warning(ops.params(), prob).into_iter().collect(),
    })
}

/// Feasible range `[lo, hi]` of `x = e^c > 0` for `alpha + beta_i x <= 0`
/// (or `>= 0` when `upper`) over all coefficients `beta_i`.
fn exp_range(alpha: f64, betas: impl Iterator<Item = f64>, upper: bool) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let sgn = if upper { -1.0 } else { 1.0 };
    // normalized to  A + B x <= 0
    let a = sgn * alpha;
    for beta in betas {
        let b = sgn * beta;
        if b > 0.0 {
            hi = hi.min(-a / b);
        } else if b < 0.0 {
            lo = lo.max(-a / b);
        } else if a > 0.0 {
            return None;
        }
    }
    (hi > 0.0 && lo <= hi).then_some((lo, hi))
}

/// Constant sub- and supersolutions `c_- <= c_+` for `a, b <= 0`, from the
/// pointwise inequalities `a + f e^c <= 0`, `b + g e^c <= 0` (reversed for the
/// supersolution). Returns the smallest admissible `c_+` and the largest
/// admissible `c_- <= c_+`.
pub fn find_constant_bracket(ops: &WeightedOperators, prob: &ProblemP2) -> Result<(DiskField, DiskField)> {
    ops.check_field(&prob.f)?;
    if prob.a > 0.0 || prob.b > 0.0 || (prob.a == 0.0 && prob.b == 0.0) {
        return Err(Error::Domain("constant brackets need a <= 0, b <= 0, not both 0".into()));
    }
    let f = || prob.f.values.iter().copied();
    let g = || ops.boundary_nodes().iter().map(|&i| prob.g.values[i]);
    let both = |upper: bool| -> Option<(f64, f64)> {
        let (l1, h1) = exp_range(prob.a, f(), upper)?;
        let (l2, h2) = exp_range(prob.b, g(), upper)?;
        let (lo, hi) = (l1.max(l2), h1.min(h2));
        (hi > 0.0 && lo <= hi).then_some((lo, hi))
    };
    let (sup_lo, sup_hi) = both(true).ok_or_else(|| Error::NoBracket("no constant supersolution".into()))?;
    let (sub_lo, sub_hi) = both(false).ok_or_else(|| Error::NoBracket("no constant subsolution".into()))?;
    let x_sup = if sup_lo > 0.0 { sup_lo } else { sup_hi.min(1.0) };
    let x_sub = sub_hi.min(x_sup);
    if x_sub < sub_lo || x_sub <= 0.0 {
        return Err(Error::NoBracket("constant sub- and supersolutions are not ordered".into()));
    }
    let n = ops.n_nodes();
    Ok((DiskField { values: vec![x_sub.ln(); n] }, DiskField { values: vec![x_sup.ln(); n] }))
}
