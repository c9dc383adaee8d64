use crate::error::{Error, Result};
use crate::functionals::{
    constraint_a_p1, constraint_k, functional_i_p1, functional_i_p2, residual_p1, residual_p2, P1Boundary, ProblemP1,
    ProblemP2,
};
use crate::linalg::SparseLu;
use crate::operators::{checked_exp, DiskField, WeightedOperators};

use super::{p1_window_warning, p2_window_warning, Method, SolveReport, SolverOptions, TraceEntry};

/// Nodal system `K v + lin + coeff * e^v = 0` on a subset of free rows.
pub(crate) struct ExpSystem<'a> {
    pub ops: &'a WeightedOperators,
    pub free: Vec<usize>,
    pub keep: Vec<Option<usize>>,
    pub lin: Vec<f64>,
    pub coeff: Vec<f64>,
    /// Row weights of the residual norm.
    pub weight: Vec<f64>,
}

impl<'a> ExpSystem<'a> {
    pub fn p1(ops: &'a WeightedOperators, prob: &ProblemP1) -> Self {
        let m = ops.volume_mass();
        let free: Vec<usize> =
            (0..ops.n_nodes()).filter(|&i| prob.boundary == P1Boundary::Natural || !ops.is_boundary(i)).collect();
        Self::with_free(
            ops,
            free,
            m.iter().map(|mi| prob.gamma * mi).collect(),
            m.iter().zip(&prob.f.values).map(|(mi, fi)| -mi * fi).collect(),
            m.to_vec(),
        )
    }

    pub fn p2(ops: &'a WeightedOperators, prob: &ProblemP2) -> Self {
        let (m, bm) = (ops.volume_mass(), ops.boundary_mass());
        let n = ops.n_nodes();
        let bnd = |i: usize| if ops.is_boundary(i) { bm[i] } else { 0.0 };
        Self::with_free(
            ops,
            (0..n).collect(),
            (0..n).map(|i| m[i] * prob.a + bnd(i) * prob.b).collect(),
            prob.exp_coefficients(ops),
            (0..n).map(|i| m[i] + bnd(i)).collect(),
        )
    }

    /// All rows free.
    pub fn natural(ops: &'a WeightedOperators, lin: Vec<f64>, coeff: Vec<f64>, weight: Vec<f64>) -> Self {
        Self::with_free(ops, (0..ops.n_nodes()).collect(), lin, coeff, weight)
    }

    fn with_free(
        ops: &'a WeightedOperators,
        free: Vec<usize>,
        lin: Vec<f64>,
        coeff: Vec<f64>,
        weight: Vec<f64>,
    ) -> Self {
        let mut keep = vec![None; ops.n_nodes()];
        for (k, &i) in free.iter().enumerate() {
            keep[i] = Some(k);
        }
        Self { ops, free, keep, lin, coeff, weight }
    }

    pub fn residual(&self, v: &[f64]) -> Result<Vec<f64>> {
        let k = self.ops.stiffness();
        self.free
            .iter()
            .map(|&i| {
                let kv: f64 = k.row(i).map(|(j, a)| a * v[j]).sum();
                let e = if self.coeff[i] == 0.0 { 0.0 } else { self.coeff[i] * checked_exp(v[i], "residual")? };
                Ok(kv + self.lin[i] + e)
            })
            .collect()
    }

    pub fn norm(&self, r: &[f64]) -> f64 {
        self.free.iter().zip(r).map(|(&i, x)| x * x / self.weight[i]).sum::<f64>().sqrt()
    }

    /// Norm of the data terms `lin + coeff e^v`, the scale the residual is
    /// compared against.
    fn data_scale(&self, v: &[f64]) -> f64 {
        let terms: Vec<f64> =
            self.free.iter().map(|&i| self.lin[i].abs() + (self.coeff[i] * v[i].exp()).abs()).collect();
        self.norm(&terms)
    }

    fn factor_jacobian(&self, v: &[f64]) -> Result<SparseLu> {
        let diag: Vec<f64> = (0..v.len()).map(|i| self.coeff[i] * v[i].exp()).collect();
        SparseLu::factor(self.ops.stiffness(), &diag, &self.keep, self.free.len())
    }
}

/// Residual relative to the data terms below which a field counts as a
/// solution. Without it, `a = b = 0` problems "converge" by sliding toward
/// `v = -infinity`, where every term is below the absolute tolerance.
const DATA_REL_TOL: f64 = 1e-6;

/// Damped Newton on `sys` from `v` (modified in place on the free rows).
pub(crate) fn newton(sys: &ExpSystem, v: &mut [f64], opts: &SolverOptions) -> Result<(usize, Vec<TraceEntry>)> {
    let mut res = sys.residual(v)?;
    let mut norm = sys.norm(&res);
    let target = opts.target(norm);
    let mut trace = vec![TraceEntry { residual: norm, step: 0.0 }];
    let mut iter = 0;
    let done = |norm: f64, v: &[f64]| {
        let scale = sys.data_scale(v);
        norm <= target && (norm <= DATA_REL_TOL * scale || scale == 0.0)
    };
    while !done(norm, v) {
        if iter >= opts.max_newton_iter {
            return Err(Error::NonConvergence { iterations: iter, residual: norm });
        }
        let lu = sys.factor_jacobian(v)?;
        let rhs: Vec<f64> = res.iter().map(|x| -x).collect();
        let delta = lu.solve(&rhs)?;
        let mut step = 1.0;
        loop {
            let mut trial = v.to_vec();
            for (k, &i) in sys.free.iter().enumerate() {
                trial[i] += step * delta[k];
            }
            if let Ok(r) = sys.residual(&trial) {
                let n = sys.norm(&r);
                if n <= (1.0 - 1e-4 * step) * norm {
                    v.copy_from_slice(&trial);
                    res = r;
                    norm = n;
                    break;
                }
            }
            step *= 0.5;
            if step < opts.min_step {
                return Err(Error::NonConvergence { iterations: iter, residual: norm });
            }
        }
        iter += 1;
        trace.push(TraceEntry { residual: norm, step });
    }
    Ok((iter, trace))
}

/// Newton for (P1). With the Dirichlet condition the boundary values of `init`
/// are replaced by zero.
pub fn solve_p1_newton(
    ops: &WeightedOperators,
    prob: &ProblemP1,
    init: &DiskField,
    opts: &SolverOptions,
) -> Result<SolveReport> {
    ops.check_field(init)?;
    ops.check_field(&prob.f)?;
    let sys = ExpSystem::p1(ops, prob);
    let mut v = init.values.clone();
    if prob.boundary == P1Boundary::Dirichlet {
        for &b in ops.boundary_nodes() {
            v[b] = 0.0;
        }
    }
    let (iterations, trace) = newton(&sys, &mut v, opts)?;
    let field = DiskField { values: v };
    Ok(SolveReport {
        method: Method::Newton,
        residual_norm: residual_p1(ops, &field, prob)?.1,
        constraint_value: constraint_a_p1(ops, &field, prob)?,
        functional_value: functional_i_p1(ops, &field, prob)?,
        field,
        converged: true,
        iterations,
        multiplier: None,
        multiplier_check: None,
        trace,
        warnings: p1_window_warning(ops.params(), prob).into_iter().collect(),
    })
}

pub fn solve_p2_newton(
    ops: &WeightedOperators,
    prob: &ProblemP2,
    init: &DiskField,
    opts: &SolverOptions,
) -> Result<SolveReport> {
    ops.check_field(init)?;
    ops.check_field(&prob.f)?;
    let sys = ExpSystem::p2(ops, prob);
    let mut v = init.values.clone();
    let (iterations, trace) = newton(&sys, &mut v, opts)?;
    let field = DiskField { values: v };
    Ok(SolveReport {
        method: Method::Newton,
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
