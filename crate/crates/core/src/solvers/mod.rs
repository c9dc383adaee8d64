//! Nonlinear solvers for (P1) and (P2): damped Newton on the weak Euler
//! equations, Sobolev-gradient descent on the constrained functionals, and
//! monotone iteration between ordered sub- and supersolutions.

mod monotone;
mod newton;
mod variational;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::functionals::{P1Boundary, ProblemP1, ProblemP2};
use crate::geometry::TorusParams;
use crate::mesh::DiskMesh;
use crate::operators::{DiskField, WeightedOperators};

pub use monotone::{find_constant_bracket, solve_p2_monotone, solve_p2_monotone_observed};
pub use newton::{solve_p1_newton, solve_p2_newton};
pub use variational::{solve_p1_variational, solve_p2_variational};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub max_newton_iter: usize,
    pub max_descent_iter: usize,
    pub max_monotone_iter: usize,
    /// Smallest Armijo step before Newton gives up.
    pub min_step: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol_abs: 1e-10,
            tol_rel: 1e-10,
            max_newton_iter: 50,
            max_descent_iter: 5000,
            max_monotone_iter: 5000,
            min_step: 2f64.powi(-20),
        }
    }
}

impl SolverOptions {
    fn target(&self, initial: f64) -> f64 {
        self.tol_abs + self.tol_rel * initial
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Newton,
    Variational,
    Monotone,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub residual: f64,
    pub step: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub method: Method,
    pub field: DiskField,
    pub converged: bool,
    pub iterations: usize,
    /// Weighted discrete `L^2` norm of the strong-form residual of the returned field.
    pub residual_norm: f64,
    /// `A`-residual for (P1), `K(v)` for (P2).
    pub constraint_value: f64,
    /// `lambda` (P1, gamma = 0), `kappa` (P2, R = 0), `nu` (P2, R != 0), the
    /// constraint multiplier for (P1, gamma != 0); absent for Newton and monotone runs.
    pub multiplier: Option<f64>,
    /// `kappa` recomputed from the integral formula
    /// `(int f + int_dT g)^-1 int |grad v|^2 e^-v` on the unshifted minimizer.
    pub multiplier_check: Option<f64>,
    pub functional_value: f64,
    pub trace: Vec<TraceEntry>,
    pub warnings: Vec<String>,
}

pub(crate) fn p1_window_warning(p: &TorusParams, prob: &ProblemP1) -> Option<String> {
    let w = ProblemP1::gamma_window(p);
    (prob.gamma > 0.0 && prob.gamma >= w)
        .then(|| format!("gamma = {} is outside the existence window 0 < gamma < {w:.6}", prob.gamma))
}

pub(crate) fn p2_window_warning(p: &TorusParams, prob: &ProblemP2) -> Option<String> {
    let w = 4.0 * std::f64::consts::PI * std::f64::consts::PI * (p.l() - p.r());
    let r = prob.r_total();
    (r > 0.0 && r >= w).then(|| format!("R = {r:.6} is outside the existence window 0 < R < {w:.6}"))
}

/// Solves (P1) for each `gamma` with a fixed `f`, one independent run per
/// value (Newton from zero, or the variational solver). Results keep the
/// input order.
#[allow(clippy::too_many_arguments)]
pub fn gamma_sweep(
    mesh: &DiskMesh,
    ops: &WeightedOperators,
    f: &DiskField,
    boundary: P1Boundary,
    gammas: &[f64],
    method: Method,
    opts: &SolverOptions,
    exec: Execution,
) -> Vec<Result<SolveReport>> {
    exec::map(exec, gammas, |&gamma| {
        let prob = ProblemP1::with_boundary(gamma, f.clone(), boundary)?;
        match method {
            Method::Newton => solve_p1_newton(ops, &prob, &DiskField::zeros(mesh), opts),
            Method::Variational => solve_p1_variational(mesh, ops, &prob, opts),
            Method::Monotone => Err(Error::Domain("monotone iteration applies to (P2) only".into())),
        }
    })
}
