use thiserror::Error;

/// Errors raised by geometry, discretization, functionals and solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("point lies on the excluded half-plane of chart {chart}")]
    ChartDomain { chart: u8 },

    #[error("non-finite value while evaluating {0}")]
    Overflow(String),

    #[error("field has {got} values but the mesh has {expected} nodes")]
    FieldLength { expected: usize, got: usize },

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("no root: {0}")]
    NoRoot(String),

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("singular jacobian: {0}")]
    SingularJacobian(String),

    #[error("ordering violation: {0}")]
    OrderingViolation(String),

    #[error("no constant sub/super bracket: {0}")]
    NoBracket(String),

    #[error("mode error: {0}")]
    Mode(String),

    #[error("gradient bound exceeded: |grad v|^2 = {energy:.6e} > {bound:.6e}")]
    GradientBound { energy: f64, bound: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
