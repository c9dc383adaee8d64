//! Run configuration: a TOML file whose sections mirror [`RunConfig`]. Every
//! field has a default, so an empty file (or no file) is a valid config.
//!
//! ```toml
//! [geometry]
//! l = 2.0
//! r = 1.0
//!
//! [mesh]
//! n_rings = 32
//!
//! [problem]            # coefficients are expressions in t and s
//! gamma = 1.0          # (P1)
//! a = -1.0             # (P2)
//! b = -1.0
//! f = "1"
//! g = "1 + 0.5*s^2"
//! boundary = "dirichlet"   # or "natural" (P1)
//! init = "0"               # Newton starting field
//!
//! [solver]
//! method = "newton"        # "variational", "monotone"
//! tol_abs = 1e-10
//!
//! [scan]
//! path = "closed-form"     # "mesh", "both"
//! alphas = [1e-2, 1e-3]
//! delta_fraction = 0.2
//! mu = "dirichlet"         # "full", or a number
//!
//! [corollary]
//! rhos = [0.5, 0.1]
//! alpha_exps = [12.566370614359172, 25.132741228718345]
//!
//! [scan_gamma]
//! gammas = [-2.0, -1.0, 0.5]
//!
//! [verify]
//! n_rings = [8, 16, 32, 64]
//! n_fields = 20
//! mc_samples = 1000000
//! seed = 2024
//!
//! [output]
//! dir = "out"
//! ```

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use torusmt_core::functionals::P1Boundary;
use torusmt_core::solvers::{Method, SolverOptions};
use torusmt_core::{DiskField, DiskMesh, TorusParams};

use crate::error::CliError;
use crate::expr::Expr;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub mesh: MeshConfig,
    pub problem: ProblemConfig,
    pub solver: SolverConfig,
    pub scan: ScanConfig,
    pub corollary: CorollaryConfig,
    pub scan_gamma: GammaScanConfig,
    pub verify: VerifyConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            geometry: GeometryConfig { l: 2.0, r: 1.0 },
            mesh: MeshConfig { n_rings: 32 },
            problem: ProblemConfig::default(),
            solver: SolverConfig::default(),
            scan: ScanConfig::default(),
            corollary: CorollaryConfig::default(),
            scan_gamma: GammaScanConfig::default(),
            verify: VerifyConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub l: f64,
    pub r: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self { l: 2.0, r: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub n_rings: usize,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self { n_rings: 32 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryName {
    Dirichlet,
    Natural,
}

impl From<BoundaryName> for P1Boundary {
    fn from(b: BoundaryName) -> Self {
        match b {
            BoundaryName::Dirichlet => P1Boundary::Dirichlet,
            BoundaryName::Natural => P1Boundary::Natural,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub gamma: f64,
    pub a: f64,
    pub b: f64,
    pub f: String,
    pub g: String,
    pub boundary: BoundaryName,
    pub init: String,
    /// Optional sub- and supersolution expressions for the monotone method;
    /// constant brackets are searched when absent.
    pub sub: Option<String>,
    pub sup: Option<String>,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            a: -1.0,
            b: -1.0,
            f: "1".into(),
            g: "1 + 0.5*s^2".into(),
            boundary: BoundaryName::Dirichlet,
            init: "0".into(),
            sub: None,
            sup: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    Newton,
    Variational,
    Monotone,
}

impl From<MethodName> for Method {
    fn from(m: MethodName) -> Self {
        match m {
            MethodName::Newton => Method::Newton,
            MethodName::Variational => Method::Variational,
            MethodName::Monotone => Method::Monotone,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub method: MethodName,
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub max_newton_iter: usize,
    pub max_descent_iter: usize,
    pub max_monotone_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let o = SolverOptions::default();
        Self {
            method: MethodName::Newton,
            tol_abs: o.tol_abs,
            tol_rel: o.tol_rel,
            max_newton_iter: o.max_newton_iter,
            max_descent_iter: o.max_descent_iter,
            max_monotone_iter: o.max_monotone_iter,
        }
    }
}

impl SolverConfig {
    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            tol_abs: self.tol_abs,
            tol_rel: self.tol_rel,
            max_newton_iter: self.max_newton_iter,
            max_descent_iter: self.max_descent_iter,
            max_monotone_iter: self.max_monotone_iter,
            ..SolverOptions::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScanPath {
    ClosedForm,
    Mesh,
    Both,
}

/// `"dirichlet"`, `"full"` or an explicit number.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MuSetting {
    Named(String),
    Value(f64),
}

impl MuSetting {
    pub fn resolve(&self, p: &TorusParams) -> Result<f64, CliError> {
        let lr = p.l() - p.r();
        match self {
            MuSetting::Value(v) if *v > 0.0 && v.is_finite() => Ok(*v),
            MuSetting::Value(v) => Err(CliError::Config(format!("scan.mu: must be positive, got {v}"))),
            MuSetting::Named(n) if n == "dirichlet" => Ok(1.0 / (32.0 * PI * PI * lr)),
            MuSetting::Named(n) if n == "full" => Ok(1.0 / (16.0 * PI * PI * lr)),
            MuSetting::Named(n) => {
                Err(CliError::Config(format!("scan.mu: expected \"dirichlet\", \"full\" or a number, got \"{n}\"")))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub path: ScanPath,
    pub alphas: Vec<f64>,
    /// Tube radius of the closed-form family as a fraction of `l - r`.
    pub delta_fraction: f64,
    /// Tube radius of the mesh family around the core circle; `min(r, l/2)` when absent.
    pub mesh_delta: Option<f64>,
    pub mu: MuSetting,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            path: ScanPath::ClosedForm,
            alphas: (2..=20).map(|k| 10f64.powi(-k)).collect(),
            delta_fraction: 0.2,
            mesh_delta: None,
            mu: MuSetting::Named("dirichlet".into()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorollaryConfig {
    pub rhos: Vec<f64>,
    pub alpha_exps: Vec<f64>,
}

impl Default for CorollaryConfig {
    fn default() -> Self {
        Self { rhos: vec![0.5, 0.3, 0.2, 0.1, 0.05, 0.03], alpha_exps: vec![4.0 * PI, 8.0 * PI] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GammaScanConfig {
    pub gammas: Vec<f64>,
}

impl Default for GammaScanConfig {
    fn default() -> Self {
        Self { gammas: vec![-2.0, -1.0, -0.5, 0.5, 1.0, 2.0, 3.0] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub n_rings: Vec<usize>,
    pub n_fields: usize,
    pub mc_samples: usize,
    pub seed: u64,
    /// Fault injection: relative perturbation of the metric weight.
    pub perturb_weight: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { n_rings: vec![8, 16, 32, 64], n_fields: 20, mc_samples: 1_000_000, seed: 2024, perturb_weight: 0.0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<String>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Checks everything that does not need a mesh.
    pub fn validate(&self) -> Result<(), CliError> {
        let g = &self.geometry;
        if !(g.l.is_finite() && g.r.is_finite()) {
            return Err(CliError::Config("geometry: l and r must be finite".into()));
        }
        if g.r <= 0.0 {
            return Err(CliError::Config(format!("geometry.r: must be positive, got {}", g.r)));
        }
        if g.l <= g.r {
            return Err(CliError::Config(format!("geometry: l must exceed r (l = {}, r = {})", g.l, g.r)));
        }
        if self.mesh.n_rings < 2 {
            return Err(CliError::Config(format!("mesh.n_rings: must be at least 2, got {}", self.mesh.n_rings)));
        }
        for (name, src) in self.expressions() {
            Expr::parse(src).map_err(|e| CliError::Config(format!("{name}: {e}")))?;
        }
        let s = &self.solver;
        if !(s.tol_abs >= 0.0 && s.tol_rel >= 0.0) {
            return Err(CliError::Config("solver: tolerances must be nonnegative".into()));
        }
        if self.scan.alphas.is_empty() || self.scan.alphas.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(CliError::Config("scan.alphas: must be a nonempty list of positive numbers".into()));
        }
        if self.scan.alphas.windows(2).any(|w| w[1] >= w[0]) {
            return Err(CliError::Config("scan.alphas: must be strictly decreasing".into()));
        }
        if !(self.scan.delta_fraction > 0.0 && self.scan.delta_fraction <= 0.5) {
            return Err(CliError::Config("scan.delta_fraction: must lie in (0, 0.5]".into()));
        }
        if self.corollary.rhos.iter().any(|r| !(*r > 0.0 && *r < 1.0)) {
            return Err(CliError::Config("corollary.rhos: values must lie in (0, 1)".into()));
        }
        if self.verify.n_rings.len() < 2 || self.verify.n_rings.iter().any(|&n| n < 2) {
            return Err(CliError::Config("verify.n_rings: need at least two meshes with n_rings >= 2".into()));
        }
        if self.verify.n_fields == 0 || self.verify.mc_samples < 2 {
            return Err(CliError::Config("verify: n_fields and mc_samples must be positive".into()));
        }
        Ok(())
    }

    fn expressions(&self) -> Vec<(&'static str, &str)> {
        let p = &self.problem;
        let mut out = vec![("problem.f", p.f.as_str()), ("problem.g", p.g.as_str()), ("problem.init", p.init.as_str())];
        if let Some(s) = &p.sub {
            out.push(("problem.sub", s));
        }
        if let Some(s) = &p.sup {
            out.push(("problem.sup", s));
        }
        out
    }

    pub fn params(&self) -> Result<TorusParams, CliError> {
        TorusParams::new(self.geometry.l, self.geometry.r).map_err(|e| CliError::Config(format!("geometry: {e}")))
    }
}

/// Evaluates an expression at every mesh node, rejecting non-finite values.
pub fn nodal_field(mesh: &DiskMesh, name: &str, src: &str) -> Result<DiskField, CliError> {
    let e = Expr::parse(src).map_err(|e| CliError::Config(format!("{name}: {e}")))?;
    let values: Vec<f64> = mesh.nodes().iter().map(|&[t, s]| e.eval(t, s)).collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        let [t, s] = mesh.nodes()[i];
        return Err(CliError::Config(format!("{name}: not finite at node {i} (t = {t}, s = {s})")));
    }
    Ok(DiskField { values })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c, RunConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn geometry_errors() {
        let c = RunConfig::from_toml("[geometry]\nl = 1.0\nr = 2.0\n").unwrap();
        let e = c.validate().unwrap_err();
        assert!(e.to_string().contains("l must exceed r"));
        assert_eq!(e.exit_code(), 3);
    }

    #[test]
    fn unknown_fields_report_location() {
        let e = RunConfig::from_toml("[mesh]\nn_ring = 3\n").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("n_ring") && msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn mu_settings() {
        let p = TorusParams::new(2.0, 1.0).unwrap();
        let c = RunConfig::from_toml("[scan]\nmu = 0.5\n").unwrap();
        assert_eq!(c.scan.mu.resolve(&p).unwrap(), 0.5);
        let c = RunConfig::from_toml("[scan]\nmu = \"full\"\n").unwrap();
        assert!((c.scan.mu.resolve(&p).unwrap() - 1.0 / (16.0 * PI * PI)).abs() < 1e-15);
        let c = RunConfig::from_toml("[scan]\nmu = \"other\"\n").unwrap();
        assert!(c.scan.mu.resolve(&p).is_err());
    }

    #[test]
    fn expressions_are_checked() {
        let c = RunConfig::from_toml("[problem]\nf = \"1 + \"\n").unwrap();
        assert!(c.validate().unwrap_err().to_string().contains("problem.f"));
        let mesh = DiskMesh::build(4).unwrap();
        assert!(nodal_field(&mesh, "problem.f", "ln(t)").is_err());
        assert_eq!(nodal_field(&mesh, "problem.f", "2").unwrap().values[0], 2.0);
    }
}
