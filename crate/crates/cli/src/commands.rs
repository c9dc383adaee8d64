use std::fmt::Write as _;

use serde_json::{json, Value};
use torusmt_core::functionals::{constraint_k_scale, exp_minus_identity, ProblemP1, ProblemP2};
use torusmt_core::lab::{
    blowup_field, corollary_check, gradient_bound, moser_field, mt_scan_closed_form, mt_scan_mesh, ratio_band,
    ratio_limit, rescale_to_gradient_bound, write_scan_csv, BlowupFamily, MtScanRow,
};
use torusmt_core::oracle::{mc_boundary_area, mc_volume};
use torusmt_core::solvers::{
    find_constant_bracket, gamma_sweep, solve_p1_newton, solve_p1_variational, solve_p2_monotone, solve_p2_newton,
    solve_p2_variational, Method, SolveReport,
};
use torusmt_core::verify::{reduction_identities, ReductionConfig, ReductionSummary};
use torusmt_core::{DiskField, DiskMesh, Error as CoreError, Execution, Orbit, TorusParams, WeightedOperators};

use crate::config::{nodal_field, MethodName, RunConfig, ScanPath};
use crate::error::CliError;

/// What a command produced: a JSON result, CSV files and human-readable lines.
pub struct Output {
    pub result: Value,
    pub csv: Vec<(String, String)>,
    pub summary: Vec<String>,
    /// Set when the command ran to the end but its checks did not pass.
    pub failure: Option<CliError>,
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn field_csv(mesh: &DiskMesh, field: &DiskField) -> String {
    let mut out = String::from("node,t,s,v\n");
    for (i, (&[t, s], v)) in mesh.nodes().iter().zip(&field.values).enumerate() {
        let _ = writeln!(out, "{i},{},{},{}", num(t), num(s), num(*v));
    }
    out
}

fn setup(cfg: &RunConfig) -> Result<(TorusParams, DiskMesh, WeightedOperators), CliError> {
    let p = cfg.params()?;
    let mesh = DiskMesh::build(cfg.mesh.n_rings).map_err(|e| CliError::Config(format!("mesh: {e}")))?;
    let ops = WeightedOperators::assemble(&mesh, &p);
    Ok((p, mesh, ops))
}

fn report_json(rep: &SolveReport, ops: &WeightedOperators) -> Value {
    json!({
        "method": rep.method,
        "converged": rep.converged,
        "iterations": rep.iterations,
        "residual_norm": rep.residual_norm,
        "constraint_value": rep.constraint_value,
        "multiplier": rep.multiplier,
        "multiplier_check": rep.multiplier_check,
        "functional_value": rep.functional_value,
        "warnings": rep.warnings,
        "trace": rep.trace,
        "field_min": rep.field.min(),
        "field_max": rep.field.max(),
        "n_nodes": ops.n_nodes(),
        "h": ops.h(),
    })
}

fn solve_summary(name: &str, rep: &SolveReport) -> Vec<String> {
    let mut s = vec![format!(
        "{name}: {:?} converged in {} iterations, residual {:.3e}, field in [{:.6}, {:.6}]",
        rep.method,
        rep.iterations,
        rep.residual_norm,
        rep.field.min(),
        rep.field.max()
    )];
    s.extend(rep.warnings.iter().map(|w| format!("warning: {w}")));
    s
}

pub fn solve_p1(cfg: &RunConfig) -> Result<Output, CliError> {
    let (p, mesh, ops) = setup(cfg)?;
    let pc = &cfg.problem;
    let f = nodal_field(&mesh, "problem.f", &pc.f)?;
    let prob = ProblemP1::with_boundary(pc.gamma, f, pc.boundary.into())
        .map_err(|e| CliError::Config(format!("problem: {e}")))?;
    let opts = cfg.solver.options();
    let rep = match cfg.solver.method {
        MethodName::Newton => {
            let init = nodal_field(&mesh, "problem.init", &pc.init)?;
            solve_p1_newton(&ops, &prob, &init, &opts)?
        }
        MethodName::Variational => solve_p1_variational(&mesh, &ops, &prob, &opts)?,
        MethodName::Monotone => {
            return Err(CliError::Config("solver.method: monotone iteration applies to solve-p2 only".into()))
        }
    };
    let mut result = report_json(&rep, &ops);
    result["gamma"] = json!(pc.gamma);
    result["gamma_window"] = json!(ProblemP1::gamma_window(&p));
    Ok(Output {
        result,
        csv: vec![("solve-p1.csv".into(), field_csv(&mesh, &rep.field))],
        summary: solve_summary("solve-p1", &rep),
        failure: None,
    })
}

pub fn solve_p2(cfg: &RunConfig) -> Result<Output, CliError> {
    let (p, mesh, ops) = setup(cfg)?;
    let pc = &cfg.problem;
    let f = nodal_field(&mesh, "problem.f", &pc.f)?;
    let g = nodal_field(&mesh, "problem.g", &pc.g)?;
    let prob = ProblemP2::new(&p, pc.a, pc.b, f, g).map_err(|e| CliError::Config(format!("problem: {e}")))?;
    let opts = cfg.solver.options();
    let rep = match cfg.solver.method {
        MethodName::Newton => {
            let init = nodal_field(&mesh, "problem.init", &pc.init)?;
            solve_p2_newton(&ops, &prob, &init, &opts)?
        }
        MethodName::Variational => solve_p2_variational(&mesh, &ops, &prob, &opts)?,
        MethodName::Monotone => {
            let (sub, sup) = match (&pc.sub, &pc.sup) {
                (Some(a), Some(b)) => (nodal_field(&mesh, "problem.sub", a)?, nodal_field(&mesh, "problem.sup", b)?),
                (None, None) => find_constant_bracket(&ops, &prob)?,
                _ => return Err(CliError::Config("problem: give both sub and sup, or neither".into())),
            };
            solve_p2_monotone(&ops, &prob, &sub, &sup, &opts)?
        }
    };
    let id = exp_minus_identity(&ops, &rep.field, &prob)?;
    let mut result = report_json(&rep, &ops);
    result["r_total"] = json!(prob.r_total());
    result["constraint_scale"] = json!(constraint_k_scale(&ops, &rep.field, &prob)?);
    result["exp_minus_identity"] = json!({ "residual": id.residual(), "scale": id.scale(), "terms": id });
    Ok(Output {
        result,
        csv: vec![("solve-p2.csv".into(), field_csv(&mesh, &rep.field))],
        summary: solve_summary("solve-p2", &rep),
        failure: None,
    })
}

fn scan_stats(rows: &[MtScanRow]) -> Value {
    let c: Vec<f64> = rows.iter().map(|r| r.c_hat).collect();
    let max = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = c.iter().copied().fold(f64::INFINITY, f64::min);
    json!({ "c_hat_min": min, "c_hat_max": max, "c_hat_spread": max / min, "rows": rows.len() })
}

fn scan_csv(rows: &[MtScanRow]) -> Result<String, CliError> {
    let mut buf = Vec::new();
    write_scan_csv(&mut buf, rows)?;
    Ok(String::from_utf8(buf).expect("scan CSV is ASCII"))
}

pub fn mt_scan(cfg: &RunConfig, exec: Execution) -> Result<Output, CliError> {
    let p = cfg.params()?;
    let sc = &cfg.scan;
    let mu = sc.mu.resolve(&p)?;
    let mut result = json!({ "mu": mu });
    let (mut csv, mut summary) = (Vec::new(), Vec::new());
    if matches!(sc.path, ScanPath::ClosedForm | ScanPath::Both) {
        let fam = BlowupFamily::at_minimal_orbit(p, sc.delta_fraction, sc.alphas[0])
            .map_err(|e| CliError::Config(format!("scan: {e}")))?;
        let rows = mt_scan_closed_form(&fam, &sc.alphas, mu, exec)?;
        let (lo, hi) = ratio_band(&fam);
        let mut stats = scan_stats(&rows);
        stats["delta"] = json!(fam.delta);
        stats["ratio_limit"] = json!(ratio_limit(&fam));
        stats["ratio_band"] = json!([lo, hi]);
        stats["rows_in_band"] = json!(rows.iter().filter(|r| r.ratio >= lo && r.ratio <= hi).count());
        summary.push(format!(
            "mt-scan closed form: {} rows, last ratio / limit = {:.6}, C_hat spread {:.3e}",
            rows.len(),
            rows.last().unwrap().ratio / ratio_limit(&fam),
            stats["c_hat_spread"].as_f64().unwrap()
        ));
        result["closed_form"] = stats;
        csv.push(("mt-scan-closed-form.csv".into(), scan_csv(&rows)?));
    }
    if matches!(sc.path, ScanPath::Mesh | ScanPath::Both) {
        let (_, mesh, ops) = setup(cfg)?;
        let orbit = Orbit::central(&p);
        let delta = sc.mesh_delta.unwrap_or(p.r().min(0.5 * p.l()));
        let fam =
            BlowupFamily::new(p, orbit, delta, sc.alphas[0]).map_err(|e| CliError::Config(format!("scan: {e}")))?;
        let rows = mt_scan_mesh(&mesh, &ops, &fam, &sc.alphas, mu, exec)?;
        let unresolved = rows.iter().filter(|r| !r.resolved).count();
        let mut stats = scan_stats(&rows);
        stats["delta"] = json!(delta);
        stats["ratio_limit"] = json!(ratio_limit(&fam));
        stats["unresolved_rows"] = json!(unresolved);
        summary.push(format!("mt-scan mesh: {} rows, {unresolved} with under-resolved cores", rows.len()));
        if unresolved > 0 {
            summary.push(format!("warning: mesh too coarse for {unresolved} alpha values (h = {:.4e})", mesh.h()));
        }
        result["mesh"] = stats;
        csv.push(("mt-scan-mesh.csv".into(), scan_csv(&rows)?));
        // keep a snapshot of the most concentrated resolved field
        if let Some(r) = rows.iter().rev().find(|r| r.resolved) {
            let v = blowup_field(&mesh, &fam.with_alpha(r.alpha)?);
            result["mesh"]["resolved_alpha_min"] = json!(r.alpha);
            result["mesh"]["peak"] = json!(v.max());
        }
    }
    Ok(Output { result, csv, summary, failure: None })
}

pub fn corollary(cfg: &RunConfig, exec: Execution) -> Result<Output, CliError> {
    let (p, mesh, ops) = setup(cfg)?;
    let cc = &cfg.corollary;
    let fields: Vec<Result<(f64, DiskField), CoreError>> = torusmt_core::exec::map(exec, &cc.rhos, |&rho| {
        let w = rescale_to_gradient_bound(&ops, &moser_field(&mesh, &p, rho)?)?;
        Ok((ops.dirichlet_energy(&w)?, w))
    });
    let mut csv = String::from("rho,alpha_exp,energy,integral\n");
    let mut per_alpha = Vec::new();
    let fields: Vec<(f64, DiskField)> = fields.into_iter().collect::<Result<_, _>>()?;
    for &a in &cc.alpha_exps {
        let mut vals = Vec::new();
        for (&rho, (energy, w)) in cc.rhos.iter().zip(&fields) {
            let v = corollary_check(&ops, w, a)?;
            let _ = writeln!(csv, "{},{},{},{}", num(rho), num(a), num(*energy), num(v));
            vals.push(v);
        }
        let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        per_alpha.push(json!({ "alpha_exp": a, "min": min, "max": max, "ratio": max / min }));
    }
    let summary = per_alpha
        .iter()
        .map(|v| {
            format!(
                "corollary alpha = {:.6}: integral in [{:.6e}, {:.6e}]",
                v["alpha_exp"].as_f64().unwrap(),
                v["min"].as_f64().unwrap(),
                v["max"].as_f64().unwrap()
            )
        })
        .collect();
    Ok(Output {
        result: json!({ "volume": p.volume(), "gradient_bound": gradient_bound(&p), "scans": per_alpha }),
        csv: vec![("corollary.csv".into(), csv)],
        summary,
        failure: None,
    })
}

struct Check {
    name: &'static str,
    measured: f64,
    tolerance: f64,
}

impl Check {
    fn passed(&self) -> bool {
        self.measured <= self.tolerance
    }
}

pub fn verify(cfg: &RunConfig, exec: Execution) -> Result<Output, CliError> {
    let p = cfg.params()?;
    let vc = &cfg.verify;
    let mut checks = Vec::new();

    let vol = mc_volume(&p, vc.mc_samples, vc.seed, exec);
    let area = mc_boundary_area(&p, vc.mc_samples, vc.seed.wrapping_add(1), exec);
    checks.push(Check { name: "volume_vs_monte_carlo_sigmas", measured: vol.sigmas(p.volume()), tolerance: 3.0 });
    checks.push(Check { name: "area_vs_monte_carlo_sigmas", measured: area.sigmas(p.boundary_area()), tolerance: 3.0 });

    let finest = *vc.n_rings.iter().max().unwrap();
    let mesh = DiskMesh::build(finest).map_err(|e| CliError::Config(format!("verify.n_rings: {e}")))?;
    let ops = WeightedOperators::assemble_perturbed(&mesh, &p, vc.perturb_weight);
    checks.push(Check {
        name: "discrete_volume_vs_monte_carlo_sigmas",
        measured: vol.sigmas(ops.discrete_volume()),
        tolerance: 3.0,
    });

    let rc = ReductionConfig {
        n_rings: vc.n_rings.clone(),
        n_fields: vc.n_fields,
        seed: vc.seed,
        mc_samples: vc.mc_samples,
        weight_perturbation: vc.perturb_weight,
    };
    let rows = reduction_identities(&p, &rc, exec)?;
    let s = ReductionSummary::of(&rows);
    checks.push(Check { name: "reduction_vs_monte_carlo_max_sigmas", measured: s.max_mc_sigma, tolerance: 3.0 });
    checks.push(Check {
        name: "reduction_order_max_deviation_from_2",
        measured: (s.min_order - 2.0).abs().max((s.max_order - 2.0).abs()),
        tolerance: 0.3,
    });

    // K and the e^-v identity on the configured (P2) problem, solved on the finest mesh
    let pc = &cfg.problem;
    let f = nodal_field(&mesh, "problem.f", &pc.f)?;
    let g = nodal_field(&mesh, "problem.g", &pc.g)?;
    let prob = ProblemP2::new(&p, pc.a, pc.b, f, g).map_err(|e| CliError::Config(format!("problem: {e}")))?;
    let init = nodal_field(&mesh, "problem.init", &pc.init)?;
    let rep = solve_p2_newton(&ops, &prob, &init, &cfg.solver.options())?;
    let h2 = ops.h() * ops.h();
    let k_scale = constraint_k_scale(&ops, &rep.field, &prob)?;
    checks.push(Check {
        name: "p2_constraint_k",
        measured: rep.constraint_value.abs(),
        tolerance: 10.0 * h2 * k_scale,
    });
    let id = exp_minus_identity(&ops, &rep.field, &prob)?;
    checks.push(Check {
        name: "p2_exp_minus_identity",
        measured: id.residual().abs(),
        tolerance: 10.0 * h2 * id.scale(),
    });

    let mut csv = String::from("check,measured,tolerance,passed\n");
    let mut summary = Vec::new();
    for c in &checks {
        let _ = writeln!(csv, "{},{},{},{}", c.name, num(c.measured), num(c.tolerance), u8::from(c.passed()));
        summary.push(format!(
            "{} {}: measured {:.4e}, tolerance {:.4e}",
            if c.passed() { "PASS" } else { "FAIL" },
            c.name,
            c.measured,
            c.tolerance
        ));
    }
    let mut table = String::from("field_seed,n_rings,h,exp_error,energy_error,boundary_error\n");
    for r in &rows {
        let (e, k, b) = (r.exp_errors(), r.energy_errors(), r.boundary_errors());
        for (i, &n) in vc.n_rings.iter().enumerate() {
            let _ = writeln!(table, "{},{n},{},{},{},{}", r.field_seed, num(r.h[i]), num(e[i]), num(k[i]), num(b[i]));
        }
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed()).map(|c| c.name).collect();
    let result = json!({
        "checks": checks.iter().map(|c| json!({
            "name": c.name, "measured": c.measured, "tolerance": c.tolerance, "passed": c.passed()
        })).collect::<Vec<_>>(),
        "orders": { "min": s.min_order, "max": s.max_order },
        "max_finest_error": s.max_finest_error,
        "monte_carlo": { "volume": vol, "area": area },
    });
    Ok(Output {
        result,
        csv: vec![("verify.csv".into(), csv), ("verify-convergence.csv".into(), table)],
        summary,
        failure: (!failed.is_empty())
            .then(|| CliError::Failed(format!("identity checks failed: {}", failed.join(", ")))),
    })
}

pub fn scan_gamma(cfg: &RunConfig, exec: Execution) -> Result<Output, CliError> {
    let (p, mesh, ops) = setup(cfg)?;
    let f = nodal_field(&mesh, "problem.f", &cfg.problem.f)?;
    let method: Method = cfg.solver.method.into();
    if method == Method::Monotone {
        return Err(CliError::Config("solver.method: monotone iteration applies to solve-p2 only".into()));
    }
    let gammas = &cfg.scan_gamma.gammas;
    let out = gamma_sweep(&mesh, &ops, &f, cfg.problem.boundary.into(), gammas, method, &cfg.solver.options(), exec);
    let mut csv = String::from("gamma,status,iterations,residual_norm,constraint_value,functional_value,v_min,v_max\n");
    let mut rows = Vec::new();
    let mut non_converged = 0;
    for (&gamma, r) in gammas.iter().zip(&out) {
        match r {
            Ok(rep) => {
                let _ = writeln!(
                    csv,
                    "{},converged,{},{},{},{},{},{}",
                    num(gamma),
                    rep.iterations,
                    num(rep.residual_norm),
                    num(rep.constraint_value),
                    num(rep.functional_value),
                    num(rep.field.min()),
                    num(rep.field.max())
                );
                rows.push(json!({ "gamma": gamma, "status": "converged", "iterations": rep.iterations,
                    "residual_norm": rep.residual_norm, "warnings": rep.warnings }));
            }
            Err(e) => {
                if matches!(e, CoreError::NonConvergence { .. }) {
                    non_converged += 1;
                }
                let status = error_tag(e);
                let _ = writeln!(csv, "{},{status},,,,,,", num(gamma));
                rows.push(json!({ "gamma": gamma, "status": status, "error": e.to_string() }));
            }
        }
    }
    let summary = vec![format!(
        "scan-gamma: {} values, {} converged, gamma window (0, {:.6})",
        gammas.len(),
        out.iter().filter(|r| r.is_ok()).count(),
        ProblemP1::gamma_window(&p)
    )];
    Ok(Output {
        result: json!({ "rows": rows, "gamma_window": ProblemP1::gamma_window(&p) }),
        csv: vec![("scan-gamma.csv".into(), csv)],
        summary,
        failure: (non_converged > 0)
            .then(|| CliError::NotConverged(format!("{non_converged} gamma values did not converge"))),
    })
}

fn error_tag(e: &CoreError) -> &'static str {
    match e {
        CoreError::NonConvergence { .. } => "non_convergence",
        CoreError::Infeasible(_) => "infeasible",
        CoreError::SingularJacobian(_) => "singular_jacobian",
        CoreError::Overflow(_) => "overflow",
        CoreError::Domain(_) => "domain",
        _ => "error",
    }
}
