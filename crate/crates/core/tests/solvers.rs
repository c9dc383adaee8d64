use std::f64::consts::E;

use torusmt_core::functionals::{
    constraint_a_p1, constraint_k, exp_minus_identity, residual_p1, residual_p2, P1Boundary, ProblemP1, ProblemP2,
};
use torusmt_core::solvers::{
    find_constant_bracket, gamma_sweep, solve_p1_newton, solve_p1_variational, solve_p2_monotone, solve_p2_newton,
    solve_p2_variational, Method, SolveReport, SolverOptions,
};
use torusmt_core::{DiskField, DiskMesh, Error, Execution, TorusParams, WeightedOperators};

fn setup(n: usize, l: f64, r: f64) -> (DiskMesh, WeightedOperators) {
    let mesh = DiskMesh::build(n).unwrap();
    let p = TorusParams::new(l, r).unwrap();
    let ops = WeightedOperators::assemble(&mesh, &p);
    (mesh, ops)
}

fn opts() -> SolverOptions {
    SolverOptions::default()
}

/// `-Laplacian` of `v = phi(t, s)` on the torus for `phi = c (k - t^2 - s^2)`.
fn neg_laplacian_quadratic(p: &TorusParams, c: f64, t: f64) -> f64 {
    let (l, r) = (p.l(), p.r());
    c / (r * r) * (4.0 + 2.0 * r * t / (l + r * t))
}

fn check_report_invariants(
    ops: &WeightedOperators,
    rep: &SolveReport,
    independent_residual: f64,
    opts: &SolverOptions,
) {
    assert!(rep.converged);
    assert!(rep.field.values.iter().all(|v| v.is_finite()));
    assert!(
        independent_residual <= 2.0 * rep.residual_norm.max(opts.tol_abs),
        "{independent_residual} vs {}",
        rep.residual_norm
    );
    if rep.method == Method::Newton {
        for w in rep.trace.windows(2) {
            assert!(w[1].residual <= w[0].residual);
        }
    }
    let _ = ops;
}

#[test]
fn p1_constant_solution_needs_no_iterations() {
    let (mesh, ops) = setup(16, 2.0, 1.0);
    let prob = ProblemP1::new(1.0, DiskField::constant(&mesh, 1.0)).unwrap();
    let rep = solve_p1_newton(&ops, &prob, &DiskField::zeros(&mesh), &opts()).unwrap();
    assert_eq!(rep.iterations, 0);
    assert!(rep.field.values.iter().all(|&v| v == 0.0));
}

#[test]
fn p1_gamma_two_f_one_has_negative_interior() {
    // With the positive Laplacian convention the solution is subharmonic:
    // -lap v = f e^v - gamma < 0 near v = 0, so v dips below its boundary value.
    let (mesh, ops) = setup(16, 2.0, 1.0);
    let prob = ProblemP1::new(2.0, DiskField::constant(&mesh, 1.0)).unwrap();
    let rep = solve_p1_newton(&ops, &prob, &DiskField::zeros(&mesh), &opts()).unwrap();
    let (_, res) = residual_p1(&ops, &rep.field, &prob).unwrap();
    check_report_invariants(&ops, &rep, res, &opts());
    for i in 0..mesh.n_nodes() {
        if mesh.is_boundary(i) {
            assert_eq!(rep.field.values[i], 0.0);
        } else {
            assert!(rep.field.values[i] < 0.0 && rep.field.values[i] > -2f64.ln());
        }
    }
}

fn p1_manufactured_error(n: usize, l: f64, r: f64) -> f64 {
    let (mesh, ops) = setup(n, l, r);
    let p = *ops.params();
    let (c, gamma) = (1.0, -3.0);
    let exact = DiskField::from_fn(&mesh, |t, s| c * (1.0 - t * t - s * s));
    let f = DiskField::from_fn(&mesh, |t, s| {
        (neg_laplacian_quadratic(&p, c, t) + gamma) * (-c * (1.0 - t * t - s * s)).exp()
    });
    let prob = ProblemP1::new(gamma, f).unwrap();
    let rep = solve_p1_newton(&ops, &prob, &DiskField::zeros(&mesh), &opts()).unwrap();
    let (_, res) = residual_p1(&ops, &rep.field, &prob).unwrap();
    check_report_invariants(&ops, &rep, res, &opts());
    ops.l2_distance(&rep.field, &exact).unwrap() / ops.l2_norm(&exact).unwrap()
}

fn orders(errs: &[f64]) -> Vec<f64> {
    errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

/// Least-squares slope of `-log2 err` against `log2 n`.
fn fitted_order(ns: &[usize], errs: &[f64]) -> f64 {
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).log2()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| -e.log2()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / xs.len() as f64, ys.iter().sum::<f64>() / ys.len() as f64);
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}

#[test]
fn p1_manufactured_second_order() {
    for (l, r) in [(2.0, 1.0), (3.0, 0.5)] {
        let ns = [8, 16, 32, 64];
        let errs: Vec<f64> = ns.iter().map(|&n| p1_manufactured_error(n, l, r)).collect();
        let fit = fitted_order(&ns, &errs);
        println!("P1 l={l} r={r} errors {errs:?} orders {:?} fitted {fit}", orders(&errs));
        assert!((fit - 2.0).abs() <= 0.3, "order {fit}");
    }
}

fn p2_manufactured_error(n: usize, l: f64, r: f64) -> f64 {
    let (mesh, ops) = setup(n, l, r);
    let p = *ops.params();
    let (c, a, b) = (1.0, -8.0, 0.0);
    let phi = move |t: f64, s: f64| c * (2.0 - t * t - s * s);
    let exact = DiskField::from_fn(&mesh, phi);
    let f = DiskField::from_fn(&mesh, |t, s| -(neg_laplacian_quadratic(&p, c, t) + a) * (-phi(t, s)).exp());
    let g = DiskField::constant(&mesh, (2.0 * c / r - b) * (-c).exp());
    let prob = ProblemP2::new(&p, a, b, f, g).unwrap();
    let rep = solve_p2_newton(&ops, &prob, &DiskField::zeros(&mesh), &opts()).unwrap();
    let (_, res) = residual_p2(&ops, &rep.field, &prob).unwrap();
    check_report_invariants(&ops, &rep, res, &opts());
    let id = exp_minus_identity(&ops, &rep.field, &prob).unwrap();
    let h2 = ops.h().powi(2);
    assert!(id.residual().abs() <= 10.0 * h2 * id.scale(), "identity {} scale {}", id.residual(), id.scale());
    ops.l2_distance(&rep.field, &exact).unwrap() / ops.l2_norm(&exact).unwrap()
}

#[test]
fn p2_manufactured_second_order() {
    for (l, r) in [(2.0, 1.0), (3.0, 0.5)] {
        let ns = [8, 16, 32, 64];
        let errs: Vec<f64> = ns.iter().map(|&n| p2_manufactured_error(n, l, r)).collect();
        let fit = fitted_order(&ns, &errs);
        println!("P2 l={l} r={r} errors {errs:?} orders {:?} fitted {fit}", orders(&errs));
        assert!((fit - 2.0).abs() <= 0.3, "order {fit}");
    }
}

#[test]
fn p2_constant_calibration() {
    let (mesh, ops) = setup(12, 2.0, 1.0);
    let p = *ops.params();
    let z = DiskField::zeros(&mesh);
    let prob = ProblemP2::new(&p, 1.0, 0.0, DiskField::constant(&mesh, -1.0 / E), z.clone()).unwrap();
    let rep = solve_p2_newton(&ops, &prob, &DiskField::constant(&mesh, 1.0), &opts()).unwrap();
    assert_eq!(rep.iterations, 0);
    let rep = solve_p2_newton(&ops, &prob, &z, &opts()).unwrap();
    assert!(rep.field.values.iter().all(|v| (v - 1.0).abs() < 1e-9));

    let prob = ProblemP2::new(&p, 0.0, 1.0, z.clone(), DiskField::constant(&mesh, -(-2.0f64).exp())).unwrap();
    let rep = solve_p2_newton(&ops, &prob, &z, &opts()).unwrap();
    assert!(rep.field.values.iter().all(|v| (v - 2.0).abs() < 1e-9));
}

#[test]
fn p1_variational_gamma_zero() {
    let (mesh, ops) = setup(16, 2.0, 1.0);
    let f = DiskField::from_fn(&mesh, |t, s| -1.0 + 2.0 * t + 0.5 * s);
    let prob = ProblemP1::with_boundary(0.0, f, P1Boundary::Natural).unwrap();
    let rep = solve_p1_variational(&mesh, &ops, &prob, &opts()).unwrap();
    println!("P1 gamma=0: iters {} residual {:e} lambda {:?}", rep.iterations, rep.residual_norm, rep.multiplier);
    assert!(rep.multiplier.unwrap() > 0.0);
    assert!(constraint_a_p1(&ops, &rep.field, &prob).unwrap().abs() < 1e-8);
    let newton = solve_p1_newton(&ops, &prob, &rep.field, &opts()).unwrap();
    let d = ops.l2_distance(&newton.field, &rep.field).unwrap();
    assert!(d <= 10.0 * ops.h().powi(2), "{d}");
}

#[test]
fn p1_variational_positive_gamma_trivial() {
    let (mesh, ops) = setup(16, 2.0, 1.0);
    let prob = ProblemP1::new(1.0, DiskField::constant(&mesh, 1.0)).unwrap();
    let rep = solve_p1_variational(&mesh, &ops, &prob, &opts()).unwrap();
    assert!(rep.field.values.iter().all(|v| v.abs() < 1e-9));
    assert!(rep.functional_value.abs() < 1e-8);
}

#[test]
fn p1_variational_negative_gamma_bound() {
    let (mesh, ops) = setup(16, 2.0, 1.0);
    let gamma = -1.0;
    let f = DiskField::from_fn(&mesh, |t, s| -2.0 - t - s * s);
    let sup_f = f.max();
    let prob = ProblemP1::with_boundary(gamma, f, P1Boundary::Natural).unwrap();
    let rep = solve_p1_variational(&mesh, &ops, &prob, &opts()).unwrap();
    println!("P1 gamma<0: iters {} residual {:e} theta {:?}", rep.iterations, rep.residual_norm, rep.multiplier);
    let int_v = ops.integrate_volume(&rep.field, |x| x).unwrap();
    assert!(int_v <= ops.discrete_volume() * (gamma / sup_f).ln() + 1e-8);
    let newton = solve_p1_newton(&ops, &prob, &rep.field, &opts()).unwrap();
    assert!(ops.l2_distance(&newton.field, &rep.field).unwrap() <= 10.0 * ops.h().powi(2));
}

#[test]
fn p2_variational_gauge_case() {
    let (mesh, ops) = setup(16, 2.0, 1.0);
    let p = *ops.params();
    let f = DiskField::from_fn(&mesh, |t, _| 1.0 + 3.0 * t);
    let prob = ProblemP2::new(&p, 0.0, 0.0, f, DiskField::zeros(&mesh)).unwrap();
    let rep = solve_p2_variational(&mesh, &ops, &prob, &opts()).unwrap();
    println!(
        "P2 R=0: iters {} residual {:e} kappa {:?} check {:?}",
        rep.iterations, rep.residual_norm, rep.multiplier, rep.multiplier_check
    );
    let kappa = rep.multiplier.unwrap();
    assert!(kappa > 0.0);
    let check = rep.multiplier_check.unwrap();
    assert!((check - kappa).abs() <= 10.0 * ops.h().powi(2) * kappa);
    assert!(constraint_k(&ops, &rep.field, &prob).unwrap().abs() < 1e-8);
    let newton = solve_p2_newton(&ops, &prob, &rep.field, &opts()).unwrap();
    assert!(ops.l2_distance(&newton.field, &rep.field).unwrap() <= 10.0 * ops.h().powi(2));
}

#[test]
fn p2_variational_positive_r() {
    let (mesh, ops) = setup(16, 2.0, 1.0);
    let p = *ops.params();
    // R = a Vol = 0.01 * 4 pi^2 inside (0, 4 pi^2 (l - r))
    let f = DiskField::from_fn(&mesh, |t, s| -1.0 + 0.5 * t + 0.2 * s * s);
    let g = DiskField::from_fn(&mesh, |t, _| -0.5 + 0.1 * t);
    let prob = ProblemP2::new(&p, 0.01, 0.0, f, g).unwrap();
    assert!(prob.r_total() > 0.0 && prob.r_total() < 4.0 * std::f64::consts::PI.powi(2));
    let rep = solve_p2_variational(&mesh, &ops, &prob, &opts()).unwrap();
    println!("P2 R>0: iters {} residual {:e} nu {:?}", rep.iterations, rep.residual_norm, rep.multiplier);
    assert!(rep.warnings.is_empty());
    assert!((rep.multiplier.unwrap() - 1.0).abs() < 1e-6);
    let newton = solve_p2_newton(&ops, &prob, &rep.field, &opts()).unwrap();
    assert!(ops.l2_distance(&newton.field, &rep.field).unwrap() <= 10.0 * ops.h().powi(2));
}

#[test]
fn p2_variational_rejects_degenerate() {
    let (mesh, ops) = setup(8, 2.0, 1.0);
    let p = *ops.params();
    let z = DiskField::zeros(&mesh);
    let prob = ProblemP2::new(&p, 1.0, 1.0, z.clone(), z).unwrap();
    assert!(matches!(solve_p2_variational(&mesh, &ops, &prob, &opts()), Err(Error::Infeasible(_))));
}

#[test]
fn monotone_case_four() {
    let (mesh, ops) = setup(16, 2.0, 1.0);
    let p = *ops.params();
    let one = DiskField::constant(&mesh, 1.0);
    let prob = ProblemP2::new(&p, -1.0, -1.0, one.clone(), one).unwrap();
    let (sub, sup) = find_constant_bracket(&ops, &prob).unwrap();
    assert_eq!(sub.values[0], 0.0);
    assert_eq!(sup.values[0], 0.0);
    let rep = solve_p2_monotone(&ops, &prob, &DiskField::constant(&mesh, -10.0), &sup, &opts()).unwrap();
    println!("monotone: iters {} residual {:e}", rep.iterations, rep.residual_norm);
    assert!(rep.residual_norm <= 1e-8);
    let rep = solve_p2_monotone(&ops, &prob, &sup, &sup, &opts()).unwrap();
    assert_eq!(rep.iterations, 1);
}

#[test]
fn monotone_rejects_unordered() {
    let (mesh, ops) = setup(8, 2.0, 1.0);
    let p = *ops.params();
    let one = DiskField::constant(&mesh, 1.0);
    let prob = ProblemP2::new(&p, -1.0, -1.0, one.clone(), one).unwrap();
    let r = solve_p2_monotone(&ops, &prob, &DiskField::constant(&mesh, 1.0), &DiskField::zeros(&mesh), &opts());
    assert!(matches!(r, Err(Error::OrderingViolation(_))));
}

#[test]
fn constant_bracket_failures() {
    let (mesh, ops) = setup(8, 2.0, 1.0);
    let p = *ops.params();
    let one = DiskField::constant(&mesh, 1.0);
    let z = DiskField::zeros(&mesh);
    let prob = ProblemP2::new(&p, 0.0, -1.0, one.clone(), one.clone()).unwrap();
    assert!(matches!(find_constant_bracket(&ops, &prob), Err(Error::NoBracket(_))));
    let prob = ProblemP2::new(&p, -1.0, 0.0, z, one).unwrap();
    assert!(matches!(find_constant_bracket(&ops, &prob), Err(Error::NoBracket(_))));
}

#[test]
fn gamma_sweep_is_ordered_and_thread_independent() {
    let (mesh, ops) = setup(16, 2.0, 1.0);
    let f = DiskField::from_fn(&mesh, |t, s| 1.0 + 0.3 * t - 0.2 * s * s);
    let gammas = [-2.0, -1.0, -0.5, 0.5];
    let run = |exec| gamma_sweep(&mesh, &ops, &f, P1Boundary::Dirichlet, &gammas, Method::Newton, &opts(), exec);
    let (a, b) = (run(Execution::Sequential), run(Execution::Parallel));
    for (k, (x, y)) in a.iter().zip(&b).enumerate() {
        let (x, y) = (x.as_ref().unwrap(), y.as_ref().unwrap());
        assert_eq!(x.field, y.field);
        let prob = ProblemP1::new(gammas[k], f.clone()).unwrap();
        assert!(residual_p1(&ops, &x.field, &prob).unwrap().1 <= 1e-9);
    }
    let bad =
        gamma_sweep(&mesh, &ops, &f, P1Boundary::Dirichlet, &[1.0], Method::Monotone, &opts(), Execution::Sequential);
    assert!(bad[0].is_err());
}

#[test]
fn p2_newton_does_not_accept_the_degenerate_gauge_limit() {
    // a = b = 0 from zero: the residual can be made tiny by v -> -infinity
    let (mesh, ops) = setup(16, 2.0, 1.0);
    let p = *ops.params();
    let f = DiskField::from_fn(&mesh, |t, _| 1.0 + 3.0 * t);
    let prob = ProblemP2::new(&p, 0.0, 0.0, f, DiskField::zeros(&mesh)).unwrap();
    match solve_p2_newton(&ops, &prob, &DiskField::zeros(&mesh), &opts()) {
        Ok(rep) => {
            let var = solve_p2_variational(&mesh, &ops, &prob, &opts()).unwrap();
            assert!(ops.l2_distance(&rep.field, &var.field).unwrap() <= 10.0 * ops.h().powi(2));
        }
        Err(e) => assert!(matches!(e, Error::NonConvergence { .. }), "{e}"),
    }
}
