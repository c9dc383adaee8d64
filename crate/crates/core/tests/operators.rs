use std::f64::consts::PI;

use proptest::prelude::*;
use torusmt_core::{DiskField, DiskMesh, TorusParams, WeightedOperators};

#[test]
fn stiffness_is_an_m_matrix() {
    for (n, l, r) in [(4, 2.0, 1.0), (16, 2.0, 1.0), (32, 1.2, 1.0), (24, 10.0, 0.3)] {
        let mesh = DiskMesh::build(n).unwrap();
        let ops = WeightedOperators::assemble(&mesh, &TorusParams::new(l, r).unwrap());
        let k = ops.stiffness();
        for i in 0..k.n() {
            let mut row_sum = 0.0;
            for (j, v) in k.row(i) {
                row_sum += v;
                if i != j {
                    assert!(v <= 0.0);
                } else {
                    assert!(v > 0.0);
                }
            }
            assert!(row_sum.abs() < 1e-10);
        }
    }
}

#[test]
fn measures_converge_at_second_order() {
    let p = TorusParams::new(2.0, 1.0).unwrap();
    let err = |n: usize| {
        let ops = WeightedOperators::assemble(&DiskMesh::build(n).unwrap(), &p);
        ((ops.discrete_volume() - p.volume()).abs(), (ops.discrete_boundary_area() - p.boundary_area()).abs())
    };
    let (v16, b16) = err(16);
    let (v32, b32) = err(32);
    assert!(((v16 / v32).log2() - 2.0).abs() < 0.2);
    assert!(((b16 / b32).log2() - 2.0).abs() < 0.2);
}

#[test]
fn dirichlet_energy_of_t() {
    // ||grad t||^2 = 2 pi int_D (l + r t) dt ds / r^2 * r^2 = 2 pi^2 l
    let p = TorusParams::new(2.0, 1.0).unwrap();
    let mesh = DiskMesh::build(32).unwrap();
    let ops = WeightedOperators::assemble(&mesh, &p);
    let t = DiskField::from_fn(&mesh, |t, _| t);
    let e = ops.dirichlet_energy(&t).unwrap();
    assert!((e - 2.0 * PI * PI * p.l()).abs() / (2.0 * PI * PI * p.l()) < 0.01);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn energy_is_shift_invariant_and_nonnegative(
        a in -3.0f64..3.0, b in -3.0f64..3.0, c in -5.0f64..5.0, l in 1.1f64..5.0,
    ) {
        let p = TorusParams::new(l, 1.0).unwrap();
        let mesh = DiskMesh::build(6).unwrap();
        let ops = WeightedOperators::assemble(&mesh, &p);
        let v = DiskField::from_fn(&mesh, |t, s| (a * t).sin() + b * s * t);
        let e0 = ops.dirichlet_energy(&v).unwrap();
        let e1 = ops.dirichlet_energy(&v.shifted(c)).unwrap();
        prop_assert!(e0 >= -1e-12);
        prop_assert!((e0 - e1).abs() <= 1e-9 * (1.0 + e0));
    }
}
