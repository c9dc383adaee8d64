//! Reduction-identity checks: mesh quadrature on the weighted disk against the
//! independent integrators of [`crate::oracle`], over random smooth fields and
//! a sequence of refinements.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::exec::{self, Execution};
use crate::geometry::TorusParams;
use crate::mesh::DiskMesh;
use crate::operators::{DiskField, WeightedOperators};
use crate::oracle::{
    boundary_quadrature, disk_quadrature, mc_volume_integral, McEstimate, RandomTrigField, SmoothField,
};

/// Least-squares slope of `ln err` against `ln h`.
pub fn fitted_order(hs: &[f64], errs: &[f64]) -> f64 {
    let n = hs.len() as f64;
    let x: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let y: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionConfig {
    pub n_rings: Vec<usize>,
    pub n_fields: usize,
    pub seed: u64,
    pub mc_samples: usize,
    /// Relative perturbation of the metric weight used to assemble the mesh
    /// operators (0 for the real check; nonzero to confirm the check can fail).
    pub weight_perturbation: f64,
}

impl Default for ReductionConfig {
    fn default() -> Self {
        Self { n_rings: vec![8, 16, 32, 64], n_fields: 20, seed: 2024, mc_samples: 1_000_000, weight_perturbation: 0.0 }
    }
}

/// Mesh-versus-oracle comparison for one random field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldReduction {
    pub field_seed: u64,
    /// `int_T e^v dV` on each mesh.
    pub mesh_exp: Vec<f64>,
    pub mesh_energy: Vec<f64>,
    pub mesh_boundary_exp: Vec<f64>,
    /// High-order quadrature references.
    pub quad_exp: f64,
    pub quad_energy: f64,
    pub quad_boundary_exp: f64,
    pub mc_exp: McEstimate,
    pub mc_energy: McEstimate,
    pub h: Vec<f64>,
}

impl FieldReduction {
    fn rel(vals: &[f64], exact: f64) -> Vec<f64> {
        vals.iter().map(|v| (v - exact).abs() / exact.abs()).collect()
    }

    pub fn exp_errors(&self) -> Vec<f64> {
        Self::rel(&self.mesh_exp, self.quad_exp)
    }

    pub fn energy_errors(&self) -> Vec<f64> {
        Self::rel(&self.mesh_energy, self.quad_energy)
    }

    pub fn boundary_errors(&self) -> Vec<f64> {
        Self::rel(&self.mesh_boundary_exp, self.quad_boundary_exp)
    }

    /// Fitted orders for (volume exp, energy, boundary exp).
    pub fn orders(&self) -> [f64; 3] {
        [
            fitted_order(&self.h, &self.exp_errors()),
            fitted_order(&self.h, &self.energy_errors()),
            fitted_order(&self.h, &self.boundary_errors()),
        ]
    }

    /// Standard errors between the finest mesh and Monte Carlo, for (exp, energy).
    pub fn mc_sigmas(&self) -> [f64; 2] {
        [self.mc_exp.sigmas(*self.mesh_exp.last().unwrap()), self.mc_energy.sigmas(*self.mesh_energy.last().unwrap())]
    }
}

const QUAD_RADIAL: usize = 40;
const QUAD_ANGLE: usize = 128;

/// Runs the reduction comparison for `cfg.n_fields` random fields. Fields are
/// processed in parallel; each Monte Carlo run is seeded from `cfg.seed` and
/// the field index.
pub fn reduction_identities(p: &TorusParams, cfg: &ReductionConfig, exec: Execution) -> Result<Vec<FieldReduction>> {
    let meshes: Vec<(DiskMesh, WeightedOperators)> = cfg
        .n_rings
        .iter()
        .map(|&n| {
            let m = DiskMesh::build(n)?;
            let o = WeightedOperators::assemble_perturbed(&m, p, cfg.weight_perturbation);
            Ok((m, o))
        })
        .collect::<Result<_>>()?;
    let h: Vec<f64> = meshes.iter().map(|(m, _)| m.h()).collect();
    let seeds: Vec<u64> = (0..cfg.n_fields as u64).map(|k| cfg.seed.wrapping_mul(1000).wrapping_add(k)).collect();
    exec::map(exec, &seeds, |&fs| {
        let f = RandomTrigField::sample(fs, 3, 0.5);
        let (mut mesh_exp, mut mesh_energy, mut mesh_boundary_exp) = (Vec::new(), Vec::new(), Vec::new());
        for (m, o) in &meshes {
            let v = DiskField::from_fn(m, |t, s| f.value(t, s));
            mesh_exp.push(o.integrate_volume(&v, f64::exp)?);
            mesh_energy.push(o.dirichlet_energy(&v)?);
            mesh_boundary_exp.push(o.integrate_boundary(&v, f64::exp)?);
        }
        let r2 = p.r() * p.r();
        let quad_energy = disk_quadrature(
            p,
            |t, s| {
                let d = 1e-6;
                let a = (f.value(t + d, s) - f.value(t - d, s)) / (2.0 * d);
                let b = (f.value(t, s + d) - f.value(t, s - d)) / (2.0 * d);
                (a * a + b * b) / r2
            },
            QUAD_RADIAL,
            QUAD_ANGLE,
        );
        Ok(FieldReduction {
            field_seed: fs,
            mesh_exp,
            mesh_energy,
            mesh_boundary_exp,
            quad_exp: disk_quadrature(p, |t, s| f.value(t, s).exp(), QUAD_RADIAL, QUAD_ANGLE),
            quad_energy,
            quad_boundary_exp: boundary_quadrature(p, |t, s| f.value(t, s).exp(), 2 * QUAD_ANGLE),
            // the inner Monte Carlo runs sequentially; fields already fan out
            mc_exp: mc_volume_integral(p, |q| f.lift(p, q).exp(), cfg.mc_samples, fs, Execution::Sequential),
            mc_energy: mc_volume_integral(
                p,
                |q| f.lifted_grad_sq(p, q),
                cfg.mc_samples,
                fs ^ 0x9e37_79b9_7f4a_7c15,
                Execution::Sequential,
            ),
            h: h.clone(),
        })
    })
    .into_iter()
    .collect()
}

/// Summary verdict over all fields.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionSummary {
    pub max_mc_sigma: f64,
    pub min_order: f64,
    pub max_order: f64,
    pub max_finest_error: f64,
}

impl ReductionSummary {
    pub fn of(rows: &[FieldReduction]) -> Self {
        let mut s =
            Self { max_mc_sigma: 0.0, min_order: f64::INFINITY, max_order: f64::NEG_INFINITY, max_finest_error: 0.0 };
        for r in rows {
            for x in r.mc_sigmas() {
                s.max_mc_sigma = s.max_mc_sigma.max(x);
            }
            for o in r.orders() {
                s.min_order = s.min_order.min(o);
                s.max_order = s.max_order.max(o);
            }
            for e in [r.exp_errors(), r.energy_errors(), r.boundary_errors()] {
                s.max_finest_error = s.max_finest_error.max(*e.last().unwrap());
            }
        }
        s
    }

    /// Monte Carlo within 3 standard errors and orders within 2 +- 0.3.
    pub fn passed(&self) -> bool {
        self.max_mc_sigma <= 3.0 && self.min_order >= 1.7 && self.max_order <= 2.3
    }
}
