//! Independent reference integrators: seeded Monte Carlo over the solid torus
//! in R^3 and tensor quadrature on the disk in polar coordinates.
//!
//! Monte Carlo samples are drawn in fixed-size chunks, each from its own
//! ChaCha stream, and the chunk sums are combined in order, so estimates are
//! bit-identical for any thread count.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::exec::{self, Execution};
use crate::geometry::TorusParams;

pub const MC_CHUNK: usize = 1 << 15;

/// A Monte Carlo mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_err: f64,
    pub samples: usize,
}

impl McEstimate {
    /// Deviation of `x` from the estimate in standard errors.
    pub fn sigmas(&self, x: f64) -> f64 {
        (x - self.value).abs() / self.std_err
    }

    pub fn within(&self, x: f64, k: f64) -> bool {
        self.sigmas(x) <= k
    }
}

/// `scale` times the sample mean of `g`, drawn chunk by chunk.
fn mc_mean<G>(samples: usize, seed: u64, exec: Execution, scale: f64, g: G) -> McEstimate
where
    G: Fn(&mut ChaCha8Rng) -> f64 + Sync + Send,
{
    let chunks = samples.div_ceil(MC_CHUNK);
    let sums = exec::map_range(exec, chunks, |c| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        let n = MC_CHUNK.min(samples - c * MC_CHUNK);
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let x = g(&mut rng);
            s += x;
            s2 += x * x;
        }
        (s, s2)
    });
    let (s, s2) = sums.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let n = samples as f64;
    let mean = s / n;
    let var = ((s2 / n - mean * mean) * n / (n - 1.0)).max(0.0);
    McEstimate { value: scale * mean, std_err: scale * (var / n).sqrt(), samples }
}

/// Bounding box `[-(l+r), l+r]^2 x [-r, r]`.
fn box_volume(p: &TorusParams) -> f64 {
    let a = p.l() + p.r();
    4.0 * a * a * 2.0 * p.r()
}

fn box_point(p: &TorusParams, rng: &mut ChaCha8Rng) -> [f64; 3] {
    let a = p.l() + p.r();
    [rng.random_range(-a..a), rng.random_range(-a..a), rng.random_range(-p.r()..p.r())]
}

fn inside(p: &TorusParams, [x, y, z]: [f64; 3]) -> bool {
    let d = x.hypot(y) - p.l();
    d * d + z * z <= p.r() * p.r()
}

/// Rejection-sampling estimate of the volume of the solid torus.
pub fn mc_volume(p: &TorusParams, samples: usize, seed: u64, exec: Execution) -> McEstimate {
    mc_volume_integral(p, |_| 1.0, samples, seed, exec)
}

/// `int_T g dV` by uniform sampling of the bounding box; `g` receives the
/// Cartesian point and is only called inside the torus.
pub fn mc_volume_integral<G>(p: &TorusParams, g: G, samples: usize, seed: u64, exec: Execution) -> McEstimate
where
    G: Fn([f64; 3]) -> f64 + Sync + Send,
{
    mc_mean(samples, seed, exec, box_volume(p), |rng| {
        let q = box_point(p, rng);
        if inside(p, q) {
            g(q)
        } else {
            0.0
        }
    })
}

/// Surface area of the boundary torus from the parametrization
/// `((l + r cos u) cos w, (l + r cos u) sin w, r sin u)`, whose area element
/// is `|X_u x X_w|`, computed here from the cross product.
pub fn mc_boundary_area(p: &TorusParams, samples: usize, seed: u64, exec: Execution) -> McEstimate {
    let (l, r) = (p.l(), p.r());
    mc_mean(samples, seed, exec, 4.0 * PI * PI, |rng| {
        let u = rng.random_range(0.0..2.0 * PI);
        let w = rng.random_range(0.0..2.0 * PI);
        let xu = [-r * u.sin() * w.cos(), -r * u.sin() * w.sin(), r * u.cos()];
        let xw = [-(l + r * u.cos()) * w.sin(), (l + r * u.cos()) * w.cos(), 0.0];
        let c = [xu[1] * xw[2] - xu[2] * xw[1], xu[2] * xw[0] - xu[0] * xw[2], xu[0] * xw[1] - xu[1] * xw[0]];
        (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt()
    })
}

/// A smooth function of the disk coordinates `(t, s)`, lifted to the torus as
/// a rotation-invariant function.
pub trait SmoothField: Sync + Send {
    fn value(&self, t: f64, s: f64) -> f64;

    /// Value at a Cartesian point of the torus.
    fn lift(&self, p: &TorusParams, [x, y, z]: [f64; 3]) -> f64 {
        self.value((x.hypot(y) - p.l()) / p.r(), z / p.r())
    }

    /// `|grad v|^2` of the lift, by central differences in R^3.
    fn lifted_grad_sq(&self, p: &TorusParams, q: [f64; 3]) -> f64 {
        let h = 1e-5 * p.r();
        (0..3)
            .map(|k| {
                let (mut a, mut b) = (q, q);
                a[k] += h;
                b[k] -= h;
                let d = (self.lift(p, a) - self.lift(p, b)) / (2.0 * h);
                d * d
            })
            .sum()
    }
}

impl<F: Fn(f64, f64) -> f64 + Sync + Send> SmoothField for F {
    fn value(&self, t: f64, s: f64) -> f64 {
        self(t, s)
    }
}

/// `c + sum_k a_k sin(b_k . (t, s) + phi_k)` with random coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomTrigField {
    pub constant: f64,
    pub terms: Vec<([f64; 2], f64, f64)>,
}

impl RandomTrigField {
    /// `n_terms` modes with amplitudes in `[-amp, amp]` and wave vectors in `[-3, 3]^2`.
    pub fn sample(seed: u64, n_terms: usize, amp: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let constant = rng.random_range(-amp..amp);
        let terms = (0..n_terms)
            .map(|_| {
                let b = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
                (b, rng.random_range(0.0..2.0 * PI), rng.random_range(-amp..amp))
            })
            .collect();
        Self { constant, terms }
    }
}

impl SmoothField for RandomTrigField {
    fn value(&self, t: f64, s: f64) -> f64 {
        self.constant + self.terms.iter().map(|(b, ph, a)| a * (b[0] * t + b[1] * s + ph).sin()).sum::<f64>()
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // P_n and P_n' by the three-term recurrence
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 {
                1.0
            } else if n == 1 {
                z
            } else {
                p1
            };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// `int_T g dV = 2 pi r^2 int_D g(t, s) (l + r t) dt ds` by Gauss-Legendre in
/// the radius and the trapezoid rule in the angle.
pub fn disk_quadrature(p: &TorusParams, g: impl Fn(f64, f64) -> f64, n_radial: usize, n_angle: usize) -> f64 {
    let (x, w) = gauss_legendre(n_radial);
    let dth = 2.0 * PI / n_angle as f64;
    let mut total = 0.0;
    for (xi, wi) in x.iter().zip(&w) {
        let rho = 0.5 * (xi + 1.0);
        let ring: f64 = (0..n_angle)
            .map(|k| {
                let th = k as f64 * dth;
                let (t, s) = (rho * th.cos(), rho * th.sin());
                g(t, s) * (p.l() + p.r() * t)
            })
            .sum();
        total += 0.5 * wi * rho * ring * dth;
    }
    2.0 * PI * p.r() * p.r() * total
}

/// `int_{boundary T} g dS = 2 pi r int_0^{2 pi} g(cos th, sin th) (l + r cos th) dth`
/// by the (spectrally accurate) periodic trapezoid rule.
pub fn boundary_quadrature(p: &TorusParams, g: impl Fn(f64, f64) -> f64, n_angle: usize) -> f64 {
    let dth = 2.0 * PI / n_angle as f64;
    let sum: f64 = (0..n_angle)
        .map(|k| {
            let th = k as f64 * dth;
            g(th.cos(), th.sin()) * (p.l() + p.r() * th.cos())
        })
        .sum();
    2.0 * PI * p.r() * sum * dth
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(5);
        assert_relative_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-14);
        let m8: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert_relative_eq!(m8, 2.0 / 9.0, epsilon = 1e-14);
        let (x1, w1) = gauss_legendre(1);
        assert_eq!((x1[0], w1[0]), (0.0, 2.0));
    }

    #[test]
    fn quadrature_measures() {
        let p = TorusParams::new(2.0, 1.0).unwrap();
        assert_relative_eq!(disk_quadrature(&p, |_, _| 1.0, 8, 16), p.volume(), max_relative = 1e-14);
        assert_relative_eq!(boundary_quadrature(&p, |_, _| 1.0, 16), p.boundary_area(), max_relative = 1e-14);
        // int_D t^2 (l + r t) = l pi / 4
        assert_relative_eq!(disk_quadrature(&p, |t, _| t * t, 8, 16), 2.0 * PI * 2.0 * PI / 4.0, max_relative = 1e-13);
    }

    #[test]
    fn monte_carlo_is_thread_independent() {
        let p = TorusParams::new(3.0, 1.0).unwrap();
        let a = mc_volume(&p, 100_000, 7, Execution::Sequential);
        let b = mc_volume(&p, 100_000, 7, Execution::Parallel);
        assert_eq!(a, b);
        assert!(a.within(p.volume(), 4.0));
        assert_ne!(a, mc_volume(&p, 100_000, 8, Execution::Sequential));
    }

    #[test]
    fn lifted_gradient_of_t() {
        let p = TorusParams::new(2.0, 1.0).unwrap();
        let f = |t: f64, _s: f64| t;
        // |grad t|^2 = 1/r^2
        assert_relative_eq!(f.lifted_grad_sq(&p, [2.3, 0.4, 0.2]), 1.0, max_relative = 1e-8);
    }
}
