//! Solid torus geometry: parameters, the two angular charts onto `I x D`, the
//! metric weight of the reduction to the unit disk, and distances to orbits of
//! the rotation group.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Major radius `l` and minor radius `r` of the solid torus
/// `(sqrt(x^2+y^2) - l)^2 + z^2 <= r^2`, with `l > r > 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusParams {
    l: f64,
    r: f64,
}

impl TorusParams {
    pub fn new(l: f64, r: f64) -> Result<Self> {
        if !l.is_finite() || !r.is_finite() {
            return Err(Error::Domain(format!("radii must be finite (l={l}, r={r})")));
        }
        if r <= 0.0 {
            return Err(Error::Domain(format!("minor radius must be positive (r={r})")));
        }
        if l <= r {
            return Err(Error::Domain(format!("l must exceed r (l={l}, r={r})")));
        }
        Ok(Self { l, r })
    }

    #[inline]
    pub fn l(&self) -> f64 {
        self.l
    }

    #[inline]
    pub fn r(&self) -> f64 {
        self.r
    }

    /// `2 pi^2 r^2 l`
    pub fn volume(&self) -> f64 {
        2.0 * PI * PI * self.r * self.r * self.l
    }

    /// `4 pi^2 r l`
    pub fn boundary_area(&self) -> f64 {
        4.0 * PI * PI * self.r * self.l
    }

    /// Volume element of the chart, `r^2 (l + r t)`.
    #[inline]
    pub fn metric_weight(&self, t: f64) -> f64 {
        self.r * self.r * (self.l + self.r * t)
    }

    /// Length of the shortest orbit, `2 pi (l - r)`; it lies on the boundary.
    pub fn minimal_orbit_length(&self) -> f64 {
        2.0 * PI * (self.l - self.r)
    }
}

/// A point of `R^3`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl TorusPoint {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    /// Lift of the disk point `(t, s)` to the meridian half-plane `omega = 0`.
    pub fn from_disk(p: &TorusParams, t: f64, s: f64) -> Self {
        Self { x: p.l + p.r * t, y: 0.0, z: p.r * s }
    }

    /// Distance from the symmetry axis.
    #[inline]
    pub fn axial_radius(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn inside(&self, p: &TorusParams) -> bool {
        let dr = self.axial_radius() - p.l;
        let lhs = dr * dr + self.z * self.z;
        lhs <= p.r * p.r + 1e-12 * p.r
    }

    /// Rotation by `angle` about the z-axis.
    pub fn rotated(&self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self { x: c * self.x - s * self.y, y: s * self.x + c * self.y, z: self.z }
    }
}

/// One of the two charts. Chart 1 excludes the half-plane `{x > 0, y = 0}` and
/// has `omega` in `(0, 2 pi)`; chart 2 excludes `{x < 0, y = 0}` and has `omega`
/// in `(-pi, pi)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Chart {
    First,
    Second,
}

impl Chart {
    pub fn index(self) -> u8 {
        match self {
            Chart::First => 1,
            Chart::Second => 2,
        }
    }
}

impl TryFrom<u8> for Chart {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Chart::First),
            2 => Ok(Chart::Second),
            other => Err(Error::Domain(format!("chart index must be 1 or 2, got {other}"))),
        }
    }
}

/// Chart coordinates `(omega, t, s)` with `(t, s)` in the closed unit disk.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartCoords {
    pub omega: f64,
    pub t: f64,
    pub s: f64,
}

pub fn chart_forward(p: &TorusParams, q: &TorusPoint, chart: Chart) -> Result<ChartCoords> {
    if !q.inside(p) {
        return Err(Error::Domain(format!("point ({}, {}, {}) is outside the torus", q.x, q.y, q.z)));
    }
    let omega = match chart {
        Chart::First => {
            if q.y == 0.0 && q.x > 0.0 {
                return Err(Error::ChartDomain { chart: 1 });
            }
            let a = q.y.atan2(q.x);
            if a <= 0.0 {
                a + 2.0 * PI
            } else {
                a
            }
        }
        Chart::Second => {
            if q.y == 0.0 && q.x < 0.0 {
                return Err(Error::ChartDomain { chart: 2 });
            }
            q.y.atan2(q.x)
        }
    };
    let t = (q.axial_radius() - p.l) / p.r;
    let s = q.z / p.r;
    Ok(ChartCoords { omega, t, s })
}

pub fn chart_inverse(p: &TorusParams, c: &ChartCoords) -> TorusPoint {
    let rho = p.l + p.r * c.t;
    let (sin, cos) = c.omega.sin_cos();
    TorusPoint { x: rho * cos, y: rho * sin, z: p.r * c.s }
}

/// An orbit of the rotation group: the horizontal circle of radius `l_p` at
/// height `z_p`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Orbit {
    pub l_p: f64,
    pub z_p: f64,
}

impl Orbit {
    pub fn new(l_p: f64, z_p: f64) -> Result<Self> {
        if !(l_p > 0.0) || !z_p.is_finite() {
            return Err(Error::Domain(format!("orbit radius must be positive (l_p={l_p})")));
        }
        Ok(Self { l_p, z_p })
    }

    /// The shortest orbit, `(l - r, 0)`, on the inner equator of the boundary.
    pub fn minimal(p: &TorusParams) -> Self {
        Self { l_p: p.l - p.r, z_p: 0.0 }
    }

    /// The core circle `(l, 0)`, image of the disk center.
    pub fn central(p: &TorusParams) -> Self {
        Self { l_p: p.l, z_p: 0.0 }
    }

    /// The orbit through the disk point `(t, s)`.
    pub fn through_disk_point(p: &TorusParams, t: f64, s: f64) -> Self {
        Self { l_p: p.l + p.r * t, z_p: p.r * s }
    }
}

pub fn orbit_distance(q: &TorusPoint, orbit: &Orbit) -> f64 {
    (q.axial_radius() - orbit.l_p).hypot(q.z - orbit.z_p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn make_params_validates() {
        assert!(TorusParams::new(2.0, 1.0).is_ok());
        assert!(matches!(TorusParams::new(1.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(TorusParams::new(2.0, -1.0), Err(Error::Domain(_))));
        assert!(TorusParams::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn measures() {
        let p = TorusParams::new(2.0, 1.0).unwrap();
        assert_relative_eq!(p.volume(), 4.0 * PI * PI, max_relative = 1e-15);
        assert_relative_eq!(p.volume(), 39.47842, epsilon = 1e-5);
        assert_relative_eq!(p.boundary_area(), 78.95684, epsilon = 1e-5);
        let p = TorusParams::new(3.0, 1.0).unwrap();
        assert_relative_eq!(p.volume(), 59.21762, epsilon = 1e-5);
        let p = TorusParams::new(3.0, 2.0).unwrap();
        assert_relative_eq!(p.boundary_area(), 236.8705, epsilon = 1e-4);
    }

    #[test]
    fn chart_examples() {
        let p = TorusParams::new(2.0, 1.0).unwrap();
        let c = chart_forward(&p, &TorusPoint::new(3.0, 0.0, 0.0), Chart::Second).unwrap();
        assert_eq!((c.omega, c.t, c.s), (0.0, 1.0, 0.0));
        let c = chart_forward(&p, &TorusPoint::new(0.0, 2.0, 1.0), Chart::First).unwrap();
        assert_relative_eq!(c.omega, PI / 2.0);
        assert_relative_eq!(c.t, 0.0);
        assert_relative_eq!(c.s, 1.0);
        // excluded half-planes
        assert_eq!(
            chart_forward(&p, &TorusPoint::new(3.0, 0.0, 0.0), Chart::First),
            Err(Error::ChartDomain { chart: 1 })
        );
        assert_eq!(
            chart_forward(&p, &TorusPoint::new(-2.0, 0.0, 0.5), Chart::Second),
            Err(Error::ChartDomain { chart: 2 })
        );
        let c = chart_forward(&p, &TorusPoint::new(-2.0, 0.0, 0.5), Chart::First).unwrap();
        assert_relative_eq!(c.omega, PI);
        assert!(chart_forward(&p, &TorusPoint::new(0.0, 0.0, 0.0), Chart::First).is_err());
    }

    #[test]
    fn metric_weight_examples() {
        let p = TorusParams::new(2.0, 1.0).unwrap();
        assert_eq!(p.metric_weight(0.0), 2.0);
        assert_eq!(p.metric_weight(-1.0), 1.0);
        assert_eq!(p.metric_weight(1.0), 3.0);
    }

    #[test]
    fn orbit_distance_examples() {
        let p = TorusParams::new(2.0, 1.0).unwrap();
        let o = Orbit::new(1.0, 0.0).unwrap();
        assert_eq!(orbit_distance(&TorusPoint::new(2.0, 0.0, 0.0), &o), 1.0);
        assert_eq!(orbit_distance(&TorusPoint::new(0.0, -1.0, 0.0), &o), 0.0);
        assert_eq!(Orbit::minimal(&p), o);
    }

    fn interior_point() -> impl Strategy<Value = (f64, f64, f64, f64, f64)> {
        (1.1f64..5.0, 0.1f64..1.0, 0.0f64..1.0, 0.0f64..(2.0 * PI), -PI..PI)
            .prop_map(|(l_over_r, r, rad, th, om)| (l_over_r * r, r, rad, th, om))
    }

    proptest! {
        #[test]
        fn chart_roundtrip((l, r, rad, th, om) in interior_point()) {
            let p = TorusParams::new(l, r).unwrap();
            let q = chart_inverse(&p, &ChartCoords { omega: om, t: rad * th.cos(), s: rad * th.sin() });
            for chart in [Chart::First, Chart::Second] {
                if let Ok(c) = chart_forward(&p, &q, chart) {
                    prop_assert!(c.t * c.t + c.s * c.s <= 1.0 + 1e-12);
                    let back = chart_inverse(&p, &c);
                    let err = ((back.x - q.x).powi(2) + (back.y - q.y).powi(2) + (back.z - q.z).powi(2)).sqrt();
                    prop_assert!(err < 1e-10 * r);
                }
            }
        }

        #[test]
        fn minimal_orbit_distance_in_chart_coords((l, r, rad, th, om) in interior_point()) {
            let p = TorusParams::new(l, r).unwrap();
            let (t, s) = (rad * th.cos(), rad * th.sin());
            let q = chart_inverse(&p, &ChartCoords { omega: om, t, s });
            let d = orbit_distance(&q, &Orbit::minimal(&p));
            prop_assert!((d - r * ((t + 1.0).powi(2) + s * s).sqrt()).abs() < 1e-12 * l.max(1.0));
        }

        #[test]
        fn orbit_distance_rotation_invariant((l, r, rad, th, om) in interior_point(), angle in -10.0f64..10.0) {
            let p = TorusParams::new(l, r).unwrap();
            let q = chart_inverse(&p, &ChartCoords { omega: om, t: rad * th.cos(), s: rad * th.sin() });
            let o = Orbit::new(l * 0.9, 0.1 * r).unwrap();
            prop_assert!((orbit_distance(&q, &o) - orbit_distance(&q.rotated(angle), &o)).abs() < 1e-12 * l.max(1.0));
        }

        #[test]
        fn metric_weight_positive(l_over_r in 1.0001f64..10.0, r in 1e-3f64..10.0, t in -1.0f64..=1.0) {
            let p = TorusParams::new(l_over_r * r, r).unwrap();
            prop_assert!(p.metric_weight(t) > 0.0);
        }
    }
}
