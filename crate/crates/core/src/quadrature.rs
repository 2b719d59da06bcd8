//! Gauss-Legendre rules and geodesic-polar quadrature on the model geometries.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::sync::{Arc, Mutex, OnceLock};

use gauss_quad::GaussLegendre;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BallPoint, ModelGeometry, C64};

const MAX_DOUBLINGS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadScheme {
    /// Fixed tensor rule; the error is estimated by one resolution doubling.
    TensorGauss,
    /// Doubles the resolution until the doubling difference meets the tolerance.
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub scheme: QuadScheme,
    /// Radial Gauss nodes; the angular direction uses twice as many.
    pub points: usize,
    pub tolerance: f64,
}

impl QuadratureSpec {
    pub fn new(scheme: QuadScheme, points: usize, tolerance: f64) -> Result<Self> {
        let q = QuadratureSpec { scheme, points, tolerance };
        q.validate()?;
        Ok(q)
    }

    pub fn tensor(points: usize, tolerance: f64) -> Result<Self> {
        Self::new(QuadScheme::TensorGauss, points, tolerance)
    }

    pub fn adaptive(points: usize, tolerance: f64) -> Result<Self> {
        Self::new(QuadScheme::Adaptive, points, tolerance)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::Config(format!("quadrature tolerance must be positive, got {}", self.tolerance)));
        }
        if self.points < 2 || self.points > 4096 {
            return Err(Error::Config(format!("quadrature points {} outside [2, 4096]", self.points)));
        }
        Ok(())
    }

    /// Same scheme at twice the resolution.
    pub fn doubled(&self) -> Self {
        QuadratureSpec { points: self.points * 2, ..*self }
    }
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Arc<Vec<(f64, f64)>> {
    type Rules = HashMap<usize, Arc<Vec<(f64, f64)>>>;
    static CACHE: OnceLock<Mutex<Rules>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().expect("quadrature cache poisoned");
    map.entry(n)
        .or_insert_with(|| {
            let rule = GaussLegendre::new(n.max(2)).expect("Gauss-Legendre degree is at least 2");
            let mut nodes: Vec<(f64, f64)> = rule.into_node_weight_pairs();
            nodes.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            Arc::new(nodes)
        })
        .clone()
}

/// Gauss-Legendre nodes and weights mapped to `[a, b]`.
pub fn gauss_interval(a: f64, b: f64, n: usize) -> Vec<(f64, f64)> {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    gauss_legendre(n).iter().map(|&(x, w)| (mid + half * x, half * w)).collect()
}

/// Moves `w` by the ball isometry sending `0` to `c`.
pub fn ball_translate(c: C64, w: C64) -> C64 {
    (w + c) / (C64::new(1.0, 0.0) + c.conj() * w)
}

/// Quadrature nodes over the geodesic ball `B(center, radius)` with weights
/// for the Riemannian area: Gauss-Legendre in the polar radius and a
/// periodic trapezoid rule with `2 n_rho` nodes in the angle.
pub fn polar_nodes(geom: &ModelGeometry, center: BallPoint, radius: f64, n_rho: usize) -> Vec<(BallPoint, f64)> {
    let n_alpha = 2 * n_rho;
    let dalpha = TAU / n_alpha as f64;
    let radial = gauss_interval(0.0, radius, n_rho);
    let mut out = Vec::with_capacity(n_rho * n_alpha);
    for &(rho, w) in &radial {
        let (r_model, jac) = if geom.is_hyperbolic() {
            ((rho / 2.0).tanh(), rho.sinh())
        } else {
            (rho, rho)
        };
        for j in 0..n_alpha {
            let alpha = dalpha * (j as f64 + 0.5);
            let local = C64::from_polar(r_model, alpha);
            let m = if geom.is_hyperbolic() { ball_translate(center.0, local) } else { center.0 + local };
            out.push((BallPoint(m), w * jac * dalpha));
        }
    }
    out
}

/// Outcome of a scalar quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadResult {
    pub value: f64,
    /// `|I_2N - I_N|` for the finest pair of resolutions used.
    pub error: f64,
    pub points: usize,
}

/// Integrates `f` against the area over `B(center, radius)`.
pub fn integrate_ball<F>(geom: &ModelGeometry, center: BallPoint, radius: f64, spec: &QuadratureSpec, f: F) -> Result<QuadResult>
where
    F: Fn(BallPoint) -> f64 + Sync,
{
    spec.validate()?;
    let eval = |n: usize| -> f64 {
        let nodes = polar_nodes(geom, center, radius, n);
        let vals: Vec<f64> = nodes.par_iter().map(|(m, w)| w * f(*m)).collect();
        vals.iter().sum()
    };
    let mut n = spec.points;
    let mut coarse = eval(n);
    let mut fine = eval(2 * n);
    if spec.scheme == QuadScheme::Adaptive {
        let mut k = 0;
        while (fine - coarse).abs() > spec.tolerance * (1.0 + fine.abs()) && k < MAX_DOUBLINGS {
            n *= 2;
            coarse = fine;
            fine = eval(2 * n);
            k += 1;
        }
    }
    Ok(QuadResult { value: fine, error: (fine - coarse).abs(), points: 2 * n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn legendre_rule_is_exact_for_polynomials() {
        let nodes = gauss_interval(-1.0, 2.0, 6);
        let v: f64 = nodes.iter().map(|(x, w)| w * x.powi(11)).sum();
        assert_relative_eq!(v, (2f64.powi(12) - 1.0) / 12.0, max_relative = 1e-12);
    }

    #[test]
    fn hyperbolic_disk_area() {
        let geom = ModelGeometry::hyperbolic();
        let c = BallPoint::new(0.3, -0.4);
        let spec = QuadratureSpec::tensor(8, 1e-10).unwrap();
        let r = integrate_ball(&geom, c, 1.3, &spec, |_| 1.0).unwrap();
        let exact = 2.0 * std::f64::consts::PI * (1.3f64.cosh() - 1.0);
        assert_relative_eq!(r.value, exact, max_relative = 1e-12);
    }

    #[test]
    fn nodes_stay_inside_the_ball() {
        let geom = ModelGeometry::hyperbolic();
        let c = BallPoint::new(-0.5, 0.2);
        for (m, _) in polar_nodes(&geom, c, 2.0, 10) {
            let d = crate::geometry::hyp_distance(c, m).unwrap();
            assert!(d <= 2.0 + 1e-9);
        }
    }

    #[test]
    fn gaussian_moment_in_the_plane() {
        let geom = ModelGeometry::euclidean();
        let spec = QuadratureSpec::adaptive(8, 1e-12).unwrap();
        let r = integrate_ball(&geom, BallPoint::new(1.0, 1.0), 8.0, &spec, |m| {
            let d = m.0 - C64::new(1.0, 1.0);
            (-d.norm_sqr()).exp()
        })
        .unwrap();
        assert_relative_eq!(r.value, std::f64::consts::PI, max_relative = 1e-10);
        assert!(r.error < 1e-10);
    }

    #[test]
    fn tolerance_must_be_positive() {
        assert!(QuadratureSpec::tensor(8, 0.0).is_err());
        assert!(QuadratureSpec::tensor(1, 1e-3).is_err());
    }
}
