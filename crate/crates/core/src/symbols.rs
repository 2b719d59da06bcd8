//! Compactly supported test symbols on the cotangent bundle.
//!
//! Symbols are real valued. A [`ProductSymbol`] is a smooth bump in the base
//! point times a profile in the covector direction and a window in the
//! covector length. On a quotient, a symbol is represented by its values on
//! the fundamental domain and must be supported strictly inside it.

use std::f64::consts::{PI, TAU};
use std::fmt::Debug;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{hyp_distance, BallPoint, ModelGeometry, UnitPhasePoint, C64};
use crate::schottky::SchottkyGroup;

/// Geodesic ball in the base outside of which a symbol vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportBall {
    pub center: BallPoint,
    pub radius: f64,
}

pub trait Symbol: Send + Sync + Debug {
    fn geometry(&self) -> &ModelGeometry;

    /// `a(m, nu)` for an arbitrary covector.
    fn eval(&self, m: BallPoint, nu: C64) -> f64;

    fn support(&self) -> SupportBall;

    fn sup_norm(&self) -> f64;

    /// Number of continuous derivatives across the support boundary.
    fn smoothness(&self) -> u32;

    /// Interval of `|nu|_g` outside of which the symbol vanishes, if any.
    fn fiber_window(&self) -> Option<(f64, f64)>;

    fn eval_phase(&self, z: &UnitPhasePoint) -> f64 {
        self.eval(z.m, z.nu)
    }
}

/// Model distance between two base points.
pub fn model_distance(geom: &ModelGeometry, a: BallPoint, b: BallPoint) -> f64 {
    if geom.is_hyperbolic() {
        hyp_distance(a, b).unwrap_or(f64::INFINITY)
    } else {
        (a.0 - b.0).norm()
    }
}

/// Whether the closed geodesic ball lies in the interior of the fundamental domain.
pub fn ball_inside_domain(grp: &SchottkyGroup, center: BallPoint, radius: f64) -> bool {
    if center.0.norm_sqr() >= 1.0 {
        return false;
    }
    grp.disk_pairs()
        .iter()
        .flat_map(|(a, b)| [a, b])
        .all(|d| d.signed_distance(center.0) > radius)
}

fn wrap_angle(x: f64) -> f64 {
    (x + PI).rem_euclid(TAU) - PI
}

fn bump(u: f64, power: u32) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - u * u).powi(power as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AngularProfile {
    Isotropic,
    /// `(1 - (d/width)^2)^power` in the angular distance `d` to `center`.
    Bump { center: f64, width: f64, power: u32 },
    /// `1 + amplitude cos(harmonic theta + phase)`.
    Fourier { amplitude: f64, harmonic: u32, phase: f64 },
}

impl AngularProfile {
    pub fn eval(&self, theta: f64) -> f64 {
        match *self {
            AngularProfile::Isotropic => 1.0,
            AngularProfile::Bump { center, width, power } => bump(wrap_angle(theta - center) / width, power),
            AngularProfile::Fourier { amplitude, harmonic, phase } => {
                1.0 + amplitude * (harmonic as f64 * theta + phase).cos()
            }
        }
    }

    fn sup(&self) -> f64 {
        match *self {
            AngularProfile::Isotropic | AngularProfile::Bump { .. } => 1.0,
            AngularProfile::Fourier { amplitude, .. } => 1.0 + amplitude.abs(),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            AngularProfile::Bump { width, .. } if !(width > 0.0 && width <= PI) => {
                Err(Error::Config(format!("angular bump width {width} must lie in (0, pi]")))
            }
            AngularProfile::Fourier { harmonic: 0, .. } => Err(Error::Config("Fourier harmonic must be positive".into())),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RadialProfile {
    /// Homogeneous of degree zero in the covector.
    Constant,
    /// `(1 - ((|nu|_g - 1)/width)^2)^power` around the unit cosphere.
    Window { width: f64, power: u32 },
    /// The window above times `exp(-(|nu|_g - 1)^2 / (2 sigma^2))`.
    GaussianWindow { sigma: f64, width: f64, power: u32 },
}

/// `amplitude * chi(d(m, center)) * A(arg nu) * R(|nu|_g)` with
/// `chi(d) = (1 - (d/radius)^2)^power`, optionally times a Gaussian in `d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProductSymbol {
    pub geometry: ModelGeometry,
    pub center: BallPoint,
    pub radius: f64,
    pub power: u32,
    #[serde(default)]
    pub gaussian_sigma: Option<f64>,
    pub angular: AngularProfile,
    pub radial: RadialProfile,
    #[serde(default = "one")]
    pub amplitude: f64,
}

fn one() -> f64 {
    1.0
}

impl ProductSymbol {
    pub fn new(geometry: ModelGeometry, center: BallPoint, radius: f64, power: u32) -> Result<Self> {
        let s = ProductSymbol {
            geometry,
            center,
            radius,
            power,
            gaussian_sigma: None,
            angular: AngularProfile::Isotropic,
            radial: RadialProfile::Constant,
            amplitude: 1.0,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_angular(mut self, angular: AngularProfile) -> Result<Self> {
        self.angular = angular;
        self.validate()?;
        Ok(self)
    }

    pub fn with_radial(mut self, radial: RadialProfile) -> Result<Self> {
        self.radial = radial;
        self.validate()?;
        Ok(self)
    }

    pub fn with_gaussian(mut self, sigma: f64) -> Result<Self> {
        self.gaussian_sigma = Some(sigma);
        self.validate()?;
        Ok(self)
    }

    pub fn scaled(mut self, amplitude: f64) -> Self {
        self.amplitude *= amplitude;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::Config(format!("symbol radius {} must be positive", self.radius)));
        }
        if self.power < 1 {
            return Err(Error::Config("symbol bump power must be at least 1".into()));
        }
        if self.geometry.is_hyperbolic() && self.center.0.norm_sqr() >= 1.0 {
            return Err(Error::Domain(format!("symbol center {} is outside the ball", self.center.0)));
        }
        if let Some(s) = self.gaussian_sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("Gaussian width {s} must be positive")));
            }
        }
        match self.radial {
            RadialProfile::Constant => {}
            RadialProfile::Window { width, .. } | RadialProfile::GaussianWindow { width, .. } => {
                if !(width > 0.0 && width < 1.0) {
                    return Err(Error::Config(format!("fiber window width {width} must lie in (0, 1)")));
                }
            }
        }
        if let RadialProfile::GaussianWindow { sigma, .. } = self.radial {
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(Error::Config(format!("fiber window sigma {sigma} must be positive")));
            }
        }
        if !self.amplitude.is_finite() {
            return Err(Error::Config("symbol amplitude must be finite".into()));
        }
        self.angular.validate()
    }

    /// The base factor `chi` (with the Gaussian, if any) at distance `d`.
    pub fn base_profile(&self, d: f64) -> f64 {
        let mut v = bump(d / self.radius, self.power);
        if let Some(s) = self.gaussian_sigma {
            v *= (-d * d / (2.0 * s * s)).exp();
        }
        v
    }

    pub fn radial_profile(&self, len: f64) -> f64 {
        match self.radial {
            RadialProfile::Constant => 1.0,
            RadialProfile::Window { width, power } => bump((len - 1.0) / width, power),
            RadialProfile::GaussianWindow { sigma, width, power } => {
                let x = len - 1.0;
                bump(x / width, power) * (-x * x / (2.0 * sigma * sigma)).exp()
            }
        }
    }
}

impl Symbol for ProductSymbol {
    fn geometry(&self) -> &ModelGeometry {
        &self.geometry
    }

    fn eval(&self, m: BallPoint, nu: C64) -> f64 {
        let d = model_distance(&self.geometry, m, self.center);
        if d >= self.radius {
            return 0.0;
        }
        let base = self.base_profile(d);
        let len = self.geometry.cometric_norm(m, nu);
        let radial = self.radial_profile(len);
        if radial == 0.0 {
            return 0.0;
        }
        let angular = if nu == C64::new(0.0, 0.0) { self.angular.eval(0.0) } else { self.angular.eval(nu.arg()) };
        self.amplitude * base * angular * radial
    }

    fn support(&self) -> SupportBall {
        SupportBall { center: self.center, radius: self.radius }
    }

    fn sup_norm(&self) -> f64 {
        self.amplitude.abs() * self.angular.sup()
    }

    fn smoothness(&self) -> u32 {
        self.power.saturating_sub(1)
    }

    fn fiber_window(&self) -> Option<(f64, f64)> {
        match self.radial {
            RadialProfile::Constant => None,
            RadialProfile::Window { width, .. } | RadialProfile::GaussianWindow { width, .. } => {
                Some((1.0 - width, 1.0 + width))
            }
        }
    }
}

/// `a o g^t`, with the flow extended homogeneously off the unit cosphere.
///
/// On a quotient the composition is evaluated in the lift, which is valid
/// when `B(center, radius + |t|)` lies inside the fundamental domain; the
/// constructor checks this.
#[derive(Debug, Clone)]
pub struct FlowComposed {
    inner: Arc<dyn Symbol>,
    t: f64,
}

impl FlowComposed {
    pub fn new(inner: Arc<dyn Symbol>, t: f64, grp: &SchottkyGroup) -> Result<Self> {
        if !t.is_finite() {
            return Err(Error::Config("flow time must be finite".into()));
        }
        let s = inner.support();
        if inner.geometry().is_hyperbolic() && grp.rank() > 0 && !ball_inside_domain(grp, s.center, s.radius + t.abs()) {
            return Err(Error::Domain(format!(
                "support ball of radius {} + |t| = {} around {} leaves the fundamental domain",
                s.radius,
                t.abs(),
                s.center.0
            )));
        }
        Ok(FlowComposed { inner, t })
    }

    pub fn time(&self) -> f64 {
        self.t
    }
}

impl Symbol for FlowComposed {
    fn geometry(&self) -> &ModelGeometry {
        self.inner.geometry()
    }

    fn eval(&self, m: BallPoint, nu: C64) -> f64 {
        let geom = self.inner.geometry();
        if model_distance(geom, m, self.inner.support().center) >= self.inner.support().radius + self.t.abs() {
            return 0.0;
        }
        let len = geom.cometric_norm(m, nu);
        if len == 0.0 {
            return self.inner.eval(m, nu);
        }
        let z = UnitPhasePoint { m, nu: nu / len };
        let w = geom.geodesic(&z, self.t);
        let w_len = geom.cometric_norm(w.m, w.nu);
        self.inner.eval(w.m, w.nu * (len / w_len))
    }

    fn support(&self) -> SupportBall {
        let s = self.inner.support();
        SupportBall { center: s.center, radius: s.radius + self.t.abs() }
    }

    fn sup_norm(&self) -> f64 {
        self.inner.sup_norm()
    }

    fn smoothness(&self) -> u32 {
        self.inner.smoothness()
    }

    fn fiber_window(&self) -> Option<(f64, f64)> {
        self.inner.fiber_window()
    }
}

/// `sum_i c_i a_i`.
#[derive(Debug, Clone)]
pub struct LinearCombination {
    terms: Vec<(f64, Arc<dyn Symbol>)>,
    support: SupportBall,
}

impl LinearCombination {
    pub fn new(terms: Vec<(f64, Arc<dyn Symbol>)>) -> Result<Self> {
        let Some((_, first)) = terms.first() else {
            return Err(Error::Config("a linear combination needs at least one term".into()));
        };
        let geom = *first.geometry();
        if terms.iter().any(|(_, s)| *s.geometry() != geom) {
            return Err(Error::Config("combined symbols live on different geometries".into()));
        }
        let center = first.support().center;
        let radius = terms
            .iter()
            .map(|(_, s)| model_distance(&geom, center, s.support().center) + s.support().radius)
            .fold(0.0, f64::max);
        Ok(LinearCombination { terms, support: SupportBall { center, radius } })
    }
}

impl Symbol for LinearCombination {
    fn geometry(&self) -> &ModelGeometry {
        self.terms[0].1.geometry()
    }

    fn eval(&self, m: BallPoint, nu: C64) -> f64 {
        self.terms.iter().map(|(c, s)| c * s.eval(m, nu)).sum()
    }

    fn support(&self) -> SupportBall {
        self.support
    }

    fn sup_norm(&self) -> f64 {
        self.terms.iter().map(|(c, s)| c.abs() * s.sup_norm()).sum()
    }

    fn smoothness(&self) -> u32 {
        self.terms.iter().map(|(_, s)| s.smoothness()).min().unwrap_or(0)
    }

    fn fiber_window(&self) -> Option<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for (_, s) in &self.terms {
            let (a, b) = s.fiber_window()?;
            lo = lo.min(a);
            hi = hi.max(b);
        }
        Some((lo, hi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn sample() -> ProductSymbol {
        ProductSymbol::new(ModelGeometry::hyperbolic(), BallPoint::new(0.2, 0.1), 0.8, 3)
            .unwrap()
            .with_angular(AngularProfile::Bump { center: 0.5, width: 1.0, power: 2 })
            .unwrap()
            .with_radial(RadialProfile::Window { width: 0.3, power: 2 })
            .unwrap()
    }

    #[test]
    fn peak_value_and_window() {
        let a = sample();
        let geom = ModelGeometry::hyperbolic();
        let z = UnitPhasePoint::from_angle(&geom, a.center, 0.5);
        assert_abs_diff_eq!(a.eval_phase(&z), 1.0, epsilon = 1e-14);
        assert_eq!(a.eval(a.center, z.nu * 1.5), 0.0);
        assert_eq!(a.fiber_window(), Some((0.7, 1.3)));
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let g = ModelGeometry::hyperbolic();
        assert!(ProductSymbol::new(g, BallPoint::new(0.0, 0.0), -1.0, 2).is_err());
        assert!(ProductSymbol::new(g, BallPoint::new(1.0, 0.0), 1.0, 2).is_err());
        assert!(ProductSymbol::new(g, BallPoint::new(0.0, 0.0), 1.0, 0).is_err());
        let a = ProductSymbol::new(g, BallPoint::new(0.0, 0.0), 1.0, 2).unwrap();
        assert!(a.with_angular(AngularProfile::Bump { center: 0.0, width: 0.0, power: 2 }).is_err());
    }

    #[test]
    fn flow_composition_needs_room_in_the_domain() {
        let grp = SchottkyGroup::cyclic(2.0).unwrap();
        let a: Arc<dyn Symbol> = Arc::new(ProductSymbol::new(ModelGeometry::hyperbolic(), BallPoint::new(0.0, 0.0), 0.3, 2).unwrap());
        assert!(FlowComposed::new(a.clone(), 0.5, &grp).is_ok());
        assert!(FlowComposed::new(a, 5.0, &grp).is_err());
    }

    #[test]
    fn flow_composition_moves_the_bump() {
        let geom = ModelGeometry::hyperbolic();
        let a: Arc<dyn Symbol> = Arc::new(ProductSymbol::new(geom, BallPoint::new(0.0, 0.0), 0.5, 2).unwrap());
        let b = FlowComposed::new(a.clone(), 1.0, &SchottkyGroup::trivial()).unwrap();
        // the point one unit behind the origin flows onto the peak
        let back = geom.geodesic(&UnitPhasePoint::from_angle(&geom, BallPoint::origin(), 0.3), -1.0);
        assert_abs_diff_eq!(b.eval_phase(&back), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn combination_is_linear() {
        let g = ModelGeometry::euclidean();
        let a: Arc<dyn Symbol> = Arc::new(ProductSymbol::new(g, BallPoint::new(0.0, 0.0), 1.0, 2).unwrap());
        let b: Arc<dyn Symbol> = Arc::new(ProductSymbol::new(g, BallPoint::new(1.5, 0.0), 1.0, 2).unwrap());
        let c = LinearCombination::new(vec![(2.0, a.clone()), (-0.5, b.clone())]).unwrap();
        assert_abs_diff_eq!(c.support().radius, 2.5, epsilon = 1e-15);
        let m = BallPoint::new(0.8, 0.1);
        let nu = C64::new(0.0, 1.0);
        assert_abs_diff_eq!(c.eval(m, nu), 2.0 * a.eval(m, nu) - 0.5 * b.eval(m, nu), epsilon = 1e-15);
        assert_abs_diff_eq!(c.sup_norm(), 2.5, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn vanishes_outside_support_and_respects_sup(x in -0.95f64..0.95, y in -0.95f64..0.95, th in -4.0f64..4.0, s in 0.2f64..2.0) {
            prop_assume!(x * x + y * y < 0.95);
            let a = sample();
            let m = BallPoint::new(x, y);
            let geom = ModelGeometry::hyperbolic();
            let nu = UnitPhasePoint::from_angle(&geom, m, th).nu * s;
            let v = a.eval(m, nu);
            prop_assert!(v.abs() <= a.sup_norm() + 1e-12);
            if model_distance(&geom, m, a.center) >= a.radius {
                prop_assert_eq!(v, 0.0);
            }
        }
    }
}
