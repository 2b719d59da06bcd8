//! Model geometries: the Poincaré ball model of the hyperbolic plane and the
//! Euclidean plane.
//!
//! Points of the two-dimensional models are stored as complex numbers. In the
//! ball, the metric is `4|dq|^2 / (1 - |q|^2)^2`, boundary points live on the
//! unit circle, and covectors are stored by their Euclidean components (also
//! as a complex number). Hyperbolic geodesic flow is computed exactly by
//! representing unit tangent vectors as `SU(1,1)` frames, on which the flow is
//! right multiplication by a one-parameter group of boosts.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub(crate) const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GeometryKind {
    HyperbolicBall,
    EuclideanPlane,
}

/// A model geometry together with its boundary-defining-function threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelGeometry {
    pub kind: GeometryKind,
    /// Boundary dimension; the model has dimension `n + 1`.
    pub n: usize,
    pub epsilon0: f64,
}

/// Radius outside of which the Euclidean boundary defining function is `1/|m|`.
pub const EUCLIDEAN_R: f64 = 1.0;

impl ModelGeometry {
    pub fn new(kind: GeometryKind, n: usize, epsilon0: f64) -> Result<Self> {
        if n != 1 {
            return Err(Error::Unsupported(format!(
                "boundary dimension n = {n}; only n = 1 is implemented"
            )));
        }
        if !(epsilon0 > 0.0 && epsilon0.is_finite()) {
            return Err(Error::Config(format!("epsilon0 must be positive, got {epsilon0}")));
        }
        if kind == GeometryKind::HyperbolicBall && epsilon0 > 1.0 {
            return Err(Error::Config(format!(
                "hyperbolic epsilon0 must be at most 1, got {epsilon0}"
            )));
        }
        Ok(ModelGeometry { kind, n, epsilon0 })
    }

    pub fn hyperbolic() -> Self {
        ModelGeometry { kind: GeometryKind::HyperbolicBall, n: 1, epsilon0: 1.0 }
    }

    pub fn euclidean() -> Self {
        ModelGeometry { kind: GeometryKind::EuclideanPlane, n: 1, epsilon0: 0.5 / EUCLIDEAN_R }
    }

    pub fn is_hyperbolic(&self) -> bool {
        self.kind == GeometryKind::HyperbolicBall
    }

    /// Cometric norm `|nu|_g` at `m`.
    pub fn cometric_norm(&self, m: BallPoint, nu: C64) -> f64 {
        match self.kind {
            GeometryKind::HyperbolicBall => nu.norm() * (1.0 - m.0.norm_sqr()) / 2.0,
            GeometryKind::EuclideanPlane => nu.norm(),
        }
    }

    /// Conformal factor `rho` with `g = rho^2 |dm|^2`.
    pub fn conformal_factor(&self, m: BallPoint) -> f64 {
        match self.kind {
            GeometryKind::HyperbolicBall => 2.0 / (1.0 - m.0.norm_sqr()),
            GeometryKind::EuclideanPlane => 1.0,
        }
    }

    /// Boundary defining function: `x0` in the ball, `1/|m|` in the plane.
    pub fn boundary_defining(&self, m: BallPoint) -> f64 {
        match self.kind {
            GeometryKind::HyperbolicBall => x0(m),
            GeometryKind::EuclideanPlane => {
                let r = m.0.norm();
                if r <= EUCLIDEAN_R {
                    1.0 / EUCLIDEAN_R
                } else {
                    1.0 / r
                }
            }
        }
    }

    /// Time derivative of the boundary defining function along the flow.
    pub fn boundary_defining_rate(&self, z: &UnitPhasePoint) -> f64 {
        match self.kind {
            GeometryKind::HyperbolicBall => {
                // x0 = 2 exp(-d(0, q)), so d/dt x0 = -x0 * d/dt d(0, q).
                let q = z.m.0;
                let r = q.norm();
                if r == 0.0 {
                    return 0.0;
                }
                let v = velocity(self, z);
                let dr = (q.conj() * v).re / r;
                // d(0,q) = 2 artanh r
                let dd = 2.0 * dr / (1.0 - r * r);
                -x0(z.m) * dd
            }
            GeometryKind::EuclideanPlane => {
                let r = z.m.0.norm();
                if r <= EUCLIDEAN_R {
                    0.0
                } else {
                    -(z.m.0.conj() * z.nu).re / (r * r * r)
                }
            }
        }
    }

    /// Whether `(m, nu)` directly escapes in the forward direction.
    pub fn directly_escaping(&self, z: &UnitPhasePoint) -> bool {
        self.boundary_defining(z.m) <= self.epsilon0 && self.boundary_defining_rate(z) <= 0.0
    }

    /// Phase function `phi_xi(m)`: Busemann function or `m . xi`.
    pub fn phase(&self, xi: BoundaryPoint, m: BallPoint) -> Result<f64> {
        match self.kind {
            GeometryKind::HyperbolicBall => busemann(xi, m),
            GeometryKind::EuclideanPlane => Ok(euclid_phase(xi, m)),
        }
    }

    pub fn phase_gradient(&self, xi: BoundaryPoint, m: BallPoint) -> Result<C64> {
        match self.kind {
            GeometryKind::HyperbolicBall => busemann_gradient(xi, m),
            GeometryKind::EuclideanPlane => Ok(xi.0),
        }
    }

    /// Unit-speed geodesic flow `g^t`.
    pub fn geodesic(&self, z: &UnitPhasePoint, t: f64) -> UnitPhasePoint {
        match self.kind {
            GeometryKind::HyperbolicBall => Frame::from_phase(z).flow(t).to_phase(),
            GeometryKind::EuclideanPlane => {
                let dir = z.nu / z.nu.norm();
                UnitPhasePoint { m: BallPoint(z.m.0 + dir * t), nu: dir }
            }
        }
    }

    /// Forward endpoint of the geodesic through `z`.
    pub fn xi_plus_infinity(&self, z: &UnitPhasePoint) -> BoundaryPoint {
        match self.kind {
            GeometryKind::HyperbolicBall => Frame::from_phase(z).endpoint(),
            GeometryKind::EuclideanPlane => BoundaryPoint(z.nu / z.nu.norm()),
        }
    }

    /// The chart map `tau(m, xi) = (m, d_m phi_xi(m))`.
    pub fn tau(&self, m: BallPoint, xi: BoundaryPoint) -> Result<UnitPhasePoint> {
        Ok(UnitPhasePoint { m, nu: self.phase_gradient(xi, m)? })
    }

    /// Riemannian area density relative to `dx dy`.
    pub fn area_density(&self, m: BallPoint) -> f64 {
        let rho = self.conformal_factor(m);
        rho * rho
    }
}

/// A point of the model: `|q| < 1` in the ball, unconstrained in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallPoint(pub C64);

impl BallPoint {
    pub fn new(x: f64, y: f64) -> Self {
        BallPoint(C64::new(x, y))
    }

    pub fn origin() -> Self {
        BallPoint(C64::new(0.0, 0.0))
    }

    fn check_interior(self) -> Result<Self> {
        if self.0.norm_sqr() < 1.0 && self.0.re.is_finite() && self.0.im.is_finite() {
            Ok(self)
        } else {
            Err(Error::Domain(format!("point {} is not inside the unit ball", self.0)))
        }
    }
}

/// A point of the boundary circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint(pub C64);

impl BoundaryPoint {
    pub fn new(p: C64) -> Result<Self> {
        if (p.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("boundary point {p} is not on the unit circle")));
        }
        Ok(BoundaryPoint(p))
    }

    /// Normalizes an arbitrary nonzero vector onto the unit circle.
    pub fn from_direction(v: C64) -> Self {
        BoundaryPoint(v / v.norm())
    }

    pub fn from_angle(theta: f64) -> Self {
        BoundaryPoint(C64::from_polar(1.0, theta))
    }

    pub fn angle(self) -> f64 {
        self.0.arg()
    }
}

/// A point of the unit cotangent bundle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitPhasePoint {
    pub m: BallPoint,
    pub nu: C64,
}

impl UnitPhasePoint {
    /// Builds the unit covector at `m` pointing in Euclidean direction `theta`.
    pub fn from_angle(geom: &ModelGeometry, m: BallPoint, theta: f64) -> Self {
        let rho = geom.conformal_factor(m);
        UnitPhasePoint { m, nu: C64::from_polar(rho, theta) }
    }

    pub fn direction_angle(&self) -> f64 {
        self.nu.arg()
    }
}

fn velocity(geom: &ModelGeometry, z: &UnitPhasePoint) -> C64 {
    let rho = geom.conformal_factor(z.m);
    z.nu / (rho * rho)
}

/// Busemann function `log((1 - |q|^2) / |q - p|^2)` of the ball.
pub fn busemann(p: BoundaryPoint, q: BallPoint) -> Result<f64> {
    let q = q.check_interior()?;
    Ok(((1.0 - q.0.norm_sqr()) / (q.0 - p.0).norm_sqr()).ln())
}

/// Euclidean gradient (the covector components) of the Busemann function.
pub fn busemann_gradient(p: BoundaryPoint, q: BallPoint) -> Result<C64> {
    let q = q.check_interior()?;
    let d = q.0 - p.0;
    Ok(-2.0 * q.0 / (1.0 - q.0.norm_sqr()) - 2.0 * d / d.norm_sqr())
}

/// Linear phase `m . xi` of the Euclidean plane wave.
pub fn euclid_phase(xi: BoundaryPoint, m: BallPoint) -> f64 {
    (m.0.conj() * xi.0).re
}

/// Hyperbolic distance in the ball model.
pub fn hyp_distance(q: BallPoint, q2: BallPoint) -> Result<f64> {
    let q = q.check_interior()?;
    let q2 = q2.check_interior()?;
    let s = (q.0 - q2.0).norm() / ((1.0 - q.0.norm_sqr()) * (1.0 - q2.0.norm_sqr())).sqrt();
    Ok(2.0 * s.asinh())
}

/// Boundary defining function `x0 = 2 (1 - |q|) / (1 + |q|)` of the ball.
pub fn x0(q: BallPoint) -> f64 {
    let r = q.0.norm();
    2.0 * (1.0 - r) / (1.0 + r)
}

/// An element of `SU(1,1)`, `[[alpha, beta], [conj(beta), conj(alpha)]]`,
/// acting on the ball by `q -> (alpha q + beta) / (conj(beta) q + conj(alpha))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Su11 {
    pub alpha: C64,
    pub beta: C64,
}

impl Su11 {
    pub const IDENTITY: Su11 = Su11 { alpha: C64::new(1.0, 0.0), beta: C64::new(0.0, 0.0) };

    /// Conjugates a real unimodular matrix acting on the upper half-plane to
    /// the ball through the Cayley map `z -> (z - i) / (z + i)`.
    pub fn from_sl2r(a: f64, b: f64, c: f64, d: f64) -> Self {
        Su11 {
            alpha: C64::new((a + d) / 2.0, (b - c) / 2.0),
            beta: C64::new((a - d) / 2.0, -(b + c) / 2.0),
        }
    }

    /// Inverse of [`Su11::from_sl2r`].
    pub fn to_sl2r(&self) -> [f64; 4] {
        let (al, be) = (self.alpha, self.beta);
        [al.re + be.re, al.im - be.im, -al.im - be.im, al.re - be.re]
    }

    pub fn det(&self) -> f64 {
        self.alpha.norm_sqr() - self.beta.norm_sqr()
    }

    /// Rescales to unit determinant. Large elements are returned unchanged:
    /// their determinant cannot be recomputed accurately from the entries.
    pub fn normalized(self) -> Self {
        if self.alpha.norm_sqr() > 1e4 {
            return self;
        }
        let s = self.det().sqrt();
        Su11 { alpha: self.alpha / s, beta: self.beta / s }
    }

    pub fn inverse(&self) -> Self {
        Su11 { alpha: self.alpha.conj(), beta: -self.beta }
    }

    pub fn compose(&self, other: &Su11) -> Su11 {
        Su11 {
            alpha: self.alpha * other.alpha + self.beta * other.beta.conj(),
            beta: self.alpha * other.beta + self.beta * other.alpha.conj(),
        }
    }

    pub fn act(&self, q: C64) -> C64 {
        (self.alpha * q + self.beta) / (self.beta.conj() * q + self.alpha.conj())
    }

    /// Complex derivative of the action at `q`.
    pub fn derivative(&self, q: C64) -> C64 {
        let den = self.beta.conj() * q + self.alpha.conj();
        1.0 / (den * den)
    }

    /// `cosh d(0, g 0)`.
    pub fn cosh_displacement(&self) -> f64 {
        self.alpha.norm_sqr() + self.beta.norm_sqr()
    }

    pub fn trace(&self) -> f64 {
        2.0 * self.alpha.re
    }
}

/// An orientation-preserving isometry of the hyperbolic plane.
///
/// Built from a real unimodular matrix acting on the upper half-plane; the
/// ball action is its Cayley conjugate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Isometry {
    matrix: [f64; 4],
    ball: Su11,
    inverse: Su11,
}

impl Isometry {
    pub fn identity() -> Self {
        Isometry { matrix: [1.0, 0.0, 0.0, 1.0], ball: Su11::IDENTITY, inverse: Su11::IDENTITY }
    }

    /// Accepts a real matrix `[a, b, c, d]` (row-major) with determinant close
    /// to one and rescales it to determinant exactly one.
    pub fn from_matrix(m: [f64; 4]) -> Result<Self> {
        let det = m[0] * m[3] - m[1] * m[2];
        if !det.is_finite() || m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidIsometry("non-finite matrix entries".into()));
        }
        if det <= 0.0 || (det - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidIsometry(format!(
                "matrix {m:?} has determinant {det}, expected 1"
            )));
        }
        let s = det.sqrt();
        let m = [m[0] / s, m[1] / s, m[2] / s, m[3] / s];
        let ball = Su11::from_sl2r(m[0], m[1], m[2], m[3]);
        Ok(Isometry { matrix: m, ball, inverse: ball.inverse() })
    }

    pub fn from_su11(g: Su11) -> Self {
        let g = g.normalized();
        Isometry { matrix: g.to_sl2r(), ball: g, inverse: g.inverse() }
    }

    /// Hyperbolic translation of length `len` along the diameter through
    /// `exp(i angle)` (moving toward that boundary point).
    pub fn translation(len: f64, angle: f64) -> Self {
        let rot = C64::from_polar(1.0, angle);
        Isometry::from_su11(Su11 {
            alpha: C64::new((len / 2.0).cosh(), 0.0),
            beta: rot * (len / 2.0).sinh(),
        })
    }

    pub fn matrix(&self) -> [f64; 4] {
        self.matrix
    }

    pub fn su11(&self) -> &Su11 {
        &self.ball
    }

    pub fn det(&self) -> f64 {
        self.matrix[0] * self.matrix[3] - self.matrix[1] * self.matrix[2]
    }

    pub fn inverse(&self) -> Isometry {
        Isometry {
            matrix: [self.matrix[3], -self.matrix[1], -self.matrix[2], self.matrix[0]],
            ball: self.inverse,
            inverse: self.ball,
        }
    }

    pub fn compose(&self, other: &Isometry) -> Isometry {
        let (a, b) = (self.matrix, other.matrix);
        let matrix = [
            a[0] * b[0] + a[1] * b[2],
            a[0] * b[1] + a[1] * b[3],
            a[2] * b[0] + a[3] * b[2],
            a[2] * b[1] + a[3] * b[3],
        ];
        let ball = self.ball.compose(&other.ball);
        Isometry { matrix, ball, inverse: ball.inverse() }
    }

    pub fn apply(&self, q: BallPoint) -> BallPoint {
        BallPoint(self.ball.act(q.0))
    }

    pub fn apply_inverse(&self, q: BallPoint) -> BallPoint {
        BallPoint(self.inverse.act(q.0))
    }

    pub fn boundary_action(&self, p: BoundaryPoint) -> BoundaryPoint {
        BoundaryPoint::from_direction(self.ball.act(p.0))
    }

    /// Euclidean norm `|d gamma(p)|` of the boundary differential.
    pub fn boundary_derivative_norm(&self, p: BoundaryPoint) -> f64 {
        self.ball.derivative(p.0).norm()
    }

    /// Pushes a phase point forward: `(m, nu) -> (gamma m, (d gamma nu^*)^*)`.
    pub fn apply_phase(&self, z: &UnitPhasePoint) -> UnitPhasePoint {
        let d = self.ball.derivative(z.m.0);
        UnitPhasePoint { m: self.apply(z.m), nu: z.nu / d.conj() }
    }

    /// `cosh d(o, gamma o)` for a basepoint `o`.
    pub fn cosh_displacement(&self, o: BallPoint) -> f64 {
        if o.0 == C64::new(0.0, 0.0) {
            return self.ball.cosh_displacement();
        }
        let go = self.apply(o).0;
        let num = 2.0 * (go - o.0).norm_sqr();
        1.0 + num / ((1.0 - o.0.norm_sqr()) * (1.0 - go.norm_sqr()))
    }

    /// Fixed points on the boundary (repelling, attracting) of a hyperbolic
    /// element; `None` for elliptic, parabolic or identity elements.
    pub fn fixed_points(&self) -> Option<(BoundaryPoint, BoundaryPoint)> {
        let [a, b, c, d] = self.matrix;
        let tr = a + d;
        if tr.abs() <= 2.0 + 1e-12 {
            return None;
        }
        // Fixed points of z -> (az+b)/(cz+d) on the real line (or infinity).
        let disc = ((a - d) * (a - d) + 4.0 * b * c).sqrt();
        let uhp_fixed: Vec<Option<f64>> = if c.abs() > 1e-300 {
            vec![Some((a - d + disc) / (2.0 * c)), Some((a - d - disc) / (2.0 * c))]
        } else {
            vec![None, Some(b / (d - a))]
        };
        let to_ball = |x: Option<f64>| match x {
            None => BoundaryPoint(C64::new(1.0, 0.0)),
            Some(x) => BoundaryPoint::from_direction((C64::new(x, 0.0) - I) / (C64::new(x, 0.0) + I)),
        };
        let p0 = to_ball(uhp_fixed[0]);
        let p1 = to_ball(uhp_fixed[1]);
        // Attracting point has derivative norm < 1.
        if self.boundary_derivative_norm(p0) < 1.0 {
            Some((p1, p0))
        } else {
            Some((p0, p1))
        }
    }
}

/// A unit tangent frame of the hyperbolic plane, stored as an `SU(1,1)`
/// element `g` with base point `g(0)` and velocity `d g_0 (1/2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame(pub Su11);

impl Frame {
    pub fn from_phase(z: &UnitPhasePoint) -> Frame {
        let q = z.m.0;
        let one_minus = 1.0 - q.norm_sqr();
        // velocity v = nu / rho^2 and rho = 2 / (1 - |q|^2)
        let v = z.nu * (one_minus * one_minus / 4.0);
        // Normalize to unit hyperbolic speed: |v| = (1 - |q|^2)/2.
        let v = v / v.norm() * (one_minus / 2.0);
        let alpha_bar = (1.0 / (2.0 * v)).sqrt();
        let alpha = alpha_bar.conj();
        let beta = q * alpha_bar;
        Frame(Su11 { alpha, beta }.normalized())
    }

    pub fn to_phase(&self) -> UnitPhasePoint {
        let g = self.0;
        let q = g.beta / g.alpha.conj();
        let one_minus = 1.0 / g.alpha.norm_sqr();
        let v = 1.0 / (2.0 * g.alpha.conj() * g.alpha.conj());
        let nu = v * (4.0 / (one_minus * one_minus));
        UnitPhasePoint { m: BallPoint(q), nu }
    }

    pub fn base(&self) -> BallPoint {
        BallPoint(self.0.beta / self.0.alpha.conj())
    }

    /// `1 - |q|^2` of the base point, computed without cancellation.
    pub fn one_minus_r2(&self) -> f64 {
        1.0 / self.0.alpha.norm_sqr()
    }

    pub fn flow(&self, t: f64) -> Frame {
        let boost = Su11 {
            alpha: C64::new((t / 2.0).cosh(), 0.0),
            beta: C64::new((t / 2.0).sinh(), 0.0),
        };
        Frame(self.0.compose(&boost))
    }

    pub fn endpoint(&self) -> BoundaryPoint {
        let g = self.0;
        BoundaryPoint::from_direction((g.alpha + g.beta) / (g.beta.conj() + g.alpha.conj()))
    }

    pub fn backward_endpoint(&self) -> BoundaryPoint {
        let g = self.0;
        BoundaryPoint::from_direction((g.beta - g.alpha) / (g.alpha.conj() - g.beta.conj()))
    }

    pub fn left_mul(&self, g: &Su11) -> Frame {
        Frame(g.compose(&self.0))
    }

    pub fn renormalized(&self) -> Frame {
        Frame(self.0.normalized())
    }
}
