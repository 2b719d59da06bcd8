//! Plane waves, semiclassical matrix elements and the leading Weyl term.
//!
//! Operators act in the Euclidean coordinates of the model and are
//! conjugated by the square root of the area density, so that
//! `<Op_h(a) E, E>` in `L^2(Vol)` equals the coordinate pairing of
//! `Op_h(a) w` with `w = rho E`. For a product symbol with a Gaussian fiber
//! window the kernel of `Op_h(a)` is `rho^2 chi(m) B(rho (m - m') / h) / h^2`
//! where `B` is the inverse Fourier transform of the fiber profile on the
//! unit cosphere. `B` is tabulated once per symbol through Bessel functions
//! and the matrix element becomes a smooth double integral in `m` and in the
//! rescaled offset `u = rho (m - m') / h`.

use std::f64::consts::TAU;

use puruspe::Jn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{busemann, euclid_phase, BallPoint, BoundaryPoint, ModelGeometry, C64};
use crate::measures::mu_xi;
use crate::quadrature::{gauss_interval, polar_nodes, QuadScheme, QuadratureSpec};
use crate::schottky::SchottkyGroup;
use crate::symbols::{model_distance, AngularProfile, ProductSymbol, RadialProfile, Symbol};

/// Minimum quadrature points per wavelength of the oscillatory integrand.
pub const MIN_POINTS_PER_WAVELENGTH: usize = 6;

const TABLE_STEP: f64 = 0.005;
const MAX_GRID_HALF_WIDTH: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuantizationConvention {
    Left,
    Weyl,
}

/// A plane wave in the plane or an Eisenstein function on the ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneWaveSpec {
    pub geometry: ModelGeometry,
    pub xi: BoundaryPoint,
    pub lambda: f64,
    pub h: f64,
}

impl PlaneWaveSpec {
    pub fn new(geometry: ModelGeometry, xi: BoundaryPoint, lambda: f64, h: f64) -> Result<Self> {
        let s = PlaneWaveSpec { geometry, xi, lambda, h };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.5..=2.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda {} outside [1/2, 2]", self.lambda)));
        }
        if !(self.h > 0.0 && self.h <= 0.5) {
            return Err(Error::Config(format!("h {} outside (0, 1/2]", self.h)));
        }
        if (self.xi.0.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("xi {} is not a unit vector", self.xi.0)));
        }
        Ok(())
    }

    /// `n/2 + i lambda / h`.
    fn exponent(&self) -> C64 {
        C64::new(self.geometry.n as f64 / 2.0, self.lambda / self.h)
    }
}

/// `E_h` at `m`: `exp(i lambda m.xi / h)` or `((1-|q|^2)/|q-xi|^2)^{n/2 + i lambda/h}`.
pub fn evaluate_wave(spec: &PlaneWaveSpec, m: BallPoint) -> Result<C64> {
    spec.validate()?;
    if spec.geometry.is_hyperbolic() {
        let phi = busemann(spec.xi, m)?;
        Ok((spec.exponent() * phi).exp())
    } else {
        Ok(C64::from_polar(1.0, spec.lambda * euclid_phase(spec.xi, m) / spec.h))
    }
}

/// `rho E` without validation; zero off the ball.
fn density_wave(spec: &PlaneWaveSpec, q: C64) -> C64 {
    if spec.geometry.is_hyperbolic() {
        let d = 1.0 - q.norm_sqr();
        if d <= 0.0 {
            return C64::new(0.0, 0.0);
        }
        let phi = (d / (q - spec.xi.0).norm_sqr()).ln();
        (spec.exponent() * phi).exp() * (2.0 / d)
    } else {
        let x = (q.conj() * spec.xi.0).re;
        C64::from_polar(1.0, spec.lambda * x / spec.h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdeResidual {
    /// `|(h^2 (Delta - n^2/4) - lambda^2) E|` at the point.
    pub residual: f64,
    /// `lambda^2 |E|`.
    pub scale: f64,
    pub step: f64,
}

/// Applies the semiclassical Helmholtz operator to `E_h` with an
/// eighth-order finite-difference Laplacian.
pub fn pde_residual(spec: &PlaneWaveSpec, m: BallPoint) -> Result<PdeResidual> {
    const C: [f64; 5] = [-205.0 / 72.0, 8.0 / 5.0, -1.0 / 5.0, 8.0 / 315.0, -1.0 / 560.0];
    let e = evaluate_wave(spec, m)?;
    let geom = spec.geometry;
    let rho = geom.conformal_factor(m);
    let mut step = 0.1 * spec.h / (spec.lambda * rho);
    if geom.is_hyperbolic() {
        step = step.min((1.0 - m.0.norm()) / 8.0);
    }
    let mut lap = e * (2.0 * C[0]);
    for (k, c) in C.iter().enumerate().skip(1) {
        let d = step * k as f64;
        for dir in [C64::new(d, 0.0), C64::new(-d, 0.0), C64::new(0.0, d), C64::new(0.0, -d)] {
            lap += evaluate_wave(spec, BallPoint(m.0 + dir))? * *c;
        }
    }
    lap /= step * step;
    // positive Laplacian of the conformal metric: -rho^{-2} times the flat one
    let delta = -lap / (rho * rho);
    let shift = if geom.is_hyperbolic() { (geom.n * geom.n) as f64 / 4.0 } else { 0.0 };
    let h2 = spec.h * spec.h;
    let res = (delta - e * shift) * h2 - e * (spec.lambda * spec.lambda);
    Ok(PdeResidual { residual: res.norm(), scale: spec.lambda * spec.lambda * e.norm(), step })
}

/// Inverse Fourier transform of the fiber profile of a product symbol,
/// `B(u) = (2 pi)^-2 int A(arg eta) R(|eta|) exp(i u.eta) d eta`.
#[derive(Debug, Clone)]
struct FiberTransform {
    harmonic: u32,
    amplitude: f64,
    phase: f64,
    i_k: C64,
    b0: Vec<f64>,
    bk: Vec<f64>,
    /// Offsets beyond which `B` stays below `1e-10` of its peak.
    u_max: f64,
    /// Offsets carrying all but `e^-8` of `B`.
    u_eff: f64,
    width: f64,
}

impl FiberTransform {
    fn new(a: &ProductSymbol) -> Result<Self> {
        let (sigma, width) = match a.radial {
            RadialProfile::GaussianWindow { sigma, width, .. } => (sigma, width),
            _ => {
                return Err(Error::Unsupported("matrix elements need a Gaussian fiber window".into()));
            }
        };
        let (harmonic, amplitude, phase) = match a.angular {
            AngularProfile::Isotropic => (0, 0.0, 0.0),
            AngularProfile::Fourier { amplitude, harmonic, phase } => (harmonic, amplitude, phase),
            AngularProfile::Bump { .. } => {
                return Err(Error::Unsupported(
                    "matrix elements need an isotropic or Fourier angular profile".into(),
                ));
            }
        };
        let u_cap = 15.0 / sigma;
        let u_eff = 4.0 / sigma;
        let s_max = 2.0 * u_cap;
        let n_r = 64 + (4.0 * s_max * width) as usize;
        let radial: Vec<(f64, f64)> = gauss_interval(1.0 - width, 1.0 + width, n_r)
            .into_iter()
            .map(|(r, w)| (r, w * r * a.radial_profile(r)))
            .collect();
        let n_s = (s_max / TABLE_STEP).ceil() as usize + 4;
        let rows: Vec<(f64, f64)> = (0..n_s)
            .into_par_iter()
            .map(|i| {
                let s = i as f64 * TABLE_STEP;
                let mut b0 = 0.0;
                let mut bk = 0.0;
                for &(r, w) in &radial {
                    b0 += w * Jn(0, r * s);
                    if amplitude != 0.0 {
                        bk += w * Jn(harmonic, r * s);
                    }
                }
                (b0, bk)
            })
            .collect();
        let (b0, bk): (Vec<f64>, Vec<f64>) = rows.into_iter().unzip();
        let scale = b0.iter().chain(&bk).fold(0.0f64, |m, v| m.max(v.abs()));
        let last = (0..n_s)
            .take_while(|&i| i as f64 * TABLE_STEP <= u_cap)
            .filter(|&i| b0[i].abs().max(bk[i].abs()) > 1e-10 * scale)
            .last()
            .unwrap_or(0);
        let u_max = (last as f64 * TABLE_STEP + 1.0).min(u_cap);
        let i_k = C64::new(0.0, 1.0).powu(harmonic);
        Ok(FiberTransform { harmonic, amplitude, phase, i_k, b0, bk, u_max, u_eff, width })
    }

    fn radial(table: &[f64], s: f64) -> f64 {
        let x = s / TABLE_STEP;
        let i = x.floor() as usize;
        if i + 2 >= table.len() {
            return 0.0;
        }
        let i = i.max(1);
        let t = x - i as f64;
        let (f0, f1, f2, f3) = (table[i - 1], table[i], table[i + 1], table[i + 2]);
        // cubic Lagrange through nodes -1, 0, 1, 2
        -t * (t - 1.0) * (t - 2.0) / 6.0 * f0 + (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0 * f1
            - (t + 1.0) * t * (t - 2.0) / 2.0 * f2
            + (t + 1.0) * t * (t - 1.0) / 6.0 * f3
    }

    fn eval(&self, u: C64) -> C64 {
        let s = u.norm();
        let mut v = C64::new(Self::radial(&self.b0, s), 0.0);
        if self.amplitude != 0.0 && s > 0.0 {
            let c = (self.harmonic as f64 * u.arg() + self.phase).cos();
            v += self.i_k * (self.amplitude * c * Self::radial(&self.bk, s));
        }
        v / TAU
    }
}

/// Smooth step: 1 below 0, 0 above 1.
fn smooth_step(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x >= 1.0 {
        return 0.0;
    }
    let f = |y: f64| (-1.0 / y).exp();
    f(1.0 - x) / (f(x) + f(1.0 - x))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatrixElement {
    pub value: C64,
    /// `|I_fine - I_coarse|` between the last two resolutions.
    pub error: f64,
    pub convention: QuantizationConvention,
    pub points_per_wavelength: usize,
    pub offset_nodes: usize,
    pub base_nodes: usize,
}

struct Layout {
    du: f64,
    offsets: Vec<C64>,
    /// Radius in `m` over which the outer integral runs.
    outer: f64,
    /// Cutoff radii for `m'` (ball only).
    cut: (f64, f64),
}

fn layout(a: &ProductSymbol, spec: &PlaneWaveSpec, conv: QuantizationConvention, ft: &FiberTransform, ppw: usize) -> Result<Layout> {
    let h = spec.h;
    let kappa = if spec.geometry.is_hyperbolic() { (h * ft.u_eff).min(2.0).exp() } else { 1.0 };
    let k_max = 1.0 + ft.width + spec.lambda * kappa;
    let du = TAU / (ppw as f64 * k_max);
    let half = (ft.u_max / du).ceil() as usize;
    if half > MAX_GRID_HALF_WIDTH {
        return Err(Error::Resolution {
            message: format!("offset grid of half width {half} exceeds {MAX_GRID_HALF_WIDTH}"),
            required: 2 * half + 1,
        });
    }
    let mut offsets = Vec::new();
    let hi = half as i64;
    for i in -hi..=hi {
        for j in -hi..=hi {
            let u = C64::new(i as f64 * du, j as f64 * du);
            if u.norm() <= ft.u_max {
                offsets.push(u);
            }
        }
    }
    let reach = (h * ft.u_eff).min(1.5);
    let outer = match conv {
        QuantizationConvention::Left => a.radius,
        QuantizationConvention::Weyl => a.radius + reach / 2.0,
    };
    let r1 = outer + reach;
    Ok(Layout { du, offsets, outer, cut: (r1, r1 + 0.5) })
}

fn element_at(
    a: &ProductSymbol,
    spec: &PlaneWaveSpec,
    conv: QuantizationConvention,
    ft: &FiberTransform,
    ppw: usize,
) -> Result<(C64, usize, usize)> {
    let geom = spec.geometry;
    let lay = layout(a, spec, conv, ft, ppw)?;
    let n_rho = ppw;
    let base = polar_nodes(&geom, a.center, lay.outer, n_rho);
    let du2 = lay.du * lay.du;
    let h = spec.h;
    let cutoff = |q: C64| -> f64 {
        if !geom.is_hyperbolic() {
            return 1.0;
        }
        if q.norm_sqr() >= 1.0 {
            return 0.0;
        }
        let d = model_distance(&geom, a.center, BallPoint(q));
        smooth_step((d - lay.cut.0) / (lay.cut.1 - lay.cut.0))
    };
    let wave = |q: C64| -> C64 {
        let c = cutoff(q);
        if c == 0.0 {
            C64::new(0.0, 0.0)
        } else {
            density_wave(spec, q) * c
        }
    };
    let kernel: Vec<C64> = match conv {
        QuantizationConvention::Left => lay.offsets.iter().map(|&u| ft.eval(u) * du2).collect(),
        QuantizationConvention::Weyl => Vec::new(),
    };
    let terms: Vec<C64> = base
        .par_iter()
        .map(|&(m, w_vol)| {
            let rho = geom.conformal_factor(m);
            let dq = w_vol / geom.area_density(m);
            let shift = h / rho;
            let acc = match conv {
                QuantizationConvention::Left => {
                    let d = model_distance(&geom, a.center, m);
                    if d >= a.radius {
                        return C64::new(0.0, 0.0);
                    }
                    let mut s = C64::new(0.0, 0.0);
                    for (u, k) in lay.offsets.iter().zip(&kernel) {
                        s += k * wave(m.0 - u * shift);
                    }
                    s * a.base_profile(d)
                }
                QuantizationConvention::Weyl => {
                    let mut s = C64::new(0.0, 0.0);
                    for &u in &lay.offsets {
                        let mid = m.0 - u * (0.5 * shift);
                        if geom.is_hyperbolic() && mid.norm_sqr() >= 1.0 {
                            continue;
                        }
                        let mid = BallPoint(mid);
                        let d = model_distance(&geom, a.center, mid);
                        if d >= a.radius {
                            continue;
                        }
                        let t = geom.conformal_factor(mid) / rho;
                        s += ft.eval(u * t) * (t * t * a.base_profile(d)) * wave(m.0 - u * shift);
                    }
                    s * du2
                }
            };
            density_wave(spec, m.0).conj() * acc * (dq * a.amplitude)
        })
        .collect();
    let total = terms.iter().fold(C64::new(0.0, 0.0), |x, y| x + y);
    Ok((total, lay.offsets.len(), base.len()))
}

/// `<Op_h(a) E_h, E_h>_{L^2(Vol)}` by tensor quadrature.
///
/// `quad.points` is the number of nodes per wavelength of the fastest
/// oscillation in the offset integral; the value is computed at that
/// resolution and at twice it, and the finer value is returned.
pub fn matrix_element(
    a: &ProductSymbol,
    spec: &PlaneWaveSpec,
    conv: QuantizationConvention,
    quad: &QuadratureSpec,
) -> Result<MatrixElement> {
    spec.validate()?;
    quad.validate()?;
    a.validate()?;
    if a.geometry.kind != spec.geometry.kind {
        return Err(Error::Config("symbol and plane wave live on different geometries".into()));
    }
    if quad.points < MIN_POINTS_PER_WAVELENGTH {
        return Err(Error::Resolution {
            message: format!("{} points per wavelength at h = {}", quad.points, spec.h),
            required: MIN_POINTS_PER_WAVELENGTH,
        });
    }
    let ft = FiberTransform::new(a)?;
    let mut ppw = quad.points;
    let (mut coarse, _, _) = element_at(a, spec, conv, &ft, ppw)?;
    let (mut fine, mut nu, mut nq) = element_at(a, spec, conv, &ft, 2 * ppw)?;
    if quad.scheme == QuadScheme::Adaptive && (fine - coarse).norm() > quad.tolerance * (1.0 + fine.norm()) {
        ppw *= 2;
        coarse = fine;
        (fine, nu, nq) = element_at(a, spec, conv, &ft, 2 * ppw)?;
    }
    Ok(MatrixElement {
        value: fine,
        error: (fine - coarse).norm(),
        convention: conv,
        points_per_wavelength: 2 * ppw,
        offset_nodes: nu,
        base_nodes: nq,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceTerm {
    pub value: f64,
    pub error: f64,
    /// `value * h^{n+1}`.
    pub scaled: f64,
    pub convention: QuantizationConvention,
}

fn check_trace_inputs(s: f64, h: f64, n: usize) -> Result<()> {
    if n != 1 {
        return Err(Error::Unsupported(format!("boundary dimension n = {n}; only n = 1 is implemented")));
    }
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::Config(format!("energy s = {s} must be positive")));
    }
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::Config(format!("h = {h} outside (0, 1)")));
    }
    Ok(())
}

/// Breakpoints of `[0, top]` at the fiber window edges.
fn fiber_pieces(a: &dyn Symbol, top: f64) -> Vec<(f64, f64)> {
    let mut cuts = vec![0.0, top];
    if let Some((lo, hi)) = a.fiber_window() {
        cuts.extend([lo, hi].into_iter().filter(|&c| c > 0.0 && c < top));
    }
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.windows(2).map(|w| (w[0], w[1])).collect()
}

fn doubling<F>(quad: &QuadratureSpec, eval: F) -> (f64, f64)
where
    F: Fn(usize) -> f64,
{
    let mut n = quad.points;
    let mut coarse = eval(n);
    let mut fine = eval(2 * n);
    if quad.scheme == QuadScheme::Adaptive {
        let mut k = 0;
        while (fine - coarse).abs() > quad.tolerance * (1.0 + fine.abs()) && k < 3 {
            n *= 2;
            coarse = fine;
            fine = eval(2 * n);
            k += 1;
        }
    }
    (fine, (fine - coarse).abs())
}

/// Leading term `(2 pi h)^{-n-1} int_{|nu|_g^2 <= s} a d(m, nu)` of the
/// trace of `Op_h(a) 1_{[0,s]}(h^2 Delta)`; the same for both conventions.
pub fn weyl_leading_term(
    a: &dyn Symbol,
    s: f64,
    h: f64,
    n: usize,
    conv: QuantizationConvention,
    quad: &QuadratureSpec,
) -> Result<TraceTerm> {
    check_trace_inputs(s, h, n)?;
    quad.validate()?;
    let geom = *a.geometry();
    let sup = a.support();
    let pieces = fiber_pieces(a, s.sqrt());
    let eval = |k: usize| -> f64 {
        let base = polar_nodes(&geom, sup.center, sup.radius, k);
        let fiber: Vec<(f64, f64)> = pieces.iter().flat_map(|&(x, y)| gauss_interval(x, y, k)).collect();
        let n_theta = 2 * k;
        let dtheta = TAU / n_theta as f64;
        let vals: Vec<f64> = base
            .par_iter()
            .map(|&(m, w)| {
                // nu = rho eta, so dm dnu = Vol deta
                let rho = geom.conformal_factor(m);
                let mut acc = 0.0;
                for &(r, wr) in &fiber {
                    for j in 0..n_theta {
                        let eta = C64::from_polar(r, dtheta * j as f64);
                        acc += wr * r * a.eval(m, eta * rho);
                    }
                }
                w * acc * dtheta
            })
            .collect();
        vals.iter().sum()
    };
    let (v, e) = doubling(quad, eval);
    let norm = (TAU * h).powi(-(n as i32) - 1);
    Ok(TraceTerm { value: v * norm, error: e * norm, scaled: v * norm * h.powi(n as i32 + 1), convention: conv })
}

/// Exact trace of `Op_h(a) 1_{[0,s]}(h^2 Delta)` for left quantization in
/// the plane, as the integral of the kernel diagonal
/// `K(m, m) = (2 pi h)^-2 int a(m, nu) 1{|nu|^2 <= s} d nu`.
pub fn free_trace_oracle(a: &dyn Symbol, s: f64, h: f64, n: usize, quad: &QuadratureSpec) -> Result<TraceTerm> {
    check_trace_inputs(s, h, n)?;
    quad.validate()?;
    if a.geometry().is_hyperbolic() {
        return Err(Error::Unsupported("the free trace is defined on the flat plane".into()));
    }
    let sup = a.support();
    let pieces = fiber_pieces(a, s.sqrt());
    let norm = (TAU * h).powi(-(n as i32) - 1);
    let diagonal = |m: BallPoint, k: usize| -> f64 {
        let n_theta = 3 * k;
        let dtheta = TAU / n_theta as f64;
        let mut acc = 0.0;
        for &(x, y) in &pieces {
            for (r, wr) in gauss_interval(x, y, k + k / 2) {
                let mut ring = 0.0;
                for j in 0..n_theta {
                    ring += a.eval(m, C64::from_polar(r, dtheta * (j as f64 + 0.5)));
                }
                acc += wr * r * ring * dtheta;
            }
        }
        acc * norm
    };
    let eval = |k: usize| -> f64 {
        let radial = gauss_interval(0.0, sup.radius, k + k / 2);
        let n_alpha = 3 * k;
        let dalpha = TAU / n_alpha as f64;
        let vals: Vec<f64> = radial
            .par_iter()
            .map(|&(r, wr)| {
                (0..n_alpha)
                    .map(|j| {
                        let m = BallPoint(sup.center.0 + C64::from_polar(r, dalpha * j as f64));
                        wr * r * dalpha * diagonal(m, k)
                    })
                    .sum::<f64>()
            })
            .collect();
        vals.iter().sum()
    };
    let (v, e) = doubling(quad, eval);
    Ok(TraceTerm { value: v, error: e, scaled: v * h.powi(n as i32 + 1), convention: QuantizationConvention::Left })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub h: f64,
    pub matrix_element: C64,
    pub quad_error: f64,
    pub mu_xi_value: f64,
    pub abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub convention: QuantizationConvention,
    pub lambda: f64,
    pub rows: Vec<ConvergenceRow>,
    pub mu_xi_error: f64,
    /// Every error is within the quadrature tolerance.
    pub exact: bool,
    /// Least-squares slope of `log abs_error` against `log h`; absent when exact.
    pub fitted_order: Option<f64>,
}

/// Least-squares slope of `log y` against `log x` over positive entries.
pub fn fit_order(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs.iter().zip(ys).filter(|(_, &y)| y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Matrix elements at `lambda = 1` along `h_list` against `mu_xi(a)` for the
/// trivial group.
pub fn convergence_study(
    a: &ProductSymbol,
    geometry: &ModelGeometry,
    xi: BoundaryPoint,
    h_list: &[f64],
    conv: QuantizationConvention,
    quad: &QuadratureSpec,
) -> Result<ConvergenceStudy> {
    if h_list.len() < 4 {
        return Err(Error::Config(format!("need at least 4 values of h, got {}", h_list.len())));
    }
    if h_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config("h values must be strictly decreasing".into()));
    }
    if a.geometry.kind != geometry.kind {
        return Err(Error::Config("symbol and study live on different geometries".into()));
    }
    let mu_quad = QuadratureSpec::adaptive(16, (quad.tolerance * 0.1).max(1e-13))?;
    let mu = mu_xi(geometry, &SchottkyGroup::trivial(), xi, a, 0, &mu_quad)?;
    let mut rows = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let spec = PlaneWaveSpec::new(*geometry, xi, 1.0, h)?;
        let me = matrix_element(a, &spec, conv, quad)?;
        rows.push(ConvergenceRow {
            h,
            matrix_element: me.value,
            quad_error: me.error,
            mu_xi_value: mu.value,
            abs_error: (me.value - mu.value).norm(),
        });
    }
    let floor = quad.tolerance * (1.0 + mu.value.abs()) + mu.error_bound;
    let exact = rows.iter().all(|r| r.abs_error <= floor + r.quad_error);
    let fitted_order = if exact {
        None
    } else {
        let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
        let es: Vec<f64> = rows.iter().map(|r| r.abs_error).collect();
        fit_order(&hs, &es)
    };
    Ok(ConvergenceStudy { convention: conv, lambda: 1.0, rows, mu_xi_error: mu.error_bound, exact, fitted_order })
}
