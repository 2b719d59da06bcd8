//! Limiting measures of plane waves.
//!
//! `mu_tilde_integral` integrates a symbol against the chart measure
//! `|b0|^2 Vol` on the directly escaping region. `mu_xi_pushforward` takes
//! the limit of `a o g^{-t}` against that measure, and `mu_xi_group_sum`
//! evaluates the same measure on a quotient as a sum over the group. The
//! two routes share no code beyond word enumeration and quadrature nodes.
//!
//! On a quotient the chart around a boundary point `xi` of a free arc is
//! additionally capped by a horoball at `xi` small enough to embed in the
//! fundamental domain, so that it projects injectively.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{busemann, busemann_gradient, BallPoint, BoundaryPoint, Frame, Isometry, ModelGeometry, UnitPhasePoint, C64};
use crate::quadrature::{ball_translate, gauss_interval, polar_nodes, QuadScheme, QuadratureSpec};
use crate::schottky::{SchottkyGroup, Word, DEFAULT_BUDGET};
use crate::symbols::{ball_inside_domain, FlowComposed, Symbol};

/// Spacing of the time grid used for the pushforward limit.
pub const T_STEP: f64 = 0.5;
/// Flow horizon after which a Monte Carlo trajectory counts as trapped.
pub const T_ESCAPE: f64 = 30.0;

const CHUNK: usize = 8192;
const MAX_DOUBLINGS: usize = 4;
const MAX_BOUNDARY_STEPS: usize = 10_000;

type Sampler = Box<dyn Fn(&mut ChaCha8Rng) -> BallPoint + Sync>;

/// A measure evaluation with its certified error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureValue {
    pub value: f64,
    /// Quadrature difference plus truncation tail plus mass still pending.
    pub error_bound: f64,
    pub t_used: Option<f64>,
    pub word_len_used: Option<usize>,
    pub converged: bool,
    /// Last increment of the pushforward sequence (zero for other routes).
    pub last_increment: f64,
    /// `(t, value)` along the pushforward grid, up to the stopping time.
    pub sequence: Vec<(f64, f64)>,
    /// Sum of absolute contributions per word length.
    pub shell_sums: Vec<f64>,
}

impl MeasureValue {
    fn zero() -> Self {
        MeasureValue {
            value: 0.0,
            error_bound: 0.0,
            t_used: None,
            word_len_used: None,
            converged: true,
            last_increment: 0.0,
            sequence: Vec::new(),
            shell_sums: Vec::new(),
        }
    }
}

fn check_setting(geom: &ModelGeometry, grp: &SchottkyGroup, a: &dyn Symbol) -> Result<()> {
    if a.geometry().kind != geom.kind {
        return Err(Error::Config("symbol and geometry use different models".into()));
    }
    if grp.rank() > 0 {
        if !geom.is_hyperbolic() {
            return Err(Error::Unsupported("group quotients of the Euclidean plane".into()));
        }
        let s = a.support();
        if !ball_inside_domain(grp, s.center, s.radius) {
            return Err(Error::Domain(format!(
                "symbol support (center {}, radius {}) is not inside the fundamental domain",
                s.center.0, s.radius
            )));
        }
    }
    Ok(())
}

/// Rejects boundary points inside an open disk. Deeper disks of the limit
/// set refinement are contained in the open first-generation disks, so a
/// point passing this test is at positive distance from all of them.
fn check_xi_closure(grp: &SchottkyGroup, xi: BoundaryPoint) -> Result<()> {
    for (k, (src, dst)) in grp.disk_pairs().iter().enumerate() {
        for (d, side) in [(src, "source"), (dst, "target")] {
            if d.contains(xi.0) {
                return Err(Error::Domain(format!(
                    "boundary point at angle {:.6} lies in the {side} disk of generator {}",
                    xi.angle(),
                    k + 1
                )));
            }
        }
    }
    Ok(())
}

/// `|b0|^2`: `exp(n phi_xi)` in the ball, one in the plane.
fn chart_density(geom: &ModelGeometry, xi: BoundaryPoint, m: BallPoint) -> Result<f64> {
    if geom.is_hyperbolic() {
        Ok((geom.n as f64 * busemann(xi, m)?).exp())
    } else {
        Ok(1.0)
    }
}

/// The forward-invariant chart region at `xi`.
#[derive(Debug, Clone, Copy)]
struct Chart {
    geom: ModelGeometry,
    xi: BoundaryPoint,
    /// Lower bound on `phi_xi`; `-inf` without a group.
    cap: f64,
}

impl Chart {
    fn new(geom: &ModelGeometry, grp: &SchottkyGroup, xi: BoundaryPoint) -> Result<Chart> {
        if grp.rank() == 0 {
            return Ok(Chart { geom: *geom, xi, cap: f64::NEG_INFINITY });
        }
        check_xi_closure(grp, xi)?;
        // The horoball {phi_xi >= s} is the disk tangent at xi of radius 1/(1+e^s).
        let fits = |r: f64| {
            let c = xi.0 * (1.0 - r);
            grp.disk_pairs()
                .iter()
                .flat_map(|(a, b)| [a, b])
                .all(|d| (c - d.center).norm() > r + d.radius)
        };
        if !fits(1e-12) {
            return Err(Error::Domain(format!(
                "boundary point at angle {:.6} touches a disk; no horoball fits in the domain",
                xi.angle()
            )));
        }
        let (mut lo, mut hi) = (1e-12, 0.5);
        if fits(hi) {
            lo = hi;
        } else {
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if fits(mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
        }
        let r = 0.5 * lo;
        Ok(Chart { geom: *geom, xi, cap: ((1.0 - r) / r).ln() })
    }

    fn contains(&self, q: BallPoint) -> bool {
        let Ok(z) = self.geom.tau(q, self.xi) else { return false };
        if !self.geom.directly_escaping(&z) {
            return false;
        }
        self.cap == f64::NEG_INFINITY || self.geom.phase(self.xi, q).map(|p| p >= self.cap).unwrap_or(false)
    }

    /// First grid index at which the flow of `tau(q, xi)` is in the chart.
    ///
    /// In the ball the test uses closed forms along the flow: `phi_xi` grows
    /// at unit rate, and the frame coefficient satisfies
    /// `|alpha(t)|^2 = A cosh t + B sinh t + 1/2` with `1 - |q(t)|^2 = 1/|alpha(t)|^2`.
    fn entry_index(&self, q: BallPoint, grid: &[f64]) -> Result<Option<usize>> {
        let inside: Box<dyn Fn(f64) -> bool> = if self.geom.is_hyperbolic() {
            let g = Frame::from_phase(&self.geom.tau(q, self.xi)?).0;
            let a = 0.5 * (g.alpha.norm_sqr() + g.beta.norm_sqr());
            let b = (g.alpha * g.beta.conj()).re;
            let phi0 = busemann(self.xi, q)?;
            // x0 <= epsilon0  <=>  |q| >= r0  <=>  |alpha|^2 >= 1 / (1 - r0^2)
            let r0 = (2.0 - self.geom.epsilon0) / (2.0 + self.geom.epsilon0);
            let alpha_min = 1.0 / (1.0 - r0 * r0);
            let cap = self.cap;
            Box::new(move |t: f64| {
                let (sh, ch) = (t.sinh(), t.cosh());
                a * sh + b * ch >= 0.0 && a * ch + b * sh + 0.5 >= alpha_min && phi0 + t >= cap
            })
        } else {
            Box::new(|t: f64| self.contains(BallPoint(q.0 + self.xi.0 * t)))
        };
        let last = grid.len() - 1;
        if !inside(grid[last]) {
            return Ok(None);
        }
        if inside(grid[0]) {
            return Ok(Some(0));
        }
        let (mut lo, mut hi) = (0, last);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if inside(grid[mid]) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(Some(hi))
    }
}

/// Integral of `a` against `|b0|^2 Vol` over the directly escaping chart `U+`.
pub fn mu_tilde_integral(geom: &ModelGeometry, xi: BoundaryPoint, a: &dyn Symbol, quad: &QuadratureSpec) -> Result<MeasureValue> {
    quad.validate()?;
    check_setting(geom, &SchottkyGroup::trivial(), a)?;
    let chart = Chart::new(geom, &SchottkyGroup::trivial(), xi)?;
    let s = a.support();
    let eval = |n: usize| -> Result<f64> {
        let nodes = polar_nodes(geom, s.center, s.radius, n);
        let vals: Vec<Result<f64>> = nodes
            .par_iter()
            .map(|&(m, w)| {
                if !chart.contains(m) {
                    return Ok(0.0);
                }
                let z = geom.tau(m, xi)?;
                Ok(w * chart_density(geom, xi, m)? * a.eval_phase(&z))
            })
            .collect();
        vals.into_iter().sum()
    };
    let (value, error) = refine(quad, eval)?;
    Ok(MeasureValue { value, error_bound: error, ..MeasureValue::zero() })
}

/// Runs `eval` at `N` and `2N` (and beyond for the adaptive scheme) and
/// returns the finest value with the last doubling difference.
fn refine<F: FnMut(usize) -> Result<f64>>(quad: &QuadratureSpec, mut eval: F) -> Result<(f64, f64)> {
    let mut n = quad.points;
    let mut coarse = eval(n)?;
    let mut fine = eval(2 * n)?;
    if quad.scheme == QuadScheme::Adaptive {
        let mut k = 0;
        while (fine - coarse).abs() > quad.tolerance * (1.0 + fine.abs()) && k < MAX_DOUBLINGS {
            n *= 2;
            coarse = fine;
            fine = eval(2 * n)?;
            k += 1;
        }
    }
    Ok((fine, (fine - coarse).abs()))
}

fn group_words(grp: &SchottkyGroup, max_word_len: usize) -> Result<Vec<(Word, Isometry)>> {
    if grp.rank() == 0 {
        Ok(vec![(Word::identity(), Isometry::identity())])
    } else {
        grp.enumerate_words(max_word_len, DEFAULT_BUDGET)
    }
}

/// Geometric tail estimate from the decay of the last shells.
fn tail_bound(shells: &[f64]) -> Result<f64> {
    let l = shells.len() - 1;
    if l == 0 || shells[l] == 0.0 {
        return Ok(0.0);
    }
    let mut ratio = if shells[l - 1] > 0.0 { shells[l] / shells[l - 1] } else { f64::INFINITY };
    if l >= 2 && shells[l - 2] > 0.0 && shells[l - 1] > 0.0 {
        ratio = ratio.max(shells[l - 1] / shells[l - 2]);
    }
    if !(ratio < 1.0) {
        return Err(Error::Precision(format!(
            "shell {l} does not decay (ratio {ratio:.4}); the boundary point is too close to the limit set for this word length"
        )));
    }
    Ok(shells[l] * ratio / (1.0 - ratio))
}

struct PushRun {
    /// Signed contributions by chart entry index; the final slot collects
    /// mass that has not entered by the end of the grid.
    buckets: Vec<f64>,
    abs_buckets: Vec<f64>,
    shells: Vec<f64>,
}

impl PushRun {
    fn cumulative(&self) -> Vec<f64> {
        let n = self.buckets.len() - 1;
        let mut acc = 0.0;
        self.buckets[..n]
            .iter()
            .map(|b| {
                acc += b;
                acc
            })
            .collect()
    }
}

#[allow(clippy::too_many_arguments)]
fn push_run(
    geom: &ModelGeometry,
    chart: &Chart,
    words: &[(Word, Isometry)],
    a: &dyn Symbol,
    grid: &[f64],
    n_rho: usize,
    max_len: usize,
) -> Result<PushRun> {
    let s = a.support();
    let nodes = polar_nodes(geom, s.center, s.radius, n_rho);
    let inverses: Vec<Isometry> = words.iter().map(|(_, g)| g.inverse()).collect();
    let per_node: Vec<Result<PushRun>> = nodes
        .par_iter()
        .map(|&(m, w)| {
            let mut run = PushRun {
                buckets: vec![0.0; grid.len() + 1],
                abs_buckets: vec![0.0; grid.len() + 1],
                shells: vec![0.0; max_len + 1],
            };
            for ((word, g), ginv) in words.iter().zip(&inverses) {
                let mt = g.apply(m);
                if geom.is_hyperbolic() && mt.0.norm_sqr() >= 1.0 {
                    continue;
                }
                let nu_t = geom.phase_gradient(chart.xi, mt)?;
                let back = ginv.apply_phase(&UnitPhasePoint { m: mt, nu: nu_t });
                let val = a.eval(m, back.nu);
                if val == 0.0 {
                    continue;
                }
                let c = w * chart_density(geom, chart.xi, mt)? * val;
                run.shells[word.len()] += c.abs();
                let k = chart.entry_index(mt, grid)?.unwrap_or(grid.len());
                run.buckets[k] += c;
                run.abs_buckets[k] += c.abs();
            }
            Ok(run)
        })
        .collect();
    let mut total = PushRun {
        buckets: vec![0.0; grid.len() + 1],
        abs_buckets: vec![0.0; grid.len() + 1],
        shells: vec![0.0; max_len + 1],
    };
    for r in per_node {
        let r = r?;
        for (t, v) in total.buckets.iter_mut().zip(&r.buckets) {
            *t += v;
        }
        for (t, v) in total.abs_buckets.iter_mut().zip(&r.abs_buckets) {
            *t += v;
        }
        for (t, v) in total.shells.iter_mut().zip(&r.shells) {
            *t += v;
        }
    }
    Ok(total)
}

/// Index at which three consecutive increments fall below
/// `tol (1 + |value|)`, counted from the first nonzero value.
fn stopping_index(values: &[f64], tol: f64) -> (usize, bool) {
    let Some(first) = values.iter().position(|v| *v != 0.0) else {
        // no mass has entered the chart; three zero increments count as settled
        return (values.len() - 1, values.len() >= 4);
    };
    for k in (first + 3)..values.len() {
        let small = (k - 2..=k).all(|j| (values[j] - values[j - 1]).abs() < tol * (1.0 + values[k].abs()));
        if small {
            return (k, true);
        }
    }
    (values.len() - 1, false)
}

/// `lim_t int a o g^{-t} d mu~_xi` on the time grid `0, T_STEP, ..., t_max`.
///
/// On a quotient, the chart is capped by a horoball at `xi` and the integral
/// is taken over the tiles `gamma F` for words up to `max_word_len`. The
/// value is reported at the stopping time; mass that enters the chart later
/// or never within `t_max` is added to the error bound.
pub fn mu_xi_pushforward(
    geom: &ModelGeometry,
    grp: &SchottkyGroup,
    xi: BoundaryPoint,
    a: &dyn Symbol,
    t_max: f64,
    max_word_len: usize,
    quad: &QuadratureSpec,
) -> Result<MeasureValue> {
    quad.validate()?;
    check_setting(geom, grp, a)?;
    if !(t_max >= 0.0 && t_max.is_finite()) {
        return Err(Error::Config(format!("t_max must be non-negative, got {t_max}")));
    }
    let chart = Chart::new(geom, grp, xi)?;
    let words = group_words(grp, max_word_len)?;
    let max_len = if grp.rank() == 0 { 0 } else { max_word_len };
    let steps = (t_max / T_STEP).floor() as usize;
    let grid: Vec<f64> = (0..=steps).map(|k| k as f64 * T_STEP).collect();

    let mut n = quad.points;
    let mut coarse = push_run(geom, &chart, &words, a, &grid, n, max_len)?;
    let mut fine = push_run(geom, &chart, &words, a, &grid, 2 * n, max_len)?;
    let mut doublings = 0;
    loop {
        let (k, _) = stopping_index(&fine.cumulative(), quad.tolerance);
        let gap = (fine.cumulative()[k] - coarse.cumulative()[k]).abs();
        let v = fine.cumulative()[k];
        if quad.scheme == QuadScheme::TensorGauss || gap <= quad.tolerance * (1.0 + v.abs()) || doublings == MAX_DOUBLINGS {
            break;
        }
        n *= 2;
        coarse = fine;
        fine = push_run(geom, &chart, &words, a, &grid, 2 * n, max_len)?;
        doublings += 1;
    }
    let values = fine.cumulative();
    let coarse_values = coarse.cumulative();
    let (k, converged) = stopping_index(&values, quad.tolerance);
    let pending: f64 = fine.abs_buckets[k + 1..].iter().sum();
    let tail = tail_bound(&fine.shells)?;
    let last_increment = if k > 0 { values[k] - values[k - 1] } else { values[0] };
    Ok(MeasureValue {
        value: values[k],
        error_bound: (values[k] - coarse_values[k]).abs() + pending + tail,
        t_used: Some(grid[k]),
        word_len_used: Some(max_len),
        converged,
        last_increment,
        sequence: grid[..=k].iter().copied().zip(values[..=k].iter().copied()).collect(),
        shell_sums: fine.shells,
    })
}

/// `sum_gamma |d gamma(xi)|^n int_F a(m, d phi_{gamma xi}) e^{n phi_{gamma xi}(m)} Vol(m)`
/// over reduced words up to `max_word_len`.
pub fn mu_xi_group_sum(
    grp: &SchottkyGroup,
    xi: BoundaryPoint,
    a: &dyn Symbol,
    max_word_len: usize,
    quad: &QuadratureSpec,
) -> Result<MeasureValue> {
    quad.validate()?;
    let geom = *a.geometry();
    if !geom.is_hyperbolic() {
        return Err(Error::Unsupported("the group-sum formula is specific to the ball model".into()));
    }
    check_setting(&geom, grp, a)?;
    check_xi_closure(grp, xi)?;
    let n_dim = geom.n as f64;
    let words = group_words(grp, max_word_len)?;
    let max_len = if grp.rank() == 0 { 0 } else { max_word_len };
    let images: Vec<(usize, BoundaryPoint, f64)> = words
        .iter()
        .map(|(w, g)| (w.len(), g.boundary_action(xi), g.boundary_derivative_norm(xi).powf(n_dim)))
        .collect();
    let s = a.support();
    let mut shells = vec![0.0; max_len + 1];
    let mut eval = |n: usize| -> Result<f64> {
        let nodes = polar_nodes(&geom, s.center, s.radius, n);
        let per_node: Vec<Result<(f64, Vec<f64>)>> = nodes
            .par_iter()
            .map(|&(m, w)| {
                let mut sum = 0.0;
                let mut sh = vec![0.0; max_len + 1];
                for &(len, eta, jac) in &images {
                    let v = a.eval(m, busemann_gradient(eta, m)?);
                    if v == 0.0 {
                        continue;
                    }
                    let c = w * jac * v * (n_dim * busemann(eta, m)?).exp();
                    sum += c;
                    sh[len] += c.abs();
                }
                Ok((sum, sh))
            })
            .collect();
        let mut total = 0.0;
        shells.iter_mut().for_each(|v| *v = 0.0);
        for r in per_node {
            let (v, sh) = r?;
            total += v;
            for (t, x) in shells.iter_mut().zip(&sh) {
                *t += x;
            }
        }
        Ok(total)
    };
    let (value, quad_err) = refine(quad, &mut eval)?;
    let tail = tail_bound(&shells)?;
    Ok(MeasureValue {
        value,
        error_bound: quad_err + tail,
        word_len_used: Some(max_len),
        shell_sums: shells,
        ..MeasureValue::zero()
    })
}

/// `mu_xi(a)` by the route native to the geometry: the group sum in the
/// ball, the pushforward limit in the plane.
pub fn mu_xi(
    geom: &ModelGeometry,
    grp: &SchottkyGroup,
    xi: BoundaryPoint,
    a: &dyn Symbol,
    max_word_len: usize,
    quad: &QuadratureSpec,
) -> Result<MeasureValue> {
    if geom.is_hyperbolic() {
        mu_xi_group_sum(grp, xi, a, max_word_len, quad)
    } else {
        let s = a.support();
        // enough time for the support to reach |m| >= 1/epsilon0 moving along xi
        let t_max = (s.center.0.norm() + s.radius + 1.0 / geom.epsilon0 + 2.0).ceil();
        mu_xi_pushforward(geom, grp, xi, a, t_max, 0, quad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceCheck {
    pub t: f64,
    pub lhs: MeasureValue,
    pub rhs: MeasureValue,
    pub gap: f64,
}

/// Compares `mu_xi(a o g^t)` with `mu_xi(a)`, both by the pushforward route.
#[allow(clippy::too_many_arguments)]
pub fn check_invariance(
    geom: &ModelGeometry,
    grp: &SchottkyGroup,
    xi: BoundaryPoint,
    a: std::sync::Arc<dyn Symbol>,
    t: f64,
    t_max: f64,
    max_word_len: usize,
    quad: &QuadratureSpec,
) -> Result<InvarianceCheck> {
    let rhs = mu_xi_pushforward(geom, grp, xi, a.as_ref(), t_max, max_word_len, quad)?;
    let lhs = if t == 0.0 {
        rhs.clone()
    } else {
        let composed = FlowComposed::new(a, t, grp)?;
        mu_xi_pushforward(geom, grp, xi, &composed, t_max, max_word_len, quad)?
    };
    Ok(InvarianceCheck { t, gap: (lhs.value - rhs.value).abs(), lhs, rhs })
}

/// Test functions on the boundary at infinity of the quotient, written in
/// the arc-length parameter `s` in `[0, 1]` of each free arc.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BoundaryTest {
    Constant { value: f64 },
    /// `1 + amplitude cos(2 pi harmonic s)`.
    ArcFourier { amplitude: f64, harmonic: u32 },
}

impl BoundaryTest {
    /// Value at a boundary point of the closed free arcs.
    pub fn eval(&self, grp: &SchottkyGroup, xi: BoundaryPoint) -> f64 {
        match *self {
            BoundaryTest::Constant { value } => value,
            BoundaryTest::ArcFourier { amplitude, harmonic } => {
                let theta = xi.angle();
                let arc = grp.free_arcs().iter().find(|a| a.contains_angle(theta)).unwrap_or(&grp.free_arcs()[0]);
                let s = ((theta - arc.start).rem_euclid(TAU) / arc.length()).min(1.0);
                1.0 + amplitude * (TAU * harmonic as f64 * s).cos()
            }
        }
    }
}

/// Maps a point of the discontinuity set into the closed free arcs.
pub fn reduce_boundary(grp: &SchottkyGroup, xi: BoundaryPoint) -> Result<BoundaryPoint> {
    let mut p = xi;
    for _ in 0..MAX_BOUNDARY_STEPS {
        let hit = grp.letters().into_iter().find(|&l| grp.target_disk(l).contains(p.0));
        match hit {
            None => return Ok(p),
            Some(l) => p = grp.letter_isometry(-l).boundary_action(p),
        }
    }
    Err(Error::Reduction { steps: MAX_BOUNDARY_STEPS })
}

/// Forward endpoint of a trajectory on the quotient, reduced to the free
/// arcs, or `None` if it has not provably escaped by `horizon`.
pub fn quotient_endpoint(geom: &ModelGeometry, grp: &SchottkyGroup, z: &UnitPhasePoint, horizon: f64) -> Result<Option<BoundaryPoint>> {
    if !geom.is_hyperbolic() {
        return Ok(Some(geom.xi_plus_infinity(z)));
    }
    let mut frame = Frame::from_phase(z);
    if grp.rank() == 0 {
        return Ok(Some(frame.endpoint()));
    }
    let mut t = 0.0;
    loop {
        let end = frame.endpoint();
        let theta = end.angle();
        // the boundary arc cut off by a hull geodesic lies in the discontinuity set
        let escaped = grp.hull_geodesics().iter().any(|h| {
            let d = (theta - h.mid_angle + PI).rem_euclid(TAU) - PI;
            d.abs() < h.half_angle
        });
        if escaped {
            return reduce_boundary(grp, end).map(Some);
        }
        if t >= horizon {
            return Ok(None);
        }
        frame = grp.reduce_frame(&frame.flow(1.0))?.0;
        t += 1.0;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisintegrationCheck {
    pub lhs: f64,
    /// Boundary-quadrature difference plus the integrated `mu_xi` error bounds.
    pub lhs_error: f64,
    pub rhs: f64,
    pub sigma: f64,
    pub gap: f64,
    /// Fraction of samples with `a != 0` that did not escape by the horizon.
    pub dropped_fraction: f64,
    pub n_samples: usize,
}

/// Compares `int f(xi) mu_xi(a) dxi` (boundary quadrature over the free arcs
/// with the round measure) with `int f(xi_+inf) a d mu_L` (Monte Carlo).
#[allow(clippy::too_many_arguments)]
pub fn check_disintegration(
    geom: &ModelGeometry,
    grp: &SchottkyGroup,
    a: &dyn Symbol,
    f: &BoundaryTest,
    quad: &QuadratureSpec,
    max_word_len: usize,
    mc_samples: usize,
    seed: u64,
) -> Result<DisintegrationCheck> {
    check_disintegration_with_horizon(geom, grp, a, f, quad, max_word_len, mc_samples, seed, T_ESCAPE)
}

/// As [`check_disintegration`], with samples that have not escaped by
/// `horizon` counted as dropped.
#[allow(clippy::too_many_arguments)]
pub fn check_disintegration_with_horizon(
    geom: &ModelGeometry,
    grp: &SchottkyGroup,
    a: &dyn Symbol,
    f: &BoundaryTest,
    quad: &QuadratureSpec,
    max_word_len: usize,
    mc_samples: usize,
    seed: u64,
    horizon: f64,
) -> Result<DisintegrationCheck> {
    quad.validate()?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Config(format!("escape horizon must be positive, got {horizon}")));
    }
    check_setting(geom, grp, a)?;
    if mc_samples < 1000 {
        return Err(Error::Config(format!("need at least 1000 Monte Carlo samples, got {mc_samples}")));
    }

    let n_fine = quad.points;
    let n_coarse = (quad.points / 2).max(2);
    let mut lhs_fine = 0.0;
    let mut lhs_coarse = 0.0;
    let mut mu_err = 0.0;
    for arc in grp.free_arcs() {
        for (n, acc) in [(n_fine, &mut lhs_fine), (n_coarse, &mut lhs_coarse)] {
            for (theta, w) in gauss_interval(arc.start, arc.end, n) {
                let xi = BoundaryPoint::from_angle(theta);
                let fv = f.eval(grp, xi);
                let mv = mu_xi(geom, grp, xi, a, max_word_len, quad)?;
                *acc += w * fv * mv.value;
                if n == n_fine {
                    mu_err += w * fv.abs() * mv.error_bound;
                }
            }
        }
    }

    let s = a.support();
    let (volume, sample): (f64, Sampler) = if geom.is_hyperbolic() {
        let ch = s.radius.cosh();
        (
            TAU * (ch - 1.0),
            Box::new(move |rng: &mut ChaCha8Rng| {
                let rho = (1.0 + rng.gen::<f64>() * (ch - 1.0)).acosh();
                let w = C64::from_polar((rho / 2.0).tanh(), TAU * rng.gen::<f64>());
                BallPoint(ball_translate(s.center.0, w))
            }),
        )
    } else {
        (
            PI * s.radius * s.radius,
            Box::new(move |rng: &mut ChaCha8Rng| {
                let rho = s.radius * rng.gen::<f64>().sqrt();
                BallPoint(s.center.0 + C64::from_polar(rho, TAU * rng.gen::<f64>()))
            }),
        )
    };
    let chunks = mc_samples.div_ceil(CHUNK);
    let parts: Vec<Result<(f64, f64, usize, usize)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let count = CHUNK.min(mc_samples - c * CHUNK);
            let (mut sum, mut sumsq, mut active, mut dropped) = (0.0, 0.0, 0usize, 0usize);
            for _ in 0..count {
                let m = sample(&mut rng);
                let theta = TAU * rng.gen::<f64>();
                let z = UnitPhasePoint::from_angle(geom, m, theta);
                let av = a.eval_phase(&z);
                if av == 0.0 {
                    continue;
                }
                active += 1;
                match quotient_endpoint(geom, grp, &z, horizon)? {
                    Some(end) => {
                        let v = f.eval(grp, end) * av;
                        sum += v;
                        sumsq += v * v;
                    }
                    None => dropped += 1,
                }
            }
            Ok((sum, sumsq, active, dropped))
        })
        .collect();
    let (mut sum, mut sumsq, mut active, mut dropped) = (0.0, 0.0, 0usize, 0usize);
    for p in parts {
        let (a1, b1, c1, d1) = p?;
        sum += a1;
        sumsq += b1;
        active += c1;
        dropped += d1;
    }
    let nf = mc_samples as f64;
    let mean = sum / nf;
    let var = (sumsq / nf - mean * mean).max(0.0) * nf / (nf - 1.0);
    let scale = volume * TAU;
    let rhs = scale * mean;
    let sigma = scale * (var / nf).sqrt();
    Ok(DisintegrationCheck {
        lhs: lhs_fine,
        lhs_error: (lhs_fine - lhs_coarse).abs() + mu_err,
        rhs,
        sigma,
        gap: (lhs_fine - rhs).abs(),
        dropped_fraction: if active > 0 { dropped as f64 / active as f64 } else { 0.0 },
        n_samples: mc_samples,
    })
}
