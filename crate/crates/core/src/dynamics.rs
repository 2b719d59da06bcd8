//! Geodesic flow on the quotient, trapped-set measures and escape rates.
//!
//! The compact core `K0` of a hyperbolic Schottky surface is the closed
//! `margin`-neighborhood of its convex core. Its lift is a convex subset of
//! the ball, so a geodesic segment whose two endpoints lie over `K0` stays
//! over `K0` throughout: `T(t)` membership is decided from the endpoint alone.
//! In the Euclidean plane `K0` is the disk `|m| <= R0`.
//!
//! Monte Carlo estimates are split into fixed chunks; chunk `k` draws from a
//! ChaCha stream keyed by `(seed, k)` and only integer counts are merged, so
//! results are bit-identical for any number of worker threads.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BallPoint, Frame, GeometryKind, ModelGeometry, UnitPhasePoint, C64};
use crate::schottky::SchottkyGroup;
use crate::stats::weighted_line_fit;

const CHUNK: usize = 8192;
const EFFICIENCY_FLOOR: f64 = 1e-3;
/// Quotient flows are advanced in steps of at most this length, with a
/// reduction to the fundamental domain after each step.
const FLOW_STEP: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum CoreShape {
    /// Closed neighborhood of the convex core of width `margin`.
    HullNeighborhood { margin: f64 },
    /// Euclidean disk `|m| <= radius`.
    Disk { radius: f64 },
}

/// The compact set `K0` whose trapped subsets `T(t)` are measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompactCore {
    pub geometry: ModelGeometry,
    pub shape: CoreShape,
    group: SchottkyGroup,
    /// Proposal radius: hyperbolic distance from the origin (ball) or
    /// Euclidean radius (plane) containing `K0` within the fundamental domain.
    sample_radius: f64,
    exact_area: Option<f64>,
}

impl CompactCore {
    /// `K0` for a nonelementary or cyclic Schottky group: the
    /// `margin`-neighborhood of the convex core.
    pub fn hyperbolic(group: &SchottkyGroup, margin: f64) -> Result<Self> {
        if !(margin > 0.0 && margin.is_finite()) {
            return Err(Error::Config(format!("core margin {margin} must be positive")));
        }
        if group.rank() == 0 {
            return Err(Error::Config(
                "the trivial group has an empty convex core; no compact core exists".into(),
            ));
        }
        let mut core = CompactCore {
            geometry: ModelGeometry::hyperbolic(),
            shape: CoreShape::HullNeighborhood { margin },
            group: group.clone(),
            sample_radius: 0.0,
            exact_area: None,
        };
        core.sample_radius = core.scan_radius()?;
        if group.rank() == 1 {
            let len = 2.0 * group.generators()[0].su11().alpha.norm().acosh();
            core.exact_area = Some(2.0 * len * margin.sinh());
        }
        Ok(core)
    }

    pub fn euclidean(radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Config(format!("core radius {radius} must be positive")));
        }
        Ok(CompactCore {
            geometry: ModelGeometry::euclidean(),
            shape: CoreShape::Disk { radius },
            group: SchottkyGroup::trivial(),
            sample_radius: radius,
            exact_area: Some(PI * radius * radius),
        })
    }

    pub fn group(&self) -> &SchottkyGroup {
        &self.group
    }

    pub fn sample_radius(&self) -> f64 {
        self.sample_radius
    }

    /// Area of `K0` in the quotient when known in closed form.
    pub fn exact_area(&self) -> Option<f64> {
        self.exact_area
    }

    pub fn describe(&self) -> String {
        match self.shape {
            CoreShape::HullNeighborhood { margin } => format!(
                "convex-core neighborhood of width {margin} for a rank-{} group",
                self.group.rank()
            ),
            CoreShape::Disk { radius } => format!("Euclidean disk of radius {radius}"),
        }
    }

    /// Membership for a point already in the fundamental domain.
    pub fn contains_in_domain(&self, q: C64) -> bool {
        match self.shape {
            CoreShape::Disk { radius } => q.norm() <= radius,
            CoreShape::HullNeighborhood { margin } => {
                self.group.in_domain(q)
                    && self.group.hull_geodesics().iter().all(|h| h.signed_distance(q) <= margin)
            }
        }
    }

    /// Membership of the projection of an arbitrary lifted point.
    pub fn contains(&self, q: BallPoint) -> Result<bool> {
        match self.shape {
            CoreShape::Disk { .. } => Ok(self.contains_in_domain(q.0)),
            CoreShape::HullNeighborhood { .. } => {
                let (p, _) = self.group.reduce_to_domain(q)?;
                Ok(self.contains_in_domain(p.0))
            }
        }
    }

    fn contains_frame(&self, f: &Frame) -> Result<(bool, Frame)> {
        let (g, _) = self.group.reduce_frame(f)?;
        Ok((self.contains_in_domain(g.base().0), g))
    }

    /// Largest hyperbolic distance from the origin of a point of `K0` in the
    /// fundamental domain, from a polar scan, plus a safety slack.
    fn scan_radius(&self) -> Result<f64> {
        let n_angle = 720;
        let (step, rho_max) = (0.02, 20.0);
        let n_rho = (rho_max / step) as usize;
        let best = (0..n_angle)
            .into_par_iter()
            .map(|i| {
                let dir = C64::from_polar(1.0, TAU * i as f64 / n_angle as f64);
                let mut far: f64 = 0.0;
                for j in 0..=n_rho {
                    let rho = j as f64 * step;
                    if self.contains_in_domain(dir * (rho / 2.0).tanh()) {
                        far = rho;
                    }
                }
                far
            })
            .reduce(|| 0.0, f64::max);
        if best >= rho_max - 1.0 {
            return Err(Error::Config(format!(
                "core ({}) reaches distance {best} from the origin; it is not compact in the scan",
                self.describe()
            )));
        }
        Ok(best + 0.25)
    }

    /// Draws a point of `S*K0` with Liouville-uniform law; returns it with
    /// the number of proposals used.
    fn sample<R: Rng>(&self, rng: &mut R) -> Result<(UnitPhasePoint, usize)> {
        let limit = (1.0 / EFFICIENCY_FLOOR) as usize;
        for proposals in 1..=limit {
            let m = match self.geometry.kind {
                GeometryKind::EuclideanPlane => {
                    let r = self.sample_radius * rng.gen::<f64>().sqrt();
                    C64::from_polar(r, TAU * rng.gen::<f64>())
                }
                GeometryKind::HyperbolicBall => {
                    let u: f64 = rng.gen();
                    let rho = (1.0 + u * (self.sample_radius.cosh() - 1.0)).acosh();
                    C64::from_polar((rho / 2.0).tanh(), TAU * rng.gen::<f64>())
                }
            };
            let theta = TAU * rng.gen::<f64>();
            if self.contains_in_domain(m) {
                let z = UnitPhasePoint::from_angle(&self.geometry, BallPoint(m), theta);
                return Ok((z, proposals));
            }
        }
        Err(self.efficiency_error())
    }

    fn efficiency_error(&self) -> Error {
        Error::Config(format!(
            "rejection sampler efficiency below {EFFICIENCY_FLOOR} for core: {}",
            self.describe()
        ))
    }

    /// Area of the proposal region.
    fn proposal_area(&self) -> f64 {
        match self.geometry.kind {
            GeometryKind::EuclideanPlane => PI * self.sample_radius * self.sample_radius,
            GeometryKind::HyperbolicBall => TAU * (self.sample_radius.cosh() - 1.0),
        }
    }
}

/// Flows `z` for time `t` on the quotient: the lift is flowed in steps and
/// brought back to the fundamental domain after each step.
pub fn quotient_flow(geom: &ModelGeometry, grp: &SchottkyGroup, z: &UnitPhasePoint, t: f64) -> Result<UnitPhasePoint> {
    match geom.kind {
        GeometryKind::EuclideanPlane => {
            if grp.rank() > 0 {
                return Err(Error::Unsupported("group actions on the Euclidean plane".into()));
            }
            Ok(geom.geodesic(z, t))
        }
        GeometryKind::HyperbolicBall => {
            let mut f = grp.reduce_frame(&Frame::from_phase(z))?.0;
            let steps = (t.abs() / FLOW_STEP).ceil().max(1.0) as usize;
            let dt = t / steps as f64;
            for _ in 0..steps {
                f = grp.reduce_frame(&f.flow(dt))?.0;
            }
            Ok(f.to_phase())
        }
    }
}

/// How `T(t)` membership is evaluated along a sample's trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrapEvaluation {
    /// Flow the initial point for each time `t` and test the endpoint.
    Direct,
    /// Push the sample forward between consecutive grid times, reducing and
    /// testing at every grid time.
    Stepwise,
}

/// Estimates of `mu_L(T(t))` on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrappedMeasureCurve {
    pub times: Vec<f64>,
    pub estimates: Vec<f64>,
    /// Binomial standard errors of the trapped fraction, scaled by `mu_L(S*K0)`.
    pub stderrs: Vec<f64>,
    pub survivors: Vec<u64>,
    pub n_samples: u64,
    pub seed: u64,
    /// `mu_L(S*K0)` and its standard error (zero when known exactly).
    pub core_measure: f64,
    pub core_measure_stderr: f64,
}

impl TrappedMeasureCurve {
    /// A noiseless curve from given values, e.g. a closed-form model.
    pub fn from_values(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() || times.is_empty() {
            return Err(Error::Domain("times and values must be nonempty and of equal length".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("curve times must be strictly increasing".into()));
        }
        let n = times.len();
        Ok(TrappedMeasureCurve {
            core_measure: values[0],
            times,
            estimates: values,
            stderrs: vec![0.0; n],
            survivors: vec![0; n],
            n_samples: 0,
            seed: 0,
            core_measure_stderr: 0.0,
        })
    }

    /// Log-linear interpolation (linear where a value vanishes).
    pub fn value_at(&self, t: f64) -> Result<f64> {
        let (ts, vs) = (&self.times, &self.estimates);
        let last = *ts.last().unwrap();
        if t < ts[0] - 1e-12 || t > last + 1e-12 {
            return Err(Error::Extrapolation(format!(
                "time {t} is outside the curve range [{}, {last}]",
                ts[0]
            )));
        }
        let i = ts.partition_point(|&s| s <= t).clamp(1, ts.len().max(2) - 1);
        if ts.len() == 1 {
            return Ok(vs[0]);
        }
        let (t0, t1, v0, v1) = (ts[i - 1], ts[i], vs[i - 1], vs[i]);
        let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        if v0 > 0.0 && v1 > 0.0 {
            Ok((v0.ln() * (1.0 - w) + v1.ln() * w).exp())
        } else {
            Ok(v0 * (1.0 - w) + v1 * w)
        }
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() || times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(Error::Domain("times must be finite and nonnegative".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("times must be strictly increasing".into()));
    }
    Ok(())
}

/// Runs `f` on each chunk of the sample index space with its own stream.
fn run_chunks<T, F>(n_samples: usize, seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, usize) -> Result<T> + Sync,
{
    let n_chunks = n_samples.div_ceil(CHUNK);
    (0..n_chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let size = CHUNK.min(n_samples - k * CHUNK);
            f(&mut rng, size)
        })
        .collect()
}

/// Survival indicators of one sample across the time grid: entry `k` is set
/// when the sample is trapped up to `times[k]`.
fn survival(core: &CompactCore, z: &UnitPhasePoint, times: &[f64], order: TrapEvaluation) -> Result<Vec<bool>> {
    let mut out = Vec::with_capacity(times.len());
    match core.shape {
        CoreShape::Disk { radius } => {
            let dir = z.nu / z.nu.norm();
            for &t in times {
                let ok = (z.m.0 + dir * t).norm() <= radius;
                out.push(ok && out.last().copied().unwrap_or(true));
            }
        }
        CoreShape::HullNeighborhood { .. } => {
            let f0 = Frame::from_phase(z);
            let mut cur = f0;
            let mut t_prev = 0.0;
            let mut alive = true;
            for &t in times {
                if !alive {
                    out.push(false);
                    continue;
                }
                let (inside, g) = match order {
                    TrapEvaluation::Direct => core.contains_frame(&f0.flow(t))?,
                    TrapEvaluation::Stepwise => {
                        let mut f = cur;
                        let mut remaining = t - t_prev;
                        while remaining > 0.0 {
                            let dt = remaining.min(FLOW_STEP);
                            f = core.group.reduce_frame(&f.flow(dt))?.0;
                            remaining -= dt;
                        }
                        core.contains_frame(&f)?
                    }
                };
                cur = g;
                t_prev = t;
                alive = inside;
                out.push(inside);
            }
        }
    }
    Ok(out)
}

/// Monte Carlo estimate of `t -> mu_L(T(t))` on a grid, with common random
/// numbers across the grid so the estimated curve is nonincreasing.
pub fn trapped_curve(
    core: &CompactCore,
    times: &[f64],
    n_samples: usize,
    seed: u64,
    order: TrapEvaluation,
) -> Result<TrappedMeasureCurve> {
    check_times(times)?;
    if n_samples < 1000 {
        return Err(Error::Config(format!("n_samples = {n_samples} is below the minimum of 1000")));
    }
    let chunks = run_chunks(n_samples, seed, |rng, size| {
        let mut counts = vec![0u64; times.len()];
        let mut proposals = 0usize;
        for _ in 0..size {
            let (z, p) = core.sample(rng)?;
            proposals += p;
            if proposals > 10_000 && (size as f64) / (proposals as f64) < EFFICIENCY_FLOOR {
                return Err(core.efficiency_error());
            }
            for (c, ok) in counts.iter_mut().zip(survival(core, &z, times, order)?) {
                *c += ok as u64;
            }
        }
        Ok((counts, proposals as u64))
    })?;
    let mut survivors = vec![0u64; times.len()];
    let mut proposals = 0u64;
    for (c, p) in chunks {
        for (s, v) in survivors.iter_mut().zip(c) {
            *s += v;
        }
        proposals += p;
    }
    let n = n_samples as f64;
    let (core_measure, core_measure_stderr) = match core.exact_area {
        Some(a) => (TAU * a, 0.0),
        None => {
            let acc = n / proposals as f64;
            let m = TAU * core.proposal_area() * acc;
            (m, m * ((1.0 - acc) / n).sqrt())
        }
    };
    let mut estimates = Vec::with_capacity(times.len());
    let mut stderrs = Vec::with_capacity(times.len());
    for &s in &survivors {
        let f = s as f64 / n;
        estimates.push(core_measure * f);
        stderrs.push(core_measure * (f * (1.0 - f) / n).sqrt());
    }
    Ok(TrappedMeasureCurve {
        times: times.to_vec(),
        estimates,
        stderrs,
        survivors,
        n_samples: n_samples as u64,
        seed,
        core_measure,
        core_measure_stderr,
    })
}

/// `mu_L(T(t))` at a single time, with its standard error.
pub fn estimate_trapped_measure(core: &CompactCore, t: f64, n_samples: usize, seed: u64) -> Result<(f64, f64)> {
    let c = trapped_curve(core, &[t], n_samples, seed, TrapEvaluation::Direct)?;
    Ok((c.estimates[0], c.stderrs[0]))
}

/// Least-squares escape rate from a trapped-measure curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeFit {
    #[serde(rename = "Q")]
    pub q: f64,
    pub stderr: f64,
    pub fit_window: [f64; 2],
    pub n_points: usize,
    /// The fit is a finite-window slope; it does not separate limsup from lim.
    pub note: String,
}

/// Discards times below this value as transient.
pub const MIN_FIT_TIME: f64 = 2.0;
const MIN_SURVIVORS: u64 = 50;

pub fn estimate_escape_rate(curve: &TrappedMeasureCurve, window: [f64; 2]) -> Result<EscapeFit> {
    let (mut xs, mut ys, mut ss) = (Vec::new(), Vec::new(), Vec::new());
    let noiseless = curve.n_samples == 0;
    for i in 0..curve.times.len() {
        let (t, e, s) = (curve.times[i], curve.estimates[i], curve.stderrs[i]);
        if t < window[0] || t > window[1] || t < MIN_FIT_TIME || !(e > 0.0) {
            continue;
        }
        if !noiseless && (curve.survivors[i] < MIN_SURVIVORS || s / e > 0.5) {
            continue;
        }
        xs.push(t);
        ys.push(e.ln());
        ss.push(if noiseless { 1.0 } else { s / e });
    }
    if xs.len() < 4 {
        return Err(Error::InsufficientSignal(format!(
            "only {} usable points in window [{}, {}]; increase the sample count or lower the times",
            xs.len(),
            window[0],
            window[1]
        )));
    }
    let fit = weighted_line_fit(&xs, &ys, &ss)?;
    Ok(EscapeFit {
        q: fit.slope,
        stderr: fit.slope_stderr,
        fit_window: [xs[0], *xs.last().unwrap()],
        n_points: xs.len(),
        note: "windowed slope; limsup and lim are not distinguished".into(),
    })
}

/// `P(J^u) = delta - n` in constant curvature.
pub fn pressure_constant_curvature(delta: f64, n: usize) -> Result<f64> {
    let nf = n as f64;
    if !(delta >= 0.0 && delta < nf) {
        return Err(Error::Domain(format!("delta = {delta} must lie in [0, {n})")));
    }
    Ok(delta - nf)
}

/// Operator norm of a 3x3 matrix, from the Jacobi eigenvalues of `A^T A`.
fn op_norm3(a: &[[f64; 3]; 3]) -> f64 {
    let mut s = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            s[i][j] = (0..3).map(|k| a[k][i] * a[k][j]).sum();
        }
    }
    for _ in 0..100 {
        let off = s[0][1].powi(2) + s[0][2].powi(2) + s[1][2].powi(2);
        let diag = s[0][0].powi(2) + s[1][1].powi(2) + s[2][2].powi(2);
        if off <= 1e-30 * diag {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if s[p][q] == 0.0 {
                continue;
            }
            let theta = 0.5 * (2.0 * s[p][q]).atan2(s[q][q] - s[p][p]);
            let (sn, cs) = theta.sin_cos();
            let mut r = [[0.0; 3]; 3];
            for (i, row) in r.iter_mut().enumerate() {
                row[i] = 1.0;
            }
            r[p][p] = cs;
            r[q][q] = cs;
            r[p][q] = sn;
            r[q][p] = -sn;
            // s <- r^T s r
            let mut t = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    t[i][j] = (0..3).map(|k| s[i][k] * r[k][j]).sum();
                }
            }
            for i in 0..3 {
                for j in 0..3 {
                    s[i][j] = (0..3).map(|k| r[k][i] * t[k][j]).sum();
                }
            }
        }
    }
    s[0][0].max(s[1][1]).max(s[2][2]).max(0.0).sqrt()
}

/// Matrix of `dg^t` at `z` in a Sasaki-orthonormal frame.
///
/// Hyperbolic: the flow is right multiplication by `a_t = diag(e^{t/2}, e^{-t/2})`
/// on frames, so in left-trivialized coordinates `dg^t` is `Ad(a_t^{-1})`,
/// written in the basis `H/2, (E+F)/2, (E-F)/2` of `sl(2, R)`, which is
/// orthonormal for the Sasaki metric. Euclidean: coordinates `(dm, dtheta)`.
pub fn flow_differential(geom: &ModelGeometry, z: &UnitPhasePoint, t: f64) -> [[f64; 3]; 3] {
    match geom.kind {
        GeometryKind::EuclideanPlane => {
            let th = z.nu.arg();
            [[1.0, 0.0, -t * th.sin()], [0.0, 1.0, t * th.cos()], [0.0, 0.0, 1.0]]
        }
        GeometryKind::HyperbolicBall => {
            let (e, ei) = ((t / 2.0).exp(), (-t / 2.0).exp());
            let basis = [
                [[0.5, 0.0], [0.0, -0.5]],
                [[0.0, 0.5], [0.5, 0.0]],
                [[0.0, 0.5], [-0.5, 0.0]],
            ];
            let mut out = [[0.0; 3]; 3];
            for (j, x) in basis.iter().enumerate() {
                // a^{-1} X a with a = diag(e, ei)
                let y = [[x[0][0], x[0][1] * ei / e], [x[1][0] * e / ei, x[1][1]]];
                let (a, b, c) = (y[0][0], y[0][1], y[1][0]);
                out[0][j] = 2.0 * a;
                out[1][j] = b + c;
                out[2][j] = b - c;
            }
            out
        }
    }
}

pub fn flow_differential_norm(geom: &ModelGeometry, z: &UnitPhasePoint, t: f64) -> f64 {
    op_norm3(&flow_differential(geom, z, t))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaMaxEstimate {
    pub lambda_max: f64,
    /// `(t, max over trapped samples of log ||dg^t|| / t)` for each grid time.
    pub slopes: Vec<(f64, f64)>,
    pub n_trapped: u64,
}

/// Maximal expansion rate over samples trapped up to the last grid time.
pub fn estimate_lambda_max(core: &CompactCore, t_grid: &[f64], n_samples: usize, seed: u64) -> Result<LambdaMaxEstimate> {
    check_times(t_grid)?;
    let grid: Vec<f64> = t_grid.iter().copied().filter(|t| *t > 0.0).collect();
    if grid.is_empty() {
        return Err(Error::Domain("the time grid needs a positive time".into()));
    }
    let t_last = *grid.last().unwrap();
    let chunks = run_chunks(n_samples, seed, |rng, size| {
        let mut best = vec![f64::NEG_INFINITY; grid.len()];
        let mut trapped = 0u64;
        for _ in 0..size {
            let (z, _) = core.sample(rng)?;
            if !survival(core, &z, &[t_last], TrapEvaluation::Direct)?[0] {
                continue;
            }
            trapped += 1;
            for (b, &t) in best.iter_mut().zip(&grid) {
                *b = b.max(flow_differential_norm(&core.geometry, &z, t).ln() / t);
            }
        }
        Ok((best, trapped))
    })?;
    let mut best = vec![f64::NEG_INFINITY; grid.len()];
    let mut n_trapped = 0;
    for (b, n) in chunks {
        for (x, y) in best.iter_mut().zip(b) {
            *x = x.max(y);
        }
        n_trapped += n;
    }
    if n_trapped == 0 {
        return Err(Error::InsufficientSignal(format!(
            "no sample stayed in the core up to t = {t_last}"
        )));
    }
    Ok(LambdaMaxEstimate {
        lambda_max: *best.last().unwrap(),
        slopes: grid.iter().copied().zip(best).collect(),
        n_trapped,
    })
}

/// Number of points of the default `theta` grid.
pub const THETA_POINTS: usize = 101;

/// `sup_{0 <= theta <= 1} h^{1-theta} mu_L(T(theta |log h| / Lambda))`.
pub fn interpolated_remainder(h: f64, lambda: f64, curve: &TrappedMeasureCurve) -> Result<f64> {
    interpolated_remainder_grid(h, lambda, curve, THETA_POINTS)
}

pub fn interpolated_remainder_grid(h: f64, lambda: f64, curve: &TrappedMeasureCurve, points: usize) -> Result<f64> {
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::Domain(format!("h = {h} must lie in (0, 1)")));
    }
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("Lambda = {lambda} must be positive")));
    }
    if points < 2 {
        return Err(Error::Domain("the theta grid needs at least two points".into()));
    }
    let t_end = h.ln().abs() / lambda;
    if t_end > *curve.times.last().unwrap() + 1e-12 || curve.times[0] > 1e-12 {
        return Err(Error::Extrapolation(format!(
            "curve covers [{}, {}] but [0, {t_end}] is needed",
            curve.times[0],
            curve.times.last().unwrap()
        )));
    }
    let mut best = f64::NEG_INFINITY;
    for k in 0..points {
        let theta = k as f64 / (points - 1) as f64;
        let v = h.powf(1.0 - theta) * curve.value_at(theta * t_end)?;
        best = best.max(v);
    }
    Ok(best)
}

/// `t_e = log(1/h) / (2 Lambda0)`.
pub fn ehrenfest_time(h: f64, lambda0: f64) -> Result<f64> {
    if !(h > 0.0 && h < 1.0) || !(lambda0 > 0.0) {
        return Err(Error::Domain(format!("need 0 < h < 1 and Lambda0 > 0, got h = {h}, Lambda0 = {lambda0}")));
    }
    Ok((1.0 / h).ln() / (2.0 * lambda0))
}

/// Predicted remainder exponents in constant curvature,
/// `((n - delta) / (2 Lambda0), (n - delta) / Lambda0)`.
pub fn remainder_exponents(delta: f64, n: usize, lambda0: f64) -> Result<(f64, f64)> {
    let p = pressure_constant_curvature(delta, n)?;
    if !(lambda0 > 0.0) {
        return Err(Error::Domain(format!("Lambda0 = {lambda0} must be positive")));
    }
    Ok((-p / (2.0 * lambda0), -p / lambda0))
}

/// Lower-bound constant `c = min_h mu_L(T(|log h| / (2 Lambda0))) / h^{n/2}`
/// over the given `h`, with the individual ratios.
pub fn lower_bound_constant(curve: &TrappedMeasureCurve, hs: &[f64], lambda0: f64, n: usize) -> Result<(f64, Vec<f64>)> {
    let mut ratios = Vec::with_capacity(hs.len());
    for &h in hs {
        let t = ehrenfest_time(h, lambda0)?;
        ratios.push(curve.value_at(t)? / h.powf(n as f64 / 2.0));
    }
    let c = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((c, ratios))
}
