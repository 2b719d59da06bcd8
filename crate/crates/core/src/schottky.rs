//! Fuchsian Schottky groups acting on the ball model.
//!
//! A group of rank `g` is given by `g` hyperbolic generators and `g` pairs of
//! closed disks orthogonal to the unit circle. Generator `k` maps the
//! exterior of its source disk onto the interior of its target disk. Words
//! are sequences of signed letters: `+k` is generator `k` (1-based) and `-k`
//! its inverse. The standard fundamental domain is the complement of the
//! open disks.

use std::f64::consts::{PI, TAU};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BallPoint, BoundaryPoint, Frame, Isometry, Su11, C64};
use crate::stats::line_fit;

/// Default cap on the number of enumerated group elements.
pub const DEFAULT_BUDGET: usize = 5_000_000;

const MAX_REDUCTION_STEPS: usize = 100_000;

/// A closed Euclidean disk in the ball coordinates, orthogonal to the unit circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disk {
    pub center: C64,
    pub radius: f64,
}

impl Disk {
    pub fn new(center: C64, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidGroup(format!("disk radius {radius} must be positive")));
        }
        let mismatch = (center.norm_sqr() - 1.0 - radius * radius).abs();
        if mismatch > 1e-8 * (1.0 + radius * radius) {
            return Err(Error::InvalidGroup(format!(
                "disk (center {center}, radius {radius}) is not orthogonal to the unit circle"
            )));
        }
        Ok(Disk { center, radius })
    }

    /// Disk bounded by the geodesic whose endpoints sit at `angle +- half_angle`.
    pub fn from_arc(angle: f64, half_angle: f64) -> Self {
        Disk { center: C64::from_polar(1.0 / half_angle.cos(), angle), radius: half_angle.tan() }
    }

    /// Open-disk membership.
    pub fn contains(&self, q: C64) -> bool {
        (q - self.center).norm_sqr() < self.radius * self.radius
    }

    pub fn angle(&self) -> f64 {
        self.center.arg()
    }

    /// Half of the angular width of the boundary arc cut out by the disk.
    pub fn half_angle(&self) -> f64 {
        self.radius.atan()
    }

    /// Signed hyperbolic distance from an interior point to the bounding
    /// geodesic, positive outside the disk.
    pub fn signed_distance(&self, q: C64) -> f64 {
        let num = (q - self.center).norm_sqr() - self.radius * self.radius;
        (num / (self.radius * (1.0 - q.norm_sqr()))).asinh()
    }

    /// Endpoints `(start, end)` of the boundary arc in counterclockwise order.
    pub fn arc_endpoints(&self) -> (C64, C64) {
        let (a, h) = (self.angle(), self.half_angle());
        (C64::from_polar(1.0, a - h), C64::from_polar(1.0, a + h))
    }
}

/// A reduced word in the generators.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Word(Vec<i8>);

impl Word {
    pub fn identity() -> Self {
        Word(Vec::new())
    }

    /// Validates that letters are nonzero and that no letter is followed by its inverse.
    pub fn new(letters: Vec<i8>) -> Result<Self> {
        if letters.contains(&0) {
            return Err(Error::Domain("letter 0 is not a generator".into()));
        }
        if letters.windows(2).any(|w| w[0] == -w[1]) {
            return Err(Error::Domain(format!("word {letters:?} is not reduced")));
        }
        Ok(Word(letters))
    }

    /// Freely reduces an arbitrary letter sequence.
    pub fn reduce(letters: &[i8]) -> Self {
        let mut out: Vec<i8> = Vec::with_capacity(letters.len());
        for &l in letters {
            if out.last() == Some(&-l) {
                out.pop();
            } else {
                out.push(l);
            }
        }
        Word(out)
    }

    pub fn letters(&self) -> &[i8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn inverse(&self) -> Word {
        Word(self.0.iter().rev().map(|l| -l).collect())
    }

    /// Reduced concatenation `self * other`.
    pub fn concat(&self, other: &Word) -> Word {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Word::reduce(&v)
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "e");
        }
        let parts: Vec<String> = self.0.iter().map(|l| l.to_string()).collect();
        write!(f, "{}", parts.join(" "))
    }
}

/// A boundary geodesic of the convex hull of the limit set, seen from one
/// free arc of the fundamental domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HullGeodesic {
    /// Endpoint reached clockwise from the free arc.
    pub lo: C64,
    /// Endpoint reached counterclockwise from the free arc.
    pub hi: C64,
    /// Midpoint direction of the boundary arc from `lo` to `hi` (the funnel end).
    pub mid_angle: f64,
    /// Half of the angular length of that arc, in `(0, pi)`.
    pub half_angle: f64,
}

impl HullGeodesic {
    pub fn from_endpoints(lo: C64, hi: C64) -> Self {
        let a0 = lo.arg();
        let span = (hi.arg() - a0).rem_euclid(TAU);
        HullGeodesic { lo, hi, mid_angle: a0 + span / 2.0, half_angle: span / 2.0 }
    }

    /// Signed hyperbolic distance to the geodesic, positive on the funnel side.
    pub fn signed_distance(&self, q: C64) -> f64 {
        let (s, c) = self.half_angle.sin_cos();
        let dir = C64::from_polar(1.0, self.mid_angle);
        let r2 = q.norm_sqr();
        let dot = (q.conj() * dir).re;
        let raw = ((1.0 + r2) * c / s - 2.0 * dot / s) / (1.0 - r2);
        -raw.asinh()
    }
}

/// A counterclockwise arc of the unit circle, `start <= end <= start + 2 pi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeArc {
    pub start: f64,
    pub end: f64,
}

impl FreeArc {
    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.start + self.end)
    }

    pub fn contains_angle(&self, theta: f64) -> bool {
        (theta - self.start).rem_euclid(TAU) <= self.length()
    }
}

/// A Schottky group: generators with their paired disks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchottkyGroup {
    generators: Vec<Isometry>,
    /// `(source, target)` disk of each generator.
    disks: Vec<(Disk, Disk)>,
    basepoint: BallPoint,
    free_arcs: Vec<FreeArc>,
    hull: Vec<HullGeodesic>,
}

impl SchottkyGroup {
    /// Builds and validates a group: pairwise disjoint disks, and each
    /// generator mapping the exterior of its source disk onto the interior
    /// of its target disk.
    pub fn new(generators: Vec<Isometry>, disks: Vec<(Disk, Disk)>) -> Result<Self> {
        if generators.len() != disks.len() {
            return Err(Error::InvalidGroup(format!(
                "{} generators but {} disk pairs",
                generators.len(),
                disks.len()
            )));
        }
        if generators.len() > 100 {
            return Err(Error::InvalidGroup("at most 100 generators are supported".into()));
        }
        let flat: Vec<Disk> = disks.iter().flat_map(|(a, b)| [*a, *b]).collect();
        for i in 0..flat.len() {
            for j in i + 1..flat.len() {
                let (a, b) = (flat[i], flat[j]);
                if (a.center - b.center).norm() <= a.radius + b.radius {
                    return Err(Error::InvalidGroup(format!(
                        "disks {} and {} intersect (centers {}, {}; radii {}, {})",
                        disk_label(i),
                        disk_label(j),
                        a.center,
                        b.center,
                        a.radius,
                        b.radius
                    )));
                }
            }
        }
        for (k, (g, (src, dst))) in generators.iter().zip(&disks).enumerate() {
            check_pairing(k, g, src, dst)?;
        }
        let mut grp = SchottkyGroup {
            generators,
            disks,
            basepoint: BallPoint::origin(),
            free_arcs: Vec::new(),
            hull: Vec::new(),
        };
        grp.free_arcs = grp.compute_free_arcs();
        grp.hull = grp.compute_hull()?;
        Ok(grp)
    }

    pub fn trivial() -> Self {
        SchottkyGroup {
            generators: Vec::new(),
            disks: Vec::new(),
            basepoint: BallPoint::origin(),
            free_arcs: vec![FreeArc { start: -PI, end: PI }],
            hull: Vec::new(),
        }
    }

    /// Cyclic group generated by a translation of length `len` along the
    /// real diameter, toward `+1`.
    pub fn cyclic(len: f64) -> Result<Self> {
        if !(len > 0.0 && len.is_finite()) {
            return Err(Error::InvalidGroup(format!("translation length {len} must be positive")));
        }
        let g = Isometry::translation(len, 0.0);
        let half = half_angle_for_translation(len);
        SchottkyGroup::new(vec![g], vec![(Disk::from_arc(PI, half), Disk::from_arc(0.0, half))])
    }

    /// Two-generator group with four congruent disks of angular half-width
    /// `theta` centered at the angles `0, pi/2, pi, 3pi/2`. Generator 1
    /// translates along the real diameter, generator 2 along the imaginary one.
    pub fn symmetric(theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < PI / 4.0) {
            return Err(Error::InvalidGroup(format!(
                "half-angle {theta} must lie in (0, pi/4) for disjoint disks"
            )));
        }
        let x1 = (1.0 - theta.sin()) / theta.cos();
        let len = 4.0 * x1.atanh();
        let a = Isometry::translation(len, 0.0);
        let b = Isometry::translation(len, PI / 2.0);
        SchottkyGroup::new(
            vec![a, b],
            vec![
                (Disk::from_arc(PI, theta), Disk::from_arc(0.0, theta)),
                (Disk::from_arc(-PI / 2.0, theta), Disk::from_arc(PI / 2.0, theta)),
            ],
        )
    }

    pub fn with_basepoint(mut self, o: BallPoint) -> Result<Self> {
        if o.0.norm() >= 1.0 || !self.in_domain(o.0) {
            return Err(Error::Domain(format!("basepoint {} is not in the fundamental domain", o.0)));
        }
        self.basepoint = o;
        Ok(self)
    }

    pub fn rank(&self) -> usize {
        self.generators.len()
    }

    pub fn generators(&self) -> &[Isometry] {
        &self.generators
    }

    pub fn disk_pairs(&self) -> &[(Disk, Disk)] {
        &self.disks
    }

    pub fn basepoint(&self) -> BallPoint {
        self.basepoint
    }

    /// The counterclockwise boundary arcs of the fundamental domain at infinity.
    pub fn free_arcs(&self) -> &[FreeArc] {
        &self.free_arcs
    }

    /// Convex-hull boundary geodesics, one per free arc (empty for the trivial group).
    pub fn hull_geodesics(&self) -> &[HullGeodesic] {
        &self.hull
    }

    /// All letters `+-1 .. +-g`.
    pub fn letters(&self) -> Vec<i8> {
        let g = self.rank() as i8;
        (1..=g).flat_map(|k| [k, -k]).collect()
    }

    pub fn letter_isometry(&self, l: i8) -> Isometry {
        let g = &self.generators[l.unsigned_abs() as usize - 1];
        if l > 0 {
            *g
        } else {
            g.inverse()
        }
    }

    /// Disk that the letter maps the rest of the plane into.
    pub fn target_disk(&self, l: i8) -> Disk {
        let (src, dst) = self.disks[l.unsigned_abs() as usize - 1];
        if l > 0 {
            dst
        } else {
            src
        }
    }

    pub fn source_disk(&self, l: i8) -> Disk {
        self.target_disk(-l)
    }

    pub fn word_isometry(&self, w: &Word) -> Result<Isometry> {
        let mut m = Isometry::identity();
        for &l in w.letters() {
            if l == 0 || l.unsigned_abs() as usize > self.rank() {
                return Err(Error::Domain(format!("letter {l} out of range for rank {}", self.rank())));
            }
            m = m.compose(&self.letter_isometry(l));
        }
        Ok(Isometry::from_su11(*m.su11()))
    }

    /// Whether `q` lies outside every open disk.
    pub fn in_domain(&self, q: C64) -> bool {
        self.disks.iter().all(|(a, b)| !a.contains(q) && !b.contains(q))
    }

    /// The letter whose target disk contains `q`, if any.
    fn containing_letter(&self, q: C64) -> Option<i8> {
        for (k, (src, dst)) in self.disks.iter().enumerate() {
            if dst.contains(q) {
                return Some(k as i8 + 1);
            }
            if src.contains(q) {
                return Some(-(k as i8 + 1));
            }
        }
        None
    }

    /// Moves `q` into the fundamental domain: returns `(q', w)` with `w(q') = q`.
    pub fn reduce_to_domain(&self, q: BallPoint) -> Result<(BallPoint, Word)> {
        if !(q.0.norm_sqr() < 1.0) {
            return Err(Error::Domain(format!("point {} is not inside the unit ball", q.0)));
        }
        let mut p = q.0;
        let mut letters = Vec::new();
        let inv: Vec<Su11> = self.generators.iter().map(|g| *g.inverse().su11()).collect();
        let fwd: Vec<Su11> = self.generators.iter().map(|g| *g.su11()).collect();
        while let Some(l) = self.containing_letter(p) {
            if letters.len() >= MAX_REDUCTION_STEPS {
                return Err(Error::Reduction { steps: letters.len() });
            }
            let k = l.unsigned_abs() as usize - 1;
            p = if l > 0 { inv[k].act(p) } else { fwd[k].act(p) };
            letters.push(l);
        }
        Ok((BallPoint(p), Word(letters)))
    }

    /// Frame version of [`SchottkyGroup::reduce_to_domain`]: returns the
    /// reduced frame and the number of letters applied.
    pub fn reduce_frame(&self, f: &Frame) -> Result<(Frame, usize)> {
        let mut g = f.0;
        let mut steps = 0;
        loop {
            let q = g.beta / g.alpha.conj();
            let Some(l) = self.containing_letter(q) else { break };
            if steps >= MAX_REDUCTION_STEPS {
                return Err(Error::Reduction { steps });
            }
            let iso = self.letter_isometry(-l);
            g = iso.su11().compose(&g);
            steps += 1;
        }
        Ok((Frame(g).renormalized(), steps))
    }

    /// Calls `f(word, matrix)` for every reduced word of length at most
    /// `max_len`, in depth-first order with the identity first.
    pub fn for_each_word<F: FnMut(&[i8], &Su11)>(&self, max_len: usize, mut f: F) {
        let letters = self.letters();
        let mats: Vec<Su11> = letters.iter().map(|&l| *self.letter_isometry(l).su11()).collect();
        let mut word: Vec<i8> = Vec::with_capacity(max_len);
        f(&word, &Su11::IDENTITY);
        // prefix matrices and the next letter index to try at each depth
        let mut stack: Vec<(Su11, usize)> = vec![(Su11::IDENTITY, 0)];
        while !stack.is_empty() {
            let depth = stack.len() - 1;
            let top = &mut stack[depth];
            if depth == max_len || top.1 == letters.len() {
                stack.pop();
                word.pop();
                continue;
            }
            let i = top.1;
            top.1 += 1;
            let l = letters[i];
            if word.last() == Some(&-l) {
                continue;
            }
            let mut next = top.0.compose(&mats[i]);
            if depth % 8 == 7 {
                next = next.normalized();
            }
            word.push(l);
            f(&word, &next);
            stack.push((next, 0));
        }
    }

    /// Every reduced word of length at most `max_len` with its isometry.
    pub fn enumerate_words(&self, max_len: usize, budget: usize) -> Result<Vec<(Word, Isometry)>> {
        let total = total_words(self.rank(), max_len);
        if total > budget as f64 {
            return Err(Error::Truncation { budget, length: max_len_within(self.rank(), budget) });
        }
        let mut out = Vec::with_capacity(total as usize);
        self.for_each_word(max_len, |w, m| out.push((Word(w.to_vec()), Isometry::from_su11(*m))));
        Ok(out)
    }

    /// Orbit distances `d(o, gamma o)` grouped by word length.
    pub fn shell_distances(&self, max_len: usize, budget: usize) -> Result<Vec<Vec<f64>>> {
        let total = total_words(self.rank(), max_len);
        if total > budget as f64 {
            return Err(Error::Truncation { budget, length: max_len_within(self.rank(), budget) });
        }
        let mut shells: Vec<Vec<f64>> = (0..=max_len)
            .map(|k| Vec::with_capacity(shell_size(self.rank(), k) as usize))
            .collect();
        let o = self.basepoint;
        let at_origin = o.0.norm_sqr() == 0.0;
        let mut overflow = false;
        self.for_each_word(max_len, |w, m| {
            let c = if at_origin {
                m.cosh_displacement()
            } else {
                Isometry::from_su11(*m).cosh_displacement(o)
            };
            overflow |= !c.is_finite();
            shells[w.len()].push(c.max(1.0).acosh());
        });
        if overflow {
            return Err(Error::Precision(format!(
                "orbit distances overflow at word length {max_len}"
            )));
        }
        Ok(shells)
    }

    /// Truncated Poincaré series at exponent `s`.
    pub fn poincare_partial(&self, s: f64, max_len: usize) -> Result<PoincarePartial> {
        if !(s > 0.0) {
            return Err(Error::Domain(format!("exponent s = {s} must be positive")));
        }
        let shells = self.shell_distances(max_len, DEFAULT_BUDGET)?;
        Ok(PoincarePartial::from_shells(&shells, s))
    }

    /// Boundary points `w(p)` where `p` is the attracting fixed point of the
    /// last letter of `w`, over words of length `1..=depth`; deduplicated and
    /// sorted by angle.
    pub fn limit_set_sample(&self, depth: usize) -> Result<Vec<BoundaryPoint>> {
        if depth == 0 {
            return Err(Error::Domain("limit-set depth must be at least 1".into()));
        }
        if self.rank() == 0 {
            return Ok(Vec::new());
        }
        let total = total_words(self.rank(), depth);
        if total > DEFAULT_BUDGET as f64 {
            return Err(Error::Truncation {
                budget: DEFAULT_BUDGET,
                length: max_len_within(self.rank(), DEFAULT_BUDGET),
            });
        }
        let letters = self.letters();
        let attracting: Vec<(i8, C64)> = letters
            .iter()
            .map(|&l| {
                let (_, att) = self.letter_isometry(l).fixed_points().expect("generators are hyperbolic");
                (l, att.0)
            })
            .collect();
        let mut pts: Vec<f64> = Vec::with_capacity(total as usize);
        self.for_each_word(depth, |w, m| {
            if let Some(&last) = w.last() {
                let p = attracting.iter().find(|(l, _)| *l == last).unwrap().1;
                pts.push(m.act(p).arg());
            }
        });
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        if pts.len() > 1 && (pts[0] + TAU - pts[pts.len() - 1]).abs() < 1e-12 {
            pts.pop();
        }
        Ok(pts.into_iter().map(BoundaryPoint::from_angle).collect())
    }

    /// Estimates the exponent of convergence within a budget of enumerated elements.
    pub fn estimate_delta(&self, method: DeltaMethod, budget: usize) -> Result<DeltaEstimate> {
        self.estimate_delta_with(method, budget, DEFAULT_MARGIN)
    }

    pub fn estimate_delta_with(&self, method: DeltaMethod, budget: usize, margin: f64) -> Result<DeltaEstimate> {
        let g = self.rank();
        if g == 0 {
            return Ok(DeltaEstimate { delta: 0.0, stderr: 0.0, method, truncation: 0, truncated: false });
        }
        let mut max_len = max_len_within(g, budget);
        if g == 1 {
            // keep orbit distances far from floating-point overflow
            let len = 2.0 * self.generators[0].su11().alpha.norm().acosh();
            max_len = max_len.min(CYCLIC_MAX_LEN).min((MAX_ORBIT_DISTANCE / len) as usize);
        }
        let truncated = g >= 2 && max_len < DEFAULT_G2_LEN;
        if max_len < 3 {
            return Err(Error::Truncation { budget, length: max_len });
        }
        let shells = self.shell_distances(max_len, budget)?;
        let (delta, stderr) = match method {
            DeltaMethod::SeriesBisection => series_bisection(&shells, margin)?,
            DeltaMethod::OrbitCountSlope => {
                let t_max = self.complete_radius(max_len)?;
                orbit_count_slope(&shells, t_max)?
            }
        };
        let n = 1.0;
        let delta = delta.clamp(0.0, n);
        if delta >= n {
            return Err(Error::InsufficientSignal(format!(
                "delta estimate {delta} is not below the dimension {n}"
            )));
        }
        Ok(DeltaEstimate { delta, stderr, method, truncation: max_len, truncated })
    }

    /// Radius `T` such that every orbit point with `d(o, gamma o) <= T`
    /// comes from a word of length at most `max_len`: the distance from the
    /// basepoint to the union of disks of depth `max_len + 1`.
    pub fn complete_radius(&self, max_len: usize) -> Result<f64> {
        let recenter = Su11 { alpha: C64::new(1.0, 0.0), beta: -self.basepoint.0 }.normalized();
        let letters = self.letters();
        let disks: Vec<(i8, Disk)> = letters.iter().map(|&l| (l, self.target_disk(l))).collect();
        let mut best = f64::INFINITY;
        self.for_each_word(max_len, |w, m| {
            if w.len() != max_len {
                return;
            }
            let last = *w.last().unwrap_or(&0);
            // d(o, m D) = d(h^-1 0, D) with h = recenter * m; 1 - |p|^2 = 1 / |alpha_h|^2
            let h = recenter.compose(m);
            let p = -h.beta / h.alpha;
            let scale = h.alpha.norm_sqr();
            for (l, d) in &disks {
                if *l == -last {
                    continue;
                }
                let power = (p - d.center).norm_sqr() - d.radius * d.radius;
                best = best.min((power * scale / d.radius).asinh());
            }
        });
        if !best.is_finite() {
            return Err(Error::InsufficientSignal("no words to bound the orbit count".into()));
        }
        Ok(best)
    }

    fn compute_free_arcs(&self) -> Vec<FreeArc> {
        if self.disks.is_empty() {
            return vec![FreeArc { start: -PI, end: PI }];
        }
        let mut arcs: Vec<(f64, f64)> = self
            .disks
            .iter()
            .flat_map(|(a, b)| [*a, *b])
            .map(|d| (d.angle() - d.half_angle(), d.angle() + d.half_angle()))
            .collect();
        arcs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let n = arcs.len();
        (0..n)
            .map(|i| {
                let end_of = arcs[i].1;
                let mut next = arcs[(i + 1) % n].0;
                while next < end_of {
                    next += TAU;
                }
                FreeArc { start: end_of, end: next }
            })
            .collect()
    }

    fn disk_letter(&self, d: &Disk) -> i8 {
        for (k, (src, dst)) in self.disks.iter().enumerate() {
            if dst == d {
                return k as i8 + 1;
            }
            if src == d {
                return -(k as i8 + 1);
            }
        }
        unreachable!("disk belongs to the group")
    }

    fn disk_at_angle(&self, theta: f64) -> Disk {
        let p = C64::from_polar(1.0, theta);
        *self
            .disks
            .iter()
            .flat_map(|(a, b)| [a, b])
            .min_by(|a, b| {
                let da = ((a.center - p).norm() - a.radius).abs();
                let db = ((b.center - p).norm() - b.radius).abs();
                da.partial_cmp(&db).unwrap()
            })
            .unwrap()
    }

    /// Limit point in the target disk of `start` that is first reached when
    /// moving from `reference` into that disk, counterclockwise when `ccw`.
    fn extreme_limit_point(&self, start: i8, reference: f64, ccw: bool) -> C64 {
        let offset = |p: C64| {
            let d = p.arg() - reference;
            if ccw {
                d.rem_euclid(TAU)
            } else {
                (-d).rem_euclid(TAU)
            }
        };
        let letters = self.letters();
        let mut m = Su11::IDENTITY;
        let mut z = start;
        let (mut a, mut b) = self.target_disk(z).arc_endpoints();
        for _ in 0..400 {
            if (a - b).norm() < 1e-15 {
                break;
            }
            let mz = m.compose(self.letter_isometry(z).su11()).normalized();
            let mut best: Option<(f64, i8, C64, C64)> = None;
            for &w in &letters {
                if w == -z {
                    continue;
                }
                let (s, e) = self.target_disk(w).arc_endpoints();
                let (s, e) = (mz.act(s), mz.act(e));
                let key = if ccw { offset(s) } else { offset(e) };
                if best.is_none_or(|(k, ..)| key < k) {
                    best = Some((key, w, s, e));
                }
            }
            let (_, w, s, e) = best.unwrap();
            m = mz;
            z = w;
            a = s;
            b = e;
        }
        let p = if ccw { a } else { b };
        p / p.norm()
    }

    fn compute_hull(&self) -> Result<Vec<HullGeodesic>> {
        let mut out = Vec::with_capacity(self.free_arcs.len());
        for arc in &self.free_arcs {
            let before = self.disk_at_angle(arc.start);
            let after = self.disk_at_angle(arc.end);
            let lo = self.extreme_limit_point(self.disk_letter(&before), arc.start, false);
            let hi = self.extreme_limit_point(self.disk_letter(&after), arc.end, true);
            let h = HullGeodesic::from_endpoints(lo, hi);
            if !(h.half_angle > 0.0 && h.half_angle < PI) {
                return Err(Error::InvalidGroup("degenerate convex hull".into()));
            }
            out.push(h);
        }
        Ok(out)
    }
}

fn disk_label(i: usize) -> String {
    let k = i / 2 + 1;
    if i.is_multiple_of(2) {
        format!("{k}-source")
    } else {
        format!("{k}-target")
    }
}

fn check_pairing(k: usize, g: &Isometry, src: &Disk, dst: &Disk) -> Result<()> {
    let tol = 1e-8;
    for j in 0..16 {
        let th = TAU * (j as f64 + 0.5) / 16.0;
        let p = src.center + C64::from_polar(src.radius, th);
        if p.norm() >= 1.0 {
            continue;
        }
        let img = g.apply(BallPoint(p)).0;
        if ((img - dst.center).norm() - dst.radius).abs() > tol * (1.0 + dst.radius) {
            return Err(Error::InvalidGroup(format!(
                "generator {} does not map the boundary of its source disk onto its target disk",
                k + 1
            )));
        }
    }
    // a point just outside the source disk, toward the origin, must land inside the target
    let dir = -src.center / src.center.norm();
    let p = src.center + dir * (src.radius * (1.0 + 1e-3));
    let img = g.apply(BallPoint(p)).0;
    if !dst.contains(img) {
        return Err(Error::InvalidGroup(format!(
            "generator {} maps the exterior of its source disk outside its target disk",
            k + 1
        )));
    }
    Ok(())
}

/// Half-angle of the disks of a cyclic group of translation length `len`.
pub fn half_angle_for_translation(len: f64) -> f64 {
    // crossing point x1 = tanh(len/4) = (1 - sin psi) / cos psi
    let x1 = (len / 4.0).tanh();
    ((1.0 - x1 * x1) / (1.0 + x1 * x1)).asin()
}

/// Number of reduced words of length exactly `len` in rank `g`.
pub fn shell_size(g: usize, len: usize) -> f64 {
    match (g, len) {
        (_, 0) => 1.0,
        (0, _) => 0.0,
        _ => 2.0 * g as f64 * ((2 * g - 1) as f64).powi(len as i32 - 1),
    }
}

/// Number of reduced words of length at most `len`.
pub fn total_words(g: usize, len: usize) -> f64 {
    (0..=len).map(|k| shell_size(g, k)).sum()
}

fn max_len_within(g: usize, budget: usize) -> usize {
    if g == 0 {
        return 0;
    }
    if g == 1 {
        return budget.saturating_sub(1) / 2;
    }
    let mut l = 0;
    while total_words(g, l + 1) <= budget as f64 {
        l += 1;
    }
    l
}

/// Default margin below one for the shell-ratio criterion.
pub const DEFAULT_MARGIN: f64 = 0.02;
const DEFAULT_G2_LEN: usize = 13;
const CYCLIC_MAX_LEN: usize = 20_000;
const MAX_ORBIT_DISTANCE: f64 = 600.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeltaMethod {
    SeriesBisection,
    OrbitCountSlope,
}

impl DeltaMethod {
    pub fn name(&self) -> &'static str {
        match self {
            DeltaMethod::SeriesBisection => "series-bisection",
            DeltaMethod::OrbitCountSlope => "orbit-count-slope",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaEstimate {
    pub delta: f64,
    pub stderr: f64,
    pub method: DeltaMethod,
    /// Maximal word length used.
    pub truncation: usize,
    /// Set when the budget forced a shorter word length than the default.
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoincarePartial {
    pub sum: f64,
    /// Ratio of the last two shell sums.
    pub tail_ratio: f64,
    pub shell_sums: Vec<f64>,
}

impl PoincarePartial {
    pub fn from_shells(shells: &[Vec<f64>], s: f64) -> Self {
        let shell_sums: Vec<f64> = shells.par_iter().map(|sh| sh.iter().map(|d| (-s * d).exp()).sum()).collect();
        let sum = shell_sums.iter().sum();
        let n = shell_sums.len();
        let tail_ratio = if n >= 2 { shell_sums[n - 1] / shell_sums[n - 2] } else { f64::NAN };
        PoincarePartial { sum, tail_ratio, shell_sums }
    }
}

fn shell_ratio(shells: &[Vec<f64>], s: f64) -> f64 {
    let n = shells.len();
    let sum = |sh: &Vec<f64>| sh.iter().map(|d| (-s * d).exp()).sum::<f64>();
    let (a, b) = rayon::join(|| sum(&shells[n - 1]), || sum(&shells[n - 2]));
    a / b
}

fn bisect_ratio(shells: &[Vec<f64>], target: f64, tol: f64) -> Result<f64> {
    let mut lo: f64 = 0.0;
    let mut hi = 1.0;
    while shell_ratio(shells, hi) >= target {
        hi *= 2.0;
        if hi > 8.0 {
            return Err(Error::InsufficientSignal(
                "shell ratio does not fall below the threshold; increase the word length".into(),
            ));
        }
    }
    if shell_ratio(shells, lo.max(1e-12)) < target {
        return Ok(0.0);
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if shell_ratio(shells, mid) < target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

fn series_bisection(shells: &[Vec<f64>], margin: f64) -> Result<(f64, f64)> {
    let tol = 1e-6;
    let target = 1.0 - margin;
    let s = bisect_ratio(shells, target, tol)?;
    let s_prev = bisect_ratio(&shells[..shells.len() - 1], target, tol)?;
    // shell-to-shell growth of the weighted mean distance turns the margin into a bias in s
    let n = shells.len();
    let mean = |sh: &Vec<f64>| {
        let (mut w, mut wd) = (0.0, 0.0);
        for d in sh {
            let e = (-s * d).exp();
            w += e;
            wd += e * d;
        }
        wd / w
    };
    let gap = mean(&shells[n - 1]) - mean(&shells[n - 2]);
    let bias = if gap > 0.0 { -(1.0 - margin).ln() / gap } else { 0.0 };
    let stderr = (tol * tol + (s - s_prev).powi(2) + bias * bias).sqrt();
    Ok((s, stderr))
}

fn orbit_count_slope(shells: &[Vec<f64>], t_max: f64) -> Result<(f64, f64)> {
    let mut all: Vec<f64> = shells.iter().flatten().copied().collect();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let window_fit = |lo: f64, hi: f64| {
        let k = 60;
        let (mut xs, mut ys) = (Vec::with_capacity(k), Vec::with_capacity(k));
        for i in 0..k {
            let t = lo + (hi - lo) * i as f64 / (k - 1) as f64;
            let count = all.partition_point(|d| *d <= t);
            xs.push(t);
            ys.push((count as f64).ln());
        }
        line_fit(&xs, &ys)
    };
    let fit = window_fit(0.5 * t_max, t_max)?;
    // drift of the slope when the window moves back by a quarter of its span
    let early = window_fit(0.375 * t_max, 0.875 * t_max)?;
    let drift = (fit.slope - early.slope).abs();
    Ok((fit.slope, (fit.slope_stderr.powi(2) + drift * drift).sqrt()))
}

/// Box-counting dimension of a set of boundary points, from a least-squares
/// fit of `log N(eps)` against `log(1/eps)` over angular box sizes
/// geometrically spaced in `[eps_min, eps_max]`.
pub fn box_counting_dimension(points: &[BoundaryPoint], eps_min: f64, eps_max: f64, n_scales: usize) -> Result<(f64, f64)> {
    if points.is_empty() || n_scales < 2 || !(eps_min > 0.0 && eps_min < eps_max) {
        return Err(Error::Domain("box counting needs points and a valid scale range".into()));
    }
    let angles: Vec<f64> = points.iter().map(|p| p.angle() + PI).collect();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for i in 0..n_scales {
        let eps = eps_min * (eps_max / eps_min).powf(i as f64 / (n_scales - 1) as f64);
        let mut boxes: Vec<i64> = angles.iter().map(|a| (a / eps).floor() as i64).collect();
        boxes.sort_unstable();
        boxes.dedup();
        xs.push(-eps.ln());
        ys.push((boxes.len() as f64).ln());
    }
    let fit = line_fit(&xs, &ys)?;
    Ok((fit.slope, fit.slope_stderr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::hyp_distance;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn sym() -> SchottkyGroup {
        SchottkyGroup::symmetric(PI / 6.0).unwrap()
    }

    #[test]
    fn disk_distance_matches_nearest_point() {
        let d = Disk::from_arc(0.3, 0.4);
        let q = C64::new(-0.2, 0.1);
        // brute-force scan of the bounding geodesic
        let (a, b) = d.arc_endpoints();
        let (ta, tb) = ((a - d.center).arg(), (b - d.center).arg());
        let mut best = f64::INFINITY;
        for k in 1..20000 {
            let mut span = tb - ta;
            if span.abs() > PI {
                span -= span.signum() * TAU;
            }
            let p = d.center + C64::from_polar(d.radius, ta + span * k as f64 / 20000.0);
            best = best.min(hyp_distance(BallPoint(q), BallPoint(p)).unwrap());
        }
        assert_abs_diff_eq!(d.signed_distance(q), best, epsilon = 1e-6);
        assert!(d.signed_distance(d.center / d.center.norm() * 0.999) < 0.0);
    }

    #[test]
    fn presets_validate() {
        let c = SchottkyGroup::cyclic(2.0).unwrap();
        assert_eq!(c.rank(), 1);
        assert_eq!(sym().rank(), 2);
        assert!(SchottkyGroup::symmetric(PI / 4.0 + 0.01).is_err());
    }

    #[test]
    fn overlapping_disks_are_rejected() {
        let g = Isometry::translation(1.0, 0.0);
        let d = Disk::from_arc(0.0, 1.0);
        let e = Disk::from_arc(0.3, 1.0);
        let err = SchottkyGroup::new(vec![g], vec![(d, e)]).unwrap_err();
        assert!(matches!(err, Error::InvalidGroup(ref m) if m.contains("intersect")));
    }

    #[test]
    fn mismatched_generator_is_rejected() {
        let half = half_angle_for_translation(2.0);
        let g = Isometry::translation(2.5, 0.0);
        let r = SchottkyGroup::new(vec![g], vec![(Disk::from_arc(PI, half), Disk::from_arc(0.0, half))]);
        assert!(matches!(r, Err(Error::InvalidGroup(_))));
        // swapping source and target reverses the direction of the map
        let g = Isometry::translation(2.0, 0.0);
        let r = SchottkyGroup::new(vec![g], vec![(Disk::from_arc(0.0, half), Disk::from_arc(PI, half))]);
        assert!(r.is_err());
    }

    #[test]
    fn word_counts() {
        let g = sym();
        let words = g.enumerate_words(1, DEFAULT_BUDGET).unwrap();
        assert_eq!(words.len(), 5);
        for l in 1..=6 {
            let mut n = 0;
            g.for_each_word(l, |w, _| n += (w.len() == l) as usize);
            assert_eq!(n, 4 * 3usize.pow(l as u32 - 1));
        }
        let c = SchottkyGroup::cyclic(2.0).unwrap();
        let w = c.enumerate_words(7, DEFAULT_BUDGET).unwrap();
        assert_eq!(w.len() - 1, 14);
        assert!(matches!(g.enumerate_words(20, 1000), Err(Error::Truncation { .. })));
    }

    #[test]
    fn words_are_distinct_and_reduced() {
        let g = sym();
        let words = g.enumerate_words(5, DEFAULT_BUDGET).unwrap();
        let set: std::collections::HashSet<_> = words.iter().map(|(w, _)| w.clone()).collect();
        assert_eq!(set.len(), words.len());
        for (w, _) in &words {
            assert!(Word::new(w.letters().to_vec()).is_ok());
        }
    }

    #[test]
    fn cyclic_poincare_series_matches_geometric_sum() {
        let len = 1.5;
        let c = SchottkyGroup::cyclic(len).unwrap();
        let s = 0.8;
        let exact = 1.0 + 2.0 * (-s * len).exp() / (1.0 - (-s * len).exp());
        let p = c.poincare_partial(s, 200).unwrap();
        assert_abs_diff_eq!(p.sum, exact, epsilon = 1e-10);
        assert_abs_diff_eq!(p.tail_ratio, (-s * len).exp(), epsilon = 1e-9);
        let p5 = c.poincare_partial(s, 5).unwrap();
        assert!(p5.sum < p.sum);
    }

    #[test]
    fn tail_ratio_below_one_at_large_exponent() {
        let p = sym().poincare_partial(2.0, 8).unwrap();
        assert!(p.tail_ratio < 1.0);
    }

    #[test]
    fn reduction_recovers_words() {
        let g = sym();
        let q0 = BallPoint::new(0.1, -0.05);
        assert!(g.in_domain(q0.0));
        let (q, w) = g.reduce_to_domain(q0).unwrap();
        assert_eq!(q, q0);
        assert!(w.is_empty());
        for (w, m) in g.enumerate_words(4, DEFAULT_BUDGET).unwrap() {
            let q = m.apply(q0);
            let (back, found) = g.reduce_to_domain(q).unwrap();
            assert_eq!(found, w);
            assert!((back.0 - q0.0).norm() < 1e-9);
            let again = g.reduce_to_domain(back).unwrap();
            assert!(again.1.is_empty());
        }
    }

    #[test]
    fn cyclic_limit_set_has_two_points() {
        let c = SchottkyGroup::cyclic(2.0).unwrap();
        for depth in [1, 3, 6] {
            let pts = c.limit_set_sample(depth).unwrap();
            assert_eq!(pts.len(), 2);
            let mut xs: Vec<f64> = pts.iter().map(|p| p.0.re).collect();
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_abs_diff_eq!(xs[0], -1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(xs[1], 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn limit_set_lies_in_disk_arcs_and_grows() {
        let g = sym();
        let a = g.limit_set_sample(4).unwrap();
        let b = g.limit_set_sample(5).unwrap();
        let ratio = b.len() as f64 / a.len() as f64;
        assert!(ratio > 2.5 && ratio < 3.5, "growth {ratio}");
        for p in &b {
            assert!(!g.free_arcs().iter().any(|arc| arc.contains_angle(p.angle())
                && (p.angle() - arc.start).rem_euclid(TAU) > 1e-12
                && (arc.end - p.angle()).rem_euclid(TAU) > 1e-12));
        }
    }

    #[test]
    fn cyclic_hull_is_the_axis() {
        let c = SchottkyGroup::cyclic(2.0).unwrap();
        assert_eq!(c.hull_geodesics().len(), 2);
        for h in c.hull_geodesics() {
            assert_abs_diff_eq!(h.half_angle, PI / 2.0, epsilon = 1e-12);
            let q = C64::new(0.0, 0.3);
            let expect = (2.0 * 0.3 / (1.0 - 0.09_f64)).asinh();
            assert_abs_diff_eq!(h.signed_distance(q).abs(), expect, epsilon = 1e-10);
            let mid = C64::from_polar(0.9, h.mid_angle);
            assert!(h.signed_distance(mid) > 0.0);
        }
    }

    #[test]
    fn signed_distance_matches_projection_distance() {
        let h = HullGeodesic::from_endpoints(C64::from_polar(1.0, 0.2), C64::from_polar(1.0, 1.4));
        // closest point on the geodesic along its symmetry axis
        let (s, c) = h.half_angle.sin_cos();
        let foot = C64::from_polar((1.0 - s) / c, h.mid_angle);
        for &x in &[0.0, 0.2, 0.5, 0.8, 0.95] {
            let q = C64::from_polar(x, h.mid_angle);
            let d = hyp_distance(BallPoint(q), BallPoint(foot)).unwrap();
            let sign = if x > foot.norm() { 1.0 } else { -1.0 };
            assert_abs_diff_eq!(h.signed_distance(q), sign * d, epsilon = 1e-10);
        }
    }

    #[test]
    fn symmetric_hull_endpoints_are_limit_points() {
        let g = sym();
        let pts = g.limit_set_sample(7).unwrap();
        for h in g.hull_geodesics() {
            for e in [h.lo, h.hi] {
                let nearest = pts.iter().map(|p| (p.0 - e).norm()).fold(f64::INFINITY, f64::min);
                assert!(nearest < 1e-2, "hull endpoint {e} far from the limit set");
            }
            // no sampled limit point inside the funnel arc
            for p in &pts {
                let off = (p.angle() - h.lo.arg()).rem_euclid(TAU);
                assert!(!(off > 1e-9 && off < 2.0 * h.half_angle - 1e-9));
            }
        }
    }

    #[test]
    fn cyclic_delta_is_zero() {
        let c = SchottkyGroup::cyclic(2.0).unwrap();
        for m in [DeltaMethod::SeriesBisection, DeltaMethod::OrbitCountSlope] {
            let d = c.estimate_delta(m, DEFAULT_BUDGET).unwrap();
            assert!(d.delta <= 0.02, "{m:?}: {}", d.delta);
        }
    }

    #[test]
    fn complete_radius_bounds_longer_words() {
        let g = sym();
        let t = g.complete_radius(4).unwrap();
        let mut shorter_max = 0.0f64;
        g.for_each_word(7, |w, m| {
            let d = m.cosh_displacement().acosh();
            if w.len() > 4 {
                assert!(d >= t - 1e-9);
            } else {
                shorter_max = shorter_max.max(d);
            }
        });
        assert!(t > 0.0 && t <= shorter_max + 10.0);
    }

    #[test]
    fn box_count_of_a_segment_is_one() {
        let pts: Vec<BoundaryPoint> = (0..20000).map(|k| BoundaryPoint::from_angle(k as f64 * 1e-4)).collect();
        let (d, _) = box_counting_dimension(&pts, 1e-3, 1e-1, 10).unwrap();
        assert_abs_diff_eq!(d, 1.0, epsilon = 0.02);
    }

    proptest! {
        #[test]
        fn word_homomorphism(a in proptest::collection::vec(prop_oneof![Just(1i8), Just(-1), Just(2), Just(-2)], 0..5),
                             b in proptest::collection::vec(prop_oneof![Just(1i8), Just(-1), Just(2), Just(-2)], 0..5)) {
            let g = sym();
            let wa = Word::reduce(&a);
            let wb = Word::reduce(&b);
            let prod = g.word_isometry(&wa).unwrap().compose(&g.word_isometry(&wb).unwrap());
            let cat = g.word_isometry(&wa.concat(&wb)).unwrap();
            let (p, c) = (prod.matrix(), cat.matrix());
            let same = (0..4).all(|i| (p[i] - c[i]).abs() < 1e-8 * (1.0 + p[i].abs()));
            let flip = (0..4).all(|i| (p[i] + c[i]).abs() < 1e-8 * (1.0 + p[i].abs()));
            prop_assert!(same || flip);
            let back = wa.concat(&wb).concat(&wb.inverse());
            prop_assert_eq!(back, wa);
        }

        #[test]
        fn reduction_lands_in_domain(r in 0.0..0.999f64, th in 0.0..TAU) {
            let g = sym();
            let q = BallPoint(C64::from_polar(r, th));
            let (p, w) = g.reduce_to_domain(q).unwrap();
            prop_assert!(g.in_domain(p.0));
            let img = g.word_isometry(&w).unwrap().apply(p);
            prop_assert!((img.0 - q.0).norm() < 1e-9);
        }

        #[test]
        fn poincare_monotone(s1 in 0.3..1.5f64, ds in 0.01..1.0f64) {
            let g = sym();
            let shells = g.shell_distances(7, DEFAULT_BUDGET).unwrap();
            let a = PoincarePartial::from_shells(&shells, s1);
            let b = PoincarePartial::from_shells(&shells, s1 + ds);
            prop_assert!(b.sum < a.sum);
            let short = PoincarePartial::from_shells(&shells[..6], s1);
            prop_assert!(short.sum <= a.sum);
        }
    }
}
