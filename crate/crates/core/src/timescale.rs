//! Bounded time scales and the delta-calculus primitives built on them.
//!
//! A [`TimeScale`] is a finite union of closed intervals inside a window
//! `[a, b]`. Degenerate intervals are isolated points. The forward jump,
//! graininess, the sampling map `Φ`, the delta integral and the generalized
//! exponential are all computed directly from that segment list.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance used when testing user-supplied times for membership.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// A closed interval `[lo, hi]`; `lo == hi` is an isolated point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub lo: f64,
    pub hi: f64,
}

impl Segment {
    pub fn new(lo: f64, hi: f64) -> Self {
        Segment { lo, hi }
    }

    pub fn is_point(&self) -> bool {
        self.hi <= self.lo
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PointKind {
    RightDense,
    RightScattered,
}

/// Classification of a point together with its graininess `μ(t) = σ(t) − t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointClass {
    pub kind: PointKind,
    pub graininess: f64,
}

impl PointClass {
    pub fn dense() -> Self {
        PointClass {
            kind: PointKind::RightDense,
            graininess: 0.0,
        }
    }

    pub fn scattered(mu: f64) -> Self {
        debug_assert!(mu > 0.0);
        PointClass {
            kind: PointKind::RightScattered,
            graininess: mu,
        }
    }

    pub fn is_scattered(&self) -> bool {
        self.kind == PointKind::RightScattered
    }

    pub fn label(&self) -> &'static str {
        match self.kind {
            PointKind::RightDense => "RD",
            PointKind::RightScattered => "RS",
        }
    }
}

/// Result of the forward jump operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    pub sigma: f64,
    pub mu: f64,
    pub class: PointClass,
}

/// A node of an evaluation grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridNode {
    pub t: f64,
    pub class: PointClass,
    pub is_controlling: bool,
}

/// A bounded time scale: ordered, pairwise disjoint closed segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeScale {
    segments: Vec<Segment>,
}

impl TimeScale {
    /// Builds a scale from segments that are already sorted and disjoint.
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidScale("empty time scale".into()));
        }
        for s in &segments {
            if !(s.lo.is_finite() && s.hi.is_finite()) || s.lo > s.hi {
                return Err(Error::InvalidScale(format!(
                    "malformed segment [{}, {}]",
                    s.lo, s.hi
                )));
            }
        }
        for w in segments.windows(2) {
            if !(w[0].hi < w[1].lo) {
                return Err(Error::InvalidScale(format!(
                    "segments [{}, {}] and [{}, {}] overlap or are out of order",
                    w[0].lo, w[0].hi, w[1].lo, w[1].hi
                )));
            }
        }
        Ok(TimeScale { segments })
    }

    /// Builds a scale from arbitrary pieces, sorting them and merging any that
    /// overlap or touch within [`MEMBERSHIP_TOL`].
    pub fn from_pieces(mut pieces: Vec<Segment>) -> Result<Self> {
        pieces.retain(|s| s.lo <= s.hi);
        pieces.sort_by(|x, y| x.lo.total_cmp(&y.lo));
        let mut merged: Vec<Segment> = Vec::with_capacity(pieces.len());
        for p in pieces {
            match merged.last_mut() {
                Some(last) if p.lo <= last.hi + MEMBERSHIP_TOL => {
                    last.hi = last.hi.max(p.hi);
                }
                _ => merged.push(p),
            }
        }
        TimeScale::new(merged)
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        TimeScale::new(vec![Segment::new(lo, hi)])
    }

    pub fn points(values: &[f64]) -> Result<Self> {
        TimeScale::from_pieces(values.iter().map(|&v| Segment::new(v, v)).collect())
    }

    /// The integers `start, start + 1, …, end`.
    pub fn integers(start: i64, end: i64) -> Result<Self> {
        let pts: Vec<f64> = (start..=end).map(|k| k as f64).collect();
        TimeScale::points(&pts)
    }

    /// `start + k·period` for every `k ≥ 0` with the value inside `[start, end]`.
    pub fn uniform(start: f64, period: f64, end: f64) -> Result<Self> {
        if !(period > 0.0) {
            return Err(Error::InvalidScale(format!("non-positive period {period}")));
        }
        let mut pts = Vec::new();
        let mut k = 0u64;
        loop {
            let t = start + k as f64 * period;
            if t > end + MEMBERSHIP_TOL {
                break;
            }
            pts.push(t.min(end));
            k += 1;
        }
        TimeScale::points(&pts)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Window start `a`.
    pub fn start(&self) -> f64 {
        self.segments[0].lo
    }

    /// Window end `b`.
    pub fn end(&self) -> f64 {
        self.segments[self.segments.len() - 1].hi
    }

    /// True when every segment is an isolated point.
    pub fn is_discrete(&self) -> bool {
        self.segments.iter().all(Segment::is_point)
    }

    fn locate(&self, t: f64) -> Option<usize> {
        let idx = self
            .segments
            .partition_point(|s| s.lo <= t + MEMBERSHIP_TOL);
        if idx == 0 {
            return None;
        }
        let i = idx - 1;
        (t <= self.segments[i].hi + MEMBERSHIP_TOL).then_some(i)
    }

    pub fn contains(&self, t: f64) -> bool {
        t.is_finite() && self.locate(t).is_some()
    }

    /// Forward jump `σ(t)`, graininess `μ(t)` and classification of `t`.
    ///
    /// At the window end the jump is `σ(b) = b` with `μ = 0`.
    pub fn jump(&self, t: f64) -> Result<Jump> {
        let i = self.locate(t).ok_or(Error::PointNotInScale { t })?;
        let seg = self.segments[i];
        if t < seg.hi - MEMBERSHIP_TOL {
            return Ok(Jump {
                sigma: t,
                mu: 0.0,
                class: PointClass::dense(),
            });
        }
        match self.segments.get(i + 1) {
            Some(next) => {
                let mu = next.lo - t;
                Ok(Jump {
                    sigma: next.lo,
                    mu,
                    class: PointClass::scattered(mu),
                })
            }
            None => Ok(Jump {
                sigma: t,
                mu: 0.0,
                class: PointClass::dense(),
            }),
        }
    }

    /// `sup { s ∈ self | s ≤ t }`, or `None` when `t` lies before the scale.
    pub fn latest_at_or_before(&self, t: f64) -> Option<f64> {
        let idx = self
            .segments
            .partition_point(|s| s.lo <= t + MEMBERSHIP_TOL);
        if idx == 0 {
            return None;
        }
        let seg = self.segments[idx - 1];
        Some(if t <= seg.hi + MEMBERSHIP_TOL {
            t.max(seg.lo).min(seg.hi)
        } else {
            seg.hi
        })
    }

    /// Right-scattered points `(r, μ(r))` with `r < b`.
    pub fn right_scattered(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.segments
            .windows(2)
            .map(|w| (w[0].hi, w[1].lo - w[0].hi))
    }

    /// Segment-wise containment: every segment of `self` lies inside a
    /// segment of `other`.
    pub fn is_subset_of(&self, other: &TimeScale) -> bool {
        self.segments.iter().all(|s| {
            other.locate(s.lo).is_some_and(|i| {
                let o = other.segments[i];
                s.hi <= o.hi + MEMBERSHIP_TOL
            })
        })
    }

    pub fn union(&self, other: &TimeScale) -> Result<TimeScale> {
        let mut pieces = self.segments.clone();
        pieces.extend_from_slice(&other.segments);
        TimeScale::from_pieces(pieces)
    }

    pub fn with_point(&self, t: f64) -> Result<TimeScale> {
        if self.contains(t) {
            return Ok(self.clone());
        }
        let mut pieces = self.segments.clone();
        pieces.push(Segment::new(t, t));
        TimeScale::from_pieces(pieces)
    }

    /// Restriction to `[a, b]`.
    pub fn clip(&self, a: f64, b: f64) -> Result<TimeScale> {
        let pieces = self
            .segments
            .iter()
            .filter(|s| s.hi >= a - MEMBERSHIP_TOL && s.lo <= b + MEMBERSHIP_TOL)
            .map(|s| Segment::new(s.lo.max(a), s.hi.min(b)))
            .collect();
        TimeScale::from_pieces(pieces)
    }

    fn check_range(&self, c: f64, d: f64) -> Result<()> {
        for t in [c, d] {
            if !self.contains(t) {
                return Err(Error::PointNotInScale { t });
            }
        }
        if c > d + MEMBERSHIP_TOL {
            return Err(Error::InvalidRange { c, d });
        }
        Ok(())
    }

    /// `∫_{[c,d)} f Δτ`: composite Simpson over the continuous parts (panel
    /// width at most `h`) plus `μ(r)·f(r)` for every right-scattered `r ∈ [c, d)`.
    pub fn delta_integral<F: Fn(f64) -> f64>(&self, f: F, c: f64, d: f64, h: f64) -> Result<f64> {
        if !(h > 0.0) {
            return Err(Error::InvalidStep { h });
        }
        self.check_range(c, d)?;
        let n = self.segments.len();
        let mut total = 0.0;
        for (i, seg) in self.segments.iter().enumerate() {
            let lo = seg.lo.max(c);
            let hi = seg.hi.min(d);
            if hi > lo {
                total += simpson(&f, lo, hi, h);
            }
            if i + 1 < n && seg.hi >= c - MEMBERSHIP_TOL && seg.hi < d - MEMBERSHIP_TOL {
                let mu = self.segments[i + 1].lo - seg.hi;
                total += mu * f(seg.hi);
            }
        }
        Ok(total)
    }

    /// Generalized exponential `e_L(t, c)`.
    pub fn exp_generalized(&self, l: f64, c: f64, t: f64) -> Result<f64> {
        if !(l >= 0.0) {
            return Err(Error::InvalidRange { c: l, d: 0.0 });
        }
        self.check_range(c, t)?;
        let n = self.segments.len();
        let mut log = 0.0;
        for (i, seg) in self.segments.iter().enumerate() {
            let lo = seg.lo.max(c);
            let hi = seg.hi.min(t);
            if hi > lo {
                log += l * (hi - lo);
            }
            if i + 1 < n && seg.hi >= c - MEMBERSHIP_TOL && seg.hi < t - MEMBERSHIP_TOL {
                let mu = self.segments[i + 1].lo - seg.hi;
                log += (l * mu).ln_1p();
            }
        }
        Ok(log.exp())
    }
}

/// `Φ(t) = sup { s ∈ ts1 | s ≤ t }` for `t ∈ ts`.
pub fn phi(ts: &TimeScale, ts1: &TimeScale, t: f64) -> Result<f64> {
    if !ts.contains(t) {
        return Err(Error::PointNotInScale { t });
    }
    ts1.latest_at_or_before(t)
        .ok_or(Error::EmptyPredecessor { t })
}

fn simpson<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, h: f64) -> f64 {
    let panels = ((hi - lo) / (2.0 * h)).ceil().max(1.0) as usize * 2;
    let dx = (hi - lo) / panels as f64;
    let mut acc = f(lo) + f(hi);
    for k in 1..panels {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(lo + k as f64 * dx);
    }
    acc * dx / 3.0
}

/// Evaluation grid for `ts` with controlling scale `ts1`; see
/// [`build_grid_with_breaks`].
pub fn build_grid(ts: &TimeScale, ts1: &TimeScale, h: f64) -> Result<Vec<GridNode>> {
    build_grid_with_breaks(ts, ts1, h, &[])
}

/// Evaluation grid: every segment endpoint of `ts`, every point and segment
/// endpoint of `ts1`, every extra breakpoint that falls inside a continuous
/// segment, and a uniform subdivision of each continuous piece in between
/// with spacing at most `h`.
pub fn build_grid_with_breaks(
    ts: &TimeScale,
    ts1: &TimeScale,
    h: f64,
    breaks: &[f64],
) -> Result<Vec<GridNode>> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidStep { h });
    }
    let segs = ts.segments();
    let mut nodes = Vec::new();
    for (i, seg) in segs.iter().enumerate() {
        let end_class = match segs.get(i + 1) {
            Some(next) => PointClass::scattered(next.lo - seg.hi),
            None => PointClass::dense(),
        };
        if !seg.is_point() {
            let inside = |t: f64| t > seg.lo + MEMBERSHIP_TOL && t < seg.hi - MEMBERSHIP_TOL;
            let mut cuts = vec![seg.lo, seg.hi];
            for s in ts1.segments() {
                cuts.extend([s.lo, s.hi].into_iter().filter(|&t| inside(t)));
            }
            cuts.extend(breaks.iter().copied().filter(|&t| inside(t)));
            cuts.sort_by(f64::total_cmp);
            cuts.dedup_by(|x, y| (*x - *y).abs() <= MEMBERSHIP_TOL);
            for w in cuts.windows(2) {
                let (x0, x1) = (w[0], w[1]);
                let pieces = ((x1 - x0) / h - 1e-9).ceil().max(1.0) as usize;
                let dx = (x1 - x0) / pieces as f64;
                for k in 0..pieces {
                    let t = if k == 0 { x0 } else { x0 + k as f64 * dx };
                    nodes.push(GridNode {
                        t,
                        class: PointClass::dense(),
                        is_controlling: ts1.contains(t),
                    });
                }
            }
        }
        nodes.push(GridNode {
            t: seg.hi,
            class: end_class,
            is_controlling: ts1.contains(seg.hi),
        });
    }
    Ok(nodes)
}

/// Generator grammar for time scales read from scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScaleGenerator {
    Interval { l: f64, r: f64 },
    Uniform { start: f64, period: f64 },
    Points { values: Vec<f64> },
    Union { parts: Vec<ScaleGenerator> },
}

impl ScaleGenerator {
    /// Expands the generator into segments clipped to the window `[a, b]`.
    pub fn expand(&self, a: f64, b: f64) -> Result<TimeScale> {
        let mut pieces = Vec::new();
        self.collect(a, b, &mut pieces)?;
        if pieces.is_empty() {
            return Err(Error::InvalidScale(format!(
                "generator {self:?} has no point inside [{a}, {b}]"
            )));
        }
        TimeScale::from_pieces(pieces)
    }

    fn collect(&self, a: f64, b: f64, out: &mut Vec<Segment>) -> Result<()> {
        let inside = |t: f64| t >= a - MEMBERSHIP_TOL && t <= b + MEMBERSHIP_TOL;
        match self {
            ScaleGenerator::Interval { l, r } => {
                if l > r {
                    return Err(Error::InvalidScale(format!("interval [{l}, {r}]")));
                }
                let (lo, hi) = (l.max(a), r.min(b));
                if lo <= hi {
                    out.push(Segment::new(lo, hi));
                }
            }
            ScaleGenerator::Uniform { start, period } => {
                if !(*period > 0.0) {
                    return Err(Error::InvalidScale(format!("non-positive period {period}")));
                }
                let mut k = 0u64;
                loop {
                    let t = start + k as f64 * period;
                    if t > b + MEMBERSHIP_TOL {
                        break;
                    }
                    if inside(t) {
                        let t = t.clamp(a, b);
                        out.push(Segment::new(t, t));
                    }
                    k += 1;
                }
            }
            ScaleGenerator::Points { values } => {
                out.extend(
                    values
                        .iter()
                        .filter(|&&t| inside(t))
                        .map(|&t| Segment::new(t.clamp(a, b), t.clamp(a, b))),
                );
            }
            ScaleGenerator::Union { parts } => {
                for p in parts {
                    p.collect(a, b, out)?;
                }
            }
        }
        Ok(())
    }
}
