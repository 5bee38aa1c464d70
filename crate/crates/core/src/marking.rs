//! Marking a renewal process by recycling the randomness of resampled
//! points.
//!
//! A point x is special when its two left gaps lie in A and the third does
//! not. Between consecutive special points the process is conditionally
//! independent of the rest, so disjoint pairs of adjacent gaps can be
//! re-split given their sum. The quantile of the old split is cut into bit
//! streams: one stream picks the new split, the others become marks. The map
//! is a bijection on a 53-bit grid and leaves the special points in place.

use rand::Rng;
use rand_distr::{Distribution, StandardUniform};
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};
use thiserror::Error;

use crate::distributions::JumpDistribution;
use crate::patterns::{Mark, MarkedPoint, MarkedPointPattern, PointPattern, Window};
use crate::regularize::HitSet;

pub const PRECISION_BITS: u32 = 53;
/// Cells of the tabulated conditional split law.
pub const SPLIT_CELLS: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarkError {
    #[error("split law has no density at {at}; it would be encoded without precision")]
    PrecisionLoss { at: f64 },
    #[error("value {value} is not on the codec grid")]
    OffGrid { value: f64 },
    #[error("invalid mark law: {0}")]
    Invalid(String),
    #[error("mark vector has {got} values, expected {expected}")]
    Arity { expected: usize, got: usize },
}

/// A continuous law handled by inverse transform.
pub trait InverseTransform {
    fn cdf(&self, x: f64) -> f64;
    fn quantile(&self, u: f64) -> f64;

    /// Number of leading bits of u that the quantile keeps apart in f64.
    fn resolution_bits(&self) -> u32 {
        PRECISION_BITS
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "lowercase")]
pub enum MarkLaw {
    Uniform { lo: f64, hi: f64 },
    Exponential { rate: f64 },
    Normal { mean: f64, sd: f64 },
}

impl MarkLaw {
    fn validate(&self) -> Result<(), MarkError> {
        let ok = match *self {
            MarkLaw::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && hi > lo,
            MarkLaw::Exponential { rate } => rate > 0.0 && rate.is_finite(),
            MarkLaw::Normal { mean, sd } => mean.is_finite() && sd > 0.0 && sd.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(MarkError::Invalid(format!("{self:?}")))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = StandardUniform.sample(rng);
        self.quantile(u)
    }
}

impl InverseTransform for MarkLaw {
    fn cdf(&self, x: f64) -> f64 {
        match *self {
            MarkLaw::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            MarkLaw::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
            MarkLaw::Normal { mean, sd } => 0.5 * erfc(-(x - mean) / (sd * std::f64::consts::SQRT_2)),
        }
    }

    fn quantile(&self, u: f64) -> f64 {
        match *self {
            MarkLaw::Uniform { lo, hi } => lo + u * (hi - lo),
            MarkLaw::Exponential { rate } => -(-u).ln_1p() / rate,
            MarkLaw::Normal { mean, sd } => mean - sd * std::f64::consts::SQRT_2 * erfc_inv(2.0 * u),
        }
    }
}

/// Mark laws for points whose left gap is below `below` (no bound when
/// absent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkBucket {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub below: Option<f64>,
    pub laws: Vec<MarkLaw>,
}

/// Joint law of a gap and the mark vector of the point ending it: each
/// mark coordinate is independent with a law chosen by the gap bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<MarkBucket>", into = "Vec<MarkBucket>")]
pub struct JumpMarkLaw {
    buckets: Vec<MarkBucket>,
}

impl TryFrom<Vec<MarkBucket>> for JumpMarkLaw {
    type Error = MarkError;

    fn try_from(buckets: Vec<MarkBucket>) -> Result<Self, MarkError> {
        JumpMarkLaw::new(buckets)
    }
}

impl From<JumpMarkLaw> for Vec<MarkBucket> {
    fn from(law: JumpMarkLaw) -> Self {
        law.buckets
    }
}

impl JumpMarkLaw {
    pub fn new(buckets: Vec<MarkBucket>) -> Result<Self, MarkError> {
        let Some(first) = buckets.first() else {
            return Err(MarkError::Invalid("no buckets".into()));
        };
        let dim = first.laws.len();
        if dim == 0 {
            return Err(MarkError::Invalid("marks need at least one coordinate".into()));
        }
        for (i, b) in buckets.iter().enumerate() {
            if b.laws.len() != dim {
                return Err(MarkError::Invalid("buckets disagree on mark dimension".into()));
            }
            for law in &b.laws {
                law.validate()?;
            }
            let last = i + 1 == buckets.len();
            match (b.below, last) {
                (None, true) => {}
                (Some(x), false) if x > 0.0 && x.is_finite() => {}
                _ => {
                    return Err(MarkError::Invalid(
                        "every bucket but the last needs a finite positive bound".into(),
                    ))
                }
            }
        }
        for w in buckets.windows(2) {
            if let (Some(a), Some(b)) = (w[0].below, w[1].below) {
                if b <= a {
                    return Err(MarkError::Invalid("bucket bounds must increase".into()));
                }
            }
        }
        Ok(JumpMarkLaw { buckets })
    }

    /// Marks independent of the gaps.
    pub fn iid(laws: Vec<MarkLaw>) -> Result<Self, MarkError> {
        Self::new(vec![MarkBucket { below: None, laws }])
    }

    pub fn dimension(&self) -> usize {
        self.buckets[0].laws.len()
    }

    pub fn buckets(&self) -> &[MarkBucket] {
        &self.buckets
    }

    pub fn laws_for(&self, gap: f64) -> &[MarkLaw] {
        let i = self
            .buckets
            .iter()
            .position(|b| b.below.is_none_or(|x| gap < x))
            .unwrap_or(self.buckets.len() - 1);
        &self.buckets[i].laws
    }
}

/// Piecewise-linear CDF on a grid of cells.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCdf {
    edges: Vec<f64>,
    cum: Vec<f64>,
}

const GAUSS3: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (0.774_596_669_241_483_4, 5.0 / 9.0),
];

impl PairCdf {
    /// Tabulates the law with density ∝ `density` on [lo, hi]. Cells are
    /// spread over the pieces between `breaks` in proportion to length, so
    /// that no cell straddles a break.
    pub fn from_density<F: Fn(f64) -> f64>(density: F, lo: f64, hi: f64, breaks: &[f64], cells: usize) -> Option<Self> {
        let mut cuts: Vec<f64> = breaks.iter().copied().filter(|&b| b > lo && b < hi).collect();
        cuts.push(lo);
        cuts.push(hi);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let span = hi - lo;
        let mut edges = vec![lo];
        for w in cuts.windows(2) {
            let n = ((cells as f64 * (w[1] - w[0]) / span).round() as usize).max(1);
            for i in 1..n {
                edges.push(w[0] + (w[1] - w[0]) * i as f64 / n as f64);
            }
            edges.push(w[1]);
        }
        let mut cum = vec![0.0; edges.len()];
        for i in 1..edges.len() {
            let (a, b) = (edges[i - 1], edges[i]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            let mass: f64 = GAUSS3.iter().map(|&(x, w)| w * density(mid + half * x)).sum::<f64>() * half;
            cum[i] = cum[i - 1] + mass.max(0.0);
        }
        let total = *cum.last().unwrap();
        if !(total > 0.0 && total.is_finite()) {
            return None;
        }
        for c in cum.iter_mut() {
            *c /= total;
        }
        *cum.last_mut().unwrap() = 1.0;
        Some(PairCdf { edges, cum })
    }

    /// Law of the upper gap of a pair with sum `total`, both gaps drawn from
    /// the jump law restricted to their A-membership classes.
    pub fn conditional_split(
        jump: &JumpDistribution,
        set: &HitSet,
        upper_in: bool,
        lower_in: bool,
        total: f64,
    ) -> Option<Self> {
        let density = |s: f64| {
            if set.contains(s) != upper_in || set.contains(total - s) != lower_in {
                return 0.0;
            }
            jump.ac_density(s) * jump.ac_density(total - s)
        };
        let mut breaks = Vec::new();
        for iv in &set.intervals {
            for e in [iv.lo, iv.hi] {
                if e.is_finite() {
                    breaks.push(e);
                    breaks.push(total - e);
                }
            }
        }
        Self::from_density(density, 0.0, total, &breaks, SPLIT_CELLS)
    }

    fn cell(&self, x: f64) -> usize {
        (self.edges.partition_point(|&e| e <= x).max(1) - 1).min(self.edges.len() - 2)
    }

    /// Whether the density vanishes on the cell containing x.
    pub fn is_flat_at(&self, x: f64) -> bool {
        let j = self.cell(x);
        !(self.cum[j + 1] > self.cum[j])
    }
}

impl InverseTransform for PairCdf {
    fn cdf(&self, x: f64) -> f64 {
        if x <= self.edges[0] {
            return 0.0;
        }
        if x >= *self.edges.last().unwrap() {
            return 1.0;
        }
        let j = self.cell(x);
        let w = (x - self.edges[j]) / (self.edges[j + 1] - self.edges[j]);
        self.cum[j] + w * (self.cum[j + 1] - self.cum[j])
    }

    fn quantile(&self, u: f64) -> f64 {
        let j = (self.cum.partition_point(|&c| c <= u).max(1) - 1).min(self.cum.len() - 2);
        let mass = self.cum[j + 1] - self.cum[j];
        if mass <= 0.0 {
            return self.edges[j];
        }
        let w = ((u - self.cum[j]) / mass).clamp(0.0, 1.0);
        self.edges[j] + w * (self.edges[j + 1] - self.edges[j])
    }

    fn resolution_bits(&self) -> u32 {
        let peak = self
            .edges
            .windows(2)
            .zip(self.cum.windows(2))
            .map(|(e, c)| (c[1] - c[0]) / (e[1] - e[0]))
            .fold(0.0, f64::max);
        let hi = self.edges.last().unwrap().abs().max(f64::MIN_POSITIVE);
        let ulp = hi * f64::EPSILON;
        let bits = (-(ulp * peak).log2()).floor() - 2.0;
        (bits.max(8.0) as u32).min(PRECISION_BITS)
    }
}

/// Bits of one stream of the codec.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bits {
    pub value: u64,
    pub len: u32,
}

impl Bits {
    fn midpoint(self) -> f64 {
        (self.value as f64 + 0.5) / 2f64.powi(self.len as i32)
    }
}

/// Deals the `precision` high bits of `word` round-robin into `streams`
/// streams, most significant first.
pub fn deinterleave(word: u64, precision: u32, streams: usize) -> Vec<Bits> {
    let mut out = vec![Bits { value: 0, len: 0 }; streams];
    for p in 0..precision {
        let bit = (word >> (precision - 1 - p)) & 1;
        let s = &mut out[p as usize % streams];
        s.value = (s.value << 1) | bit;
        s.len += 1;
    }
    out
}

pub fn interleave(streams: &[Bits], precision: u32) -> u64 {
    let mut taken = vec![0u32; streams.len()];
    let mut word = 0u64;
    for p in 0..precision {
        let s = p as usize % streams.len();
        let b = streams[s];
        let bit = (b.value >> (b.len - 1 - taken[s])) & 1;
        taken[s] += 1;
        word = (word << 1) | bit;
    }
    word
}

/// Recovers the stream value whose midpoint maps to `x` under `law`.
fn locate(law: &dyn InverseTransform, x: f64, len: u32) -> Result<Bits, MarkError> {
    if len == 0 {
        return Ok(Bits { value: 0, len: 0 });
    }
    let scale = 2f64.powi(len as i32);
    let max = (1u64 << len) - 1;
    let guess = ((law.cdf(x) * scale).floor().max(0.0) as u64).min(max);
    let mut best: Option<(f64, u64)> = None;
    for v in guess.saturating_sub(2)..=(guess + 2).min(max) {
        let y = law.quantile(Bits { value: v, len }.midpoint());
        let err = (y - x).abs();
        if best.is_none_or(|(e, _)| err < e) {
            best = Some((err, v));
        }
    }
    let (err, value) = best.expect("non-empty candidate range");
    if err > 1e-9 * x.abs().max(1.0) {
        return Err(MarkError::OffGrid { value: x });
    }
    Ok(Bits { value, len })
}

/// Splits one draw from `gap` into a redrawn value of the same law and
/// `arity` independent uniform streams, bijectively on a grid of
/// `precision_bits` bits.
pub struct RecycleCodec<'a> {
    pub precision_bits: u32,
    pub arity: usize,
    pub gap: &'a dyn InverseTransform,
}

/// Output of [`RecycleCodec::split`].
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub gap: f64,
    pub streams: Vec<Bits>,
}

impl<'a> RecycleCodec<'a> {
    /// Codec at the finest precision the gap law resolves, at most 53 bits.
    pub fn new(gap: &'a dyn InverseTransform, arity: usize) -> Self {
        RecycleCodec {
            precision_bits: gap.resolution_bits().min(PRECISION_BITS),
            arity,
            gap,
        }
    }

    fn word(&self, d: f64) -> u64 {
        let u = self.gap.cdf(d);
        let scale = 2f64.powi(self.precision_bits as i32);
        ((u * scale).floor() as u64).min((1u64 << self.precision_bits) - 1)
    }

    /// The grid value that `d` is identified with.
    pub fn truncate(&self, d: f64) -> f64 {
        if self.arity == 0 {
            return d;
        }
        let w = self.word(d);
        self.gap.quantile(Bits { value: w, len: self.precision_bits }.midpoint())
    }

    /// New gap and the mark streams, before the marks are mapped to values.
    pub fn split(&self, d: f64) -> Split {
        if self.arity == 0 {
            return Split { gap: d, streams: vec![] };
        }
        let mut streams = deinterleave(self.word(d), self.precision_bits, self.arity + 1);
        let gap = self.gap.quantile(streams[0].midpoint());
        streams.remove(0);
        Split { gap, streams }
    }

    pub fn encode(&self, d: f64, marks: &[&dyn InverseTransform]) -> Result<(f64, Vec<f64>), MarkError> {
        if marks.len() != self.arity {
            return Err(MarkError::Arity {
                expected: self.arity,
                got: marks.len(),
            });
        }
        let s = self.split(d);
        let values = s.streams.iter().zip(marks).map(|(b, law)| law.quantile(b.midpoint())).collect();
        Ok((s.gap, values))
    }

    /// Inverse of [`encode`](Self::encode): the truncated original gap.
    pub fn decode(&self, gap: f64, marks: &[f64], laws: &[&dyn InverseTransform]) -> Result<f64, MarkError> {
        if marks.len() != self.arity || laws.len() != self.arity {
            return Err(MarkError::Arity {
                expected: self.arity,
                got: marks.len(),
            });
        }
        if self.arity == 0 {
            return Ok(gap);
        }
        let lens: Vec<u32> = deinterleave(0, self.precision_bits, self.arity + 1).iter().map(|b| b.len).collect();
        let mut streams = Vec::with_capacity(self.arity + 1);
        streams.push(locate(self.gap, gap, lens[0])?);
        for i in 0..self.arity {
            streams.push(locate(laws[i], marks[i], lens[i + 1])?);
        }
        let word = interleave(&streams, self.precision_bits);
        Ok(self.gap.quantile(Bits { value: word, len: self.precision_bits }.midpoint()))
    }
}

/// Which gap pairs carry marks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CarrierPolicy {
    /// Only the pair of A-gaps just left of the special point.
    SinglePoint,
    /// Every disjoint pair of adjacent gaps whose split law is continuous,
    /// scanning leftwards from the special point.
    #[default]
    AllPairs,
}

/// Points whose three left gaps are in A, in A, and not in A.
pub fn find_special_points(pattern: &PointPattern, set: &HitSet) -> PointPattern {
    let xs = &pattern.points;
    let special: Vec<f64> = special_indices(xs, set).into_iter().map(|i| xs[i]).collect();
    let lo = if xs.len() > 3 { xs[3] } else { pattern.window.hi };
    PointPattern {
        window: Window::new(lo, pattern.window.hi),
        points: special,
    }
}

fn special_indices(xs: &[f64], set: &HitSet) -> Vec<usize> {
    (3..xs.len())
        .filter(|&i| {
            set.contains(xs[i] - xs[i - 1]) && set.contains(xs[i - 1] - xs[i - 2]) && !set.contains(xs[i - 2] - xs[i - 3])
        })
        .collect()
}

/// Everything needed to transform patterns with a fixed jump law.
#[derive(Debug, Clone)]
pub struct Marker {
    pub jump: JumpDistribution,
    pub set: HitSet,
    pub marks: JumpMarkLaw,
    pub policy: CarrierPolicy,
    outside_continuous: bool,
}

/// Result of [`Marker::forward`].
#[derive(Debug, Clone, PartialEq)]
pub struct Marked {
    pub pattern: MarkedPointPattern,
    /// First and last special point; only points in (first, last] are
    /// transformed and marked.
    pub regenerated: Option<(f64, f64)>,
}

struct Carrier {
    /// Index of the resampled point in the pattern.
    middle: usize,
    upper_in: bool,
    lower_in: bool,
    /// Indices into the interval's flattened mark vector.
    slots: Vec<usize>,
}

impl Marker {
    pub fn new(jump: JumpDistribution, set: HitSet, marks: JumpMarkLaw, policy: CarrierPolicy) -> Result<Self, MarkError> {
        let p = set.probability(&jump);
        if !(p > 0.0 && p < 1.0) {
            return Err(MarkError::Invalid(format!("Pr(T in A) = {p} must lie in (0, 1)")));
        }
        if jump.atoms().iter().any(|a| set.contains(a.location)) {
            return Err(MarkError::Invalid("the jump law restricted to A must have no atoms".into()));
        }
        let outside_continuous = jump.atoms().is_empty() && 1.0 - p > 0.0;
        Ok(Marker {
            jump,
            set,
            marks,
            policy,
            outside_continuous,
        })
    }

    fn class_ok(&self, inside: bool) -> bool {
        inside || self.outside_continuous
    }

    /// Carriers of the interval (xs[s], xs[e]] of consecutive special points.
    fn carriers(&self, xs: &[f64], s: usize, e: usize) -> Vec<Carrier> {
        let k = e - s;
        let member = |j: usize| self.set.contains(xs[e + 1 - j] - xs[e - j]);
        let mut out = Vec::new();
        let mut j = 1;
        while j < k {
            let (up, low) = (member(j), member(j + 1));
            if self.class_ok(up) && self.class_ok(low) {
                out.push(Carrier {
                    middle: e - j,
                    upper_in: up,
                    lower_in: low,
                    slots: vec![],
                });
                if self.policy == CarrierPolicy::SinglePoint {
                    break;
                }
                j += 2;
            } else {
                j += 1;
            }
        }
        let slots = k * self.marks.dimension();
        for slot in 0..slots {
            let c = slot % out.len();
            out[c].slots.push(slot);
        }
        out
    }

    fn split_law(&self, xs: &[f64], c: &Carrier) -> Result<PairCdf, MarkError> {
        let total = xs[c.middle + 1] - xs[c.middle - 1];
        PairCdf::conditional_split(&self.jump, &self.set, c.upper_in, c.lower_in, total)
            .ok_or(MarkError::PrecisionLoss { at: total })
    }

    fn mark_law(&self, xs: &[f64], e: usize, slot: usize) -> MarkLaw {
        let m = self.marks.dimension();
        let point = e - slot / m;
        self.marks.laws_for(xs[point] - xs[point - 1])[slot % m]
    }

    fn check_classes(&self, xs: &[f64], c: &Carrier) -> Result<(), MarkError> {
        let i = c.middle;
        if self.set.contains(xs[i + 1] - xs[i]) != c.upper_in || self.set.contains(xs[i] - xs[i - 1]) != c.lower_in {
            return Err(MarkError::PrecisionLoss { at: xs[i] });
        }
        Ok(())
    }

    /// Resamples carrier points and marks every point between the first and
    /// last special point of the pattern.
    pub fn forward(&self, pattern: &PointPattern) -> Result<Marked, MarkError> {
        let mut xs = pattern.points.clone();
        let specials = special_indices(&xs, &self.set);
        let mut marks: Vec<Mark> = vec![Mark::Unmarked; xs.len()];
        for w in specials.windows(2) {
            let (s, e) = (w[0], w[1]);
            let m = self.marks.dimension();
            let mut values = vec![0.0; (e - s) * m];
            let carriers = self.carriers(&xs, s, e);
            let mut splits = Vec::with_capacity(carriers.len());
            for c in &carriers {
                let law = self.split_law(&xs, c)?;
                let upper = xs[c.middle + 1];
                let d = upper - xs[c.middle];
                if law.is_flat_at(d) {
                    return Err(MarkError::PrecisionLoss { at: d });
                }
                let split = RecycleCodec::new(&law, c.slots.len()).split(d);
                xs[c.middle] = upper - split.gap;
                self.check_classes(&xs, c)?;
                splits.push(split);
            }
            for (c, split) in carriers.iter().zip(&splits) {
                for (slot, bits) in c.slots.iter().zip(&split.streams) {
                    values[*slot] = self.mark_law(&xs, e, *slot).quantile(bits.midpoint());
                }
            }
            for (j, chunk) in values.chunks(m).enumerate() {
                marks[e - j] = Mark::Values(chunk.to_vec());
            }
        }
        let regenerated = match (specials.first(), specials.last()) {
            (Some(&a), Some(&b)) if b > a => Some((xs[a], xs[b])),
            _ => None,
        };
        let points = xs
            .into_iter()
            .zip(marks)
            .map(|(location, mark)| MarkedPoint { location, mark })
            .collect();
        Ok(Marked {
            pattern: MarkedPointPattern {
                window: pattern.window,
                points,
            },
            regenerated,
        })
    }

    /// Recovers the unmarked pattern, with resampled points on the codec
    /// grid.
    pub fn inverse(&self, marked: &MarkedPointPattern) -> Result<PointPattern, MarkError> {
        let mut xs: Vec<f64> = marked.points.iter().map(|p| p.location).collect();
        let specials = special_indices(&xs, &self.set);
        let m = self.marks.dimension();
        for w in specials.windows(2) {
            let (s, e) = (w[0], w[1]);
            let mut values = vec![0.0; (e - s) * m];
            for j in 0..e - s {
                match &marked.points[e - j].mark {
                    Mark::Values(v) if v.len() == m => values[j * m..(j + 1) * m].copy_from_slice(v),
                    Mark::Values(v) => {
                        return Err(MarkError::Arity {
                            expected: m,
                            got: v.len(),
                        })
                    }
                    _ => return Err(MarkError::Arity { expected: m, got: 0 }),
                }
            }
            let carriers = self.carriers(&xs, s, e);
            let mut restored = Vec::with_capacity(carriers.len());
            for c in &carriers {
                let law = self.split_law(&xs, c)?;
                let upper = xs[c.middle + 1];
                let laws: Vec<MarkLaw> = c.slots.iter().map(|&slot| self.mark_law(&xs, e, slot)).collect();
                let law_refs: Vec<&dyn InverseTransform> = laws.iter().map(|l| l as &dyn InverseTransform).collect();
                let mark_values: Vec<f64> = c.slots.iter().map(|&slot| values[slot]).collect();
                let d = RecycleCodec::new(&law, c.slots.len()).decode(upper - xs[c.middle], &mark_values, &law_refs)?;
                restored.push(upper - d);
            }
            for (c, x) in carriers.iter().zip(restored) {
                xs[c.middle] = x;
            }
        }
        Ok(PointPattern {
            window: marked.window,
            points: xs,
        })
    }

    /// The pattern with every carrier point moved to its grid value, which is
    /// what [`inverse`](Self::inverse) returns after [`forward`](Self::forward).
    pub fn truncate(&self, pattern: &PointPattern) -> Result<PointPattern, MarkError> {
        let mut xs = pattern.points.clone();
        let specials = special_indices(&xs, &self.set);
        for w in specials.windows(2) {
            for c in self.carriers(&xs, w[0], w[1]) {
                let law = self.split_law(&xs, &c)?;
                let upper = xs[c.middle + 1];
                let d = RecycleCodec::new(&law, c.slots.len()).truncate(upper - xs[c.middle]);
                xs[c.middle] = upper - d;
            }
        }
        Ok(PointPattern {
            window: pattern.window,
            points: xs,
        })
    }
}

/// Directly simulated independently marked pattern, for comparison.
pub fn iid_marks<R: Rng + ?Sized>(pattern: &PointPattern, marks: &JumpMarkLaw, rng: &mut R) -> MarkedPointPattern {
    let xs = &pattern.points;
    let points = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let mark = if i == 0 {
                Mark::Unmarked
            } else {
                Mark::Values(marks.laws_for(x - xs[i - 1]).iter().map(|l| l.sample(rng)).collect())
            };
            MarkedPoint { location: x, mark }
        })
        .collect();
    MarkedPointPattern {
        window: pattern.window,
        points,
    }
}
