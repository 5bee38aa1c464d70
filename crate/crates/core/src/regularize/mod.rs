//! Regularizing renewal processes by run-length thinning.
//!
//! Given a jump law T, a set A and k ≥ 1, the k-hit law is the sum of i.i.d.
//! draws from T up to and including the first time k consecutive draws fall
//! in A. Thinning a renewal process with jump law T to the points preceded by
//! a run of A-gaps whose length is a multiple of k gives a renewal process
//! with that law. Suitable choices of A turn an arbitrary law into one with
//! a bounded, eventually positive hazard.

pub mod lattice;

use std::fmt;
use std::sync::Arc;

use rand::RngCore;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::{sup_along_radius, DistError, JumpDistribution};
use crate::patterns::{PointPattern, Window};
use crate::quad;

pub use lattice::{k_hit_law, KHitLaw};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegError {
    #[error("invalid hit set: {0}")]
    InvalidSet(String),
    #[error("Pr(T in A) = {p} is outside {range}")]
    HitProbability { p: f64, range: &'static str },
    #[error("no admissible hit set: {0}")]
    NotAchievable(String),
    #[error("no interval of positive density was found")]
    NoInterval,
    #[error("no run of hits within {0} draws")]
    MaxDraws(u64),
    #[error("conditioning event has probability {p}, below the rejection-sampling floor")]
    RareEvent { p: f64 },
    #[error("run length k must be at least 1")]
    ZeroRun,
    #[error(transparent)]
    Distribution(#[from] DistError),
    #[error("lattice computation failed: {0}")]
    Lattice(String),
}

/// Hard cap on draws per k-hit sample.
pub const MAX_DRAWS: u64 = 1_000_000_000;
/// Smallest acceptance probability allowed for rejection sampling of T|A.
pub const MIN_ACCEPTANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    #[serde(default)]
    pub lo_closed: bool,
    #[serde(default)]
    pub hi_closed: bool,
}

impl Interval {
    pub fn open(lo: f64, hi: f64) -> Self {
        Interval {
            lo,
            hi,
            lo_closed: false,
            hi_closed: false,
        }
    }

    pub fn point(x: f64) -> Self {
        Interval {
            lo: x,
            hi: x,
            lo_closed: true,
            hi_closed: true,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        let above = if self.lo_closed { x >= self.lo } else { x > self.lo };
        let below = if self.hi_closed { x <= self.hi } else { x < self.hi };
        above && below
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.lo == self.hi {
            return write!(f, "{{{}}}", self.lo);
        }
        let l = if self.lo_closed { '[' } else { '(' };
        let r = if self.hi_closed { ']' } else { ')' };
        write!(f, "{l}{}, {}{r}", self.lo, self.hi)
    }
}

/// A finite union of intervals, minus finitely many excluded points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitSet {
    pub intervals: Vec<Interval>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excluded_atoms: Vec<f64>,
}

impl HitSet {
    pub fn new(mut intervals: Vec<Interval>, mut excluded_atoms: Vec<f64>) -> Result<Self, RegError> {
        for iv in &intervals {
            let ok = iv.lo >= 0.0
                && iv.lo.is_finite()
                && !iv.hi.is_nan()
                && (iv.hi > iv.lo || (iv.hi == iv.lo && iv.lo_closed && iv.hi_closed));
            if !ok {
                return Err(RegError::InvalidSet(format!("bad interval {iv}")));
            }
        }
        intervals.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        for w in intervals.windows(2) {
            let touching = w[0].hi == w[1].lo && w[0].hi_closed && w[1].lo_closed;
            if w[1].lo < w[0].hi || touching {
                return Err(RegError::InvalidSet(format!("{} and {} overlap", w[0], w[1])));
            }
        }
        excluded_atoms.sort_by(f64::total_cmp);
        excluded_atoms.dedup();
        Ok(HitSet {
            intervals,
            excluded_atoms,
        })
    }

    /// The open interval (lo, hi).
    pub fn interval(lo: f64, hi: f64) -> Result<Self, RegError> {
        Self::new(vec![Interval::open(lo, hi)], vec![])
    }

    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|iv| iv.contains(x)) && !self.excluded_atoms.contains(&x)
    }

    /// Pr(T ∈ A).
    pub fn probability(&self, jump: &JumpDistribution) -> f64 {
        let ac: f64 = self.intervals.iter().map(|iv| jump.ac_mass_between(iv.lo, iv.hi)).sum();
        let atoms: f64 = jump
            .atoms()
            .iter()
            .filter(|a| self.contains(a.location))
            .map(|a| a.mass)
            .sum();
        (ac + atoms).clamp(0.0, 1.0)
    }

    /// E[e^{γT}; T ∈ A].
    pub fn partial_mgf(&self, jump: &JumpDistribution, gamma: f64) -> Result<f64, DistError> {
        let mut total = 0.0;
        for iv in &self.intervals {
            total += jump.ac_partial_mgf(iv.lo, iv.hi, gamma)?;
        }
        for a in jump.atoms() {
            if self.contains(a.location) {
                total += a.mass * (gamma * a.location).exp();
            }
        }
        Ok(total)
    }

    /// Pr(T ∈ A), required to lie strictly between 0 and 1.
    pub fn check_against(&self, jump: &JumpDistribution) -> Result<f64, RegError> {
        let p = self.probability(jump);
        if p > 0.0 && p < 1.0 {
            Ok(p)
        } else {
            Err(RegError::HitProbability { p, range: "(0, 1)" })
        }
    }
}

impl fmt::Display for HitSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.intervals.is_empty() {
            return write!(f, "∅");
        }
        let parts: Vec<String> = self.intervals.iter().map(|iv| iv.to_string()).collect();
        write!(f, "{}", parts.join(" ∪ "))?;
        if !self.excluded_atoms.is_empty() {
            let pts: Vec<String> = self.excluded_atoms.iter().map(|x| x.to_string()).collect();
            write!(f, " \\ {{{}}}", pts.join(", "))?;
        }
        Ok(())
    }
}

/// Anything that produces i.i.d. positive jumps.
pub trait JumpSampler: Send + Sync {
    fn draw(&self, rng: &mut dyn RngCore) -> Result<f64, RegError>;
}

impl JumpSampler for JumpDistribution {
    fn draw(&self, rng: &mut dyn RngCore) -> Result<f64, RegError> {
        Ok(self.sample(rng))
    }
}

/// T conditioned on T ∈ A (or on T ∉ A), by rejection.
#[derive(Debug, Clone)]
pub struct Conditioned {
    law: JumpDistribution,
    set: HitSet,
    inside: bool,
    probability: f64,
}

impl Conditioned {
    pub fn new(law: JumpDistribution, set: HitSet, inside: bool) -> Result<Self, RegError> {
        let p = set.probability(&law);
        let probability = if inside { p } else { 1.0 - p };
        if probability < MIN_ACCEPTANCE {
            return Err(RegError::RareEvent { p: probability });
        }
        Ok(Conditioned {
            law,
            set,
            inside,
            probability,
        })
    }

    pub fn probability(&self) -> f64 {
        self.probability
    }
}

impl JumpSampler for Conditioned {
    fn draw(&self, rng: &mut dyn RngCore) -> Result<f64, RegError> {
        loop {
            let t = self.law.sample(rng);
            if self.set.contains(t) == self.inside {
                return Ok(t);
            }
        }
    }
}

/// The k-hit law of another sampler.
#[derive(Clone)]
pub struct KHit {
    pub base: Arc<dyn JumpSampler>,
    pub set: HitSet,
    pub k: usize,
}

impl JumpSampler for KHit {
    fn draw(&self, rng: &mut dyn RngCore) -> Result<f64, RegError> {
        k_hit_draw(self.base.as_ref(), &self.set, self.k, rng).map(|(t, _)| t)
    }
}

/// Sum of a geometric number of draws, Pr(N = n) = p(1 − p)^{n−1} for n ≥ 1,
/// optionally using N − 1 terms instead of N.
#[derive(Clone)]
pub struct GeomSum {
    pub base: Arc<dyn JumpSampler>,
    pub p: f64,
    pub minus_one: bool,
}

impl JumpSampler for GeomSum {
    fn draw(&self, rng: &mut dyn RngCore) -> Result<f64, RegError> {
        sample_geom_sum(self.base.as_ref(), self.p, self.minus_one, rng).map(|(t, _)| t)
    }
}

/// Independent sum of one draw from each part.
#[derive(Clone)]
pub struct SumOf(pub Vec<Arc<dyn JumpSampler>>);

impl JumpSampler for SumOf {
    fn draw(&self, rng: &mut dyn RngCore) -> Result<f64, RegError> {
        let mut total = 0.0;
        for part in &self.0 {
            total += part.draw(rng)?;
        }
        Ok(total)
    }
}

/// One k-hit draw: the sum and the number of base draws it used.
pub fn k_hit_draw(
    base: &dyn JumpSampler,
    set: &HitSet,
    k: usize,
    rng: &mut dyn RngCore,
) -> Result<(f64, u64), RegError> {
    if k == 0 {
        return Err(RegError::ZeroRun);
    }
    let mut total = 0.0;
    let mut run = 0;
    for n in 1..=MAX_DRAWS {
        let t = base.draw(rng)?;
        total += t;
        if set.contains(t) {
            run += 1;
            if run == k {
                return Ok((total, n));
            }
        } else {
            run = 0;
        }
    }
    Err(RegError::MaxDraws(MAX_DRAWS))
}

/// Like [`k_hit_draw`] but returns every base draw.
pub fn k_hit_trace(
    base: &dyn JumpSampler,
    set: &HitSet,
    k: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<f64>, RegError> {
    if k == 0 {
        return Err(RegError::ZeroRun);
    }
    let mut draws = Vec::new();
    let mut run = 0;
    while (draws.len() as u64) < MAX_DRAWS {
        let t = base.draw(rng)?;
        draws.push(t);
        if set.contains(t) {
            run += 1;
            if run == k {
                return Ok(draws);
            }
        } else {
            run = 0;
        }
    }
    Err(RegError::MaxDraws(MAX_DRAWS))
}

/// k-hit draw from a jump law, after checking that A can be hit.
/// Pr(T ∈ A) = 1 is allowed and gives the k-fold convolution.
pub fn sample_k_hit(
    jump: &JumpDistribution,
    set: &HitSet,
    k: usize,
    rng: &mut dyn RngCore,
) -> Result<(f64, u64), RegError> {
    let p = set.probability(jump);
    if p <= 0.0 {
        return Err(RegError::HitProbability { p, range: "(0, 1]" });
    }
    k_hit_draw(jump, set, k, rng)
}

/// Geometric sum of draws from `base`; returns the sum and the number of
/// terms used.
pub fn sample_geom_sum(
    base: &dyn JumpSampler,
    p: f64,
    minus_one: bool,
    rng: &mut dyn RngCore,
) -> Result<(f64, u64), RegError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(RegError::HitProbability { p, range: "(0, 1]" });
    }
    let failures = Geometric::new(p)
        .map_err(|e| RegError::InvalidSet(e.to_string()))?
        .sample(rng);
    let n = failures + u64::from(!minus_one);
    let mut total = 0.0;
    for _ in 0..n {
        total += base.draw(rng)?;
    }
    Ok((total, n))
}

/// The 1-hit law through its decomposition: (T|Aᶜ) summed over a geometric
/// number minus one of terms, plus an independent T|A.
pub fn one_hit_decomposition(jump: &JumpDistribution, set: &HitSet) -> Result<SumOf, RegError> {
    let p = set.check_against(jump)?;
    let outside = Arc::new(Conditioned::new(jump.clone(), set.clone(), false)?);
    let inside = Arc::new(Conditioned::new(jump.clone(), set.clone(), true)?);
    Ok(SumOf(vec![
        Arc::new(GeomSum {
            base: outside,
            p,
            minus_one: true,
        }),
        inside,
    ]))
}

/// Mean number of draws of a k-hit sample when each draw hits with
/// probability p.
pub fn expected_draws(p: f64, k: usize) -> f64 {
    let pk = p.powi(k as i32);
    if p >= 1.0 {
        k as f64
    } else {
        (1.0 - pk) / ((1.0 - p) * pk)
    }
}

/// E[e^{γT} | T ∉ A].
pub fn complement_mgf(jump: &JumpDistribution, set: &HitSet, gamma: f64) -> Result<f64, RegError> {
    let p = set.check_against(jump)?;
    let total = jump.mgf(gamma)?;
    if total.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let inside = set.partial_mgf(jump, gamma)?;
    Ok(((total - inside) / (1.0 - p)).max(0.0))
}

/// sup over γ below the mgf radius of E[e^{γT} | T ∉ A].
pub fn complement_exp_moment(jump: &JumpDistribution, set: &HitSet) -> Result<f64, RegError> {
    let p = set.check_against(jump)?;
    let sup = sup_along_radius(jump.mgf_radius(), |g| {
        let total = jump.mgf(g)?;
        if total.is_infinite() {
            return Ok(f64::INFINITY);
        }
        Ok(((total - set.partial_mgf(jump, g)?) / (1.0 - p)).max(0.0))
    })?;
    Ok(sup)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonsingularChoice {
    pub set: HitSet,
    /// Mass of the absolutely continuous part of the k-fold convolution.
    pub epsilon: f64,
    /// Pr(T ∈ A) must exceed this.
    pub threshold: f64,
    pub probability: f64,
}

const QUANTILE_GRID: usize = 1000;

/// A set A of the form (0, Q), possibly with atoms removed or added, such
/// that the k-hit law of T is non-singular: Pr(T ∈ A) exceeds
/// (1 − ε)^{1/k} by a margin of 0.01, where ε is the absolutely continuous
/// mass of the k-fold convolution of T.
pub fn choose_hit_set_nonsingular(jump: &JumpDistribution, k: usize) -> Result<NonsingularChoice, RegError> {
    if k == 0 {
        return Err(RegError::ZeroRun);
    }
    let atom_mass = jump.atom_mass();
    if jump.ac_mass() <= 0.0 {
        return Err(RegError::NotAchievable(
            "a purely atomic law has singular convolution powers".into(),
        ));
    }
    let epsilon = 1.0 - atom_mass.powi(k as i32);
    let threshold = (1.0 - epsilon).powf(1.0 / k as f64) + 0.01;
    let done = |set: HitSet, probability: f64| NonsingularChoice {
        set,
        epsilon,
        threshold,
        probability,
    };
    if jump.atoms().is_empty() {
        let median = jump.quantile(0.5);
        let set = HitSet::interval(0.0, median)?;
        let p = set.check_against(jump)?;
        return Ok(done(set, p));
    }
    let valid = |p: f64| p > threshold && p < 1.0 - 1e-12;
    let quantiles: Vec<f64> = (1..QUANTILE_GRID)
        .map(|j| jump.quantile(j as f64 / QUANTILE_GRID as f64))
        .filter(|q| *q > 0.0 && q.is_finite())
        .collect();
    for &q in &quantiles {
        let inner: Vec<f64> = jump
            .atoms()
            .iter()
            .filter(|a| a.location < q)
            .map(|a| a.location)
            .collect();
        let without = HitSet::new(vec![Interval::open(0.0, q)], inner)?;
        let p = without.probability(jump);
        if valid(p) {
            return Ok(done(without, p));
        }
        let with = HitSet::interval(0.0, q)?;
        let p = with.probability(jump);
        if valid(p) {
            return Ok(done(with, p));
        }
    }
    for &q in &quantiles {
        let mut intervals = vec![Interval::open(0.0, q)];
        intervals.extend(jump.atoms().iter().filter(|a| a.location >= q).map(|a| Interval::point(a.location)));
        let set = HitSet::new(intervals, vec![])?;
        let p = set.probability(jump);
        if valid(p) {
            return Ok(done(set, p));
        }
    }
    Err(RegError::NotAchievable(format!(
        "no set (0, Q) with or without atoms has mass in ({threshold}, 1)"
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundedDensityChoice {
    pub set: HitSet,
    /// Right end d of the region (0, d).
    pub split: f64,
    /// Density level λ with A ⊂ {g ≤ λ}.
    pub level: f64,
    pub probability: f64,
}

const DENSITY_GRID: usize = 1000;

/// Median of the absolutely continuous part.
pub fn ac_median(jump: &JumpDistribution) -> f64 {
    let half = 0.5 * jump.ac_mass();
    let mut hi = jump.mean().unwrap_or(1.0).max(1e-12);
    while jump.ac_cdf(hi) < half && hi < 1e300 {
        hi *= 2.0;
    }
    quad::bisect(|t| jump.ac_cdf(t) - half, 0.0, hi)
}

/// A = {g ≤ λ} ∩ (0, d) minus the atoms of T, where g is the absolutely
/// continuous density, d its median and λ the largest value of g on a grid
/// over [d/100, d]. The 2-hit law for this A has a bounded continuous
/// density.
pub fn choose_hit_set_bounded_density(jump: &JumpDistribution) -> Result<BoundedDensityChoice, RegError> {
    if jump.ac_mass() <= 0.0 {
        return Err(RegError::NotAchievable("law has no absolutely continuous part".into()));
    }
    let d = ac_median(jump);
    if !(d > 0.0) {
        return Err(RegError::NotAchievable(format!("median {d} of the density is not positive")));
    }
    let h = d / DENSITY_GRID as f64;
    let g: Vec<f64> = (0..DENSITY_GRID).map(|i| jump.ac_density((i as f64 + 0.5) * h)).collect();
    let level = g
        .iter()
        .enumerate()
        .filter(|(i, _)| (*i as f64 + 1.0) * h >= d / 100.0)
        .map(|(_, v)| *v)
        .fold(0.0, f64::max);
    if !(level > 0.0 && level.is_finite()) {
        return Err(RegError::NotAchievable(format!("density level {level} on (0, {d})")));
    }
    let mut intervals = Vec::new();
    let mut start = None;
    for i in 0..=DENSITY_GRID {
        let inside = g.get(i).is_some_and(|&v| v <= level);
        match (inside, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                let hi = if i == DENSITY_GRID { d } else { i as f64 * h };
                intervals.push(Interval::open(s as f64 * h, hi));
                start = None;
            }
            _ => {}
        }
    }
    let excluded: Vec<f64> = jump
        .atoms()
        .iter()
        .filter(|a| a.location < d)
        .map(|a| a.location)
        .collect();
    let set = HitSet::new(intervals, excluded)?;
    let probability = set.check_against(jump)?;
    Ok(BoundedDensityChoice {
        set,
        split: d,
        level,
        probability,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularChoice {
    pub set: HitSet,
    pub probability: f64,
    /// sup_γ E[e^{γT} | T ∉ A].
    pub complement_moment: f64,
}

/// An interval A = (d, d′) around the mode of the density, on which the
/// density is positive, with Pr(T ∈ A) < 1 − 1/sup_γ E[e^{γT} | T ∉ A].
/// The 1-hit law for A then has a bounded hazard that stays away from zero
/// in the tail.
pub fn choose_hit_interval_regular(jump: &JumpDistribution) -> Result<RegularChoice, RegError> {
    let mean = jump.mean()?;
    let step = 0.05 * mean;
    let mut grid = Vec::new();
    let mut t = 0.0;
    while jump.survival(t) > 1e-9 && grid.len() < 1_000_000 {
        grid.push(t);
        t += step;
    }
    let (mode, peak) = grid
        .iter()
        .map(|&t| (t, jump.ac_density(t)))
        .fold((0.0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
    if !(peak > 0.0) {
        return Err(RegError::NoInterval);
    }
    let mut width = 0.1 * mean;
    for _ in 0..40 {
        let lo = (mode - 0.5 * width).max(step);
        let hi = lo + width;
        let positive = (0..=20).all(|i| jump.ac_density(lo + width * i as f64 / 20.0) > 0.0);
        if !positive {
            return Err(RegError::NoInterval);
        }
        let excluded = jump
            .atoms()
            .iter()
            .filter(|a| a.location > lo && a.location < hi)
            .map(|a| a.location)
            .collect();
        let set = HitSet::new(vec![Interval::open(lo, hi)], excluded)?;
        let probability = set.check_against(jump)?;
        let complement_moment = complement_exp_moment(jump, &set)?;
        if probability < 1.0 - 1.0 / complement_moment {
            return Ok(RegularChoice {
                set,
                probability,
                complement_moment,
            });
        }
        width *= 0.5;
    }
    Err(RegError::NotAchievable(
        "interval mass never dropped below the exponential-moment limit".into(),
    ))
}

/// Points of a renewal pattern preceded by a run of A-gaps whose length is
/// a positive multiple of k.
///
/// Run lengths of the first points are unknown when the run reaches the
/// left edge of the pattern; the output window starts at the first point
/// whose run length is determined.
pub fn extract_k_hit_points(pattern: &PointPattern, set: &HitSet, k: usize) -> Result<PointPattern, RegError> {
    if k == 0 {
        return Err(RegError::ZeroRun);
    }
    let xs = &pattern.points;
    let mut kept = Vec::new();
    let mut start = None;
    let mut run = 0usize;
    for i in 1..xs.len() {
        let hit = set.contains(xs[i] - xs[i - 1]);
        run = if hit { run + 1 } else { 0 };
        if start.is_none() && (!hit || k == 1) {
            start = Some(i);
        }
        if start.is_some() && run > 0 && run.is_multiple_of(k) {
            kept.push(xs[i]);
        }
    }
    let lo = start.map_or(pattern.window.hi, |i| xs[i]);
    Ok(PointPattern {
        window: Window::new(lo, pattern.window.hi),
        points: kept,
    })
}
