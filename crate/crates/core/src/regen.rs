//! Regenerative processes built on renewal structure: Markov-colored point
//! processes and reflected or periodic Brownian motion with its excursion
//! regeneration times.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StandardUniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::{DistError, JumpDistribution};
use crate::patterns::{Mark, MarkedPoint, MarkedPointPattern, PointPattern, Window};
use crate::rng::replicate;
use crate::verify::{ks_two_sample, Check};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegenError {
    #[error("invalid process: {0}")]
    Invalid(String),
    #[error("skeleton chain is not irreducible: color {from} cannot reach color {to}")]
    NotIrreducible { from: usize, to: usize },
    #[error("unknown color {0}")]
    UnknownColor(u32),
    #[error("excursion regeneration needs a reflected path")]
    PeriodicMode,
    #[error(transparent)]
    Distribution(#[from] DistError),
}

/// One outcome of a step from a given color: with probability `prob` the
/// next point comes after a draw from `jump` and gets color `next`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub prob: f64,
    pub jump: JumpDistribution,
    pub next: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovColoredSpec {
    /// `branches[c]` is the mixture used after a point of color c.
    pub branches: Vec<Vec<Branch>>,
    /// Law of the color of the point the simulation starts from.
    pub initial: Vec<f64>,
    #[serde(default)]
    pub irreducible: bool,
}

/// Burn-in length in units of the longest mean return time.
pub const BURN_IN_CYCLES: f64 = 50.0;

impl MarkovColoredSpec {
    pub fn validate(&self) -> Result<(), RegenError> {
        let n = self.branches.len();
        if n == 0 {
            return Err(RegenError::Invalid("no colors".into()));
        }
        if self.initial.len() != n {
            return Err(RegenError::Invalid("initial law has the wrong length".into()));
        }
        check_probabilities(&self.initial, "initial law")?;
        for (c, row) in self.branches.iter().enumerate() {
            let probs: Vec<f64> = row.iter().map(|b| b.prob).collect();
            check_probabilities(&probs, &format!("branches of color {c}"))?;
            for b in row {
                if b.next as usize >= n {
                    return Err(RegenError::UnknownColor(b.next));
                }
                b.jump.mean()?;
            }
        }
        if self.irreducible {
            self.check_irreducible()?;
        }
        Ok(())
    }

    pub fn colors(&self) -> usize {
        self.branches.len()
    }

    /// Transition matrix of the color sequence.
    pub fn skeleton(&self) -> Vec<Vec<f64>> {
        let n = self.colors();
        let mut m = vec![vec![0.0; n]; n];
        for (c, row) in self.branches.iter().enumerate() {
            for b in row {
                m[c][b.next as usize] += b.prob;
            }
        }
        m
    }

    pub fn check_irreducible(&self) -> Result<(), RegenError> {
        let m = self.skeleton();
        let n = m.len();
        for from in 0..n {
            let mut seen = vec![false; n];
            let mut queue = VecDeque::from([from]);
            seen[from] = true;
            while let Some(i) = queue.pop_front() {
                for j in 0..n {
                    if m[i][j] > 0.0 && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
            if let Some(to) = seen.iter().position(|s| !s) {
                return Err(RegenError::NotIrreducible { from, to });
            }
        }
        Ok(())
    }

    /// Stationary law of the skeleton, by power iteration of the lazy chain.
    pub fn skeleton_stationary(&self) -> Vec<f64> {
        let m = self.skeleton();
        let n = m.len();
        let mut pi = vec![1.0 / n as f64; n];
        for _ in 0..1_000_000 {
            let mut next = vec![0.0; n];
            for i in 0..n {
                for j in 0..n {
                    next[j] += 0.5 * pi[i] * m[i][j];
                }
                next[i] += 0.5 * pi[i];
            }
            let diff: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
            pi = next;
            if diff < 1e-15 {
                break;
            }
        }
        pi
    }

    /// Mean time from a point of color c to the next point.
    pub fn mean_holding(&self) -> Vec<f64> {
        self.branches
            .iter()
            .map(|row| row.iter().map(|b| b.prob * b.jump.mean().unwrap_or(f64::INFINITY)).sum())
            .collect()
    }

    /// Long-run fraction of time spent after a point of each color.
    pub fn time_occupancy(&self) -> Vec<f64> {
        let pi = self.skeleton_stationary();
        let w: Vec<f64> = pi.iter().zip(self.mean_holding()).map(|(p, m)| p * m).collect();
        let total: f64 = w.iter().sum();
        w.iter().map(|v| v / total).collect()
    }

    /// Mean time between consecutive points of the same color, maximized
    /// over colors that recur.
    pub fn longest_mean_return(&self) -> f64 {
        let pi = self.skeleton_stationary();
        let cycle: f64 = pi.iter().zip(self.mean_holding()).map(|(p, m)| p * m).sum();
        pi.iter()
            .filter(|p| **p > 1e-12)
            .map(|p| cycle / p)
            .fold(0.0, f64::max)
    }

    pub fn burn_in(&self) -> f64 {
        BURN_IN_CYCLES * self.longest_mean_return()
    }

    /// Simulates from `window.lo − burn_in` and returns the points in the
    /// window, each marked with its color.
    pub fn simulate_with_burn_in<R: Rng + ?Sized>(
        &self,
        window: Window,
        burn_in: f64,
        rng: &mut R,
    ) -> MarkedPointPattern {
        let mut color = pick(&self.initial, rng);
        let mut t = window.lo - burn_in;
        let mut points = Vec::new();
        loop {
            let row = &self.branches[color];
            let probs: Vec<f64> = row.iter().map(|b| b.prob).collect();
            let b = &row[pick(&probs, rng)];
            t += b.jump.sample(rng);
            color = b.next as usize;
            if t >= window.hi {
                break;
            }
            if t >= window.lo {
                points.push(MarkedPoint {
                    location: t,
                    mark: Mark::Color(color as u32),
                });
            }
        }
        MarkedPointPattern { window, points }
    }

    /// Approximately stationary pattern on `window`, after the default
    /// burn-in.
    pub fn simulate<R: Rng + ?Sized>(&self, window: Window, rng: &mut R) -> Result<MarkedPointPattern, RegenError> {
        self.validate()?;
        Ok(self.simulate_with_burn_in(window, self.burn_in(), rng))
    }

    /// Points of one color.
    pub fn marginal(&self, pattern: &MarkedPointPattern, color: u32) -> Result<PointPattern, RegenError> {
        if color as usize >= self.colors() {
            return Err(RegenError::UnknownColor(color));
        }
        Ok(pattern.with_color(color))
    }
}

/// Approximately stationary colored pattern on `window`.
pub fn simulate_markov_colored<R: Rng + ?Sized>(
    spec: &MarkovColoredSpec,
    window: Window,
    rng: &mut R,
) -> Result<MarkedPointPattern, RegenError> {
    spec.simulate(window, rng)
}

/// Burn-in bias probe: the offset of the first point in a unit-length
/// window after burn-in B and after 2B, compared by a two-sample KS test
/// over `reps` replications each.
pub fn burn_in_comparison(spec: &MarkovColoredSpec, reps: u64, alpha: f64, seed: u64) -> Result<Check, RegenError> {
    spec.validate()?;
    let b = spec.burn_in();
    let span = spec.longest_mean_return();
    let window = Window::new(0.0, span);
    let offsets = |burn: f64, master: u64| -> Vec<f64> {
        replicate(master, reps, |_, rng| {
            let p = spec.simulate_with_burn_in(window, burn, rng);
            p.points.first().map_or(span, |x| x.location)
        })
    };
    let short = offsets(b, seed);
    let long = offsets(2.0 * b, seed ^ 0x5555_5555);
    Ok(match ks_two_sample(&short, &long) {
        Ok(ks) => Check::ks("burn-in B vs 2B first-point offset", ks, alpha, seed),
        Err(e) => Check::degenerate("burn-in B vs 2B first-point offset", reps as usize, seed, e.to_string()),
    }
    .with_note(format!("burn-in B = {b:.4}")))
}

fn check_probabilities(p: &[f64], what: &str) -> Result<(), RegenError> {
    let total: f64 = p.iter().sum();
    if p.is_empty() || p.iter().any(|v| !(*v >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(RegenError::Invalid(format!("{what} must be a probability vector")));
    }
    Ok(())
}

fn pick<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let mut u: f64 = StandardUniform.sample(rng);
    for (i, p) in probs.iter().enumerate() {
        if u < *p {
            return i;
        }
        u -= p;
    }
    probs.len() - 1
}

/// Points of one color of a colored pattern.
pub fn color_marginal(pattern: &MarkedPointPattern, color: u32) -> PointPattern {
    pattern.with_color(color)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FoldMode {
    /// Distance to the nearest multiple of 2h: reflection at 0 and h.
    Reflected,
    /// Value modulo h.
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrownianSpec {
    pub h: f64,
    pub mode: FoldMode,
    pub dt: f64,
    pub window: Window,
}

impl BrownianSpec {
    pub fn validate(&self) -> Result<(), RegenError> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(RegenError::Invalid("h must be positive".into()));
        }
        if !(self.dt > 0.0 && self.dt <= self.h * self.h / 400.0) {
            return Err(RegenError::Invalid(format!("dt must lie in (0, h²/400 = {}]", self.h * self.h / 400.0)));
        }
        if self.window.is_empty() || !self.window.hi.is_finite() {
            return Err(RegenError::Invalid("window must be non-empty and bounded".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.window.len() / self.dt).ceil() as usize
    }

    pub fn fold(&self, b: f64) -> f64 {
        match self.mode {
            FoldMode::Reflected => {
                let y = b.rem_euclid(2.0 * self.h);
                if y > self.h {
                    2.0 * self.h - y
                } else {
                    y
                }
            }
            FoldMode::Periodic => b.rem_euclid(self.h),
        }
    }
}

/// Unfolded Euler walk started uniformly on [0, h].
pub struct BrownianWalk<'a, R: Rng + ?Sized> {
    spec: &'a BrownianSpec,
    rng: &'a mut R,
    value: f64,
    left: usize,
    started: bool,
}

impl<'a, R: Rng + ?Sized> BrownianWalk<'a, R> {
    pub fn new(spec: &'a BrownianSpec, rng: &'a mut R) -> Self {
        let u: f64 = StandardUniform.sample(rng);
        BrownianWalk {
            value: u * spec.h,
            spec,
            rng,
            left: spec.steps(),
            started: false,
        }
    }
}

impl<R: Rng + ?Sized> Iterator for BrownianWalk<'_, R> {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        if !self.started {
            self.started = true;
            return Some(self.value);
        }
        if self.left == 0 {
            return None;
        }
        self.left -= 1;
        let z: f64 = StandardNormal.sample(self.rng);
        self.value += self.spec.dt.sqrt() * z;
        Some(self.value)
    }
}

/// A sampled path: the unfolded walk and its folded values on the time grid
/// window.lo + i·dt.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    pub start: f64,
    pub dt: f64,
    pub raw: Vec<f64>,
    pub folded: Vec<f64>,
}

impl BrownianPath {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.raw.len()).map(|i| self.start + i as f64 * self.dt)
    }
}

pub fn simulate_brownian<R: Rng + ?Sized>(spec: &BrownianSpec, rng: &mut R) -> Result<BrownianPath, RegenError> {
    spec.validate()?;
    let raw: Vec<f64> = BrownianWalk::new(spec, rng).collect();
    let folded = raw.iter().map(|&b| spec.fold(b)).collect();
    Ok(BrownianPath {
        start: spec.window.lo,
        dt: spec.dt,
        raw,
        folded,
    })
}

/// Scanner for regeneration times: the first return to 0 after a visit to
/// h. Level crossings of the unfolded walk at multiples of h are located by
/// linear interpolation; odd multiples are visits to h, even ones to 0.
struct ExcursionScanner {
    h: f64,
    seen_top: bool,
    points: Vec<f64>,
}

impl ExcursionScanner {
    fn step(&mut self, t: f64, dt: f64, a: f64, b: f64) {
        let (ka, kb) = ((a / self.h).floor(), (b / self.h).floor());
        if ka == kb {
            return;
        }
        let lo = ka.min(kb);
        let hi = ka.max(kb);
        let mut level = lo + 1.0;
        while level <= hi {
            let order = if b > a { level } else { hi - (level - lo - 1.0) };
            let x = order * self.h;
            let when = t + dt * (x - a) / (b - a);
            if (order as i64).rem_euclid(2) == 1 {
                self.seen_top = true;
            } else if self.seen_top {
                self.points.push(when);
                self.seen_top = false;
            }
            level += 1.0;
        }
    }
}

/// Regeneration times of a reflected path.
pub fn excursion_regeneration(path: &BrownianPath, spec: &BrownianSpec) -> Result<PointPattern, RegenError> {
    if spec.mode != FoldMode::Reflected {
        return Err(RegenError::PeriodicMode);
    }
    let mut scan = ExcursionScanner {
        h: spec.h,
        seen_top: false,
        points: Vec::new(),
    };
    for (i, w) in path.raw.windows(2).enumerate() {
        scan.step(path.start + i as f64 * path.dt, path.dt, w[0], w[1]);
    }
    let end = path.start + (path.raw.len().max(1) - 1) as f64 * path.dt;
    Ok(PointPattern {
        window: Window::new(path.start, end.max(path.start)),
        points: scan.points,
    })
}

/// Same as simulating a path and scanning it, without storing the path.
pub fn simulate_regeneration<R: Rng + ?Sized>(spec: &BrownianSpec, rng: &mut R) -> Result<PointPattern, RegenError> {
    spec.validate()?;
    if spec.mode != FoldMode::Reflected {
        return Err(RegenError::PeriodicMode);
    }
    let mut scan = ExcursionScanner {
        h: spec.h,
        seen_top: false,
        points: Vec::new(),
    };
    let mut prev = None;
    let mut i = 0usize;
    for b in BrownianWalk::new(spec, rng) {
        if let Some(a) = prev {
            scan.step(spec.window.lo + (i - 1) as f64 * spec.dt, spec.dt, a, b);
        }
        prev = Some(b);
        i += 1;
    }
    let end = spec.window.lo + (i.max(1) - 1) as f64 * spec.dt;
    Ok(PointPattern {
        window: Window::new(spec.window.lo, end),
        points: scan.points,
    })
}
