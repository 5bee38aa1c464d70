//! Point configurations on a line or in the plane, and the baseline
//! samplers: Poisson processes and stationary renewal processes.

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardUniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::{DistError, JumpDistribution};

pub const RED: u32 = 0;
pub const BLUE: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PatternError {
    #[error("pattern needs at least two points")]
    TooFewPoints,
    #[error("invalid pattern: {0}")]
    Invalid(String),
    #[error(transparent)]
    Distribution(#[from] DistError),
}

/// Half-open interval [lo, hi).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
}

impl Window {
    pub fn new(lo: f64, hi: f64) -> Self {
        Window { lo, hi }
    }

    pub fn len(&self) -> f64 {
        (self.hi - self.lo).max(0.0)
    }

    pub fn is_empty(&self) -> bool {
        !(self.hi > self.lo)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x < self.hi
    }

    pub fn intersect(&self, other: &Window) -> Window {
        Window::new(self.lo.max(other.lo), self.hi.min(other.hi))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointPattern {
    pub window: Window,
    pub points: Vec<f64>,
}

impl PointPattern {
    pub fn new(window: Window, points: Vec<f64>) -> Result<Self, PatternError> {
        for w in points.windows(2) {
            if !(w[1] > w[0]) {
                return Err(PatternError::Invalid(format!(
                    "points must be strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        if let Some(&x) = points.iter().find(|&&x| !window.contains(x)) {
            return Err(PatternError::Invalid(format!(
                "point {x} outside window [{}, {})",
                window.lo, window.hi
            )));
        }
        Ok(PointPattern { window, points })
    }

    pub fn empty(window: Window) -> Self {
        PointPattern {
            window,
            points: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn gaps(&self) -> Result<Vec<f64>, PatternError> {
        if self.points.len() < 2 {
            return Err(PatternError::TooFewPoints);
        }
        Ok(self.points.windows(2).map(|w| w[1] - w[0]).collect())
    }

    pub fn restrict(&self, window: Window) -> PointPattern {
        let window = self.window.intersect(&window);
        PointPattern {
            window,
            points: self.points.iter().copied().filter(|&x| window.contains(x)).collect(),
        }
    }

    /// Shifts window and points by `shift`.
    pub fn translate(&self, shift: f64) -> PointPattern {
        PointPattern {
            window: Window::new(self.window.lo + shift, self.window.hi + shift),
            points: self.points.iter().map(|x| x + shift).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Mark {
    Color(u32),
    Values(Vec<f64>),
    Unmarked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkedPoint {
    pub location: f64,
    pub mark: Mark,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkedPointPattern {
    pub window: Window,
    pub points: Vec<MarkedPoint>,
}

impl MarkedPointPattern {
    pub fn new(window: Window, points: Vec<MarkedPoint>) -> Result<Self, PatternError> {
        let locations: Vec<f64> = points.iter().map(|p| p.location).collect();
        PointPattern::new(window, locations)?;
        Ok(MarkedPointPattern { window, points })
    }

    pub fn unmarked(&self) -> PointPattern {
        PointPattern {
            window: self.window,
            points: self.points.iter().map(|p| p.location).collect(),
        }
    }

    /// Points whose mark is the given color.
    pub fn with_color(&self, color: u32) -> PointPattern {
        PointPattern {
            window: self.window,
            points: self
                .points
                .iter()
                .filter(|p| p.mark == Mark::Color(color))
                .map(|p| p.location)
                .collect(),
        }
    }

    pub fn restrict(&self, window: Window) -> MarkedPointPattern {
        let window = self.window.intersect(&window);
        MarkedPointPattern {
            window,
            points: self.points.iter().filter(|p| window.contains(p.location)).cloned().collect(),
        }
    }
}

/// Rectangle [x_lo, x_hi) × [y_lo, y_hi).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_lo: f64,
    pub x_hi: f64,
    pub y_lo: f64,
    pub y_hi: f64,
}

impl Rect {
    pub fn width(&self) -> f64 {
        (self.x_hi - self.x_lo).max(0.0)
    }

    pub fn height(&self) -> f64 {
        (self.y_hi - self.y_lo).max(0.0)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_lo && x < self.x_hi && y >= self.y_lo && y < self.y_hi
    }
}

/// Planar point set sorted by x, with distinct x-coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanarPattern {
    pub rect: Rect,
    pub points: Vec<(f64, f64)>,
}

impl PlanarPattern {
    pub fn new(rect: Rect, mut points: Vec<(f64, f64)>) -> Result<Self, PatternError> {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in points.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(PatternError::Invalid(format!("duplicate x-coordinate {}", w[0].0)));
            }
        }
        if let Some(p) = points.iter().find(|p| !rect.contains(p.0, p.1)) {
            return Err(PatternError::Invalid(format!("point {p:?} outside rectangle")));
        }
        Ok(PlanarPattern { rect, points })
    }

    pub fn xs(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.0)
    }

    /// Index of the first point with x > `x`.
    pub fn first_after(&self, x: f64) -> usize {
        self.points.partition_point(|p| p.0 <= x)
    }

    /// Index of the first point with x ≥ `x`.
    pub fn first_at_or_after(&self, x: f64) -> usize {
        self.points.partition_point(|p| p.0 < x)
    }

    /// Adds an independent Poisson strip [new_lo, x_lo) × [y_lo, y_hi).
    pub fn extend_left<R: Rng + ?Sized>(&mut self, rate: f64, new_lo: f64, rng: &mut R) {
        if new_lo >= self.rect.x_lo {
            return;
        }
        let strip = Rect {
            x_hi: self.rect.x_lo,
            x_lo: new_lo,
            ..self.rect
        };
        let extra = sample_poisson_planar(rate, strip, rng);
        self.rect.x_lo = new_lo;
        self.merge(extra.points, rng);
    }

    /// Adds an independent Poisson strip [x_hi, new_hi) × [y_lo, y_hi).
    pub fn extend_right<R: Rng + ?Sized>(&mut self, rate: f64, new_hi: f64, rng: &mut R) {
        if new_hi <= self.rect.x_hi {
            return;
        }
        let strip = Rect {
            x_lo: self.rect.x_hi,
            x_hi: new_hi,
            ..self.rect
        };
        let extra = sample_poisson_planar(rate, strip, rng);
        self.rect.x_hi = new_hi;
        self.merge(extra.points, rng);
    }

    fn merge<R: Rng + ?Sized>(&mut self, extra: Vec<(f64, f64)>, rng: &mut R) {
        self.points.extend(extra);
        self.points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let rect = self.rect;
        resolve_collisions(&mut self.points, rng, |rng| uniform_in_rect(&rect, rng));
    }
}

fn uniform_in(lo: f64, hi: f64, rng: &mut (impl Rng + ?Sized)) -> f64 {
    loop {
        let u: f64 = StandardUniform.sample(rng);
        let x = lo + u * (hi - lo);
        if x >= lo && x < hi {
            return x;
        }
    }
}

fn uniform_in_rect<R: Rng + ?Sized>(rect: &Rect, rng: &mut R) -> (f64, f64) {
    let x = uniform_in(rect.x_lo, rect.x_hi, rng);
    let y = uniform_in(rect.y_lo, rect.y_hi, rng);
    (x, y)
}

/// Replaces every point whose x duplicates its predecessor by a fresh draw
/// until all x-coordinates are distinct. Input must be sorted by x.
fn resolve_collisions<T, R, F>(points: &mut Vec<T>, rng: &mut R, mut draw: F)
where
    T: Copy + XKey,
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> T,
{
    loop {
        let before = points.len();
        points.dedup_by(|b, a| a.x() == b.x());
        let missing = before - points.len();
        if missing == 0 {
            return;
        }
        for _ in 0..missing {
            points.push(draw(rng));
        }
        points.sort_by(|a, b| a.x().total_cmp(&b.x()));
    }
}

trait XKey {
    fn x(&self) -> f64;
}

impl XKey for f64 {
    fn x(&self) -> f64 {
        *self
    }
}

impl XKey for (f64, f64) {
    fn x(&self) -> f64 {
        self.0
    }
}

fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> usize {
    if !(mean > 0.0) {
        return 0;
    }
    let n: f64 = Poisson::new(mean).expect("positive finite mean").sample(rng);
    n as usize
}

pub fn sample_poisson_line<R: Rng + ?Sized>(intensity: f64, window: Window, rng: &mut R) -> PointPattern {
    if window.is_empty() {
        return PointPattern::empty(window);
    }
    let n = poisson_count(intensity * window.len(), rng);
    let mut points: Vec<f64> = (0..n).map(|_| uniform_in(window.lo, window.hi, rng)).collect();
    points.sort_by(f64::total_cmp);
    resolve_collisions(&mut points, rng, |rng| uniform_in(window.lo, window.hi, rng));
    PointPattern { window, points }
}

pub fn sample_poisson_planar<R: Rng + ?Sized>(rate: f64, rect: Rect, rng: &mut R) -> PlanarPattern {
    if rect.width() == 0.0 || rect.height() == 0.0 {
        return PlanarPattern {
            rect,
            points: Vec::new(),
        };
    }
    let n = poisson_count(rate * rect.width() * rect.height(), rng);
    let mut points: Vec<(f64, f64)> = (0..n).map(|_| uniform_in_rect(&rect, rng)).collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    resolve_collisions(&mut points, rng, |rng| uniform_in_rect(&rect, rng));
    PlanarPattern { rect, points }
}

/// Distance from a fixed origin to the next point of a stationary renewal
/// process: U·L with L size-biased and U uniform.
pub fn sample_forward_recurrence<R: Rng + ?Sized>(
    jump: &JumpDistribution,
    rng: &mut R,
) -> Result<f64, PatternError> {
    let length = jump.sample_size_biased(rng)?;
    let u: f64 = StandardUniform.sample(rng);
    Ok(u * length)
}

/// Appends renewal points after `start` (exclusive) up to `hi` (exclusive).
fn extend_renewal<R: Rng + ?Sized>(
    jump: &JumpDistribution,
    start: f64,
    hi: f64,
    points: &mut Vec<f64>,
    rng: &mut R,
) {
    let mut x = start;
    loop {
        let next = x + jump.sample(rng);
        if next <= x {
            continue;
        }
        if next >= hi {
            return;
        }
        points.push(next);
        x = next;
    }
}

pub fn sample_stationary_renewal<R: Rng + ?Sized>(
    jump: &JumpDistribution,
    window: Window,
    rng: &mut R,
) -> Result<PointPattern, PatternError> {
    jump.mean()?;
    let mut points = Vec::new();
    if window.is_empty() {
        return Ok(PointPattern { window, points });
    }
    let first = window.lo + sample_forward_recurrence(jump, rng)?;
    if first < window.hi {
        points.push(first);
        extend_renewal(jump, first, window.hi, &mut points, rng);
    }
    Ok(PointPattern { window, points })
}

/// Renewal pattern with a point at `window.lo` and i.i.d. gaps after it.
pub fn sample_renewal_from_point<R: Rng + ?Sized>(
    jump: &JumpDistribution,
    window: Window,
    rng: &mut R,
) -> PointPattern {
    let mut points = vec![window.lo];
    extend_renewal(jump, window.lo, window.hi, &mut points, rng);
    PointPattern { window, points }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn gaps_and_errors() {
        let p = PointPattern::new(Window::new(0.0, 10.0), vec![1.0, 3.0, 6.0]).unwrap();
        assert_eq!(p.gaps().unwrap(), vec![2.0, 3.0]);
        let single = PointPattern::new(Window::new(0.0, 10.0), vec![1.0]).unwrap();
        assert_eq!(single.gaps(), Err(PatternError::TooFewPoints));
    }

    #[test]
    fn restrict_and_translate() {
        let p = PointPattern::new(Window::new(0.0, 3.0), vec![1.0, 2.0]).unwrap();
        assert_eq!(p.translate(0.0), p);
        assert_eq!(p.restrict(Window::new(-1.0, 5.0)), p);
        let moved = p.translate(-1.0);
        assert_eq!(moved.points, vec![0.0, 1.0]);
        assert_eq!(moved.window, Window::new(-1.0, 2.0));
    }

    #[test]
    fn validation() {
        assert!(PointPattern::new(Window::new(0.0, 1.0), vec![0.5, 0.5]).is_err());
        assert!(PointPattern::new(Window::new(0.0, 1.0), vec![1.0]).is_err());
        let rect = Rect {
            x_lo: 0.0,
            x_hi: 1.0,
            y_lo: 0.0,
            y_hi: 1.0,
        };
        assert!(PlanarPattern::new(rect, vec![(0.5, 0.1), (0.5, 0.2)]).is_err());
    }

    #[test]
    fn empty_windows() {
        let mut rng = stream(1, 0);
        assert!(sample_poisson_line(3.0, Window::new(2.0, 2.0), &mut rng).is_empty());
        let rect = Rect {
            x_lo: 0.0,
            x_hi: 0.0,
            y_lo: 0.0,
            y_hi: 1.0,
        };
        assert!(sample_poisson_planar(1.0, rect, &mut rng).points.is_empty());
    }

    #[test]
    fn collisions_are_resampled() {
        let mut rng = stream(2, 0);
        let mut pts = vec![1.0, 1.0, 1.0, 2.0];
        resolve_collisions(&mut pts, &mut rng, |r| uniform_in(0.0, 3.0, r));
        assert_eq!(pts.len(), 4);
        assert!(pts.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn extension_keeps_existing_points() {
        let mut rng = stream(3, 0);
        let rect = Rect {
            x_lo: 0.0,
            x_hi: 10.0,
            y_lo: 0.0,
            y_hi: 2.0,
        };
        let mut pi = sample_poisson_planar(1.0, rect, &mut rng);
        let before = pi.points.clone();
        pi.extend_left(1.0, -10.0, &mut rng);
        pi.extend_right(1.0, 20.0, &mut rng);
        assert_eq!(pi.rect.x_lo, -10.0);
        assert_eq!(pi.rect.x_hi, 20.0);
        for p in &before {
            assert!(pi.points.contains(p));
        }
        assert!(pi.points.windows(2).all(|w| w[1].0 > w[0].0));
    }
}
