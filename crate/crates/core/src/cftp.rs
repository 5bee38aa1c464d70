//! Hazard-thinning construction of a stationary renewal process from a
//! planar Poisson pattern, localized by anchor points.
//!
//! From a start x the orbit jumps to the first planar point (px, py) with
//! px > x and py below the hazard evaluated at px − x. Anchors are points
//! of the low slab y < λ whose preceding window (x − t0, x) holds no point
//! of the slab y < λ′. Every orbit started at or before an anchor minus t0
//! passes through that anchor, so the orbit from the last anchor before a
//! window determines the process on the window.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::{DistError, HazardBounds, JumpDistribution};
use crate::patterns::{
    sample_poisson_planar, MarkedPoint, MarkedPointPattern, Mark, PlanarPattern, PointPattern, Rect, Window, BLUE,
    RED,
};
use crate::rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CftpError {
    #[error("no qualifying planar point to the right of {from} before the rectangle edge")]
    Horizon { from: f64 },
    #[error("no anchor in the planar pattern left of the target window")]
    NoAnchor,
    #[error("gave up after {0} widenings of the planar rectangle")]
    TooManyRetries(usize),
    #[error(transparent)]
    Distribution(#[from] DistError),
}

/// Hazard evaluator that stays defined where the survival underflows, by
/// falling back to the analytic tail limit.
struct Hazard<'a> {
    jump: &'a JumpDistribution,
    fallback: f64,
}

impl<'a> Hazard<'a> {
    fn new(jump: &'a JumpDistribution, bounds: Option<&HazardBounds>) -> Result<Self, CftpError> {
        if !jump.is_absolutely_continuous() {
            return Err(DistError::AtomicComponent.into());
        }
        let fallback = jump
            .hazard_limit()
            .or(bounds.map(|b| b.lambda_hi))
            .unwrap_or(f64::INFINITY);
        Ok(Hazard { jump, fallback })
    }

    fn at(&self, t: f64) -> Result<f64, CftpError> {
        match self.jump.hazard(t) {
            Ok(h) => Ok(h),
            Err(DistError::ZeroSurvival { .. }) => Ok(self.fallback),
            Err(e) => Err(e.into()),
        }
    }
}

/// Index of the planar point reached by the first jump from `x`.
fn next_index(x: f64, pi: &PlanarPattern, hazard: &Hazard) -> Result<Option<usize>, CftpError> {
    let start = pi.first_after(x);
    for (offset, &(px, py)) in pi.points[start..].iter().enumerate() {
        if py < hazard.at(px - x)? {
            return Ok(Some(start + offset));
        }
    }
    Ok(None)
}

/// Length of the first jump from `x`: the smallest px − x over planar
/// points with px > x lying below the hazard curve.
pub fn next_jump(x: f64, pi: &PlanarPattern, jump: &JumpDistribution) -> Result<f64, CftpError> {
    let hazard = Hazard::new(jump, None)?;
    match next_index(x, pi, &hazard)? {
        Some(i) => Ok(pi.points[i].0 - x),
        None => Err(CftpError::Horizon { from: x }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Orbit {
    /// The start followed by the planar x-coordinates visited, in order.
    pub points: Vec<f64>,
    /// True when the iteration stopped at the rectangle edge.
    pub truncated: bool,
}

fn orbit_until(
    x: f64,
    pi: &PlanarPattern,
    hazard: &Hazard,
    stop_at: f64,
) -> Result<Orbit, CftpError> {
    let mut points = vec![x];
    let mut current = x;
    while current < stop_at {
        match next_index(current, pi, hazard)? {
            Some(i) => {
                current = pi.points[i].0;
                points.push(current);
            }
            None => return Ok(Orbit { points, truncated: true }),
        }
    }
    Ok(Orbit {
        points,
        truncated: false,
    })
}

/// Iterates `next_jump` from `x` until the rectangle edge.
pub fn orbit(x: f64, pi: &PlanarPattern, jump: &JumpDistribution) -> Result<Orbit, CftpError> {
    let hazard = Hazard::new(jump, None)?;
    orbit_until(x, pi, &hazard, f64::INFINITY)
}

/// Whether the point at `index` is an anchor, or `None` when its exclusion
/// window reaches past the left edge of the rectangle.
fn anchor_status(pi: &PlanarPattern, index: usize, bounds: &HazardBounds) -> Option<bool> {
    let (x, y) = pi.points[index];
    if !(y < bounds.lambda_lo) {
        return Some(false);
    }
    let left = x - bounds.t0;
    if left < pi.rect.x_lo {
        return None;
    }
    for &(px, py) in pi.points[..index].iter().rev() {
        if px <= left {
            break;
        }
        if py < bounds.lambda_hi {
            return Some(false);
        }
    }
    Some(true)
}

/// Anchors of the planar pattern: low-slab points with no point of the
/// high slab in the open window (x − t0, x). Points whose window is not
/// fully inside the rectangle are left out; the returned window starts at
/// the first location where the status is determined.
pub fn anchors(pi: &PlanarPattern, bounds: &HazardBounds) -> PointPattern {
    let points = (0..pi.points.len())
        .filter(|&i| anchor_status(pi, i, bounds) == Some(true))
        .map(|i| pi.points[i].0)
        .collect();
    PointPattern {
        window: Window::new(pi.rect.x_lo + bounds.t0, pi.rect.x_hi),
        points,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodingWindow {
    pub query: f64,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorResult {
    pub valid_window: Window,
    pub colored: MarkedPointPattern,
    pub anchors: PointPattern,
    pub coding_windows: Vec<CodingWindow>,
    /// The output on `valid_window` is a function of the planar points in
    /// this window (times the slab below λ′) alone.
    pub determining: Window,
    /// Last anchor at or before the start of the valid window.
    pub first_anchor: f64,
    /// First orbit point at or after the end of the valid window.
    pub next_after: f64,
    pub rect: Rect,
    pub bounds: HazardBounds,
}

impl FactorResult {
    /// Gaps from each output point to its successor, including the gap
    /// that leaves the window. Pooling these over replications gives an
    /// unbiased sample of the jump law.
    pub fn gaps_from_window(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = self.colored.points.iter().map(|p| p.location).collect();
        pts.push(self.next_after);
        pts.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// Runs the construction on a fixed planar pattern.
///
/// The output is the orbit from (x* − t0) restricted to `target`, where x*
/// is the last anchor at or before `target.lo`, with anchors colored red
/// and other points blue. If no anchor precedes the target but one lies
/// inside it, the valid window starts at that anchor instead. Coding
/// windows are reported for the queries that fall in the valid window.
pub fn factor(
    pi: &PlanarPattern,
    jump: &JumpDistribution,
    bounds: &HazardBounds,
    target: Window,
    queries: &[f64],
) -> Result<FactorResult, CftpError> {
    let hazard = Hazard::new(jump, Some(bounds))?;
    let anchor_set = anchors(pi, bounds);
    let anchor_pts = &anchor_set.points;
    let before = anchor_pts.partition_point(|&a| a <= target.lo);
    let (first_anchor, valid_lo) = if before > 0 {
        (anchor_pts[before - 1], target.lo)
    } else {
        match anchor_pts.first() {
            Some(&a) if a < target.hi => (a, a),
            _ => return Err(CftpError::NoAnchor),
        }
    };
    let valid_window = Window::new(valid_lo, target.hi);
    let start = first_anchor - bounds.t0;
    let orb = orbit_until(start, pi, &hazard, target.hi)?;
    if orb.truncated {
        return Err(CftpError::Horizon {
            from: *orb.points.last().unwrap_or(&start),
        });
    }
    let next_after = *orb.points.last().expect("orbit reached the window end");
    let is_anchor = |x: f64| anchor_pts.binary_search_by(|a| a.total_cmp(&x)).is_ok();
    let colored_points: Vec<MarkedPoint> = orb.points[1..]
        .iter()
        .copied()
        .filter(|&x| valid_window.contains(x))
        .map(|x| MarkedPoint {
            location: x,
            mark: Mark::Color(if is_anchor(x) { RED } else { BLUE }),
        })
        .collect();
    let coding_windows = queries
        .iter()
        .filter(|&&q| valid_window.contains(q))
        .map(|&q| {
            let idx = anchor_pts.partition_point(|&a| a <= q);
            CodingWindow {
                query: q,
                length: q - (anchor_pts[idx - 1] - bounds.t0),
            }
        })
        .collect();
    Ok(FactorResult {
        valid_window,
        colored: MarkedPointPattern {
            window: valid_window,
            points: colored_points,
        },
        anchors: anchor_set.restrict(valid_window),
        coding_windows,
        determining: Window::new(start, target.hi),
        first_anchor,
        next_after,
        rect: pi.rect,
        bounds: *bounds,
    })
}

/// Planar rectangle for a target window: `margin` on both sides and height
/// λ′.
pub fn initial_rect(target: Window, bounds: &HazardBounds, margin: f64) -> Rect {
    Rect {
        x_lo: target.lo - margin,
        x_hi: target.hi + margin,
        y_lo: 0.0,
        y_hi: bounds.lambda_hi,
    }
}

pub const MAX_WIDENINGS: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct FactorRun {
    pub result: FactorResult,
    pub planar: PlanarPattern,
    pub widenings: usize,
}

/// Samples a planar pattern around `target` and runs [`factor`], doubling
/// the margin on the side that was too short until the full target window
/// is valid. The initial margin is 10·E[T] + t0.
pub fn factor_with_retry<R: Rng + ?Sized>(
    jump: &JumpDistribution,
    bounds: &HazardBounds,
    target: Window,
    queries: &[f64],
    rng: &mut R,
) -> Result<FactorRun, CftpError> {
    let margin = 10.0 * jump.mean()? + bounds.t0;
    let mut left = margin;
    let mut right = margin;
    let mut pi = sample_poisson_planar(1.0, initial_rect(target, bounds, margin), rng);
    for widenings in 0..=MAX_WIDENINGS {
        match factor(&pi, jump, bounds, target, queries) {
            Ok(result) if result.valid_window == target => {
                return Ok(FactorRun {
                    result,
                    planar: pi,
                    widenings,
                })
            }
            Ok(_) | Err(CftpError::NoAnchor) => {
                left *= 2.0;
                pi.extend_left(1.0, target.lo - left, rng);
            }
            Err(CftpError::Horizon { .. }) => {
                right *= 2.0;
                pi.extend_right(1.0, target.hi + right, rng);
            }
            Err(e) => return Err(e),
        }
    }
    Err(CftpError::TooManyRetries(MAX_WIDENINGS))
}

/// Coding-window length at query 0 for `reps` independent constructions,
/// together with the number of widenings each needed.
pub fn coding_window_samples(
    jump: &JumpDistribution,
    bounds: &HazardBounds,
    reps: u64,
    rng: &mut dyn RngCore,
) -> Result<Vec<(f64, usize)>, CftpError> {
    let master = rng.next_u64();
    let target = Window::new(0.0, 1.0);
    rng::replicate(master, reps, |_, r| {
        let run = factor_with_retry(jump, bounds, target, &[0.0], r)?;
        Ok((run.result.coding_windows[0].length, run.widenings))
    })
    .into_iter()
    .collect()
}
