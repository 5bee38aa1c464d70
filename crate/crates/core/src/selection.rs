//! Simple-selection point processes: the red points of a two-colored
//! pattern with no point of either color in the preceding open window of
//! length t.

use rand::Rng;
use rand_distr::{Distribution, StandardUniform};

use crate::patterns::{sample_poisson_line, Mark, MarkedPoint, MarkedPointPattern, PointPattern, Window, BLUE, RED};

/// Red points x with no point in (x − t, x). Points closer than t to the
/// window's left edge cannot be decided and are left out; the output window
/// starts at lo + t.
pub fn simple_selection(colored: &MarkedPointPattern, t: f64) -> PointPattern {
    let lo = colored.window.lo;
    let mut kept = Vec::new();
    for (i, p) in colored.points.iter().enumerate() {
        if p.mark != Mark::Color(RED) || p.location - t < lo {
            continue;
        }
        let clear = i == 0 || colored.points[i - 1].location <= p.location - t;
        if clear {
            kept.push(p.location);
        }
    }
    PointPattern {
        window: Window::new(lo + t, colored.window.hi),
        points: kept,
    }
}

/// Poisson points of intensity `mu`, each red with probability `q`.
pub fn colored_poisson<R: Rng + ?Sized>(mu: f64, q: f64, window: Window, rng: &mut R) -> Vec<MarkedPoint> {
    sample_poisson_line(mu, window, rng)
        .points
        .into_iter()
        .map(|x| {
            let u: f64 = StandardUniform.sample(rng);
            MarkedPoint {
                location: x,
                mark: Mark::Color(if u < q { RED } else { BLUE }),
            }
        })
        .collect()
}

/// Brute-force sample of the selection jump law.
///
/// Colored Poisson patterns of intensity `mu` (red with probability `q`)
/// are simulated in chunks of about 10⁴ points. From every selected point
/// in a chunk the gap to the next selected point is recorded, extending the
/// pattern past the chunk end when needed so that no gap is censored.
pub fn selection_gap_oracle<R: Rng + ?Sized>(mu: f64, q: f64, t: f64, n: usize, rng: &mut R) -> Vec<f64> {
    let chunk = 1e4 / mu;
    let mut gaps = Vec::with_capacity(n);
    while gaps.len() < n {
        let window = Window::new(0.0, chunk);
        let mut pattern = MarkedPointPattern {
            window,
            points: colored_poisson(mu, q, window, rng),
        };
        let mut selected = simple_selection(&pattern, t);
        loop {
            let inside = selected.points.partition_point(|&x| x < chunk);
            if inside == 0 {
                break;
            }
            if inside < selected.points.len() {
                for w in selected.points[..=inside].windows(2) {
                    if gaps.len() < n {
                        gaps.push(w[1] - w[0]);
                    }
                }
                break;
            }
            let hi = pattern.window.hi;
            let ext = Window::new(hi, hi + chunk);
            pattern.points.extend(colored_poisson(mu, q, ext, rng));
            pattern.window.hi = ext.hi;
            selected = simple_selection(&pattern, t);
        }
    }
    gaps
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn pattern(points: &[(f64, u32)]) -> MarkedPointPattern {
        MarkedPointPattern {
            window: Window::new(0.0, 10.0),
            points: points
                .iter()
                .map(|&(x, c)| MarkedPoint {
                    location: x,
                    mark: Mark::Color(c),
                })
                .collect(),
        }
    }

    #[test]
    fn zero_delay_keeps_all_red() {
        let p = pattern(&[(1.0, RED), (1.5, BLUE), (2.2, RED)]);
        assert_eq!(simple_selection(&p, 0.0).points, vec![1.0, 2.2]);
    }

    #[test]
    fn blocked_by_blue_neighbour() {
        let p = pattern(&[(1.0, RED), (1.5, BLUE), (2.2, RED)]);
        assert_eq!(simple_selection(&p, 1.0).points, vec![1.0]);
    }

    #[test]
    fn boundary_of_exclusion_window_is_open() {
        let p = pattern(&[(1.0, BLUE), (2.0, RED)]);
        assert_eq!(simple_selection(&p, 1.0).points, vec![2.0]);
    }

    #[test]
    fn left_edge_points_are_indeterminate() {
        let p = pattern(&[(0.5, RED), (3.0, RED)]);
        let s = simple_selection(&p, 1.0);
        assert_eq!(s.points, vec![3.0]);
        assert_eq!(s.window.lo, 1.0);
    }

    #[test]
    fn oracle_gaps_respect_delay() {
        let mut rng = stream(8, 0);
        let gaps = selection_gap_oracle(1.0, 0.5, 1.0, 5000, &mut rng);
        assert_eq!(gaps.len(), 5000);
        assert!(gaps.iter().all(|&g| g >= 1.0));
    }
}
