use proptest::prelude::*;
use rfactor::cftp::{anchors, orbit};
use rfactor::distributions::{Atom, Component, DensityTable, Family, JumpDistribution};
use rfactor::io::{read_marked_csv, write_marked_csv};
use rfactor::marking::{deinterleave, find_special_points, interleave, CarrierPolicy, JumpMarkLaw, MarkLaw, Marker};
use rfactor::patterns::{sample_poisson_planar, sample_stationary_renewal, Mark, MarkedPoint, MarkedPointPattern, Rect, Window};
use rfactor::quad::{integrate, integrate_to_infinity};
use rfactor::regen::{Branch, BrownianSpec, FoldMode, MarkovColoredSpec};
use rfactor::regularize::{extract_k_hit_points, k_hit_trace, HitSet};
use rfactor::rng::stream;

fn family() -> impl Strategy<Value = Family> {
    prop_oneof![
        (0.2f64..5.0).prop_map(|rate| Family::Exponential { rate }),
        (0.6f64..6.0, 0.2f64..4.0).prop_map(|(shape, rate)| Family::Gamma { shape, rate }),
        (0.0f64..2.0, 0.1f64..3.0).prop_map(|(lo, w)| Family::Uniform { lo, hi: lo + w }),
        (0.5f64..3.0, 0.2f64..2.0).prop_map(|(a, b)| {
            Family::Table(DensityTable::new(vec![(0.0, 0.2), (a, 1.0), (a + b, 0.5)], Some(1.5)).unwrap())
        }),
    ]
}

fn jump_law() -> impl Strategy<Value = JumpDistribution> {
    (
        prop::collection::vec((0.1f64..5.0, 0.05f64..1.0), 0..3),
        prop::collection::vec((0.05f64..1.0, family()), 1..3),
        0.05f64..0.6,
    )
        .prop_map(|(atoms, comps, atom_share)| {
            let atom_share = if atoms.is_empty() { 0.0 } else { atom_share };
            let aw: f64 = atoms.iter().map(|a| a.1).sum();
            let cw: f64 = comps.iter().map(|c| c.0).sum();
            let atoms = atoms
                .into_iter()
                .map(|(location, m)| Atom { location, mass: atom_share * m / aw })
                .collect();
            let comps = comps
                .into_iter()
                .map(|(w, family)| Component { weight: (1.0 - atom_share) * w / cw, family })
                .collect();
            JumpDistribution::new(atoms, comps).unwrap()
        })
}

/// Integral of the continuous density over (t, ∞), split at every kink and
/// support endpoint so each piece is smooth.
fn density_tail(jump: &JumpDistribution, t: f64) -> f64 {
    let mut cuts: Vec<f64> = jump
        .components()
        .iter()
        .flat_map(|c| match &c.family {
            Family::Table(table) => table.spec().knots.iter().map(|k| k.0).collect(),
            Family::Uniform { lo, hi } => vec![*lo, *hi],
            _ => Vec::new(),
        })
        .filter(|&k| k > t)
        .collect();
    cuts.sort_by(f64::total_cmp);
    let mut lo = t;
    let mut total = 0.0;
    for k in cuts {
        total += integrate(|s| jump.ac_density(s), lo, k).unwrap();
        lo = k;
    }
    total + integrate_to_infinity(|s| jump.ac_density(s), lo).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn survival_is_atom_tail_plus_density_tail(jump in jump_law(), u in 0.0f64..1.0) {
        let t = jump.quantile(u.min(0.999));
        let atoms: f64 = jump.atoms().iter().filter(|a| a.location > t).map(|a| a.mass).sum();
        let ac = density_tail(&jump, t);
        prop_assert!((jump.survival(t) - atoms - ac).abs() < 1e-8, "t={t} {} vs {}", jump.survival(t), atoms + ac);
        prop_assert!((jump.cdf(t) + jump.survival(t) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quantile_inverts_cdf(jump in jump_law(), u in 0.001f64..0.999) {
        let t = jump.quantile(u);
        prop_assert!(jump.cdf(t) >= u - 1e-9);
        prop_assert!(jump.cdf(t - 1e-6 * t.max(1.0)) <= u + 1e-9);
    }

    #[test]
    fn hit_probability_is_a_probability(jump in jump_law(), lo in 0.0f64..3.0, w in 0.01f64..3.0) {
        let set = HitSet::interval(lo, lo + w).unwrap();
        let p = set.probability(&jump);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&p));
        if jump.atoms().is_empty() {
            prop_assert!((p - (jump.cdf(lo + w) - jump.cdf(lo))).abs() < 1e-9);
        }
    }

    #[test]
    fn bits_round_trip(word in any::<u64>(), precision in 1u32..=53, streams in 1usize..6) {
        let word = word >> (64 - precision);
        let parts = deinterleave(word, precision, streams);
        prop_assert_eq!(parts.iter().map(|b| b.len).sum::<u32>(), precision);
        prop_assert_eq!(interleave(&parts, precision), word);
    }

    #[test]
    fn fold_lands_in_range(b in -1e4f64..1e4, h in 0.01f64..10.0) {
        for mode in [FoldMode::Reflected, FoldMode::Periodic] {
            let spec = BrownianSpec { h, mode, dt: h * h / 400.0, window: Window::new(0.0, 1.0) };
            let y = spec.fold(b);
            prop_assert!((0.0..=h).contains(&y));
        }
    }

    #[test]
    fn csv_round_trip(
        raw in prop::collection::vec((0.0f64..1000.0, prop::option::of(0u32..5)), 0..50)
    ) {
        let mut raw = raw;
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));
        raw.dedup_by(|a, b| a.0 == b.0);
        let p = MarkedPointPattern {
            window: Window::new(0.0, 1000.0),
            points: raw.into_iter().map(|(x, c)| MarkedPoint { location: x, mark: c.map_or(Mark::Unmarked, Mark::Color) }).collect(),
        };
        let mut buf = Vec::new();
        write_marked_csv(&p, &mut buf).unwrap();
        prop_assert_eq!(read_marked_csv(buf.as_slice()).unwrap(), p);
    }

    #[test]
    fn skeleton_law_is_stationary(rows in prop::collection::vec(prop::collection::vec(0.05f64..1.0, 3), 3)) {
        let exp = JumpDistribution::exponential(1.0).unwrap();
        let spec = MarkovColoredSpec {
            branches: rows
                .iter()
                .map(|r| {
                    let s: f64 = r.iter().sum();
                    r.iter().enumerate().map(|(j, w)| Branch { prob: w / s, jump: exp.clone(), next: j as u32 }).collect()
                })
                .collect(),
            initial: vec![1.0, 0.0, 0.0],
            irreducible: true,
        };
        spec.validate().unwrap();
        let pi = spec.skeleton_stationary();
        let m = spec.skeleton();
        for j in 0..3 {
            let flow: f64 = (0..3).map(|i| pi[i] * m[i][j]).sum();
            prop_assert!((flow - pi[j]).abs() < 1e-10);
        }
        prop_assert!((spec.time_occupancy().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn extracted_points_end_runs_of_k_hits(seed in any::<u64>(), k in 1usize..4, hi in 0.5f64..3.0) {
        let jump = JumpDistribution::gamma(2.0, 1.0).unwrap();
        let set = HitSet::interval(0.0, hi).unwrap();
        let x = sample_stationary_renewal(&jump, Window::new(0.0, 400.0), &mut stream(seed, 0)).unwrap();
        let out = extract_k_hit_points(&x, &set, k).unwrap();
        let xs = &x.points;
        let mut run = 0usize;
        let mut expected = Vec::new();
        let mut started = false;
        for i in 1..xs.len() {
            if set.contains(xs[i] - xs[i - 1]) {
                run += 1;
            } else {
                run = 0;
                started = true;
            }
            if run == k {
                if started || k == 1 {
                    expected.push(xs[i]);
                }
                run = 0;
            }
        }
        prop_assert_eq!(out.points, expected);
    }

    #[test]
    fn k_hit_trace_ends_with_first_run(seed in any::<u64>(), k in 1usize..4) {
        let jump = JumpDistribution::exponential(1.0).unwrap();
        let set = HitSet::interval(0.0, 1.0).unwrap();
        let draws = k_hit_trace(&jump, &set, k, &mut stream(seed, 0)).unwrap();
        let n = draws.len();
        prop_assert!(n >= k);
        prop_assert!(draws[n - k..].iter().all(|&t| set.contains(t)));
        let mut run = 0;
        for &t in &draws[..n - 1] {
            run = if set.contains(t) { run + 1 } else { 0 };
            prop_assert!(run < k);
        }
    }

    #[test]
    fn marking_is_invertible(seed in any::<u64>(), len in 20.0f64..300.0, single in any::<bool>()) {
        let jump = JumpDistribution::gamma(2.0, 1.0).unwrap();
        let set = HitSet::interval(0.0, 2.0).unwrap();
        let marks = JumpMarkLaw::iid(vec![MarkLaw::Uniform { lo: 0.0, hi: 1.0 }, MarkLaw::Normal { mean: 0.0, sd: 1.0 }]).unwrap();
        let policy = if single { CarrierPolicy::SinglePoint } else { CarrierPolicy::AllPairs };
        let marker = Marker::new(jump.clone(), set.clone(), marks, policy).unwrap();
        let x = sample_stationary_renewal(&jump, Window::new(0.0, len), &mut stream(seed, 0)).unwrap();
        let out = marker.forward(&x).unwrap();
        prop_assert_eq!(marker.inverse(&out.pattern).unwrap(), marker.truncate(&x).unwrap());
        prop_assert_eq!(find_special_points(&out.pattern.unmarked(), &set), find_special_points(&x, &set));
    }

    #[test]
    fn orbits_merge_at_anchors(seed in any::<u64>(), back in 0.0f64..30.0) {
        let jump = JumpDistribution::gamma(2.0, 1.0).unwrap();
        let b = jump.hazard_bounds().unwrap();
        let rect = Rect { x_lo: 0.0, x_hi: 120.0, y_lo: 0.0, y_hi: b.lambda_hi };
        let pi = sample_poisson_planar(1.0, rect, &mut stream(seed, 0));
        let a = anchors(&pi, &b);
        if let Some(&anchor) = a.points.iter().find(|&&x| x - b.t0 > 30.0) {
            let near = orbit(anchor - b.t0, &pi, &jump).unwrap().points;
            let far = orbit(anchor - b.t0 - back, &pi, &jump).unwrap().points;
            let i = near.iter().position(|&x| x == anchor).unwrap();
            let j = far.iter().position(|&x| x == anchor).unwrap();
            prop_assert_eq!(&near[i..], &far[j..]);
        }
    }
}
