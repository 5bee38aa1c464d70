use rfactor::distributions::JumpDistribution;
use rfactor::marking::find_special_points;
use rfactor::patterns::{Mark, Window};
use rfactor::regen::{
    burn_in_comparison, color_marginal, excursion_regeneration, simulate_brownian, simulate_markov_colored,
    simulate_regeneration, Branch, BrownianSpec, FoldMode, MarkovColoredSpec,
};
use rfactor::regularize::HitSet;
use rfactor::rng::{replicate, stream};
use statrs::function::erf::erfc;
use rfactor::verify::{autocorrelation, chi_square_gof, independence_tests, ks_one_sample, tail_rate_fit};

fn exp(rate: f64) -> JumpDistribution {
    JumpDistribution::exponential(rate).unwrap()
}

fn branch(prob: f64, jump: JumpDistribution, next: u32) -> Branch {
    Branch { prob, jump, next }
}

fn ctmc() -> MarkovColoredSpec {
    let rates = [1.0, 2.0, 0.5];
    let jumps = [[0.0, 0.3, 0.7], [0.5, 0.0, 0.5], [0.9, 0.1, 0.0]];
    MarkovColoredSpec {
        branches: (0..3)
            .map(|i| {
                (0..3)
                    .filter(|&j| jumps[i][j] > 0.0)
                    .map(|j| branch(jumps[i][j], exp(rates[i]), j as u32))
                    .collect()
            })
            .collect(),
        initial: vec![1.0, 0.0, 0.0],
        irreducible: true,
    }
}

fn colors(p: &rfactor::patterns::MarkedPointPattern) -> Vec<u32> {
    p.points
        .iter()
        .map(|q| match q.mark {
            Mark::Color(c) => c,
            _ => panic!("uncolored point"),
        })
        .collect()
}

#[test]
fn single_color_is_poisson() {
    let spec = MarkovColoredSpec {
        branches: vec![vec![branch(1.0, exp(2.0), 0)]],
        initial: vec![1.0],
        irreducible: true,
    };
    let p = simulate_markov_colored(&spec, Window::new(0.0, 10_000.0), &mut stream(1, 0)).unwrap();
    let marginal = color_marginal(&p, 0);
    assert_eq!(marginal, p.unmarked());
    let ks = ks_one_sample(&marginal.gaps().unwrap(), |t| 1.0 - (-2.0 * t).exp()).unwrap();
    assert!(ks.p_value > 0.01, "{ks:?}");
}

#[test]
fn alternating_red_marginal_is_gamma() {
    let spec = MarkovColoredSpec {
        branches: vec![vec![branch(1.0, exp(1.0), 1)], vec![branch(1.0, exp(1.0), 0)]],
        initial: vec![0.5, 0.5],
        irreducible: true,
    };
    let p = simulate_markov_colored(&spec, Window::new(0.0, 40_000.0), &mut stream(2, 0)).unwrap();
    let red = color_marginal(&p, 0);
    let blue = color_marginal(&p, 1);
    let merged: Vec<u32> = colors(&p);
    assert!(merged.windows(2).all(|w| w[0] != w[1]));
    assert!((red.len() as i64 - blue.len() as i64).abs() <= 1);
    let ks = ks_one_sample(&red.gaps().unwrap(), |t| 1.0 - (1.0 + t) * (-t).exp()).unwrap();
    assert!(ks.p_value > 0.01, "{ks:?}");
}

#[test]
fn ctmc_skeleton_matches_transition_matrix() {
    let spec = ctmc();
    let m = spec.skeleton();
    let p = simulate_markov_colored(&spec, Window::new(0.0, 150_000.0), &mut stream(23, 0)).unwrap();
    let c = colors(&p);
    assert!(c.len() > 100_000);
    let mut counts = [[0u64; 3]; 3];
    for w in c.windows(2) {
        counts[w[0] as usize][w[1] as usize] += 1;
    }
    for i in 0..3 {
        let (obs, probs): (Vec<u64>, Vec<f64>) = (0..3).filter(|&j| m[i][j] > 0.0).map(|j| (counts[i][j], m[i][j])).unzip();
        assert_eq!(counts[i][i], 0);
        let chi = chi_square_gof(&obs, &probs);
        assert!(chi.p_value > 0.01 / 3.0, "row {i}: {chi:?} {counts:?}");
    }
}

#[test]
fn red_returns_are_uncorrelated() {
    let spec = ctmc();
    let p = simulate_markov_colored(&spec, Window::new(0.0, 320_000.0), &mut stream(4, 0)).unwrap();
    let gaps = color_marginal(&p, 0).gaps().unwrap();
    assert!(gaps.len() >= 100_000, "{}", gaps.len());
    let rho = autocorrelation(&gaps, 1).unwrap();
    assert!(rho.abs() < 0.02, "{rho}");
}

#[test]
fn occupancy_matches_weighted_skeleton_law() {
    let spec = ctmc();
    let target = spec.time_occupancy();
    let batches = 40;
    let len = 2_000.0;
    let fractions: Vec<Vec<f64>> = replicate(5, batches, |_, rng| {
        let window = Window::new(0.0, len);
        let p = simulate_markov_colored(&spec, window, rng).unwrap();
        let c = colors(&p);
        let mut occ = [0.0; 3];
        for (i, q) in p.points.iter().enumerate() {
            let end = p.points.get(i + 1).map_or(len, |r| r.location);
            occ[c[i] as usize] += end - q.location;
        }
        occ.iter().map(|v| v / len).collect()
    });
    for color in 0..3 {
        let xs: Vec<f64> = fractions.iter().map(|f| f[color]).collect();
        let mean = xs.iter().sum::<f64>() / batches as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
        let se = (var / batches as f64).sqrt();
        assert!((mean - target[color]).abs() < 3.0 * se + 1e-3, "color {color}: {mean} vs {}", target[color]);
    }
}

#[test]
fn burn_in_lengths_agree() {
    let check = burn_in_comparison(&ctmc(), 4000, 0.01, 6).unwrap();
    assert!(check.pass, "{check:?}");
}

#[test]
fn marginal_feeds_downstream_modules() {
    let spec = MarkovColoredSpec {
        branches: vec![vec![branch(1.0, exp(1.0), 1)], vec![branch(1.0, exp(1.0), 0)]],
        initial: vec![0.5, 0.5],
        irreducible: true,
    };
    let p = simulate_markov_colored(&spec, Window::new(0.0, 500.0), &mut stream(7, 0)).unwrap();
    let red = color_marginal(&p, 0);
    let set = HitSet::interval(0.0, 2.0).unwrap();
    let special = find_special_points(&red, &set);
    assert!(!special.points.is_empty());
}

#[test]
fn brownian_marginal_is_uniform() {
    let spec = BrownianSpec {
        h: 1.0,
        mode: FoldMode::Reflected,
        dt: 2.5e-3,
        window: Window::new(0.0, 0.5),
    };
    let values: Vec<f64> = replicate(8, 20_000, |_, rng| *simulate_brownian(&spec, rng).unwrap().folded.last().unwrap());
    let ks = ks_one_sample(&values, |x| x.clamp(0.0, 1.0)).unwrap();
    assert!(ks.p_value > 0.001, "{ks:?}");
    let periodic = BrownianSpec { mode: FoldMode::Periodic, ..spec };
    let values: Vec<f64> = replicate(9, 20_000, |_, rng| *simulate_brownian(&periodic, rng).unwrap().folded.last().unwrap());
    let ks = ks_one_sample(&values, |x| x.clamp(0.0, 1.0)).unwrap();
    assert!(ks.p_value > 0.001, "{ks:?}");
}

#[test]
fn unfolded_increments_are_gaussian() {
    let spec = BrownianSpec {
        h: 1e6,
        mode: FoldMode::Reflected,
        dt: 1e-2,
        window: Window::new(0.0, 100.0),
    };
    let path = simulate_brownian(&spec, &mut stream(10, 0)).unwrap();
    let incs: Vec<f64> = path.folded.windows(2).map(|w| (w[1] - w[0]) / spec.dt.sqrt()).collect();
    let ks = ks_one_sample(&incs, |z| 0.5 * erfc(-z / std::f64::consts::SQRT_2)).unwrap();
    assert!(ks.p_value > 0.01, "{ks:?}");
    assert!(path.folded.iter().all(|v| (0.0..=spec.h).contains(v)));
}

#[test]
fn excursion_gaps_are_regenerative_with_exponential_tails() {
    let spec = BrownianSpec {
        h: 1.0,
        mode: FoldMode::Reflected,
        dt: 2.5e-3,
        window: Window::new(0.0, 12_000.0),
    };
    let r = simulate_regeneration(&spec, &mut stream(11, 0)).unwrap();
    let gaps = r.gaps().unwrap();
    assert!(gaps.len() > 5000);
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    assert!(mean > 1.9 && mean < 2.25, "{mean}");
    let fit = tail_rate_fit(&gaps).unwrap();
    assert!(fit.r_squared > 0.95, "{fit:?}");
    let checks = independence_tests("excursion gaps", &gaps, 0.01, 11, &mut stream(11, 1)).unwrap();
    assert!(checks.iter().all(|c| c.pass), "{checks:?}");
}

#[test]
fn stored_and_streamed_scans_agree() {
    let spec = BrownianSpec {
        h: 1.0,
        mode: FoldMode::Reflected,
        dt: 2.5e-3,
        window: Window::new(0.0, 50.0),
    };
    let path = simulate_brownian(&spec, &mut stream(12, 0)).unwrap();
    assert_eq!(path.times().count(), path.raw.len());
    let a = excursion_regeneration(&path, &spec).unwrap();
    let b = simulate_regeneration(&spec, &mut stream(12, 0)).unwrap();
    assert_eq!(a, b);
}
