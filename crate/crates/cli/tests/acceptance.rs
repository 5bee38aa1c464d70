//! Acceptance suite: one line per criterion, exit status 1 when any fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rfactor::cftp::{anchors, coding_window_samples, factor, factor_with_retry, orbit};
use rfactor::distributions::JumpDistribution;
use rfactor::marking::{find_special_points, CarrierPolicy, JumpMarkLaw, MarkLaw, Marker};
use rfactor::patterns::{
    sample_forward_recurrence, sample_poisson_planar, sample_stationary_renewal, Mark, PlanarPattern, Rect, Window,
};
use rfactor::regen::{color_marginal, simulate_brownian, simulate_regeneration, Branch, BrownianSpec, FoldMode, MarkovColoredSpec};
use rfactor::regularize::{extract_k_hit_points, one_hit_decomposition, sample_geom_sum, sample_k_hit, HitSet, JumpSampler};
use rfactor::rng::{replicate, stream};
use rfactor::selection::selection_gap_oracle;
use rfactor::verify::{chi_square_independence, independence_tests, ks_one_sample, ks_two_sample, tail_rate_fit};

type Outcome = (bool, String);
type Criterion = (&'static str, fn() -> Outcome);
type CdfCase = (&'static str, JumpDistribution, fn(f64) -> f64);

fn exp_cdf(t: f64) -> f64 {
    1.0 - (-t).exp()
}

fn gamma21_cdf(t: f64) -> f64 {
    1.0 - (1.0 + t) * (-t).exp()
}

fn exp1() -> JumpDistribution {
    JumpDistribution::exponential(1.0).unwrap()
}

fn gamma21() -> JumpDistribution {
    JumpDistribution::gamma(2.0, 1.0).unwrap()
}

fn cftp_law() -> Outcome {
    let level = 0.01 / 2.0;
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, jump, cdf, len) in [
        ("Exp(1)", exp1(), exp_cdf as fn(f64) -> f64, 100.0),
        ("Gamma(2,1)", gamma21(), gamma21_cdf as fn(f64) -> f64, 200.0),
    ] {
        let bounds = jump.hazard_bounds().unwrap();
        let mut gaps = Vec::new();
        let mut seed = 100;
        while gaps.len() < 100_000 {
            let batch = replicate(seed, 200, |_, rng| {
                factor_with_retry(&jump, &bounds, Window::new(0.0, len), &[], rng)
                    .unwrap()
                    .result
                    .gaps_from_window()
            });
            gaps.extend(batch.concat());
            seed += 1;
        }
        let ks = ks_one_sample(&gaps, cdf).unwrap();
        pass &= ks.p_value > level;
        detail.push(format!("{name}: n={} p={:.4}", ks.n, ks.p_value));
    }
    (pass, format!("{} (level {level})", detail.join(", ")))
}

fn coalescence() -> Outcome {
    let jump = gamma21();
    let bounds = jump.hazard_bounds().unwrap();
    let results = replicate(200, 10_000, |_, rng| -> bool {
        loop {
            let rect = Rect { x_lo: 0.0, x_hi: 80.0, y_lo: 0.0, y_hi: bounds.lambda_hi };
            let pi = sample_poisson_planar(1.0, rect, rng);
            let a = anchors(&pi, &bounds);
            let Some(&anchor) = a.points.iter().find(|&&x| x - bounds.t0 >= 20.0 && x < 40.0) else {
                continue;
            };
            let base = anchor - bounds.t0;
            let s1 = base - 20.0 * rng.random::<f64>();
            let s2 = base - 20.0 * rng.random::<f64>();
            if s1 == s2 {
                continue;
            }
            let o1 = orbit(s1, &pi, &jump).unwrap().points;
            let o2 = orbit(s2, &pi, &jump).unwrap().points;
            let Some(i) = o1[1..].iter().position(|x| o2[1..].contains(x)).map(|i| i + 1) else {
                return false;
            };
            let j = o2.iter().position(|&x| x == o1[i]).unwrap();
            return o1[i] <= anchor && o1[i..] == o2[j..];
        }
    });
    let violations = results.iter().filter(|ok| !**ok).count();
    (violations == 0, format!("{violations} violations in {} replications", results.len()))
}

fn finitariness() -> Outcome {
    let jump = gamma21();
    let bounds = jump.hazard_bounds().unwrap();
    let target = Window::new(0.0, 30.0);
    let results = replicate(300, 250, |_, rng| -> usize {
        let run = factor_with_retry(&jump, &bounds, target, &[0.0], rng).unwrap();
        let keep = run.result.determining;
        let outside = |x: f64| x < keep.lo || x >= keep.hi;
        let mut bad = 0;
        for kind in 0..4 {
            let mut pi: PlanarPattern = run.planar.clone();
            let fresh = sample_poisson_planar(3.0, pi.rect, rng);
            match kind {
                // Resample everything outside.
                0 => {
                    pi.points.retain(|p| !outside(p.0));
                    pi.points.extend(fresh.points.iter().filter(|p| outside(p.0)).map(|p| (p.0, p.1 / 3.0)));
                }
                // Delete everything to the left.
                1 => pi.points.retain(|p| p.0 >= keep.lo),
                // Flood both sides with extra points.
                2 => pi.points.extend(fresh.points.iter().filter(|p| outside(p.0))),
                // Move the outside points vertically to the lowest slab.
                _ => {
                    for p in pi.points.iter_mut().filter(|p| outside(p.0)) {
                        p.1 *= 1e-3;
                    }
                }
            }
            pi.points.sort_by(|a, b| a.0.total_cmp(&b.0));
            pi.points.dedup_by(|a, b| a.0 == b.0);
            let same = match factor(&pi, &jump, &bounds, target, &[]) {
                Ok(res) => res.colored == run.result.colored,
                Err(_) => false,
            };
            bad += usize::from(!same);
        }
        bad
    });
    let violations: usize = results.iter().sum();
    (violations == 0, format!("{violations} violations in {} mutations", 4 * results.len()))
}

fn coding_window_tails() -> Outcome {
    let jump = exp1();
    let bounds = jump.hazard_bounds().unwrap();
    let samples = coding_window_samples(&jump, &bounds, 10_000, &mut stream(400, 0)).unwrap();
    let lengths: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let fit = tail_rate_fit(&lengths).unwrap();
    (fit.r_squared > 0.95, format!("n={} R²={:.4} rate={:.4}", fit.n, fit.r_squared, fit.rate))
}

fn anchors_vs_selection() -> Outcome {
    let jump = gamma21();
    let b = jump.hazard_bounds().unwrap();
    let n = 100_000;
    let mut rng = stream(500, 0);
    let mut gaps = Vec::new();
    while gaps.len() < n {
        let rect = Rect { x_lo: 0.0, x_hi: 50_000.0, y_lo: 0.0, y_hi: b.lambda_hi };
        let pi = sample_poisson_planar(1.0, rect, &mut rng);
        gaps.extend(anchors(&pi, &b).gaps().unwrap());
    }
    gaps.truncate(n);
    let oracle = selection_gap_oracle(b.lambda_hi, b.lambda_lo / b.lambda_hi, b.t0, n, &mut stream(500, 1));
    let ks = ks_two_sample(&gaps, &oracle).unwrap();
    (ks.p_value > 0.01, format!("n={n} D={:.5} p={:.4}", ks.statistic, ks.p_value))
}

fn geometric_tails() -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, jump, p, closed_form) in [("Exp(1)", exp1(), 0.3, 0.3), ("Gamma(2,1)", gamma21(), 0.75, 0.5)] {
        let solved = jump.solve_decay_rate(p).unwrap();
        let base: Arc<dyn JumpSampler> = Arc::new(jump.clone());
        let samples = replicate(600, 1_000_000, |_, rng| sample_geom_sum(base.as_ref(), p, true, rng).unwrap().0);
        let fit = tail_rate_fit(&samples).unwrap();
        let rel = (fit.rate - solved).abs() / solved;
        pass &= rel < 0.05 && (solved - closed_form).abs() < 1e-9;
        detail.push(format!("{name} p={p}: fitted {:.4} vs b={solved:.4} ({:+.2}%)", fit.rate, 100.0 * (fit.rate - solved) / solved));
    }
    (pass, detail.join(", "))
}

fn k_hit_equivalence() -> Outcome {
    let jump = gamma21();
    let set = HitSet::interval(0.0, 1.0).unwrap();
    let n = 100_000;
    let mut pass = true;
    let mut detail = Vec::new();
    for k in [1usize, 2] {
        let mut gaps = Vec::new();
        let mut chunk = 0;
        while gaps.len() < n {
            let x = sample_stationary_renewal(&jump, Window::new(0.0, 1e6), &mut stream(700 + k as u64, chunk)).unwrap();
            gaps.extend(extract_k_hit_points(&x, &set, k).unwrap().gaps().unwrap());
            chunk += 1;
        }
        gaps.truncate(n);
        let direct = replicate(710 + k as u64, n as u64, |_, rng| sample_k_hit(&jump, &set, k, rng).unwrap().0);
        let ks = ks_two_sample(&gaps, &direct).unwrap();
        pass &= ks.p_value > 0.01;
        detail.push(format!("k={k}: p={:.4}", ks.p_value));
    }
    (pass, format!("n={n} each, {}", detail.join(", ")))
}

fn decomposition() -> Outcome {
    let jump = gamma21();
    let set = HitSet::interval(0.9, 1.1).unwrap();
    let n = 100_000;
    let direct = replicate(800, n, |_, rng| sample_k_hit(&jump, &set, 1, rng).unwrap().0);
    let split = one_hit_decomposition(&jump, &set).unwrap();
    let summed = replicate(801, n, |_, rng| split.draw(rng).unwrap());
    let ks = ks_two_sample(&direct, &summed).unwrap();
    (ks.p_value > 0.01, format!("n={n} D={:.5} p={:.4}", ks.statistic, ks.p_value))
}

fn marking_isomorphism() -> Outcome {
    let jump = gamma21();
    let set = HitSet::interval(0.0, 2.0).unwrap();
    let marks = JumpMarkLaw::iid(vec![MarkLaw::Exponential { rate: 1.0 }]).unwrap();
    let marker = Marker::new(jump.clone(), set.clone(), marks, CarrierPolicy::default()).unwrap();
    let round_trip = replicate(900, 1000, |_, rng| -> (bool, bool) {
        let x = sample_stationary_renewal(&jump, Window::new(0.0, 200.0), rng).unwrap();
        let out = marker.forward(&x).unwrap();
        let exact = marker.inverse(&out.pattern).unwrap() == marker.truncate(&x).unwrap();
        let specials = find_special_points(&out.pattern.unmarked(), &set) == find_special_points(&x, &set);
        (exact, specials)
    });
    let inverse_bad = round_trip.iter().filter(|r| !r.0).count();
    let special_bad = round_trip.iter().filter(|r| !r.1).count();

    let n = 100_000;
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(n);
    let mut chunk = 0;
    while pairs.len() < n {
        let x = sample_stationary_renewal(&jump, Window::new(0.0, 50_000.0), &mut stream(901, chunk)).unwrap();
        let out = marker.forward(&x).unwrap().pattern;
        for i in 1..out.points.len() {
            if let Mark::Values(v) = &out.points[i].mark {
                pairs.push((out.points[i].location - out.points[i - 1].location, v[0]));
            }
        }
        chunk += 1;
    }
    pairs.truncate(n);
    let mark_values: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let ks = ks_one_sample(&mark_values, exp_cdf).unwrap();
    let quartile = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(f64::total_cmp);
        [s[n / 4], s[n / 2], s[3 * n / 4]]
    };
    let gap_values: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let (gq, mq) = (quartile(&gap_values), quartile(&mark_values));
    let bin = |x: f64, q: &[f64; 3]| q.iter().filter(|&&c| x > c).count();
    let mut table = vec![vec![0u64; 4]; 4];
    for &(g, m) in &pairs {
        table[bin(g, &gq)][bin(m, &mq)] += 1;
    }
    let chi = chi_square_independence(&table);
    let level = 0.01 / 2.0;
    let pass = inverse_bad == 0 && special_bad == 0 && ks.p_value > level && chi.p_value > level;
    (
        pass,
        format!(
            "round trips: {inverse_bad}/1000 violations, special points: {special_bad}/1000 changed; n={n} marks KS p={:.4}, mark-gap χ² p={:.4}",
            ks.p_value, chi.p_value
        ),
    )
}

fn palm_inversion() -> Outcome {
    let n = 100_000;
    let level = 0.01 / 3.0;
    let mut pass = true;
    let mut detail = Vec::new();
    let cases: [CdfCase; 3] = [
        ("Exp(1)", exp1(), exp_cdf),
        ("Gamma(2,1)", gamma21(), |t| 1.0 - (1.0 + t / 2.0) * (-t).exp()),
        ("δ1", JumpDistribution::point_mass(1.0).unwrap(), |t| t.clamp(0.0, 1.0)),
    ];
    for (i, (name, jump, cdf)) in cases.into_iter().enumerate() {
        let samples = replicate(1000 + i as u64, n, |_, rng| sample_forward_recurrence(&jump, rng).unwrap());
        let ks = ks_one_sample(&samples, cdf).unwrap();
        pass &= ks.p_value > level;
        detail.push(format!("{name}: p={:.4}", ks.p_value));
    }
    (pass, format!("n={n} each, {} (level {level:.4})", detail.join(", ")))
}

fn alternating_marginal() -> Outcome {
    let exp = exp1();
    let spec = MarkovColoredSpec {
        branches: vec![
            vec![Branch { prob: 1.0, jump: exp.clone(), next: 1 }],
            vec![Branch { prob: 1.0, jump: exp, next: 0 }],
        ],
        initial: vec![0.5, 0.5],
        irreducible: true,
    };
    let p = spec.simulate(Window::new(0.0, 201_000.0), &mut stream(1100, 0)).unwrap();
    let mut gaps = color_marginal(&p, 0).gaps().unwrap();
    gaps.truncate(100_000);
    let ks = ks_one_sample(&gaps, gamma21_cdf).unwrap();
    (ks.p_value > 0.01 && gaps.len() == 100_000, format!("n={} p={:.4}", gaps.len(), ks.p_value))
}

fn brownian_regeneration() -> Outcome {
    let spec = BrownianSpec {
        h: 1.0,
        mode: FoldMode::Reflected,
        dt: 1e-4,
        window: Window::new(0.0, 5000.0),
    };
    let regen = simulate_regeneration(&spec, &mut stream(1200, 0)).unwrap();
    let gaps = regen.gaps().unwrap();
    let fit = tail_rate_fit(&gaps).unwrap();
    let checks = independence_tests("regeneration gaps", &gaps, 0.01, 1200, &mut stream(1200, 1)).unwrap();
    let perm = checks.iter().find(|c| c.name.contains("permutation")).unwrap();
    let marginal_spec = BrownianSpec {
        window: Window::new(0.0, 0.25),
        ..spec
    };
    let values = replicate(1201, 100_000, |_, rng| *simulate_brownian(&marginal_spec, rng).unwrap().folded.last().unwrap());
    let ks = ks_one_sample(&values, |x| x.clamp(0.0, 1.0)).unwrap();
    let pass = fit.r_squared > 0.95 && perm.pass && ks.p_value > 0.001;
    (
        pass,
        format!(
            "{} gaps: tail R²={:.4}, permutation p={:.4}; marginal at t=0.25 over 1e5 paths KS p={:.4} (level 0.001)",
            gaps.len(),
            fit.r_squared,
            perm.value,
            ks.p_value
        ),
    )
}

fn run_cli(args: &[&str], spec: &Path, out: &Path) -> bool {
    Command::new(env!("CARGO_BIN_EXE_rfactor"))
        .args(args)
        .arg("--spec")
        .arg(spec)
        .arg("--out")
        .arg(out)
        .output()
        .map(|o| o.status.code() == Some(0))
        .unwrap_or(false)
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

fn determinism() -> Outcome {
    let specs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../specs");
    let tmp = tempfile::tempdir().unwrap();
    let pipelines: [(&str, &[&str]); 10] = [
        ("exp1.toml", &["simulate", "--reps", "3"]),
        ("alternating.toml", &["simulate", "--reps", "2"]),
        ("brownian.toml", &["simulate", "--window", "0:3"]),
        ("exp1.toml", &["factor", "--reps", "8", "--query", "3"]),
        ("selection.toml", &["select", "--reps", "2"]),
        ("gamma2.toml", &["regularize", "--reps", "4", "--window", "0:3000"]),
        ("atom_mix.toml", &["regularize", "--reps", "2000"]),
        ("gamma2.toml", &["mark", "--reps", "4", "--format", "json"]),
        ("exp1.toml", &["verify", "--reps", "2000"]),
        ("exp1.toml", &["certify", "--reps", "2000"]),
    ];
    let mut differing = Vec::new();
    for (i, (spec, args)) in pipelines.iter().enumerate() {
        let mut full = args.to_vec();
        full.extend(["--seed", "13"]);
        let a = tmp.path().join(format!("{i}-a"));
        let b = tmp.path().join(format!("{i}-b"));
        let ok = run_cli(&full, &specs.join(spec), &a) && run_cli(&full, &specs.join(spec), &b);
        if !ok || snapshot(&a) != snapshot(&b) {
            differing.push(format!("{} {}", args[0], spec));
        }
    }
    (
        differing.is_empty(),
        format!("{} pipelines rerun, {} differ {:?}", pipelines.len(), differing.len(), differing),
    )
}

fn main() {
    let criteria: [Criterion; 13] = [
        ("CFTP law correctness", cftp_law),
        ("CFTP exact coalescence", coalescence),
        ("finitariness under outside mutations", finitariness),
        ("coding-window exponential tails", coding_window_tails),
        ("anchor law equals simple-selection law", anchors_vs_selection),
        ("geometric-sum tail rate", geometric_tails),
        ("k-hit oracle equivalence", k_hit_equivalence),
        ("one-hit decomposition identity", decomposition),
        ("marking isomorphism", marking_isomorphism),
        ("stationary first point (Palm inversion)", palm_inversion),
        ("alternating-process marginal", alternating_marginal),
        ("Brownian regeneration", brownian_regeneration),
        ("CLI determinism", determinism),
    ];
    let filter: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.contains(&(i + 1)) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = check();
        failed += usize::from(!pass);
        println!(
            "criterion {:>2} {} {name}: {detail} [{:.1}s]",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("acceptance: {failed} criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
