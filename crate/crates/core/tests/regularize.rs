use std::sync::Arc;

use rand::RngCore;
use rfactor::distributions::JumpDistribution;
use rfactor::patterns::{sample_renewal_from_point, Window};
use rfactor::regularize::{
    choose_hit_interval_regular, choose_hit_set_bounded_density, choose_hit_set_nonsingular,
    extract_k_hit_points, k_hit_law, one_hit_decomposition, sample_k_hit, HitSet, JumpSampler, KHit,
};
use rfactor::rng::stream;
use rfactor::verify::{ks_one_sample, ks_two_sample, tail_rate_fit};

fn draws(sampler: &dyn JumpSampler, n: usize, rng: &mut dyn RngCore) -> Vec<f64> {
    (0..n).map(|_| sampler.draw(rng).unwrap()).collect()
}

#[test]
fn extracted_points_have_k_hit_gaps() {
    let jump = JumpDistribution::gamma(2.0, 1.0).unwrap();
    let set = HitSet::interval(0.0, 1.0).unwrap();
    for k in 1..=2 {
        let mut rng = stream(21, k as u64);
        let renewal = sample_renewal_from_point(&jump, Window::new(0.0, 4.0e5 * k as f64), &mut rng);
        let kept = extract_k_hit_points(&renewal, &set, k).unwrap();
        let gaps = kept.gaps().unwrap();
        assert!(gaps.len() > 2000, "only {} gaps", gaps.len());
        let direct: Vec<f64> = (0..gaps.len())
            .map(|_| sample_k_hit(&jump, &set, k, &mut rng).unwrap().0)
            .collect();
        let ks = ks_two_sample(&gaps, &direct).unwrap();
        assert!(ks.p_value > 1e-3, "k = {k}: {ks:?}");
    }
}

#[test]
fn one_hit_law_decomposes() {
    let jump = JumpDistribution::gamma(2.0, 1.0).unwrap();
    let set = HitSet::interval(0.9, 1.1).unwrap();
    let mut rng = stream(22, 0);
    let n = 20_000;
    let direct: Vec<f64> = (0..n).map(|_| sample_k_hit(&jump, &set, 1, &mut rng).unwrap().0).collect();
    let split = one_hit_decomposition(&jump, &set).unwrap();
    let composed = draws(&split, n, &mut rng);
    let ks = ks_two_sample(&direct, &composed).unwrap();
    assert!(ks.p_value > 1e-3, "{ks:?}");
}

#[test]
fn regularizing_chain_matches_nested_sampler() {
    let start = std::time::Instant::now();
    let jump = JumpDistribution::exponential(1.0).unwrap();
    let stage2 = choose_hit_set_nonsingular(&jump, 1).unwrap();
    let law2 = k_hit_law(&jump, &stage2.set, 1).unwrap();
    let stage3 = choose_hit_set_bounded_density(&law2.law).unwrap();
    let law3 = k_hit_law(&law2.law, &stage3.set, 2).unwrap();
    let stage4 = choose_hit_interval_regular(&law3.law).unwrap();
    let law4 = k_hit_law(&law3.law, &stage4.set, 1).unwrap();
    eprintln!(
        "stage sets: {} | {} | {} ; steps {} {} {} ; elapsed {:?}",
        stage2.set, stage3.set.intervals.len(), stage4.set, law2.step, law3.step, law4.step, start.elapsed()
    );
    let bounds = law4.law.hazard_bounds().unwrap();
    eprintln!("bounds {bounds:?} mean {}", law4.law.mean().unwrap());
    let sampler2: Arc<dyn JumpSampler> = Arc::new(KHit {
        base: Arc::new(jump.clone()),
        set: stage2.set.clone(),
        k: 1,
    });
    let sampler3: Arc<dyn JumpSampler> = Arc::new(KHit {
        base: sampler2.clone(),
        set: stage3.set.clone(),
        k: 2,
    });
    let sampler4: Arc<dyn JumpSampler> = Arc::new(KHit {
        base: sampler3.clone(),
        set: stage4.set.clone(),
        k: 1,
    });
    let mut rng = stream(23, 0);
    for (sampler, law) in [(&sampler2, &law2), (&sampler3, &law3), (&sampler4, &law4)] {
        let xs = draws(sampler.as_ref(), 20_000, &mut rng);
        let ks = ks_one_sample(&xs, |t| law.law.cdf(t)).unwrap();
        assert!(ks.p_value > 1e-3, "{ks:?}");
    }
    eprintln!("total {:?}", start.elapsed());
}

#[test]
fn k_hit_sums_have_exponential_tails() {
    let jump = JumpDistribution::gamma(2.0, 1.0).unwrap();
    let set = HitSet::interval(0.0, 1.0).unwrap();
    for k in 1..=3 {
        let mut rng = stream(22, k as u64);
        let sums: Vec<f64> = (0..20_000).map(|_| sample_k_hit(&jump, &set, k, &mut rng).unwrap().0).collect();
        let fit = tail_rate_fit(&sums).unwrap();
        assert!(fit.r_squared > 0.95, "k = {k}: {fit:?}");
    }
}
