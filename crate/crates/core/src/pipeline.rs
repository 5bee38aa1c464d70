//! The regularization chain and the end-to-end certification run: a jump
//! law is replaced stage by stage with k-hit stopping sums until its
//! density is regular enough for the coupling-from-the-past factor, and
//! each stage is checked against direct nested simulation.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cftp::{factor_with_retry, CftpError};
use crate::distributions::{DistError, HazardBounds, JumpDistribution};
use crate::patterns::Window;
use crate::regularize::{
    choose_hit_interval_regular, choose_hit_set_bounded_density, choose_hit_set_nonsingular, expected_draws,
    k_hit_law, HitSet, JumpSampler, KHit, RegError,
};
use crate::rng::{derive_seed, replicate, stream};
use crate::verify::{independence_tests, ks_one_sample, tail_rate_fit, Check, Criterion, VerificationReport, VerifyError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Regularize(#[from] RegError),
    #[error(transparent)]
    Distribution(#[from] DistError),
    #[error(transparent)]
    Factor(#[from] CftpError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageKind {
    /// Makes a law with atoms non-singular.
    Nonsingular,
    /// Makes the law absolutely continuous with a bounded density.
    BoundedDensity,
    /// Makes the density bounded above and below near a regular interval.
    RegularInterval,
}

/// One regularization step with its tabulated law and a sampler that
/// reproduces it by nesting.
#[derive(Clone)]
pub struct Stage {
    pub kind: StageKind,
    pub set: HitSet,
    pub k: usize,
    pub hit_probability: f64,
    pub law: JumpDistribution,
    pub step: f64,
    pub tail_mass: f64,
    pub sampler: Arc<dyn JumpSampler>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub kind: StageKind,
    pub set: String,
    pub k: usize,
    pub hit_probability: f64,
    pub expected_draws: f64,
    pub mean: f64,
    pub lattice_step: f64,
    pub tail_mass: f64,
}

impl Stage {
    pub fn summary(&self) -> StageSummary {
        StageSummary {
            kind: self.kind,
            set: self.set.to_string(),
            k: self.k,
            hit_probability: self.hit_probability,
            expected_draws: expected_draws(self.hit_probability, self.k),
            mean: self.law.mean().unwrap_or(f64::NAN),
            lattice_step: self.step,
            tail_mass: self.tail_mass,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainOptions {
    /// Run the non-singular stage even when the law already has an
    /// absolutely continuous part.
    #[serde(default)]
    pub force_nonsingular_stage: bool,
}

pub struct Chain {
    pub input: JumpDistribution,
    pub stages: Vec<Stage>,
    pub notes: Vec<String>,
}

impl Chain {
    pub fn output(&self) -> &JumpDistribution {
        self.stages.last().map_or(&self.input, |s| &s.law)
    }
}

/// Applies the three regularization stages in order.
pub fn regularize_chain(jump: &JumpDistribution, opts: ChainOptions) -> Result<Chain, PipelineError> {
    jump.mean()?;
    let mut notes = Vec::new();
    let mut stages: Vec<Stage> = Vec::new();
    let mut current = jump.clone();
    let mut sampler: Arc<dyn JumpSampler> = Arc::new(jump.clone());
    let mut push = |kind: StageKind,
                    set: HitSet,
                    k: usize,
                    current: &mut JumpDistribution,
                    sampler: &mut Arc<dyn JumpSampler>|
     -> Result<(), PipelineError> {
        let table = k_hit_law(current, &set, k)?;
        let nested: Arc<dyn JumpSampler> = Arc::new(KHit {
            base: sampler.clone(),
            set: set.clone(),
            k,
        });
        *current = table.law.clone();
        *sampler = nested.clone();
        stages.push(Stage {
            kind,
            set,
            k,
            hit_probability: table.hit_probability,
            law: table.law,
            step: table.step,
            tail_mass: table.tail_mass,
            sampler: nested,
        });
        Ok(())
    };
    if current.ac_mass() == 0.0 {
        return Err(RegError::NotAchievable("the law is purely atomic, so no convolution power is non-singular".into()).into());
    }
    if opts.force_nonsingular_stage {
        let choice = choose_hit_set_nonsingular(&current, 1)?;
        push(StageKind::Nonsingular, choice.set, 1, &mut current, &mut sampler)?;
    } else {
        notes.push("non-singular stage skipped: the law already has an absolutely continuous part".into());
    }
    let bounded = choose_hit_set_bounded_density(&current)?;
    push(StageKind::BoundedDensity, bounded.set, 2, &mut current, &mut sampler)?;
    let regular = choose_hit_interval_regular(&current)?;
    push(StageKind::RegularInterval, regular.set, 1, &mut current, &mut sampler)?;
    Ok(Chain {
        input: jump.clone(),
        stages,
        notes,
    })
}

/// `n` nested draws from every stage, with the seed used for each.
pub fn chain_samples(chain: &Chain, n: u64, seed: u64) -> Result<Vec<(u64, Vec<f64>)>, PipelineError> {
    chain
        .stages
        .iter()
        .enumerate()
        .map(|(i, stage)| {
            let master = derive_seed(seed, 100 + i as u64);
            let draws = replicate(master, n, |_, rng| stage.sampler.draw(rng))
                .into_iter()
                .collect::<Result<Vec<f64>, RegError>>()?;
            Ok((master, draws))
        })
        .collect()
}

/// KS test of each stage's tabulated law against its nested draws.
pub fn chain_checks(chain: &Chain, samples: &[(u64, Vec<f64>)], alpha: f64) -> Result<Vec<Check>, PipelineError> {
    let mut checks = Vec::new();
    for (i, (stage, (master, draws))) in chain.stages.iter().zip(samples).enumerate() {
        let ks = ks_one_sample(draws, |t| stage.law.cdf(t))?;
        let name = format!("stage {} ({:?}) table vs nested sampler", i + 1, stage.kind);
        checks.push(Check::ks(name, ks, alpha, *master));
    }
    Ok(checks)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifyOptions {
    pub reps: u64,
    pub seed: u64,
    pub alpha: f64,
    #[serde(default)]
    pub chain: ChainOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub stages: Vec<StageSummary>,
    pub bounds: HazardBounds,
    pub factor_gaps: usize,
    pub notes: Vec<String>,
    pub report: VerificationReport,
}

/// Draws needed for the tail fit of coding-window lengths.
const MIN_TAIL_SAMPLES: u64 = 1000;

/// Regularizes `jump`, bounds the hazard of the result, runs the factor
/// `reps` times on a window of one mean length, and collects a
/// Bonferroni-corrected report.
pub fn certify(jump: &JumpDistribution, opts: CertifyOptions) -> Result<Certificate, PipelineError> {
    let chain = regularize_chain(jump, opts.chain)?;
    let law = chain.output().clone();
    let mut report = VerificationReport::new(opts.alpha);
    let stage_draws = opts.reps.clamp(100, 20_000);
    let samples = chain_samples(&chain, stage_draws, opts.seed)?;
    report.extend(chain_checks(&chain, &samples, opts.alpha)?);

    let bounds = law.hazard_bounds()?;
    let bounded = bounds.lambda_lo > 0.0 && bounds.lambda_hi.is_finite() && bounds.lambda_lo <= bounds.lambda_hi;
    report.push(Check::new(
        "hazard bounds 0 < λ ≤ λ′ < ∞",
        bounds.lambda_lo,
        if bounded { 1.0 } else { 0.0 },
        Criterion::AtLeast(1.0),
        1,
        opts.seed,
    ));

    let mean = law.mean()?;
    let window = Window::new(0.0, mean);
    let master = derive_seed(opts.seed, 1);
    let runs = replicate(master, opts.reps, |_, rng| {
        factor_with_retry(&law, &bounds, window, &[0.0], rng)
            .map(|run| (run.result.gaps_from_window(), run.result.coding_windows[0].length))
    })
    .into_iter()
    .collect::<Result<Vec<_>, CftpError>>()?;
    let gaps: Vec<f64> = runs.iter().flat_map(|(g, _)| g.iter().copied()).collect();
    let coding: Vec<f64> = runs.iter().map(|(_, c)| *c).collect();
    let ks = ks_one_sample(&gaps, |t| law.cdf(t))?;
    report.push(Check::ks("factor output gaps vs regularized law", ks, opts.alpha, master));

    if opts.reps >= MIN_TAIL_SAMPLES {
        let fit = tail_rate_fit(&coding)?;
        report.push(
            Check::new("coding-window tail fit R²", fit.rate, fit.r_squared, Criterion::AtLeast(0.95), fit.n, master)
                .with_note(format!("fitted rate {:.4}", fit.rate)),
        );
    }

    let long_seed = derive_seed(opts.seed, 2);
    let long_gaps = (opts.reps / 10).clamp(100, 10_000) as f64;
    let run = factor_with_retry(&law, &bounds, Window::new(0.0, long_gaps * mean), &[], &mut stream(long_seed, 0))?;
    let pts: Vec<f64> = run.result.colored.points.iter().map(|p| p.location).collect();
    let interior: Vec<f64> = pts.windows(2).map(|w| w[1] - w[0]).collect();
    report.extend(independence_tests(
        "factor output gaps",
        &interior,
        opts.alpha,
        long_seed,
        &mut stream(long_seed, 1),
    )?);

    report.apply_bonferroni();
    Ok(Certificate {
        stages: chain.stages.iter().map(Stage::summary).collect(),
        bounds,
        factor_gaps: gaps.len(),
        notes: chain.notes,
        report,
    })
}
