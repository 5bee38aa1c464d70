//! Subcommand bodies. Each returns whether its checks passed.

use std::fs::File;

use anyhow::{bail, Context as _, Result};
use rfactor::cftp::{factor_with_retry, CodingWindow};
use rfactor::distributions::{HazardBounds, JumpDistribution};
use rfactor::io::read_pattern_csv;
use rfactor::marking::Marker;
use rfactor::patterns::{sample_stationary_renewal, PointPattern, Window};
use rfactor::pipeline::{self, chain_checks, chain_samples, regularize_chain, CertifyOptions, ChainOptions, Stage};
use rfactor::regen::{excursion_regeneration, simulate_brownian, BrownianSpec, FoldMode};
use rfactor::regularize::{expected_draws, extract_k_hit_points, sample_k_hit};
use rfactor::rng::{derive_seed, replicate, stream};
use rfactor::selection::{colored_poisson, simple_selection};
use rfactor::verify::{
    independence_tests, ks_one_sample, ks_two_sample, palm_check, tail_rate_fit, Check, Criterion, VerificationReport,
};
use serde::Serialize;

use crate::output::{Format, Output};
use crate::spec::{hit_set, RunSpec};
use crate::Common;

pub struct Context<'a> {
    pub spec: &'a RunSpec,
    pub common: &'a Common,
    pub out: &'a Output,
}

fn renewal_patterns(jump: &JumpDistribution, c: &Common, seed: u64) -> Result<Vec<PointPattern>> {
    let patterns = replicate(seed, c.reps, |_, rng| sample_stationary_renewal(jump, c.window, rng));
    Ok(patterns.into_iter().collect::<Result<_, _>>()?)
}

fn input_pattern(c: &Common) -> Result<Option<PointPattern>> {
    match &c.input {
        None => Ok(None),
        Some(path) => {
            let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            Ok(Some(read_pattern_csv(f).with_context(|| format!("reading {}", path.display()))?))
        }
    }
}

fn finish(out: &Output, mut report: VerificationReport) -> Result<bool> {
    report.apply_bonferroni();
    out.report(&report)?;
    println!("{report}");
    Ok(report.all_pass())
}

pub fn simulate(ctx: &Context) -> Result<bool> {
    let c = ctx.common;
    if let Some(markov) = &ctx.spec.markov {
        let patterns = replicate(c.seed, c.reps, |_, rng| markov.simulate(c.window, rng));
        let patterns: Vec<_> = patterns.into_iter().collect::<Result<_, _>>()?;
        ctx.out.marked_patterns("pattern", &patterns)?;
        ctx.out.json(
            "summary.json",
            &serde_json::json!({
                "process": "markov-colored",
                "burn_in": markov.burn_in(),
                "skeleton_stationary": markov.skeleton_stationary(),
                "time_occupancy": markov.time_occupancy(),
                "points": patterns.iter().map(|p| p.points.len()).collect::<Vec<_>>(),
            }),
        )?;
    } else if let Some(b) = &ctx.spec.brownian {
        let spec = BrownianSpec {
            h: b.h,
            mode: b.mode,
            dt: b.dt,
            window: c.window,
        };
        spec.validate()?;
        let regenerations = replicate(c.seed, c.reps, |i, rng| -> Result<PointPattern> {
            let path = simulate_brownian(&spec, rng)?;
            let rows = path.times().zip(&path.folded).map(|(t, v)| vec![t, *v]);
            ctx.out.table(&format!("path-{i:05}.csv"), &["t", "value"], rows)?;
            match spec.mode {
                FoldMode::Reflected => Ok(excursion_regeneration(&path, &spec)?),
                FoldMode::Periodic => Ok(PointPattern::empty(c.window)),
            }
        });
        let regenerations: Vec<_> = regenerations.into_iter().collect::<Result<_>>()?;
        if spec.mode == FoldMode::Reflected {
            ctx.out.patterns("regeneration", &regenerations)?;
        }
    } else {
        let jump = ctx.spec.jump()?;
        let patterns = renewal_patterns(jump, c, c.seed)?;
        ctx.out.patterns("pattern", &patterns)?;
    }
    Ok(true)
}

#[derive(Serialize)]
struct FactorSummary {
    valid_window: Window,
    determining: Window,
    first_anchor: f64,
    next_after: f64,
    widenings: usize,
    anchors: usize,
    points: usize,
    coding_windows: Vec<CodingWindow>,
}

fn bounds_for(jump: &JumpDistribution) -> Result<HazardBounds> {
    jump.hazard_bounds()
        .context("the jump law has no usable hazard bounds; `certify` regularizes it first")
}

pub fn factor(ctx: &Context) -> Result<bool> {
    let c = ctx.common;
    let jump = ctx.spec.jump()?;
    let bounds = bounds_for(jump)?;
    let queries = if c.queries.is_empty() {
        ctx.spec.factor.clone().unwrap_or_default().queries
    } else {
        c.queries.clone()
    };
    let runs = replicate(c.seed, c.reps, |_, rng| factor_with_retry(jump, &bounds, c.window, &queries, rng));
    let runs: Vec<_> = runs.into_iter().collect::<Result<_, _>>()?;
    let patterns: Vec<_> = runs.iter().map(|r| r.result.colored.clone()).collect();
    ctx.out.marked_patterns("factor", &patterns)?;
    let summaries: Vec<FactorSummary> = runs
        .iter()
        .map(|r| FactorSummary {
            valid_window: r.result.valid_window,
            determining: r.result.determining,
            first_anchor: r.result.first_anchor,
            next_after: r.result.next_after,
            widenings: r.widenings,
            anchors: r.result.anchors.points.len(),
            points: r.result.colored.points.len(),
            coding_windows: r.result.coding_windows.clone(),
        })
        .collect();
    ctx.out.json("factor.json", &serde_json::json!({ "bounds": bounds, "runs": summaries }))?;
    Ok(true)
}

pub fn select(ctx: &Context) -> Result<bool> {
    let c = ctx.common;
    let Some(sel) = &ctx.spec.selection else {
        bail!("`select` needs a [selection] section");
    };
    if !(sel.intensity > 0.0 && (0.0..=1.0).contains(&sel.red_fraction) && sel.delay >= 0.0) {
        bail!("[selection] needs intensity > 0, red_fraction in [0, 1] and delay >= 0");
    }
    let patterns = replicate(c.seed, c.reps, |_, rng| {
        let colored = rfactor::patterns::MarkedPointPattern {
            window: c.window,
            points: colored_poisson(sel.intensity, sel.red_fraction, c.window, rng),
        };
        (colored.clone(), simple_selection(&colored, sel.delay))
    });
    let (colored, selected): (Vec<_>, Vec<_>) = patterns.into_iter().unzip();
    ctx.out.marked_patterns("colored", &colored)?;
    ctx.out.patterns("selected", &selected)?;
    Ok(true)
}

fn stage_table(stage: &Stage, draws: &[f64]) -> Vec<Vec<f64>> {
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let hi = stage.law.quantile(0.999);
    let n = sorted.len() as f64;
    (0..=200)
        .map(|i| {
            let t = hi * i as f64 / 200.0;
            let below = sorted.partition_point(|&x| x <= t) as f64;
            vec![t, stage.law.cdf(t), below / n]
        })
        .collect()
}

pub fn regularize(ctx: &Context) -> Result<bool> {
    let c = ctx.common;
    let jump = ctx.spec.jump()?;
    let alpha = ctx.spec.alpha();
    let section = ctx.spec.regularize.clone();
    let Some(set_spec) = section.as_ref().and_then(|s| s.set.clone()) else {
        let opts = ChainOptions {
            force_nonsingular_stage: section.is_some_and(|s| s.force_nonsingular_stage),
        };
        let chain = regularize_chain(jump, opts)?;
        let samples = chain_samples(&chain, c.reps.max(10), c.seed)?;
        for (i, (stage, (_, draws))) in chain.stages.iter().zip(&samples).enumerate() {
            ctx.out.table(&format!("stage-{}.csv", i + 1), &["t", "table_cdf", "empirical_cdf"], stage_table(stage, draws))?;
        }
        let summaries: Vec<_> = chain.stages.iter().map(Stage::summary).collect();
        ctx.out.json("stages.json", &serde_json::json!({ "stages": summaries, "notes": chain.notes }))?;
        let mut report = VerificationReport::new(alpha);
        report.extend(chain_checks(&chain, &samples, alpha)?);
        return finish(ctx.out, report);
    };
    let section = section.expect("set implies section");
    let set = hit_set(&set_spec, &section.excluded_atoms)?;
    let k = section.k;
    if k == 0 {
        bail!("[regularize] k must be at least 1");
    }
    let p = set.probability(jump);
    let sources = match input_pattern(c)? {
        Some(p) => vec![p],
        None => renewal_patterns(jump, c, c.seed)?,
    };
    let extracted = sources
        .iter()
        .map(|x| extract_k_hit_points(x, &set, k))
        .collect::<Result<Vec<_>, _>>()?;
    ctx.out.patterns("regularized", &extracted)?;
    let mean = expected_draws(p, k) * jump.mean()?;
    ctx.out.json(
        "regularize.json",
        &serde_json::json!({
            "set": set.to_string(), "k": k, "hit_probability": p,
            "expected_draws": expected_draws(p, k), "mean": mean,
        }),
    )?;
    let gaps: Vec<f64> = extracted.iter().flat_map(|x| x.gaps().unwrap_or_default()).collect();
    let mut report = VerificationReport::new(alpha);
    if gaps.len() >= 10 {
        let master = derive_seed(c.seed, 1);
        let direct = replicate(master, gaps.len() as u64, |_, rng| sample_k_hit(jump, &set, k, rng).map(|(t, _)| t));
        let direct: Vec<f64> = direct.into_iter().collect::<Result<_, _>>()?;
        report.push(Check::ks("extracted gaps vs direct k-hit draws", ks_two_sample(&gaps, &direct)?, alpha, master));
    } else {
        report.push(Check::degenerate("extracted gaps vs direct k-hit draws", gaps.len(), c.seed, "fewer than 10 gaps"));
    }
    finish(ctx.out, report)
}

pub fn mark(ctx: &Context) -> Result<bool> {
    let c = ctx.common;
    let jump = ctx.spec.jump()?;
    let Some(m) = &ctx.spec.marking else {
        bail!("`mark` needs a [marking] section");
    };
    let marker = Marker::new(jump.clone(), hit_set(&m.set, &[])?, m.marks.clone(), m.policy)?;
    let sources = match input_pattern(c)? {
        Some(p) => vec![p],
        None => renewal_patterns(jump, c, c.seed)?,
    };
    let mut marked = Vec::with_capacity(sources.len());
    let mut violations = 0usize;
    let mut regenerated = Vec::new();
    for x in &sources {
        let out = marker.forward(x)?;
        if marker.inverse(&out.pattern)? != marker.truncate(x)? {
            violations += 1;
        }
        regenerated.push(out.regenerated);
        marked.push(out.pattern);
    }
    ctx.out.marked_patterns("marked", &marked)?;
    ctx.out.json(
        "marking.json",
        &serde_json::json!({ "patterns": sources.len(), "round_trip_violations": violations, "regenerated": regenerated }),
    )?;
    let mut report = VerificationReport::new(ctx.spec.alpha());
    report.push(Check::new(
        "inverse of forward is the identity on the codec grid",
        violations as f64,
        violations as f64,
        Criterion::Below(0.5),
        sources.len(),
        c.seed,
    ));
    finish(ctx.out, report)
}

pub fn verify(ctx: &Context) -> Result<bool> {
    let c = ctx.common;
    let jump = ctx.spec.jump()?;
    let alpha = ctx.spec.alpha();
    let mut report = VerificationReport::new(alpha);
    if let Some(x) = input_pattern(c)? {
        let gaps = x.gaps()?;
        report.push(Check::ks("input gaps vs jump law", ks_one_sample(&gaps, |t| jump.cdf(t))?, alpha, c.seed));
        report.extend(independence_tests("input gaps", &gaps, alpha, c.seed, &mut stream(c.seed, 0))?);
        return finish(ctx.out, report);
    }
    let bounds = bounds_for(jump)?;
    let mean = jump.mean()?;
    let window = Window::new(0.0, mean);
    let master = derive_seed(c.seed, 1);
    let runs = replicate(master, c.reps, |_, rng| {
        factor_with_retry(jump, &bounds, window, &[0.0], rng)
            .map(|r| (r.result.gaps_from_window(), r.result.coding_windows[0].length))
    });
    let runs: Vec<_> = runs.into_iter().collect::<Result<_, _>>()?;
    let gaps: Vec<f64> = runs.iter().flat_map(|(g, _)| g.iter().copied()).collect();
    let coding: Vec<f64> = runs.iter().map(|(_, l)| *l).collect();
    report.push(Check::ks("factor output gaps vs jump law", ks_one_sample(&gaps, |t| jump.cdf(t))?, alpha, master));
    if coding.len() >= 1000 {
        let fit = tail_rate_fit(&coding)?;
        report.push(Check::new("coding-window tail fit R²", fit.rate, fit.r_squared, Criterion::AtLeast(0.95), fit.n, master));
    }
    let palm_seed = derive_seed(c.seed, 2);
    report.push(palm_check(jump, c.reps.max(10) as usize, alpha, palm_seed, &mut stream(palm_seed, 0))?);
    let long_seed = derive_seed(c.seed, 3);
    let long = Window::new(0.0, (c.reps / 10).clamp(100, 10_000) as f64 * mean);
    let run = factor_with_retry(jump, &bounds, long, &[], &mut stream(long_seed, 0))?;
    let gaps = run.result.colored.unmarked().gaps()?;
    report.extend(independence_tests("factor output gaps", &gaps, alpha, long_seed, &mut stream(long_seed, 1))?);
    finish(ctx.out, report)
}

pub fn certify(ctx: &Context) -> Result<bool> {
    let c = ctx.common;
    let jump = ctx.spec.jump()?;
    let cert = pipeline::certify(
        jump,
        CertifyOptions {
            reps: c.reps,
            seed: c.seed,
            alpha: ctx.spec.alpha(),
            chain: ctx.spec.certify.unwrap_or_default(),
        },
    )?;
    ctx.out.json("certificate.json", &cert)?;
    ctx.out.report(&cert.report)?;
    println!("{}", cert.report);
    if ctx.common.format == Format::Json {
        ctx.out.json("stages.json", &cert.stages)?;
    }
    Ok(cert.report.all_pass())
}
