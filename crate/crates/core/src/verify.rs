//! Statistical certification: Kolmogorov–Smirnov tests, chi-square tests,
//! tail-rate regression, independence tests, the stationary first-point law,
//! and the report type that collects named checks.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardUniform};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;
use thiserror::Error;

use crate::distributions::{DistError, JumpDistribution};
use crate::patterns::{sample_forward_recurrence, PatternError};
use crate::quad;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error(transparent)]
    Distribution(#[from] DistError),
    #[error(transparent)]
    Pattern(#[from] PatternError),
}

fn require(got: usize, needed: usize) -> Result<(), VerifyError> {
    if got < needed {
        Err(VerifyError::TooFewSamples { needed, got })
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Survival function of the Kolmogorov distribution, Pr(K > λ).
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.0 {
        // Theta-function form, fast for small arguments.
        let c = std::f64::consts::PI * std::f64::consts::PI / (8.0 * lambda * lambda);
        let mut sum = 0.0;
        for k in 1..=100 {
            let j = (2 * k - 1) as f64;
            let term = (-j * j * c).exp();
            sum += term;
            if term < 1e-300 {
                break;
            }
        }
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / lambda * sum;
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-300 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_p_value(d: f64, effective_n: f64) -> f64 {
    let root = effective_n.sqrt();
    kolmogorov_sf((root + 0.12 + 0.11 / root) * d)
}

fn sorted(samples: &[f64]) -> Vec<f64> {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// One-sample Kolmogorov–Smirnov test against a CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<KsResult, VerifyError> {
    require(samples.len(), 10)?;
    let s = sorted(samples);
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in s.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    Ok(KsResult {
        statistic: d,
        p_value: ks_p_value(d, n),
        n: s.len(),
    })
}

/// Two-sample Kolmogorov–Smirnov test; ties across samples are stepped
/// together.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult, VerifyError> {
    require(a.len().min(b.len()), 10)?;
    let (sa, sb) = (sorted(a), sorted(b));
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < sa.len() && j < sb.len() {
        let x = sa[i].min(sb[j]);
        while i < sa.len() && sa[i] == x {
            i += 1;
        }
        while j < sb.len() && sb[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(KsResult {
        statistic: d,
        p_value: ks_p_value(d, na * nb / (na + nb)),
        n: sa.len() + sb.len(),
    })
}

/// Upper tail of the chi-square distribution with `dof` degrees of freedom.
pub fn chi_square_sf(x: f64, dof: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        gamma_ur(dof / 2.0, x / 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: f64,
    pub p_value: f64,
}

/// Goodness of fit of counts to cell probabilities. Cells with expected
/// count below 5 are pooled into their neighbour.
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> ChiSquareResult {
    let total: u64 = observed.iter().sum();
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(probs) {
        acc.0 += o as f64;
        acc.1 += p * total as f64;
        if acc.1 >= 5.0 {
            cells.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc.1 > 0.0 || acc.0 > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += acc.0;
                last.1 += acc.1;
            }
            None => cells.push(acc),
        }
    }
    let statistic: f64 = cells.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = (cells.len() as f64 - 1.0).max(1.0);
    ChiSquareResult {
        statistic,
        dof,
        p_value: chi_square_sf(statistic, dof),
    }
}

/// Pearson chi-square test of independence on a contingency table.
pub fn chi_square_independence(table: &[Vec<u64>]) -> ChiSquareResult {
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    let ncols = table.first().map_or(0, |r| r.len());
    let cols: Vec<f64> = (0..ncols)
        .map(|j| table.iter().map(|r| r[j]).sum::<u64>() as f64)
        .collect();
    let total: f64 = rows.iter().sum();
    let mut statistic = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &o) in row.iter().enumerate() {
            let e = rows[i] * cols[j] / total;
            if e > 0.0 {
                statistic += (o as f64 - e).powi(2) / e;
            }
        }
    }
    let used_rows = rows.iter().filter(|&&r| r > 0.0).count();
    let used_cols = cols.iter().filter(|&&c| c > 0.0).count();
    let dof = ((used_rows.max(1) - 1) * (used_cols.max(1) - 1)).max(1) as f64;
    ChiSquareResult {
        statistic,
        dof,
        p_value: chi_square_sf(statistic, dof),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub rate: f64,
    pub r_squared: f64,
    pub n: usize,
    /// False when the log-survival curve is visibly nonlinear (R² < 0.95).
    pub reliable: bool,
}

/// Levels at which the empirical survival is read off.
const TAIL_LEVELS: usize = 200;

/// Least-squares fit of log survival against t, over the quantile band
/// [0.5, 0.999].
pub fn tail_rate_fit(samples: &[f64]) -> Result<TailFit, VerifyError> {
    tail_rate_fit_band(samples, 0.5, 0.999)
}

/// Tail fit on a custom quantile band. Survival levels are spaced evenly on
/// the log scale so every decade of the band weighs the same.
pub fn tail_rate_fit_band(samples: &[f64], lo: f64, hi: f64) -> Result<TailFit, VerifyError> {
    require(samples.len(), 1000)?;
    let s = sorted(samples);
    let n = s.len();
    let (a, b) = ((1.0 - lo).ln(), (1.0 - hi).ln());
    let mut xs = Vec::with_capacity(TAIL_LEVELS);
    let mut ys = Vec::with_capacity(TAIL_LEVELS);
    for i in 0..TAIL_LEVELS {
        let y = a + (b - a) * i as f64 / (TAIL_LEVELS - 1) as f64;
        let u = 1.0 - y.exp();
        let idx = ((u * n as f64).floor() as usize).min(n - 1);
        xs.push(s[idx]);
        ys.push(y);
    }
    let (slope, r_squared) = linear_fit(&xs, &ys);
    Ok(TailFit {
        rate: -slope,
        r_squared,
        n,
        reliable: r_squared >= 0.95,
    })
}

/// Ordinary least squares y ≈ a + b·x; returns (b, R²).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return (0.0, 0.0);
    }
    (sxy / sxx, sxy * sxy / (sxx * syy))
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample autocorrelation at `lag`; `None` for constant input.
pub fn autocorrelation(xs: &[f64], lag: usize) -> Option<f64> {
    if xs.len() <= lag + 1 {
        return None;
    }
    let m = mean(xs);
    let var: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    if var == 0.0 {
        return None;
    }
    let cov: f64 = xs.windows(lag + 1).map(|w| (w[0] - m) * (w[lag] - m)).sum();
    Some(cov / var)
}

/// Pearson correlation of paired samples; `None` if either is constant.
pub fn correlation(a: &[f64], b: &[f64]) -> Option<f64> {
    let (ma, mb) = (mean(a), mean(b));
    let saa: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let sbb: f64 = b.iter().map(|x| (x - mb).powi(2)).sum();
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    let sab: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    Some(sab / (saa * sbb).sqrt())
}

/// How a check's value is judged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "threshold")]
pub enum Criterion {
    /// Value is a p-value; pass when it exceeds the threshold.
    PValueAbove(f64),
    /// Value is a fit metric; pass when at least the threshold.
    AtLeast(f64),
    /// Value is a deviation; pass when strictly below the threshold.
    Below(f64),
}

impl Criterion {
    pub fn passes(&self, value: f64) -> bool {
        match *self {
            Criterion::PValueAbove(t) => value > t,
            Criterion::AtLeast(t) => value >= t,
            Criterion::Below(t) => value < t,
        }
    }

    pub fn threshold(&self) -> f64 {
        match *self {
            Criterion::PValueAbove(t) | Criterion::AtLeast(t) | Criterion::Below(t) => t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub statistic: f64,
    pub value: f64,
    pub criterion: Criterion,
    pub pass: bool,
    pub n: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    pub fn new(name: impl Into<String>, statistic: f64, value: f64, criterion: Criterion, n: usize, seed: u64) -> Self {
        Check {
            name: name.into(),
            statistic,
            value,
            criterion,
            pass: criterion.passes(value),
            n,
            seed,
            note: None,
        }
    }

    pub fn ks(name: impl Into<String>, ks: KsResult, alpha: f64, seed: u64) -> Self {
        Check::new(name, ks.statistic, ks.p_value, Criterion::PValueAbove(alpha), ks.n, seed)
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    /// A check that could not be evaluated; it always fails.
    pub fn degenerate(name: impl Into<String>, n: usize, seed: u64, note: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            statistic: f64::NAN,
            value: f64::NAN,
            criterion: Criterion::AtLeast(f64::INFINITY),
            pass: false,
            n,
            seed,
            note: Some(note.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub alpha: f64,
    pub checks: Vec<Check>,
}

impl VerificationReport {
    pub fn new(alpha: f64) -> Self {
        VerificationReport {
            alpha,
            checks: Vec::new(),
        }
    }

    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn extend(&mut self, checks: impl IntoIterator<Item = Check>) {
        self.checks.extend(checks);
    }

    /// Divides the family-wise level among the p-value checks and re-judges
    /// them.
    pub fn apply_bonferroni(&mut self) {
        let m = self
            .checks
            .iter()
            .filter(|c| matches!(c.criterion, Criterion::PValueAbove(_)))
            .count()
            .max(1);
        let level = self.alpha / m as f64;
        for c in &mut self.checks {
            if let Criterion::PValueAbove(_) = c.criterion {
                c.criterion = Criterion::PValueAbove(level);
                c.pass = c.criterion.passes(c.value);
            }
        }
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(4).max(5);
        writeln!(
            f,
            "{:<width$}  {:>12}  {:>12}  {:>14}  {:>9}  {:>20}  result",
            "check", "statistic", "value", "threshold", "n", "seed"
        )?;
        for c in &self.checks {
            let op = match c.criterion {
                Criterion::PValueAbove(_) => "p >",
                Criterion::AtLeast(_) => ">=",
                Criterion::Below(_) => "<",
            };
            write!(
                f,
                "{:<width$}  {:>12.6}  {:>12.6}  {:>4} {:>9.3e}  {:>9}  {:>20}  {}",
                c.name,
                c.statistic,
                c.value,
                op,
                c.criterion.threshold(),
                c.n,
                c.seed,
                if c.pass { "PASS" } else { "FAIL" }
            )?;
            if let Some(note) = &c.note {
                write!(f, "  ({note})")?;
            }
            writeln!(f)?;
        }
        write!(
            f,
            "overall: {}",
            if self.all_pass() { "PASS" } else { "FAIL" }
        )
    }
}

/// Lag 1–3 autocorrelations against 3/√n bands and a permutation test of
/// the lag-1 statistic with 10³ shuffles.
pub fn independence_tests<R: Rng + ?Sized>(
    name: &str,
    gaps: &[f64],
    alpha: f64,
    seed: u64,
    rng: &mut R,
) -> Result<Vec<Check>, VerifyError> {
    require(gaps.len(), 10)?;
    let n = gaps.len();
    let band = 3.0 / (n as f64).sqrt();
    let mut rows = Vec::new();
    for lag in 1..=3 {
        let label = format!("{name} lag-{lag} autocorrelation");
        match autocorrelation(gaps, lag) {
            Some(rho) => rows.push(Check::new(label, rho, rho.abs(), Criterion::Below(band), n, seed)),
            None => rows.push(Check::degenerate(label, n, seed, "degenerate: constant sample")),
        }
    }
    let label = format!("{name} permutation test");
    match autocorrelation(gaps, 1) {
        Some(observed) => {
            let shuffles = 1000;
            let mut work = gaps.to_vec();
            let mut extreme = 0;
            for _ in 0..shuffles {
                work.shuffle(rng);
                let r = autocorrelation(&work, 1).unwrap_or(0.0);
                if r.abs() >= observed.abs() {
                    extreme += 1;
                }
            }
            let p = (1.0 + extreme as f64) / (1.0 + shuffles as f64);
            rows.push(Check::new(label, observed, p, Criterion::PValueAbove(alpha), n, seed));
        }
        None => rows.push(Check::degenerate(label, n, seed, "degenerate: constant sample")),
    }
    Ok(rows)
}

/// Gaps from a sticky two-state chain alternating between Exp(1) and
/// Exp(5) holding laws; strongly autocorrelated by construction.
pub fn markov_modulated_gaps<R: Rng + ?Sized>(n: usize, stay: f64, rng: &mut R) -> Vec<f64> {
    let mut state = 0;
    (0..n)
        .map(|_| {
            let u: f64 = StandardUniform.sample(rng);
            if u >= stay {
                state = 1 - state;
            }
            let e: f64 = Exp1.sample(rng);
            if state == 0 {
                e
            } else {
                e / 5.0
            }
        })
        .collect()
}

/// CDF of the first point after a fixed origin in the stationary renewal
/// process, ∫₀ᵗ Pr(T > s) ds / E[T], evaluated at sorted points by
/// accumulating quadratures between neighbours.
pub fn stationary_first_point_cdf(jump: &JumpDistribution, sorted_points: &[f64]) -> Result<Vec<f64>, VerifyError> {
    let mean = jump.mean()?;
    let mut out = Vec::with_capacity(sorted_points.len());
    let mut acc = 0.0;
    let mut last = 0.0;
    let mut breaks: Vec<f64> = jump.atoms().iter().map(|a| a.location).collect();
    for c in jump.components() {
        breaks.push(c.family.lower_end());
        breaks.push(c.family.upper_end());
    }
    breaks.retain(|b| b.is_finite() && *b > 0.0);
    breaks.sort_by(f64::total_cmp);
    for &x in sorted_points {
        let x = x.max(0.0);
        if x > last {
            let mut a = last;
            for &b in breaks.iter().filter(|&&b| b > last && b < x) {
                acc += quad::integrate(|s| jump.survival(s), a, b).map_err(DistError::from)?;
                a = b;
            }
            acc += quad::integrate(|s| jump.survival(s), a, x).map_err(DistError::from)?;
            last = x;
        }
        out.push((acc / mean).min(1.0));
    }
    Ok(out)
}

/// Samples the first point S₀ after the origin from the stationary renewal
/// sampler and tests it against the integrated-survival CDF.
pub fn palm_check<R: Rng + ?Sized>(
    jump: &JumpDistribution,
    n: usize,
    alpha: f64,
    seed: u64,
    rng: &mut R,
) -> Result<Check, VerifyError> {
    let samples = (0..n)
        .map(|_| sample_forward_recurrence(jump, rng))
        .collect::<Result<Vec<_>, _>>()?;
    let ks = ks_against_sorted_cdf(&samples, |s| stationary_first_point_cdf(jump, s))?;
    Ok(Check::ks("stationary first point vs integrated survival", ks, alpha, seed))
}

/// One-sample KS where the CDF is evaluated in bulk on the sorted sample.
pub fn ks_against_sorted_cdf<F>(samples: &[f64], cdf_sorted: F) -> Result<KsResult, VerifyError>
where
    F: FnOnce(&[f64]) -> Result<Vec<f64>, VerifyError>,
{
    require(samples.len(), 10)?;
    let s = sorted(samples);
    let values = cdf_sorted(&s)?;
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, f) in values.iter().enumerate() {
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    Ok(KsResult {
        statistic: d,
        p_value: ks_p_value(d, n),
        n: s.len(),
    })
}

/// Dvoretzky–Kiefer–Wolfowitz half-width at confidence 1 − `alpha`.
pub fn dkw_band(n: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}
