//! Jump distributions: finite atom mixtures plus an absolutely continuous
//! part built from exponential, gamma, uniform and tabulated densities.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma as GammaSampler, StandardUniform};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};
use thiserror::Error;

use crate::quad::{self, QuadError};

/// Mass tolerance used when validating that a distribution is normalized.
pub const MASS_TOL: f64 = 1e-9;
/// Survival values at or below this are treated as zero by `hazard`.
pub const SURVIVAL_FLOOR: f64 = 1e-300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistError {
    #[error("invalid distribution: {0}")]
    Invalid(String),
    #[error("operation needs a purely absolutely continuous law but the law has atoms")]
    AtomicComponent,
    #[error("survival at t = {t} is below the underflow threshold")]
    ZeroSurvival { t: f64 },
    #[error("quadrature failed: {0}")]
    QuadratureFailure(#[from] QuadError),
    #[error("the law has no exponential moments (mgf radius is zero)")]
    NoExponentialTail,
    #[error("p = {p} is outside (0, {limit})")]
    RateOutOfRange { p: f64, limit: f64 },
    #[error("hazard supremum {sup} exceeds the supported bound")]
    HazardUnbounded { sup: f64 },
    #[error("hazard tail infimum {inf} is too small")]
    HazardVanishing { inf: f64 },
    #[error("the law has infinite mean")]
    NonIntegrable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub location: f64,
    pub mass: f64,
}

/// Piecewise-linear density on knots, optionally continued by an
/// exponential tail beyond the last knot. Stored unnormalized as given and
/// normalized internally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TableSpec", into = "TableSpec")]
pub struct DensityTable {
    spec: TableSpec,
    t: Vec<f64>,
    d: Vec<f64>,
    /// Mass strictly before knot i.
    prefix: Vec<f64>,
    /// Mass after knot i, including the tail.
    suffix: Vec<f64>,
    /// ∫ t·f(t) dt after knot i, including the tail.
    suffix_moment: Vec<f64>,
    tail_mass: f64,
    mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSpec {
    pub knots: Vec<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_rate: Option<f64>,
}

impl From<DensityTable> for TableSpec {
    fn from(table: DensityTable) -> Self {
        table.spec
    }
}

impl TryFrom<TableSpec> for DensityTable {
    type Error = DistError;

    fn try_from(spec: TableSpec) -> Result<Self, DistError> {
        DensityTable::new(spec.knots, spec.tail_rate)
    }
}

impl DensityTable {
    pub fn new(knots: Vec<(f64, f64)>, tail_rate: Option<f64>) -> Result<Self, DistError> {
        let invalid = |m: &str| Err(DistError::Invalid(format!("density table: {m}")));
        if knots.is_empty() || (knots.len() < 2 && tail_rate.is_none()) {
            return invalid("needs two knots, or one knot and a tail");
        }
        if let Some(r) = tail_rate {
            if !(r > 0.0 && r.is_finite()) {
                return invalid("tail rate must be positive");
            }
        }
        for w in knots.windows(2) {
            if !(w[1].0 > w[0].0) {
                return invalid("knot locations must be strictly increasing");
            }
        }
        for &(t, d) in &knots {
            if !(t >= 0.0 && t.is_finite() && d >= 0.0 && d.is_finite()) {
                return invalid("knots need finite nonnegative locations and densities");
            }
        }
        let spec = TableSpec {
            knots: knots.clone(),
            tail_rate,
        };
        let t: Vec<f64> = knots.iter().map(|k| k.0).collect();
        let raw: Vec<f64> = knots.iter().map(|k| k.1).collect();
        let n = t.len();
        let seg: Vec<f64> = (0..n - 1)
            .map(|i| 0.5 * (raw[i] + raw[i + 1]) * (t[i + 1] - t[i]))
            .collect();
        let tail = tail_rate.map_or(0.0, |r| raw[n - 1] / r);
        let total: f64 = seg.iter().sum::<f64>() + tail;
        if !(total > 0.0 && total.is_finite()) {
            return invalid("density integrates to zero");
        }
        let d: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let seg: Vec<f64> = seg.iter().map(|v| v / total).collect();
        let tail_mass = tail / total;
        let mut prefix = vec![0.0; n];
        for i in 1..n {
            prefix[i] = prefix[i - 1] + seg[i - 1];
        }
        let mut suffix = vec![0.0; n];
        suffix[n - 1] = tail_mass;
        for i in (0..n - 1).rev() {
            suffix[i] = suffix[i + 1] + seg[i];
        }
        let mut suffix_moment = vec![0.0; n];
        if let Some(r) = tail_rate {
            suffix_moment[n - 1] = d[n - 1] * (t[n - 1] / r + 1.0 / (r * r));
        }
        for i in (0..n - 1).rev() {
            suffix_moment[i] = suffix_moment[i + 1] + linear_moment(t[i], t[i + 1], d[i], d[i + 1]);
        }
        let mean = suffix_moment[0];
        Ok(DensityTable {
            spec,
            t,
            d,
            prefix,
            suffix,
            suffix_moment,
            tail_mass,
            mean,
        })
    }

    pub fn spec(&self) -> &TableSpec {
        &self.spec
    }

    pub fn tail_rate(&self) -> Option<f64> {
        self.spec.tail_rate
    }

    /// Knot locations and normalized densities.
    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.t.iter().copied().zip(self.d.iter().copied())
    }

    fn last(&self) -> usize {
        self.t.len() - 1
    }

    fn segment(&self, x: f64) -> usize {
        self.t.partition_point(|&k| k <= x) - 1
    }

    pub fn density(&self, x: f64) -> f64 {
        let n = self.last();
        if x < self.t[0] {
            return 0.0;
        }
        if x >= self.t[n] {
            return match self.spec.tail_rate {
                Some(r) => self.d[n] * (-r * (x - self.t[n])).exp(),
                None if x == self.t[n] => self.d[n],
                None => 0.0,
            };
        }
        let j = self.segment(x);
        let w = (x - self.t[j]) / (self.t[j + 1] - self.t[j]);
        self.d[j] + w * (self.d[j + 1] - self.d[j])
    }

    pub fn survival(&self, x: f64) -> f64 {
        let n = self.last();
        if x < self.t[0] {
            return 1.0;
        }
        if x >= self.t[n] {
            return match self.spec.tail_rate {
                Some(r) => self.tail_mass * (-r * (x - self.t[n])).exp(),
                None => 0.0,
            };
        }
        let j = self.segment(x);
        let within = 0.5 * (self.density(x) + self.d[j + 1]) * (self.t[j + 1] - x);
        (within + self.suffix[j + 1]).min(1.0)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let n = self.last();
        if x < self.t[0] {
            return 0.0;
        }
        if x >= self.t[n] {
            return 1.0 - self.survival(x);
        }
        let j = self.segment(x);
        let within = 0.5 * (self.d[j] + self.density(x)) * (x - self.t[j]);
        (self.prefix[j] + within).min(1.0)
    }

    /// Generalized inverse of the CDF.
    pub fn quantile(&self, u: f64) -> f64 {
        let n = self.last();
        if u <= 0.0 {
            return self.t[0];
        }
        if u < self.prefix[n] {
            let j = self.prefix.partition_point(|&p| p <= u) - 1;
            let target = u - self.prefix[j];
            let h = self.t[j + 1] - self.t[j];
            let slope = (self.d[j + 1] - self.d[j]) / h;
            let disc = (self.d[j] * self.d[j] + 2.0 * slope * target).max(0.0);
            let denom = self.d[j] + disc.sqrt();
            let x = if denom > 0.0 { 2.0 * target / denom } else { 0.0 };
            return self.t[j] + x.clamp(0.0, h);
        }
        match self.spec.tail_rate {
            Some(r) => {
                let rest = (u - self.prefix[n]) / self.tail_mass;
                if rest >= 1.0 {
                    f64::INFINITY
                } else {
                    self.t[n] - (-rest).ln_1p() / r
                }
            }
            None => self.t[n],
        }
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// ∫_x^∞ t·f(t) dt.
    pub fn upper_moment(&self, x: f64) -> f64 {
        let n = self.last();
        if x < self.t[0] {
            return self.mean;
        }
        if x >= self.t[n] {
            return match self.spec.tail_rate {
                Some(r) => self.density(x) * (x / r + 1.0 / (r * r)),
                None => 0.0,
            };
        }
        let j = self.segment(x);
        linear_moment(x, self.t[j + 1], self.density(x), self.d[j + 1]) + self.suffix_moment[j + 1]
    }

    pub fn lower_end(&self) -> f64 {
        self.t[0]
    }

    /// Supremum of the support (infinite with a tail).
    pub fn upper_end(&self) -> f64 {
        if self.spec.tail_rate.is_some() {
            f64::INFINITY
        } else {
            self.t[self.last()]
        }
    }

    /// E[e^{γT}; a < T < b] under the normalized table.
    pub fn partial_mgf(&self, a: f64, b: f64, gamma: f64) -> f64 {
        let n = self.last();
        let mut total = 0.0;
        for j in 0..n {
            let c = a.max(self.t[j]);
            let e = b.min(self.t[j + 1]);
            if e <= c {
                continue;
            }
            let w = e - c;
            let slope = (self.d[j + 1] - self.d[j]) / (self.t[j + 1] - self.t[j]);
            let dc = self.density(c);
            total += (gamma * c).exp() * (dc * w * phi1(gamma * w) + slope * w * w * phi2(gamma * w));
        }
        if let Some(r) = self.spec.tail_rate {
            let c = a.max(self.t[n]);
            if b > c {
                let dc = self.d[n] * (-r * (c - self.t[n])).exp();
                let g = gamma - r;
                if b.is_infinite() {
                    if g >= 0.0 {
                        return f64::INFINITY;
                    }
                    total += dc * (gamma * c).exp() / -g;
                } else {
                    let w = b - c;
                    total += dc * (gamma * c).exp() * w * phi1(g * w);
                }
            }
        }
        total
    }
}

/// ∫_a^b t·f(t) dt for f linear from fa at a to fb at b.
fn linear_moment(a: f64, b: f64, fa: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (a * (2.0 * fa + fb) + b * (fa + 2.0 * fb))
}

/// (e^z − 1)/z, continuous at 0.
pub(crate) fn phi1(z: f64) -> f64 {
    if z == 0.0 {
        1.0
    } else {
        z.exp_m1() / z
    }
}

/// (e^z(z − 1) + 1)/z², continuous at 0 with value ½.
pub(crate) fn phi2(z: f64) -> f64 {
    if z.abs() < 1e-2 {
        let mut term = 1.0;
        let mut sum = 0.0;
        for k in 0..8 {
            if k > 0 {
                term *= z / k as f64;
            }
            sum += term / (k as f64 + 2.0);
        }
        sum
    } else {
        (z.exp() * (z - 1.0) + 1.0) / (z * z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Family {
    Exponential { rate: f64 },
    Gamma { shape: f64, rate: f64 },
    Uniform { lo: f64, hi: f64 },
    Table(DensityTable),
}

fn reg_lower(shape: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x.is_infinite() {
        1.0
    } else {
        gamma_lr(shape, x)
    }
}

fn reg_upper(shape: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x.is_infinite() {
        0.0
    } else {
        gamma_ur(shape, x)
    }
}

impl Family {
    fn validate(&self) -> Result<(), DistError> {
        let ok = match *self {
            Family::Exponential { rate } => rate > 0.0 && rate.is_finite(),
            Family::Gamma { shape, rate } => {
                shape > 0.0 && shape.is_finite() && rate > 0.0 && rate.is_finite()
            }
            Family::Uniform { lo, hi } => lo >= 0.0 && hi > lo && hi.is_finite(),
            Family::Table(_) => true,
        };
        if ok {
            Ok(())
        } else {
            Err(DistError::Invalid(format!("bad parameters in {self:?}")))
        }
    }

    pub fn density(&self, t: f64) -> f64 {
        match self {
            Family::Exponential { rate } => {
                if t < 0.0 {
                    0.0
                } else {
                    rate * (-rate * t).exp()
                }
            }
            Family::Gamma { shape, rate } => {
                if t < 0.0 {
                    0.0
                } else if t == 0.0 {
                    if *shape < 1.0 {
                        f64::INFINITY
                    } else if *shape == 1.0 {
                        *rate
                    } else {
                        0.0
                    }
                } else {
                    (shape * rate.ln() + (shape - 1.0) * t.ln() - rate * t - ln_gamma(*shape)).exp()
                }
            }
            Family::Uniform { lo, hi } => {
                if t >= *lo && t < *hi {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            Family::Table(table) => table.density(t),
        }
    }

    pub fn survival(&self, t: f64) -> f64 {
        match self {
            Family::Exponential { rate } => {
                if t <= 0.0 {
                    1.0
                } else {
                    (-rate * t).exp()
                }
            }
            Family::Gamma { shape, rate } => reg_upper(*shape, rate * t),
            Family::Uniform { lo, hi } => ((hi - t) / (hi - lo)).clamp(0.0, 1.0),
            Family::Table(table) => table.survival(t),
        }
    }

    pub fn cdf(&self, t: f64) -> f64 {
        match self {
            Family::Exponential { rate } => {
                if t <= 0.0 {
                    0.0
                } else {
                    -(-rate * t).exp_m1()
                }
            }
            Family::Gamma { shape, rate } => reg_lower(*shape, rate * t),
            Family::Uniform { lo, hi } => ((t - lo) / (hi - lo)).clamp(0.0, 1.0),
            Family::Table(table) => table.cdf(t),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Family::Exponential { rate } => 1.0 / rate,
            Family::Gamma { shape, rate } => shape / rate,
            Family::Uniform { lo, hi } => 0.5 * (lo + hi),
            Family::Table(table) => table.mean(),
        }
    }

    /// ∫_t^∞ s·f(s) ds.
    pub fn upper_moment(&self, t: f64) -> f64 {
        match self {
            Family::Exponential { rate } => {
                let t = t.max(0.0);
                (t + 1.0 / rate) * (-rate * t).exp()
            }
            Family::Gamma { shape, rate } => shape / rate * reg_upper(shape + 1.0, rate * t),
            Family::Uniform { lo, hi } => {
                let a = t.clamp(*lo, *hi);
                0.5 * (hi * hi - a * a) / (hi - lo)
            }
            Family::Table(table) => table.upper_moment(t),
        }
    }

    pub fn mgf_radius(&self) -> f64 {
        match self {
            Family::Exponential { rate } | Family::Gamma { rate, .. } => *rate,
            Family::Uniform { .. } => f64::INFINITY,
            Family::Table(table) => table.tail_rate().unwrap_or(f64::INFINITY),
        }
    }

    pub fn lower_end(&self) -> f64 {
        match self {
            Family::Exponential { .. } | Family::Gamma { .. } => 0.0,
            Family::Uniform { lo, .. } => *lo,
            Family::Table(table) => table.lower_end(),
        }
    }

    pub fn upper_end(&self) -> f64 {
        match self {
            Family::Exponential { .. } | Family::Gamma { .. } => f64::INFINITY,
            Family::Uniform { hi, .. } => *hi,
            Family::Table(table) => table.upper_end(),
        }
    }

    /// Limit of the hazard rate as t → ∞, when the support is unbounded.
    pub fn hazard_limit(&self) -> Option<f64> {
        match self {
            Family::Exponential { rate } | Family::Gamma { rate, .. } => Some(*rate),
            Family::Uniform { .. } => None,
            Family::Table(table) => table.tail_rate(),
        }
    }

    /// E[e^{γT}; a < T < b] for this component alone.
    pub fn partial_mgf(&self, a: f64, b: f64, gamma: f64) -> Result<f64, DistError> {
        let a = a.max(self.lower_end());
        let b = b.min(self.upper_end());
        if b <= a {
            return Ok(0.0);
        }
        match self {
            Family::Exponential { rate } => {
                let g = gamma - rate;
                let head = rate * (g * a).exp();
                if b.is_infinite() {
                    if g >= 0.0 {
                        Ok(f64::INFINITY)
                    } else {
                        Ok(head / -g)
                    }
                } else {
                    let w = b - a;
                    Ok(head * w * phi1(g * w))
                }
            }
            Family::Gamma { shape, rate } => {
                if gamma < *rate {
                    let tilted = rate - gamma;
                    let factor = (rate / tilted).powf(*shape);
                    let (x, y) = (tilted * a, tilted * b);
                    let inner = if x > *shape {
                        reg_upper(*shape, x) - reg_upper(*shape, y)
                    } else {
                        reg_lower(*shape, y) - reg_lower(*shape, x)
                    };
                    Ok(factor * inner.max(0.0))
                } else if b.is_infinite() {
                    Ok(f64::INFINITY)
                } else {
                    Ok(quad::integrate(|t| self.density(t) * (gamma * t).exp(), a, b)?)
                }
            }
            Family::Uniform { lo, hi } => {
                let w = b - a;
                Ok((gamma * a).exp() * w * phi1(gamma * w) / (hi - lo))
            }
            Family::Table(table) => Ok(table.partial_mgf(a, b, gamma)),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Family::Exponential { rate } => {
                let e: f64 = Exp1.sample(rng);
                e / rate
            }
            Family::Gamma { shape, rate } => GammaSampler::new(*shape, 1.0 / rate)
                .expect("validated gamma parameters")
                .sample(rng),
            Family::Uniform { lo, hi } => {
                let u: f64 = StandardUniform.sample(rng);
                lo + u * (hi - lo)
            }
            Family::Table(table) => {
                let u: f64 = StandardUniform.sample(rng);
                table.quantile(u)
            }
        }
    }

    /// Draw from the law with density ∝ t·f(t).
    pub fn sample_size_biased<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Family::Exponential { rate } => Family::Gamma {
                shape: 2.0,
                rate: *rate,
            }
            .sample(rng),
            Family::Gamma { shape, rate } => Family::Gamma {
                shape: shape + 1.0,
                rate: *rate,
            }
            .sample(rng),
            Family::Uniform { lo, hi } => {
                let u: f64 = StandardUniform.sample(rng);
                (lo * lo + u * (hi * hi - lo * lo)).sqrt()
            }
            Family::Table(table) => {
                let cap = table.quantile(1.0 - 1e-12);
                loop {
                    let t = self.sample(rng);
                    let v: f64 = StandardUniform.sample(rng);
                    if t <= cap && v * cap < t {
                        return t;
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    #[serde(flatten)]
    pub family: Family,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct JumpSpec {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    atoms: Vec<Atom>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    continuous: Vec<Component>,
}

/// A positive random variable: finitely many atoms plus a weighted mixture
/// of absolutely continuous components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "JumpSpec", into = "JumpSpec")]
pub struct JumpDistribution {
    atoms: Vec<Atom>,
    continuous: Vec<Component>,
}

impl From<JumpDistribution> for JumpSpec {
    fn from(d: JumpDistribution) -> Self {
        JumpSpec {
            atoms: d.atoms,
            continuous: d.continuous,
        }
    }
}

impl TryFrom<JumpSpec> for JumpDistribution {
    type Error = DistError;

    fn try_from(spec: JumpSpec) -> Result<Self, DistError> {
        JumpDistribution::new(spec.atoms, spec.continuous)
    }
}

/// Output of [`JumpDistribution::hazard_bounds`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HazardBounds {
    pub t0: f64,
    pub lambda_lo: f64,
    pub lambda_hi: f64,
}

const HAZARD_GRID: usize = 10_000;
const HAZARD_CHECK_GRID: usize = 100_000;
const HAZARD_CAP: f64 = 1e6;

impl JumpDistribution {
    pub fn new(atoms: Vec<Atom>, continuous: Vec<Component>) -> Result<Self, DistError> {
        let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
        let mut sorted = atoms;
        sorted.sort_by(|a, b| a.location.total_cmp(&b.location));
        for atom in sorted {
            if !(atom.location > 0.0 && atom.location.is_finite()) {
                return Err(DistError::Invalid(format!(
                    "atom location {} must be positive and finite",
                    atom.location
                )));
            }
            if !(atom.mass > 0.0 && atom.mass <= 1.0) {
                return Err(DistError::Invalid(format!("atom mass {} out of (0,1]", atom.mass)));
            }
            match merged.last_mut() {
                Some(last) if last.location == atom.location => last.mass += atom.mass,
                _ => merged.push(atom),
            }
        }
        for c in &continuous {
            if !(c.weight > 0.0 && c.weight <= 1.0 + MASS_TOL) {
                return Err(DistError::Invalid(format!("component weight {} out of (0,1]", c.weight)));
            }
            c.family.validate()?;
        }
        let total: f64 =
            merged.iter().map(|a| a.mass).sum::<f64>() + continuous.iter().map(|c| c.weight).sum::<f64>();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(DistError::Invalid(format!("total mass {total} differs from 1")));
        }
        Ok(JumpDistribution {
            atoms: merged,
            continuous,
        })
    }

    fn single(family: Family) -> Result<Self, DistError> {
        Self::new(vec![], vec![Component { weight: 1.0, family }])
    }

    pub fn exponential(rate: f64) -> Result<Self, DistError> {
        Self::single(Family::Exponential { rate })
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<Self, DistError> {
        Self::single(Family::Gamma { shape, rate })
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self, DistError> {
        Self::single(Family::Uniform { lo, hi })
    }

    pub fn table(table: DensityTable) -> Result<Self, DistError> {
        Self::single(Family::Table(table))
    }

    pub fn point_mass(location: f64) -> Result<Self, DistError> {
        Self::new(vec![Atom { location, mass: 1.0 }], vec![])
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn components(&self) -> &[Component] {
        &self.continuous
    }

    pub fn ac_mass(&self) -> f64 {
        self.continuous.iter().map(|c| c.weight).sum()
    }

    pub fn atom_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }

    pub fn is_absolutely_continuous(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Density of the absolutely continuous part (weighted by its mass).
    pub fn ac_density(&self, t: f64) -> f64 {
        self.continuous.iter().map(|c| c.weight * c.family.density(t)).sum()
    }

    /// Pr(T > t) restricted to the absolutely continuous part.
    pub fn ac_survival(&self, t: f64) -> f64 {
        self.continuous.iter().map(|c| c.weight * c.family.survival(t)).sum()
    }

    /// Pr(T ≤ t) restricted to the absolutely continuous part.
    pub fn ac_cdf(&self, t: f64) -> f64 {
        self.continuous.iter().map(|c| c.weight * c.family.cdf(t)).sum()
    }

    /// ∫_t^∞ s dF(s) over the absolutely continuous part.
    pub fn ac_upper_moment(&self, t: f64) -> f64 {
        self.continuous.iter().map(|c| c.weight * c.family.upper_moment(t)).sum()
    }

    pub fn survival(&self, t: f64) -> f64 {
        let atoms: f64 = self.atoms.iter().filter(|a| a.location > t).map(|a| a.mass).sum();
        (atoms + self.ac_survival(t)).clamp(0.0, 1.0)
    }

    pub fn cdf(&self, t: f64) -> f64 {
        let atoms: f64 = self.atoms.iter().filter(|a| a.location <= t).map(|a| a.mass).sum();
        (atoms + self.ac_cdf(t)).clamp(0.0, 1.0)
    }

    /// Pr(lo < T < hi) for the absolutely continuous part.
    pub fn ac_mass_between(&self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        self.continuous
            .iter()
            .map(|c| {
                let f = &c.family;
                let v = if lo > f.mean() {
                    f.survival(lo) - f.survival(hi)
                } else {
                    f.cdf(hi) - f.cdf(lo)
                };
                c.weight * v.max(0.0)
            })
            .sum()
    }

    pub fn hazard(&self, t: f64) -> Result<f64, DistError> {
        if !self.atoms.is_empty() {
            return Err(DistError::AtomicComponent);
        }
        let s = self.survival(t);
        if s <= SURVIVAL_FLOOR {
            return Err(DistError::ZeroSurvival { t });
        }
        Ok(self.ac_density(t) / s)
    }

    pub fn mean(&self) -> Result<f64, DistError> {
        let m = self.atoms.iter().map(|a| a.location * a.mass).sum::<f64>()
            + self.continuous.iter().map(|c| c.weight * c.family.mean()).sum::<f64>();
        if m.is_finite() {
            Ok(m)
        } else {
            Err(DistError::NonIntegrable)
        }
    }

    pub fn mgf_radius(&self) -> f64 {
        self.continuous
            .iter()
            .map(|c| c.family.mgf_radius())
            .fold(f64::INFINITY, f64::min)
    }

    /// E[e^{γT}; lo < T < hi] over the absolutely continuous part only.
    pub fn ac_partial_mgf(&self, lo: f64, hi: f64, gamma: f64) -> Result<f64, DistError> {
        let mut total = 0.0;
        for c in &self.continuous {
            let v = c.family.partial_mgf(lo, hi, gamma)?;
            if v.is_infinite() {
                return Ok(f64::INFINITY);
            }
            total += c.weight * v;
        }
        Ok(total)
    }

    pub fn mgf(&self, gamma: f64) -> Result<f64, DistError> {
        let ac = self.ac_partial_mgf(0.0, f64::INFINITY, gamma)?;
        let atoms: f64 = self.atoms.iter().map(|a| a.mass * (gamma * a.location).exp()).sum();
        Ok(ac + atoms)
    }

    /// sup over γ in (0, radius) of E[e^{γT}], as a monotone limit along a
    /// grid approaching the radius.
    pub fn sup_exp_moment(&self) -> Result<f64, DistError> {
        sup_along_radius(self.mgf_radius(), |g| self.mgf(g))
    }

    /// The unique b with (1 − p)·E[e^{bT}] = 1.
    pub fn solve_decay_rate(&self, p: f64) -> Result<f64, DistError> {
        let sup = self.sup_exp_moment()?;
        let limit = 1.0 - 1.0 / sup;
        if !(p > 0.0 && p < limit) {
            return Err(DistError::RateOutOfRange { p, limit });
        }
        let radius = self.mgf_radius();
        let excess = |b: f64| match self.mgf(b) {
            Ok(v) => (1.0 - p) * v - 1.0,
            Err(_) => f64::INFINITY,
        };
        let mut hi = if radius.is_finite() { radius } else { 1.0 };
        if radius.is_infinite() {
            while excess(hi) < 0.0 {
                hi *= 2.0;
            }
        }
        Ok(quad::bisect(excess, 0.0, hi))
    }

    /// inf{t : Pr(T > t) ≤ level}.
    pub fn survival_inverse(&self, level: f64) -> f64 {
        if level >= 1.0 {
            return 0.0;
        }
        let mut hi = self.mean().unwrap_or(1.0).max(1e-12);
        let mut guard = 0;
        while self.survival(hi) > level {
            hi *= 2.0;
            guard += 1;
            if guard > 2000 {
                return f64::INFINITY;
            }
        }
        quad::bisect(|t| level - self.survival(t), 0.0, hi)
    }

    /// Generalized inverse inf{t : Pr(T ≤ t) ≥ u}.
    pub fn quantile(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        if self.atoms.is_empty() && self.continuous.len() == 1 {
            match &self.continuous[0].family {
                Family::Exponential { rate } => return -(-u).ln_1p() / rate,
                Family::Uniform { lo, hi } => return lo + u * (hi - lo),
                Family::Table(table) => return table.quantile(u),
                Family::Gamma { .. } => {}
            }
        }
        let mut hi = self.mean().unwrap_or(1.0).max(1e-12);
        let mut guard = 0;
        while self.cdf(hi) < u {
            hi *= 2.0;
            guard += 1;
            if guard > 2000 {
                return f64::INFINITY;
            }
        }
        quad::bisect(|t| self.cdf(t) - u, 0.0, hi)
    }

    /// Limit of the hazard as t → ∞, known analytically for every family
    /// with unbounded support: the smallest tail rate among unbounded
    /// components.
    pub fn hazard_limit(&self) -> Option<f64> {
        let mut limit: Option<f64> = None;
        for c in &self.continuous {
            if c.family.upper_end().is_infinite() {
                let r = c.family.hazard_limit()?;
                limit = Some(limit.map_or(r, |l: f64| l.min(r)));
            }
        }
        limit
    }

    fn hazard_at_zero(&self) -> f64 {
        self.ac_density(0.0)
    }

    fn hazard_grid(&self, n: usize) -> Result<Vec<f64>, DistError> {
        let start = self.survival_inverse(1.0 - 1e-6);
        let end = self.survival_inverse(1e-9);
        if !(start > 0.0 && end > start && end.is_finite()) {
            return Err(DistError::Invalid(format!(
                "cannot build a hazard grid on ({start}, {end})"
            )));
        }
        let ratio = (end / start).ln();
        Ok((0..n)
            .map(|i| start * (ratio * i as f64 / (n - 1) as f64).exp())
            .collect())
    }

    /// Extracts (t0, λ, λ′) with hazard > λ beyond t0 and hazard < λ′ on
    /// [0, ∞), evaluated on a geometric grid.
    pub fn hazard_bounds(&self) -> Result<HazardBounds, DistError> {
        if !self.atoms.is_empty() {
            return Err(DistError::AtomicComponent);
        }
        let grid = self.hazard_grid(HAZARD_GRID)?;
        let hazards = grid
            .iter()
            .map(|&t| self.hazard(t))
            .collect::<Result<Vec<_>, _>>()?;
        let limit = self.hazard_limit();
        let mut sup = hazards.iter().copied().fold(self.hazard_at_zero(), f64::max);
        if let Some(l) = limit {
            sup = sup.max(l);
        }
        if !(sup.is_finite() && sup <= HAZARD_CAP) {
            return Err(DistError::HazardUnbounded { sup });
        }
        let tail_start = HAZARD_GRID - HAZARD_GRID / 10;
        let inf = match limit {
            Some(l) => l,
            None => hazards[tail_start..].iter().copied().fold(f64::INFINITY, f64::min),
        };
        if !(inf >= 1e-9) {
            return Err(DistError::HazardVanishing { inf });
        }
        let lambda_lo = 0.5 * inf;
        let lambda_hi = 1.05 * sup;
        let threshold = 1.05 * lambda_lo;
        let mut first = HAZARD_GRID;
        while first > 0 && hazards[first - 1] >= threshold {
            first -= 1;
        }
        let t0 = if first == 0 {
            let head_ok = self.hazard_at_zero() >= threshold
                && (1..16).all(|i| {
                    let t = grid[0] * i as f64 / 16.0;
                    self.hazard(t).is_ok_and(|h| h >= threshold)
                });
            if head_ok {
                0.0
            } else {
                grid[0]
            }
        } else if first == HAZARD_GRID {
            grid[HAZARD_GRID - 1]
        } else {
            grid[first]
        };
        Ok(HazardBounds {
            t0,
            lambda_lo,
            lambda_hi,
        })
    }

    /// Re-checks the defining inequalities of `bounds` on a finer grid.
    pub fn certify_hazard_bounds(&self, bounds: &HazardBounds) -> Result<bool, DistError> {
        let grid = self.hazard_grid(HAZARD_CHECK_GRID)?;
        for &t in &grid {
            let h = self.hazard(t)?;
            if h >= bounds.lambda_hi {
                return Ok(false);
            }
            if t >= bounds.t0 && h <= bounds.lambda_lo {
                return Ok(false);
            }
        }
        Ok(bounds.lambda_lo < bounds.lambda_hi)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let mut u: f64 = StandardUniform.sample(rng);
            let mut drawn = None;
            for a in &self.atoms {
                if u < a.mass {
                    drawn = Some(a.location);
                    break;
                }
                u -= a.mass;
            }
            let t = match drawn {
                Some(t) => t,
                None => self.pick_component(u).family.sample(rng),
            };
            if t > 0.0 {
                return t;
            }
        }
    }

    fn pick_component(&self, mut u: f64) -> &Component {
        for c in &self.continuous {
            if u < c.weight {
                return c;
            }
            u -= c.weight;
        }
        self.continuous.last().expect("mass check leaves a component")
    }

    /// Draw from the size-biased law t·dF(t)/E[T].
    pub fn sample_size_biased<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64, DistError> {
        let mean = self.mean()?;
        let u: f64 = StandardUniform.sample(rng);
        let mut rest = u * mean;
        for a in &self.atoms {
            let w = a.location * a.mass;
            if rest < w {
                return Ok(a.location);
            }
            rest -= w;
        }
        let mut chosen = self.continuous.last();
        for c in &self.continuous {
            let w = c.weight * c.family.mean();
            if rest < w {
                chosen = Some(c);
                break;
            }
            rest -= w;
        }
        match chosen {
            Some(c) => Ok(c.family.sample_size_biased(rng)),
            None => Ok(self.atoms.last().map_or(0.0, |a| a.location)),
        }
    }
}

/// Monotone limit of `f` along γ_j → radius from below; reports +∞ once the
/// values exceed 1e12 or diverge.
pub(crate) fn sup_along_radius<F>(radius: f64, f: F) -> Result<f64, DistError>
where
    F: Fn(f64) -> Result<f64, DistError>,
{
    if radius <= 0.0 {
        return Err(DistError::NoExponentialTail);
    }
    let mut last = 1.0;
    for j in 1..=60 {
        let g = if radius.is_finite() {
            radius * (1.0 - 0.5f64.powi(j))
        } else {
            2f64.powi(j)
        };
        let v = f(g)?;
        if !v.is_finite() || v > 1e12 {
            return Ok(f64::INFINITY);
        }
        if radius.is_finite() && (v - last).abs() <= 1e-12 * v {
            return Ok(v);
        }
        last = v;
    }
    Ok(last)
}
