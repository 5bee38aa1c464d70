//! Run specification files (TOML). Every section is optional; each
//! subcommand checks for the sections it needs.

use std::path::Path;

use anyhow::{bail, Context, Result};
use rfactor::distributions::JumpDistribution;
use rfactor::marking::{CarrierPolicy, JumpMarkLaw};
use rfactor::pipeline::ChainOptions;
use rfactor::regen::{FoldMode, MarkovColoredSpec};
use rfactor::regularize::{HitSet, Interval};
use serde::Deserialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub jump: Option<JumpDistribution>,
    pub factor: Option<FactorSection>,
    pub selection: Option<SelectionSection>,
    pub regularize: Option<RegularizeSection>,
    pub marking: Option<MarkingSection>,
    pub markov: Option<MarkovColoredSpec>,
    pub brownian: Option<BrownianSection>,
    pub verify: Option<VerifySection>,
    pub certify: Option<ChainOptions>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorSection {
    #[serde(default)]
    pub queries: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionSection {
    /// Intensity of the colored Poisson process.
    pub intensity: f64,
    /// Probability that a point is red.
    pub red_fraction: f64,
    /// Length of the empty window required to the left of a selected point.
    pub delay: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizeSection {
    /// Hit set; when absent the full regularization chain is run instead.
    pub set: Option<Vec<Interval>>,
    #[serde(default)]
    pub excluded_atoms: Vec<f64>,
    #[serde(default = "one")]
    pub k: usize,
    #[serde(default)]
    pub force_nonsingular_stage: bool,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkingSection {
    pub set: Vec<Interval>,
    pub marks: JumpMarkLaw,
    #[serde(default)]
    pub policy: CarrierPolicy,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrownianSection {
    pub h: f64,
    pub mode: FoldMode,
    pub dt: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

pub fn default_alpha() -> f64 {
    0.01
}

pub struct LoadedSpec {
    pub spec: RunSpec,
    pub sha256: String,
}

pub fn load(path: &Path) -> Result<LoadedSpec> {
    let bytes = std::fs::read(path).with_context(|| format!("reading spec file {}", path.display()))?;
    let text = std::str::from_utf8(&bytes).with_context(|| format!("{} is not UTF-8", path.display()))?;
    let spec: RunSpec = toml::from_str(text).with_context(|| format!("invalid spec file {}", path.display()))?;
    if let Some(m) = &spec.markov {
        m.validate().context("invalid [markov] section")?;
    }
    Ok(LoadedSpec {
        spec,
        sha256: hex_digest(&bytes),
    })
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex_digest(&bytes))
}

pub fn hit_set(intervals: &[Interval], excluded_atoms: &[f64]) -> Result<HitSet> {
    HitSet::new(intervals.to_vec(), excluded_atoms.to_vec()).context("invalid hit set")
}

impl RunSpec {
    pub fn jump(&self) -> Result<&JumpDistribution> {
        match &self.jump {
            Some(j) => Ok(j),
            None => bail!("the spec file needs a [jump] section for this subcommand"),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.verify.as_ref().map_or(default_alpha(), |v| v.alpha)
    }
}
