use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use lbjump::model::ModelDescriptor;
use serde::de::DeserializeOwned;
use serde::Deserialize;

/// Fields every experiment config may carry.
#[derive(Clone, Debug, Default)]
pub struct Common {
    pub experiment: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

pub trait HasCommon {
    fn common(&self) -> Common;
}

macro_rules! has_common {
    ($($t:ty),*) => {$(
        impl HasCommon for $t {
            fn common(&self) -> Common {
                Common { experiment: self.experiment.clone(), seed: self.seed, out: self.out.clone() }
            }
        }
    )*};
}

has_common!(
    SimulateConfig,
    GapsConfig,
    HittingConfig,
    DiffLimitConfig,
    EstimatorsConfig,
    NonrevConfig,
    CheckBalancingConfig,
    AcceptConfig
);

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| lbjump::Error::ConfigInvalid(format!("{}: {e}", path.display())).into())
}

pub fn check_kind(common: &Common, expected: &str) -> Result<()> {
    match common.experiment.as_deref() {
        Some(kind) if kind != expected => Err(lbjump::Error::ConfigInvalid(format!(
            "config is for `{kind}`, not `{expected}`"
        ))
        .into()),
        _ => Ok(()),
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum StartPoint {
    Index(i64),
    Point(Vec<f64>),
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum HorizonSpec {
    Time(f64),
    Events(usize),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub experiment: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub model: ModelDescriptor,
    pub g: String,
    pub x0: StartPoint,
    pub horizon: HorizonSpec,
    #[serde(default = "one")]
    pub replicas: usize,
    pub max_events: Option<usize>,
    #[serde(default)]
    pub strict: bool,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum InstanceSource {
    Models(Vec<ModelDescriptor>),
    Random { count: u64, m_min: usize, m_max: usize },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapsConfig {
    pub experiment: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub instances: InstanceSource,
    pub g: Vec<String>,
    #[serde(default = "unit")]
    pub omega: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HittingConfig {
    pub experiment: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub a: f64,
    pub beta: f64,
    pub g: String,
    pub k: i64,
    pub starts: Vec<i64>,
    pub n_max: Option<i64>,
    #[serde(default)]
    pub replicas: usize,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    /// Largest KS distance allowed at the smallest sigma.
    pub ks_at_smallest_sigma: Option<f64>,
    #[serde(default)]
    pub strictly_decreasing: bool,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffLimitConfig {
    pub experiment: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub target: lbjump::model::ContinuousFamilyName,
    #[serde(default = "one")]
    pub dim: usize,
    pub g: String,
    pub sigmas: Vec<f64>,
    pub horizon: f64,
    pub samples: usize,
    pub dt: Option<f64>,
    pub x0: Vec<f64>,
    pub thresholds: Option<Thresholds>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorsConfig {
    pub experiment: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub model: ModelDescriptor,
    pub g: String,
    #[serde(default = "identity")]
    pub f: String,
    #[serde(default)]
    pub x0: usize,
    pub budget: usize,
    pub seeds: usize,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ChainSpec {
    DirectedCycle { pi: Vec<f64> },
    Random { m: usize, flip: f64, count: u64 },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonrevConfig {
    pub experiment: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub chain: ChainSpec,
    pub g: Vec<String>,
    #[serde(default)]
    pub times: Vec<f64>,
    #[serde(default)]
    pub start: usize,
    #[serde(default = "pairs")]
    pub adjoint_pairs: usize,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckBalancingConfig {
    pub experiment: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// Names; empty means the built-in catalog.
    #[serde(default)]
    pub g: Vec<String>,
    pub alpha: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcceptConfig {
    pub experiment: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// Criterion ids; empty means all.
    #[serde(default)]
    pub criteria: Vec<u8>,
}

fn one() -> usize {
    1
}

fn unit() -> f64 {
    1.0
}

fn pairs() -> usize {
    20
}

fn identity() -> String {
    "identity".into()
}

pub fn require_positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        bail!(lbjump::Error::ConfigInvalid(format!("`{name}` must be positive")));
    }
    Ok(())
}
