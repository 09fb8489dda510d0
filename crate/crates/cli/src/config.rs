//! Training configuration files and their merge with defaults, environment
//! and flags.

use std::path::Path;

use deep_euler::dataset::{NoiseSpec, PairPolicy};
use deep_euler::experiment::ExperimentSpec;
use deep_euler::ode::Method;
use serde::Deserialize;

use crate::error::{CliError, CliResult};

pub const SEED_ENV: &str = "DEM_SEED";

/// Keys mirror [`ExperimentSpec`]; anything left out falls back to the
/// problem's default protocol.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: Option<String>,
    pub method: Option<Method>,
    pub interval: Option<(f64, f64)>,
    pub points: Option<usize>,
    pub hidden_layers: Option<usize>,
    pub hidden_width: Option<usize>,
    pub noise: Option<NoiseSpec>,
    pub pairs: Option<PairPolicy>,
    #[serde(default)]
    pub train: TrainSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
    pub clip_bound: Option<f64>,
    pub normalize_inputs: Option<bool>,
    pub samples_per_epoch: Option<usize>,
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| CliError::Config(e.to_string()))?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config(format!("at `{path}`: {}", e.into_inner()))
        })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::parse(&text)
            .map_err(|e| CliError::Config(format!("{}: {}", path.display(), strip(e))))
    }
}

fn strip(e: CliError) -> String {
    match e {
        CliError::Config(m) => m,
        other => other.to_string(),
    }
}

/// Values given on the command line; they win over everything else.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub problem: Option<String>,
    pub method: Option<Method>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub points: Option<usize>,
    pub samples_per_epoch: Option<usize>,
}

/// Reads the seed from `DEM_SEED`, if set.
pub fn env_seed() -> CliResult<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(CliError::Config(format!("{SEED_ENV}: {e}"))),
    }
}

/// Precedence: flags, then `DEM_SEED` (seed only), then the config file, then
/// the problem defaults.
pub fn resolve(
    config: RunConfig,
    overrides: &Overrides,
    env_seed: Option<u64>,
) -> CliResult<ExperimentSpec> {
    let problem = overrides
        .problem
        .clone()
        .or(config.problem)
        .ok_or_else(|| CliError::Config("no problem given (use --problem or `problem`)".into()))?;
    let method = overrides.method.or(config.method).unwrap_or(Method::Euler);
    let mut spec = ExperimentSpec::defaults_for(&problem, method)
        .map_err(|e| CliError::Config(e.to_string()))?;

    if let Some(v) = config.interval {
        spec.interval = v;
    }
    if let Some(v) = config.points {
        spec.points = v;
    }
    if let Some(v) = config.hidden_layers {
        spec.hidden_layers = v;
    }
    if let Some(v) = config.hidden_width {
        spec.hidden_width = v;
    }
    if let Some(v) = config.noise {
        spec.noise = v;
    }
    if let Some(v) = config.pairs {
        spec.pairs = v;
    }
    let t = config.train;
    let train = &mut spec.train;
    if let Some(v) = t.epochs {
        train.epochs = v;
    }
    if let Some(v) = t.learning_rate {
        train.learning_rate = v;
    }
    if let Some(v) = t.batch_size {
        train.batch_size = v;
    }
    if let Some(v) = t.seed {
        train.seed = v;
    }
    if t.clip_bound.is_some() {
        train.clip_bound = t.clip_bound;
    }
    if let Some(v) = t.normalize_inputs {
        train.normalize_inputs = v;
    }
    if t.samples_per_epoch.is_some() {
        train.samples_per_epoch = t.samples_per_epoch;
    }

    if let Some(seed) = overrides.seed.or(env_seed) {
        train.seed = seed;
    }
    if let Some(v) = overrides.epochs {
        train.epochs = v;
    }
    if overrides.samples_per_epoch.is_some() {
        train.samples_per_epoch = overrides.samples_per_epoch;
    }
    if let Some(v) = overrides.points {
        spec.points = v;
    }
    spec.validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(spec)
}
