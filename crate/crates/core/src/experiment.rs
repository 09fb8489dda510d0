//! End-to-end training of a corrector: sample measurements, build residual
//! pairs, fit the network.

use serde::{Deserialize, Serialize};

use crate::dataset::{build_pairs, sample_measurements, to_arrays, NoiseSpec, PairPolicy};
use crate::dem::Corrector;
use crate::error::{Error, Result};
use crate::mlp::{corrector_widths, train, MlpParams, TrainConfig, TrainReport};
use crate::ode::{builtin_problem, Method, OdeProblem};

/// Everything needed to reproduce one trained corrector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub problem: String,
    /// Base method whose defect the network learns.
    pub method: Method,
    pub interval: (f64, f64),
    pub points: usize,
    pub noise: NoiseSpec,
    pub pairs: PairPolicy,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub train: TrainConfig,
}

/// Seeds derived from `TrainConfig::seed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DerivedSeeds {
    pub data: u64,
    pub init: u64,
    pub shuffle: u64,
}

impl DerivedSeeds {
    pub fn from_master(seed: u64) -> Self {
        Self {
            data: seed,
            init: seed.wrapping_add(0x9E37_79B9_7F4A_7C15),
            shuffle: seed.wrapping_add(0x3C6E_F372_FE94_F82A),
        }
    }
}

impl ExperimentSpec {
    /// Default protocol for a built-in problem: 8 hidden layers of 80, 50
    /// epochs, learning rate 5e-3, noise-free data on `[0, 5]` (example1) or
    /// `[0, 15]` (systems).
    pub fn defaults_for(problem: &str, method: Method) -> Result<Self> {
        let (interval, points) = match problem {
            "example1" => ((0.0, 5.0), 200),
            "lotka_volterra" | "kepler" => ((0.0, 15.0), 1000),
            other => return Err(Error::UnknownProblem(other.to_string())),
        };
        Ok(Self {
            problem: problem.to_string(),
            method,
            interval,
            points,
            noise: NoiseSpec::none(),
            pairs: PairPolicy::AllPairs,
            hidden_layers: 8,
            hidden_width: 80,
            train: TrainConfig::default(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.noise.validate()?;
        if self.points < 2 {
            return Err(Error::TooFewPoints(self.points));
        }
        if self.hidden_layers == 0 || self.hidden_width == 0 {
            return Err(Error::InvalidArchitecture(
                "hidden_layers and hidden_width must be positive".into(),
            ));
        }
        if let PairPolicy::MinGap(g) = self.pairs {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(Error::InvalidArgument(format!("min_gap {g} must be non-negative")));
            }
        }
        Ok(())
    }

    pub fn seeds(&self) -> DerivedSeeds {
        DerivedSeeds::from_master(self.train.seed)
    }
}

#[derive(Debug, Clone)]
pub struct TrainedCorrector {
    pub params: MlpParams,
    pub report: TrainReport,
    pub samples: usize,
}

impl TrainedCorrector {
    pub fn corrector(&self, method: Method) -> Corrector {
        Corrector::network(self.params.clone(), method)
    }
}

/// Runs the full pipeline for `spec` on an explicit problem.
pub fn train_corrector_on(problem: &OdeProblem, spec: &ExperimentSpec) -> Result<TrainedCorrector> {
    spec.validate()?;
    let seeds = spec.seeds();
    let measurements = sample_measurements(
        problem,
        spec.interval,
        spec.points,
        &spec.noise,
        seeds.data,
    )?;
    let samples = build_pairs(problem, &measurements, spec.pairs, spec.method)?;
    let (inputs, targets) = to_arrays(&samples)?;
    let widths = corrector_widths(problem.dim(), spec.hidden_layers, spec.hidden_width);
    let mut params = MlpParams::init(&widths, seeds.init)?;
    let config = TrainConfig {
        seed: seeds.shuffle,
        ..spec.train.clone()
    };
    log::info!(
        "training {} corrector for {}: {} samples, widths {:?}",
        spec.method.name(),
        problem.name(),
        samples.len(),
        widths
    );
    let report = train(&mut params, &inputs, &targets, &config)?;
    Ok(TrainedCorrector {
        params,
        report,
        samples: samples.len(),
    })
}

/// Runs the full pipeline for `spec` on its named built-in problem.
pub fn train_corrector(spec: &ExperimentSpec) -> Result<TrainedCorrector> {
    train_corrector_on(&builtin_problem(&spec.problem)?, spec)
}
