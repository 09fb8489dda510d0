use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{adam_step, AdamState, MlpParams};
use crate::error::{Error, Result};

/// Optimization settings for [`train`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Row-sum cap applied to every weight matrix after each update.
    pub clip_bound: Option<f64>,
    /// Train on standardized inputs and fold the transform into the first layer.
    pub normalize_inputs: bool,
    /// Draw this many samples (without replacement) per epoch instead of a full pass.
    pub samples_per_epoch: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            learning_rate: 5e-3,
            batch_size: 32,
            seed: 0,
            clip_bound: None,
            normalize_inputs: false,
            samples_per_epoch: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.epochs < 1 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate < 1.0) {
            return bad(format!(
                "learning_rate {} must lie in (0, 1)",
                self.learning_rate
            ));
        }
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1".into());
        }
        if let Some(c) = self.clip_bound {
            if !(c > 0.0 && c.is_finite()) {
                return bad(format!("clip_bound {c} must be positive"));
            }
            if self.normalize_inputs {
                return bad("clip_bound cannot be combined with normalize_inputs".into());
            }
        }
        if self.samples_per_epoch == Some(0) {
            return bad("samples_per_epoch must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    /// Mean per-sample training loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub optimizer_steps: u64,
}

/// Minimizes the L1 loss of `params` on `(inputs, targets)` with Adam.
///
/// Samples are reshuffled every epoch from a generator seeded with
/// `config.seed`, so a fixed `(params, data, config)` always yields bitwise
/// identical results.
pub fn train(
    params: &mut MlpParams,
    inputs: &Array2<f64>,
    targets: &Array2<f64>,
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    let n = inputs.nrows();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    if targets.nrows() != n {
        return Err(Error::InvalidInput(format!(
            "{n} inputs but {} targets",
            targets.nrows()
        )));
    }

    let standardization = config.normalize_inputs.then(|| standardize(inputs));
    let features = match &standardization {
        Some((shift, scale)) => {
            let mut x = inputs.clone();
            for (mut col, (s, c)) in x.columns_mut().into_iter().zip(shift.iter().zip(scale)) {
                col.mapv_inplace(|v| (v - s) / c);
            }
            x
        }
        None => inputs.clone(),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = AdamState::new(params);
    let mut order: Vec<usize> = (0..n).collect();
    let per_epoch = config.samples_per_epoch.map_or(n, |k| k.min(n));
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order[..per_epoch].chunks(config.batch_size) {
            let x = features.select(Axis(0), chunk);
            let t = targets.select(Axis(0), chunk);
            let (loss, grads) = params.loss_and_grad(x.view(), t.view())?;
            adam_step(params, &grads, &mut state, config.learning_rate)?;
            if let Some(bound) = config.clip_bound {
                params.clip_weights(bound)?;
            }
            total += loss * chunk.len() as f64;
        }
        let mean = total / per_epoch as f64;
        log::debug!("epoch {epoch}: loss {mean:.6e}");
        epoch_losses.push(mean);
    }

    if let Some((shift, scale)) = standardization {
        params.fold_input_affine(&shift, &scale)?;
    }
    Ok(TrainReport {
        epoch_losses,
        optimizer_steps: state.step_count,
    })
}

/// Per-column mean and standard deviation (unit scale for constant columns).
fn standardize(inputs: &Array2<f64>) -> (Vec<f64>, Vec<f64>) {
    inputs
        .columns()
        .into_iter()
        .map(|col| {
            let mean = col.mean().unwrap_or(0.0);
            let std = col.mapv(|v| (v - mean).powi(2)).mean().unwrap_or(0.0).sqrt();
            (mean, if std > 0.0 { std } else { 1.0 })
        })
        .unzip()
}
