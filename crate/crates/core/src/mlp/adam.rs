use super::MlpParams;
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Moment estimates of the Adam optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: MlpParams,
    pub second_moment: MlpParams,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// Fresh state with zero moments shaped like `params`.
    pub fn new(params: &MlpParams) -> Self {
        let zeros = MlpParams::zeros(params.widths()).expect("params already validated");
        Self {
            first_moment: zeros.clone(),
            second_moment: zeros,
            step_count: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            epsilon: ADAM_EPSILON,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(
    params: &mut MlpParams,
    grads: &MlpParams,
    state: &mut AdamState,
    learning_rate: f64,
) -> Result<()> {
    if !params.same_shape(grads)
        || !params.same_shape(&state.first_moment)
        || !params.same_shape(&state.second_moment)
    {
        return Err(Error::InvalidInput(
            "parameter, gradient and optimizer shapes differ".into(),
        ));
    }
    if !grads.is_finite() {
        return Err(Error::NonFiniteGradient);
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let inv_correction1 = 1.0 / (1.0 - b1.powi(t));
    let inv_correction2 = 1.0 / (1.0 - b2.powi(t));

    let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
        for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = flush(b1 * *m + (1.0 - b1) * g);
            *v = flush(b2 * *v + (1.0 - b2) * g * g);
            let m_hat = *m * inv_correction1;
            let v_hat = *v * inv_correction2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + eps);
        }
    };
    let AdamState {
        first_moment,
        second_moment,
        ..
    } = state;
    for k in 0..params.num_layers() {
        update(
            slice_mut(&mut params.weights_mut()[k]),
            slice(&grads.weights()[k]),
            slice_mut(&mut first_moment.weights_mut()[k]),
            slice_mut(&mut second_moment.weights_mut()[k]),
        );
        update(
            slice_mut(&mut params.biases_mut()[k]),
            slice(&grads.biases()[k]),
            slice_mut(&mut first_moment.biases_mut()[k]),
            slice_mut(&mut second_moment.biases_mut()[k]),
        );
    }
    Ok(())
}

/// Moments of dead units decay geometrically into the subnormal range, where
/// arithmetic is an order of magnitude slower. Their contribution to the
/// update is below 1e-300 either way.
fn flush(v: f64) -> f64 {
    if v.abs() < f64::MIN_POSITIVE {
        0.0
    } else {
        v
    }
}

fn slice<D: ndarray::Dimension>(a: &ndarray::Array<f64, D>) -> &[f64] {
    a.as_slice().expect("parameters are stored contiguously")
}

fn slice_mut<D: ndarray::Dimension>(a: &mut ndarray::Array<f64, D>) -> &mut [f64] {
    a.as_slice_mut().expect("parameters are stored contiguously")
}
