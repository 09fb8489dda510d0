//! Fully-connected ReLU network with hand-written reverse-mode gradients.
//!
//! Layer `k` computes `W_k a + b_k` with `W_k` of shape `(p_k, p_{k-1})`. ReLU
//! follows every layer except the last. All arithmetic is `f64`, and every
//! operation is deterministic for fixed inputs.

mod adam;
mod checkpoint;
mod train;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use checkpoint::{load_model, save_model, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use train::{train, TrainConfig, TrainReport};

/// Weights and biases of the network. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    widths: Vec<usize>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

fn check_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 2 {
        return Err(Error::InvalidArchitecture(
            "need at least an input and an output width".into(),
        ));
    }
    if widths.contains(&0) {
        return Err(Error::InvalidArchitecture(format!(
            "layer widths must be positive: {widths:?}"
        )));
    }
    Ok(())
}

/// Widths `[n + 2, hidden, ..., hidden, n]` for a corrector of an `n`-dimensional system.
pub fn corrector_widths(dim: usize, hidden_layers: usize, hidden_width: usize) -> Vec<usize> {
    let mut widths = vec![dim + 2];
    widths.extend(std::iter::repeat_n(hidden_width, hidden_layers));
    widths.push(dim);
    widths
}

impl MlpParams {
    /// He-uniform initialization: weights drawn from `U(-sqrt(6/fan_in), sqrt(6/fan_in))`,
    /// zero biases.
    pub fn init(widths: &[usize], seed: u64) -> Result<Self> {
        check_widths(widths)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = widths
            .windows(2)
            .map(|w| {
                let limit = (6.0 / w[0] as f64).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
                Array2::from_shape_simple_fn((w[1], w[0]), || dist.sample(&mut rng))
            })
            .collect();
        Ok(Self {
            widths: widths.to_vec(),
            weights,
            biases: widths[1..].iter().map(|&p| Array1::zeros(p)).collect(),
        })
    }

    /// All-zero parameters of the given architecture.
    pub fn zeros(widths: &[usize]) -> Result<Self> {
        check_widths(widths)?;
        Ok(Self {
            widths: widths.to_vec(),
            weights: widths
                .windows(2)
                .map(|w| Array2::zeros((w[1], w[0])))
                .collect(),
            biases: widths[1..].iter().map(|&p| Array1::zeros(p)).collect(),
        })
    }

    pub fn from_layers(weights: Vec<Array2<f64>>, biases: Vec<Array1<f64>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::InvalidArchitecture(format!(
                "{} weight matrices but {} bias vectors",
                weights.len(),
                biases.len()
            )));
        }
        let mut widths = vec![weights[0].ncols()];
        for (k, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.ncols() != widths[k] || b.len() != w.nrows() {
                return Err(Error::InvalidArchitecture(format!(
                    "layer {k}: weight {:?} and bias {} do not chain",
                    w.dim(),
                    b.len()
                )));
            }
            widths.push(w.nrows());
        }
        check_widths(&widths)?;
        // The optimizer walks each layer as one contiguous slice.
        let weights = weights
            .into_iter()
            .map(|w| w.as_standard_layout().into_owned())
            .collect();
        let params = Self {
            widths,
            weights,
            biases,
        };
        if !params.is_finite() {
            return Err(Error::InvalidArchitecture("non-finite parameter".into()));
        }
        Ok(params)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        self.widths[self.widths.len() - 1]
    }

    /// Number of affine layers, `K`.
    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn num_params(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Array1<f64>] {
        &mut self.biases
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub(crate) fn same_shape(&self, other: &MlpParams) -> bool {
        self.widths == other.widths
    }

    /// Iterates over every parameter in checkpoint order (per layer: weights
    /// row-major, then bias).
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
    }

    /// Evaluates the network on one input vector.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::InvalidInput(format!(
                "expected {} features, got {}",
                self.input_dim(),
                input.len()
            )));
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite feature".into()));
        }
        let mut a = Array1::from(input.to_vec());
        let last = self.num_layers() - 1;
        for (k, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = w.dot(&a);
            z += b;
            if k < last {
                z.mapv_inplace(relu);
            }
            a = z;
        }
        Ok(a.to_vec())
    }

    /// Evaluates the network on each row of `inputs`.
    pub fn forward_batch(&self, inputs: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut a = inputs.to_owned();
        let last = self.num_layers() - 1;
        for (k, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = a.dot(&w.t());
            z += b;
            if k < last {
                z.mapv_inplace(relu);
            }
            a = z;
        }
        a
    }

    /// Mean (over rows) of the component-summed absolute error, and its
    /// gradient with respect to every parameter.
    ///
    /// Subgradients at kinks are zero for both the ReLU and the absolute value.
    pub fn loss_and_grad(
        &self,
        inputs: ArrayView2<'_, f64>,
        targets: ArrayView2<'_, f64>,
    ) -> Result<(f64, MlpParams)> {
        let batch = inputs.nrows();
        if batch == 0 {
            return Err(Error::EmptyBatch);
        }
        if inputs.ncols() != self.input_dim()
            || targets.ncols() != self.output_dim()
            || targets.nrows() != batch
        {
            return Err(Error::InvalidInput(format!(
                "batch shapes {:?} -> {:?} do not fit widths {:?}",
                inputs.dim(),
                targets.dim(),
                self.widths
            )));
        }

        // activations[k] is the input to layer k
        let last = self.num_layers() - 1;
        let mut activations = Vec::with_capacity(self.num_layers());
        activations.push(inputs.to_owned());
        let mut output = Array2::zeros((0, 0));
        for (k, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = activations[k].dot(&w.t());
            z += b;
            if k < last {
                z.mapv_inplace(relu);
                activations.push(z);
            } else {
                output = z;
            }
        }

        let scale = 1.0 / batch as f64;
        let mut loss = 0.0;
        let mut delta = output;
        Zip::from(&mut delta).and(targets).for_each(|d, &t| {
            let diff = *d - t;
            loss += diff.abs();
            *d = sign(diff) * scale;
        });
        loss *= scale;

        let mut grads = MlpParams::zeros(&self.widths)?;
        for k in (0..=last).rev() {
            grads.weights[k] = delta.t().dot(&activations[k]);
            grads.biases[k] = delta.sum_axis(Axis(0));
            if k > 0 {
                let mut upstream = delta.dot(&self.weights[k]);
                Zip::from(&mut upstream)
                    .and(&activations[k])
                    .for_each(|g, &a| {
                        if a <= 0.0 {
                            *g = 0.0;
                        }
                    });
                delta = upstream;
            }
        }
        Ok((loss, grads))
    }

    /// `L_N = alpha^K`, where `alpha` is the largest infinity-norm (max absolute
    /// row sum) over the weight matrices. ReLU contributes a factor of one.
    /// Bounds `|N(u) - N(v)|_inf / |u - v|_inf`.
    pub fn lipschitz_bound(&self) -> f64 {
        let alpha = self
            .weights
            .iter()
            .map(inf_norm)
            .fold(0.0_f64, f64::max);
        alpha.powi(self.num_layers() as i32)
    }

    /// Scales each weight row by `min(1, bound / row_abs_sum)`, so every layer
    /// has infinity-norm at most `bound`.
    pub fn clip_weights(&mut self, bound: f64) -> Result<()> {
        if !(bound > 0.0 && bound.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "clip bound {bound} must be positive"
            )));
        }
        for w in &mut self.weights {
            for mut row in w.rows_mut() {
                let sum: f64 = row.iter().map(|v| v.abs()).sum();
                if sum > bound {
                    let factor = bound / sum;
                    row.mapv_inplace(|v| v * factor);
                }
            }
        }
        Ok(())
    }

    /// Rewrites the first layer so the network accepts raw inputs `u` when it
    /// was trained on `(u - shift) / scale`.
    pub fn fold_input_affine(&mut self, shift: &[f64], scale: &[f64]) -> Result<()> {
        let n = self.input_dim();
        if shift.len() != n || scale.len() != n {
            return Err(Error::InvalidInput(format!(
                "input transform has the wrong width (expected {n})"
            )));
        }
        let w = &mut self.weights[0];
        for (j, (&s, &c)) in shift.iter().zip(scale).enumerate() {
            if !(c > 0.0) {
                return Err(Error::InvalidInput(format!("scale {c} must be positive")));
            }
            let mut col = w.column_mut(j);
            col.mapv_inplace(|v| v / c);
            let adjust = col.mapv(|v| v * s);
            self.biases[0] -= &adjust;
        }
        Ok(())
    }
}

/// Infinity operator norm (max absolute row sum).
fn inf_norm(w: &Array2<f64>) -> f64 {
    w.rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[inline]
fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn init_shapes_and_zero_bias() {
        let p = MlpParams::init(&[3, 1], 42).unwrap();
        assert_eq!(p.weights()[0].dim(), (1, 3));
        assert_eq!(p.biases()[0], array![0.0]);
        let limit = (6.0f64 / 3.0).sqrt();
        assert!(p.weights()[0].iter().all(|v| v.abs() <= limit));
    }

    #[test]
    fn column_major_layers_can_be_trained() {
        let w0 = array![[0.5, -0.2], [0.1, 0.3], [-0.4, 0.2]].reversed_axes();
        let w1 = array![[1.0], [-1.0]].reversed_axes();
        let mut p = MlpParams::from_layers(vec![w0, w1], vec![array![0.0, 0.0], array![0.0]]).unwrap();
        let inputs = array![[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]];
        let targets = array![[1.0], [0.0]];
        let config = TrainConfig {
            epochs: 2,
            batch_size: 2,
            ..TrainConfig::default()
        };
        train(&mut p, &inputs, &targets, &config).unwrap();
        assert!(p.is_finite());
    }

    #[test]
    fn init_is_deterministic() {
        let widths = corrector_widths(2, 3, 7);
        let a = MlpParams::init(&widths, 9).unwrap();
        let b = MlpParams::init(&widths, 9).unwrap();
        let c = MlpParams::init(&widths, 10).unwrap();
        assert!(a.values().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_ne!(a, c);
    }

    #[test]
    fn parameter_count_of_eight_by_eighty() {
        let widths = corrector_widths(1, 8, 80);
        assert_eq!(widths.len(), 10);
        let p = MlpParams::init(&widths, 0).unwrap();
        assert_eq!(p.num_params(), 3 * 80 + 80 + 7 * (80 * 80 + 80) + 80 + 1);
        assert_eq!(p.values().count(), p.num_params());
    }

    #[test]
    fn invalid_architecture() {
        assert!(matches!(
            MlpParams::init(&[3, 0, 1], 0),
            Err(Error::InvalidArchitecture(_))
        ));
        assert!(matches!(
            MlpParams::init(&[3], 0),
            Err(Error::InvalidArchitecture(_))
        ));
        assert!(MlpParams::from_layers(vec![array![[1.0, 2.0]]], vec![array![0.0, 0.0]]).is_err());
        assert!(MlpParams::from_layers(vec![array![[f64::NAN]]], vec![array![0.0]]).is_err());
    }

    #[test]
    fn zero_network_outputs_final_bias() {
        let mut p = MlpParams::zeros(&[3, 4, 2]).unwrap();
        p.biases_mut()[1] = array![0.5, -1.5];
        for input in [[0.0, 0.0, 0.0], [1.0, -7.0, 3.0]] {
            assert_eq!(p.forward(&input).unwrap(), vec![0.5, -1.5]);
        }
    }

    #[test]
    fn single_affine_layer() {
        let p = MlpParams::from_layers(vec![array![[1.0, 2.0, 3.0]]], vec![array![1.0]]).unwrap();
        assert_eq!(p.forward(&[1.0, 1.0, 1.0]).unwrap(), vec![7.0]);
    }

    #[test]
    fn relu_gates_negative() {
        let p = MlpParams::from_layers(
            vec![array![[-1.0]], array![[1.0]]],
            vec![array![0.0], array![0.0]],
        )
        .unwrap();
        assert_eq!(p.forward(&[5.0]).unwrap(), vec![0.0]);
        assert_eq!(p.forward(&[-5.0]).unwrap(), vec![5.0]);
    }

    #[test]
    fn forward_rejects_bad_input() {
        let p = MlpParams::zeros(&[3, 1]).unwrap();
        assert!(matches!(p.forward(&[1.0, f64::NAN, 0.0]), Err(Error::InvalidInput(_))));
        assert!(matches!(p.forward(&[1.0]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn batch_forward_matches_single() {
        let p = MlpParams::init(&[3, 6, 5, 2], 3).unwrap();
        let inputs = array![[0.1, 0.2, 0.3], [-1.0, 2.0, 0.5], [3.0, -0.5, 1.0]];
        let out = p.forward_batch(inputs.view());
        for (row, expected) in inputs.rows().into_iter().zip(out.rows()) {
            let single = p.forward(row.as_slice().unwrap()).unwrap();
            for (a, b) in single.iter().zip(expected.iter()) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn loss_zero_at_exact_fit() {
        let p = MlpParams::init(&[3, 5, 2], 1).unwrap();
        let inputs = array![[0.3, -0.2, 1.0], [1.0, 1.0, 1.0]];
        let targets = p.forward_batch(inputs.view());
        let (loss, grads) = p.loss_and_grad(inputs.view(), targets.view()).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.values().all(|g| g == 0.0));
    }

    #[test]
    fn l1_gradient_of_final_bias() {
        let p = MlpParams::zeros(&[1, 1]).unwrap();
        let (loss, grads) = p
            .loss_and_grad(array![[1.0]].view(), array![[2.0]].view())
            .unwrap();
        assert_eq!(loss, 2.0);
        assert_eq!(grads.biases()[0], array![-1.0]);
        assert_eq!(grads.weights()[0], array![[-1.0]]);
    }

    #[test]
    fn empty_batch_rejected() {
        let p = MlpParams::zeros(&[3, 1]).unwrap();
        let inputs = Array2::<f64>::zeros((0, 3));
        let targets = Array2::<f64>::zeros((0, 1));
        assert!(matches!(
            p.loss_and_grad(inputs.view(), targets.view()),
            Err(Error::EmptyBatch)
        ));
    }

    #[test]
    fn lipschitz_bound_examples() {
        let p = MlpParams::from_layers(vec![array![[2.0]]], vec![array![0.0]]).unwrap();
        assert_eq!(p.lipschitz_bound(), 2.0);
        let p = MlpParams::from_layers(
            vec![array![[1.0, -1.0]], array![[3.0]]],
            vec![array![0.0], array![0.0]],
        )
        .unwrap();
        assert_eq!(p.lipschitz_bound(), 9.0);
    }

    #[test]
    fn clipping_examples() {
        let mut p = MlpParams::from_layers(vec![array![[4.0]]], vec![array![1.0]]).unwrap();
        p.clip_weights(2.0).unwrap();
        assert_eq!(p.weights()[0], array![[2.0]]);
        assert_eq!(p.biases()[0], array![1.0]);

        let original = MlpParams::from_layers(
            vec![array![[0.5, -0.25], [0.1, 0.2]]],
            vec![array![0.0, 0.0]],
        )
        .unwrap();
        let mut clipped = original.clone();
        clipped.clip_weights(1.0).unwrap();
        assert_eq!(clipped, original);
        assert!(clipped.clip_weights(0.0).is_err());
    }

    #[test]
    fn folding_input_transform_preserves_function() {
        let trained = MlpParams::init(&[3, 8, 2], 5).unwrap();
        let shift = [1.0, -2.0, 0.5];
        let scale = [2.0, 0.5, 4.0];
        let mut folded = trained.clone();
        folded.fold_input_affine(&shift, &scale).unwrap();
        let raw = [0.7, 1.3, -2.2];
        let normalized: Vec<f64> = raw
            .iter()
            .zip(shift.iter().zip(&scale))
            .map(|(u, (s, c))| (u - s) / c)
            .collect();
        let a = trained.forward(&normalized).unwrap();
        let b = folded.forward(&raw).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
