//! Mesh-free training data: noisy measurements of a solution, measurement
//! pairs, and the scaled one-step defect each pair defines.

use std::io::{Read, Write};

use ndarray::Array2;
use rand::distr::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{solve_reference, Method, OdeProblem, Stepper, DEFAULT_REFERENCE_TOL};

/// A (possibly noisy) observation `z = y(x) + noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub x: f64,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// `z = y (1 + level g)` with `g` standard normal, drawn per component.
    #[default]
    GaussianRelative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub level: f64,
    #[serde(default)]
    pub kind: NoiseKind,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn relative(level: f64) -> Self {
        Self {
            level,
            kind: NoiseKind::GaussianRelative,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.level) {
            return Err(Error::InvalidArgument(format!(
                "noise level {} must lie in [0, 1)",
                self.level
            )));
        }
        Ok(())
    }
}

/// Draws `count` points uniformly from `interval` and observes the solution
/// there. The exact solution is used when the problem has one, otherwise a
/// reference solve at the default tolerance.
pub fn sample_measurements(
    problem: &OdeProblem,
    interval: (f64, f64),
    count: usize,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<Vec<Measurement>> {
    noise.validate()?;
    if count < 2 {
        return Err(Error::TooFewPoints(count));
    }
    let (lo, hi) = interval;
    let (a, b) = problem.domain();
    if !(lo < hi && a <= lo && hi <= b) {
        return Err(Error::InvalidArgument(format!(
            "sampling interval [{lo}, {hi}] must be a non-empty subset of [{a}, {b}]"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uniform = Uniform::new(lo, hi).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let xs: Vec<f64> = (0..count).map(|_| uniform.sample(&mut rng)).collect();
    let truth = ground_truth(problem, &xs)?;

    Ok(xs
        .into_iter()
        .zip(truth)
        .map(|(x, y)| {
            let z = y
                .into_iter()
                .map(|v| {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    if noise.level == 0.0 {
                        v
                    } else {
                        v * (1.0 + noise.level * g)
                    }
                })
                .collect();
            Measurement { x, z }
        })
        .collect())
}

fn ground_truth(problem: &OdeProblem, xs: &[f64]) -> Result<Vec<Vec<f64>>> {
    if let Some(exact) = problem.exact() {
        return Ok(xs.iter().map(|&x| exact(x)).collect());
    }
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let sorted: Vec<f64> = order.iter().map(|&i| xs[i]).collect();
    let traj = solve_reference(problem, DEFAULT_REFERENCE_TOL, DEFAULT_REFERENCE_TOL, &sorted)?;
    let mut out = vec![Vec::new(); xs.len()];
    for (slot, y) in order.into_iter().zip(traj.ys) {
        out[slot] = y;
    }
    Ok(out)
}

/// `R = (z_j - z_i - dx f(x_i, z_i)) / dx^2` with `dx = x_j - x_i`.
pub fn residual(
    problem: &OdeProblem,
    x_i: f64,
    x_j: f64,
    z_i: &[f64],
    z_j: &[f64],
) -> Result<Vec<f64>> {
    residual_for(Method::Euler, problem, x_i, x_j, z_i, z_j)
}

/// Scaled defect of an order-`p` base method: `(z_j - step(x_i, z_i, dx)) / dx^{p+1}`.
/// For Euler this is [`residual`].
pub fn residual_for(
    method: Method,
    problem: &OdeProblem,
    x_i: f64,
    x_j: f64,
    z_i: &[f64],
    z_j: &[f64],
) -> Result<Vec<f64>> {
    if !(x_j > x_i) {
        return Err(Error::BadPairOrder { x_i, x_j });
    }
    if z_j.len() != problem.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            got: z_j.len(),
        });
    }
    let dx = x_j - x_i;
    let denom = dx.powi(method.order() as i32 + 1);
    match method {
        Method::Euler => {
            let f = problem.eval_rhs(x_i, z_i)?;
            Ok(z_j
                .iter()
                .zip(z_i.iter().zip(&f))
                .map(|(zj, (zi, fi))| (zj - zi - dx * fi) / denom)
                .collect())
        }
        Method::Heun => {
            let base = method.step(problem, x_i, z_i, dx)?;
            Ok(z_j
                .iter()
                .zip(&base)
                .map(|(zj, b)| (zj - b) / denom)
                .collect())
        }
    }
}

/// Which measurement pairs become training samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PairPolicy {
    /// Every unordered pair with `x_i < x_j`.
    #[default]
    AllPairs,
    /// Only pairs with `x_j - x_i >= gap`.
    MinGap(f64),
}

/// One training pair: input `(x_i, x_j, z_i)` and target `R(x_i, x_j, z_i, z_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSample {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
    pub gap: f64,
}

/// Forms samples from measurement pairs ordered so that `x_i < x_j`. Targets
/// are the scaled defects of `method`.
pub fn build_pairs(
    problem: &OdeProblem,
    measurements: &[Measurement],
    policy: PairPolicy,
    method: Method,
) -> Result<Vec<ResidualSample>> {
    if measurements.len() < 2 {
        return Err(Error::TooFewPoints(measurements.len()));
    }
    let mut sorted: Vec<&Measurement> = measurements.iter().collect();
    sorted.sort_by(|a, b| a.x.total_cmp(&b.x));
    let min_gap = match policy {
        PairPolicy::AllPairs => 0.0,
        PairPolicy::MinGap(g) => g,
    };

    let mut samples = Vec::new();
    for (i, mi) in sorted.iter().enumerate() {
        for mj in &sorted[i + 1..] {
            let gap = mj.x - mi.x;
            if gap <= 0.0 || gap < min_gap {
                continue;
            }
            let target = residual_for(method, problem, mi.x, mj.x, &mi.z, &mj.z)?;
            let mut input = Vec::with_capacity(problem.dim() + 2);
            input.push(mi.x);
            input.push(mj.x);
            input.extend_from_slice(&mi.z);
            samples.push(ResidualSample { input, target, gap });
        }
    }
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(samples)
}

/// Deterministic shuffled split into `(train, validation)`, with
/// `round(fraction * len)` training samples.
pub fn split<T: Clone>(samples: &[T], fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split fraction {fraction} must lie in (0, 1)"
        )));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = (fraction * samples.len() as f64).round() as usize;
    let pick = |idx: &[usize]| idx.iter().map(|&i| samples[i].clone()).collect();
    Ok((pick(&order[..cut]), pick(&order[cut..])))
}

/// Stacks samples into `(inputs, targets)` matrices, one row per sample.
pub fn to_arrays(samples: &[ResidualSample]) -> Result<(Array2<f64>, Array2<f64>)> {
    let first = samples.first().ok_or(Error::EmptyDataset)?;
    let (n_in, n_out) = (first.input.len(), first.target.len());
    let mut inputs = Array2::zeros((samples.len(), n_in));
    let mut targets = Array2::zeros((samples.len(), n_out));
    for (r, s) in samples.iter().enumerate() {
        if s.input.len() != n_in || s.target.len() != n_out {
            return Err(Error::DimensionMismatch {
                expected: n_in,
                got: s.input.len(),
            });
        }
        for (c, v) in s.input.iter().enumerate() {
            inputs[[r, c]] = *v;
        }
        for (c, v) in s.target.iter().enumerate() {
            targets[[r, c]] = *v;
        }
    }
    Ok((inputs, targets))
}

/// Formats a float with 17 significant digits, enough to round-trip any `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes samples as CSV: `x_i,x_j,z_i_1..z_i_n,target_1..target_n`.
pub fn write_samples_csv<W: Write>(samples: &[ResidualSample], writer: W) -> Result<()> {
    let dim = samples.first().ok_or(Error::EmptyDataset)?.target.len();
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["x_i".to_string(), "x_j".to_string()];
    header.extend((1..=dim).map(|k| format!("z_i_{k}")));
    header.extend((1..=dim).map(|k| format!("target_{k}")));
    w.write_record(&header)?;
    for s in samples {
        w.write_record(s.input.iter().chain(&s.target).map(|v| format_f64(*v)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples_csv<R: Read>(reader: R) -> Result<Vec<ResidualSample>> {
    let mut r = csv::Reader::from_reader(reader);
    let columns = r.headers()?.len();
    if columns < 4 || (columns - 2) % 2 != 0 {
        return Err(Error::DatasetFormat(format!(
            "header has {columns} columns, expected 2 + 2n"
        )));
    }
    let dim = (columns - 2) / 2;
    let mut samples = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record?;
        let values = record
            .iter()
            .map(|field| {
                field.trim().parse::<f64>().map_err(|e| {
                    Error::DatasetFormat(format!("row {}: `{field}`: {e}", line + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        let (input, target) = values.split_at(dim + 2);
        let gap = input[1] - input[0];
        if !(gap > 0.0) {
            return Err(Error::DatasetFormat(format!(
                "row {}: x_j must exceed x_i",
                line + 1
            )));
        }
        samples.push(ResidualSample {
            input: input.to_vec(),
            target: target.to_vec(),
            gap,
        });
    }
    Ok(samples)
}
