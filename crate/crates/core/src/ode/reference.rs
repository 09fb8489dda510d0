//! Dormand–Prince 5(4) with continuous output, used as the ground-truth solver.

use super::{OdeProblem, Trajectory};
use crate::error::{Error, Result};

pub const DEFAULT_REFERENCE_TOL: f64 = 1e-6;

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];

const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];

/// Fifth-order weights (FSAL: equal to the last row of `A`).
#[cfg(test)]
const B: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];

/// Difference between fifth- and fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Continuous-extension coefficients: `y(x0 + t h) = y0 + h sum_i K_i (P_i . [t, t^2, t^3, t^4])`.
const P: [[f64; 4]; 7] = [
    [
        1.0,
        -8048581381.0 / 2820520608.0,
        8663915743.0 / 2820520608.0,
        -12715105075.0 / 11282082432.0,
    ],
    [0.0, 0.0, 0.0, 0.0],
    [
        0.0,
        131558114200.0 / 32700410799.0,
        -68118460800.0 / 10900136933.0,
        87487479700.0 / 32700410799.0,
    ],
    [
        0.0,
        -1754552775.0 / 470086768.0,
        14199869525.0 / 1410260304.0,
        -10690763975.0 / 1880347072.0,
    ],
    [
        0.0,
        127303824393.0 / 49829197408.0,
        -318862633887.0 / 49829197408.0,
        701980252875.0 / 199316789632.0,
    ],
    [
        0.0,
        -282668133.0 / 205662961.0,
        2019193451.0 / 616988883.0,
        -1453857185.0 / 822651844.0,
    ],
    [
        0.0,
        40617522.0 / 29380423.0,
        -110615467.0 / 29380423.0,
        69997945.0 / 29380423.0,
    ],
];

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;
const MAX_STEPS: usize = 10_000_000;

#[derive(Debug, Clone)]
struct DenseStep {
    x0: f64,
    h: f64,
    y0: Vec<f64>,
    /// `Q[i][j] = sum_s K_s[i] P[s][j]`, one row per component.
    q: Vec<[f64; 4]>,
}

impl DenseStep {
    fn eval(&self, x: f64) -> Vec<f64> {
        let t = (x - self.x0) / self.h;
        let powers = [t, t * t, t * t * t, t * t * t * t];
        self.y0
            .iter()
            .zip(&self.q)
            .map(|(y0, q)| y0 + self.h * (0..4).map(|j| q[j] * powers[j]).sum::<f64>())
            .collect()
    }
}

/// Piecewise continuous solution produced by the adaptive solver on `[a, end]`.
#[derive(Debug, Clone)]
pub struct DenseSolution {
    start: f64,
    initial: Vec<f64>,
    steps: Vec<DenseStep>,
}

impl DenseSolution {
    /// Integrates `problem` from `a` up to `end` with mixed tolerance
    /// `abs_tol + rel_tol |y|`.
    pub fn integrate(problem: &OdeProblem, end: f64, rel_tol: f64, abs_tol: f64) -> Result<Self> {
        if !(rel_tol > 0.0 && abs_tol > 0.0) {
            return Err(Error::InvalidArgument(
                "reference tolerances must be positive".into(),
            ));
        }
        let (a, b) = problem.domain();
        let n = problem.dim();
        let min_step = 1e-14 * (b - a);
        let mut x = a;
        let mut y = problem.initial().to_vec();
        let mut steps = Vec::new();
        if end <= a {
            return Ok(Self {
                start: a,
                initial: y,
                steps,
            });
        }

        let mut k = vec![vec![0.0; n]; 7];
        problem.eval_rhs_into(x, &y, &mut k[0])?;
        let mut h = initial_step(problem, x, &y, &k[0], end - a, rel_tol, abs_tol)?;
        let mut stage = vec![0.0; n];
        let mut y_new = vec![0.0; n];

        for _ in 0..MAX_STEPS {
            if x >= end {
                break;
            }
            if h < min_step {
                return Err(Error::MinStepReached { x, min_step });
            }
            let last = x + h >= end;
            if last {
                h = end - x;
            }

            for s in 1..7 {
                for i in 0..n {
                    let incr: f64 = (0..s).map(|j| A[s][j] * k[j][i]).sum();
                    stage[i] = y[i] + h * incr;
                }
                problem.eval_rhs_into(x + C[s] * h, &stage, &mut k[s])?;
                if s == 6 {
                    y_new.copy_from_slice(&stage);
                }
            }

            let mut err_sq = 0.0;
            for i in 0..n {
                let err: f64 = h * (0..7).map(|s| E[s] * k[s][i]).sum::<f64>();
                let scale = abs_tol + rel_tol * y[i].abs().max(y_new[i].abs());
                err_sq += (err / scale).powi(2);
            }
            let err_norm = (err_sq / n as f64).sqrt();

            if err_norm <= 1.0 {
                let q = (0..n)
                    .map(|i| {
                        let mut row = [0.0; 4];
                        for (j, cell) in row.iter_mut().enumerate() {
                            *cell = (0..7).map(|s| k[s][i] * P[s][j]).sum();
                        }
                        row
                    })
                    .collect();
                steps.push(DenseStep {
                    x0: x,
                    h,
                    y0: y.clone(),
                    q,
                });
                x = if last { end } else { x + h };
                y.copy_from_slice(&y_new);
                k.swap(0, 6);
                let factor = if err_norm == 0.0 {
                    MAX_FACTOR
                } else {
                    (SAFETY * err_norm.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
                };
                h *= factor;
            } else {
                h *= (SAFETY * err_norm.powf(-0.2)).max(MIN_FACTOR);
            }
        }
        if x < end {
            return Err(Error::MinStepReached { x, min_step });
        }
        Ok(Self {
            start: a,
            initial: problem.initial().to_vec(),
            steps,
        })
    }

    pub fn end(&self) -> f64 {
        self.steps
            .last()
            .map(|s| s.x0 + s.h)
            .unwrap_or(self.start)
    }

    /// Number of accepted steps.
    pub fn accepted_steps(&self) -> usize {
        self.steps.len()
    }

    /// Interpolated solution at `x`; points outside the integrated range are
    /// extrapolated from the nearest step.
    pub fn eval(&self, x: f64) -> Vec<f64> {
        if self.steps.is_empty() || x == self.start {
            return self.initial.clone();
        }
        let idx = self
            .steps
            .partition_point(|s| s.x0 + s.h < x)
            .min(self.steps.len() - 1);
        self.steps[idx].eval(x)
    }
}

fn initial_step(
    problem: &OdeProblem,
    x: f64,
    y: &[f64],
    f0: &[f64],
    span: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<f64> {
    let n = y.len() as f64;
    let scale: Vec<f64> = y.iter().map(|v| abs_tol + rel_tol * v.abs()).collect();
    let rms = |v: &[f64]| {
        (v.iter()
            .zip(&scale)
            .map(|(a, s)| (a / s).powi(2))
            .sum::<f64>()
            / n)
            .sqrt()
    };
    let d0 = rms(y);
    let d1 = rms(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    }
    .min(span);
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
    let f1 = problem.eval_rhs(x + h0, &y1)?;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff) / h0;
    let h1 = if d1 <= 1e-15 && d2 <= 1e-15 {
        (1e-6_f64).max(h0 * 1e-3)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok((100.0 * h0).min(h1).min(span))
}

/// Adaptive Dormand–Prince solution of `problem`, evaluated at `query_points`.
pub fn solve_reference(
    problem: &OdeProblem,
    rel_tol: f64,
    abs_tol: f64,
    query_points: &[f64],
) -> Result<Trajectory> {
    let (a, b) = problem.domain();
    if query_points.iter().any(|&x| !(a..=b).contains(&x)) {
        return Err(Error::InvalidArgument(format!(
            "query points must lie within [{a}, {b}]"
        )));
    }
    if query_points.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument(
            "query points must be sorted ascending".into(),
        ));
    }
    let end = query_points.last().copied().unwrap_or(a);
    let dense = DenseSolution::integrate(problem, end, rel_tol, abs_tol)?;
    Ok(Trajectory {
        xs: query_points.to_vec(),
        ys: query_points.iter().map(|&x| dense.eval(x)).collect(),
    })
}
