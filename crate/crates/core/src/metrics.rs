//! Error metrics, correction-accuracy diagnostics, order estimation and
//! stability scans.

use serde::Serialize;

use crate::dataset::residual_for;
use crate::dem::{corrected_step, Corrector};
use crate::error::{Error, Result};
use crate::ode::{
    linear_test, solve_fixed, solve_reference, Method, OdeProblem, StepSchedule, Stepper,
    Trajectory, DEFAULT_REFERENCE_TOL,
};

/// Errors at or below this level count as exact for order estimation.
pub const DEGENERATE_ERROR: f64 = 1e-12;
/// Number of steps iterated by [`stability_scan`].
pub const STABILITY_HORIZON: usize = 1000;
/// `|y_m|` above this marks a scan as unbounded.
pub const STABILITY_THRESHOLD: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    /// `max_m |y(x_m) - y_m|`, maximum over components.
    pub max_error: f64,
    pub eps_mean: f64,
    /// `max_error` divided by the baseline method's error.
    pub ratio_to_baseline: Option<f64>,
    pub step_size: f64,
    pub region: (f64, f64),
}

/// Largest absolute deviation over all mesh points and components.
pub fn max_abs_error<F>(trajectory: &Trajectory, exact: F) -> f64
where
    F: Fn(f64) -> Vec<f64>,
{
    trajectory
        .iter()
        .flat_map(|(x, y)| {
            let e = exact(x);
            y.iter()
                .zip(e)
                .map(|(a, b)| (a - b).abs())
                .collect::<Vec<_>>()
        })
        .fold(0.0, f64::max)
}

/// [`max_abs_error`] against the problem's exact solution.
pub fn trajectory_error(problem: &OdeProblem, trajectory: &Trajectory) -> Result<f64> {
    let exact = problem
        .exact()
        .ok_or_else(|| Error::MissingExactSolution(problem.name().to_string()))?;
    Ok(max_abs_error(trajectory, |x| exact(x)))
}

/// True solution on the mesh: closed form when available, else a reference solve.
fn truth_on_mesh(problem: &OdeProblem, xs: &[f64]) -> Result<Vec<Vec<f64>>> {
    match problem.exact() {
        Some(exact) => Ok(xs.iter().map(|&x| exact(x)).collect()),
        None => Ok(solve_reference(problem, DEFAULT_REFERENCE_TOL, DEFAULT_REFERENCE_TOL, xs)?.ys),
    }
}

/// Correction output and scaled defect for one mesh step, both evaluated on
/// the true solution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapPoint {
    pub x: f64,
    pub x_next: f64,
    pub correction: Vec<f64>,
    pub residual: Vec<f64>,
    /// `sum_k |correction_k - residual_k|`
    pub gap: f64,
}

/// `N(x_m, x_{m+1}, y(x_m))` against `R(x_m, x_{m+1}, y(x_m), y(x_{m+1}))` along the mesh.
pub fn gap_series(
    problem: &OdeProblem,
    corrector: &Corrector,
    method: Method,
    schedule: &StepSchedule,
) -> Result<Vec<GapPoint>> {
    corrector.check_shape(problem.dim())?;
    let (a, b) = problem.domain();
    let xs = schedule.mesh(a, b)?;
    let ys = truth_on_mesh(problem, &xs)?;
    (0..xs.len() - 1)
        .map(|m| {
            let (x, x_next) = (xs[m], xs[m + 1]);
            let correction = corrector.correction(method, problem, x, &ys[m], x_next - x)?;
            let residual = residual_for(method, problem, x, x_next, &ys[m], &ys[m + 1])?;
            let gap = correction
                .iter()
                .zip(&residual)
                .map(|(c, r)| (c - r).abs())
                .sum();
            Ok(GapPoint {
                x,
                x_next,
                correction,
                residual,
                gap,
            })
        })
        .collect()
}

/// Mean correction gap, overall and split at a region boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpsMean {
    pub overall: f64,
    /// Steps ending at or before the split point.
    pub train: Option<f64>,
    /// Steps ending after the split point.
    pub test: Option<f64>,
}

/// `eps_mean = (1/M) sum_m |N - R|`. With `split_at`, steps whose right end
/// lies at or before the split form the training region, the rest the test region.
pub fn eps_mean(
    problem: &OdeProblem,
    corrector: &Corrector,
    method: Method,
    schedule: &StepSchedule,
    split_at: Option<f64>,
) -> Result<EpsMean> {
    let series = gap_series(problem, corrector, method, schedule)?;
    let mean = |pts: &mut dyn Iterator<Item = &GapPoint>| {
        let (sum, count) = pts.fold((0.0, 0usize), |(s, c), p| (s + p.gap, c + 1));
        (count > 0).then(|| sum / count as f64)
    };
    let overall = mean(&mut series.iter()).unwrap_or(0.0);
    let (train, test) = match split_at {
        Some(split) => {
            let tol = 1e-9 * split.abs().max(1.0);
            (
                mean(&mut series.iter().filter(|p| p.x_next <= split + tol)),
                mean(&mut series.iter().filter(|p| p.x_next > split + tol)),
            )
        }
        None => (None, None),
    };
    Ok(EpsMean {
        overall,
        train,
        test,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceOrder {
    /// Least-squares slope of `log(error)` against `log(h)`; `+inf` when degenerate.
    pub slope: f64,
    /// Set when some error is at round-off level, so no order can be measured.
    pub degenerate: bool,
    pub step_sizes: Vec<f64>,
    pub errors: Vec<f64>,
}

/// Measures the observed order of `stepper` on `problem` from successively
/// halved step sizes.
pub fn convergence_order<S: Stepper + ?Sized>(
    problem: &OdeProblem,
    stepper: &S,
    h_list: &[f64],
) -> Result<ConvergenceOrder> {
    if h_list.len() < 3 {
        return Err(Error::InvalidArgument(
            "need at least three step sizes".into(),
        ));
    }
    if h_list
        .windows(2)
        .any(|w| ((w[0] / w[1]) - 2.0).abs() > 1e-9)
    {
        return Err(Error::InvalidArgument(
            "step sizes must halve successively".into(),
        ));
    }
    let errors = h_list
        .iter()
        .map(|&h| {
            let traj = solve_fixed(problem, &StepSchedule::Uniform(h), stepper)?;
            trajectory_error(problem, &traj)
        })
        .collect::<Result<Vec<f64>>>()?;

    let degenerate = errors.iter().any(|&e| e <= DEGENERATE_ERROR);
    let slope = if degenerate {
        f64::INFINITY
    } else {
        let pts: Vec<(f64, f64)> = h_list
            .iter()
            .zip(&errors)
            .map(|(h, e)| (h.ln(), e.ln()))
            .collect();
        least_squares_slope(&pts)
    };
    Ok(ConvergenceOrder {
        slope,
        degenerate,
        step_sizes: h_list.to_vec(),
        errors,
    })
}

/// Slope of the least-squares line through `points`.
pub fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = points.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityPoint {
    pub h: f64,
    pub bounded: bool,
}

/// Iterates the corrected Euler method on `y' = lambda y`, `y(0) = 1`, for
/// [`STABILITY_HORIZON`] steps at each `h`; bounded means every
/// `|y_m| <= STABILITY_THRESHOLD`.
pub fn stability_scan(
    lambda: f64,
    corrector: &Corrector,
    h_grid: &[f64],
) -> Result<Vec<StabilityPoint>> {
    if !(lambda < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda {lambda} must be negative"
        )));
    }
    let problem = linear_test(lambda, 1.0)?;
    corrector.check_shape(1)?;
    h_grid
        .iter()
        .map(|&h| {
            if !(h > 0.0) {
                return Err(Error::InvalidArgument(format!("step {h} must be positive")));
            }
            let mut y = vec![1.0];
            let mut bounded = true;
            for m in 0..STABILITY_HORIZON {
                match corrected_step(Method::Euler, corrector, &problem, m as f64 * h, &y, h) {
                    Ok(next) if next[0].abs() <= STABILITY_THRESHOLD => y = next,
                    Ok(_) => {
                        bounded = false;
                        break;
                    }
                    Err(e) if e.is_numerical() => {
                        bounded = false;
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
            Ok(StabilityPoint { h, bounded })
        })
        .collect()
}

/// `|1 + h lambda + h^2 L_N| <= 1`.
pub fn in_stability_domain(lambda: f64, lipschitz: f64, h: f64) -> bool {
    (1.0 + h * lambda + h * h * lipschitz).abs() <= 1.0
}
