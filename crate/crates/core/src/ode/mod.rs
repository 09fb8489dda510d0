//! Initial-value problems, classical fixed-step integrators and the adaptive
//! reference solver used as ground truth.

mod problems;
mod reference;

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub use problems::{
    builtin_problem, builtin_problems, example1, exponential, kepler, kepler_flow, linear_test,
    lotka_volterra, BUILTIN_NAMES,
};
pub use reference::{solve_reference, DenseSolution, DEFAULT_REFERENCE_TOL};

/// Right-hand side `f(x, y)` written into the output slice.
pub type Rhs = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;
/// A solution curve `x -> y(x)`.
pub type Solution = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;
/// The exact flow map `(x, y, h) -> y(x + h)` along the solution through `(x, y)`.
pub type Flow = Arc<dyn Fn(f64, &[f64], f64) -> Vec<f64> + Send + Sync>;

/// Tolerance for `exact(a)` matching the initial value.
const INITIAL_MATCH_TOL: f64 = 1e-12;

/// An initial-value problem `y' = f(x, y)`, `y(a) = c` on `[a, b]`.
#[derive(Clone)]
pub struct OdeProblem {
    name: String,
    dim: usize,
    rhs: Rhs,
    domain: (f64, f64),
    initial: Vec<f64>,
    exact: Option<Solution>,
    flow: Option<Flow>,
    lipschitz_hint: Option<f64>,
}

impl fmt::Debug for OdeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OdeProblem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("domain", &self.domain)
            .field("initial", &self.initial)
            .field("has_exact", &self.exact.is_some())
            .field("has_flow", &self.flow.is_some())
            .field("lipschitz_hint", &self.lipschitz_hint)
            .finish()
    }
}

impl OdeProblem {
    pub fn new<F>(
        name: impl Into<String>,
        domain: (f64, f64),
        initial: Vec<f64>,
        rhs: F,
    ) -> Result<Self>
    where
        F: Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        let (a, b) = domain;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidProblem(format!(
                "domain [{a}, {b}] must satisfy a < b"
            )));
        }
        if initial.is_empty() {
            return Err(Error::InvalidProblem("dimension must be positive".into()));
        }
        if initial.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem("initial value must be finite".into()));
        }
        Ok(Self {
            name: name.into(),
            dim: initial.len(),
            rhs: Arc::new(rhs),
            domain,
            initial,
            exact: None,
            flow: None,
            lipschitz_hint: None,
        })
    }

    /// Attaches a closed-form (or reference) solution. It must reproduce the
    /// initial value at `a`.
    pub fn with_exact<F>(mut self, exact: F) -> Result<Self>
    where
        F: Fn(f64) -> Vec<f64> + Send + Sync + 'static,
    {
        let at_start = exact(self.domain.0);
        if at_start.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: at_start.len(),
            });
        }
        let gap = max_abs_diff(&at_start, &self.initial);
        if !(gap <= INITIAL_MATCH_TOL) {
            return Err(Error::InvalidProblem(format!(
                "exact solution differs from the initial value by {gap:e} at x = {}",
                self.domain.0
            )));
        }
        self.exact = Some(Arc::new(exact));
        Ok(self)
    }

    pub fn with_flow<F>(mut self, flow: F) -> Self
    where
        F: Fn(f64, &[f64], f64) -> Vec<f64> + Send + Sync + 'static,
    {
        self.flow = Some(Arc::new(flow));
        self
    }

    pub fn with_lipschitz_hint(mut self, l: f64) -> Self {
        self.lipschitz_hint = Some(l);
        self
    }

    /// Same equation on `[lo, hi]`, started from the exact solution at `lo`.
    pub fn restricted(&self, lo: f64, hi: f64) -> Result<Self> {
        let exact = self
            .exact
            .as_ref()
            .ok_or_else(|| Error::MissingExactSolution(self.name.clone()))?;
        if !(lo < hi) {
            return Err(Error::InvalidProblem(format!(
                "restricted domain [{lo}, {hi}] must satisfy lo < hi"
            )));
        }
        let mut out = self.clone();
        out.domain = (lo, hi);
        out.initial = exact(lo);
        Ok(out)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn lipschitz_hint(&self) -> Option<f64> {
        self.lipschitz_hint
    }

    pub fn has_exact(&self) -> bool {
        self.exact.is_some()
    }

    pub fn exact(&self) -> Option<&Solution> {
        self.exact.as_ref()
    }

    pub fn flow(&self) -> Option<&Flow> {
        self.flow.as_ref()
    }

    /// Evaluates the exact solution at `x`.
    pub fn exact_at(&self, x: f64) -> Result<Vec<f64>> {
        self.exact
            .as_ref()
            .map(|e| e(x))
            .ok_or_else(|| Error::MissingExactSolution(self.name.clone()))
    }

    /// Evaluates `f(x, y)`, rejecting wrong dimensions and non-finite output.
    pub fn eval_rhs(&self, x: f64, y: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.eval_rhs_into(x, y, &mut out)?;
        Ok(out)
    }

    pub fn eval_rhs_into(&self, x: f64, y: &[f64], out: &mut [f64]) -> Result<()> {
        if y.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: y.len(),
            });
        }
        (self.rhs)(x, y, out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { x, step: None });
        }
        Ok(())
    }
}

/// Ordered `(x_m, y_m)` samples of a numerical or reference solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub xs: Vec<f64>,
    pub ys: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Number of steps, `M`.
    pub fn steps(&self) -> usize {
        self.xs.len().saturating_sub(1)
    }

    pub fn last(&self) -> Option<(f64, &[f64])> {
        Some((*self.xs.last()?, self.ys.last()?.as_slice()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &[f64])> + '_ {
        self.xs.iter().copied().zip(self.ys.iter().map(Vec::as_slice))
    }
}

/// Mesh used by the fixed-step solvers.
#[derive(Debug, Clone, PartialEq)]
pub enum StepSchedule {
    /// `x_m = a + m h`; the last step is shortened to land on `b` when
    /// `(b - a) / h` is not an integer.
    Uniform(f64),
    /// Explicit mesh points from `a` to `b`.
    Explicit(Vec<f64>),
}

impl StepSchedule {
    /// Mesh points for the interval `[a, b]`.
    pub fn mesh(&self, a: f64, b: f64) -> Result<Vec<f64>> {
        match self {
            StepSchedule::Uniform(h) => uniform_mesh(a, b, *h),
            StepSchedule::Explicit(points) => {
                if points.len() < 2 {
                    return Err(Error::InvalidSchedule("need at least two points".into()));
                }
                if points[0] != a || points[points.len() - 1] != b {
                    return Err(Error::InvalidSchedule(format!(
                        "explicit mesh must start at {a} and end at {b}"
                    )));
                }
                if points.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(Error::InvalidSchedule(
                        "explicit mesh must be strictly increasing".into(),
                    ));
                }
                Ok(points.clone())
            }
        }
    }
}

fn uniform_mesh(a: f64, b: f64, h: f64) -> Result<Vec<f64>> {
    let span = b - a;
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidSchedule(format!("step {h} must be positive")));
    }
    let ratio = span / h;
    if ratio < 1.0 - 1e-9 {
        return Err(Error::InvalidSchedule(format!(
            "step {h} exceeds the interval length {span}"
        )));
    }
    let nearest = ratio.round();
    let steps = if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as usize
    } else {
        ratio.ceil() as usize
    };
    let mut xs: Vec<f64> = (0..steps).map(|m| a + m as f64 * h).collect();
    xs.push(b);
    Ok(xs)
}

/// A single-step integrator `y_{m+1} = step(x_m, y_m, h_m)`.
pub trait Stepper {
    fn step(&self, problem: &OdeProblem, x: f64, y: &[f64], h: f64) -> Result<Vec<f64>>;
}

impl<F> Stepper for F
where
    F: Fn(&OdeProblem, f64, &[f64], f64) -> Result<Vec<f64>>,
{
    fn step(&self, problem: &OdeProblem, x: f64, y: &[f64], h: f64) -> Result<Vec<f64>> {
        self(problem, x, y, h)
    }
}

/// The classical base methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Euler,
    Heun,
}

impl Method {
    /// Classical order `p` of the method.
    pub fn order(self) -> u32 {
        match self {
            Method::Euler => 1,
            Method::Heun => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Euler => "euler",
            Method::Heun => "heun",
        }
    }
}

impl Stepper for Method {
    fn step(&self, problem: &OdeProblem, x: f64, y: &[f64], h: f64) -> Result<Vec<f64>> {
        match self {
            Method::Euler => euler_step(problem, x, y, h),
            Method::Heun => heun_step(problem, x, y, h),
        }
    }
}

/// Forward Euler: `y + h f(x, y)`.
pub fn euler_step(problem: &OdeProblem, x: f64, y: &[f64], h: f64) -> Result<Vec<f64>> {
    let k1 = problem.eval_rhs(x, y)?;
    Ok(y.iter().zip(&k1).map(|(yi, ki)| yi + h * ki).collect())
}

/// Heun's method: `y + h/2 [f(x, y) + f(x + h, y + h f(x, y))]`.
pub fn heun_step(problem: &OdeProblem, x: f64, y: &[f64], h: f64) -> Result<Vec<f64>> {
    let k1 = problem.eval_rhs(x, y)?;
    let predictor: Vec<f64> = y.iter().zip(&k1).map(|(yi, ki)| yi + h * ki).collect();
    let k2 = problem.eval_rhs(x + h, &predictor)?;
    Ok(y
        .iter()
        .zip(k1.iter().zip(&k2))
        .map(|(yi, (a, b))| yi + 0.5 * h * (a + b))
        .collect())
}

/// Runs `stepper` over the mesh of `schedule`, starting from the initial value.
pub fn solve_fixed<S: Stepper + ?Sized>(
    problem: &OdeProblem,
    schedule: &StepSchedule,
    stepper: &S,
) -> Result<Trajectory> {
    let (a, b) = problem.domain();
    let xs = schedule.mesh(a, b)?;
    let mut ys = Vec::with_capacity(xs.len());
    ys.push(problem.initial().to_vec());
    for m in 0..xs.len() - 1 {
        let (x, h) = (xs[m], xs[m + 1] - xs[m]);
        let next = stepper.step(problem, x, &ys[m], h).map_err(|e| match e {
            Error::NonFiniteState { x, step: None } => Error::NonFiniteState { x, step: Some(m) },
            other => other,
        })?;
        if next.len() != problem.dim() {
            return Err(Error::DimensionMismatch {
                expected: problem.dim(),
                got: next.len(),
            });
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState {
                x: xs[m + 1],
                step: Some(m),
            });
        }
        ys.push(next);
    }
    Ok(Trajectory { xs, ys })
}

pub(crate) fn max_abs_diff(u: &[f64], v: &[f64]) -> f64 {
    u.iter()
        .zip(v)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn constant(value: f64, y0: f64) -> OdeProblem {
        OdeProblem::new("constant", (0.0, 1.0), vec![y0], move |_, _, dy| dy[0] = value).unwrap()
    }

    #[test]
    fn euler_on_zero_field_is_fixed_point() {
        let p = constant(0.0, 3.0);
        assert_eq!(euler_step(&p, 0.0, &[3.0], 0.5).unwrap(), vec![3.0]);
        assert_eq!(heun_step(&p, 0.0, &[3.0], 0.5).unwrap(), vec![3.0]);
    }

    #[test]
    fn euler_with_constant_slope() {
        let p = constant(1.0, 0.0);
        assert_eq!(euler_step(&p, 0.0, &[0.0], 0.1).unwrap(), vec![0.1]);
    }

    #[test]
    fn heun_on_exponential_by_hand() {
        let p = exponential();
        // 1 + (1/2)(1 + 2)
        assert_eq!(heun_step(&p, 0.0, &[1.0], 1.0).unwrap(), vec![2.5]);
    }

    #[test]
    fn heun_matches_hand_expansion_on_x_plus_y() {
        let p = OdeProblem::new("x+y", (0.0, 2.0), vec![0.3], |x, y, dy| dy[0] = x + y[0])
            .unwrap();
        for &(x, y, h) in &[(0.0, 0.3, 0.1), (0.7, -1.2, 0.25), (1.5, 2.0, 0.5)] {
            let k1 = x + y;
            let k2 = (x + h) + (y + h * k1);
            let expected = y + h / 2.0 * (k1 + k2);
            let got = heun_step(&p, x, &[y], h).unwrap()[0];
            assert_relative_eq!(got, expected, max_relative = 1e-15);
        }
    }

    #[test]
    fn non_finite_rhs_reports_position() {
        let p = OdeProblem::new("blowup", (0.0, 1.0), vec![1.0], |x, _, dy| dy[0] = 1.0 / (x - 0.5))
            .unwrap();
        let err = solve_fixed(&p, &StepSchedule::Uniform(0.25), &Method::Euler).unwrap_err();
        match err {
            Error::NonFiniteState { x, step } => {
                assert_eq!(x, 0.5);
                assert_eq!(step, Some(2));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn single_step_schedule() {
        let p = constant(1.0, 0.0);
        let traj = solve_fixed(&p, &StepSchedule::Uniform(1.0), &Method::Euler).unwrap();
        assert_eq!(traj.len(), 2);
        assert_eq!(traj.xs, vec![0.0, 1.0]);
    }

    #[test]
    fn zero_field_trajectory_is_constant() {
        let p = constant(0.0, 4.0);
        for method in [Method::Euler, Method::Heun] {
            let traj = solve_fixed(&p, &StepSchedule::Uniform(0.1), &method).unwrap();
            assert!(traj.ys.iter().all(|y| y == &vec![4.0]));
        }
    }

    #[test]
    fn uniform_mesh_clamps_final_step() {
        let xs = StepSchedule::Uniform(0.3).mesh(0.0, 1.0).unwrap();
        assert_eq!(xs.len(), 5);
        assert_eq!(*xs.last().unwrap(), 1.0);
        assert_relative_eq!(xs[3], 0.9, epsilon = 1e-15);

        // 0.1 does not divide 1.0 exactly in binary, but must not create a sliver step
        let xs = StepSchedule::Uniform(0.1).mesh(0.0, 1.0).unwrap();
        assert_eq!(xs.len(), 11);
        let xs = StepSchedule::Uniform(0.01).mesh(0.0, 10.0).unwrap();
        assert_eq!(xs.len(), 1001);
    }

    #[test]
    fn schedule_validation() {
        assert!(StepSchedule::Uniform(2.0).mesh(0.0, 1.0).is_err());
        assert!(StepSchedule::Uniform(0.0).mesh(0.0, 1.0).is_err());
        assert!(StepSchedule::Explicit(vec![0.0, 0.5, 0.4, 1.0]).mesh(0.0, 1.0).is_err());
        assert!(StepSchedule::Explicit(vec![0.1, 1.0]).mesh(0.0, 1.0).is_err());
        let pts = vec![0.0, 0.1, 0.5, 1.0];
        assert_eq!(StepSchedule::Explicit(pts.clone()).mesh(0.0, 1.0).unwrap(), pts);
    }

    #[test]
    fn problem_invariants_enforced() {
        assert!(OdeProblem::new("bad", (1.0, 1.0), vec![0.0], |_, _, _| {}).is_err());
        assert!(OdeProblem::new("bad", (0.0, 1.0), vec![], |_, _, _| {}).is_err());
        let p = constant(0.0, 1.0);
        assert!(p.clone().with_exact(|_| vec![1.5]).is_err());
        assert!(p.clone().with_exact(|_| vec![1.0, 2.0]).is_err());
        assert!(p.with_exact(|_| vec![1.0]).is_ok());
    }

    #[test]
    fn euler_and_heun_orders_on_exponential() {
        let p = exponential();
        let hs = [0.1, 0.05, 0.025, 0.0125];
        for (method, target, tol) in [(Method::Euler, 2.0, 0.2), (Method::Heun, 4.0, 0.4)] {
            let errors: Vec<f64> = hs
                .iter()
                .map(|&h| {
                    let traj = solve_fixed(&p, &StepSchedule::Uniform(h), &method).unwrap();
                    traj.iter()
                        .map(|(x, y)| (y[0] - x.exp()).abs())
                        .fold(0.0, f64::max)
                })
                .collect();
            for w in errors.windows(2) {
                let ratio = w[0] / w[1];
                assert!((ratio - target).abs() <= tol, "{method:?} ratio {ratio}");
            }
        }
    }
}
