//! Corrected single-step integrators.
//!
//! A base method of order `p` is augmented with `h^q N(x_m, x_{m+1}, y_m)`,
//! `q = p + 1`, where `N` approximates the scaled one-step defect of the
//! base method. Euler with `q = 2` is the Deep Euler method, Heun with `q = 3`
//! the Deep Heun method.

use crate::error::{Error, Result};
use crate::mlp::MlpParams;
use crate::ode::{solve_fixed, Method, OdeProblem, StepSchedule, Stepper, Trajectory};

/// Source of the correction term.
#[derive(Debug, Clone, PartialEq)]
pub enum CorrectorKind {
    /// A trained network fed the raw features `(x_m, x_{m+1}, y_m)`.
    Network(MlpParams),
    /// The exact scaled defect along the solution through the current state,
    /// computed from the problem's exact flow, plus a constant `perturbation`
    /// added to every component (zero for the pure oracle).
    Oracle { perturbation: f64 },
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corrector {
    kind: CorrectorKind,
    order_exponent: u32,
}

impl Corrector {
    pub fn new(kind: CorrectorKind, order_exponent: u32) -> Result<Self> {
        if order_exponent < 2 {
            return Err(Error::InvalidArgument(format!(
                "correction exponent {order_exponent} must be at least 2"
            )));
        }
        Ok(Self {
            kind,
            order_exponent,
        })
    }

    /// Correction matching `method` (exponent `p + 1`).
    pub fn for_method(kind: CorrectorKind, method: Method) -> Self {
        Self {
            kind,
            order_exponent: method.order() + 1,
        }
    }

    pub fn network(params: MlpParams, method: Method) -> Self {
        Self::for_method(CorrectorKind::Network(params), method)
    }

    pub fn oracle(method: Method) -> Self {
        Self::for_method(CorrectorKind::Oracle { perturbation: 0.0 }, method)
    }

    pub fn perturbed_oracle(method: Method, perturbation: f64) -> Self {
        Self::for_method(CorrectorKind::Oracle { perturbation }, method)
    }

    pub fn zero(method: Method) -> Self {
        Self::for_method(CorrectorKind::Zero, method)
    }

    pub fn kind(&self) -> &CorrectorKind {
        &self.kind
    }

    pub fn order_exponent(&self) -> u32 {
        self.order_exponent
    }

    pub fn network_params(&self) -> Option<&MlpParams> {
        match &self.kind {
            CorrectorKind::Network(p) => Some(p),
            _ => None,
        }
    }

    /// Checks that a network corrector maps `n + 2` features to `n` outputs.
    pub fn check_shape(&self, dim: usize) -> Result<()> {
        if let CorrectorKind::Network(p) = &self.kind {
            if p.input_dim() != dim + 2 || p.output_dim() != dim {
                return Err(Error::CorrectorShape(format!(
                    "network maps {} -> {}, problem needs {} -> {dim}",
                    p.input_dim(),
                    p.output_dim(),
                    dim + 2
                )));
            }
        }
        Ok(())
    }

    /// `N(x, x + h, y)` as it would be added after a step of `method`.
    pub fn correction(
        &self,
        method: Method,
        problem: &OdeProblem,
        x: f64,
        y: &[f64],
        h: f64,
    ) -> Result<Vec<f64>> {
        let base = method.step(problem, x, y, h)?;
        self.evaluate(problem, x, y, h, &base)
    }

    /// Evaluates the correction for the step `x -> x + h` from state `y`.
    /// `base_step` is the base method's result, which the oracle needs.
    fn evaluate(
        &self,
        problem: &OdeProblem,
        x: f64,
        y: &[f64],
        h: f64,
        base_step: &[f64],
    ) -> Result<Vec<f64>> {
        let dim = problem.dim();
        match &self.kind {
            CorrectorKind::Zero => Ok(vec![0.0; dim]),
            CorrectorKind::Network(params) => {
                self.check_shape(dim)?;
                let mut features = Vec::with_capacity(dim + 2);
                features.push(x);
                features.push(x + h);
                features.extend_from_slice(y);
                params.forward(&features).map_err(|e| match e {
                    Error::InvalidInput(_) => Error::NonFiniteState { x, step: None },
                    other => other,
                })
            }
            CorrectorKind::Oracle { perturbation } => {
                let flow = problem
                    .flow()
                    .ok_or_else(|| Error::MissingExactSolution(problem.name().to_string()))?;
                let target = flow(x, y, h);
                let scale = h.powi(self.order_exponent as i32);
                Ok(target
                    .iter()
                    .zip(base_step)
                    .map(|(t, b)| (t - b) / scale + perturbation)
                    .collect())
            }
        }
    }
}

/// `base(x, y, h) + h^q N(x, x + h, y)` for a base method of order `p = q - 1`.
pub fn corrected_step(
    method: Method,
    corrector: &Corrector,
    problem: &OdeProblem,
    x: f64,
    y: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    if corrector.order_exponent != method.order() + 1 {
        return Err(Error::OrderMismatch {
            order: method.order(),
            exponent: corrector.order_exponent,
        });
    }
    let mut next = method.step(problem, x, y, h)?;
    let correction = corrector.evaluate(problem, x, y, h, &next)?;
    let scale = h.powi(corrector.order_exponent as i32);
    for (v, c) in next.iter_mut().zip(&correction) {
        *v += scale * c;
    }
    Ok(next)
}

/// Deep Euler step: `y + h f(x, y) + h^2 N(x, x + h, y)`.
pub fn dem_step(
    problem: &OdeProblem,
    corrector: &Corrector,
    x: f64,
    y: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    corrected_step(Method::Euler, corrector, problem, x, y, h)
}

/// Deep Heun step: Heun's method plus `h^3 N(x, x + h, y)`.
pub fn dhm_step(
    problem: &OdeProblem,
    corrector: &Corrector,
    x: f64,
    y: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    corrected_step(Method::Heun, corrector, problem, x, y, h)
}

/// A base method paired with its corrector, usable with [`solve_fixed`].
#[derive(Debug, Clone)]
pub struct CorrectedStepper<'a> {
    pub method: Method,
    pub corrector: &'a Corrector,
}

impl Stepper for CorrectedStepper<'_> {
    fn step(&self, problem: &OdeProblem, x: f64, y: &[f64], h: f64) -> Result<Vec<f64>> {
        corrected_step(self.method, self.corrector, problem, x, y, h)
    }
}

pub fn solve_corrected(
    problem: &OdeProblem,
    method: Method,
    corrector: &Corrector,
    schedule: &StepSchedule,
) -> Result<Trajectory> {
    corrector.check_shape(problem.dim())?;
    if corrector.order_exponent != method.order() + 1 {
        return Err(Error::OrderMismatch {
            order: method.order(),
            exponent: corrector.order_exponent,
        });
    }
    solve_fixed(problem, schedule, &CorrectedStepper { method, corrector })
}

/// Deep Euler solve from the problem's initial value.
pub fn solve_dem(
    problem: &OdeProblem,
    corrector: &Corrector,
    schedule: &StepSchedule,
) -> Result<Trajectory> {
    solve_corrected(problem, Method::Euler, corrector, schedule)
}

/// Deep Heun solve from the problem's initial value.
pub fn solve_dhm(
    problem: &OdeProblem,
    corrector: &Corrector,
    schedule: &StepSchedule,
) -> Result<Trajectory> {
    solve_corrected(problem, Method::Heun, corrector, schedule)
}
