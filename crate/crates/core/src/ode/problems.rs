//! Benchmark problems and small analytic test problems.

use std::sync::{Arc, OnceLock};

use super::{DenseSolution, OdeProblem};
use crate::error::{Error, Result};

pub const BUILTIN_NAMES: [&str; 3] = ["example1", "lotka_volterra", "kepler"];

/// Tolerance of the reference solve backing the Lotka–Volterra solution.
const LV_REFERENCE_TOL: f64 = 1e-10;

/// The three benchmark problems, in a fixed order.
pub fn builtin_problems() -> Vec<OdeProblem> {
    vec![example1(), lotka_volterra(), kepler()]
}

pub fn builtin_problem(name: &str) -> Result<OdeProblem> {
    match name {
        "example1" => Ok(example1()),
        "lotka_volterra" => Ok(lotka_volterra()),
        "kepler" => Ok(kepler()),
        other => Err(Error::UnknownProblem(other.to_string())),
    }
}

/// `y' = 3/2 y/(x+1) + sqrt(x+1)`, `y(0) = 0` on `[0, 10]`, with solution
/// `y = (x+1)^{3/2} ln(x+1)`.
pub fn example1() -> OdeProblem {
    OdeProblem::new("example1", (0.0, 10.0), vec![0.0], |x, y, dy| {
        dy[0] = 1.5 * y[0] / (x + 1.0) + (x + 1.0).sqrt();
    })
    .and_then(|p| p.with_exact(|x| vec![(x + 1.0).powf(1.5) * (x + 1.0).ln()]))
    .expect("example1 is well formed")
    // every solution is (x+1)^{3/2} (ln(x+1) + c)
    .with_flow(|x, y, h| {
        let c = y[0] / (x + 1.0).powf(1.5) - (x + 1.0).ln();
        let s = x + h + 1.0;
        vec![s.powf(1.5) * (s.ln() + c)]
    })
    .with_lipschitz_hint(1.5)
}

/// Predator–prey system with all rates equal to one, `y(0) = [2, 1]` on `[0, 25]`.
/// The solution is a tight-tolerance reference solve, computed on first use.
pub fn lotka_volterra() -> OdeProblem {
    let rhs = |_x: f64, y: &[f64], dy: &mut [f64]| {
        dy[0] = y[0] - y[0] * y[1];
        dy[1] = -y[1] + y[0] * y[1];
    };
    let base = OdeProblem::new("lotka_volterra", (0.0, 25.0), vec![2.0, 1.0], rhs)
        .expect("lotka_volterra is well formed");
    let cell: Arc<OnceLock<DenseSolution>> = Arc::new(OnceLock::new());
    let reference = base.clone();
    base.with_exact(move |x| {
        cell.get_or_init(|| {
            let (_, b) = reference.domain();
            DenseSolution::integrate(&reference, b, LV_REFERENCE_TOL, LV_REFERENCE_TOL)
                .expect("Lotka-Volterra reference solve")
        })
        .eval(x)
    })
    .expect("reference reproduces the initial value")
}

/// Planar two-body problem with unit gravitational parameter, circular orbit
/// `y(0) = [1, 0, 0, 1]` on `[0, 20]`.
pub fn kepler() -> OdeProblem {
    OdeProblem::new("kepler", (0.0, 20.0), vec![1.0, 0.0, 0.0, 1.0], |_x, y, dy| {
        let r2 = y[0] * y[0] + y[1] * y[1];
        let r3 = r2 * r2.sqrt();
        dy[0] = y[2];
        dy[1] = y[3];
        dy[2] = -y[0] / r3;
        dy[3] = -y[1] / r3;
    })
    .and_then(|p| p.with_exact(|x| vec![x.cos(), x.sin(), -x.sin(), x.cos()]))
    .expect("kepler is well formed")
    .with_flow(|_x, y, h| kepler_flow(y, h))
}

/// `y' = y`, `y(0) = 1` on `[0, 1]`.
pub fn exponential() -> OdeProblem {
    OdeProblem::new("exponential", (0.0, 1.0), vec![1.0], |_, y, dy| dy[0] = y[0])
        .and_then(|p| p.with_exact(|x| vec![x.exp()]))
        .expect("exponential is well formed")
        .with_flow(|_, y, h| vec![y[0] * h.exp()])
        .with_lipschitz_hint(1.0)
}

/// Linear test equation `y' = lambda y`, `y(0) = 1` on `[0, end]`.
pub fn linear_test(lambda: f64, end: f64) -> Result<OdeProblem> {
    Ok(
        OdeProblem::new("linear_test", (0.0, end), vec![1.0], move |_, y, dy| {
            dy[0] = lambda * y[0]
        })?
        .with_exact(move |x| vec![(lambda * x).exp()])?
        .with_flow(move |_, y, h| vec![y[0] * (lambda * h).exp()])
        .with_lipschitz_hint(lambda.abs()),
    )
}

/// Stumpff functions `C(z)` and `S(z)`.
fn stumpff(z: f64) -> (f64, f64) {
    if z.abs() < 1.0 {
        // C = sum (-z)^k / (2k+2)!, S = sum (-z)^k / (2k+3)!
        let (mut c, mut s) = (0.0, 0.0);
        let mut term_c = 0.5;
        let mut term_s = 1.0 / 6.0;
        for k in 0..20 {
            c += term_c;
            s += term_s;
            let k = k as f64;
            term_c *= -z / ((2.0 * k + 3.0) * (2.0 * k + 4.0));
            term_s *= -z / ((2.0 * k + 4.0) * (2.0 * k + 5.0));
        }
        (c, s)
    } else if z > 0.0 {
        let sz = z.sqrt();
        ((1.0 - sz.cos()) / z, (sz - sz.sin()) / (sz * sz * sz))
    } else {
        let sz = (-z).sqrt();
        ((sz.cosh() - 1.0) / -z, (sz.sinh() - sz) / (sz * sz * sz))
    }
}

/// Exact two-body propagation (unit gravitational parameter) of the state
/// `[r_x, r_y, v_x, v_y]` over time `dt`, via universal variables.
pub fn kepler_flow(state: &[f64], dt: f64) -> Vec<f64> {
    let (r0, v0) = ([state[0], state[1]], [state[2], state[3]]);
    let r0n = r0[0].hypot(r0[1]);
    let v0sq = v0[0] * v0[0] + v0[1] * v0[1];
    let rv = (r0[0] * v0[0] + r0[1] * v0[1]) / r0n;
    let alpha = 2.0 / r0n - v0sq;

    let mut chi = if alpha > 0.0 { alpha * dt } else { dt / r0n };
    for _ in 0..100 {
        let z = alpha * chi * chi;
        let (c, s) = stumpff(z);
        let f = r0n * rv * chi * chi * c + (1.0 - alpha * r0n) * chi.powi(3) * s + r0n * chi - dt;
        let df = r0n * rv * chi * (1.0 - z * s) + (1.0 - alpha * r0n) * chi * chi * c + r0n;
        let delta = f / df;
        chi -= delta;
        if delta.abs() <= 1e-16 * chi.abs().max(1.0) {
            break;
        }
    }

    let z = alpha * chi * chi;
    let (c, s) = stumpff(z);
    let f = 1.0 - chi * chi / r0n * c;
    let g = dt - chi.powi(3) * s;
    let r = [f * r0[0] + g * v0[0], f * r0[1] + g * v0[1]];
    let rn = r[0].hypot(r[1]);
    let fdot = (alpha * chi.powi(3) * s - chi) / (rn * r0n);
    let gdot = 1.0 - chi * chi / rn * c;
    vec![
        r[0],
        r[1],
        fdot * r0[0] + gdot * v0[0],
        fdot * r0[1] + gdot * v0[1],
    ]
}
