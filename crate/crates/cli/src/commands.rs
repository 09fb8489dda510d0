use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use deep_euler::dem::{solve_corrected, CorrectedStepper, Corrector};
use deep_euler::experiment::{train_corrector, ExperimentSpec};
use deep_euler::metrics::{
    convergence_order, gap_series, in_stability_domain, stability_scan, GapPoint,
};
use deep_euler::mlp::{load_model, save_model, MlpParams};
use deep_euler::ode::{builtin_problem, solve_fixed, Method, OdeProblem, StepSchedule, Trajectory};
use serde::Serialize;

use crate::config::{env_seed, resolve, Overrides, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{cell, OutDir, RunManifest, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMethod {
    Euler,
    Heun,
    Dem,
    Dhm,
}

impl SolveMethod {
    pub fn base(self) -> Method {
        match self {
            SolveMethod::Euler | SolveMethod::Dem => Method::Euler,
            SolveMethod::Heun | SolveMethod::Dhm => Method::Heun,
        }
    }

    pub fn corrected(self) -> bool {
        matches!(self, SolveMethod::Dem | SolveMethod::Dhm)
    }
}

/// Where the correction of a `dem`/`dhm` solve comes from.
#[derive(Debug, Clone, Default)]
pub struct CorrectorSource {
    pub model: Option<PathBuf>,
    pub oracle: bool,
}

impl CorrectorSource {
    fn describe(&self) -> String {
        match (&self.model, self.oracle) {
            (Some(p), _) => p.display().to_string(),
            (None, true) => "oracle".into(),
            (None, false) => "none".into(),
        }
    }
}

pub fn read_model(path: &Path) -> CliResult<MlpParams> {
    let bytes = fs::read(path).map_err(CliError::io(path))?;
    Ok(load_model(&bytes)?)
}

fn build_corrector(
    method: SolveMethod,
    source: &CorrectorSource,
    dim: usize,
) -> CliResult<Option<Corrector>> {
    if !method.corrected() {
        return Ok(None);
    }
    let corrector = match (&source.model, source.oracle) {
        (Some(path), false) => Corrector::network(read_model(path)?, method.base()),
        (None, true) => Corrector::oracle(method.base()),
        (Some(_), true) => {
            return Err(CliError::Config("--model and --oracle are exclusive".into()))
        }
        (None, false) => {
            return Err(CliError::Config(
                "dem and dhm need --model or --oracle".into(),
            ))
        }
    };
    corrector.check_shape(dim)?;
    Ok(Some(corrector))
}

// ---------------------------------------------------------------- train

#[derive(Debug, Serialize)]
struct TrainDetails<'a> {
    experiment: &'a ExperimentSpec,
    seeds: deep_euler::experiment::DerivedSeeds,
    widths: Vec<usize>,
    samples: usize,
    optimizer_steps: u64,
    final_loss: f64,
}

pub fn train(config: Option<&Path>, overrides: &Overrides, out: &Path) -> CliResult<()> {
    let file = match config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let spec = resolve(file, overrides, env_seed()?)?;
    let trained = train_corrector(&spec)?;

    let mut dir = OutDir::create(out)?;
    let model = dir.file("model.demn");
    fs::write(&model, save_model(&trained.params)).map_err(CliError::io(&model))?;
    let mut losses = Table::new(["epoch", "loss"]);
    for (k, loss) in trained.report.epoch_losses.iter().enumerate() {
        losses.push(vec![(k + 1).to_string(), cell(*loss)]);
    }
    losses.write(&dir.file("loss.csv"))?;

    let details = TrainDetails {
        experiment: &spec,
        seeds: spec.seeds(),
        widths: trained.params.widths().to_vec(),
        samples: trained.samples,
        optimizer_steps: trained.report.optimizer_steps,
        final_loss: *trained.report.epoch_losses.last().unwrap_or(&f64::NAN),
    };
    log::info!("final training loss {:.6e}", details.final_loss);
    dir.finish(RunManifest::new("train", details))
}

// ---------------------------------------------------------------- solve

pub struct SolveArgs {
    pub problem: String,
    pub method: SolveMethod,
    pub h: f64,
    pub corrector: CorrectorSource,
    pub from: Option<f64>,
    pub to: Option<f64>,
}

/// Problem on `[from, to]`, started from the exact value at `from`.
fn problem_on(name: &str, from: Option<f64>, to: Option<f64>) -> CliResult<OdeProblem> {
    let full = builtin_problem(name)?;
    if from.is_none() && to.is_none() {
        return Ok(full);
    }
    let (a, b) = full.domain();
    Ok(full.restricted(from.unwrap_or(a), to.unwrap_or(b))?)
}

pub struct SolveOutput {
    pub trajectory: Trajectory,
    pub gaps: Option<Vec<GapPoint>>,
    pub table: Table,
}

pub fn solve(args: &SolveArgs) -> CliResult<SolveOutput> {
    if !(args.h > 0.0 && args.h.is_finite()) {
        return Err(CliError::Config(format!("step {} must be positive", args.h)));
    }
    let problem = problem_on(&args.problem, args.from, args.to)?;
    let schedule = StepSchedule::Uniform(args.h);
    let corrector = build_corrector(args.method, &args.corrector, problem.dim())?;
    let trajectory = match &corrector {
        Some(c) => solve_corrected(&problem, args.method.base(), c, &schedule)?,
        None => solve_fixed(&problem, &schedule, &args.method.base())?,
    };
    let gaps = match &corrector {
        Some(c) => Some(gap_series(&problem, c, args.method.base(), &schedule)?),
        None => None,
    };

    let n = problem.dim();
    let mut header = vec!["x".to_string()];
    header.extend((1..=n).map(|k| format!("y_{k}")));
    if problem.has_exact() {
        header.extend((1..=n).map(|k| format!("exact_{k}")));
    }
    if gaps.is_some() {
        header.extend((1..=n).map(|k| format!("net_{k}")));
        header.extend((1..=n).map(|k| format!("res_{k}")));
        header.push("gap".into());
    }
    let mut table = Table::new(header);
    for (m, (x, y)) in trajectory.iter().enumerate() {
        let mut row = vec![cell(x)];
        row.extend(y.iter().map(|v| cell(*v)));
        if problem.has_exact() {
            row.extend(problem.exact_at(x)?.into_iter().map(cell));
        }
        if let Some(g) = &gaps {
            // quantities of the step leaving x_m; the last mesh point has none
            match g.get(m) {
                Some(p) => {
                    row.extend(p.correction.iter().map(|v| cell(*v)));
                    row.extend(p.residual.iter().map(|v| cell(*v)));
                    row.push(cell(p.gap));
                }
                None => row.extend(std::iter::repeat_n(String::new(), 2 * n + 1)),
            }
        }
        table.push(row);
    }
    Ok(SolveOutput {
        trajectory,
        gaps,
        table,
    })
}

#[derive(Debug, Serialize)]
struct SolveDetails<'a> {
    problem: &'a str,
    method: SolveMethod,
    h: f64,
    from: Option<f64>,
    to: Option<f64>,
    corrector: String,
    steps: usize,
}

pub fn solve_to(args: &SolveArgs, out: Option<&Path>) -> CliResult<()> {
    let result = solve(args)?;
    match out {
        None => result.table.to_writer(std::io::stdout().lock()),
        Some(dir) => {
            let mut dir = OutDir::create(dir)?;
            result.table.write(&dir.file("trajectory.csv"))?;
            let details = SolveDetails {
                problem: &args.problem,
                method: args.method,
                h: args.h,
                from: args.from,
                to: args.to,
                corrector: args.corrector.describe(),
                steps: result.trajectory.steps(),
            };
            dir.finish(RunManifest::new("solve", details))
        }
    }
}

// ---------------------------------------------------------------- convergence

#[derive(Debug, Serialize)]
struct ConvergenceDetails<'a> {
    problem: &'a str,
    method: SolveMethod,
    corrector: String,
    slope: f64,
    degenerate: bool,
}

pub fn convergence(
    problem: &str,
    method: SolveMethod,
    source: &CorrectorSource,
    steps: &[f64],
    out: &Path,
) -> CliResult<()> {
    let p = builtin_problem(problem)?;
    let corrector = build_corrector(method, source, p.dim())?;
    let order = match &corrector {
        Some(c) => convergence_order(
            &p,
            &CorrectedStepper {
                method: method.base(),
                corrector: c,
            },
            steps,
        ),
        None => convergence_order(&p, &method.base(), steps),
    }
    .map_err(|e| match e {
        deep_euler::Error::InvalidArgument(m) => CliError::Config(m),
        other => other.into(),
    })?;

    let mut table = Table::new(["h", "error", "local_order"]);
    for (k, (h, e)) in order.step_sizes.iter().zip(&order.errors).enumerate() {
        let local = if k == 0 {
            String::new()
        } else {
            cell((order.errors[k - 1] / e).ln() / (order.step_sizes[k - 1] / h).ln())
        };
        table.push(vec![cell(*h), cell(*e), local]);
    }
    let mut dir = OutDir::create(out)?;
    table.write(&dir.file("convergence.csv"))?;
    println!(
        "observed order {}{}",
        order.slope,
        if order.degenerate { " (errors at round-off level)" } else { "" }
    );
    let details = ConvergenceDetails {
        problem,
        method,
        corrector: source.describe(),
        slope: order.slope,
        degenerate: order.degenerate,
    };
    dir.finish(RunManifest::new("convergence", details))
}

// ---------------------------------------------------------------- stability

/// `N(x_i, x_j, y) = L y`: a single linear layer with Lipschitz bound exactly `L`,
/// obtained by clipping a larger weight row down to `L`.
pub fn linear_corrector(lipschitz: f64) -> CliResult<MlpParams> {
    use deep_euler::mlp::MlpParams;
    let mut params = MlpParams::zeros(&[3, 1])?;
    params.weights_mut()[0][[0, 2]] = 1.5 * lipschitz;
    params.clip_weights(lipschitz)?;
    Ok(params)
}

#[derive(Debug, Serialize)]
struct StabilityDetails {
    lambda: f64,
    corrector: String,
    lipschitz_bound: f64,
}

pub fn stability(
    lambda: f64,
    steps: &[f64],
    model: Option<&Path>,
    linear: Option<f64>,
    out: &Path,
) -> CliResult<()> {
    let (params, label) = match (model, linear) {
        (Some(_), Some(_)) => {
            return Err(CliError::Config("--model and --linear are exclusive".into()))
        }
        (Some(path), None) => (Some(read_model(path)?), path.display().to_string()),
        (None, Some(l)) => {
            if !(l > 0.0 && l.is_finite()) {
                return Err(CliError::Config(format!("--linear {l} must be positive")));
            }
            (Some(linear_corrector(l)?), format!("linear {l}"))
        }
        (None, None) => (None, "zero".to_string()),
    };
    let lipschitz = params.as_ref().map_or(0.0, MlpParams::lipschitz_bound);
    let corrector = match params {
        Some(p) => Corrector::network(p, Method::Euler),
        None => Corrector::zero(Method::Euler),
    };
    let scan = stability_scan(lambda, &corrector, steps).map_err(|e| match e {
        deep_euler::Error::InvalidArgument(m) => CliError::Config(m),
        other => other.into(),
    })?;

    let mut table = Table::new(["h", "bounded", "analytic_bounded"]);
    for p in &scan {
        table.push(vec![
            cell(p.h),
            u8::from(p.bounded).to_string(),
            u8::from(in_stability_domain(lambda, lipschitz, p.h)).to_string(),
        ]);
    }
    let mut dir = OutDir::create(out)?;
    table.write(&dir.file("stability.csv"))?;
    let details = StabilityDetails {
        lambda,
        corrector: label,
        lipschitz_bound: lipschitz,
    };
    dir.finish(RunManifest::new("stability", details))
}
