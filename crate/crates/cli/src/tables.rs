//! Benchmark tables on example1. Each failed cell becomes `NaN` with a log
//! entry; the remaining cells are still computed.

use std::fs;
use std::path::Path;

use deep_euler::dataset::NoiseSpec;
use deep_euler::dem::{solve_corrected, Corrector};
use deep_euler::experiment::{train_corrector, ExperimentSpec};
use deep_euler::metrics::{eps_mean, trajectory_error};
use deep_euler::mlp::save_model;
use deep_euler::ode::{example1, solve_fixed, Method, OdeProblem, StepSchedule};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::output::{cell, OutDir, RunManifest, Table};

/// End of the training region of example1.
pub const TRAIN_END: f64 = 5.0;

pub const TABLE1_STEPS: [f64; 4] = [0.01, 0.1, 1.0, 2.0];
/// Published rows: h, Euler, Heun, DEM, DHM, eps_mean, DEM/Euler.
pub const TABLE1_PUBLISHED: [[f64; 7]; 4] = [
    [0.01, 0.42, 0.0017, 0.0014, 0.000053, 0.0086, 0.0033],
    [0.1, 4.05, 0.15, 0.013, 0.0051, 0.0089, 0.0032],
    [1.0, 28.42, 8.10, 0.073, 0.32, 0.012, 0.0026],
    [2.0, 43.16, 18.78, 0.083, 1.03, 0.016, 0.0019],
];

pub const TABLE2_ARCHS: [(usize, usize); 4] = [(2, 20), (4, 40), (8, 80), (16, 160)];
pub const TABLE2_POINTS: [usize; 6] = [10, 25, 50, 100, 200, 500];
pub const TABLE2_STEP: f64 = 0.1;
/// Published `(train, test)` eps_mean, rows by point count, columns by architecture.
pub const TABLE2_PUBLISHED: [[(f64, f64); 4]; 6] = [
    [(0.21, 0.69), (0.067, 0.36), (0.033, 0.11), (0.071, 0.17)],
    [(0.20, 0.81), (0.03, 0.16), (0.014, 0.061), (0.075, 0.16)],
    [(0.081, 0.41), (0.024, 0.36), (0.022, 0.073), (0.049, 0.12)],
    [(0.017, 0.21), (0.0093, 0.14), (0.011, 0.045), (0.014, 0.052)],
    [(0.0096, 0.28), (0.0056, 0.080), (0.0093, 0.030), (0.0084, 0.035)],
    [(0.0066, 0.22), (0.0024, 0.072), (0.0028, 0.048), (0.0039, 0.048)],
];

pub const TABLE3_STEPS: [f64; 5] = [0.01, 0.1, 0.5, 1.0, 2.0];
pub const TABLE3_NOISE: [f64; 4] = [0.0, 0.01, 0.05, 0.10];
/// Published `(eps_mean, e_DEM)`, rows by step, columns by noise level.
pub const TABLE3_PUBLISHED: [[(f64, f64); 4]; 5] = [
    [(0.005, 0.001), (0.02, 0.001), (0.04, 0.01), (0.07, 0.02)],
    [(0.005, 0.01), (0.02, 0.01), (0.03, 0.01), (0.07, 0.02)],
    [(0.005, 0.06), (0.02, 0.09), (0.03, 0.35), (0.07, 0.58)],
    [(0.006, 0.12), (0.03, 0.27), (0.03, 0.50), (0.07, 0.71)],
    [(0.01, 0.24), (0.03, 0.55), (0.02, 0.45), (0.07, 0.50)],
];

/// Evaluates a cell, logging and mapping failures to `NaN`.
fn or_nan(what: &str, value: deep_euler::Result<f64>) -> f64 {
    value.unwrap_or_else(|e| {
        log::warn!("{what}: {e}");
        f64::NAN
    })
}

fn base_error(p: &OdeProblem, method: Method, h: f64) -> deep_euler::Result<f64> {
    let traj = solve_fixed(p, &StepSchedule::Uniform(h), &method)?;
    trajectory_error(p, &traj)
}

fn corrected_error(
    p: &OdeProblem,
    method: Method,
    c: &Corrector,
    h: f64,
) -> deep_euler::Result<f64> {
    let traj = solve_corrected(p, method, c, &StepSchedule::Uniform(h))?;
    trajectory_error(p, &traj)
}

/// eps_mean over the steps inside the training region `[0, 5]`.
fn train_region_eps(p: &OdeProblem, method: Method, c: &Corrector, h: f64) -> deep_euler::Result<f64> {
    let eps = eps_mean(p, c, method, &StepSchedule::Uniform(h), Some(TRAIN_END))?;
    eps.train
        .ok_or_else(|| deep_euler::Error::InvalidArgument(format!("no steps of size {h} in [0, 5]")))
}

#[derive(Debug, Clone, Serialize)]
pub struct Table1Row {
    pub h: f64,
    pub euler: f64,
    pub heun: f64,
    pub dem: f64,
    pub dhm: f64,
    pub eps_mean: f64,
    pub ratio: f64,
}

pub struct Table1 {
    pub rows: Vec<Table1Row>,
    pub dem_spec: ExperimentSpec,
    pub dhm_spec: ExperimentSpec,
    pub dem: Option<Corrector>,
    pub dhm: Option<Corrector>,
}

pub fn table1_spec(method: Method, seed: u64) -> ExperimentSpec {
    let mut spec = ExperimentSpec::defaults_for("example1", method).expect("example1 is built in");
    spec.train.seed = seed;
    spec
}

/// Trains the DEM and DHM networks and measures every method at each step size.
pub fn compute_table1(seed: u64, steps: &[f64]) -> Table1 {
    let p = example1();
    let dem_spec = table1_spec(Method::Euler, seed);
    let dhm_spec = table1_spec(Method::Heun, seed);
    let train = |spec: &ExperimentSpec| match train_corrector(spec) {
        Ok(t) => Some(t.corrector(spec.method)),
        Err(e) => {
            log::warn!("training the {} corrector failed: {e}", spec.method.name());
            None
        }
    };
    let dem = train(&dem_spec);
    let dhm = train(&dhm_spec);
    let missing = || Err(deep_euler::Error::InvalidArgument("corrector unavailable".into()));

    let rows = steps
        .iter()
        .map(|&h| {
            let euler = or_nan("euler", base_error(&p, Method::Euler, h));
            let dem_err = or_nan(
                "dem",
                dem.as_ref()
                    .map_or_else(missing, |c| corrected_error(&p, Method::Euler, c, h)),
            );
            Table1Row {
                h,
                euler,
                heun: or_nan("heun", base_error(&p, Method::Heun, h)),
                dem: dem_err,
                dhm: or_nan(
                    "dhm",
                    dhm.as_ref()
                        .map_or_else(missing, |c| corrected_error(&p, Method::Heun, c, h)),
                ),
                eps_mean: or_nan(
                    "eps_mean",
                    dem.as_ref()
                        .map_or_else(missing, |c| train_region_eps(&p, Method::Euler, c, h)),
                ),
                ratio: dem_err / euler,
            }
        })
        .collect();
    Table1 {
        rows,
        dem_spec,
        dhm_spec,
        dem,
        dhm,
    }
}

fn published_row(h: f64) -> Option<&'static [f64; 7]> {
    TABLE1_PUBLISHED.iter().find(|r| r[0] == h)
}

#[derive(Debug, Serialize)]
struct Table1Details<'a> {
    dem: &'a ExperimentSpec,
    dhm: &'a ExperimentSpec,
    eps_mean_region: (f64, f64),
}

pub fn table1(seed: u64, out: &Path) -> CliResult<()> {
    let t = compute_table1(seed, &TABLE1_STEPS);
    let mut table = Table::new([
        "h",
        "euler",
        "heun",
        "dem",
        "dhm",
        "eps_mean",
        "ratio",
        "published_euler",
        "published_heun",
        "published_dem",
        "published_dhm",
        "published_eps_mean",
        "published_ratio",
    ]);
    for r in &t.rows {
        let mut row: Vec<String> = [r.h, r.euler, r.heun, r.dem, r.dhm, r.eps_mean, r.ratio]
            .into_iter()
            .map(cell)
            .collect();
        match published_row(r.h) {
            Some(p) => row.extend(p[1..].iter().map(|v| cell(*v))),
            None => row.extend(std::iter::repeat_n(String::new(), 6)),
        }
        table.push(row);
    }
    let mut dir = OutDir::create(out)?;
    table.write(&dir.file("table1.csv"))?;
    for (name, c) in [("dem.demn", &t.dem), ("dhm.demn", &t.dhm)] {
        if let Some(params) = c.as_ref().and_then(Corrector::network_params) {
            let path = dir.file(name);
            fs::write(&path, save_model(params)).map_err(CliError::io(&path))?;
        }
    }
    let details = Table1Details {
        dem: &t.dem_spec,
        dhm: &t.dhm_spec,
        eps_mean_region: (0.0, TRAIN_END),
    };
    dir.finish(RunManifest::new("table1", details))
}

#[derive(Debug, Clone, Serialize)]
pub struct Table2Options {
    pub seeds: u64,
    pub base_seed: u64,
    pub archs: Vec<(usize, usize)>,
    pub points: Vec<usize>,
    pub samples_per_epoch: Option<usize>,
}

impl Default for Table2Options {
    fn default() -> Self {
        Self {
            seeds: 10,
            base_seed: 0,
            archs: TABLE2_ARCHS.to_vec(),
            points: TABLE2_POINTS.to_vec(),
            samples_per_epoch: None,
        }
    }
}

/// Mean train and test eps_mean over the successful seeds, with their count.
pub fn table2_cell(layers: usize, width: usize, points: usize, opts: &Table2Options) -> (f64, f64, u64) {
    let p = example1();
    let (mut train_sum, mut test_sum, mut ok) = (0.0, 0.0, 0u64);
    for k in 0..opts.seeds {
        let mut spec = table1_spec(Method::Euler, opts.base_seed.wrapping_add(k));
        spec.hidden_layers = layers;
        spec.hidden_width = width;
        spec.points = points;
        spec.train.samples_per_epoch = opts.samples_per_epoch;
        let result = train_corrector(&spec).and_then(|t| {
            eps_mean(
                &p,
                &t.corrector(Method::Euler),
                Method::Euler,
                &StepSchedule::Uniform(TABLE2_STEP),
                Some(TRAIN_END),
            )
        });
        match result {
            Ok(e) => match (e.train, e.test) {
                (Some(a), Some(b)) if a.is_finite() && b.is_finite() => {
                    train_sum += a;
                    test_sum += b;
                    ok += 1;
                }
                _ => log::warn!("{layers}x{width}, {points} points, seed {k}: non-finite eps_mean"),
            },
            Err(e) => log::warn!("{layers}x{width}, {points} points, seed {k}: {e}"),
        }
    }
    if ok == 0 {
        (f64::NAN, f64::NAN, 0)
    } else {
        (train_sum / ok as f64, test_sum / ok as f64, ok)
    }
}

pub fn table2(opts: &Table2Options, out: &Path) -> CliResult<()> {
    let mut table = Table::new([
        "layers",
        "width",
        "points",
        "eps_train",
        "eps_test",
        "runs",
        "published_train",
        "published_test",
    ]);
    for &points in &opts.points {
        for &(layers, width) in &opts.archs {
            let (train, test, runs) = table2_cell(layers, width, points, opts);
            let published = TABLE2_POINTS
                .iter()
                .position(|&n| n == points)
                .zip(TABLE2_ARCHS.iter().position(|&a| a == (layers, width)))
                .map(|(i, j)| TABLE2_PUBLISHED[i][j]);
            table.push(vec![
                layers.to_string(),
                width.to_string(),
                points.to_string(),
                cell(train),
                cell(test),
                runs.to_string(),
                published.map_or_else(String::new, |p| cell(p.0)),
                published.map_or_else(String::new, |p| cell(p.1)),
            ]);
        }
    }
    let mut dir = OutDir::create(out)?;
    table.write(&dir.file("table2.csv"))?;
    dir.finish(RunManifest::new("table2", opts))
}

#[derive(Debug, Clone, Serialize)]
pub struct Table3Options {
    pub seed: u64,
    pub steps: Vec<f64>,
    pub noise_levels: Vec<f64>,
    /// Measurements per noise level.
    pub points: usize,
}

impl Default for Table3Options {
    fn default() -> Self {
        Self {
            seed: 0,
            steps: TABLE3_STEPS.to_vec(),
            noise_levels: TABLE3_NOISE.to_vec(),
            points: 200,
        }
    }
}

pub fn table3(opts: &Table3Options, out: &Path) -> CliResult<()> {
    for &level in &opts.noise_levels {
        NoiseSpec::relative(level)
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let p = example1();
    let mut table = Table::new([
        "h",
        "noise",
        "eps_mean",
        "e_dem",
        "published_eps_mean",
        "published_e_dem",
    ]);
    let mut specs = Vec::new();
    let mut cells = vec![vec![(f64::NAN, f64::NAN); opts.noise_levels.len()]; opts.steps.len()];
    for (j, &level) in opts.noise_levels.iter().enumerate() {
        let mut spec = table1_spec(Method::Euler, opts.seed);
        spec.noise = NoiseSpec::relative(level);
        spec.points = opts.points;
        let trained = train_corrector(&spec);
        specs.push(spec);
        let corrector = match trained {
            Ok(t) => t.corrector(Method::Euler),
            Err(e) => {
                log::warn!("noise {level}: training failed: {e}");
                continue;
            }
        };
        for (i, &h) in opts.steps.iter().enumerate() {
            cells[i][j] = (
                or_nan("eps_mean", train_region_eps(&p, Method::Euler, &corrector, h)),
                or_nan("e_dem", corrected_error(&p, Method::Euler, &corrector, h)),
            );
        }
    }
    for (i, &h) in opts.steps.iter().enumerate() {
        for (j, &level) in opts.noise_levels.iter().enumerate() {
            let published = TABLE3_STEPS
                .iter()
                .position(|&s| s == h)
                .zip(TABLE3_NOISE.iter().position(|&n| n == level))
                .map(|(a, b)| TABLE3_PUBLISHED[a][b]);
            table.push(vec![
                cell(h),
                cell(level),
                cell(cells[i][j].0),
                cell(cells[i][j].1),
                published.map_or_else(String::new, |p| cell(p.0)),
                published.map_or_else(String::new, |p| cell(p.1)),
            ]);
        }
    }
    let mut dir = OutDir::create(out)?;
    table.write(&dir.file("table3.csv"))?;
    #[derive(Serialize)]
    struct Details<'a> {
        options: &'a Table3Options,
        experiments: Vec<ExperimentSpec>,
        eps_mean_region: (f64, f64),
    }
    let details = Details {
        options: opts,
        experiments: specs,
        eps_mean_region: (0.0, TRAIN_END),
    };
    dir.finish(RunManifest::new("table3", details))
}
