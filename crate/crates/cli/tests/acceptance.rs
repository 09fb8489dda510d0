//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if any
//! criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use deep_euler::dem::{solve_corrected, solve_dem, Corrector};
use deep_euler::experiment::{train_corrector, ExperimentSpec};
use deep_euler::metrics::{
    convergence_order, in_stability_domain, least_squares_slope, max_abs_error, stability_scan,
    trajectory_error,
};
use deep_euler::mlp::MlpParams;
use deep_euler::ode::{
    euler_step, example1, exponential, kepler, lotka_volterra, Method, OdeProblem, StepSchedule,
};
use deep_euler_cli::tables::{compute_table1, TABLE1_PUBLISHED};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// 1 ---------------------------------------------------------------------------

fn oracle_exactness() -> Outcome {
    let mut worst: f64 = 0.0;
    for problem in [example1(), kepler()] {
        for method in [Method::Euler, Method::Heun] {
            for h in [0.1, 1.0] {
                let schedule = StepSchedule::Uniform(h);
                let traj =
                    match solve_corrected(&problem, method, &Corrector::oracle(method), &schedule) {
                        Ok(t) => t,
                        Err(e) => return outcome(false, format!("{}: {e}", problem.name())),
                    };
                if traj.steps() > 1000 {
                    return outcome(false, "more than 1000 steps");
                }
                worst = worst.max(trajectory_error(&problem, &traj).unwrap_or(f64::INFINITY));
            }
        }
    }
    outcome(worst <= 1e-9, format!("max error {worst:.3e} (limit 1e-9)"))
}

// 2 ---------------------------------------------------------------------------

fn classical_orders() -> Outcome {
    let p = exponential();
    let hs = [0.1, 0.05, 0.025, 0.0125];
    let euler = convergence_order(&p, &Method::Euler, &hs).map(|o| o.slope);
    let heun = convergence_order(&p, &Method::Heun, &hs).map(|o| o.slope);
    match (euler, heun) {
        (Ok(e), Ok(h)) => outcome(
            (e - 1.0).abs() <= 0.1 && (h - 2.0).abs() <= 0.2,
            format!("Euler {e:.4} (1 +- 0.1), Heun {h:.4} (2 +- 0.2)"),
        ),
        (e, h) => outcome(false, format!("{e:?} {h:?}")),
    }
}

// 3 ---------------------------------------------------------------------------

fn table1_reproduction() -> Outcome {
    let table = compute_table1(0, &[0.1, 1.0, 2.0]);
    let mut pass = true;
    let mut parts = Vec::new();
    for r in &table.rows {
        let published = TABLE1_PUBLISHED.iter().find(|p| p[0] == r.h).expect("published row");
        let ok = r.dem <= r.euler / 50.0 && r.eps_mean <= 0.05;
        pass &= ok;
        parts.push(format!(
            "h={}: e_DEM {:.4} (published {}), e_Euler/50 {:.4}, eps_mean[0,5] {:.4} (published {})",
            r.h,
            r.dem,
            published[3],
            r.euler / 50.0,
            r.eps_mean,
            published[5]
        ));
    }
    outcome(pass, parts.join("; "))
}

// 4 ---------------------------------------------------------------------------

fn error_order_transfer() -> Outcome {
    let p = exponential();
    let mut points = Vec::new();
    for eta in [1e-2f64, 1e-3] {
        for h in [0.1f64, 0.05, 0.025] {
            let c = Corrector::perturbed_oracle(Method::Euler, eta);
            let err = solve_dem(&p, &c, &StepSchedule::Uniform(h))
                .and_then(|t| trajectory_error(&p, &t));
            match err {
                Ok(e) => points.push(((eta * h).ln(), e.ln())),
                Err(e) => return outcome(false, e.to_string()),
            }
        }
    }
    let slope = least_squares_slope(&points);
    outcome(
        (slope - 1.0).abs() <= 0.15,
        format!("slope {slope:.4} (1 +- 0.15)"),
    )
}

// 5 ---------------------------------------------------------------------------

fn inf_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn lipschitz_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_ratio: f64 = 0.0;
    let mut violations = 0;
    for seed in 0..20 {
        let depth = rng.random_range(2..=5);
        let widths: Vec<usize> = (0..depth).map(|_| rng.random_range(1..=12)).collect();
        let p = MlpParams::init(&widths, seed).unwrap();
        let bound = p.lipschitz_bound();
        for _ in 0..10_000 {
            let u: Vec<f64> = (0..widths[0]).map(|_| rng.random_range(-3.0..3.0)).collect();
            let spread = if rng.random_bool(0.5) { 1e-3 } else { 3.0 };
            let v: Vec<f64> = u.iter().map(|x| x + rng.random_range(-spread..spread)).collect();
            let d = inf_dist(&u, &v);
            if d == 0.0 {
                continue;
            }
            let (nu, nv) = (p.forward(&u).unwrap(), p.forward(&v).unwrap());
            let scale = nu.iter().chain(&nv).fold(1.0f64, |m, x| m.max(x.abs()));
            let out = inf_dist(&nu, &nv);
            // rounding in the two forward passes is the only allowed excess
            if out > bound * d * (1.0 + 1e-12) + 1e-13 * scale {
                violations += 1;
            }
            worst_ratio = worst_ratio.max(out / d / bound);
        }
    }
    let mut clipped_ok = true;
    for seed in 0..20 {
        let mut p = MlpParams::init(&[4, 16, 16, 16, 2], seed).unwrap();
        p.clip_weights(1.2).unwrap();
        clipped_ok &= p.lipschitz_bound() <= 1.2f64.powi(p.num_layers() as i32) * (1.0 + 1e-12);
    }
    outcome(
        violations == 0 && clipped_ok,
        format!(
            "{violations} violations in 200000 pairs, max ratio/bound {worst_ratio:.6}, clipped bounds <= 1.2^K: {clipped_ok}"
        ),
    )
}

// 6 ---------------------------------------------------------------------------

fn kink_distance(p: &MlpParams, x: &Array2<f64>, t: &Array2<f64>) -> f64 {
    let mut a = x.clone();
    let mut closest = f64::INFINITY;
    let last = p.num_layers() - 1;
    for (k, (w, b)) in p.weights().iter().zip(p.biases()).enumerate() {
        let z = a.dot(&w.t()) + b;
        if k < last {
            closest = z.iter().fold(closest, |m, v| m.min(v.abs()));
            a = z.mapv(|v| v.max(0.0));
        } else {
            closest = (&z - t).iter().fold(closest, |m, v| m.min(v.abs()));
        }
    }
    closest
}

fn gradient_correctness() -> Outcome {
    const EPS: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut nets = 0;
    let mut checked = 0usize;
    let mut worst: f64 = 0.0;
    while nets < 50 {
        let depth = rng.random_range(2..=4);
        let mut widths: Vec<usize> = (0..depth).map(|_| rng.random_range(1..=10)).collect();
        widths[0] = rng.random_range(1..=6);
        widths[depth - 1] = rng.random_range(1..=4);
        let p = MlpParams::init(&widths, rng.random()).unwrap();
        let batch = rng.random_range(1..=6);
        let x = Array2::from_shape_simple_fn((batch, widths[0]), || rng.random_range(-2.0..2.0));
        let t = Array2::from_shape_simple_fn((batch, widths[depth - 1]), || {
            rng.random_range(-2.0..2.0)
        });
        if kink_distance(&p, &x, &t) <= 1e-3 {
            continue;
        }
        nets += 1;
        let (_, grads) = p.loss_and_grad(x.view(), t.view()).unwrap();
        let loss = |q: &MlpParams| q.loss_and_grad(x.view(), t.view()).unwrap().0;
        for k in 0..p.num_layers() {
            let cols = p.weights()[k].ncols();
            for i in 0..p.weights()[k].len() {
                let (r, c) = (i / cols, i % cols);
                let (mut plus, mut minus) = (p.clone(), p.clone());
                plus.weights_mut()[k][[r, c]] += EPS;
                minus.weights_mut()[k][[r, c]] -= EPS;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * EPS);
                let g = grads.weights()[k][[r, c]];
                worst = worst.max((fd - g).abs() / (fd.abs().max(g.abs()) + 1e-4));
                checked += 1;
            }
            for j in 0..p.biases()[k].len() {
                let (mut plus, mut minus) = (p.clone(), p.clone());
                plus.biases_mut()[k][j] += EPS;
                minus.biases_mut()[k][j] -= EPS;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * EPS);
                let g = grads.biases()[k][j];
                worst = worst.max((fd - g).abs() / (fd.abs().max(g.abs()) + 1e-4));
                checked += 1;
            }
        }
    }
    outcome(
        worst <= 1e-4,
        format!("{checked} partials on 50 nets, worst relative gap {worst:.2e} (limit 1e-4)"),
    )
}

// 7 ---------------------------------------------------------------------------

fn stability() -> Outcome {
    let zero = Corrector::zero(Method::Euler);
    let grid: Vec<f64> = (1..=60).map(|k| k as f64 * 0.01).collect();
    let scan = match stability_scan(-5.0, &zero, &grid) {
        Ok(s) => s,
        Err(e) => return outcome(false, e.to_string()),
    };
    let bounded_04 = scan.iter().find(|p| (p.h - 0.4).abs() < 1e-12).map(|p| p.bounded);
    let bounded_05 = scan.iter().find(|p| (p.h - 0.5).abs() < 1e-12).map(|p| p.bounded);
    let flips = scan.windows(2).filter(|w| w[0].bounded != w[1].bounded).count();
    let last_bounded = scan.iter().filter(|p| p.bounded).map(|p| p.h).fold(0.0, f64::max);
    let analytic_agrees = scan
        .iter()
        .all(|p| p.bounded == in_stability_domain(-5.0, 0.0, p.h) && p.bounded == (p.h <= 0.4 + 1e-12));
    outcome(
        bounded_04 == Some(true) && bounded_05 == Some(false) && flips == 1 && analytic_agrees,
        format!(
            "largest bounded h {last_bounded:.2}, h=0.4 bounded {bounded_04:?}, h=0.5 bounded {bounded_05:?}, scan matches h <= 2/5: {analytic_agrees}"
        ),
    )
}

// 8 ---------------------------------------------------------------------------

/// First mesh point where plain Euler is more than `limit` from the reference,
/// or where it stops producing finite values.
fn euler_departure(p: &OdeProblem, h: f64, limit: f64) -> Option<f64> {
    let exact = p.exact()?;
    let (a, b) = p.domain();
    let steps = ((b - a) / h).round() as usize;
    let mut y = p.initial().to_vec();
    for m in 0..steps {
        let x = a + m as f64 * h;
        let x_next = a + (m + 1) as f64 * h;
        match euler_step(p, x, &y, h) {
            Ok(next) if next.iter().all(|v| v.is_finite()) => y = next,
            _ => return Some(x_next),
        }
        if inf_dist(&y, &exact(x_next)) > limit {
            return Some(x_next);
        }
    }
    None
}

fn trained_euler_corrector(problem: &str) -> Result<(Corrector, ExperimentSpec), String> {
    let spec = ExperimentSpec::defaults_for(problem, Method::Euler).map_err(|e| e.to_string())?;
    let trained = train_corrector(&spec).map_err(|e| e.to_string())?;
    Ok((trained.corrector(Method::Euler), spec))
}

fn systems_benchmarks() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();

    let lv = lotka_volterra();
    match trained_euler_corrector("lotka_volterra") {
        Ok((c, spec)) => {
            let exact = lv.exact().expect("reference solution").clone();
            let dem = solve_dem(&lv, &c, &StepSchedule::Uniform(0.5))
                .map(|t| max_abs_error(&t, |x| exact(x)));
            let departure = euler_departure(&lv, 0.5, 1.0);
            let ok = matches!(dem, Ok(e) if e <= 0.2) && departure.is_some_and(|x| x < 25.0);
            pass &= ok;
            parts.push(format!(
                "Lotka-Volterra h=0.5: e_DEM {} (limit 0.2), Euler error > 1 from x = {} ({} samples/epoch)",
                dem.map_or_else(|e| e.to_string(), |e| format!("{e:.4}")),
                departure.map_or("never".into(), |x| x.to_string()),
                spec.train
                    .samples_per_epoch
                    .map_or("all".into(), |n| n.to_string()),
            ));
        }
        Err(e) => {
            pass = false;
            parts.push(format!("Lotka-Volterra training failed: {e}"));
        }
    }

    let full = kepler();
    match (trained_euler_corrector("kepler"), full.restricted(15.0, 20.0)) {
        (Ok((c, _)), Ok(tail)) => {
            let exact = full.exact().expect("closed form").clone();
            let err = solve_dem(&tail, &c, &StepSchedule::Uniform(1.0))
                .map(|t| max_abs_error(&t, |x| exact(x)));
            pass &= matches!(err, Ok(e) if e <= 0.1);
            parts.push(format!(
                "Kepler h=1 on (15,20]: e_DEM {} (limit 0.1)",
                err.map_or_else(|e| e.to_string(), |e| format!("{e:.4}"))
            ));
        }
        (a, b) => {
            pass = false;
            parts.push(format!("Kepler setup failed: {:?} {:?}", a.err(), b.err()));
        }
    }
    outcome(pass, parts.join("; "))
}

// 9 ---------------------------------------------------------------------------

fn run_dem(args: &[&str]) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_dem"))
        .args(args)
        .env_remove("DEM_SEED")
        .env("RUST_LOG", "warn")
        .status()
        .map_err(|e| e.to_string())?;
    if status.success() {
        Ok(())
    } else {
        Err(format!("dem {args:?} exited with {status}"))
    }
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("run.toml");
    std::fs::write(
        &config,
        "problem = \"example1\"\npoints = 40\nhidden_layers = 2\nhidden_width = 16\n[train]\nepochs = 3\nseed = 12\n",
    )
    .unwrap();
    let mut compared = 0;
    for run in ["a", "b"] {
        let base = tmp.path().join(run);
        let model = base.join("train/model.demn");
        let steps: Vec<Vec<String>> = vec![
            vec!["train".into(), "--config".into(), config.display().to_string()],
            vec![
                "solve".into(),
                "--problem".into(),
                "example1".into(),
                "--method".into(),
                "dem".into(),
                "--h".into(),
                "0.5".into(),
                "--model".into(),
                model.display().to_string(),
            ],
            vec![
                "convergence".into(),
                "--problem".into(),
                "example1".into(),
                "--method".into(),
                "heun".into(),
            ],
            vec![
                "stability".into(),
                "--h".into(),
                "0.3,0.4,0.5,0.8".into(),
                "--linear".into(),
                "6".into(),
            ],
        ];
        for args in &steps {
            let out = base.join(&args[0]);
            let mut full: Vec<&str> = args.iter().map(String::as_str).collect();
            let out_str = out.display().to_string();
            full.extend(["--out", &out_str]);
            if let Err(e) = run_dem(&full) {
                return outcome(false, e);
            }
        }
    }
    for cmd in ["train", "solve", "convergence", "stability"] {
        let a = dir_bytes(&tmp.path().join("a").join(cmd));
        let mut b = dir_bytes(&tmp.path().join("b").join(cmd));
        // the solve manifest names the model path, which differs between the two runs
        if cmd == "solve" {
            for (name, bytes) in b.iter_mut() {
                if name == "manifest.json" {
                    let text = String::from_utf8(bytes.clone()).unwrap();
                    let a_model = tmp.path().join("a/train/model.demn");
                    let b_model = tmp.path().join("b/train/model.demn");
                    *bytes = text
                        .replace(&b_model.display().to_string(), &a_model.display().to_string())
                        .into_bytes();
                }
            }
        }
        if a != b {
            return outcome(false, format!("{cmd} outputs differ"));
        }
        compared += a.len();
    }
    outcome(true, format!("{compared} output files byte-identical across two runs"))
}

// ---------------------------------------------------------------------------

fn main() {
    type Check = fn() -> Outcome;
    let criteria: [(u32, &str, Check, Option<Duration>); 9] = [
        (1, "oracle exactness", oracle_exactness, Some(Duration::from_secs(1))),
        (2, "classical orders", classical_orders, Some(Duration::from_secs(1))),
        (3, "example1 error table", table1_reproduction, None),
        (4, "error-order transfer", error_order_transfer, Some(Duration::from_secs(5))),
        (5, "Lipschitz bound", lipschitz_bound, Some(Duration::from_secs(10))),
        (6, "gradient correctness", gradient_correctness, Some(Duration::from_secs(10))),
        (7, "stability boundary", stability, Some(Duration::from_secs(1))),
        (8, "systems benchmarks", systems_benchmarks, None),
        (9, "determinism", determinism, None),
    ];
    let mut failures = 0;
    for (id, name, check, budget) in criteria {
        let start = Instant::now();
        let mut result = check();
        let elapsed = start.elapsed();
        if let Some(limit) = budget {
            if elapsed > limit {
                result.pass = false;
                result.detail.push_str(&format!("; over the {limit:?} budget"));
            }
        }
        if !result.pass {
            failures += 1;
        }
        println!(
            "[{}] criterion {id} ({name}): {} [{:.2} s]",
            if result.pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64()
        );
    }
    println!("{} of 9 criteria passed", 9 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
