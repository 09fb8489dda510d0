use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use deep_euler::ode::Method;
use deep_euler_cli::commands::{self, CorrectorSource, SolveArgs, SolveMethod};
use deep_euler_cli::config::{env_seed, Overrides};
use deep_euler_cli::error::CliResult;
use deep_euler_cli::tables::{self, Table2Options, Table3Options};

#[derive(Parser)]
#[command(name = "dem", version, about = "Deep Euler method toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum BaseMethod {
    Euler,
    Heun,
}

impl From<BaseMethod> for Method {
    fn from(m: BaseMethod) -> Method {
        match m {
            BaseMethod::Euler => Method::Euler,
            BaseMethod::Heun => Method::Heun,
        }
    }
}

#[derive(clap::Args)]
struct CorrectorArgs {
    /// Checkpoint of a trained corrector network
    #[arg(long)]
    model: Option<PathBuf>,
    /// Use the exact-defect oracle instead of a network
    #[arg(long, conflicts_with = "model")]
    oracle: bool,
}

impl From<CorrectorArgs> for CorrectorSource {
    fn from(a: CorrectorArgs) -> Self {
        CorrectorSource {
            model: a.model,
            oracle: a.oracle,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a corrector network
    Train {
        /// TOML file with keys mirroring the experiment settings
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        problem: Option<String>,
        /// Base method whose defect is learned
        #[arg(long, value_enum)]
        method: Option<BaseMethod>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        samples_per_epoch: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Integrate a built-in problem with a fixed step
    Solve {
        #[arg(long)]
        problem: String,
        #[arg(long, value_enum)]
        method: SolveMethod,
        #[arg(long)]
        h: f64,
        #[command(flatten)]
        corrector: CorrectorArgs,
        /// Start of a sub-interval, initialized from the exact solution
        #[arg(long)]
        from: Option<f64>,
        #[arg(long)]
        to: Option<f64>,
        /// Output directory; CSV goes to stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Step-size / error table for example1 across four methods
    Table1 {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// eps_mean across architectures and data sizes, averaged over seeds
    Table2 {
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long)]
        seed: Option<u64>,
        /// Architectures as LAYERSxWIDTH, comma separated
        #[arg(long, value_delimiter = ',', value_parser = parse_arch)]
        archs: Option<Vec<(usize, usize)>>,
        #[arg(long, value_delimiter = ',')]
        points: Option<Vec<usize>>,
        #[arg(long)]
        samples_per_epoch: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// eps_mean and DEM error across noise levels and step sizes
    Table3 {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_delimiter = ',')]
        steps: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        noise: Option<Vec<f64>>,
        #[arg(long, default_value_t = 200)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Observed order of accuracy from successively halved steps
    Convergence {
        #[arg(long)]
        problem: String,
        #[arg(long, value_enum)]
        method: SolveMethod,
        #[command(flatten)]
        corrector: CorrectorArgs,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.05,0.025,0.0125")]
        h: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Boundedness of corrected Euler on y' = lambda y
    Stability {
        #[arg(long, default_value_t = -5.0, allow_hyphen_values = true)]
        lambda: f64,
        #[arg(long, value_delimiter = ',')]
        h: Vec<f64>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Corrector N = L y with Lipschitz bound exactly L
        #[arg(long, conflicts_with = "model")]
        linear: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_arch(s: &str) -> Result<(usize, usize), String> {
    let (l, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("{s:?} is not LAYERSxWIDTH"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{s:?}: {e}"));
    Ok((parse(l)?, parse(w)?))
}

/// Seed from the flag, else `DEM_SEED`, else zero.
fn seed_or_env(flag: Option<u64>) -> CliResult<u64> {
    Ok(match flag {
        Some(s) => s,
        None => env_seed()?.unwrap_or(0),
    })
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train {
            config,
            problem,
            method,
            seed,
            epochs,
            points,
            samples_per_epoch,
            out,
        } => {
            let overrides = Overrides {
                problem,
                method: method.map(Into::into),
                seed,
                epochs,
                points,
                samples_per_epoch,
            };
            commands::train(config.as_deref(), &overrides, &out)
        }
        Command::Solve {
            problem,
            method,
            h,
            corrector,
            from,
            to,
            out,
        } => {
            let args = SolveArgs {
                problem,
                method,
                h,
                corrector: corrector.into(),
                from,
                to,
            };
            commands::solve_to(&args, out.as_deref())
        }
        Command::Table1 { seed, out } => tables::table1(seed_or_env(seed)?, &out),
        Command::Table2 {
            seeds,
            seed,
            archs,
            points,
            samples_per_epoch,
            out,
        } => {
            let defaults = Table2Options::default();
            let opts = Table2Options {
                seeds,
                base_seed: seed_or_env(seed)?,
                archs: archs.unwrap_or(defaults.archs),
                points: points.unwrap_or(defaults.points),
                samples_per_epoch,
            };
            tables::table2(&opts, &out)
        }
        Command::Table3 {
            seed,
            steps,
            noise,
            points,
            out,
        } => {
            let defaults = Table3Options::default();
            let opts = Table3Options {
                seed: seed_or_env(seed)?,
                steps: steps.unwrap_or(defaults.steps),
                noise_levels: noise.unwrap_or(defaults.noise_levels),
                points,
            };
            tables::table3(&opts, &out)
        }
        Command::Convergence {
            problem,
            method,
            corrector,
            h,
            out,
        } => commands::convergence(&problem, method, &corrector.into(), &h, &out),
        Command::Stability {
            lambda,
            h,
            model,
            linear,
            out,
        } => commands::stability(lambda, &h, model.as_deref(), linear, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
