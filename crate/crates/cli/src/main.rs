use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use esn_ode::harness::run::{resolve, solve_resolved};
use esn_ode::harness::{compare, output, write_comparison, write_hyperopt, write_run, ExperimentConfig, ProblemSpec};
use esn_ode::Error;

/// Solve ODEs with echo-state reservoirs.
#[derive(Parser)]
#[command(name = "esn-ode", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Random seed; overrides the config.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for per-IC work and search batches.
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form solve of a linear first-order ODE.
    SolveLinear(Common),
    /// Linearized start plus gradient descent for a Bernoulli ODE.
    SolveBernoulli(Common),
    /// Gradient-descent solve of an ODE system.
    SolveSystem(Common),
    /// Search hyperparameters and write a tuned config.
    Hyperopt(Common),
    /// Reservoir solve against a baseline integrator.
    Compare(Common),
    /// Write gnuplot scripts for the CSVs in the output directory, solving
    /// the config first when one is given.
    EmitFigures(Common),
}

fn class(e: &Error) -> &'static str {
    match e {
        Error::Config(_) | Error::InvalidHyperParam { .. } | Error::DimensionMismatch(_) | Error::InvalidGrid(_) => "config",
        Error::SingularCoefficient { .. } => "singular coefficient",
        Error::NonFiniteState { .. } | Error::NonFinite { .. } | Error::NonFiniteLoss => "non-finite",
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => "io",
        _ => "numerical",
    }
}

fn load(common: &Common) -> Result<ExperimentConfig, Error> {
    let path = common.config.as_ref().ok_or_else(|| Error::Config("--config PATH is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = common.seed {
        cfg = cfg.with_seed(s);
    }
    if let Some(o) = &common.out {
        cfg.out = Some(o.clone());
    }
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn expect_kind(cfg: &ExperimentConfig, kind: &str) -> Result<(), Error> {
    if cfg.problem.name() == kind {
        Ok(())
    } else {
        Err(Error::Config(format!("config describes a {} problem, not {kind}", cfg.problem.name())))
    }
}

fn command_name(p: &ProblemSpec) -> &'static str {
    match p {
        ProblemSpec::Linear { .. } => "solve-linear",
        ProblemSpec::Bernoulli { .. } => "solve-bernoulli",
        ProblemSpec::System { .. } => "solve-system",
    }
}

fn solve_and_write(cfg: &ExperimentConfig, command: &str) -> Result<(), Error> {
    let dir = out_dir(cfg);
    let out = solve_resolved(resolve(cfg, false)?)?;
    let files = write_run(&dir, command, &out)?;
    let rmsr = out.result.rmsr().into_iter().fold(0.0, f64::max);
    println!(
        "{} IC(s), declare {:.3} s, fit {:.3} s, max RMSR {rmsr:.3e}; {} files in {}",
        out.result.solutions.len(),
        out.declare_secs(),
        out.result.timing.fit_secs,
        files.len(),
        dir.display()
    );
    Ok(())
}

fn execute(cmd: Command) -> Result<(), Error> {
    let common = match &cmd {
        Command::SolveLinear(c)
        | Command::SolveBernoulli(c)
        | Command::SolveSystem(c)
        | Command::Hyperopt(c)
        | Command::Compare(c)
        | Command::EmitFigures(c) => c.clone(),
    };
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("--threads: {e}")))?;
    }
    match cmd {
        Command::SolveLinear(_) => {
            let cfg = load(&common)?;
            expect_kind(&cfg, "linear")?;
            solve_and_write(&cfg, "solve-linear")
        }
        Command::SolveBernoulli(_) => {
            let cfg = load(&common)?;
            expect_kind(&cfg, "bernoulli")?;
            solve_and_write(&cfg, "solve-bernoulli")
        }
        Command::SolveSystem(_) => {
            let cfg = load(&common)?;
            expect_kind(&cfg, "system")?;
            solve_and_write(&cfg, "solve-system")
        }
        Command::Hyperopt(_) => {
            let cfg = load(&common)?;
            let dir = out_dir(&cfg);
            let resolved = resolve(&cfg, true)?;
            let files = write_hyperopt(&dir, &resolved)?;
            let opt = resolved.optimization.as_ref().expect("search ran");
            println!(
                "{} evaluations in {:.1} s, best objective {:.6}; {} files in {}",
                opt.history.len(),
                resolved.optimize_secs,
                opt.best_objective,
                files.len(),
                dir.display()
            );
            Ok(())
        }
        Command::Compare(_) => {
            let cfg = load(&common)?;
            let dir = out_dir(&cfg);
            let report = compare(&cfg)?;
            let files = write_comparison(&dir, &report)?;
            println!("{}", serde_json::to_string(&summary(&report))?);
            println!("{} files in {}", files.len(), dir.display());
            Ok(())
        }
        Command::EmitFigures(_) => {
            let dir = match &common.config {
                Some(_) => {
                    let cfg = load(&common)?;
                    solve_and_write(&cfg, command_name(&cfg.problem))?;
                    out_dir(&cfg)
                }
                None => common.out.clone().ok_or_else(|| Error::Config("give --config PATH or --out DIR".into()))?,
            };
            emit(&dir)
        }
    }
}

fn summary(r: &esn_ode::harness::ComparisonReport) -> serde_json::Value {
    let mut v = serde_json::json!({
        "reference": r.reference,
        "ics": r.ics.len(),
        "rc_per_ic_secs": r.rc.per_ic_secs,
        "rc_worst_error": r.rc.worst_error(),
    });
    if let Some(b) = &r.baseline {
        v[format!("{}_per_ic_secs", b.method)] = b.per_ic_secs.into();
        v[format!("{}_worst_error", b.method)] = b.worst_error().into();
    }
    v
}

fn emit(dir: &Path) -> Result<(), Error> {
    if !dir.is_dir() {
        return Err(Error::Config(format!("{} is not a directory", dir.display())));
    }
    let scripts = output::write_gnuplot_scripts(dir)?;
    if scripts.is_empty() {
        return Err(Error::Config(format!("no known CSV files in {}", dir.display())));
    }
    println!("wrote {} in {}", scripts.join(", "), dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("esn-ode: {} error: {e}", class(&e));
            ExitCode::from(match class(&e) {
                "config" => 2,
                "singular coefficient" => 3,
                "non-finite" => 4,
                "io" => 5,
                _ => 1,
            })
        }
    }
}
