//! Experiment drivers: resolve a config, solve, compare against a baseline
//! integrator and write everything to an output directory.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{Baseline, ExperimentConfig, HyperBlock, HyperSource, ProblemSpec, TrainingOverrides};
use super::exact::{bernoulli_exact, linear_exact, Solution};
use super::output::{
    history_table, ic_file, quoted, render_manifest, rmsr_table, solution_table, trace_table, write_gnuplot_scripts, Table,
};
use crate::bernoulli::solve_bernoulli;
use crate::error::{Error, Result};
use crate::gd::{GdConfig, TrainTrace};
use crate::hyperopt::{optimize, OptimizeResult, SearchSpace};
use crate::integrate::{integrate_on_grid, Method, VectorField};
use crate::linear::{solve_linear, SolveResult};
use crate::reservoir::{build_reservoir, HyperParams, Reservoir};
use crate::system::solve_system_bundle;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Search result plus the config it resolves to.
pub struct Resolved {
    /// The input config with literal hyperparameters, the seed applied and the
    /// training settings spelled out.
    pub config: ExperimentConfig,
    pub hyper: HyperParams,
    pub training: GdConfig,
    pub optimization: Option<OptimizeResult>,
    pub optimize_secs: f64,
}

/// Run the hyperparameter search when `hyper = "optimize"` (or when `force`
/// is set and a `[hyperopt]` section exists) and return a config that
/// reproduces the run without searching.
pub fn resolve(cfg: &ExperimentConfig, force_search: bool) -> Result<Resolved> {
    let mut training = cfg.training();
    let search = matches!(cfg.hyper, HyperSource::Keyword(_)) || force_search;
    let (mut hyper, optimization, optimize_secs) = if search {
        let section = cfg
            .hyperopt
            .as_ref()
            .ok_or_else(|| Error::Config("hyperparameter search needs a [hyperopt] section".into()))?;
        let mut base = match (&section.base, &cfg.hyper) {
            (Some(b), _) => b.clone(),
            (None, HyperSource::Literal(b)) => b.params.clone(),
            (None, HyperSource::Keyword(_)) => cfg.preset_hyper(),
        };
        if let Some(s) = cfg.seed {
            base.random_seed = s;
        }
        let space = SearchSpace { dims: section.space.clone() };
        let start = Instant::now();
        let opt = optimize(&space, &cfg.cv_problem()?, &base, &training, &section.bo)?;
        let secs = start.elapsed().as_secs_f64();
        training = opt.best_gd.clone();
        (opt.best_hyper.clone(), Some(opt), secs)
    } else {
        let HyperSource::Literal(b) = &cfg.hyper else { unreachable!() };
        (b.params.clone(), None, 0.0)
    };
    if let Some(s) = cfg.seed {
        hyper.random_seed = s;
    }
    hyper.validate()?;
    let mut config = cfg.clone();
    config.hyper = HyperSource::Literal(HyperBlock { params: hyper.clone(), training: TrainingOverrides::default() });
    config.training = match cfg.problem {
        ProblemSpec::Linear { .. } => cfg.training.clone(),
        _ => Some(training.clone()),
    };
    config.run = None;
    Ok(Resolved { config, hyper, training, optimization, optimize_secs })
}

pub struct RunOutput {
    pub resolved: Resolved,
    pub reservoir: Reservoir,
    pub result: SolveResult,
    pub traces: Vec<TrainTrace>,
    pub energy_violation: Vec<Vec<f64>>,
    /// Reservoir construction time, added to the declare phase.
    pub build_secs: f64,
}

impl RunOutput {
    pub fn declare_secs(&self) -> f64 {
        self.build_secs + self.result.timing.declare_secs
    }
}

/// Resolve hyperparameters, build the reservoir and solve every IC.
pub fn solve(cfg: &ExperimentConfig) -> Result<RunOutput> {
    solve_resolved(resolve(cfg, false)?)
}

pub fn solve_resolved(resolved: Resolved) -> Result<RunOutput> {
    let cfg = &resolved.config;
    let start = Instant::now();
    let reservoir = build_reservoir(&resolved.hyper)?;
    let build_secs = start.elapsed().as_secs_f64();
    let (result, traces, energy_violation) = match &cfg.problem {
        ProblemSpec::Linear { .. } => (solve_linear(&cfg.linear_ode().expect("linear"), &reservoir)?, Vec::new(), Vec::new()),
        ProblemSpec::Bernoulli { init, .. } => {
            let sol = solve_bernoulli(&cfg.bernoulli_ode().expect("bernoulli"), &reservoir, &resolved.training, *init)?;
            (sol.result, sol.traces, Vec::new())
        }
        ProblemSpec::System { .. } => {
            let sys = cfg.ode_system()?.expect("system");
            let sol = solve_system_bundle(&sys, &cfg.ic_values(), &reservoir, &resolved.training)?;
            (sol.result, sol.traces, sol.energy_violation)
        }
    };
    Ok(RunOutput { resolved, reservoir, result, traces, energy_violation, build_secs })
}

fn run_entries(command: &str, out: &RunOutput) -> Vec<(&'static str, String)> {
    let r = &out.resolved;
    let mut v = vec![
        ("command", quoted(command)),
        ("version", quoted(VERSION)),
        ("seed", r.hyper.random_seed.to_string()),
        ("hyper_source", quoted(if r.optimization.is_some() { "optimized" } else { "literal" })),
        ("grid_points", out.result.times.len().to_string()),
        ("n_features", (r.hyper.n_nodes + 1).to_string()),
        ("recurrent_nnz", out.reservoir.recurrent_nnz().to_string()),
        ("declare_secs", format!("{:.3}", out.declare_secs())),
        ("fit_secs", format!("{:.3}", out.result.timing.fit_secs)),
    ];
    if let Some(o) = &r.optimization {
        v.push(("optimize_secs", format!("{:.3}", r.optimize_secs)));
        v.push(("best_objective", format!("{:?}", o.best_objective)));
        v.push(("evaluations", o.history.len().to_string()));
    }
    v
}

/// Write per-IC solutions, RMSR, training traces, search history, the
/// reservoir, plot scripts and `manifest.toml` into `dir`.
pub fn write_run(dir: &Path, command: &str, out: &RunOutput) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut put = |name: String, t: Table| -> Result<()> {
        let p = dir.join(&name);
        t.write(&p)?;
        files.push(p);
        Ok(())
    };
    for (i, sol) in out.result.solutions.iter().enumerate() {
        put(ic_file("solution", i), solution_table(&out.result.times, sol))?;
    }
    put("rmsr.csv".into(), rmsr_table(&out.result))?;
    for (i, tr) in out.traces.iter().enumerate() {
        put(ic_file("loss", i), trace_table(tr))?;
    }
    for (i, ev) in out.energy_violation.iter().enumerate() {
        let rows = out.result.times.iter().zip(ev).map(|(&t, &e)| vec![t, e]).collect();
        put(ic_file("energy", i), Table { header: vec!["t".into(), "energy_violation".into()], rows })?;
    }
    if let Some(o) = &out.resolved.optimization {
        put("history.csv".into(), history_table(o))?;
    }
    let res_path = dir.join("reservoir.json");
    out.reservoir.save(&res_path)?;
    files.push(res_path);
    let manifest = dir.join("manifest.toml");
    std::fs::write(&manifest, render_manifest(&out.resolved.config, &run_entries(command, out))?)?;
    files.push(manifest);
    for s in write_gnuplot_scripts(dir)? {
        files.push(dir.join(s));
    }
    Ok(files)
}

/// Run the search only and write `history.csv`, `tuned.toml` (a config with
/// the best hyperparameters filled in) and `manifest.toml`.
pub fn write_hyperopt(dir: &Path, resolved: &Resolved) -> Result<Vec<PathBuf>> {
    let opt = resolved.optimization.as_ref().ok_or_else(|| Error::Config("no search was run".into()))?;
    std::fs::create_dir_all(dir)?;
    let history = dir.join("history.csv");
    history_table(opt).write(&history)?;
    let tuned = dir.join("tuned.toml");
    std::fs::write(&tuned, render_manifest(&resolved.config, &[])?)?;
    let best: Vec<String> = opt.names.iter().zip(&opt.best_values).map(|(n, v)| format!("{n} = {v:?}")).collect();
    let entries = [
        ("command", quoted("hyperopt")),
        ("version", quoted(VERSION)),
        ("optimize_secs", format!("{:.3}", resolved.optimize_secs)),
        ("best_objective", format!("{:?}", opt.best_objective)),
        ("evaluations", opt.history.len().to_string()),
        ("best", format!("{{ {} }}", best.join(", "))),
    ];
    let manifest = dir.join("manifest.toml");
    std::fs::write(&manifest, render_manifest(&resolved.config, &entries)?)?;
    let mut files = vec![history, tuned, manifest];
    for s in write_gnuplot_scripts(dir)? {
        files.push(dir.join(s));
    }
    Ok(files)
}

/// Timing and accuracy of one method across the IC bundle.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    /// Shared setup plus the first IC; zero for integrators.
    pub declare_secs: f64,
    /// Wall time for the ICs after the first (RC) or for all ICs (integrators).
    pub fit_secs: f64,
    /// `fit_secs` per IC it covers.
    pub per_ic_secs: f64,
    pub max_error: Vec<f64>,
    pub rms_error: Vec<f64>,
}

impl MethodReport {
    pub fn worst_error(&self) -> f64 {
        self.max_error.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean_rms_error(&self) -> f64 {
        self.rms_error.iter().sum::<f64>() / self.rms_error.len().max(1) as f64
    }
}

#[derive(Debug, Serialize)]
pub struct ComparisonReport {
    /// `"exact"` or `"rk4"` (four-stage Runge–Kutta with ten substeps per
    /// grid interval).
    pub reference: String,
    pub ics: Vec<Vec<f64>>,
    pub grid_points: usize,
    pub dt: f64,
    pub rc: MethodReport,
    pub baseline: Option<MethodReport>,
    #[serde(skip)]
    pub times: Vec<f64>,
    /// RC residual per IC (first equation).
    #[serde(skip)]
    pub rc_residual: Vec<Vec<f64>>,
    /// Baseline states per IC, one vector per grid point.
    #[serde(skip)]
    pub baseline_states: Vec<Vec<Vec<f64>>>,
    #[serde(skip)]
    pub run: Option<RunOutput>,
}

impl std::fmt::Debug for RunOutput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RunOutput").field("ics", &self.result.solutions.len()).finish()
    }
}

enum Reference<'a> {
    Exact(Solution),
    Field(&'a dyn VectorField),
}

fn errors(approx: &[Vec<f64>], reference: &[Vec<f64>]) -> (f64, f64) {
    let mut max = 0.0f64;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (a, r) in approx.iter().zip(reference) {
        for (x, y) in a.iter().zip(r) {
            let e = (x - y).abs();
            max = max.max(e);
            sum += e * e;
            count += 1;
        }
    }
    (max, (sum / count.max(1) as f64).sqrt())
}

/// Solve with the reservoir and with the configured baseline on the same grid
/// and ICs, and score both against the exact solution when one is known, else
/// against RK4 at a tenth of the step.
pub fn compare(cfg: &ExperimentConfig) -> Result<ComparisonReport> {
    let out = solve(cfg)?;
    let cfg = &out.resolved.config;
    let times = out.result.times.clone();
    let ics = cfg.ic_values();
    let n = ics.len();

    let lin = cfg.linear_ode();
    let ber = cfg.bernoulli_ode();
    let sys = cfg.ode_system()?;
    let field: &dyn VectorField = match (&lin, &ber, &sys) {
        (Some(o), _, _) => o,
        (_, Some(o), _) => o,
        (_, _, Some(s)) => &*s.dynamics,
        _ => unreachable!(),
    };
    let reference = match (lin.as_ref().and_then(linear_exact), ber.as_ref().and_then(bernoulli_exact)) {
        (Some(s), _) | (_, Some(s)) => Reference::Exact(s),
        _ => Reference::Field(field),
    };
    let reference_states = |ic: &[f64]| -> Result<Vec<Vec<f64>>> {
        match &reference {
            Reference::Exact(f) => Ok(vec![times.iter().map(|&t| f(ic[0], t)).collect()]),
            Reference::Field(fd) => {
                let tr = integrate_on_grid(Method::Rk4, *fd, ic, &times, 10)?;
                Ok((0..ic.len()).map(|i| tr.component(i)).collect())
            }
        }
    };
    let refs: Vec<Vec<Vec<f64>>> = ics.iter().map(|ic| reference_states(ic)).collect::<Result<_>>()?;

    let (mut rc_max, mut rc_rms) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for (sol, r) in out.result.solutions.iter().zip(&refs) {
        let (m, s) = errors(&sol.y, r);
        rc_max.push(m);
        rc_rms.push(s);
    }
    let rc = MethodReport {
        method: "rc".into(),
        declare_secs: out.declare_secs(),
        fit_secs: out.result.timing.fit_secs,
        per_ic_secs: if n > 1 { out.result.timing.fit_secs / (n - 1) as f64 } else { 0.0 },
        max_error: rc_max,
        rms_error: rc_rms,
    };

    let mut baseline_states = Vec::new();
    let baseline = match cfg.baseline {
        Baseline::None => None,
        b => {
            let method = if b == Baseline::Euler { Method::Euler } else { Method::Rk4 };
            let start = Instant::now();
            let trajs = ics.iter().map(|ic| integrate_on_grid(method, field, ic, &times, 1)).collect::<Result<Vec<_>>>()?;
            let fit_secs = start.elapsed().as_secs_f64();
            let (mut mx, mut rms) = (Vec::with_capacity(n), Vec::with_capacity(n));
            for (tr, r) in trajs.iter().zip(&refs) {
                let comps: Vec<Vec<f64>> = (0..r.len()).map(|i| tr.component(i)).collect();
                let (m, s) = errors(&comps, r);
                mx.push(m);
                rms.push(s);
            }
            baseline_states = trajs.into_iter().map(|t| t.states).collect();
            Some(MethodReport {
                method: if b == Baseline::Euler { "euler" } else { "rk4" }.into(),
                declare_secs: 0.0,
                fit_secs,
                per_ic_secs: fit_secs / n as f64,
                max_error: mx,
                rms_error: rms,
            })
        }
    };
    Ok(ComparisonReport {
        reference: if matches!(reference, Reference::Exact(_)) { "exact" } else { "rk4" }.into(),
        ics,
        grid_points: times.len(),
        dt: out.resolved.hyper.dt,
        rc,
        baseline,
        rc_residual: out.result.solutions.iter().map(|s| s.residual[0].clone()).collect(),
        times,
        baseline_states,
        run: Some(out),
    })
}

/// Write the run files plus `errors.csv`, `baseline_*.csv` and
/// `comparison.json`.
pub fn write_comparison(dir: &Path, report: &ComparisonReport) -> Result<Vec<PathBuf>> {
    let run = report.run.as_ref().ok_or_else(|| Error::Config("report has no run attached".into()))?;
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for (i, states) in report.baseline_states.iter().enumerate() {
        let d = states.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        if d == 1 {
            header.push("y".into());
        } else {
            header.extend((0..d).map(|j| format!("y_{j}")));
        }
        let rows = report.times.iter().zip(states).map(|(&t, s)| std::iter::once(t).chain(s.iter().copied()).collect()).collect();
        let p = dir.join(ic_file("baseline", i));
        Table { header, rows }.write(&p)?;
        files.push(p);
    }
    let mut errs = Table::new(&["ic", "psi0", "rc_max_error", "rc_rms_error", "baseline_max_error", "baseline_rms_error"]);
    for i in 0..report.ics.len() {
        let (bm, br) = report.baseline.as_ref().map_or((f64::NAN, f64::NAN), |b| (b.max_error[i], b.rms_error[i]));
        errs.rows.push(vec![i as f64, report.ics[i][0], report.rc.max_error[i], report.rc.rms_error[i], bm, br]);
    }
    let p = dir.join("errors.csv");
    errs.write(&p)?;
    files.push(p);
    let p = dir.join("comparison.json");
    std::fs::write(&p, serde_json::to_string_pretty(report)?)?;
    files.push(p);
    files.extend(write_run(dir, "compare", run)?);
    Ok(files)
}
