//! CSV tables, run manifests and gnuplot scripts.
//!
//! Numbers are written in the shortest form that parses back to the same
//! `f64`, so `Table::read(Table::write(x)) == x` bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::gd::TrainTrace;
use crate::hyperopt::OptimizeResult;
use crate::linear::{IcSolution, SolveResult};

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn to_writer(&self, w: impl Write) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(&self.header)?;
        for row in &self.rows {
            if row.len() != self.header.len() {
                return Err(Error::DimensionMismatch(format!("row of {} for {} columns", row.len(), self.header.len())));
            }
            wr.serialize(row)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn from_reader(r: impl Read) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let header = rd.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|f| f.parse::<f64>().map_err(|e| Error::Config(format!("bad number `{f}`: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Ok(Self { header, rows })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_writer(fs::File::create(path)?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_reader(fs::File::open(path)?)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }
}

/// `(t, y, y_dot, residual)` for scalar problems; systems get one column per
/// component, suffixed `_0`, `_1`, ….
pub fn solution_table(times: &[f64], sol: &IcSolution) -> Table {
    let r = sol.y.len();
    let e = sol.residual.len();
    let mut header = vec!["t".to_string()];
    if r == 1 && e == 1 {
        header.extend(["y", "y_dot", "residual"].map(String::from));
    } else {
        header.extend((0..r).map(|i| format!("y_{i}")));
        header.extend((0..r).map(|i| format!("y_dot_{i}")));
        header.extend((0..e).map(|i| format!("residual_{i}")));
    }
    let rows = (0..times.len())
        .map(|n| {
            let mut row = vec![times[n]];
            row.extend(sol.y.iter().map(|c| c[n]));
            row.extend(sol.y_dot.iter().map(|c| c[n]));
            row.extend(sol.residual.iter().map(|c| c[n]));
            row
        })
        .collect();
    Table { header, rows }
}

pub fn rmsr_table(res: &SolveResult) -> Table {
    let rmsr = res.rmsr();
    Table {
        header: vec!["t".into(), "rmsr".into()],
        rows: res.times.iter().zip(rmsr).map(|(&t, r)| vec![t, r]).collect(),
    }
}

pub fn trace_table(trace: &TrainTrace) -> Table {
    Table {
        header: vec!["epoch".into(), "loss".into(), "lr".into()],
        rows: trace
            .loss_per_epoch
            .iter()
            .zip(&trace.lr_per_epoch)
            .enumerate()
            .map(|(i, (&l, &r))| vec![i as f64, l, r])
            .collect(),
    }
}

pub fn history_table(opt: &OptimizeResult) -> Table {
    let mut header = vec!["eval".to_string()];
    header.extend(opt.names.iter().cloned());
    header.push("objective".into());
    let rows = opt
        .history
        .iter()
        .map(|h| {
            let mut row = vec![h.eval as f64];
            row.extend(&h.values);
            row.push(h.objective);
            row
        })
        .collect();
    Table { header, rows }
}

/// File name of the per-IC table for IC `i`.
pub fn ic_file(prefix: &str, i: usize) -> String {
    format!("{prefix}_{i:03}.csv")
}

fn flatten(prefix: &str, v: &toml::Value, out: &mut Vec<(String, String)>) {
    match v {
        toml::Value::Table(t) if !t.is_empty() => {
            for (k, child) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, child, out);
            }
        }
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

/// Flat `key = value` lines for a serializable value, one per leaf, in a
/// stable order. The result is valid TOML and parses back to `value`.
pub fn flat_keys<T: serde::Serialize>(value: &T) -> Result<Vec<(String, String)>> {
    let v = toml::Value::try_from(value).map_err(|e| Error::Config(e.to_string()))?;
    let mut out = Vec::new();
    flatten("", &v, &mut out);
    Ok(out)
}

/// Render a manifest: the resolved config followed by `run.*` entries.
pub fn render_manifest<T: serde::Serialize>(config: &T, run: &[(&str, String)]) -> Result<String> {
    let mut s = String::from("# esn-ode run manifest\n");
    for (k, v) in flat_keys(config)? {
        writeln!(s, "{k} = {v}").expect("string write");
    }
    for (k, v) in run {
        writeln!(s, "run.{k} = {v}").expect("string write");
    }
    Ok(s)
}

/// A TOML string literal.
pub fn quoted(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

const PREAMBLE: &str = "set datafile separator ','\nset key autotitle columnhead\nset terminal pngcairo size 900,600\n";

/// gnuplot scripts for whichever known CSVs exist in `dir`. Returns the
/// script names written.
pub fn write_gnuplot_scripts(dir: &Path) -> Result<Vec<String>> {
    let mut names: Vec<String> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    let solutions: Vec<&String> = names.iter().filter(|n| n.starts_with("solution_") && n.ends_with(".csv")).collect();
    let baselines: Vec<&String> = names.iter().filter(|n| n.starts_with("baseline_") && n.ends_with(".csv")).collect();
    let losses: Vec<&String> = names.iter().filter(|n| n.starts_with("loss_") && n.ends_with(".csv")).collect();
    let mut written = Vec::new();
    let mut emit = |name: &str, body: String| -> Result<()> {
        fs::write(dir.join(name), format!("{PREAMBLE}{body}"))?;
        written.push(name.to_string());
        Ok(())
    };

    if let Some(first) = solutions.first() {
        let system = Table::read(dir.join(first))?.header.iter().any(|h| h == "y_0");
        let (y, res) = if system { ("'y_0'", "'residual_0'") } else { ("'y'", "'residual'") };
        let last = solutions.len() - 1;
        let curves = |col: &str| format!("for [i=0:{last}] sprintf('solution_%03d.csv', i) using 't':{col} with lines notitle");
        let mut body = String::from("set output 'solutions.png'\nset multiplot layout 2,1\nset xlabel 't'\n");
        writeln!(body, "set ylabel 'y'\nplot {}", curves(y)).ok();
        writeln!(body, "set ylabel 'residual'\nplot {}", curves(res)).ok();
        body.push_str("unset multiplot\n");
        emit("solutions.gp", body)?;
        if system {
            let phase = format!("for [i=0:{last}] sprintf('solution_%03d.csv', i) using 'y_0':'y_1' with lines notitle");
            emit("phase.gp", format!("set output 'phase.png'\nset xlabel 'x'\nset ylabel 'p'\nplot {phase}\n"))?;
        }
    }
    if names.iter().any(|n| n == "rmsr.csv") {
        emit("rmsr.gp", "set output 'rmsr.png'\nset logscale y\nset xlabel 't'\nset ylabel 'RMSR'\nplot 'rmsr.csv' using 't':'rmsr' with lines\n".into())?;
    }
    if !losses.is_empty() {
        let curves = format!("for [i=0:{}] sprintf('loss_%03d.csv', i) using 'epoch':'loss' with lines title sprintf('IC %d', i)", losses.len() - 1);
        emit("loss.gp", format!("set output 'loss.png'\nset logscale y\nset xlabel 'epoch'\nset ylabel 'loss'\nplot {curves}\n"))?;
    }
    if names.iter().any(|n| n == "history.csv") {
        emit(
            "history.gp",
            "set output 'history.png'\nset xlabel 'evaluation'\nset ylabel 'objective'\nplot 'history.csv' using 'eval':'objective' with points pt 7\n".into(),
        )?;
    }
    if names.iter().any(|n| n == "errors.csv") && !baselines.is_empty() {
        emit(
            "comparison.gp",
            "set output 'comparison.png'\nset logscale y\nset xlabel 'initial condition'\nset ylabel 'max abs error'\n\
             plot 'errors.csv' using 'psi0':'rc_max_error' with points pt 7 title 'RC', \\\n     \
             'errors.csv' using 'psi0':'baseline_max_error' with points pt 5 title 'baseline'\n"
                .into(),
        )?;
    }
    Ok(written)
}
