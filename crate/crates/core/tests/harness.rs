use std::path::Path;

use esn_ode::harness::{compare, output::Table, write_comparison, Baseline, ExperimentConfig};

fn load(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)).unwrap()
}

#[test]
fn rc_error_within_ten_times_euler_on_simple_population() {
    let report = compare(&load("simple_population.toml")).unwrap();
    let base = report.baseline.as_ref().unwrap();
    assert_eq!(report.ics.len(), 40);
    assert_eq!(report.reference, "exact");
    assert!(report.rc.mean_rms_error() <= 10.0 * base.mean_rms_error());
    assert!(report.rc.declare_secs >= 0.0 && report.rc.fit_secs >= 0.0 && base.fit_secs >= 0.0);
}

#[test]
fn comparison_files_round_trip() {
    let mut cfg = load("driven_population.toml");
    cfg.ics.truncate(3);
    let report = compare(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_comparison(dir.path(), &report).unwrap();
    let errors = Table::read(dir.path().join("errors.csv")).unwrap();
    assert_eq!(errors.column("rc_max_error").unwrap(), report.rc.max_error);
    let sol = Table::read(dir.path().join("solution_002.csv")).unwrap();
    let y = sol.column("y").unwrap();
    assert_eq!(y, report.run.as_ref().unwrap().result.solutions[2].y[0]);
}

#[test]
fn no_baseline_reports_rc_only() {
    let mut cfg = load("driven_population.toml");
    cfg.baseline = Baseline::None;
    let report = compare(&cfg).unwrap();
    assert!(report.baseline.is_none());
    assert_eq!(report.rc.max_error.len(), 20);
}
