use std::process::Command;

use flagchain::cli::{run, Record, Report, RunConfig, Scenario};
use flagchain::stats::combined_stderr;

fn small(scenario: Scenario, seed: u64) -> RunConfig {
    let mut c = RunConfig::new(scenario, seed);
    c.steps = 20_000;
    c.replicas = 4;
    c
}

fn without_timing(mut r: Report) -> Report {
    r.wall_clock_seconds = 0.0;
    r.threads = 0;
    r
}

#[test]
fn report_round_trips_through_json() {
    let r = run(&small(Scenario::Lyapunov, 3)).unwrap();
    let text = r.to_json();
    let back: Report = serde_json::from_str(&text).unwrap();
    assert_eq!(back, r);
    assert_eq!(back.to_json(), text);
}

#[test]
fn records_have_exactly_the_documented_fields() {
    let r = run(&small(Scenario::HaarCheck, 4)).unwrap();
    let value: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
    for rec in value["records"].as_array().unwrap() {
        let mut keys: Vec<&str> = rec.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort_unstable();
        assert_eq!(keys, ["estimate", "name", "pass", "prediction", "prediction_ref", "stderr", "tolerance"]);
    }
    let extra = r#"{"name":"x","estimate":1.0,"stderr":null,"prediction":null,"prediction_ref":"","tolerance":null,"pass":null,"more":1}"#;
    assert!(serde_json::from_str::<Record>(extra).is_err());
}

#[test]
fn same_seed_gives_identical_report() {
    for scenario in [Scenario::Lyapunov, Scenario::Birkhoff, Scenario::HaarCheck, Scenario::Moments] {
        let a = without_timing(run(&small(scenario, 11)).unwrap());
        let b = without_timing(run(&small(scenario, 11)).unwrap());
        assert_eq!(a.to_json(), b.to_json(), "{scenario:?}");
        let c = without_timing(run(&small(scenario, 12)).unwrap());
        assert_ne!(a.records, c.records, "{scenario:?}");
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let config = small(Scenario::Lyapunov, 5);
    let a = run(&config).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let b = pool.install(|| run(&config).unwrap());
    assert_eq!(a.records, b.records);
}

#[test]
fn doubling_replicas_at_fixed_work_agrees() {
    let mut a = RunConfig::new(Scenario::Lyapunov, 21);
    a.steps = 200_000;
    a.replicas = 4;
    let mut b = a.clone();
    b.steps = 100_000;
    b.replicas = 8;
    let ra = run(&a).unwrap();
    let rb = run(&b).unwrap();
    let (x, y) = (&ra.records[0], &rb.records[0]);
    let tol = 3.0 * combined_stderr(x.stderr.unwrap(), y.stderr.unwrap());
    assert!((x.estimate - y.estimate).abs() <= tol, "{x:?} vs {y:?}");
}

#[test]
fn csv_series_has_expected_columns() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(Scenario::HaarCheck, 8);
    c.steps = 500;
    c.csv = Some(dir.path().join("series.csv"));
    run(&c).unwrap();
    let mut reader = csv::Reader::from_path(dir.path().join("series.csv")).unwrap();
    assert_eq!(reader.headers().unwrap(), vec!["step", "value", "running_mean"]);
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 500);
    let values: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    let last: f64 = rows[499][2].parse().unwrap();
    assert!((last - values.iter().sum::<f64>() / 500.0).abs() < 1e-9);
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_flagchain"))
}

#[test]
fn binary_writes_report_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let status = binary()
        .args(["--scenario", "closure", "--L", "2", "--E", "1", "--seed", "7", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success());
    let report: Report = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(report.pass);
    assert_eq!(report.config.l, 2);
    assert!(String::from_utf8_lossy(&status.stdout).contains("PASS"));
}

#[test]
fn binary_reports_usage_errors() {
    let missing_seed = binary().args(["--scenario", "closure"]).output().unwrap();
    assert_eq!(missing_seed.status.code(), Some(2));
    let band_edge = binary().args(["--scenario", "lyapunov", "--E", "-2", "--seed", "1"]).output().unwrap();
    assert_eq!(band_edge.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&band_edge.stderr).contains("`E`"));
}

#[test]
fn binary_exits_nonzero_on_failed_check() {
    // A tolerance far below the Monte Carlo error cannot be met.
    let out = binary()
        .args(["--scenario", "lyapunov", "--steps", "2000", "--replicas", "1", "--seed", "1", "--tolerance", "1e-9"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let report: Report = serde_json::from_slice(&out.stdout).unwrap();
    assert!(!report.pass);
}
