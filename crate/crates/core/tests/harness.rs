use std::fs;
use std::path::{Path, PathBuf};

use jump_core::harness::{
    check_expectation, run_scenario, run_sweep, summary_fields, Expectation, Grid, GridAxis, HarnessError, Reference,
    RunOptions, Scenario,
};
use jump_core::qpsolver::parse_dump;
use jump_core::sim::JumpSummary;
use serde_json::json;

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn write_scenario(dir: &Path, body: serde_json::Value) -> PathBuf {
    let path = dir.join("scenario.json");
    fs::write(&path, body.to_string()).unwrap();
    path
}

#[test]
fn bundled_scenarios_pass_their_expectations() {
    for name in ["velocity_jump_4cm.json", "torque_jump_4cm.json", "ablation_momentum.json"] {
        let out = tempfile::tempdir().unwrap();
        let report = run_scenario(&bundled(name), &RunOptions { output: Some(out.path()), dump_qp: false }).unwrap();
        for v in &report.verdicts {
            assert!(v.pass, "{name}: {v}");
        }
        assert_eq!(report.exit_code(), 0, "{name}");
        for artifact in ["log.csv", "summary.json", "profile.csv"] {
            assert!(out.path().join(artifact).is_file(), "{name}: {artifact}");
        }
    }
}

#[test]
fn ablation_writes_the_paired_run_alongside() {
    let out = tempfile::tempdir().unwrap();
    let report =
        run_scenario(&bundled("ablation_momentum.json"), &RunOptions { output: Some(out.path()), dump_qp: false })
            .unwrap();
    let paired = report.paired.unwrap();
    assert!(report.summary.pitch_excursion.unwrap() < paired.pitch_excursion.unwrap());
    assert!(out.path().join("no_momentum/log.csv").is_file());
}

#[test]
fn artifacts_are_byte_identical_across_runs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let path = bundled("velocity_jump_4cm.json");
    run_scenario(&path, &RunOptions { output: Some(a.path()), dump_qp: false }).unwrap();
    run_scenario(&path, &RunOptions { output: Some(b.path()), dump_qp: false }).unwrap();
    for artifact in ["log.csv", "summary.json", "profile.csv"] {
        assert_eq!(fs::read(a.path().join(artifact)).unwrap(), fs::read(b.path().join(artifact)).unwrap());
    }
}

#[test]
fn summary_json_round_trips() {
    let out = tempfile::tempdir().unwrap();
    let report =
        run_scenario(&bundled("torque_jump_4cm.json"), &RunOptions { output: Some(out.path()), dump_qp: false })
            .unwrap();
    let text = fs::read_to_string(out.path().join("summary.json")).unwrap();
    let back: JumpSummary = serde_json::from_str(&text).unwrap();
    assert_eq!(back, report.summary);
}

#[test]
fn malformed_scenario_is_rejected_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, "{ \"name\": ").unwrap();
    let out = dir.path().join("out");
    let err = run_scenario(&path, &RunOptions { output: Some(&out), dump_qp: false }).unwrap_err();
    assert!(matches!(err, HarnessError::Config { .. }));
    assert!(!out.exists());
}

#[test]
fn scenario_checks_fields_and_files() {
    let dir = tempfile::tempdir().unwrap();
    let origin = dir.path().join("s.json");
    let unknown = json!({ "name": "x", "expectations": [{ "field": "apex", "max": 1.0 }] });
    assert!(Scenario::from_json(&unknown.to_string(), &origin).is_err());
    let unknown_ref =
        json!({ "name": "x", "expectations": [{ "field": "flight_time", "target": "apex", "rel_tol": 0.1 }] });
    assert!(Scenario::from_json(&unknown_ref.to_string(), &origin).is_err());
    let missing = json!({ "name": "x", "model": "nowhere.json" });
    assert!(Scenario::from_json(&missing.to_string(), &origin).is_err());
    let extra = json!({ "name": "x", "colour": "red" });
    assert!(Scenario::from_json(&extra.to_string(), &origin).is_err());
    let ok = json!({ "name": "x" });
    let s = Scenario::from_json(&ok.to_string(), &origin).unwrap();
    assert_eq!(s.output_dir(), Path::new("out/x"));
}

#[test]
fn expectations_compare_against_values_and_fields() {
    let summary = JumpSummary { flight_time: Some(0.19), ballistic_flight_time: Some(0.18), ..Default::default() };
    let e = |target, rel_tol| Expectation {
        field: "flight_time".into(),
        min: None,
        max: None,
        target: Some(target),
        rel_tol: Some(rel_tol),
    };
    assert!(check_expectation(&e(Reference::Field("ballistic_flight_time".into()), 0.1), &summary).pass);
    assert!(!check_expectation(&e(Reference::Field("ballistic_flight_time".into()), 0.01), &summary).pass);
    assert!(check_expectation(&e(Reference::Value(0.2), 0.06), &summary).pass);
    // unset fields never pass
    let rise = Expectation { field: "flight_com_rise".into(), min: Some(0.0), max: None, target: None, rel_tol: None };
    assert!(!check_expectation(&rise, &summary).pass);
    assert!(summary_fields().iter().any(|f| f == "takeoff_speed"));
}

#[test]
fn failing_expectation_and_fault_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(
        dir.path(),
        json!({ "name": "strict", "expectations": [{ "field": "flight_com_rise", "min": 0.5 }] }),
    );
    let report = run_scenario(&path, &RunOptions { output: Some(&dir.path().join("a")), dump_qp: false }).unwrap();
    assert_eq!(report.exit_code(), 1);

    // far beyond the joint speed limits: the launch QP becomes infeasible
    let path = write_scenario(dir.path(), json!({ "name": "tall", "jump": { "height": 0.5, "displacement": 0.11 } }));
    let out = dir.path().join("b");
    let report = run_scenario(&path, &RunOptions { output: Some(&out), dump_qp: true }).unwrap();
    assert_eq!(report.exit_code(), 3);
    assert!(report.summary.fault.is_some());
    let dump = fs::read_to_string(out.join("failed_qp.txt")).unwrap();
    assert!(parse_dump(&dump).is_ok());
    assert!(out.join("log.csv").is_file());
}

fn sweep_csv(path: &Path, grid: &Grid) -> String {
    let table = run_sweep(path, grid).unwrap();
    let mut buf = Vec::new();
    table.write_csv(&mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

#[test]
fn empty_grid_gives_a_header_only_table() {
    let csv = sweep_csv(&bundled("velocity_jump_4cm.json"), &Grid::default());
    assert_eq!(csv.lines().count(), 1);
    assert!(csv.starts_with("mode,"));
    assert!(csv.trim_end().ends_with(",fault"));
}

#[test]
fn height_sweep_rows_carry_the_takeoff_speed_law() {
    let grid = Grid {
        parameters: vec![GridAxis { path: "jump.height".into(), values: vec![json!(0.01), json!(0.02), json!(0.04)] }],
    };
    let table = run_sweep(&bundled("velocity_jump_4cm.json"), &grid).unwrap();
    assert_eq!(table.rows.len(), 3);
    for (row, h) in table.rows.iter().zip([0.01, 0.02, 0.04]) {
        assert_eq!(row.values[0], json!(h));
        let s = row.summary.as_ref().unwrap();
        let law = (2.0f64 * 9.81 * h).sqrt();
        assert!((s.desired_takeoff_speed - law).abs() / law < 1e-3);
        assert!(row.fault.is_none(), "{:?}", row.fault);
    }
}

#[test]
fn sweep_records_bad_rows_and_keeps_going() {
    let grid = Grid {
        parameters: vec![GridAxis { path: "controller.friction".into(), values: vec![json!(-1.0), json!(0.8)] }],
    };
    let table = run_sweep(&bundled("velocity_jump_4cm.json"), &grid).unwrap();
    assert!(table.rows[0].summary.is_none());
    assert!(table.rows[0].fault.as_deref().unwrap().contains("friction"));
    assert!(table.rows[1].summary.is_some());
}

#[test]
fn momentum_gain_sweep_is_ordered_and_reproducible() {
    let grid: Grid = serde_json::from_str(&fs::read_to_string(bundled("grid_kh.json")).unwrap()).unwrap();
    let path = bundled("velocity_jump_4cm.json");
    let table = run_sweep(&path, &grid).unwrap();
    let pitch: Vec<f64> = table.rows.iter().map(|r| r.summary.as_ref().unwrap().pitch_excursion.unwrap()).collect();
    let k_h: Vec<f64> = table.rows.iter().map(|r| r.values[0].as_f64().unwrap()).collect();
    let zero = k_h.iter().position(|&k| k == 0.0).unwrap();
    let default = k_h.iter().position(|&k| k == 10.0).unwrap();
    assert!(pitch[default] <= pitch[zero], "{pitch:?}");
    assert_eq!(sweep_csv(&path, &grid), sweep_csv(&path, &grid));
}
