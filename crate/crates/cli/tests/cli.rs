//! End-to-end tests driving the eprsim binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn eprsim(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eprsim"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

const DET_TABLE_MODEL: &str = r#"{
  "lambda_labels": ["l0"],
  "lambda_probs": [{"num": 1, "den": 1}],
  "left_settings": ["a0"],
  "right_settings": ["b0"],
  "tables": [
    {
      "left": "a0", "right": "b0", "lambda": "l0",
      "pp": {"num": 0, "den": 1},
      "pm": {"num": 1, "den": 1},
      "mp": {"num": 0, "den": 1},
      "mm": {"num": 0, "den": 1}
    }
  ]
}"#;

#[test]
fn simulate_discrete_table_is_hand_checkable() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("model.json"), DET_TABLE_MODEL).unwrap();
    let out = eprsim(
        dir.path(),
        &[
            "simulate",
            "--model",
            "discrete_table",
            "--model-file",
            "model.json",
            "--trials",
            "10",
            "--seed",
            "5",
            "--out",
            "tiny",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("tiny.csv")).unwrap();
    let mut expected =
        String::from("j,lambda,setting_left,setting_right,outcome_left,outcome_right\n");
    for j in 1..=10 {
        expected.push_str(&format!("{j},l0,a0,b0,1,-1\n"));
    }
    assert_eq!(csv, expected);

    let echo: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("tiny.echo.json")).unwrap())
            .unwrap();
    assert_eq!(echo["config"]["seed"], 5);
    assert_eq!(echo["config"]["trials"], 10);
    assert!(echo["config_hash"].as_str().unwrap().len() == 64);
}

#[test]
fn same_config_twice_gives_identical_files() {
    let dir = TempDir::new().unwrap();
    let args = [
        "simulate",
        "--model",
        "quantum_singlet",
        "--trials",
        "20000",
        "--seed",
        "11",
        "--out",
        "a",
    ];
    assert!(eprsim(dir.path(), &args).status.success());
    let csv1 = fs::read(dir.path().join("a.csv")).unwrap();
    let echo1 = fs::read(dir.path().join("a.echo.json")).unwrap();
    assert!(eprsim(dir.path(), &args).status.success());
    assert_eq!(fs::read(dir.path().join("a.csv")).unwrap(), csv1);
    assert_eq!(fs::read(dir.path().join("a.echo.json")).unwrap(), echo1);
}

#[test]
fn config_file_fields_are_used_and_flags_override() {
    let dir = TempDir::new().unwrap();
    fs::write(
        dir.path().join("cfg.json"),
        r#"{
            "model": "quantum_singlet",
            "trials": 5000,
            "seed": 77,
            "out": "fromcfg"
        }"#,
    )
    .unwrap();
    let out = eprsim(
        dir.path(),
        &["simulate", "--config", "cfg.json", "--trials", "100"],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let echo: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("fromcfg.echo.json")).unwrap())
            .unwrap();
    // Flag wins over file; unset fields materialize defaults.
    assert_eq!(echo["config"]["trials"], 100);
    assert_eq!(echo["config"]["seed"], 77);
    assert_eq!(echo["config"]["lambda_bins"], 64);
    assert_eq!(echo["config"]["left_policy"], "uniform");
    let csv = fs::read_to_string(dir.path().join("fromcfg.csv")).unwrap();
    assert_eq!(csv.lines().count(), 101);

    // Rejects unknown config fields.
    fs::write(
        dir.path().join("bad.json"),
        r#"{"model": "quantum_singlet", "trails": 5}"#,
    )
    .unwrap();
    let out = eprsim(dir.path(), &["simulate", "--config", "bad.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn dependent_collectives_accepts_custom_tables_but_rejects_factorizing_ones() {
    let dir = TempDir::new().unwrap();
    // A fully factorizing table is not a dependent-collectives model.
    fs::write(
        dir.path().join("product.json"),
        r#"{
          "lambda_labels": ["l0"],
          "lambda_probs": [{"num": 1, "den": 1}],
          "left_settings": ["a0"],
          "right_settings": ["b0"],
          "tables": [
            {"left": "a0", "right": "b0", "lambda": "l0",
             "pp": {"num": 1, "den": 4}, "pm": {"num": 1, "den": 4},
             "mp": {"num": 1, "den": 4}, "mm": {"num": 1, "den": 4}}
          ]
        }"#,
    )
    .unwrap();
    let out = eprsim(
        dir.path(),
        &[
            "simulate",
            "--model",
            "dependent_collectives",
            "--model-file",
            "product.json",
            "--trials",
            "10",
            "--out",
            "x",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not factorize"));

    // The built-in fixture needs no file.
    let out = eprsim(
        dir.path(),
        &[
            "simulate",
            "--model",
            "dependent_collectives",
            "--trials",
            "10",
            "--out",
            "y",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn missing_model_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let out = eprsim(dir.path(), &["simulate", "--trials", "10"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("model: required"),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn chsh_report_hits_the_singlet_value() {
    let dir = TempDir::new().unwrap();
    let out = eprsim(
        dir.path(),
        &[
            "simulate",
            "--model",
            "quantum_singlet",
            "--trials",
            "400000",
            "--seed",
            "20240809",
            "--out",
            "s",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out = eprsim(
        dir.path(),
        &["analyze", "--log", "s.csv", "--chsh", "0,pi/2,pi/4,3pi/4"],
    );
    let report = stdout_json(&out);
    let s = report["chsh"]["s"].as_f64().unwrap();
    let target = -2.0 * std::f64::consts::SQRT_2;
    assert!(
        (s - target).abs() <= 0.02,
        "S = {s}, want {target} within 0.02"
    );
    assert_eq!(report["meta"]["master_seed"], 20240809);
}

#[test]
fn empty_analysis_spec_gives_meta_only_report() {
    let dir = TempDir::new().unwrap();
    assert!(eprsim(
        dir.path(),
        &[
            "simulate",
            "--model",
            "quantum_singlet",
            "--trials",
            "1000",
            "--out",
            "e"
        ],
    )
    .status
    .success());
    let out = eprsim(dir.path(), &["analyze", "--log", "e.csv"]);
    let report = stdout_json(&out);
    let keys: Vec<&String> = report.as_object().unwrap().keys().collect();
    assert_eq!(keys, ["meta"]);
}

#[test]
fn chsh_on_single_pair_log_lists_missing_pairs() {
    let dir = TempDir::new().unwrap();
    assert!(eprsim(
        dir.path(),
        &[
            "simulate",
            "--model",
            "quantum_singlet",
            "--left-angles",
            "0,pi/2",
            "--right-angles",
            "pi/4,3pi/4",
            "--left-policy",
            "fixed:0",
            "--right-policy",
            "fixed:0",
            "--trials",
            "1000",
            "--out",
            "one",
        ],
    )
    .status
    .success());
    let out = eprsim(
        dir.path(),
        &["analyze", "--log", "one.csv", "--chsh", "0,pi/2,pi/4,3pi/4"],
    );
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("missing settings pairs"),
        "stderr: {stderr}"
    );
    assert_eq!(stderr.matches("(").count(), 3, "stderr: {stderr}");
}

#[test]
fn malformed_log_reports_the_line() {
    let dir = TempDir::new().unwrap();
    fs::write(
        dir.path().join("bad.csv"),
        "j,lambda,setting_left,setting_right,outcome_left,outcome_right\n\
         1,0.5,0,0,1,-1\n\
         2,0.5,0,0,oops,-1\n",
    )
    .unwrap();
    let out = eprsim(
        dir.path(),
        &["analyze", "--log", "bad.csv", "--factorability"],
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn counterexample_emits_witness_or_none() {
    let dir = TempDir::new().unwrap();
    let out = eprsim(dir.path(), &["counterexample", "--max-period", "16"]);
    let doc = stdout_json(&out);
    let witness = &doc["witness"];
    assert!(!witness.is_null());
    assert_eq!(witness["period"], 4);
    assert!(witness["deviation_value"].as_f64().unwrap() >= 0.1);

    let out = eprsim(dir.path(), &["counterexample", "--max-period", "1"]);
    let doc = stdout_json(&out);
    assert!(doc["witness"].is_null());

    let out = eprsim(dir.path(), &["counterexample", "--max-period", "30"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("search space exceeded"));
}

#[test]
fn pipeline_is_byte_identical_across_reruns() {
    let dir = TempDir::new().unwrap();
    let mut artifacts: Vec<(Vec<u8>, Vec<u8>, Vec<u8>)> = Vec::new();
    for round in 0..2 {
        let sim = eprsim(
            dir.path(),
            &[
                "simulate",
                "--model",
                "quantum_singlet",
                "--trials",
                "50000",
                "--seed",
                "99",
                "--out",
                "d",
            ],
        );
        assert!(sim.status.success());
        let analyze = eprsim(
            dir.path(),
            &[
                "analyze",
                "--log",
                "d.csv",
                "--chsh",
                "0,pi/2,pi/4,3pi/4",
                "--freedom-of-choice",
                "--independence",
                "left_outcome:right_outcome",
                "--out",
                &format!("report{round}.json"),
            ],
        );
        assert!(
            analyze.status.success(),
            "{}",
            String::from_utf8_lossy(&analyze.stderr)
        );
        artifacts.push((
            fs::read(dir.path().join("d.csv")).unwrap(),
            fs::read(dir.path().join("d.echo.json")).unwrap(),
            fs::read(dir.path().join(format!("report{round}.json"))).unwrap(),
        ));
    }
    assert_eq!(artifacts[0].0, artifacts[1].0, "log differs");
    assert_eq!(artifacts[0].1, artifacts[1].1, "echo differs");
    assert_eq!(artifacts[0].2, artifacts[1].2, "report differs");
}

#[test]
fn assert_flags_drive_exit_codes() {
    let dir = TempDir::new().unwrap();
    assert!(eprsim(
        dir.path(),
        &[
            "simulate",
            "--model",
            "quantum_singlet",
            "--trials",
            "50000",
            "--seed",
            "3",
            "--out",
            "q",
        ],
    )
    .status
    .success());

    // The singlet violates the local bound.
    let out = eprsim(
        dir.path(),
        &[
            "analyze",
            "--log",
            "q.csv",
            "--chsh",
            "0,pi/2,pi/4,3pi/4",
            "--assert-chsh-bound",
            "2.0",
            "--out",
            "r.json",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("exceeds"));

    // ... but respects the algebraic ceiling of 4.
    let out = eprsim(
        dir.path(),
        &[
            "analyze",
            "--log",
            "q.csv",
            "--chsh",
            "0,pi/2,pi/4,3pi/4",
            "--assert-chsh-bound",
            "4.0",
            "--out",
            "r.json",
        ],
    );
    assert!(out.status.success());

    // Pooled wing outcomes are dependent for the singlet at these angles.
    let out = eprsim(
        dir.path(),
        &[
            "analyze",
            "--log",
            "q.csv",
            "--independence",
            "left_outcome:right_outcome",
            "--assert-dependent",
            "--out",
            "r.json",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out = eprsim(
        dir.path(),
        &[
            "analyze",
            "--log",
            "q.csv",
            "--independence",
            "left_outcome:right_outcome",
            "--assert-independent",
            "--out",
            "r.json",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn csv_side_channels_are_written() {
    let dir = TempDir::new().unwrap();
    assert!(eprsim(
        dir.path(),
        &[
            "simulate",
            "--model",
            "dependent_collectives",
            "--trials",
            "20000",
            "--out",
            "dc"
        ],
    )
    .status
    .success());
    let out = eprsim(
        dir.path(),
        &[
            "analyze",
            "--log",
            "dc.csv",
            "--factorability",
            "--factorability-csv",
            "fact.csv",
            "--independence",
            "left_outcome:right_outcome",
            "--deviations-csv",
            "dev.csv",
            "--out",
            "rep.json",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let fact = fs::read_to_string(dir.path().join("fact.csv")).unwrap();
    assert!(fact.starts_with("bin,left_setting,right_setting"));
    let dev = fs::read_to_string(dir.path().join("dev.csv")).unwrap();
    assert!(dev.starts_with("s1\\s2,"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("rep.json")).unwrap()).unwrap();
    assert_eq!(report["factorability"]["verdict"], "factorability_violated");
}

#[test]
fn analyze_inherits_bins_from_echo_and_sweeps_bin_counts() {
    let dir = TempDir::new().unwrap();
    assert!(eprsim(
        dir.path(),
        &[
            "simulate",
            "--model",
            "quantum_singlet",
            "--trials",
            "30000",
            "--seed",
            "21",
            "--out",
            "sw",
        ],
    )
    .status
    .success());
    let out = eprsim(
        dir.path(),
        &[
            "analyze",
            "--log",
            "sw.csv",
            "--factorability",
            "--factorability-sweep",
            "8,16,32",
        ],
    );
    let report = stdout_json(&out);
    // No --bins flag: the echo's lambda_bins (64) applies.
    assert_eq!(report["factorability"]["lambda_bins"], 64);
    let sweep = report["factorability_sweep"].as_array().unwrap();
    assert_eq!(sweep.len(), 3);
    assert_eq!(sweep[0]["lambda_bins"], 8);
    assert_eq!(sweep[2]["lambda_bins"], 32);
}
