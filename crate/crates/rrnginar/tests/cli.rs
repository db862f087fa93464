//! End-to-end tests of the `rrnginar` binary: every subcommand, the exit
//! code contract, and byte-level determinism of outputs.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rrnginar::io::{ExperimentConfig, ModelConfig};
use rrnginar::model::Variant;
use rrnginar::presets;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rrnginar"))
}

fn write_config(dir: &Path, seeds: &[u64], n: usize) -> PathBuf {
    let (params, env) = presets::r2_close_means(Variant::Max);
    let mut cfg = ExperimentConfig::new(&params, &env, presets::renes_r2_close_means(Variant::Max));
    cfg.seeds = seeds.to_vec();
    cfg.n = n;
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn simulate_writes_header_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &[11], 120);
    let out_a = dir.path().join("a.csv");
    let out_b = dir.path().join("b.csv");
    for out in [&out_a, &out_b] {
        let res = run(&[
            "simulate",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_ok(&res);
    }
    let a = std::fs::read(&out_a).unwrap();
    let b = std::fs::read(&out_b).unwrap();
    assert_eq!(a, b, "same-seed runs must be byte-identical");
    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,x,z,P,lag"));
    assert_eq!(lines.count(), 120);

    // Different seed -> different bytes.
    let res = run(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "12",
        "--out",
        out_b.to_str().unwrap(),
    ]);
    assert_ok(&res);
    assert_ne!(std::fs::read(&out_a).unwrap(), std::fs::read(&out_b).unwrap());
}

#[test]
fn simulate_single_row() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &[3], 500);
    let out = dir.path().join("one.csv");
    let res = run(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--n",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_ok(&res);
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().starts_with("1,"));
}

#[test]
fn estimate_kmeans_splits_two_level_series() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &[5], 100);
    let series = dir.path().join("series.csv");
    let mut text = String::from("t,x\n");
    for i in 0..40 {
        text.push_str(&format!("{},{}\n", i + 1, if i % 3 == 0 { 50 } else { 0 }));
    }
    std::fs::write(&series, text).unwrap();
    let out = dir.path().join("states.csv");
    let res = run(&[
        "estimate",
        "--config",
        config.to_str().unwrap(),
        "--series",
        series.to_str().unwrap(),
        "--method",
        "kmeans",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_ok(&res);
    let states = std::fs::read_to_string(&out).unwrap();
    let mut lines = states.lines();
    assert_eq!(lines.next(), Some("t,z_hat"));
    for (i, line) in lines.enumerate() {
        let z: usize = line.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(z, if i % 3 == 0 { 2 } else { 1 });
    }
}

#[test]
fn estimate_renes_emits_features() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &[5], 200);
    let series = dir.path().join("series.csv");
    let res = run(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        series.to_str().unwrap(),
    ]);
    assert_ok(&res);
    let out = dir.path().join("states.csv");
    let res = run(&[
        "estimate",
        "--config",
        config.to_str().unwrap(),
        "--series",
        series.to_str().unwrap(),
        "--method",
        "renes",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_ok(&res);
    let features = dir.path().join("states.features.csv");
    let ftext = std::fs::read_to_string(&features).unwrap();
    assert!(ftext.starts_with("t,mu_t,alpha_t,p_t,f1,f2,f3"));
    assert_eq!(ftext.lines().count(), 201);
    let stext = std::fs::read_to_string(&out).unwrap();
    assert_eq!(stext.lines().count(), 201);
}

#[test]
fn calibrate_emits_tables_and_selected_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &[5], 200);
    let series = dir.path().join("series.csv");
    assert_ok(&run(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        series.to_str().unwrap(),
    ]));
    let out_dir = dir.path().join("calib");
    // Single-cell overrides keep this fast: shrink both searches in config.
    let mut cfg: ExperimentConfig =
        serde_json::from_str(&std::fs::read_to_string(&config).unwrap()).unwrap();
    cfg.dp_range = (8, 9);
    cfg.impact_grid = (2, 3);
    std::fs::write(&config, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    let res = run(&[
        "calibrate",
        "--config",
        config.to_str().unwrap(),
        "--series",
        series.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_ok(&res);
    let dp = std::fs::read_to_string(out_dir.join("dp_table.csv")).unwrap();
    assert!(dp.starts_with("d_p,delta_p"));
    assert_eq!(dp.lines().count(), 3);
    let ct = std::fs::read_to_string(out_dir.join("c_table.csv")).unwrap();
    assert!(ct.starts_with("C_m,C_a,C_p,matches"));
    let selected = std::fs::read_to_string(out_dir.join("renes_selected.json")).unwrap();
    let parsed: rrnginar::preestimate::RenesConfig = serde_json::from_str(&selected).unwrap();
    assert!(parsed.d_p == 8 || parsed.d_p == 9);
    assert!((2.0..=3.0).contains(&parsed.impact_m));
}

#[test]
fn calibrate_without_truth_columns_fails_with_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &[5], 100);
    let series = dir.path().join("series.csv");
    std::fs::write(&series, "t,x\n1,0\n2,3\n3,1\n").unwrap();
    let res = run(&[
        "calibrate",
        "--config",
        config.to_str().unwrap(),
        "--series",
        series.to_str().unwrap(),
        "--out-dir",
        dir.path().join("c").to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn fit_eval_writes_fit_json_and_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &[8], 250);
    let series = dir.path().join("series.csv");
    assert_ok(&run(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        series.to_str().unwrap(),
    ]));
    let fit_path = dir.path().join("fit.json");
    let pred_path = dir.path().join("pred.csv");
    // Truth states come from the simulated file's own z column.
    let res = run(&[
        "fit-eval",
        "--config",
        config.to_str().unwrap(),
        "--series",
        series.to_str().unwrap(),
        "--out",
        fit_path.to_str().unwrap(),
        "--pred-out",
        pred_path.to_str().unwrap(),
    ]);
    assert_ok(&res);
    let fit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&fit_path).unwrap()).unwrap();
    for key in ["variant", "r", "M", "A", "P", "phi", "loglik", "rms", "converged"] {
        assert!(fit.get(key).is_some(), "missing {key}");
    }
    assert!(fit["rms"].as_f64().unwrap() > 0.0);
    let pred = std::fs::read_to_string(&pred_path).unwrap();
    assert!(pred.starts_with("t,x,xhat"));
    assert_eq!(pred.lines().count(), 251);
}

#[test]
fn missing_column_names_the_column_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &[5], 100);
    let series = dir.path().join("series.csv");
    std::fs::write(&series, "t,count\n1,3\n").unwrap();
    let res = run(&[
        "estimate",
        "--config",
        config.to_str().unwrap(),
        "--series",
        series.to_str().unwrap(),
        "--method",
        "kmeans",
        "--out",
        dir.path().join("s.csv").to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("`x`"), "stderr: {stderr}");
}

#[test]
fn usage_errors_exit_1() {
    let res = run(&["no-such-command"]);
    assert_eq!(res.status.code(), Some(1));
    let res = run(&["simulate", "--bogus-flag"]);
    assert_eq!(res.status.code(), Some(1));
    // Help is not an error.
    let res = run(&["--help"]);
    assert_eq!(res.status.code(), Some(0));
}

#[test]
fn pipeline_report_round_trips_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &[1, 2], 150);
    let out_a = dir.path().join("report_a.json");
    let out_b = dir.path().join("report_b.json");
    for out in [&out_a, &out_b] {
        let res = run(&[
            "pipeline",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_ok(&res);
    }
    assert_eq!(std::fs::read(&out_a).unwrap(), std::fs::read(&out_b).unwrap());
    let report: rrnginar::pipeline::RunReport =
        serde_json::from_str(&std::fs::read_to_string(&out_a).unwrap()).unwrap();
    assert_eq!(report.records.len(), 2);
    let again = rrnginar::pipeline::aggregate(&report.records);
    assert_eq!(
        serde_json::to_string(&again).unwrap(),
        serde_json::to_string(&report.aggregates).unwrap()
    );
}

#[test]
fn pipeline_with_empty_seeds_fails() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &[], 100);
    let res = run(&[
        "pipeline",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("r.json").to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn variant_override_reshapes_phi() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &[4], 80);
    let out = dir.path().join("one.csv");
    let res = run(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--variant",
        "one",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_ok(&res);
    // `1`-variant orders stay in {0, 1, p_j}; with P = (2, 4) that means
    // no order value of 3 can ever appear.
    let text = std::fs::read_to_string(&out).unwrap();
    for line in text.lines().skip(1) {
        let p: usize = line.split(',').nth(3).unwrap().parse().unwrap();
        assert!(p != 3, "unexpected order 3 in `1` variant: {line}");
    }

    let doc = ModelConfig::from_parts(
        &presets::r2_close_means(Variant::One).0,
        &presets::r2_close_means(Variant::One).1,
    );
    let cfg_one = dir.path().join("one_config.json");
    let mut cfg: ExperimentConfig =
        serde_json::from_str(&std::fs::read_to_string(&config).unwrap()).unwrap();
    cfg.model = doc;
    std::fs::write(&cfg_one, serde_json::to_string(&cfg).unwrap()).unwrap();
    // Vector-to-matrix reshaping is not derivable; flagging it is a data error.
    let res = run(&[
        "simulate",
        "--config",
        cfg_one.to_str().unwrap(),
        "--variant",
        "max",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn bundled_daily_counts_fixture_parses() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/daily_cases.csv");
    let data = rrnginar::io::read_series_csv(&path).unwrap();
    assert_eq!(data.x.len(), 404);
    assert!(data.z.is_none());
    let mean = data.x.x.iter().sum::<u64>() as f64 / data.x.len() as f64;
    assert!((2.0..7.0).contains(&mean), "fixture mean {mean}");
}
