//! Command-line behavior: exit codes, bundle manifests and file schemas.

mod common;

use std::path::{Path, PathBuf};
use std::process::Output;

use common::write_base_csv;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_drmdp")
}

fn run_cli(args: &[&str], config: &Path, out: &Path) -> Output {
    std::process::Command::new(bin())
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
    config_path: PathBuf,
    config: serde_json::Value,
}

impl Fixture {
    fn new(days: usize, n_buildings: usize, n_states: usize) -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("consumption.csv");
        write_base_csv(&csv, days);
        let config = serde_json::json!({
            "consumption_csv": csv,
            "synthesis": {"n_buildings": n_buildings, "noise_frac": 0.10},
            "n_states": n_states,
            "gamma": 15.0,
            "horizon": 25,
            "event": {"start": 4, "end": 20, "lead_time": 2,
                       "incentive_per_mw": 0.5, "tariff_per_mwh": 2.0},
            "privacy": {"k": 50.0, "h": 0.03, "psi": 0.9, "method": "taylor",
                         "n_samples": 50, "accounting_samples": 2000,
                         "sweep_k": [25.0, 50.0, 100.0, 200.0]},
            "seed": 7,
            "out_dir": dir.path().join("default_out")
        });
        let config_path = dir.path().join("config.json");
        std::fs::write(&config_path, serde_json::to_vec_pretty(&config).unwrap()).unwrap();
        Fixture {
            dir,
            config_path,
            config,
        }
    }

    fn rewrite(&mut self, mutate: impl FnOnce(&mut serde_json::Value)) {
        mutate(&mut self.config);
        std::fs::write(
            &self.config_path,
            serde_json::to_vec_pretty(&self.config).unwrap(),
        )
        .unwrap();
    }
}

#[test]
fn estimate_writes_case_study_matrix_deterministically() {
    let fixture = Fixture::new(10, 100, 20);
    let out_a = fixture.dir.path().join("est_a");
    let out_b = fixture.dir.path().join("est_b");
    let output = run_cli(&["estimate"], &fixture.config_path, &out_a);
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("20x20"), "summary missing: {stdout}");
    assert!(stdout.contains("support density"), "summary missing: {stdout}");

    let matrix = drmdp::report::read_matrix_json(&out_a.join("matrix.json")).unwrap();
    assert_eq!(matrix.n, 20);
    let space = drmdp::report::read_state_space_csv(&out_a.join("state_space.csv")).unwrap();
    assert_eq!(space.n(), 20);

    // reruns with the same seed are byte-for-byte identical
    assert!(run_cli(&["estimate"], &fixture.config_path, &out_b).status.success());
    for name in ["matrix.json", "state_space.csv", "manifest.json"] {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between reruns");
    }
}

#[test]
fn config_errors_exit_with_code_two() {
    let mut fixture = Fixture::new(2, 2, 4);
    fixture.rewrite(|c| c["n_states"] = serde_json::json!(1));
    let out = fixture.dir.path().join("out");
    let output = run_cli(&["estimate"], &fixture.config_path, &out);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("n_states"), "stderr: {stderr}");
}

#[test]
fn average_without_n_samples_names_the_field() {
    let mut fixture = Fixture::new(2, 2, 4);
    fixture.rewrite(|c| {
        c["privacy"]["method"] = serde_json::json!("average");
        c["privacy"].as_object_mut().unwrap().remove("n_samples");
    });
    let out = fixture.dir.path().join("out");
    let output = run_cli(&["run"], &fixture.config_path, &out);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("n_samples"), "stderr: {stderr}");
}

#[test]
fn data_errors_exit_with_code_three() {
    let mut fixture = Fixture::new(2, 2, 4);
    let bad_csv = fixture.dir.path().join("bad.csv");
    std::fs::write(&bad_csv, "timestamp,power_mw\n0,1.0\n900,1.0\n600,1.0\n").unwrap();
    fixture.rewrite(|c| c["consumption_csv"] = serde_json::json!(bad_csv));
    let out = fixture.dir.path().join("out");
    let output = run_cli(&["estimate"], &fixture.config_path, &out);
    assert_eq!(output.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("non-monotone timestamp at row 3"),
        "stderr: {stderr}"
    );
}

#[test]
fn run_bundle_contains_exactly_the_declared_artifacts() {
    let fixture = Fixture::new(10, 30, 12);
    let out = fixture.dir.path().join("bundle");
    let output = run_cli(&["run"], &fixture.config_path, &out);
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );

    let manifest = drmdp::report::read_manifest(&out.join("manifest.json")).unwrap();
    assert_eq!(manifest.command, "run");
    assert_eq!(manifest.method.as_deref(), Some("taylor"));
    assert_eq!(
        manifest.artifacts,
        vec![
            "nonprivate_policy.json",
            "private_policy.json",
            "privacy_report.json",
            "cost_report.json",
            "trajectories",
            "plotdata",
        ],
        "six declared artifacts for the analytic methods"
    );
    for artifact in &manifest.artifacts {
        assert!(out.join(artifact).exists(), "missing artifact {artifact}");
    }

    // every artifact parses under its own schema
    let nonprivate = drmdp::report::read_policy_json(&out.join("nonprivate_policy.json")).unwrap();
    let private = drmdp::report::read_policy_json(&out.join("private_policy.json")).unwrap();
    assert_eq!(nonprivate.horizon, 25);
    assert_eq!(private.horizon, 25);
    assert_eq!(private.matrices.len(), 24);

    let privacy: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("privacy_report.json")).unwrap())
            .unwrap();
    for field in ["k", "h", "psi", "delta", "delta_stderr", "epsilon", "per_row_epsilon"] {
        assert!(privacy.get(field).is_some(), "privacy report missing {field}");
    }
    assert_eq!(privacy["per_row_epsilon"].as_array().unwrap().len(), 12);

    let cost: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("cost_report.json")).unwrap())
            .unwrap();
    assert_eq!(cost["method"], "taylor");
    assert_eq!(cost["k"], 50.0);
    assert_eq!(cost["per_state"].as_array().unwrap().len(), 24 * 12);

    for name in ["baseline.csv", "nonprivate.csv", "private.csv"] {
        let text = std::fs::read_to_string(out.join("trajectories").join(name)).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,expected_power_mw"), "{name}");
        assert_eq!(lines.count(), 25, "{name} row count");
    }
    for name in [
        "power_vs_time.csv",
        "policy_scatter.csv",
        "capacity_metrics.json",
        "log_z_nonprivate.csv",
        "log_z_private.csv",
    ] {
        assert!(out.join("plotdata").join(name).exists(), "missing plotdata/{name}");
    }
    let log_z = std::fs::read_to_string(out.join("plotdata/log_z_nonprivate.csv")).unwrap();
    assert!(log_z.starts_with("t,state,log_z\n"));
    assert_eq!(log_z.lines().count(), 1 + 25 * 12);
    let scatter = std::fs::read_to_string(out.join("plotdata/policy_scatter.csv")).unwrap();
    assert!(scatter.starts_with("input,k,sample,state,probability\n"));
    assert!(scatter.lines().count() > 1000);
}

#[test]
fn average_run_adds_the_samples_summary() {
    let fixture = {
        let mut f = Fixture::new(6, 20, 8);
        f.rewrite(|c| c["privacy"]["method"] = serde_json::json!("average"));
        f
    };
    let out = fixture.dir.path().join("bundle");
    let output = run_cli(&["run"], &fixture.config_path, &out);
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let manifest = drmdp::report::read_manifest(&out.join("manifest.json")).unwrap();
    assert_eq!(manifest.artifacts.len(), 7);
    assert!(manifest.artifacts.contains(&"samples_summary.json".to_string()));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("samples_summary.json")).unwrap())
            .unwrap();
    for field in ["k", "N", "seed", "mean_policy", "analytical_policy", "row_sum_diagnostics", "l1_gap"] {
        assert!(summary.get(field).is_some(), "summary missing {field}");
    }
    let cost: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("cost_report.json")).unwrap())
            .unwrap();
    assert_eq!(cost["method"], "average");
    assert!(cost.get("mc_total").is_some());
    assert!(cost.get("gap").is_some());
}

#[test]
fn sweep_writes_monotone_cost_table() {
    let fixture = Fixture::new(8, 20, 8);
    let out = fixture.dir.path().join("sweep");
    let output = run_cli(&["sweep"], &fixture.config_path, &out);
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let text = std::fs::read_to_string(out.join("plotdata/cost_vs_k.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("method,k,delta_c_total,objective_gap,mean_reduction_mw,peak_reduction_mw,epsilon")
    );
    let mut per_method: std::collections::BTreeMap<String, Vec<(f64, f64, f64)>> =
        Default::default();
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        per_method.entry(f[0].to_string()).or_default().push((
            f[1].parse().unwrap(),
            f[2].parse().unwrap(),
            f[3].parse().unwrap(),
        ));
    }
    assert_eq!(per_method.len(), 3, "three methods");
    for (method, rows) in &per_method {
        assert_eq!(rows.len(), 4, "{method}: 4 rows per method");
        for w in rows.windows(2) {
            assert!(w[0].0 < w[1].0, "{method}: k column must ascend");
            assert!(
                w[1].1 < w[0].1,
                "{method}: delta_c_total must decrease in k: {rows:?}"
            );
            assert!(
                w[1].2 < w[0].2,
                "{method}: objective_gap must decrease in k: {rows:?}"
            );
        }
    }
}

#[test]
fn seed_flag_overrides_config() {
    let fixture = Fixture::new(4, 5, 6);
    let out_a = fixture.dir.path().join("a");
    let out_b = fixture.dir.path().join("b");
    let output = std::process::Command::new(bin())
        .args(["estimate", "--seed", "99", "--config"])
        .arg(&fixture.config_path)
        .arg("--out")
        .arg(&out_a)
        .output()
        .unwrap();
    assert!(output.status.success());
    assert!(run_cli(&["estimate"], &fixture.config_path, &out_b).status.success());
    let a = std::fs::read(out_a.join("matrix.json")).unwrap();
    let b = std::fs::read(out_b.join("matrix.json")).unwrap();
    assert_ne!(a, b, "different seeds must change the synthesized ensemble");
}
