//! End-to-end tests of the `glucb` binary: exit codes, file formats,
//! determinism of generated artifacts.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_glucb"))
}

fn tmp_dir(label: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("glucb-cli-{label}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "command failed: {:?}\nstdout: {}\nstderr: {}",
        cmd,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(cmd: &mut Command) -> i32 {
    cmd.output().unwrap().status.code().unwrap()
}

fn strip_wall_time(csv: &str) -> String {
    csv.lines()
        .map(|line| line.rsplit_once(',').map(|(head, _)| head).unwrap_or(line))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn gen_writes_a_parsable_instance_with_expected_gap() {
    let dir = tmp_dir("gen-soare");
    let path = dir.join("soare2.json");
    run_ok(bin().args(["gen", "soare", "--d", "2", "--out"]).arg(&path));
    let inst = glucb::env::read_instance_file(&path).unwrap();
    assert_eq!(inst.k(), 3);
    assert!((inst.delta_min() - 0.0049958347219741794).abs() < 1e-12);
}

#[test]
fn gen_is_byte_identical_for_fixed_seed() {
    let dir = tmp_dir("gen-sphere");
    let a = dir.join("a.json");
    let b = dir.join("b.json");
    for path in [&a, &b] {
        run_ok(
            bin()
                .args(["gen", "sphere", "--d", "10", "--k", "100", "--seed", "7", "--out"])
                .arg(path),
        );
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn gen_crowded_produces_the_documented_shape() {
    let dir = tmp_dir("gen-crowded");
    let path = dir.join("crowded.json");
    run_ok(
        bin()
            .args(["gen", "crowded", "--k", "100", "--seed", "1", "--out"])
            .arg(&path),
    );
    let inst = glucb::env::read_instance_file(&path).unwrap();
    assert_eq!(inst.k(), 100);
    assert_eq!(inst.d(), 2);
    assert_eq!(inst.best_arm(), 0);
}

#[test]
fn gen_rejects_unknown_dataset_with_usage_exit() {
    let dir = tmp_dir("gen-bad");
    let path = dir.join("x.json");
    let code = exit_code(bin().args(["gen", "nope", "--out"]).arg(&path));
    assert_eq!(code, 1);
}

#[test]
fn gen_rejects_missing_parameters_with_usage_exit() {
    let dir = tmp_dir("gen-missing");
    let path = dir.join("x.json");
    let code = exit_code(bin().args(["gen", "sphere", "--d", "4", "--out"]).arg(&path));
    assert_eq!(code, 1);
}

fn write_two_orthonormal_instance(dir: &Path) -> PathBuf {
    let path = dir.join("ortho.json");
    let text = r#"{
  "d": 2,
  "arms": [[1.0, 0.0], [0.0, 1.0]],
  "theta_star": [1.0, 0.0],
  "noise_std": 1.0
}"#;
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn lower_bound_reports_balanced_weights_for_two_arms() {
    let dir = tmp_dir("lb");
    let path = write_two_orthonormal_instance(&dir);
    let out = run_ok(bin().args(["lower-bound", "--instance"]).arg(&path));
    let text = String::from_utf8(out.stdout).unwrap();
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(value["converged"].as_bool().unwrap());
    let w = value["w_star"].as_array().unwrap();
    assert!((w[0].as_f64().unwrap() - 0.5).abs() < 1e-4);
    assert!((w[1].as_f64().unwrap() - 0.5).abs() < 1e-4);
    // h_g = 4 for an orthonormal pair with unit gap.
    assert!((value["h_g"].as_f64().unwrap() - 4.0).abs() < 1e-3);
    let expected = 4.0 * (1.0_f64 / (2.4 * 0.05)).ln();
    assert!((value["sample_lower_bound"].as_f64().unwrap() - expected).abs() < 1e-2);
}

#[test]
fn lower_bound_matches_three_arm_closed_form() {
    let dir = tmp_dir("lb3");
    let path = dir.join("three.json");
    run_ok(
        bin()
            .args(["gen", "three-arm", "--omega", "0.3", "--out"])
            .arg(&path),
    );
    let out = run_ok(bin().args(["lower-bound", "--instance"]).arg(&path));
    let value: serde_json::Value =
        serde_json::from_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    let h_g = value["h_g"].as_f64().unwrap();
    let closed = glucb::complexity::closed_form_three_arm_lb(0.3).unwrap();
    assert!((h_g - closed).abs() <= 0.01 * closed, "{h_g} vs {closed}");
}

#[test]
fn lower_bound_rejects_out_of_range_delta() {
    let dir = tmp_dir("lb-delta");
    let path = write_two_orthonormal_instance(&dir);
    let code = exit_code(
        bin()
            .args(["lower-bound", "--delta", "0.2", "--instance"])
            .arg(&path),
    );
    assert_eq!(code, 1);
}

#[test]
fn lower_bound_missing_file_is_a_runtime_error() {
    let code = exit_code(bin().args(["lower-bound", "--instance", "/nonexistent/x.json"]));
    assert_eq!(code, 2);
}

#[test]
fn run_writes_csv_and_summary_deterministically() {
    let dir = tmp_dir("run");
    let out1 = dir.join("r1.csv");
    let out2 = dir.join("r2.csv");
    for (out, workers) in [(&out1, "1"), (&out2, "8")] {
        run_ok(
            bin()
                .args([
                    "run",
                    "--dataset",
                    "three-arm",
                    "--omega",
                    "1.0",
                    "--trials",
                    "6",
                    "--master-seed",
                    "42",
                    "--workers",
                    workers,
                    "--out",
                ])
                .arg(out),
        );
    }
    let csv1 = std::fs::read_to_string(&out1).unwrap();
    let csv2 = std::fs::read_to_string(&out2).unwrap();
    assert_eq!(strip_wall_time(&csv1), strip_wall_time(&csv2));
    assert!(csv1.starts_with("trial,algo,tau,recommended,correct,terminated,wall_time_ms\n"));
    assert_eq!(csv1.lines().count(), 7);

    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.join("r1.csv.summary.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(summary["trials"].as_u64().unwrap(), 6);
    assert_eq!(summary["non_termination_count"].as_u64().unwrap(), 0);
    assert_eq!(summary["error_rate"].as_f64().unwrap(), 0.0);
}

#[test]
fn run_flags_override_config_file() {
    let dir = tmp_dir("run-config");
    let config_path = dir.join("config.json");
    std::fs::write(
        &config_path,
        r#"{
  "instance_source": {"generator": {"name": "three-arm", "omega": 1.0}},
  "trials": 4,
  "master_seed": 9
}"#,
    )
    .unwrap();
    let out = dir.join("out.csv");
    run_ok(
        bin()
            .args(["run", "--trials", "2", "--config"])
            .arg(&config_path)
            .args(["--out"])
            .arg(&out),
    );
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 3, "flag --trials 2 must win:\n{csv}");
}

#[test]
fn run_trace_requires_single_trial() {
    let dir = tmp_dir("run-trace");
    let out = dir.join("out.csv");
    let trace = dir.join("trace.csv");
    let code = exit_code(
        bin()
            .args([
                "run",
                "--dataset",
                "three-arm",
                "--omega",
                "1.0",
                "--trials",
                "2",
                "--out",
            ])
            .arg(&out)
            .arg("--trace")
            .arg(&trace),
    );
    assert_eq!(code, 1);

    run_ok(
        bin()
            .args([
                "run",
                "--dataset",
                "three-arm",
                "--omega",
                "1.0",
                "--trials",
                "1",
                "--out",
            ])
            .arg(&out)
            .arg("--trace")
            .arg(&trace),
    );
    let trace_text = std::fs::read_to_string(&trace).unwrap();
    assert!(trace_text.starts_with("t,h,l,c,beta,max_advantage\n"));
    assert!(trace_text.lines().count() > 10);
}

#[test]
fn run_static_with_degenerate_weights_reports_non_termination() {
    let dir = tmp_dir("run-static");
    let out = dir.join("out.csv");
    run_ok(
        bin()
            .args([
                "run",
                "--algo",
                "static",
                "--static-weights",
                "1.0,0.0,0.0",
                "--dataset",
                "three-arm",
                "--omega",
                "1.0",
                "--trials",
                "1",
                "--max-steps",
                "2000",
                "--out",
            ])
            .arg(&out),
    );
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.contains("max-steps-exceeded"));
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.join("out.csv.summary.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(summary["non_termination_count"].as_u64().unwrap(), 1);
}

#[test]
fn help_exits_zero() {
    assert_eq!(exit_code(bin().arg("--help")), 0);
    assert_eq!(exit_code(bin().args(["run", "--help"])), 0);
    assert_eq!(exit_code(bin().args(["gen", "--help"])), 0);
    assert_eq!(exit_code(bin().args(["lower-bound", "--help"])), 0);
}

#[test]
fn unknown_flag_exits_one() {
    assert_eq!(exit_code(bin().args(["run", "--bogus"])), 1);
}
