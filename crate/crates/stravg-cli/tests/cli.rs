//! Smoke tests for the binary: every verb end to end on tiny inputs.

use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stravg"))
}

fn fresh_dir(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(name);
    let _ = fs::remove_dir_all(&dir);
    dir
}

#[test]
fn generate_solve_roundtrip() {
    let dir = fresh_dir("stravg_cli_generate");
    let out = bin()
        .args(["generate", "--n", "8", "--angles", "4", "--count", "2"])
        .arg("--out")
        .arg(&dir)
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("disc.json").exists());
    assert!(dir.join("disc.coo").exists());

    let solve_dir = fresh_dir("stravg_cli_solve");
    let out = bin()
        .args(["solve", "--plan", "cyclic", "--extrapolation", "sigma2"])
        .args(["--iterations", "20"])
        .arg("--system")
        .arg(dir.join("disc.json"))
        .arg("--out")
        .arg(&solve_dir)
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = fs::read_to_string(solve_dir.join("cyclic_sigma2__disc.csv")).unwrap();
    assert_eq!(trace.lines().count(), 21);
    assert!(solve_dir.join("cyclic_sigma2__disc.json").exists());

    let _ = fs::remove_dir_all(&dir);
    let _ = fs::remove_dir_all(&solve_dir);
}

#[test]
fn bench_then_report() {
    let dir = fresh_dir("stravg_cli_bench");
    let config = serde_json::json!({
        "problems": {"kind": "tomography", "n": 8, "angle_count": 4, "phantom_count": 2},
        "iterations": 15,
        "output_dir": dir,
    });
    let cfg_path = std::env::temp_dir().join("stravg_cli_bench_cfg.json");
    fs::write(&cfg_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();

    let out = bin()
        .arg("bench")
        .arg("--config")
        .arg(&cfg_path)
        .args(["--iterations", "12"]) // flags win over the config file
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let echo: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("config_echo.json")).unwrap()).unwrap();
    assert_eq!(echo["iterations"], 12);

    let out = bin()
        .arg("report")
        .arg("--dir")
        .arg(&dir)
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("figure2.csv").exists());
    assert!(dir.join("checks.json").exists());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("final_values"));

    let _ = fs::remove_dir_all(&dir);
    let _ = fs::remove_file(&cfg_path);
}

#[test]
fn report_on_missing_dir_fails() {
    let out = bin()
        .args(["report", "--dir", "/nonexistent/stravg-run"])
        .output()
        .expect("binary runs");
    assert!(!out.status.success());
}

#[test]
fn certify_plane_angle() {
    let report_path = std::env::temp_dir().join("stravg_cli_certify.json");
    let _ = fs::remove_file(&report_path);
    let out = bin()
        .args(["certify", "--theta", "60", "--plan", "cyclic"])
        .args(["--grid", "200", "--iterations", "20000"])
        .arg("--out")
        .arg(&report_path)
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    for key in ["q_theory", "q_emp", "kappa_hat", "violations", "fit_r2"] {
        assert!(report.get(key).is_some(), "missing key {key}");
    }
    assert_eq!(report["violations"], 0);
    let _ = fs::remove_file(&report_path);
}

#[test]
fn invalid_grid_exits_nonzero() {
    let cfg_path = std::env::temp_dir().join("stravg_cli_bad_cfg.json");
    fs::write(
        &cfg_path,
        r#"{
            "problems": {"kind": "tomography", "n": 8, "angle_count": 4, "phantom_count": 1},
            "methods": [{"plan": "simultaneous", "extrapolation": "sigma2"}],
            "iterations": 5,
            "output_dir": "/tmp/stravg_cli_bad_out"
        }"#,
    )
    .unwrap();
    let out = bin()
        .arg("bench")
        .arg("--config")
        .arg(&cfg_path)
        .output()
        .expect("binary runs");
    assert!(!out.status.success());
    assert!(!Path::new("/tmp/stravg_cli_bad_out").exists());
    let _ = fs::remove_file(&cfg_path);
}
