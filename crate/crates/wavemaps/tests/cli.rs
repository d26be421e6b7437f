use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn wavemaps(args: &[&str], env_output: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_wavemaps"));
    cmd.args(args).env_remove("WAVEMAPS_OUTPUT");
    if let Some(dir) = env_output {
        cmd.env("WAVEMAPS_OUTPUT", dir);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn validate_accepts_the_shipped_configs() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&root).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "conf") {
            let out = wavemaps(&["validate", "--config", path.to_str().unwrap()], None);
            assert!(out.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
            seen += 1;
        }
    }
    assert_eq!(seen, 6);
}

#[test]
fn invalid_config_exits_with_code_two_and_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.conf", "experiment = stability_run\nb = 1.2\n");
    for args in [vec!["validate", "--config", &cfg], vec!["run", "--config", &cfg]] {
        let out = wavemaps(&args, None);
        assert_eq!(out.status.code(), Some(2));
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains('b'), "{err}");
    }
    let missing = wavemaps(&["validate", "--config", "/nonexistent/x.conf"], None);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn run_honours_the_output_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let from_cfg = dir.path().join("from_config");
    let from_env = dir.path().join("from_env");
    let from_flag = dir.path().join("from_flag");
    let cfg = write_config(
        dir.path(),
        "exact.conf",
        &format!("experiment = exact_residuals\noutput_dir = {}\n", from_cfg.display()),
    );

    let out = wavemaps(&["run", "--config", &cfg, "--jobs", "1"], Some(&from_env));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(from_env.join("manifest.json").exists());
    assert!(from_env.join("timing.json").exists());
    assert!(!from_cfg.exists());

    let out = wavemaps(&["run", "--config", &cfg, "--output", from_flag.to_str().unwrap()], Some(&from_env));
    assert_eq!(out.status.code(), Some(0));
    assert!(from_flag.join("manifest.json").exists());

    let out = wavemaps(&["run", "--config", &cfg], None);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("PASS residual_u_order")), "{stdout}");

    let a = fs::read(from_env.join("manifest.json")).unwrap();
    let b = fs::read(from_cfg.join("manifest.json")).unwrap();
    assert_eq!(a, b, "manifests differ between identical runs");
    let manifest: Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(manifest["experiment"], "exact_residuals");
    assert_eq!(manifest["config"]["seed"], 42);
    assert!(manifest.get("wall_seconds").is_none());
}

#[test]
fn spectrum_scan_writes_candidate_list() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "spec.conf", "experiment = spectrum_scan\n[grid]\nn_points = 256\n");
    let out = wavemaps(&["run", "--config", &cfg, "--output", dir.path().join("o").to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let spectrum: Value = serde_json::from_slice(&fs::read(dir.path().join("o/spectrum.json")).unwrap()).unwrap();
    let list = spectrum.as_array().expect("a list of candidates");
    assert!(!list.is_empty());
    for c in list {
        let obj = c.as_object().unwrap();
        let mut keys: Vec<_> = obj.keys().map(String::as_str).collect();
        keys.sort_unstable();
        assert_eq!(keys, ["converged", "im", "mismatch_abs", "re"]);
    }
    assert!(list.iter().any(|c| c["converged"] == true && (c["re"].as_f64().unwrap() - 1.0).abs() < 1e-6));
}
