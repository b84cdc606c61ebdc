use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nv-scc"))
}

fn small_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config/small.json")
}

#[test]
fn export_before_run_exits_with_dependency_code() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin().args(["export", "--figure", "fig2", "--out"]).arg(tmp.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(4));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("xsection"), "{err}");
}

#[test]
fn bad_config_exits_with_config_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(small_config()).unwrap()).unwrap();
    v["geometry"]["electrode_radius"] = serde_json::json!(-5.0);
    std::fs::write(&cfg, v.to_string()).unwrap();
    let out = bin().args(["potential", "--config"]).arg(&cfg).arg("--out").arg(tmp.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("electrode_radius"));

    let out = bin()
        .args(["potential", "--config", "/nonexistent/config.json", "--out"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn all_then_export_with_thread_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cache = tmp.path().join("shared-cache");
    let run = |args: &[&str]| {
        bin()
            .args(args)
            .arg("--config")
            .arg(small_config())
            .arg("--out")
            .arg(tmp.path())
            .arg("--stage-cache")
            .arg(&cache)
            .env("NV_SCC_THREADS", "1")
            .output()
            .unwrap()
    };
    let out = run(&["all"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["manifest.json", "spectrum.csv", "metrics.json", "figures/fig2.csv", "figures/fig4.csv"] {
        assert!(tmp.path().join(f).exists(), "{f}");
    }
    assert!(cache.read_dir().unwrap().count() >= 5);

    let out = run(&["export", "--figure", "profiles"]);
    assert!(out.status.success());
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["complete"], serde_json::json!(true));
    assert_eq!(m["stages"].as_array().unwrap().len(), 5);
    // the config snapshot carries the resolved values
    assert_eq!(m["config"]["geometry"]["electrode_radius"], serde_json::json!(40.0));
}

#[test]
fn zero_threads_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin().args(["potential", "--threads", "0", "--out"]).arg(tmp.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
