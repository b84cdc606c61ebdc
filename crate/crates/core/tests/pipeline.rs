use std::fs;
use std::path::{Path, PathBuf};

use nvscc::config::Config;
use nvscc::io::read_csv_numbers;
use nvscc::pipeline::{export_figure_data, run_pipeline, Figure, PipelineOptions, RunManifest, Stage};
use nvscc::Error;

fn small() -> Config {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config/small.json");
    Config::from_path(p).unwrap()
}

fn opts(out: &Path, until: Stage) -> PipelineOptions {
    PipelineOptions {
        out: out.to_path_buf(),
        stage_cache: None,
        until,
    }
}

fn outputs(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut v: Vec<_> = ["profile.csv", "spectrum.csv", "xsection.json", "broadening.json", "metrics.json"]
        .iter()
        .map(|n| (PathBuf::from(n), fs::read(dir.join(n)).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn small_run_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let cfg = small();
    let m = run_pipeline(&cfg, &opts(&a, Stage::Metrics)).unwrap();
    assert!(m.complete);
    assert_eq!(m.stages.len(), 5);
    assert!(m.stages.iter().all(|s| !s.cached));

    let (h, rows) = read_csv_numbers(&a.join("spectrum.csv")).unwrap();
    assert_eq!(h, ["index", "valley", "energy_GHz"]);
    assert_eq!(rows.len(), 3 * cfg.solver.per_valley_count);
    // ascending up to the degeneracy window of the merge
    assert!(rows.windows(2).all(|w| w[0][2] <= w[1][2] + 1e-6));

    let (h, prof) = read_csv_numbers(&a.join("profile.csv")).unwrap();
    assert_eq!(h, ["depth_nm", "potential_mV"]);
    assert!((prof[0][1] - cfg.geometry.electrode_voltage).abs() < 1e-12);

    // every inventoried file hashes to its recorded value
    for f in &m.outputs {
        assert_eq!(nvscc::io::sha256_file(&a.join(&f.path)).unwrap(), f.sha256);
    }

    // second run reuses every stage and reproduces the bytes
    let before = outputs(&a);
    let m2 = run_pipeline(&cfg, &opts(&a, Stage::Metrics)).unwrap();
    assert!(m2.stages.iter().all(|s| s.cached));
    assert_eq!(outputs(&a), before);

    // a fresh cache recomputes everything to the same bytes and keys
    let b = tmp.path().join("b");
    let m3 = run_pipeline(&cfg, &opts(&b, Stage::Metrics)).unwrap();
    assert_eq!(outputs(&b), before);
    let keys = |m: &RunManifest| m.stages.iter().map(|s| (s.key.clone(), s.files.clone())).collect::<Vec<_>>();
    assert_eq!(keys(&m3), keys(&m));

    // exports come from the recorded stage directories
    for f in Figure::ALL {
        let files = export_figure_data(&a, f).unwrap();
        assert_eq!(files.len(), 1);
    }
    let (h, fig2) = read_csv_numbers(&a.join("figures/fig2.csv")).unwrap();
    assert_eq!(h, ["energy_GHz", "bulk", "confined"]);
    let spec_top = rows.last().unwrap()[2];
    assert!(fig2.last().unwrap()[0] > spec_top);
    let (_, fig5) = read_csv_numbers(&a.join("figures/fig5.csv")).unwrap();
    assert!((fig5[0][1] - 1.0).abs() < 1e-9, "lowest density is fully occupied");

    // a downstream-only change leaves upstream stages cached
    let mut c2 = cfg.clone();
    c2.xsection.phi = 0.5;
    let m4 = run_pipeline(&c2, &opts(&a, Stage::Metrics)).unwrap();
    let cached: Vec<bool> = m4.stages.iter().map(|s| s.cached).collect();
    assert_eq!(cached, [true, true, false, true, false]);
}

#[test]
fn tampered_artifacts_are_recomputed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small();
    let m = run_pipeline(&cfg, &opts(tmp.path(), Stage::Xsection)).unwrap();
    let spec = m.stage(Stage::Spectrum).unwrap().clone();
    let p = Path::new(&spec.dir).join("spectrum.json");
    let text = fs::read_to_string(&p).unwrap();
    fs::write(&p, text.replacen("\"delta_c\"", "\"delta_c\" ", 1)).unwrap();
    let m2 = run_pipeline(&cfg, &opts(tmp.path(), Stage::Xsection)).unwrap();
    let cached: Vec<bool> = m2.stages.iter().map(|s| s.cached).collect();
    // the spectrum is rebuilt to identical bytes, so the cross sections stay valid
    assert_eq!(cached, [true, false, true]);
    assert_eq!(m2.stage(Stage::Spectrum).unwrap().files, spec.files);

    // a downstream stamp recorded against other upstream bytes is not reused
    let xs = m2.stage(Stage::Xsection).unwrap();
    let stamp = Path::new(&xs.dir).join("stage.json");
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&stamp).unwrap()).unwrap();
    v["upstream"] = serde_json::json!("0000");
    fs::write(&stamp, v.to_string()).unwrap();
    let m3 = run_pipeline(&cfg, &opts(tmp.path(), Stage::Xsection)).unwrap();
    let cached: Vec<bool> = m3.stages.iter().map(|s| s.cached).collect();
    assert_eq!(cached, [true, true, false]);
}

#[test]
fn zero_bias_still_reaches_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg.geometry.electrode_voltage = 0.0;
    let m = run_pipeline(&cfg, &opts(tmp.path(), Stage::Metrics)).unwrap();
    assert!(m.complete);
    let (_, prof) = read_csv_numbers(&tmp.path().join("profile.csv")).unwrap();
    assert!(prof.iter().all(|r| r[1] == 0.0));
    // flat potential: the levels are those of the hard-wall envelope box
    let (_, rows) = read_csv_numbers(&tmp.path().join("spectrum.csv")).unwrap();
    let g = cfg.grid.eigen_grid().unwrap();
    let l = g.extent();
    let m_t = cfg.material.m_transverse;
    let m_l = cfg.material.m_longitudinal;
    let e = |m: [f64; 3]| {
        let c = nvscc::units::HBAR2_OVER_2ME_UEV_NM2 * std::f64::consts::PI.powi(2);
        nvscc::units::uev_to_ghz((0..3).map(|a| c / (m[a] * l[a] * l[a])).sum())
    };
    let ground = e([m_t, m_t, m_l]);
    assert!((rows[0][2] / ground - 1.0).abs() < 0.05, "{} vs {ground}", rows[0][2]);
    assert!(tmp.path().join("metrics.json").exists());
}

#[test]
fn export_before_run_is_a_dependency_error() {
    let tmp = tempfile::tempdir().unwrap();
    for f in Figure::ALL {
        match export_figure_data(tmp.path(), f) {
            Err(Error::Dependency { stage, .. }) => assert_eq!(stage, f.source().0.name()),
            other => panic!("{other:?}"),
        }
    }
}

#[test]
fn invalid_config_stops_before_any_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg.solver.eigen_tol = -1.0;
    assert!(matches!(
        run_pipeline(&cfg, &opts(tmp.path(), Stage::Metrics)),
        Err(Error::Config { .. })
    ));
    assert!(!tmp.path().join("manifest.json").exists());
}
