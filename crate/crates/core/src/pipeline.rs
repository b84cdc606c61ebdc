//! Stage orchestration: potential → spectrum → cross sections → broadening →
//! metrics. Every stage writes into `<cache>/<stage>-<key>/`, where the key
//! hashes the stage's own config inputs together with its upstream keys, so a
//! change anywhere upstream invalidates everything below it.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::broadening::{
    conduction_slope, effective_trap_density, electrode_broadening, ep_broadening, ep_broadening_hz, nv_level_slope,
    redfield_linewidth, surface_variance, total_linewidth, trap_occupation, BroadeningInputs, BroadeningReport,
    FluctuatorModel, SquareWellBox,
};
use crate::config::{Config, EpMode};
use crate::eigen::{
    assemble_hamiltonian, level_splitting, lowest_eigenpairs_from, solve_all_valleys, EigenOptions, EigenSolution,
    Valley,
};
use crate::electrostatics::{axial_profile, solve_potential_with, PotentialSolution};
use crate::error::{Error, Result};
use crate::grid::{gaussian_moments, GaussianMoments, Grid3D, ScalarField3D};
use crate::io::{read_field, read_json, sha256_file, sha256_hex, write_csv, write_field, write_json, Cell};
use crate::photoionization::{cross_section_curve, enhancement_factor, Enhancement};
use crate::scc::scc_metrics;
use crate::units::uev_to_ghz;

pub const TOOL_VERSION: &str = concat!("nv-scc ", env!("CARGO_PKG_VERSION"));
pub const MANIFEST_FILE: &str = "manifest.json";
const STAGE_FILE: &str = "stage.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Potential,
    Spectrum,
    Xsection,
    Broadening,
    Metrics,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Potential,
        Stage::Spectrum,
        Stage::Xsection,
        Stage::Broadening,
        Stage::Metrics,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Potential => "potential",
            Stage::Spectrum => "spectrum",
            Stage::Xsection => "xsection",
            Stage::Broadening => "broadening",
            Stage::Metrics => "metrics",
        }
    }

    pub fn upstream(self) -> &'static [Stage] {
        match self {
            Stage::Potential => &[],
            Stage::Spectrum => &[Stage::Potential],
            Stage::Xsection => &[Stage::Spectrum],
            Stage::Broadening => &[Stage::Potential, Stage::Spectrum],
            Stage::Metrics => &[Stage::Spectrum, Stage::Xsection, Stage::Broadening],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Figure {
    Fig2,
    Fig4,
    Fig5,
    Profiles,
}

impl Figure {
    pub const ALL: [Figure; 4] = [Figure::Fig2, Figure::Fig4, Figure::Fig5, Figure::Profiles];

    /// Stage that produces the data and the file name inside its directory.
    pub fn source(self) -> (Stage, &'static str) {
        match self {
            Figure::Fig2 => (Stage::Xsection, "fig2.csv"),
            Figure::Fig4 => (Stage::Broadening, "fig4.csv"),
            Figure::Fig5 => (Stage::Broadening, "fig5.csv"),
            Figure::Profiles => (Stage::Potential, "profile.csv"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub key: String,
    pub dir: String,
    pub cached: bool,
    pub wall_seconds: f64,
    pub files: Vec<FileEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config: Config,
    pub stages: Vec<StageRecord>,
    /// Files copied into the run directory.
    pub outputs: Vec<FileEntry>,
    pub complete: bool,
    pub error: Option<String>,
}

impl RunManifest {
    pub fn stage(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|r| r.stage == stage)
    }

    pub fn load(run_dir: &Path) -> Result<Self> {
        read_json(&run_dir.join(MANIFEST_FILE))
    }
}

/// Completion marker written last into a stage directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StageStamp {
    stage: Stage,
    key: String,
    /// Hash over the upstream stages' file hashes at the time of the run.
    upstream: String,
    files: Vec<FileEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub index: usize,
    pub valley: Valley,
    pub valley_index: usize,
    pub energy_ghz: f64,
    /// √A_e·F at the NV.
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumArtifact {
    pub levels: Vec<LevelRecord>,
    /// First gap (GHz).
    pub delta_c: f64,
    pub ground_valley: Valley,
    pub ground_index: usize,
    pub ground_energies_uev: Vec<f64>,
    pub ground_moments: GaussianMoments,
    pub iterations: Vec<usize>,
    pub worst_residual_uev: f64,
    /// Potential subtracted so the well floor sits at zero energy (V).
    pub floor_volts: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XsectionArtifact {
    pub enhancement: Enhancement,
    pub linewidth_phi: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BroadeningArtifact {
    pub report: BroadeningReport,
    /// Ground level at V₀ ∓ dV (GHz above the floor).
    pub slope_levels_ghz: [f64; 2],
    pub slope_dv: f64,
    pub surface_variance_j2: f64,
    pub potential_at_50nm_mv: [f64; 2],
}

/// Stage keys for a config. Pure: nothing is computed.
pub fn stage_keys(cfg: &Config) -> Vec<(Stage, String)> {
    let mut keys: Vec<(Stage, String)> = Vec::new();
    for stage in Stage::ALL {
        let upstream: Vec<&str> = stage
            .upstream()
            .iter()
            .map(|s| keys.iter().find(|(k, _)| k == s).expect("upstream precedes").1.as_str())
            .collect();
        let inputs = stage_inputs(cfg, stage);
        let doc = json!({
            "stage": stage.name(),
            "tool": TOOL_VERSION,
            "upstream": upstream,
            "inputs": inputs,
        });
        keys.push((stage, sha256_hex(doc.to_string().as_bytes())));
    }
    keys
}

fn stage_inputs(cfg: &Config, stage: Stage) -> serde_json::Value {
    let g = &cfg.geometry;
    let s = &cfg.solver;
    match stage {
        Stage::Potential => json!({
            "electrode_radius": g.electrode_radius,
            "electrode_voltage": g.electrode_voltage,
            "potential_extent": cfg.grid.potential_extent,
            "potential_spacing": cfg.grid.potential_spacing,
            "potential_tol": s.potential_tol,
            "potential_max_cycles": s.potential_max_cycles,
        }),
        Stage::Spectrum => json!({
            "material": cfg.material,
            "nv_depth": g.nv_depth,
            "eigen_extent": cfg.grid.eigen_extent,
            "eigen_spacing": cfg.grid.eigen_spacing,
            "eigen_tol": s.eigen_tol,
            "eigen_max_iter": s.eigen_max_iter,
            "per_valley_count": s.per_valley_count,
            "seed": s.seed,
        }),
        Stage::Xsection => json!({
            "material": cfg.material,
            "spectroscopy": cfg.spectroscopy,
            "xsection": cfg.xsection,
        }),
        Stage::Broadening => json!({
            "material": cfg.material,
            "geometry": cfg.geometry,
            "grid": cfg.grid,
            "solver": cfg.solver,
            "broadening": cfg.broadening,
            "sweeps": cfg.sweeps,
        }),
        Stage::Metrics => json!({ "spectroscopy": cfg.spectroscopy }),
    }
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

fn stage_dir(cache: &Path, stage: Stage, key: &str) -> PathBuf {
    cache.join(format!("{}-{}", stage.name(), &key[..20]))
}

/// A stage directory is reusable when its stamp matches the key and every
/// listed file still hashes to the recorded value.
fn cached_files(dir: &Path, stage: Stage, key: &str, upstream: &str) -> Option<Vec<FileEntry>> {
    let stamp: StageStamp = read_json(&dir.join(STAGE_FILE)).ok()?;
    if stamp.stage != stage || stamp.key != key {
        return None;
    }
    if stamp.upstream != upstream {
        log::info!("{}: upstream artifacts changed, recomputing", stage.name());
        return None;
    }
    for f in &stamp.files {
        if sha256_file(&dir.join(&f.path)).ok()? != f.sha256 {
            log::warn!("{}: {} changed on disk, recomputing", stage.name(), f.path);
            return None;
        }
    }
    Some(stamp.files)
}

fn stamp(dir: &Path, stage: Stage, key: &str, upstream: &str, names: &[String]) -> Result<Vec<FileEntry>> {
    let files = names
        .iter()
        .map(|n| {
            Ok(FileEntry {
                path: n.clone(),
                sha256: sha256_file(&dir.join(n))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_json(
        &dir.join(STAGE_FILE),
        &StageStamp {
            stage,
            key: key.to_string(),
            upstream: upstream.to_string(),
            files: files.clone(),
        },
    )?;
    Ok(files)
}

fn eigen_options(cfg: &Config) -> EigenOptions {
    EigenOptions {
        tol: cfg.solver.eigen_tol,
        max_iter: cfg.solver.eigen_max_iter,
        seed: cfg.solver.seed,
    }
}

/// Potential on the envelope grid, shifted so its maximum (the electrode, for
/// a positive bias) is zero. Electron energies then start at the well floor.
pub fn well_potential(potential: &ScalarField3D, eigen_grid: Grid3D) -> (ScalarField3D, f64) {
    let mut s = potential.resample(eigen_grid);
    let top = s.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    s.values.iter_mut().for_each(|v| *v -= top);
    (s, top)
}

fn solve_at(cfg: &Config, voltage: f64) -> Result<PotentialSolution> {
    let mut geom = cfg.geometry.clone();
    geom.electrode_voltage = voltage;
    let grid = cfg.grid.potential_grid()?;
    solve_potential_with(&geom, &grid, cfg.solver.potential_tol, cfg.solver.potential_max_cycles)
}

fn run_potential(cfg: &Config, dir: &Path) -> Result<Vec<String>> {
    let sol = solve_at(cfg, cfg.geometry.electrode_voltage)?;
    write_field(&dir.join("potential.bin"), &sol.potential)?;
    let rows: Vec<Vec<Cell>> = axial_profile(&sol, (0.0, 0.0))?
        .into_iter()
        .map(|(z, v)| vec![z.into(), v.into()])
        .collect();
    write_csv(&dir.join("profile.csv"), &["depth_nm", "potential_mV"], &rows)?;
    write_json(
        &dir.join("summary.json"),
        &json!({
            "electrode_voltage_mV": sol.electrode_voltage,
            "relative_residual": sol.residual,
            "cycles": sol.iterations,
            "grid": sol.potential.grid,
        }),
    )?;
    Ok(vec![
        "potential.bin".into(),
        "potential.json".into(),
        "profile.csv".into(),
        "summary.json".into(),
    ])
}

fn run_spectrum(cfg: &Config, dir: &Path, pot_dir: &Path) -> Result<Vec<String>> {
    let pot = read_field(&pot_dir.join("potential.bin"))?;
    let (well, floor) = well_potential(&pot, cfg.grid.eigen_grid()?);
    drop(pot);
    let vs = solve_all_valleys(&well, &cfg.material, cfg.solver.per_valley_count, &eigen_options(cfg))?;
    let nv = cfg.geometry.nv_position();
    let amps = vs.amplitudes_at(nv)?;
    let levels: Vec<LevelRecord> = vs
        .spectrum
        .levels
        .iter()
        .zip(&amps)
        .enumerate()
        .map(|(i, (l, a))| LevelRecord {
            index: i,
            valley: l.valley,
            valley_index: l.index,
            energy_ghz: l.energy_ghz,
            amplitude: *a,
        })
        .collect();
    let (g, gi) = vs.ground();
    let ground_valley = g.valley.expect("valley solutions are labelled");
    let delta_c = if levels.len() > 1 { level_splitting(&vs.spectrum, 0, 1)? } else { 0.0 };
    let art = SpectrumArtifact {
        delta_c,
        ground_valley,
        ground_index: gi,
        ground_energies_uev: g.energies.clone(),
        ground_moments: gaussian_moments(&g.envelopes[gi])?,
        iterations: vs.solutions.iter().map(|s| s.iterations).collect(),
        worst_residual_uev: vs
            .solutions
            .iter()
            .flat_map(|s| s.residuals.iter().cloned())
            .fold(0.0, f64::max),
        floor_volts: floor,
        levels,
    };
    let rows: Vec<Vec<Cell>> = art
        .levels
        .iter()
        .map(|l| vec![l.index.into(), l.valley.label().into(), l.energy_ghz.into()])
        .collect();
    write_csv(&dir.join("spectrum.csv"), &["index", "valley", "energy_GHz"], &rows)?;
    write_json(&dir.join("spectrum.json"), &art)?;
    let mut names = vec!["spectrum.csv".to_string(), "spectrum.json".to_string()];
    // ground-valley envelopes warm-start the slope solves downstream
    for (i, env) in g.envelopes.iter().enumerate() {
        let n = format!("ground_valley_{i}.bin");
        write_field(&dir.join(&n), env)?;
        names.push(n.clone());
        names.push(n.replace(".bin", ".json"));
    }
    Ok(names)
}

fn load_ground_valley(dir: &Path, art: &SpectrumArtifact) -> Result<EigenSolution> {
    let envelopes = (0..art.ground_energies_uev.len())
        .map(|i| read_field(&dir.join(format!("ground_valley_{i}.bin"))))
        .collect::<Result<Vec<_>>>()?;
    let n = envelopes.len();
    Ok(EigenSolution {
        valley: Some(art.ground_valley),
        energies: art.ground_energies_uev.clone(),
        envelopes,
        normalization_ae: vec![0.0; n],
        residuals: vec![0.0; n],
        iterations: 0,
    })
}

fn run_xsection(cfg: &Config, dir: &Path, spec_dir: &Path) -> Result<Vec<String>> {
    let spec: SpectrumArtifact = read_json(&spec_dir.join("spectrum.json"))?;
    let e: Vec<f64> = spec.levels.iter().map(|l| l.energy_ghz).collect();
    let a: Vec<f64> = spec.levels.iter().map(|l| l.amplitude).collect();
    let x = &cfg.xsection;
    let curve = cross_section_curve(&e, &a, x.phi, x.energy_margin, x.coarse_step, &cfg.material, &cfg.spectroscopy)?;
    let enhancement = enhancement_factor(&curve)?;
    let rows: Vec<Vec<Cell>> = (0..curve.energies.len())
        .map(|i| vec![curve.energies[i].into(), curve.bulk[i].into(), curve.confined[i].into()])
        .collect();
    write_csv(&dir.join("fig2.csv"), &["energy_GHz", "bulk", "confined"], &rows)?;
    write_json(
        &dir.join("xsection.json"),
        &XsectionArtifact {
            enhancement,
            linewidth_phi: x.phi,
            samples: curve.energies.len(),
        },
    )?;
    Ok(vec!["fig2.csv".into(), "xsection.json".into()])
}

fn run_broadening(cfg: &Config, dir: &Path, spec_dir: &Path) -> Result<Vec<String>> {
    let spec: SpectrumArtifact = read_json(&spec_dir.join("spectrum.json"))?;
    let ground = load_ground_valley(spec_dir, &spec)?;
    let eg = cfg.grid.eigen_grid()?;
    let mass = spec.ground_valley.mass_tensor(&cfg.material);
    let gi = spec.ground_index;
    let opts = eigen_options(cfg);
    let v0 = cfg.geometry.electrode_voltage;
    let dv = cfg.solver.slope_dv;

    let mut levels = Vec::new();
    let mut at_50 = Vec::new();
    let slope_cb = conduction_slope(
        |v| {
            let sol = solve_at(cfg, v)?;
            at_50.push(sol.potential.sample([0.0, 0.0, 50.0]).map(|x| x * 1e3).unwrap_or(f64::NAN));
            let (well, _) = well_potential(&sol.potential, eg);
            let h = assemble_hamiltonian(&eg, &well, mass)?;
            let s = lowest_eigenpairs_from(&h, gi + 1, &opts, Some(&ground))
                .map_err(|e| e.context(&format!("ground level at {v} mV")))?;
            let e = uev_to_ghz(s.energies[gi]);
            levels.push(e);
            Ok(e)
        },
        v0,
        dv,
    )?;
    let slope_nv = nv_level_slope();
    let b = &cfg.broadening;
    let g = &cfg.geometry;
    let gamma_electrode = electrode_broadening(b.sigma_v, slope_cb, slope_nv)?;

    let bx = SquareWellBox::new(b.box_l)?;
    let ep_computed = ep_broadening(&bx, &cfg.material, g.temperature_t, b.ep_levels)?;
    let gamma_ep = match b.ep_mode {
        EpMode::Bound => {
            if ep_computed > b.ep_bound {
                log::warn!("computed e-p rate {ep_computed:.4} GHz exceeds the configured bound {} GHz", b.ep_bound);
            }
            b.ep_bound
        }
        EpMode::Computed => ep_computed,
    };

    let eps_r = cfg.material.epsilon_d;
    let trap = trap_occupation(
        g.trap_density_eta,
        g.donor_depth_n,
        g.trap_energy_et,
        g.donor_energy_en,
        g.temperature_t,
        b.v_ext,
        eps_r,
    )?;
    let eta_eff = effective_trap_density(g.trap_density_eta, trap.occupation)?;
    let sigma = b.sigma_override.unwrap_or(spec.ground_moments.sigma);
    let q_z = b.q_z_override.unwrap_or(g.nv_depth);
    let var = surface_variance(b.regime, eta_eff, sigma, q_z, cfg.material.permittivity(), b.dipole_p)?;
    let gamma_surface = redfield_linewidth(var, &FluctuatorModel::with_rate(b.gamma_hop)?)? * 1e-9;

    let inputs = BroadeningInputs {
        sigma_v: b.sigma_v,
        slope_cb,
        slope_nv,
        box_l: b.box_l,
        ep_levels: b.ep_levels,
        ep_mode: b.ep_mode,
        temperature: g.temperature_t,
        eta: g.trap_density_eta,
        occupation: trap.occupation,
        eta_eff,
        gamma_hop: b.gamma_hop,
        regime: b.regime,
        sigma,
        q_z,
    };
    let report = total_linewidth(gamma_electrode, gamma_ep, ep_computed, gamma_surface, inputs)?;
    write_json(
        &dir.join("broadening.json"),
        &BroadeningArtifact {
            report,
            slope_levels_ghz: [levels[1], levels[0]],
            slope_dv: dv,
            surface_variance_j2: var,
            potential_at_50nm_mv: [at_50[1], at_50[0]],
        },
    )?;

    let sw = &cfg.sweeps;
    let mut fig4 = Vec::new();
    for &l in &sw.fig4_lengths {
        for &d in &sw.fig4_depths {
            let r = ep_broadening_hz(&SquareWellBox::new([l, l, d])?, &cfg.material, g.temperature_t, b.ep_levels)?;
            fig4.push(vec![l.into(), d.into(), r.into()]);
        }
    }
    write_csv(&dir.join("fig4.csv"), &["L_nm", "depth_nm", "gamma_ep_Hz"], &fig4)?;

    let [lo, hi] = sw.fig5_log10_eta;
    let fig5 = (0..sw.fig5_points)
        .map(|i| {
            let eta = 10f64.powf(lo + (hi - lo) * i as f64 / (sw.fig5_points - 1) as f64);
            let t = trap_occupation(
                eta,
                g.donor_depth_n,
                g.trap_energy_et,
                g.donor_energy_en,
                g.temperature_t,
                b.v_ext,
                eps_r,
            )?;
            Ok(vec![eta.into(), t.occupation.into()])
        })
        .collect::<Result<Vec<_>>>()?;
    write_csv(&dir.join("fig5.csv"), &["eta_m2", "occupation"], &fig5)?;
    Ok(vec!["broadening.json".into(), "fig4.csv".into(), "fig5.csv".into()])
}

fn run_metrics(cfg: &Config, dir: &Path, ups: &[(Stage, PathBuf)]) -> Result<Vec<String>> {
    let find = |s: Stage| &ups.iter().find(|(k, _)| *k == s).expect("upstream listed").1;
    let spec: SpectrumArtifact = read_json(&find(Stage::Spectrum).join("spectrum.json"))?;
    let xs: XsectionArtifact = read_json(&find(Stage::Xsection).join("xsection.json"))?;
    let br: BroadeningArtifact = read_json(&find(Stage::Broadening).join("broadening.json"))?;
    let m = scc_metrics(
        spec.delta_c,
        cfg.spectroscopy.delta_d,
        br.report.total_phi,
        cfg.spectroscopy.g_ratio,
        xs.enhancement.f,
    )?;
    write_json(&dir.join("metrics.json"), &m)?;
    Ok(vec!["metrics.json".into()])
}

/// Files copied into the run directory after each stage.
fn run_outputs(stage: Stage) -> &'static [&'static str] {
    match stage {
        Stage::Potential => &["profile.csv"],
        Stage::Spectrum => &["spectrum.csv"],
        Stage::Xsection => &["xsection.json"],
        Stage::Broadening => &["broadening.json"],
        Stage::Metrics => &["metrics.json"],
    }
}

pub struct PipelineOptions {
    pub out: PathBuf,
    /// Defaults to `<out>/cache`.
    pub stage_cache: Option<PathBuf>,
    /// Last stage to run; its upstream stages run (or load) first.
    pub until: Stage,
}

/// Run (or reuse) every stage up to `opts.until`. The manifest is written to
/// `<out>/manifest.json` on success and, with the error recorded, on failure.
pub fn run_pipeline(cfg: &Config, opts: &PipelineOptions) -> Result<RunManifest> {
    cfg.validate()?;
    let out = absolute(&opts.out);
    let cache = absolute(&opts.stage_cache.clone().unwrap_or_else(|| out.join("cache")));
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let keys = stage_keys(cfg);
    let mut manifest = RunManifest {
        tool_version: TOOL_VERSION.into(),
        config: cfg.clone(),
        stages: vec![],
        outputs: vec![],
        complete: false,
        error: None,
    };
    for (stage, key) in keys.iter().filter(|(s, _)| *s <= opts.until) {
        match run_stage(cfg, *stage, key, &cache, &manifest) {
            Ok(rec) => {
                for name in run_outputs(*stage) {
                    let src = Path::new(&rec.dir).join(name);
                    let bytes = std::fs::read(&src).map_err(|e| Error::io(&src, e))?;
                    crate::io::write_atomic(&out.join(name), &bytes)?;
                    manifest.outputs.retain(|f| f.path != *name);
                    manifest.outputs.push(FileEntry {
                        path: name.to_string(),
                        sha256: sha256_hex(&bytes),
                    });
                }
                manifest.stages.push(rec);
            }
            Err(e) => {
                manifest.error = Some(format!("stage {}: {e}", stage.name()));
                write_json(&out.join(MANIFEST_FILE), &manifest)?;
                return Err(e);
            }
        }
    }
    manifest.complete = true;
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn run_pipeline_from_path(config_path: &Path, opts: &PipelineOptions) -> Result<RunManifest> {
    run_pipeline(&Config::from_path(config_path)?, opts)
}

fn upstream_digest(stage: Stage, done: &RunManifest) -> String {
    let parts: Vec<String> = stage
        .upstream()
        .iter()
        .filter_map(|s| done.stage(*s))
        .flat_map(|r| r.files.iter().map(move |f| format!("{}/{}:{}", r.stage.name(), f.path, f.sha256)))
        .collect();
    sha256_hex(parts.join("\n").as_bytes())
}

fn run_stage(cfg: &Config, stage: Stage, key: &str, cache: &Path, done: &RunManifest) -> Result<StageRecord> {
    let dir = stage_dir(cache, stage, key);
    let t = Instant::now();
    let ups: Vec<(Stage, PathBuf)> = stage
        .upstream()
        .iter()
        .map(|s| {
            done.stage(*s)
                .map(|r| (*s, PathBuf::from(&r.dir)))
                .ok_or_else(|| Error::Dependency {
                    stage: s.name().into(),
                    detail: format!("needed by {}", stage.name()),
                })
        })
        .collect::<Result<_>>()?;
    let upstream = upstream_digest(stage, done);
    if let Some(files) = cached_files(&dir, stage, key, &upstream) {
        log::info!("{}: reusing {}", stage.name(), dir.display());
        return Ok(StageRecord {
            stage,
            key: key.into(),
            dir: dir.display().to_string(),
            cached: true,
            wall_seconds: t.elapsed().as_secs_f64(),
            files,
        });
    }
    // a stale partial directory is discarded wholesale
    if dir.exists() {
        std::fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    log::info!("{}: computing into {}", stage.name(), dir.display());
    let up = |s: Stage| ups.iter().find(|(k, _)| *k == s).expect("upstream listed").1.clone();
    let names = match stage {
        Stage::Potential => run_potential(cfg, &dir),
        Stage::Spectrum => run_spectrum(cfg, &dir, &up(Stage::Potential)),
        Stage::Xsection => run_xsection(cfg, &dir, &up(Stage::Spectrum)),
        Stage::Broadening => run_broadening(cfg, &dir, &up(Stage::Spectrum)),
        Stage::Metrics => run_metrics(cfg, &dir, &ups),
    }
    .map_err(|e| e.context(stage.name()))?;
    let files = stamp(&dir, stage, key, &upstream, &names)?;
    let wall = t.elapsed().as_secs_f64();
    log::info!("{}: done in {wall:.1} s", stage.name());
    Ok(StageRecord {
        stage,
        key: key.into(),
        dir: dir.display().to_string(),
        cached: false,
        wall_seconds: wall,
        files,
    })
}

/// Copy figure tables out of the stage directories named in the run manifest
/// into `<run_dir>/figures/`.
pub fn export_figure_data(run_dir: &Path, figure: Figure) -> Result<Vec<PathBuf>> {
    let (stage, name) = figure.source();
    let missing = |detail: String| Error::Dependency {
        stage: stage.name().into(),
        detail,
    };
    let manifest = RunManifest::load(run_dir)
        .map_err(|_| missing(format!("no run manifest in {}; run the pipeline first", run_dir.display())))?;
    let rec = manifest
        .stage(stage)
        .ok_or_else(|| missing("stage has not been run".into()))?;
    let entry = rec
        .files
        .iter()
        .find(|f| f.path == name)
        .ok_or_else(|| missing(format!("{name} is not among the stage outputs")))?;
    let src = Path::new(&rec.dir).join(name);
    let bytes = std::fs::read(&src).map_err(|_| missing(format!("{} is missing", src.display())))?;
    if sha256_hex(&bytes) != entry.sha256 {
        return Err(missing(format!("{} no longer matches the manifest", src.display())));
    }
    let dst = run_dir.join("figures").join(name);
    crate::io::write_atomic(&dst, &bytes)?;
    Ok(vec![dst])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_chain_through_upstream() {
        let a = Config::shipped_default();
        let mut b = a.clone();
        b.geometry.electrode_radius += 1.0;
        let (ka, kb) = (stage_keys(&a), stage_keys(&b));
        // potential input changed: every stage downstream changes too
        assert!(ka.iter().zip(&kb).all(|(x, y)| x.1 != y.1));

        let mut c = a.clone();
        c.xsection.phi = 2.0;
        let kc = stage_keys(&c);
        assert_eq!(ka[0], kc[0]);
        assert_eq!(ka[1], kc[1]);
        assert_ne!(ka[2], kc[2]);
        assert_eq!(ka[3], kc[3]);
        assert_ne!(ka[4], kc[4]);
        assert_eq!(stage_keys(&a), ka);
    }

    #[test]
    fn export_without_run_names_the_stage() {
        let dir = tempfile::tempdir().unwrap();
        match export_figure_data(dir.path(), Figure::Fig2) {
            Err(Error::Dependency { stage, .. }) => assert_eq!(stage, "xsection"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn shifted_well_starts_at_zero() {
        let g = Grid3D::new([-1.0, -1.0, 0.0], [1.0; 3], [3, 3, 3]).unwrap();
        let f = ScalarField3D::from_fn(g, crate::grid::FieldUnit::Volt, |p| 0.01 - 0.001 * p[2]).unwrap();
        let (w, top) = well_potential(&f, g);
        assert!((top - 0.01).abs() < 1e-15);
        assert!(w.values.iter().all(|v| *v <= 0.0));
    }
}
