//! Run configuration. One JSON document, keys named exactly like the fields
//! below, units fixed by convention (nm, mV, eV, K, GHz, Hz, m⁻²).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{build_grid, Grid3D};

/// The shipped default configuration.
pub const DEFAULT_CONFIG_JSON: &str = include_str!("../../../config/default.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialParams {
    /// Longitudinal effective mass (mₑ).
    pub m_longitudinal: f64,
    /// Transverse effective mass (mₑ).
    pub m_transverse: f64,
    /// Relative dielectric constant; the absolute value is epsilon_d·ε₀.
    pub epsilon_d: f64,
    /// kg/m³
    pub density_rho: f64,
    /// Longitudinal sound speed (m/s).
    pub c_l: f64,
    /// Acoustic deformation potential (eV).
    #[serde(rename = "Theta")]
    pub theta: f64,
    pub refractive_index_n: f64,
}

impl MaterialParams {
    pub fn diamond() -> Self {
        Self {
            m_longitudinal: 1.40,
            m_transverse: 0.36,
            epsilon_d: 5.7,
            density_rho: 3515.0,
            c_l: 17500.0,
            theta: 8.7,
            refractive_index_n: 2.41,
        }
    }

    /// Absolute permittivity ε_r·ε₀ (F/m).
    pub fn permittivity(&self) -> f64 {
        self.epsilon_d * crate::units::VACUUM_PERMITTIVITY
    }

    /// Density-of-states mass (m_l·m_t²)^(1/3).
    pub fn dos_mass(&self) -> f64 {
        (self.m_longitudinal * self.m_transverse * self.m_transverse).cbrt()
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("material.m_longitudinal", self.m_longitudinal),
            ("material.m_transverse", self.m_transverse),
            ("material.epsilon_d", self.epsilon_d),
            ("material.density_rho", self.density_rho),
            ("material.c_l", self.c_l),
            ("material.Theta", self.theta),
            ("material.refractive_index_n", self.refractive_index_n),
        ];
        for (name, v) in fields {
            positive(name, v)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceGeometry {
    /// nm
    pub electrode_radius: f64,
    /// mV
    pub electrode_voltage: f64,
    /// Depth of the NV below the surface (nm); also q_z of the surface model.
    pub nv_depth: f64,
    /// Depth of the donor layer (nm).
    #[serde(rename = "donor_depth_N")]
    pub donor_depth_n: f64,
    /// Surface trap density (m⁻²).
    pub trap_density_eta: f64,
    /// eV
    #[serde(rename = "trap_energy_ET")]
    pub trap_energy_et: f64,
    /// eV
    #[serde(rename = "donor_energy_EN")]
    pub donor_energy_en: f64,
    /// K
    #[serde(rename = "temperature_T")]
    pub temperature_t: f64,
}

impl DeviceGeometry {
    pub fn validate(&self) -> Result<()> {
        positive("geometry.electrode_radius", self.electrode_radius)?;
        finite("geometry.electrode_voltage", self.electrode_voltage)?;
        positive("geometry.nv_depth", self.nv_depth)?;
        positive("geometry.donor_depth_N", self.donor_depth_n)?;
        non_negative("geometry.trap_density_eta", self.trap_density_eta)?;
        finite("geometry.trap_energy_ET", self.trap_energy_et)?;
        finite("geometry.donor_energy_EN", self.donor_energy_en)?;
        positive("geometry.temperature_T", self.temperature_t)?;
        if self.donor_depth_n <= self.nv_depth {
            log::warn!(
                "donor layer at {} nm is not below the NV at {} nm",
                self.donor_depth_n,
                self.nv_depth
            );
        }
        Ok(())
    }

    /// NV position in the solver frame: on the electrode axis (x = y = 0),
    /// z measured downward from the surface.
    pub fn nv_position(&self) -> [f64; 3] {
        [0.0, 0.0, self.nv_depth]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Electrostatics domain (nm), centered laterally on the electrode.
    pub potential_extent: [f64; 3],
    pub potential_spacing: [f64; 3],
    /// Envelope domain (nm), also centered on the electrode, starting at the surface.
    pub eigen_extent: [f64; 3],
    pub eigen_spacing: [f64; 3],
}

impl GridConfig {
    pub fn potential_grid(&self) -> Result<Grid3D> {
        centered_grid(self.potential_extent, self.potential_spacing)
            .map_err(|e| Error::config("grid.potential_extent", e.to_string()))
    }

    pub fn eigen_grid(&self) -> Result<Grid3D> {
        centered_grid(self.eigen_extent, self.eigen_spacing)
            .map_err(|e| Error::config("grid.eigen_extent", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.potential_grid()?;
        let e = self.eigen_grid()?;
        let pe = p.extent();
        let ee = e.extent();
        if ee[0] > pe[0] + 1e-9 || ee[1] > pe[1] + 1e-9 || ee[2] > pe[2] + 1e-9 {
            return Err(Error::config(
                "grid.eigen_extent",
                "envelope domain must fit inside the electrostatics domain",
            ));
        }
        Ok(())
    }
}

/// Grid covering x, y ∈ [−extent/2, extent/2] and z ∈ [0, extent].
pub fn centered_grid(extent: [f64; 3], spacing: [f64; 3]) -> Result<Grid3D> {
    let g = build_grid(extent, spacing)?;
    let e = g.extent();
    Ok(g.translated([-e[0] / 2.0, -e[1] / 2.0, 0.0]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectroscopyConstants {
    /// NV ground-state splitting (GHz).
    #[serde(rename = "delta_D")]
    pub delta_d: f64,
    pub g_ratio: f64,
    /// eV
    pub ionization_energy: f64,
    pub mu_b: f64,
    #[serde(rename = "franck_condon_C")]
    pub franck_condon_c: f64,
    #[serde(rename = "laser_field_E")]
    pub laser_field_e: f64,
}

impl SpectroscopyConstants {
    pub fn validate(&self) -> Result<()> {
        positive("spectroscopy.delta_D", self.delta_d)?;
        non_negative("spectroscopy.g_ratio", self.g_ratio)?;
        positive("spectroscopy.ionization_energy", self.ionization_energy)?;
        for (name, v) in [
            ("spectroscopy.mu_b", self.mu_b),
            ("spectroscopy.franck_condon_C", self.franck_condon_c),
            ("spectroscopy.laser_field_E", self.laser_field_e),
        ] {
            if v != 1.0 {
                return Err(Error::config(name, "unit placeholder, must be 1"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Relative residual for the Laplace solve.
    pub potential_tol: f64,
    pub potential_max_cycles: usize,
    /// Absolute eigen-residual target ‖HF − EF‖/‖F‖ in µeV.
    pub eigen_tol: f64,
    pub eigen_max_iter: usize,
    pub per_valley_count: usize,
    pub seed: u64,
    /// Voltage step for the conduction slope (mV).
    pub slope_dv: f64,
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        positive("solver.potential_tol", self.potential_tol)?;
        positive("solver.eigen_tol", self.eigen_tol)?;
        positive("solver.slope_dv", self.slope_dv)?;
        if self.potential_max_cycles == 0 {
            return Err(Error::config("solver.potential_max_cycles", "must be at least 1"));
        }
        if self.eigen_max_iter == 0 {
            return Err(Error::config("solver.eigen_max_iter", "must be at least 1"));
        }
        if self.per_valley_count == 0 {
            return Err(Error::config("solver.per_valley_count", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct XsectionConfig {
    /// Lorentzian linewidth for the cross-section curves (GHz).
    pub phi: f64,
    /// Upper end of the detuning axis above the highest level (GHz).
    pub energy_margin: f64,
    /// Sample step away from peaks (GHz).
    pub coarse_step: f64,
}

impl XsectionConfig {
    pub fn validate(&self) -> Result<()> {
        positive("xsection.phi", self.phi)?;
        positive("xsection.energy_margin", self.energy_margin)?;
        positive("xsection.coarse_step", self.coarse_step)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceRegime {
    Dipole,
    Monopole,
}

/// How the e-p channel enters the total linewidth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpMode {
    /// Use `ep_bound` (the computed value is still reported and checked against it).
    Bound,
    Computed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BroadeningConfig {
    /// RMS electrode voltage noise (mV).
    pub sigma_v: f64,
    /// Square-well stand-in for the confined volume (nm).
    pub box_l: [f64; 3],
    pub ep_levels: usize,
    pub ep_mode: EpMode,
    /// GHz
    pub ep_bound: f64,
    pub regime: SurfaceRegime,
    /// Charge hopping rate γ (Hz). Required; there is no silent default.
    pub gamma_hop: f64,
    /// Dipole length (nm); defaults to 1/√η.
    #[serde(default)]
    pub dipole_p: Option<f64>,
    /// Explicit σ (nm) instead of the ground-envelope moments.
    #[serde(default)]
    pub sigma_override: Option<[f64; 3]>,
    /// Explicit q_z (nm) instead of geometry.nv_depth.
    #[serde(default)]
    pub q_z_override: Option<f64>,
    /// Extra potential added to the trap-occupation argument (mV).
    pub v_ext: f64,
}

impl BroadeningConfig {
    pub fn validate(&self) -> Result<()> {
        non_negative("broadening.sigma_v", self.sigma_v)?;
        for (a, l) in self.box_l.iter().enumerate() {
            positive(&format!("broadening.box_l[{a}]"), *l)?;
        }
        if self.ep_levels < 2 {
            return Err(Error::config("broadening.ep_levels", "needs at least 2 box levels"));
        }
        non_negative("broadening.ep_bound", self.ep_bound)?;
        positive("broadening.gamma_hop", self.gamma_hop)?;
        if let Some(p) = self.dipole_p {
            positive("broadening.dipole_p", p)?;
        }
        if let Some(s) = self.sigma_override {
            for v in s {
                non_negative("broadening.sigma_override", v)?;
            }
        }
        if let Some(q) = self.q_z_override {
            positive("broadening.q_z_override", q)?;
        }
        finite("broadening.v_ext", self.v_ext)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Lateral box lengths for the e-p map (nm).
    pub fig4_lengths: Vec<f64>,
    /// Box depths for the e-p map (nm).
    pub fig4_depths: Vec<f64>,
    /// log10 range and point count of the trap-density sweep.
    pub fig5_log10_eta: [f64; 2],
    pub fig5_points: usize,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        for v in self.fig4_lengths.iter().chain(&self.fig4_depths) {
            positive("sweeps.fig4", *v)?;
        }
        if self.fig5_points < 2 {
            return Err(Error::config("sweeps.fig5_points", "need at least 2 points"));
        }
        if !(self.fig5_log10_eta[1] > self.fig5_log10_eta[0]) {
            return Err(Error::config("sweeps.fig5_log10_eta", "range must be increasing"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub material: MaterialParams,
    pub geometry: DeviceGeometry,
    pub grid: GridConfig,
    pub spectroscopy: SpectroscopyConstants,
    pub solver: SolverConfig,
    pub xsection: XsectionConfig,
    pub broadening: BroadeningConfig,
    pub sweeps: SweepConfig,
}

impl Config {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: Config = serde_json::from_str(s).map_err(|e| Error::config("document", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Self::from_json_str(&text)
    }

    pub fn shipped_default() -> Self {
        Self::from_json_str(DEFAULT_CONFIG_JSON).expect("shipped default config is valid")
    }

    pub fn validate(&self) -> Result<()> {
        self.material.validate()?;
        self.geometry.validate()?;
        self.grid.validate()?;
        self.spectroscopy.validate()?;
        self.solver.validate()?;
        self.xsection.validate()?;
        self.broadening.validate()?;
        self.sweeps.validate()?;
        let eg = self.grid.eigen_grid()?;
        if !eg.contains(self.geometry.nv_position()) {
            return Err(Error::config("geometry.nv_depth", "NV lies outside the envelope domain"));
        }
        Ok(())
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(name, format!("{v} is not finite")))
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(name, format!("{v} must be positive")))
    }
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(name, format!("{v} must be non-negative")))
    }
}
