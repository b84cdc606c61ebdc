//! Linewidth channels: electrode voltage noise, electron-phonon scattering and
//! surface-charge noise, and their sum φ.

mod phonon;
mod surface;
mod traps;

pub use phonon::{
    axis_overlap, box_levels, ep_alpha, ep_broadening, ep_broadening_hz, ep_mode_overlap, ep_rate_detail, BoxLevel,
    EpTerm, SquareWellBox,
};
pub use surface::{
    box_ground_sigma, hexapole_term, redfield_linewidth, surface_shape_factor, surface_variance, FluctuatorModel,
};
pub use traps::{effective_trap_density, fermi_dirac, trap_occupation, TrapState};

use serde::{Deserialize, Serialize};

use crate::config::{EpMode, SurfaceRegime};
use crate::error::{Error, Result};
use crate::units::{ELEMENTARY_CHARGE, PLANCK};

/// Shift of the NV level per mV of local potential: −e·(1 mV)/h in GHz/mV.
pub fn nv_level_slope() -> f64 {
    -ELEMENTARY_CHARGE * 1e-3 / PLANCK / 1e9
}

/// Central difference (E(V₀+dV) − E(V₀−dV))/(2dV) of a level energy in GHz
/// as a function of electrode voltage in mV.
pub fn conduction_slope(mut level_at: impl FnMut(f64) -> Result<f64>, v0: f64, dv: f64) -> Result<f64> {
    if !(dv > 0.0) || !dv.is_finite() {
        return Err(Error::invalid(format!("voltage step dV = {dv} mV must be positive")));
    }
    if dv >= 0.5 * v0.abs() && v0 != 0.0 {
        log::warn!("voltage step {dv} mV is not small against V0 = {v0} mV");
    }
    let up = level_at(v0 + dv)?;
    let down = level_at(v0 - dv)?;
    Ok((up - down) / (2.0 * dv))
}

/// |σ_V·(slope_cb − slope_nv)| in GHz.
pub fn electrode_broadening(sigma_v: f64, slope_cb: f64, slope_nv: f64) -> Result<f64> {
    if !(sigma_v >= 0.0) {
        return Err(Error::invalid(format!("sigma_V = {sigma_v} mV must be non-negative")));
    }
    Ok((sigma_v * (slope_cb - slope_nv)).abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BroadeningInputs {
    /// mV
    pub sigma_v: f64,
    /// GHz/mV
    pub slope_cb: f64,
    pub slope_nv: f64,
    /// nm
    pub box_l: [f64; 3],
    pub ep_levels: usize,
    pub ep_mode: EpMode,
    /// K
    pub temperature: f64,
    /// m⁻²
    pub eta: f64,
    pub occupation: f64,
    pub eta_eff: f64,
    /// Hz
    pub gamma_hop: f64,
    pub regime: SurfaceRegime,
    /// nm
    pub sigma: [f64; 3],
    pub q_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BroadeningReport {
    /// GHz
    pub gamma_electrode: f64,
    /// Value entering φ (the bound or the computed rate, per `ep_mode`).
    pub gamma_ep: f64,
    /// Computed e-p rate, always reported.
    pub gamma_ep_computed: f64,
    pub gamma_surface: f64,
    pub total_phi: f64,
    pub inputs: BroadeningInputs,
}

pub fn total_linewidth(
    gamma_electrode: f64,
    gamma_ep: f64,
    gamma_ep_computed: f64,
    gamma_surface: f64,
    inputs: BroadeningInputs,
) -> Result<BroadeningReport> {
    for (name, v) in [
        ("electrode", gamma_electrode),
        ("electron-phonon", gamma_ep),
        ("surface", gamma_surface),
    ] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::invalid(format!("{name} linewidth {v} GHz must be finite and non-negative")));
        }
    }
    Ok(BroadeningReport {
        gamma_electrode,
        gamma_ep,
        gamma_ep_computed,
        gamma_surface,
        total_phi: gamma_electrode + gamma_ep + gamma_surface,
        inputs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nv_slope_from_charge_over_planck() {
        let s = nv_level_slope();
        assert!(s < 0.0);
        assert!((s + 241.8).abs() < 0.05, "{s}");
        assert!((s / -242.0 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn electrode_channel() {
        assert!((electrode_broadening(0.001, 15.0, -242.0).unwrap() - 0.257).abs() < 1e-9);
        assert_eq!(electrode_broadening(0.0, 15.0, -242.0).unwrap(), 0.0);
        assert_eq!(electrode_broadening(0.001, 7.0, 7.0).unwrap(), 0.0);
        assert!(electrode_broadening(-1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn central_difference_exact_on_linear() {
        let s = conduction_slope(|v| Ok(3.25 * v - 1.0), 10.0, 0.001).unwrap();
        assert!((s - 3.25).abs() < 1e-9);
        assert!(conduction_slope(|v| Ok(v), 10.0, 0.0).is_err());
    }

    fn inputs() -> BroadeningInputs {
        BroadeningInputs {
            sigma_v: 0.001,
            slope_cb: 15.0,
            slope_nv: -242.0,
            box_l: [250.0, 250.0, 100.0],
            ep_levels: 18,
            ep_mode: EpMode::Bound,
            temperature: 4.0,
            eta: 1e15,
            occupation: 1.0,
            eta_eff: 0.0,
            gamma_hop: 1e12,
            regime: SurfaceRegime::Dipole,
            sigma: [45.0, 45.0, 18.0],
            q_z: 50.0,
        }
    }

    #[test]
    fn total_is_the_sum() {
        let r = total_linewidth(0.257, 0.5, 3e-4, 0.0, inputs()).unwrap();
        assert!((r.total_phi - 0.757).abs() < 1e-12);
        let z = total_linewidth(0.0, 0.0, 0.0, 0.0, inputs()).unwrap();
        assert_eq!(z.total_phi, 0.0);
        let a = total_linewidth(0.1, 0.2, 0.0, 0.3, inputs()).unwrap().total_phi;
        let b = total_linewidth(0.3, 0.1, 0.0, 0.2, inputs()).unwrap().total_phi;
        assert!((a - b).abs() < 1e-15);
        assert!(total_linewidth(-0.1, 0.0, 0.0, 0.0, inputs()).is_err());
    }
}
