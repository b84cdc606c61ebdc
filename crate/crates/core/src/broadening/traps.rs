//! Surface-trap filling by a donor layer, treated as a parallel-plate
//! capacitor of spacing N charged by the transferred electrons.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::root::brent;
use crate::units::{thermal_energy_ev, ELEMENTARY_CHARGE, VACUUM_PERMITTIVITY};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapState {
    /// Oc ∈ [0.5, 1]
    pub occupation: f64,
    /// Capacitor potential (eV).
    pub potential_ev: f64,
}

/// 1/(1 + eˣ) without overflow.
pub fn fermi_dirac(x: f64) -> f64 {
    if x > 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// Solve V = (eηN/ε_d)·FD((E_T − E_N + V + V_ext)/k_BT) for the capacitor
/// potential and return the trap occupation 0.5·(1 + FD).
///
/// η in m⁻², N in nm, energies in eV, `v_ext` in mV, `epsilon_r` relative.
pub fn trap_occupation(
    eta: f64,
    donor_depth_nm: f64,
    trap_energy: f64,
    donor_energy: f64,
    temperature: f64,
    v_ext_mv: f64,
    epsilon_r: f64,
) -> Result<TrapState> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::invalid(format!("trap density {eta} m⁻² must be positive")));
    }
    if !(donor_depth_nm > 0.0) {
        return Err(Error::invalid(format!("donor depth {donor_depth_nm} nm must be positive")));
    }
    if !(temperature > 0.0) {
        return Err(Error::invalid(format!("temperature {temperature} K must be positive")));
    }
    let kt = thermal_energy_ev(temperature);
    let offset = trap_energy - donor_energy + v_ext_mv * 1e-3;
    // potential of a fully transferred sheet, in volts (= eV per electron)
    let full = ELEMENTARY_CHARGE * eta * donor_depth_nm * 1e-9 / (epsilon_r * VACUUM_PERMITTIVITY);
    let fd = |v: f64| fermi_dirac((offset + v) / kt);
    let g = |v: f64| v - full * fd(v);
    let v = if g(full) <= 0.0 {
        full
    } else {
        brent(g, 0.0, full, 1e-15 * full.max(kt), 200)
            .map_err(|e| e.context(&format!("trap potential at eta = {eta:.3e} m⁻²")))?
    };
    Ok(TrapState {
        occupation: 0.5 * (1.0 + fd(v)),
        potential_ev: v,
    })
}

/// η·(1 − Oc)
pub fn effective_trap_density(eta: f64, occupation: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&occupation) {
        return Err(Error::invalid(format!("occupation {occupation} outside [0, 1]")));
    }
    Ok((eta * (1.0 - occupation)).max(0.0))
}
