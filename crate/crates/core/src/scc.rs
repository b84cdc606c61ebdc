//! Spin selectivity, optical spin contrast and readout fidelity.
//!
//! ℒ(ΔE) takes GHz arguments and is used directly as a probability weight.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SccMetrics {
    pub delta_c: f64,
    pub delta_d: f64,
    /// Signed ΔC − ΔD (GHz).
    pub delta_e: f64,
    pub phi: f64,
    pub g: f64,
    pub f: f64,
    pub leakage_l: f64,
    pub contrast_c: f64,
    pub fidelity_f: f64,
}

pub fn selectivity_lorentzian(delta_e: f64, phi: f64) -> Result<f64> {
    if !(phi > 0.0) {
        return Err(Error::invalid(format!("linewidth phi = {phi} must be positive")));
    }
    Ok((phi / std::f64::consts::PI) / (delta_e * delta_e + phi * phi))
}

fn check(l: f64, g: f64, f: f64) -> Result<()> {
    if !(f > 0.0) {
        return Err(Error::invalid(format!("enhancement f = {f} must be positive")));
    }
    if !(l >= 0.0) {
        return Err(Error::invalid(format!("leakage L = {l} must be non-negative")));
    }
    if !(g >= 0.0) {
        return Err(Error::invalid(format!("g = {g} must be non-negative")));
    }
    Ok(())
}

pub fn contrast(l: f64, g: f64, f: f64) -> Result<f64> {
    check(l, g, f)?;
    Ok((1.0 - l) / (1.0 + l + g / f))
}

/// 1 minus the error ratio (L + g/f)/(1 + L + g/f).
pub fn readout_fidelity(l: f64, g: f64, f: f64) -> Result<f64> {
    check(l, g, f)?;
    if l.is_infinite() {
        return Ok(0.0);
    }
    let err = l + g / f;
    Ok(1.0 - err / (1.0 + err))
}

pub fn scc_metrics(delta_c: f64, delta_d: f64, phi: f64, g: f64, f: f64) -> Result<SccMetrics> {
    let delta_e = delta_c - delta_d;
    let l = selectivity_lorentzian(delta_e, phi)?;
    Ok(SccMetrics {
        delta_c,
        delta_d,
        delta_e,
        phi,
        g,
        f,
        leakage_l: l,
        contrast_c: contrast(l, g, f)?,
        fidelity_f: readout_fidelity(l, g, f)?,
    })
}
