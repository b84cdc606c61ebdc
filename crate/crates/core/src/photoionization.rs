//! Bulk and confined photoionization cross sections and the resonant
//! enhancement factor.
//!
//! μ_b, C(E) and ℰ(E) are unit placeholders; both curves carry the same
//! field normalization 1/(½·n·√(ε₀μ₀/ħω)) so only their ratio means
//! anything. Energies are GHz above the conduction minimum of the well.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{MaterialParams, SpectroscopyConstants};
use crate::error::{Error, Result};
use crate::units::{
    unit_cell_volume_nm3, ELECTRON_MASS, ELEMENTARY_CHARGE, HBAR, PLANCK, VACUUM_PERMEABILITY, VACUUM_PERMITTIVITY,
};

/// Equivalent conduction valleys summed in the bulk density of states.
pub const VALLEY_MULTIPLICITY: f64 = 6.0;

const JOULE_PER_GHZ: f64 = PLANCK * 1e9;

/// Common laser-field normalization evaluated at the ionization photon energy.
pub fn field_normalization(material: &MaterialParams, spectro: &SpectroscopyConstants) -> f64 {
    let hw = spectro.ionization_energy * ELEMENTARY_CHARGE;
    1.0 / (0.5 * material.refractive_index_n * (VACUUM_PERMITTIVITY * VACUUM_PERMEABILITY / hw).sqrt())
}

/// K in bulk = K·√E (E in GHz).
pub fn bulk_prefactor(material: &MaterialParams, spectro: &SpectroscopyConstants) -> f64 {
    let m = material.dos_mass() * ELECTRON_MASS;
    let vc = unit_cell_volume_nm3() * 1e-27;
    let dos = (2.0 * m / (HBAR * HBAR)).powf(1.5);
    VALLEY_MULTIPLICITY / (4.0 * std::f64::consts::PI * HBAR) * dos * JOULE_PER_GHZ.sqrt() * vc
        * field_normalization(material, spectro)
}

/// Multiplies Σ w_n ℒ(E − E_n) with ℒ in 1/GHz.
pub fn confined_prefactor(material: &MaterialParams, spectro: &SpectroscopyConstants) -> f64 {
    2.0 * std::f64::consts::PI / HBAR / JOULE_PER_GHZ * field_normalization(material, spectro)
}

pub fn bulk_cross_section(e_ghz: f64, material: &MaterialParams, spectro: &SpectroscopyConstants) -> Result<f64> {
    if !(e_ghz >= 0.0) {
        return Err(Error::invalid(format!("energy {e_ghz} GHz is below threshold")));
    }
    Ok(bulk_prefactor(material, spectro) * e_ghz.sqrt())
}

/// Unit-area Lorentzian in 1/GHz.
pub fn lorentzian(x: f64, phi: f64) -> f64 {
    (phi / std::f64::consts::PI) / (x * x + phi * phi)
}

/// Σ_n |√A_e F_n(r_NV)|²·ℒ(E − E_n; φ), normalized like the bulk curve.
pub fn confined_cross_section(
    e_ghz: f64,
    levels_ghz: &[f64],
    amplitudes: &[f64],
    phi: f64,
    material: &MaterialParams,
    spectro: &SpectroscopyConstants,
) -> Result<f64> {
    if !(phi > 0.0) {
        return Err(Error::invalid(format!("linewidth phi = {phi} must be positive")));
    }
    if levels_ghz.is_empty() {
        return Err(Error::invalid("spectrum is empty"));
    }
    if levels_ghz.len() != amplitudes.len() {
        return Err(Error::invalid("one amplitude per level required"));
    }
    let s: f64 = levels_ghz
        .iter()
        .zip(amplitudes)
        .map(|(en, a)| a * a * lorentzian(e_ghz - en, phi))
        .sum();
    Ok(confined_prefactor(material, spectro) * s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSectionCurve {
    pub energies: Vec<f64>,
    pub bulk: Vec<f64>,
    pub confined: Vec<f64>,
    pub linewidth_phi: f64,
}

/// Energy axis: coarse steps everywhere, φ/10 within ±10φ of each level,
/// and the level energies themselves.
pub fn energy_axis(levels_ghz: &[f64], phi: f64, margin: f64, coarse_step: f64) -> Vec<f64> {
    let top = levels_ghz.iter().cloned().fold(0.0, f64::max) + margin;
    let mut e: Vec<f64> = (0..)
        .map(|i| i as f64 * coarse_step)
        .take_while(|&x| x <= top)
        .collect();
    let fine = phi / 10.0;
    for &en in levels_ghz {
        e.push(en);
        for i in -100i32..=100 {
            let x = en + i as f64 * fine;
            if x >= 0.0 && x <= top {
                e.push(x);
            }
        }
    }
    e.sort_by(f64::total_cmp);
    e.dedup_by(|a, b| (*a - *b).abs() < 1e-12 * b.abs().max(1.0));
    e
}

pub fn cross_section_curve(
    levels_ghz: &[f64],
    amplitudes: &[f64],
    phi: f64,
    margin: f64,
    coarse_step: f64,
    material: &MaterialParams,
    spectro: &SpectroscopyConstants,
) -> Result<CrossSectionCurve> {
    if !(phi > 0.0) {
        return Err(Error::invalid(format!("linewidth phi = {phi} must be positive")));
    }
    if !(coarse_step > 0.0) {
        return Err(Error::invalid("coarse step must be positive"));
    }
    if levels_ghz.iter().any(|&e| e < 0.0) {
        return Err(Error::invalid("levels below the conduction minimum"));
    }
    let energies = energy_axis(levels_ghz, phi, margin, coarse_step);
    let pairs: Vec<(f64, f64)> = energies
        .par_iter()
        .map(|&e| -> Result<(f64, f64)> {
            Ok((
                bulk_cross_section(e, material, spectro)?,
                confined_cross_section(e, levels_ghz, amplitudes, phi, material, spectro)?,
            ))
        })
        .collect::<Result<_>>()?;
    let (bulk, confined) = pairs.into_iter().unzip();
    Ok(CrossSectionCurve {
        energies,
        bulk,
        confined,
        linewidth_phi: phi,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Enhancement {
    pub f: f64,
    pub energy_ghz: f64,
    pub sample: usize,
}

/// Confined/bulk at the first interior local maximum of the confined curve.
pub fn enhancement_factor(curve: &CrossSectionCurve) -> Result<Enhancement> {
    let c = &curve.confined;
    let i = (1..c.len().saturating_sub(1))
        .find(|&i| c[i] > c[i - 1] && c[i] >= c[i + 1])
        .ok_or_else(|| Error::ComputationFailure("confined curve has no local maximum".into()))?;
    if !(curve.bulk[i] > 0.0) {
        return Err(Error::ComputationFailure(format!(
            "bulk cross section vanishes at the first peak ({} GHz)",
            curve.energies[i]
        )));
    }
    Ok(Enhancement {
        f: c[i] / curve.bulk[i],
        energy_ghz: curve.energies[i],
        sample: i,
    })
}
