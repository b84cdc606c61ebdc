//! Physical constants and the fixed unit convention.
//!
//! Lengths are nanometres, energies are carried internally in µeV and
//! reported as frequencies in GHz through E = h·f. Potentials are volts
//! (fields) or millivolts (electrode settings and profiles).

/// Planck constant (J·s), exact SI value.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Reduced Planck constant (J·s).
pub const HBAR: f64 = PLANCK / (2.0 * std::f64::consts::PI);
/// Elementary charge (C), exact SI value.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Electron rest mass (kg).
pub const ELECTRON_MASS: f64 = 9.109_383_701_5e-31;
/// Boltzmann constant (J/K), exact SI value.
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Vacuum permittivity (F/m).
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;
/// Vacuum permeability (H/m).
pub const VACUUM_PERMEABILITY: f64 = 1.256_637_062_12e-6;

/// Diamond cubic lattice constant (nm).
pub const DIAMOND_LATTICE_CONSTANT_NM: f64 = 0.3567;

/// One µeV in joules.
pub const MICRO_EV: f64 = ELEMENTARY_CHARGE * 1e-6;

/// Energy of one GHz photon in µeV (h · 1 GHz).
pub const UEV_PER_GHZ: f64 = PLANCK * 1e9 / MICRO_EV;

/// ħ²/(2mₑ) in µeV·nm².
pub const HBAR2_OVER_2ME_UEV_NM2: f64 = HBAR * HBAR / (2.0 * ELECTRON_MASS) / MICRO_EV * 1e18;

/// Potential energy of an electron in µeV per volt of electrostatic potential.
pub const UEV_PER_VOLT: f64 = 1e6;

/// Volume of the conventional diamond unit cell (nm³).
pub fn unit_cell_volume_nm3() -> f64 {
    DIAMOND_LATTICE_CONSTANT_NM.powi(3)
}

pub fn uev_to_ghz(e_uev: f64) -> f64 {
    e_uev / UEV_PER_GHZ
}

pub fn ghz_to_uev(f_ghz: f64) -> f64 {
    f_ghz * UEV_PER_GHZ
}

pub fn ghz_to_joule(f_ghz: f64) -> f64 {
    f_ghz * 1e9 * PLANCK
}

pub fn uev_to_joule(e_uev: f64) -> f64 {
    e_uev * MICRO_EV
}

/// Thermal energy k_B·T in eV.
pub fn thermal_energy_ev(temperature_k: f64) -> f64 {
    BOLTZMANN * temperature_k / ELEMENTARY_CHARGE
}

/// Bose-Einstein occupation for a mode of angular frequency `omega` (rad/s).
pub fn bose_occupation(omega: f64, temperature_k: f64) -> f64 {
    if temperature_k <= 0.0 {
        return 0.0;
    }
    let x = HBAR * omega / (BOLTZMANN * temperature_k);
    if x > 700.0 {
        0.0
    } else {
        1.0 / x.exp_m1()
    }
}
