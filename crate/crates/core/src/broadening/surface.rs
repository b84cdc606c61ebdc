//! Surface-charge noise: analytic variances for dipole and monopole hopping
//! regimes and the Redfield linewidth of a two-level fluctuator.

use serde::{Deserialize, Serialize};

use crate::config::SurfaceRegime;
use crate::error::{Error, Result};
use crate::units::{BOLTZMANN, ELEMENTARY_CHARGE, HBAR};

use std::f64::consts::PI;

/// α + β of the hexapole term (same units as σ⁴).
pub fn surface_shape_factor(sigma: [f64; 3]) -> f64 {
    let [sx, sy, sz] = sigma.map(|s| s * s);
    let alpha = 3.0 * sx * sx + 2.0 * sx * sy;
    let beta = 3.0 * sy * sy - 8.0 * (sx + sy) * sz + 8.0 * sz * sz;
    alpha + beta
}

/// Σ_i (2σ_i² − Σ_{j≠i}σ_j²)·d_i²/|d|⁵ for a surface point at lateral offset
/// (x, y) from a charge distribution centred q_z below it.
pub fn hexapole_term(x: f64, y: f64, q_z: f64, sigma: [f64; 3]) -> f64 {
    let s2 = sigma.map(|s| s * s);
    let tot: f64 = s2.iter().sum();
    let c = s2.map(|v| 3.0 * v - tot);
    let d2 = [x * x, y * y, q_z * q_z];
    let r2 = d2[0] + d2[1] + d2[2];
    (c[0] * d2[0] + c[1] * d2[1] + c[2] * d2[2]) / (r2 * r2 * r2.sqrt())
}

/// Energy variance |δE|² in J². η in m⁻², σ, q_z and p in nm, ε_d absolute
/// (F/m). The dipole regime counts η/2 dipoles; `dipole_p` defaults to 1/√η.
pub fn surface_variance(
    regime: SurfaceRegime,
    eta: f64,
    sigma: [f64; 3],
    q_z: f64,
    epsilon_d: f64,
    dipole_p: Option<f64>,
) -> Result<f64> {
    if !(q_z > 0.0) {
        return Err(Error::invalid(format!("q_z = {q_z} nm must be positive")));
    }
    if !(eta >= 0.0) {
        return Err(Error::invalid(format!("eta = {eta} m⁻² must be non-negative")));
    }
    if !(epsilon_d > 0.0) {
        return Err(Error::invalid("permittivity must be positive"));
    }
    if eta == 0.0 {
        return Ok(0.0);
    }
    let ab = surface_shape_factor(sigma.map(|s| s * 1e-9));
    let q = q_z * 1e-9;
    let e4 = ELEMENTARY_CHARGE.powi(4);
    let v = match regime {
        SurfaceRegime::Dipole => {
            let p = match dipole_p {
                Some(p) if p > 0.0 => p * 1e-9,
                Some(p) => return Err(Error::invalid(format!("dipole length {p} nm must be positive"))),
                None => 1.0 / eta.sqrt(),
            };
            15.0 * p * p * e4 * eta * ab / (8192.0 * PI * q.powi(6) * epsilon_d * epsilon_d)
        }
        SurfaceRegime::Monopole => {
            eta * e4 / (4.0 * PI * epsilon_d).powi(2) * 3.0 * PI * ab / (128.0 * q.powi(4))
        }
    };
    Ok(v.max(0.0))
}

/// σ of the ground state of a box of length L: L·√(1/12 − 1/(2π²)).
pub fn box_ground_sigma(l: f64) -> f64 {
    l * (1.0 / 12.0 - 1.0 / (2.0 * PI * PI)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluctuatorModel {
    /// Hz
    pub gamma_hop: f64,
    /// Attempt rate (Hz).
    pub gamma0: f64,
    /// eV
    pub trap_energy_et: f64,
}

impl FluctuatorModel {
    /// Fixed hopping rate (γ₀ = γ, E_t = 0).
    pub fn with_rate(gamma_hop: f64) -> Result<Self> {
        if !(gamma_hop > 0.0) || !gamma_hop.is_finite() {
            return Err(Error::invalid(format!("hopping rate {gamma_hop} Hz must be positive")));
        }
        Ok(Self {
            gamma_hop,
            gamma0: gamma_hop,
            trap_energy_et: 0.0,
        })
    }

    /// γ = γ₀·exp(−E_t/k_BT)
    pub fn arrhenius(gamma0: f64, trap_energy_et: f64, temperature: f64) -> Result<Self> {
        if !(temperature > 0.0) {
            return Err(Error::invalid(format!("temperature {temperature} K must be positive")));
        }
        let g = gamma0 * (-trap_energy_et * ELEMENTARY_CHARGE / (BOLTZMANN * temperature)).exp();
        let mut m = Self::with_rate(g)?;
        m.gamma0 = gamma0;
        m.trap_energy_et = trap_energy_et;
        Ok(m)
    }
}

/// (2π/ħ²)·|δE|²·S(0) with S(0) = 1/(πγ), in Hz.
pub fn redfield_linewidth(variance: f64, fluctuator: &FluctuatorModel) -> Result<f64> {
    if !(fluctuator.gamma_hop > 0.0) {
        return Err(Error::invalid("hopping rate must be positive (static limit is outside the model)"));
    }
    if !(variance >= 0.0) {
        return Err(Error::invalid(format!("variance {variance} must be non-negative")));
    }
    Ok(2.0 * PI / (HBAR * HBAR) * variance / (PI * fluctuator.gamma_hop))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate_composite;
    use crate::units::VACUUM_PERMITTIVITY;

    const SIGMA: [f64; 3] = [45.0, 38.0, 14.0];

    /// ∫∫ f over the plane, in polar coordinates with ρ = q_z·tan t.
    fn plane_integral(f: impl Fn(f64, f64) -> f64, q_z: f64) -> f64 {
        integrate_composite(
            |t| {
                let rho = q_z * t.tan();
                let jac = q_z / t.cos().powi(2) * rho;
                jac * integrate_composite(|a| f(rho * a.cos(), rho * a.sin()), 0.0, 2.0 * PI, 16, 8)
            },
            0.0,
            0.5 * PI,
            16,
            48,
        )
    }

    #[test]
    fn monopole_matches_surface_quadrature() {
        let q = 30.0;
        let num = plane_integral(|x, y| (0.5 * hexapole_term(x, y, q, SIGMA)).powi(2), q);
        let eps = 5.7 * VACUUM_PERMITTIVITY;
        let k = ELEMENTARY_CHARGE * ELEMENTARY_CHARGE / (4.0 * PI * eps);
        let eta = 1e16;
        // ∫(D/2)²d²q is dimensionless, so nm in = nm out
        let brute = eta * k * k * num;
        let exact = surface_variance(SurfaceRegime::Monopole, eta, SIGMA, q, eps, None).unwrap();
        assert!((brute / exact - 1.0).abs() < 0.02, "{brute} vs {exact}");
    }

    #[test]
    fn dipole_matches_surface_quadrature() {
        let q = 30.0;
        let h = 1e-4 * q;
        let grad2 = |x: f64, y: f64| {
            let gx = (hexapole_term(x + h, y, q, SIGMA) - hexapole_term(x - h, y, q, SIGMA)) / (2.0 * h);
            let gy = (hexapole_term(x, y + h, q, SIGMA) - hexapole_term(x, y - h, q, SIGMA)) / (2.0 * h);
            0.25 * (gx * gx + gy * gy)
        };
        let num = plane_integral(grad2, q);
        let eps = 5.7 * VACUUM_PERMITTIVITY;
        let k = ELEMENTARY_CHARGE * ELEMENTARY_CHARGE / (4.0 * PI * eps);
        let (eta, p) = (1e16, 2.0f64);
        // η/2 dipoles, orientation average of (p·∇)² gives p²/2
        let brute = 0.5 * eta * k * k * 0.5 * (p * 1e-9).powi(2) * num * 1e18;
        let exact = surface_variance(SurfaceRegime::Dipole, eta, SIGMA, q, eps, Some(p)).unwrap();
        assert!((brute / exact - 1.0).abs() < 0.02, "{brute} vs {exact}");
    }

    #[test]
    fn power_laws_and_linearity() {
        let eps = 5.7 * VACUUM_PERMITTIVITY;
        let d = |q: f64, eta: f64| surface_variance(SurfaceRegime::Dipole, eta, SIGMA, q, eps, Some(1.0)).unwrap();
        let m = |q: f64, eta: f64| surface_variance(SurfaceRegime::Monopole, eta, SIGMA, q, eps, None).unwrap();
        assert!((d(20.0, 1e17) / d(40.0, 1e17) - 64.0).abs() < 1e-9);
        assert!((m(20.0, 1e17) / m(40.0, 1e17) - 16.0).abs() < 1e-9);
        assert!((d(20.0, 2e17) / d(20.0, 1e17) - 2.0).abs() < 1e-12);
        assert_eq!(d(20.0, 0.0), 0.0);
        assert!(surface_variance(SurfaceRegime::Dipole, 1e17, SIGMA, 0.0, eps, None).is_err());
    }

    #[test]
    fn monopole_over_dipole_ratio() {
        let eps = 5.7 * VACUUM_PERMITTIVITY;
        let (q, p) = (13.0, 1.0);
        let d = surface_variance(SurfaceRegime::Dipole, 1e18, SIGMA, q, eps, Some(p)).unwrap();
        let m = surface_variance(SurfaceRegime::Monopole, 1e18, SIGMA, q, eps, None).unwrap();
        assert!((m / d - 0.8 * (q / p).powi(2)).abs() < 1e-9 * m / d);
    }

    #[test]
    fn redfield_motional_narrowing() {
        let a = redfield_linewidth(1e-45, &FluctuatorModel::with_rate(1e9).unwrap()).unwrap();
        let b = redfield_linewidth(1e-45, &FluctuatorModel::with_rate(2e9).unwrap()).unwrap();
        assert!((a / b - 2.0).abs() < 1e-12);
        assert!((a * 1e9 - b * 2e9).abs() < 1e-9 * a * 1e9);
        assert!(FluctuatorModel::with_rate(0.0).is_err());
        let bad = FluctuatorModel {
            gamma_hop: 0.0,
            gamma0: 1.0,
            trap_energy_et: 0.0,
        };
        assert!(redfield_linewidth(1e-45, &bad).is_err());
    }

    #[test]
    fn arrhenius_rate() {
        let f = FluctuatorModel::arrhenius(1e12, 0.0, 4.0).unwrap();
        assert_eq!(f.gamma_hop, 1e12);
        let g = FluctuatorModel::arrhenius(1e12, 1e-3, 4.0).unwrap();
        assert!(g.gamma_hop < 1e12 && g.gamma_hop > 0.0);
    }

    #[test]
    fn box_sigma_is_the_sine_squared_width() {
        let l = 250.0;
        let var = integrate_composite(
            |x| 2.0 / l * (PI * x / l).sin().powi(2) * (x - 0.5 * l).powi(2),
            0.0,
            l,
            20,
            8,
        );
        assert!((box_ground_sigma(l) - var.sqrt()).abs() < 1e-9);
    }
}
