//! Electron-phonon broadening in a rectangular stand-in for the well.
//!
//! Box states F_n = √(8/V)·Π sin(n_a π x_a/L_a) couple to dilational modes
//! ψ_k = (c_l/ω)·e^{ik·r}. The full matrix element is squared, so
//! G_n(k) = (8/V)²·(c_l/ω)²·|Π_a I_a|² with I_a the per-axis overlap.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::MaterialParams;
use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;
use crate::units::{bose_occupation, ELECTRON_MASS, ELEMENTARY_CHARGE, HBAR};

use std::f64::consts::PI;

/// Relative distance from a removable singularity below which the
/// exponential form replaces the rational closed form.
const SINGULAR_WINDOW: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquareWellBox {
    /// nm
    pub l: [f64; 3],
}

impl SquareWellBox {
    pub fn new(l: [f64; 3]) -> Result<Self> {
        if l.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid(format!("box lengths {l:?} nm must be positive")));
        }
        Ok(Self { l })
    }

    fn metres(&self) -> [f64; 3] {
        self.l.map(|v| v * 1e-9)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxLevel {
    pub n: [usize; 3],
    /// J
    pub energy: f64,
}

/// The `count` lowest box states for masses (m_t, m_t, m_l).
pub fn box_levels(bx: &SquareWellBox, material: &MaterialParams, count: usize) -> Vec<BoxLevel> {
    let m = [material.m_transverse, material.m_transverse, material.m_longitudinal].map(|v| v * ELECTRON_MASS);
    let l = bx.metres();
    let e_axis = |a: usize, n: usize| HBAR * HBAR * PI * PI * (n * n) as f64 / (2.0 * m[a] * l[a] * l[a]);
    let mut all = Vec::with_capacity(count * count * count);
    for nx in 1..=count {
        for ny in 1..=count {
            for nz in 1..=count {
                all.push(BoxLevel {
                    n: [nx, ny, nz],
                    energy: e_axis(0, nx) + e_axis(1, ny) + e_axis(2, nz),
                });
            }
        }
    }
    all.sort_by(|a, b| a.energy.total_cmp(&b.energy).then(a.n.cmp(&b.n)));
    all.truncate(count);
    all
}

/// ∫₀^L e^{iqx} dx
fn plane_wave_integral(q: f64, l: f64) -> Complex64 {
    let h = 0.5 * q * l;
    let sinc = if h.abs() < 1e-8 { 1.0 - h * h / 6.0 } else { h.sin() / h };
    Complex64::from_polar(l * sinc, h)
}

/// ∫₀^L sin(nπx/L)·e^{ikx}·sin(πx/L) dx (metres).
pub fn axis_overlap(k: f64, n: usize, l: f64) -> Complex64 {
    let nf = n as f64;
    let kl = k * l;
    let near = |m: f64| {
        if m == 0.0 {
            kl.abs() < SINGULAR_WINDOW
        } else {
            (kl.abs() - m * PI).abs() < SINGULAR_WINDOW * m * PI
        }
    };
    if near(nf - 1.0) || near(nf + 1.0) {
        // sin·sin = ½[cos((n−1)πx/L) − cos((n+1)πx/L)]
        let am = (nf - 1.0) * PI / l;
        let ap = (nf + 1.0) * PI / l;
        return 0.25
            * (plane_wave_integral(k + am, l) + plane_wave_integral(k - am, l)
                - plane_wave_integral(k + ap, l)
                - plane_wave_integral(k - ap, l));
    }
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    let num = Complex64::new(0.0, -2.0) * (1.0 + sign * Complex64::from_polar(1.0, kl)) * (k * l * l * nf * PI * PI);
    let den = kl.powi(4) - 2.0 * kl * kl * (1.0 + nf * nf) * PI * PI + (nf * nf - 1.0).powi(2) * PI.powi(4);
    num / den
}

/// G_n(k) for the transition 1 → n (dimension m²).
pub fn ep_mode_overlap(k: [f64; 3], n: [usize; 3], bx: &SquareWellBox, c_l: f64, omega: f64) -> Result<f64> {
    if n.iter().any(|&v| v == 0) {
        return Err(Error::invalid(format!("quantum numbers {n:?} must be ≥ 1")));
    }
    if !(omega > 0.0) {
        return Err(Error::invalid(format!("omega = {omega} must be positive")));
    }
    let l = bx.metres();
    let vol = l[0] * l[1] * l[2];
    let prod = axis_overlap(k[0], n[0], l[0]) * axis_overlap(k[1], n[1], l[1]) * axis_overlap(k[2], n[2], l[2]);
    let a = 8.0 / vol * c_l / omega;
    Ok(a * a * prod.norm_sqr())
}

/// α = Θ²/(2(2π)²ħρc_l⁴) in SI units.
pub fn ep_alpha(material: &MaterialParams) -> f64 {
    let theta = material.theta * ELEMENTARY_CHARGE;
    theta * theta / (2.0 * (2.0 * PI).powi(2) * HBAR * material.density_rho * material.c_l.powi(4))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpTerm {
    pub n: [usize; 3],
    /// rad/s
    pub omega: f64,
    /// ∫∫ G_n sinθ dθ dφ (m²)
    pub angular: f64,
    /// Contribution to Γ (Hz).
    pub rate: f64,
    pub quadrature_order: usize,
}

/// G is even in each wavevector component, so one octant times 8 suffices.
fn angular_integral(n: [usize; 3], bx: &SquareWellBox, c_l: f64, omega: f64, order: usize) -> Result<f64> {
    let k = omega / c_l;
    let (xu, wu) = gauss_legendre(order);
    let (xp, wp) = gauss_legendre(order);
    let mut sum = 0.0;
    for (u, wu) in xu.iter().zip(&wu) {
        let cos_t = 0.5 * (u + 1.0);
        let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
        for (p, wp) in xp.iter().zip(&wp) {
            let phi = 0.25 * PI * (p + 1.0);
            let kv = [k * sin_t * phi.cos(), k * sin_t * phi.sin(), k * cos_t];
            sum += wu * wp * ep_mode_overlap(kv, n, bx, c_l, omega)?;
        }
    }
    // Jacobians: du = dcosθ/2 scaled by ½, dφ scaled by π/4
    Ok(8.0 * sum * 0.5 * 0.25 * PI)
}

fn converged_angular(n: [usize; 3], bx: &SquareWellBox, c_l: f64, omega: f64) -> Result<(f64, usize)> {
    let mut order = 8;
    let mut prev = angular_integral(n, bx, c_l, omega, order)?;
    while order < 512 {
        order *= 2;
        let next = angular_integral(n, bx, c_l, omega, order)?;
        if (next - prev).abs() <= 1e-3 * next.abs() || next == 0.0 && prev == 0.0 {
            return Ok((next, order));
        }
        prev = next;
    }
    Err(Error::ComputationFailure(format!(
        "angular quadrature for level {n:?} did not settle to 0.1% by order {order}"
    )))
}

/// Per-level contributions α/c_l³·ω⁵·n_B(ω)·∫∫G for levels 2..=n_levels.
pub fn ep_rate_detail(
    bx: &SquareWellBox,
    material: &MaterialParams,
    temperature: f64,
    n_levels: usize,
) -> Result<Vec<EpTerm>> {
    if n_levels == 0 {
        return Err(Error::invalid("n_levels must be at least 1"));
    }
    if !(temperature > 0.0) {
        return Err(Error::invalid(format!("temperature {temperature} K must be positive")));
    }
    let levels = box_levels(bx, material, n_levels);
    let ground = levels[0].energy;
    let c_l = material.c_l;
    let pref = ep_alpha(material) / c_l.powi(3);
    levels[1..]
        .par_iter()
        .map(|lv| {
            let omega = (lv.energy - ground) / HBAR;
            if omega <= 0.0 {
                // degenerate with the ground state: no energy to exchange
                return Ok(EpTerm {
                    n: lv.n,
                    omega: 0.0,
                    angular: 0.0,
                    rate: 0.0,
                    quadrature_order: 0,
                });
            }
            let (angular, order) = converged_angular(lv.n, bx, c_l, omega)?;
            Ok(EpTerm {
                n: lv.n,
                omega,
                angular,
                rate: pref * omega.powi(5) * bose_occupation(omega, temperature) * angular,
                quadrature_order: order,
            })
        })
        .collect()
}

pub fn ep_broadening_hz(bx: &SquareWellBox, material: &MaterialParams, temperature: f64, n_levels: usize) -> Result<f64> {
    Ok(ep_rate_detail(bx, material, temperature, n_levels)?.iter().map(|t| t.rate).sum())
}

/// Γ_ep in GHz.
pub fn ep_broadening(bx: &SquareWellBox, material: &MaterialParams, temperature: f64, n_levels: usize) -> Result<f64> {
    Ok(ep_broadening_hz(bx, material, temperature, n_levels)? * 1e-9)
}
