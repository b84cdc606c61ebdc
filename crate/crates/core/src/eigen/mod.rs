//! Effective-mass eigenproblem per valley and the merged conduction spectrum.

mod dst;
mod hamiltonian;
mod lobpcg;

pub use dst::{KineticInverse, SeparableInverse};
pub use hamiltonian::{assemble_hamiltonian, CsrMatrix, Hamiltonian, MassTensor};
pub use lobpcg::{dot, lobpcg, lobpcg_from, LobpcgOptions, LobpcgResult, Preconditioner, SymmetricOperator};

use serde::{Deserialize, Serialize};

use crate::config::MaterialParams;
use crate::error::{Error, Result};
use crate::grid::{FieldUnit, ScalarField3D};
use crate::units::{uev_to_ghz, unit_cell_volume_nm3};

/// Conduction valley orientation; the long axis carries m_l.
/// Declaration order is the tie-break order in the merged spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Valley {
    X,
    Y,
    Z,
}

impl Valley {
    pub const ALL: [Valley; 3] = [Valley::X, Valley::Y, Valley::Z];

    pub fn mass_tensor(self, material: &MaterialParams) -> MassTensor {
        let (l, t) = (material.m_longitudinal, material.m_transverse);
        match self {
            Valley::X => MassTensor { m_x: l, m_y: t, m_z: t },
            Valley::Y => MassTensor { m_x: t, m_y: l, m_z: t },
            Valley::Z => MassTensor { m_x: t, m_y: t, m_z: l },
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Valley::X => "x",
            Valley::Y => "y",
            Valley::Z => "z",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EigenOptions {
    /// Absolute residual target in µeV.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 400,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EigenSolution {
    pub valley: Option<Valley>,
    /// µeV, ascending.
    pub energies: Vec<f64>,
    /// Σ|F|²dV = 1 on the grid (nm^(-3/2)).
    pub envelopes: Vec<ScalarField3D>,
    /// A_e per state (nm³), so that (A_e/V_c)·Σ|F|²dV = 1.
    pub normalization_ae: Vec<f64>,
    /// ‖HF − EF‖/‖F‖ per state (µeV).
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

/// Exact inverse of a separable model of H: kinetic terms plus the potential
/// along three cuts through its minimum. Shifted just below the model's lowest
/// levels so it acts like shift-invert on the wanted cluster.
fn separable_preconditioner(h: &Hamiltonian, count: usize) -> SeparableInverse {
    let [nx, ny, nz] = h.n;
    let u = &h.potential;
    let at = |i: usize, j: usize, k: usize| u[(i * ny + j) * nz + k];
    let imin = (0..u.len()).fold(0, |best, i| if u[i] < u[best] { i } else { best });
    let (ic, jc, kc) = (imin / (ny * nz), (imin / nz) % ny, imin % nz);
    let u0 = at(ic, jc, kc);
    let px: Vec<f64> = (0..nx).map(|i| at(i, jc, kc)).collect();
    let py: Vec<f64> = (0..ny).map(|j| at(ic, j, kc) - u0).collect();
    let pz: Vec<f64> = (0..nz).map(|k| at(ic, jc, k) - u0).collect();
    let inv = SeparableInverse::with_profiles(h.n, h.coeff, [&px, &py, &pz]);
    let low = inv.lowest_sums(count + 1);
    let spread = low.last().unwrap() - low[0];
    let delta = spread.max(1e-3 * (low[0] - u0).abs()).max(1e-12);
    let sigma = low[0] - delta;
    inv.with_sigma(sigma)
}

pub fn lowest_eigenpairs(h: &Hamiltonian, count: usize, opts: &EigenOptions) -> Result<EigenSolution> {
    lowest_eigenpairs_from(h, count, opts, None)
}

/// Warm-started variant: `start` is a solution on the same grid (e.g. at a
/// slightly different voltage).
pub fn lowest_eigenpairs_from(
    h: &Hamiltonian,
    count: usize,
    opts: &EigenOptions,
    start: Option<&EigenSolution>,
) -> Result<EigenSolution> {
    if count == 0 {
        return Err(Error::invalid("count must be at least 1"));
    }
    let pre = separable_preconditioner(h, count);
    let lopts = LobpcgOptions {
        tol: opts.tol,
        max_iter: opts.max_iter,
        seed: opts.seed,
        guard: 3.max(count / 2),
        ..Default::default()
    };
    let x0: Vec<Vec<f64>> = match start {
        Some(s) => {
            if s.envelopes.first().map(|e| e.grid) != Some(h.grid) {
                return Err(Error::invalid("warm start lives on a different grid"));
            }
            s.envelopes.iter().map(|e| h.restrict(&e.values)).collect()
        }
        None => vec![],
    };
    let res = lobpcg_from(h, Some(&pre), count, &lopts, &x0)?;
    log::info!(
        "eigen: {} pairs in {} iterations, worst residual {:.2e} µeV",
        count,
        res.iterations,
        res.residuals.iter().cloned().fold(0.0, f64::max)
    );
    let dv = h.grid.cell_volume();
    let scale = 1.0 / dv.sqrt();
    let envelopes = res
        .vectors
        .iter()
        .map(|x| {
            let mut full = h.embed(x);
            full.iter_mut().for_each(|v| *v *= scale);
            ScalarField3D::new(h.grid, full, FieldUnit::Envelope)
        })
        .collect::<Result<Vec<_>>>()?;
    let vc = unit_cell_volume_nm3();
    let normalization_ae = envelopes.iter().map(|f| vc / f.norm_squared()).collect();
    Ok(EigenSolution {
        valley: None,
        energies: res.values,
        envelopes,
        normalization_ae,
        residuals: res.residuals,
        iterations: res.iterations,
    })
}

/// √A_e·F_n at a point (dimensionless).
pub fn envelope_at_nv(solution: &EigenSolution, state: usize, nv_position: [f64; 3]) -> Result<f64> {
    let f = solution
        .envelopes
        .get(state)
        .ok_or_else(|| Error::invalid(format!("state {state} not in solution")))?;
    Ok(solution.normalization_ae[state].sqrt() * f.sample(nv_position)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumLevel {
    pub energy_ghz: f64,
    pub valley: Valley,
    /// Index within the valley's own sorted list.
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedSpectrum {
    pub levels: Vec<SpectrumLevel>,
}

impl CombinedSpectrum {
    /// Merge valley lists. Energies closer than the tie window are treated as
    /// degenerate and ordered by (valley, index).
    pub fn merge(lists: &[(Valley, Vec<f64>)]) -> Self {
        let mut levels: Vec<SpectrumLevel> = lists
            .iter()
            .flat_map(|(v, es)| {
                es.iter().enumerate().map(move |(i, &e)| SpectrumLevel {
                    energy_ghz: uev_to_ghz(e),
                    valley: *v,
                    index: i,
                })
            })
            .collect();
        levels.sort_by(|a, b| a.energy_ghz.total_cmp(&b.energy_ghz));
        let tie = |a: f64, b: f64| (a - b).abs() <= 1e-6 + 1e-9 * a.abs().max(b.abs());
        let mut start = 0;
        while start < levels.len() {
            let mut end = start + 1;
            while end < levels.len() && tie(levels[end - 1].energy_ghz, levels[end].energy_ghz) {
                end += 1;
            }
            levels[start..end].sort_by_key(|l| (l.valley, l.index));
            start = end;
        }
        Self { levels }
    }

    pub fn count(&self) -> usize {
        self.levels.len()
    }

    pub fn energies_ghz(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.energy_ghz).collect()
    }
}

/// Gap between merged levels i < j (GHz).
pub fn level_splitting(spectrum: &CombinedSpectrum, i: usize, j: usize) -> Result<f64> {
    if i >= j || j >= spectrum.count() {
        return Err(Error::invalid(format!(
            "need i < j < {} (got i = {i}, j = {j})",
            spectrum.count()
        )));
    }
    Ok((spectrum.levels[j].energy_ghz - spectrum.levels[i].energy_ghz).max(0.0))
}

#[derive(Debug, Clone)]
pub struct ValleySolutions {
    pub spectrum: CombinedSpectrum,
    /// In `Valley::ALL` order.
    pub solutions: Vec<EigenSolution>,
}

impl ValleySolutions {
    pub fn solution(&self, valley: Valley) -> &EigenSolution {
        &self.solutions[valley as usize]
    }

    /// √A_e·F at the NV for every merged level, in spectrum order.
    pub fn amplitudes_at(&self, nv_position: [f64; 3]) -> Result<Vec<f64>> {
        self.spectrum
            .levels
            .iter()
            .map(|l| envelope_at_nv(self.solution(l.valley), l.index, nv_position))
            .collect()
    }

    /// Ground state of the merged spectrum.
    pub fn ground(&self) -> (&EigenSolution, usize) {
        let l = &self.spectrum.levels[0];
        (self.solution(l.valley), l.index)
    }
}

/// Three valley solves on the given potential (volts; the grid defines the
/// envelope domain).
pub fn solve_all_valleys(
    potential: &ScalarField3D,
    material: &MaterialParams,
    per_valley_count: usize,
    opts: &EigenOptions,
) -> Result<ValleySolutions> {
    let mut solutions = Vec::with_capacity(3);
    for v in Valley::ALL {
        let h = assemble_hamiltonian(&potential.grid, potential, v.mass_tensor(material))?;
        let mut s = lowest_eigenpairs(&h, per_valley_count, opts)
            .map_err(|e| e.context(&format!("valley {}", v.label())))?;
        s.valley = Some(v);
        solutions.push(s);
    }
    let lists: Vec<(Valley, Vec<f64>)> = solutions
        .iter()
        .map(|s| (s.valley.expect("labelled above"), s.energies.clone()))
        .collect();
    Ok(ValleySolutions {
        spectrum: CombinedSpectrum::merge(&lists),
        solutions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_breaks_ties_by_valley() {
        let e = vec![10.0, 20.0];
        let s = CombinedSpectrum::merge(&[(Valley::Z, e.clone()), (Valley::X, e.clone()), (Valley::Y, e)]);
        let order: Vec<Valley> = s.levels.iter().map(|l| l.valley).collect();
        assert_eq!(order, vec![Valley::X, Valley::Y, Valley::Z, Valley::X, Valley::Y, Valley::Z]);
        assert_eq!(level_splitting(&s, 0, 1).unwrap(), 0.0);
    }

    #[test]
    fn splitting_guards() {
        let s = CombinedSpectrum::merge(&[(Valley::X, vec![1.0, 5.0])]);
        assert!(level_splitting(&s, 0, 0).is_err());
        assert!(level_splitting(&s, 1, 0).is_err());
        assert!(level_splitting(&s, 0, 2).is_err());
        let d = level_splitting(&s, 0, 1).unwrap();
        assert!((d - uev_to_ghz(4.0)).abs() < 1e-12);
    }

    #[test]
    fn valley_masses() {
        let m = MaterialParams::diamond();
        assert_eq!(Valley::Z.mass_tensor(&m).m_z, 1.4);
        assert_eq!(Valley::X.mass_tensor(&m).m_z, 0.36);
        assert_eq!(Valley::Y.mass_tensor(&m).m_y, 1.4);
    }
}
