//! Effective-mass Hamiltonian on the interior nodes of a grid.
//!
//! H = Σ_a −ħ²/(2 m_a) ∂²_a + U with U = −e·V in µeV, 7-point stencil,
//! F = 0 on every face. Only interior nodes are unknowns.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lobpcg::SymmetricOperator;
use crate::error::{Error, Result};
use crate::grid::{Grid3D, ScalarField3D};
use crate::units::{HBAR2_OVER_2ME_UEV_NM2, UEV_PER_VOLT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassTensor {
    pub m_x: f64,
    pub m_y: f64,
    pub m_z: f64,
}

impl MassTensor {
    pub fn isotropic(m: f64) -> Self {
        Self { m_x: m, m_y: m, m_z: m }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.m_x, self.m_y, self.m_z]
    }
}

pub struct Hamiltonian {
    pub grid: Grid3D,
    /// Interior node counts.
    pub n: [usize; 3],
    /// ħ²/(2 m_a Δ_a²) in µeV.
    pub coeff: [f64; 3],
    /// Potential energy on interior nodes (µeV).
    pub potential: Vec<f64>,
    pub mass: MassTensor,
}

pub fn assemble_hamiltonian(grid: &Grid3D, potential: &ScalarField3D, mass: MassTensor) -> Result<Hamiltonian> {
    if potential.grid != *grid {
        return Err(Error::invalid("potential is sampled on a different grid"));
    }
    let m = mass.as_array();
    if m.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::invalid("effective masses must be positive"));
    }
    let n = grid.counts.map(|c| c - 2);
    let coeff = [0, 1, 2].map(|a| HBAR2_OVER_2ME_UEV_NM2 / (m[a] * grid.spacing[a] * grid.spacing[a]));
    let mut u = Vec::with_capacity(n[0] * n[1] * n[2]);
    for i in 1..=n[0] {
        for j in 1..=n[1] {
            for k in 1..=n[2] {
                u.push(-UEV_PER_VOLT * potential.at(i, j, k));
            }
        }
    }
    Ok(Hamiltonian {
        grid: *grid,
        n,
        coeff,
        potential: u,
        mass,
    })
}

impl Hamiltonian {
    pub fn potential_min(&self) -> f64 {
        self.potential.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Interior vector → full-grid values with zero faces.
    pub fn embed(&self, x: &[f64]) -> Vec<f64> {
        let g = &self.grid;
        let mut out = vec![0.0; g.len()];
        let [_, ny, nz] = self.n;
        for (idx, v) in x.iter().enumerate() {
            let i = idx / (ny * nz);
            let j = (idx / nz) % ny;
            let k = idx % nz;
            out[g.index(i + 1, j + 1, k + 1)] = *v;
        }
        out
    }

    /// Full-grid values → interior vector (inverse of `embed` on interior nodes).
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        let [nx, ny, nz] = self.n;
        let mut out = Vec::with_capacity(nx * ny * nz);
        for i in 0..nx {
            for j in 0..ny {
                for k in 0..nz {
                    out.push(full[self.grid.index(i + 1, j + 1, k + 1)]);
                }
            }
        }
        out
    }

    pub fn to_csr(&self) -> CsrMatrix {
        let [nx, ny, nz] = self.n;
        let c = self.coeff;
        let d = 2.0 * (c[0] + c[1] + c[2]);
        let mut indptr = vec![0usize];
        let mut indices = Vec::new();
        let mut data = Vec::new();
        for i in 0..nx {
            for j in 0..ny {
                for k in 0..nz {
                    let row = (i * ny + j) * nz + k;
                    let mut push = |col: usize, v: f64| {
                        indices.push(col);
                        data.push(v);
                    };
                    if i > 0 {
                        push(row - ny * nz, -c[0]);
                    }
                    if j > 0 {
                        push(row - nz, -c[1]);
                    }
                    if k > 0 {
                        push(row - 1, -c[2]);
                    }
                    push(row, d + self.potential[row]);
                    if k + 1 < nz {
                        push(row + 1, -c[2]);
                    }
                    if j + 1 < ny {
                        push(row + nz, -c[1]);
                    }
                    if i + 1 < nx {
                        push(row + ny * nz, -c[0]);
                    }
                    indptr.push(indices.len());
                }
            }
        }
        CsrMatrix {
            dim: nx * ny * nz,
            indptr,
            indices,
            data,
        }
    }
}

impl SymmetricOperator for Hamiltonian {
    fn dim(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let [nx, ny, nz] = self.n;
        let c = self.coeff;
        let d = 2.0 * (c[0] + c[1] + c[2]);
        let slab = ny * nz;
        let u = &self.potential;
        y.par_chunks_mut(slab).enumerate().for_each(|(i, out)| {
            let base = i * slab;
            for j in 0..ny {
                for k in 0..nz {
                    let idx = base + j * nz + k;
                    let mut v = (d + u[idx]) * x[idx];
                    if i > 0 {
                        v -= c[0] * x[idx - slab];
                    }
                    if i + 1 < nx {
                        v -= c[0] * x[idx + slab];
                    }
                    if j > 0 {
                        v -= c[1] * x[idx - nz];
                    }
                    if j + 1 < ny {
                        v -= c[1] * x[idx + nz];
                    }
                    if k > 0 {
                        v -= c[2] * x[idx - 1];
                    }
                    if k + 1 < nz {
                        v -= c[2] * x[idx + 1];
                    }
                    out[j * nz + k] = v;
                }
            }
        });
    }
}

/// Compressed sparse row export, used to check symmetry.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub dim: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl CsrMatrix {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        let lo = self.indptr[row];
        let hi = self.indptr[row + 1];
        match self.indices[lo..hi].binary_search(&col) {
            Ok(p) => self.data[lo + p],
            Err(_) => 0.0,
        }
    }

    /// Structural and numerical symmetry, exact.
    pub fn is_symmetric(&self) -> bool {
        (0..self.dim).all(|r| {
            (self.indptr[r]..self.indptr[r + 1]).all(|p| {
                let c = self.indices[p];
                let lo = self.indptr[c];
                let hi = self.indptr[c + 1];
                matches!(self.indices[lo..hi].binary_search(&r), Ok(q) if self.data[lo + q] == self.data[p])
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, FieldUnit};

    fn grid() -> Grid3D {
        build_grid([12.0, 10.0, 8.0], [2.0, 2.0, 1.0]).unwrap()
    }

    #[test]
    fn csr_matches_apply_and_is_symmetric() {
        let g = grid();
        let v = ScalarField3D::from_fn(g, FieldUnit::Volt, |p| 1e-3 * (p[0] - p[2]).sin()).unwrap();
        let h = assemble_hamiltonian(&g, &v, MassTensor { m_x: 0.36, m_y: 1.4, m_z: 0.5 }).unwrap();
        let a = h.to_csr();
        assert!(a.is_symmetric());
        let n = h.dim();
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).cos()).collect();
        let mut y = vec![0.0; n];
        h.apply(&x, &mut y);
        for r in 0..n {
            let s: f64 = (a.indptr[r]..a.indptr[r + 1]).map(|p| a.data[p] * x[a.indices[p]]).sum();
            assert!((s - y[r]).abs() < 1e-9 * s.abs().max(1.0));
        }
    }

    #[test]
    fn doubling_mass_halves_coefficient() {
        let g = grid();
        let v = ScalarField3D::zeros(g, FieldUnit::Volt);
        let a = assemble_hamiltonian(&g, &v, MassTensor { m_x: 1.0, m_y: 1.0, m_z: 0.7 }).unwrap();
        let b = assemble_hamiltonian(&g, &v, MassTensor { m_x: 1.0, m_y: 1.0, m_z: 1.4 }).unwrap();
        assert_eq!(a.coeff[2], 2.0 * b.coeff[2]);
        assert_eq!(a.coeff[0], b.coeff[0]);
    }

    #[test]
    fn mismatched_potential_rejected() {
        let v = ScalarField3D::zeros(build_grid([10.0; 3], [2.0; 3]).unwrap(), FieldUnit::Volt);
        assert!(assemble_hamiltonian(&grid(), &v, MassTensor::isotropic(1.0)).is_err());
    }

    #[test]
    fn positive_voltage_lowers_energy() {
        let g = grid();
        let v = ScalarField3D::new(g, vec![0.002; g.len()], FieldUnit::Volt).unwrap();
        let h = assemble_hamiltonian(&g, &v, MassTensor::isotropic(1.0)).unwrap();
        assert!(h.potential.iter().all(|&u| (u + 2000.0).abs() < 1e-9));
    }
}
