//! Structured Cartesian grids and scalar fields sampled on them.
//!
//! Values are stored flat and row-major with axis order (x, y, z): the
//! z index runs fastest, x slowest. Exported binaries use the same order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound on nodes per grid. One f64 field at this size is 512 MiB,
/// which leaves room for the handful of work arrays a solver keeps alive.
pub const MAX_NODES: usize = 1 << 26;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid3D {
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
    pub counts: [usize; 3],
}

impl Grid3D {
    pub fn new(origin: [f64; 3], spacing: [f64; 3], counts: [usize; 3]) -> Result<Self> {
        for a in 0..3 {
            if !(spacing[a] > 0.0) || !spacing[a].is_finite() {
                return Err(Error::invalid(format!("spacing[{a}] = {} must be positive", spacing[a])));
            }
            if !origin[a].is_finite() {
                return Err(Error::invalid(format!("origin[{a}] is not finite")));
            }
            if counts[a] < 3 {
                return Err(Error::invalid(format!("counts[{a}] = {} (need at least 3)", counts[a])));
            }
        }
        let total = counts
            .iter()
            .try_fold(1usize, |acc, &c| acc.checked_mul(c))
            .unwrap_or(usize::MAX);
        if total > MAX_NODES {
            return Err(Error::invalid(format!(
                "grid has {total} nodes, above the budget of {MAX_NODES}"
            )));
        }
        Ok(Self { origin, spacing, counts })
    }

    pub fn len(&self) -> usize {
        self.counts[0] * self.counts[1] * self.counts[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Volume element of one node (nm³).
    pub fn cell_volume(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    pub fn extent(&self) -> [f64; 3] {
        [0, 1, 2].map(|a| self.spacing[a] * (self.counts[a] - 1) as f64)
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.counts[1] + j) * self.counts[2] + k
    }

    #[inline]
    pub fn unravel(&self, idx: usize) -> [usize; 3] {
        let nz = self.counts[2];
        let ny = self.counts[1];
        [idx / (ny * nz), (idx / nz) % ny, idx % nz]
    }

    #[inline]
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.origin[axis] + self.spacing[axis] * i as f64
    }

    pub fn position(&self, idx: usize) -> [f64; 3] {
        let ijk = self.unravel(idx);
        [0, 1, 2].map(|a| self.coord(a, ijk[a]))
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        let ext = self.extent();
        (0..3).all(|a| {
            let tol = 1e-9 * self.spacing[a];
            p[a] >= self.origin[a] - tol && p[a] <= self.origin[a] + ext[a] + tol
        })
    }

    pub fn is_boundary(&self, i: usize, j: usize, k: usize) -> bool {
        i == 0
            || j == 0
            || k == 0
            || i + 1 == self.counts[0]
            || j + 1 == self.counts[1]
            || k + 1 == self.counts[2]
    }

    /// Same spacing and counts, shifted origin.
    pub fn translated(&self, by: [f64; 3]) -> Self {
        Self {
            origin: [0, 1, 2].map(|a| self.origin[a] + by[a]),
            ..*self
        }
    }
}

/// Grid with origin at zero covering `extent` on each axis.
pub fn build_grid(extent: [f64; 3], spacing: [f64; 3]) -> Result<Grid3D> {
    let mut counts = [0usize; 3];
    for a in 0..3 {
        if !(spacing[a] > 0.0) || !spacing[a].is_finite() {
            return Err(Error::invalid(format!("spacing[{a}] = {} must be positive", spacing[a])));
        }
        if !(extent[a] > 0.0) || !extent[a].is_finite() {
            return Err(Error::invalid(format!("extent[{a}] = {} must be positive", extent[a])));
        }
        // small slack so 0.3/0.1 style ratios do not lose a node
        counts[a] = (extent[a] / spacing[a] * (1.0 + 1e-12)).floor() as usize + 1;
    }
    Grid3D::new([0.0; 3], spacing, counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldUnit {
    Volt,
    /// Envelope amplitude, nm^(-3/2).
    Envelope,
    Dimensionless,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField3D {
    pub grid: Grid3D,
    pub values: Vec<f64>,
    pub unit: FieldUnit,
}

impl ScalarField3D {
    pub fn new(grid: Grid3D, values: Vec<f64>, unit: FieldUnit) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::invalid(format!(
                "field has {} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite value at flat index {i}")));
        }
        Ok(Self { grid, values, unit })
    }

    pub fn zeros(grid: Grid3D, unit: FieldUnit) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
            unit,
        }
    }

    pub fn from_fn(grid: Grid3D, unit: FieldUnit, f: impl Fn([f64; 3]) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(grid.position(i))).collect();
        Self::new(grid, values, unit)
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.grid.index(i, j, k)]
    }

    /// Trilinear interpolation. Points outside the grid are rejected.
    pub fn sample(&self, p: [f64; 3]) -> Result<f64> {
        if !self.grid.contains(p) {
            return Err(Error::invalid(format!(
                "point ({:.3}, {:.3}, {:.3}) nm lies outside the grid",
                p[0], p[1], p[2]
            )));
        }
        Ok(self.sample_clamped(p))
    }

    /// Trilinear interpolation with the point clamped into the grid box.
    pub fn sample_clamped(&self, p: [f64; 3]) -> f64 {
        let g = &self.grid;
        let mut base = [0usize; 3];
        let mut t = [0f64; 3];
        for a in 0..3 {
            let u = ((p[a] - g.origin[a]) / g.spacing[a]).clamp(0.0, (g.counts[a] - 1) as f64);
            let i = (u.floor() as usize).min(g.counts[a] - 2);
            base[a] = i;
            t[a] = u - i as f64;
        }
        let mut acc = 0.0;
        for (di, wx) in [(0, 1.0 - t[0]), (1, t[0])] {
            for (dj, wy) in [(0, 1.0 - t[1]), (1, t[1])] {
                for (dk, wz) in [(0, 1.0 - t[2]), (1, t[2])] {
                    let w = wx * wy * wz;
                    if w != 0.0 {
                        acc += w * self.at(base[0] + di, base[1] + dj, base[2] + dk);
                    }
                }
            }
        }
        acc
    }

    /// Σ|F|²·dV over all nodes.
    pub fn norm_squared(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Resample onto another grid by trilinear interpolation (clamped).
    pub fn resample(&self, target: Grid3D) -> Self {
        let values = (0..target.len())
            .map(|i| self.sample_clamped(target.position(i)))
            .collect();
        Self {
            grid: target,
            values,
            unit: self.unit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianMoments {
    pub sigma: [f64; 3],
    pub center: [f64; 3],
}

/// Center and RMS widths of |F|² for an envelope normalized to Σ|F|²dV = 1.
pub fn gaussian_moments(envelope: &ScalarField3D) -> Result<GaussianMoments> {
    let g = &envelope.grid;
    let norm = envelope.norm_squared();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(Error::PreconditionViolation(format!(
            "envelope is not normalized: sum |F|^2 dV = {norm:.9}"
        )));
    }
    let dv = g.cell_volume();
    // marginal densities per axis, then moments of each marginal
    let mut marg = [vec![0.0; g.counts[0]], vec![0.0; g.counts[1]], vec![0.0; g.counts[2]]];
    for (idx, v) in envelope.values.iter().enumerate() {
        let w = v * v * dv;
        let ijk = g.unravel(idx);
        for a in 0..3 {
            marg[a][ijk[a]] += w;
        }
    }
    let mut center = [0.0; 3];
    let mut sigma = [0.0; 3];
    for a in 0..3 {
        // work in offsets from the origin so translation does not cost precision
        let mean: f64 = marg[a].iter().enumerate().map(|(i, w)| w * g.spacing[a] * i as f64).sum::<f64>() / norm;
        let var: f64 = marg[a]
            .iter()
            .enumerate()
            .map(|(i, w)| w * (g.spacing[a] * i as f64 - mean).powi(2))
            .sum::<f64>()
            / norm;
        center[a] = g.origin[a] + mean;
        sigma[a] = var.max(0.0).sqrt();
    }
    Ok(GaussianMoments { sigma, center })
}
