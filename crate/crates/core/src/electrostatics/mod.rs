//! Electrode-induced potential inside the diamond.
//!
//! Frame: z is depth below the surface (top face, k = 0); the electrode
//! disc is centered at x = y = 0. The potential is in volts.

mod multigrid;

pub use multigrid::{solve_laplace, LaplaceProblem, MultigridOptions, MultigridOutcome};

use crate::config::DeviceGeometry;
use crate::error::{Error, Result};
use crate::grid::{FieldUnit, Grid3D, ScalarField3D};

#[derive(Debug, Clone)]
pub struct PotentialSolution {
    /// Volts.
    pub potential: ScalarField3D,
    pub residual: f64,
    pub iterations: usize,
    /// Electrode voltage the solution was computed for (mV).
    pub electrode_voltage: f64,
}

/// Dirichlet disc on the surface, grounded far faces, Neumann elsewhere on top.
pub fn electrode_problem(geometry: &DeviceGeometry, grid: &Grid3D) -> LaplaceProblem {
    let [nx, ny, nz] = grid.counts;
    let v0 = geometry.electrode_voltage * 1e-3;
    let a2 = geometry.electrode_radius * geometry.electrode_radius;
    let mut fixed = vec![false; grid.len()];
    let mut values = vec![0.0; grid.len()];
    for i in 0..nx {
        let x = grid.coord(0, i);
        for j in 0..ny {
            let y = grid.coord(1, j);
            for k in 0..nz {
                let idx = grid.index(i, j, k);
                if i == 0 || j == 0 || i + 1 == nx || j + 1 == ny || k + 1 == nz {
                    fixed[idx] = true;
                } else if k == 0 && x * x + y * y <= a2 {
                    fixed[idx] = true;
                    values[idx] = v0;
                }
            }
        }
    }
    LaplaceProblem {
        counts: grid.counts,
        spacing: grid.spacing,
        fixed,
        values,
    }
}

pub fn solve_potential(geometry: &DeviceGeometry, grid: &Grid3D, tol: f64) -> Result<PotentialSolution> {
    solve_potential_with(geometry, grid, tol, 100)
}

pub fn solve_potential_with(
    geometry: &DeviceGeometry,
    grid: &Grid3D,
    tol: f64,
    max_cycles: usize,
) -> Result<PotentialSolution> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let problem = electrode_problem(geometry, grid);
    let opts = MultigridOptions {
        tol,
        max_cycles,
        ..Default::default()
    };
    let out = solve_laplace(&problem, &opts).map_err(|e| e.context("potential"))?;
    log::info!(
        "potential: {} cycles, relative residual {:.2e}",
        out.cycles,
        out.relative_residual
    );
    Ok(PotentialSolution {
        potential: ScalarField3D::new(*grid, out.values, FieldUnit::Volt)?,
        residual: out.relative_residual,
        iterations: out.cycles,
        electrode_voltage: geometry.electrode_voltage,
    })
}

/// Samples down the z axis through (x, y): (depth nm, potential mV).
pub fn axial_profile(solution: &PotentialSolution, axis_point: (f64, f64)) -> Result<Vec<(f64, f64)>> {
    let f = &solution.potential;
    let g = &f.grid;
    let (x, y) = axis_point;
    if !g.contains([x, y, g.origin[2]]) {
        return Err(Error::invalid(format!("axis point ({x}, {y}) nm is outside the grid footprint")));
    }
    (0..g.counts[2])
        .map(|k| {
            let z = g.coord(2, k);
            f.sample([x, y, z]).map(|v| (z - g.origin[2], v * 1e3))
        })
        .collect()
}

/// Potential at a point, in mV.
pub fn potential_at(solution: &PotentialSolution, p: [f64; 3]) -> Result<f64> {
    Ok(solution.potential.sample(p)? * 1e3)
}

/// Depth of the electron well at `p`: electrode voltage minus local potential (mV).
pub fn well_depth_at(solution: &PotentialSolution, p: [f64; 3]) -> Result<f64> {
    Ok(solution.electrode_voltage - potential_at(solution, p)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::centered_grid;

    fn geom(v: f64, a: f64) -> DeviceGeometry {
        DeviceGeometry {
            electrode_radius: a,
            electrode_voltage: v,
            nv_depth: 20.0,
            donor_depth_n: 100.0,
            trap_density_eta: 1e15,
            trap_energy_et: -3.0,
            donor_energy_en: -1.7,
            temperature_t: 4.0,
        }
    }

    #[test]
    fn zero_voltage_gives_zero_field() {
        let g = centered_grid([320.0, 320.0, 160.0], [10.0; 3]).unwrap();
        let s = solve_potential(&geom(0.0, 50.0), &g, 1e-8).unwrap();
        assert!(s.potential.values.iter().all(|&v| v == 0.0));
        assert!(axial_profile(&s, (0.0, 0.0)).unwrap().iter().all(|&(_, v)| v == 0.0));
    }

    #[test]
    fn profile_starts_at_electrode_voltage_and_decays() {
        let g = centered_grid([320.0, 320.0, 160.0], [10.0; 3]).unwrap();
        let s = solve_potential(&geom(10.0, 60.0), &g, 1e-8).unwrap();
        let prof = axial_profile(&s, (0.0, 0.0)).unwrap();
        assert_eq!(prof[0], (0.0, 10.0));
        assert_eq!(prof.last().unwrap().1, 0.0);
        for w in prof.windows(2) {
            assert!(w[1].1 < w[0].1);
        }
        assert!(axial_profile(&s, (500.0, 0.0)).is_err());
    }

    #[test]
    fn maximum_principle_and_linearity() {
        let g = centered_grid([320.0, 320.0, 160.0], [10.0; 3]).unwrap();
        let s1 = solve_potential(&geom(10.0, 60.0), &g, 1e-10).unwrap();
        let s2 = solve_potential(&geom(20.0, 60.0), &g, 1e-10).unwrap();
        let vmax = s1.potential.values.iter().cloned().fold(f64::MIN, f64::max);
        let vmin = s1.potential.values.iter().cloned().fold(f64::MAX, f64::min);
        assert!(vmax <= 0.010 * (1.0 + 1e-12));
        assert!(vmin >= -1e-12);
        for (a, b) in s1.potential.values.iter().zip(&s2.potential.values) {
            assert!((2.0 * a - b).abs() < 1e-9 * 0.02);
        }
    }
}
