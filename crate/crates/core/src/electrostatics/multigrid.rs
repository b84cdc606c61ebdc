//! Geometric multigrid for the 7-point Laplacian on a node-centered grid.
//!
//! Free nodes on the outer faces get a mirror ghost (homogeneous Neumann);
//! nodes flagged `fixed` keep their value (Dirichlet). Smoothing is red-black
//! Gauss-Seidel done as two-buffer colour updates, parallel over x slabs.

use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct LaplaceProblem {
    pub counts: [usize; 3],
    pub spacing: [f64; 3],
    /// Dirichlet mask.
    pub fixed: Vec<bool>,
    /// Initial guess; entries under `fixed` are the boundary data.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MultigridOutcome {
    pub values: Vec<f64>,
    /// Final ‖r‖/‖r₀‖.
    pub relative_residual: f64,
    pub cycles: usize,
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct MultigridOptions {
    pub tol: f64,
    pub max_cycles: usize,
    pub pre_smooth: usize,
    pub post_smooth: usize,
}

impl Default for MultigridOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_cycles: 100,
            pre_smooth: 2,
            post_smooth: 2,
        }
    }
}

struct Level {
    n: [usize; 3],
    c: [f64; 3],
    fixed: Vec<bool>,
    u: Vec<f64>,
    f: Vec<f64>,
    scratch: Vec<f64>,
}

impl Level {
    fn diag(&self) -> f64 {
        2.0 * (self.c[0] + self.c[1] + self.c[2])
    }
}

#[inline]
fn lo(i: usize) -> usize {
    // mirror ghost at the low face
    if i == 0 {
        1
    } else {
        i - 1
    }
}

#[inline]
fn hi(i: usize, n: usize) -> usize {
    if i + 1 == n {
        n - 2
    } else {
        i + 1
    }
}

/// Σ_a c_a (u₊ + u₋) at node (i, j, k).
#[inline]
fn neighbour_sum(u: &[f64], n: [usize; 3], c: [f64; 3], i: usize, j: usize, k: usize) -> f64 {
    let sx = n[1] * n[2];
    let sy = n[2];
    let row = j * sy;
    let base = i * sx + row;
    c[0] * (u[lo(i) * sx + row + k] + u[hi(i, n[0]) * sx + row + k])
        + c[1] * (u[i * sx + lo(j) * sy + k] + u[i * sx + hi(j, n[1]) * sy + k])
        + c[2] * (u[base + lo(k)] + u[base + hi(k, n[2])])
}

fn smooth_colour(level: &mut Level, colour: usize) {
    let n = level.n;
    let c = level.c;
    let d = level.diag();
    let slab = n[1] * n[2];
    let u = &level.u;
    let f = &level.f;
    let fixed = &level.fixed;
    level
        .scratch
        .par_chunks_mut(slab)
        .enumerate()
        .for_each(|(i, out)| {
            out.copy_from_slice(&u[i * slab..(i + 1) * slab]);
            for j in 0..n[1] {
                let k0 = (colour + i + j) % 2;
                for k in (k0..n[2]).step_by(2) {
                    let idx = i * slab + j * n[2] + k;
                    if fixed[idx] {
                        continue;
                    }
                    out[j * n[2] + k] = (f[idx] + neighbour_sum(u, n, c, i, j, k)) / d;
                }
            }
        });
    std::mem::swap(&mut level.u, &mut level.scratch);
}

fn smooth(level: &mut Level, sweeps: usize) {
    for _ in 0..sweeps {
        smooth_colour(level, 0);
        smooth_colour(level, 1);
    }
}

/// r = f − A u on free nodes, 0 on fixed nodes. Written into `scratch`.
fn residual(level: &mut Level) {
    let n = level.n;
    let c = level.c;
    let d = level.diag();
    let slab = n[1] * n[2];
    let u = &level.u;
    let f = &level.f;
    let fixed = &level.fixed;
    level
        .scratch
        .par_chunks_mut(slab)
        .enumerate()
        .for_each(|(i, out)| {
            for j in 0..n[1] {
                for k in 0..n[2] {
                    let idx = i * slab + j * n[2] + k;
                    out[j * n[2] + k] = if fixed[idx] {
                        0.0
                    } else {
                        f[idx] - (d * u[idx] - neighbour_sum(u, n, c, i, j, k))
                    };
                }
            }
        });
}

/// Deterministic 2-norm: per-slab partial sums, added in slab order.
fn norm(v: &[f64], slab: usize) -> f64 {
    let parts: Vec<f64> = v.par_chunks(slab).map(|s| s.iter().map(|x| x * x).sum()).collect();
    parts.iter().sum::<f64>().sqrt()
}

fn coarsenable(n: [usize; 3]) -> bool {
    n.iter().all(|&m| m % 2 == 1 && (m + 1) / 2 >= 3)
}

/// Full weighting with mirrored neighbours at the faces.
fn restrict(fine: &[f64], nf: [usize; 3], nc: [usize; 3], out: &mut [f64]) {
    let w = |d: isize| if d == 0 { 0.5 } else { 0.25 };
    let idx = |i: isize, n: usize| -> usize {
        if i < 0 {
            1
        } else if i as usize >= n {
            n - 2
        } else {
            i as usize
        }
    };
    let slab = nc[1] * nc[2];
    out.par_chunks_mut(slab).enumerate().for_each(|(ci, o)| {
        for cj in 0..nc[1] {
            for ck in 0..nc[2] {
                let mut acc = 0.0;
                for dx in -1isize..=1 {
                    let fi = idx(2 * ci as isize + dx, nf[0]);
                    for dy in -1isize..=1 {
                        let fj = idx(2 * cj as isize + dy, nf[1]);
                        for dz in -1isize..=1 {
                            let fk = idx(2 * ck as isize + dz, nf[2]);
                            acc += w(dx) * w(dy) * w(dz) * fine[(fi * nf[1] + fj) * nf[2] + fk];
                        }
                    }
                }
                o[cj * nc[2] + ck] = acc;
            }
        }
    });
}

/// Trilinear prolongation of the coarse correction, added to free fine nodes.
fn prolong_add(coarse: &[f64], nc: [usize; 3], fine: &mut [f64], nf: [usize; 3], fixed: &[bool]) {
    let slab = nf[1] * nf[2];
    let pick = |i: usize| -> (usize, usize) { (i / 2, (i + 1) / 2) };
    fine.par_chunks_mut(slab).enumerate().for_each(|(i, o)| {
        let (x0, x1) = pick(i);
        for j in 0..nf[1] {
            let (y0, y1) = pick(j);
            for k in 0..nf[2] {
                let idx = i * slab + j * nf[2] + k;
                if fixed[idx] {
                    continue;
                }
                let (z0, z1) = pick(k);
                let g = |a: usize, b: usize, c: usize| coarse[(a * nc[1] + b) * nc[2] + c];
                let e = 0.125
                    * (g(x0, y0, z0)
                        + g(x0, y0, z1)
                        + g(x0, y1, z0)
                        + g(x0, y1, z1)
                        + g(x1, y0, z0)
                        + g(x1, y0, z1)
                        + g(x1, y1, z0)
                        + g(x1, y1, z1));
                o[j * nf[2] + k] += e;
            }
        }
    });
}

fn build_hierarchy(problem: &LaplaceProblem) -> Vec<Level> {
    let mut levels = Vec::new();
    let mut n = problem.counts;
    let mut h = problem.spacing;
    let mut fixed = problem.fixed.clone();
    let mut u = problem.values.clone();
    loop {
        let len = n[0] * n[1] * n[2];
        levels.push(Level {
            n,
            c: [0, 1, 2].map(|a| 1.0 / (h[a] * h[a])),
            fixed: fixed.clone(),
            u: std::mem::take(&mut u),
            f: vec![0.0; len],
            scratch: vec![0.0; len],
        });
        if !coarsenable(n) {
            break;
        }
        let nc = n.map(|m| (m + 1) / 2);
        let mut cf = Vec::with_capacity(nc[0] * nc[1] * nc[2]);
        for i in 0..nc[0] {
            for j in 0..nc[1] {
                for k in 0..nc[2] {
                    cf.push(fixed[((2 * i) * n[1] + 2 * j) * n[2] + 2 * k]);
                }
            }
        }
        fixed = cf;
        u = vec![0.0; nc[0] * nc[1] * nc[2]];
        n = nc;
        h = h.map(|x| 2.0 * x);
    }
    levels
}

fn coarse_solve(level: &mut Level) {
    let slab = level.n[1] * level.n[2];
    residual(level);
    let r0 = norm(&level.scratch, slab);
    if r0 == 0.0 {
        return;
    }
    let cap = 50 * level.n.iter().max().copied().unwrap_or(3);
    let mut done = 0;
    while done < cap {
        smooth(level, 10);
        done += 10;
        residual(level);
        if norm(&level.scratch, slab) < 1e-3 * r0 {
            break;
        }
    }
}

fn v_cycle(levels: &mut [Level], l: usize, opts: &MultigridOptions) {
    if l + 1 == levels.len() {
        coarse_solve(&mut levels[l]);
        return;
    }
    smooth(&mut levels[l], opts.pre_smooth);
    residual(&mut levels[l]);
    {
        let (fine, rest) = levels.split_at_mut(l + 1);
        let (f, c) = (&fine[l], &mut rest[0]);
        restrict(&f.scratch, f.n, c.n, &mut c.f);
        // the correction is homogeneous on Dirichlet nodes
        for (v, &fx) in c.f.iter_mut().zip(&c.fixed) {
            if fx {
                *v = 0.0;
            }
        }
        c.u.iter_mut().for_each(|v| *v = 0.0);
    }
    v_cycle(levels, l + 1, opts);
    {
        let (fine, rest) = levels.split_at_mut(l + 1);
        let (f, c) = (&mut fine[l], &rest[0]);
        prolong_add(&c.u, c.n, &mut f.u, f.n, &f.fixed);
    }
    smooth(&mut levels[l], opts.post_smooth);
}

/// Solve the homogeneous Laplace equation with the given boundary data.
pub fn solve_laplace(problem: &LaplaceProblem, opts: &MultigridOptions) -> Result<MultigridOutcome> {
    let n = problem.counts;
    let len = n[0] * n[1] * n[2];
    if n.iter().any(|&m| m < 3) {
        return Err(Error::invalid("multigrid needs at least 3 nodes per axis"));
    }
    if problem.fixed.len() != len || problem.values.len() != len {
        return Err(Error::invalid("mask/values length does not match the grid"));
    }
    let mut levels = build_hierarchy(problem);
    let slab = n[1] * n[2];
    residual(&mut levels[0]);
    let r0 = norm(&levels[0].scratch, slab);
    if r0 == 0.0 {
        return Ok(MultigridOutcome {
            values: std::mem::take(&mut levels[0].u),
            relative_residual: 0.0,
            cycles: 0,
            history: vec![],
        });
    }
    let mut history = Vec::new();
    for cycle in 1..=opts.max_cycles {
        v_cycle(&mut levels, 0, opts);
        residual(&mut levels[0]);
        let rel = norm(&levels[0].scratch, slab) / r0;
        history.push(rel);
        log::debug!("multigrid cycle {cycle}: relative residual {rel:.3e}");
        if rel < opts.tol {
            return Ok(MultigridOutcome {
                values: std::mem::take(&mut levels[0].u),
                relative_residual: rel,
                cycles: cycle,
                history,
            });
        }
        if !rel.is_finite() {
            break;
        }
    }
    Err(Error::SolverFailure {
        solver: "multigrid Laplace".into(),
        iterations: history.len(),
        residual: history.last().copied().unwrap_or(f64::NAN),
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dirichlet_box(n: usize, value: impl Fn(f64, f64, f64) -> f64) -> LaplaceProblem {
        let h = 1.0 / (n - 1) as f64;
        let mut fixed = vec![false; n * n * n];
        let mut values = vec![0.0; n * n * n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let idx = (i * n + j) * n + k;
                    if i == 0 || j == 0 || k == 0 || i == n - 1 || j == n - 1 || k == n - 1 {
                        fixed[idx] = true;
                        values[idx] = value(i as f64 * h, j as f64 * h, k as f64 * h);
                    }
                }
            }
        }
        LaplaceProblem {
            counts: [n; 3],
            spacing: [h; 3],
            fixed,
            values,
        }
    }

    #[test]
    fn harmonic_linear_data_is_reproduced() {
        // discrete Laplacian is exact on linear functions
        let f = |x: f64, y: f64, z: f64| 1.0 + x - 2.0 * y + 0.5 * z;
        let p = dirichlet_box(17, f);
        let out = solve_laplace(&p, &MultigridOptions::default()).unwrap();
        let h = 1.0 / 16.0;
        let mut worst: f64 = 0.0;
        for (idx, v) in out.values.iter().enumerate() {
            let (i, j, k) = (idx / 289, (idx / 17) % 17, idx % 17);
            worst = worst.max((v - f(i as f64 * h, j as f64 * h, k as f64 * h)).abs());
        }
        assert!(worst < 1e-7, "max error {worst}");
        assert!(out.cycles < 20);
    }

    #[test]
    fn zero_data_returns_immediately() {
        let p = dirichlet_box(9, |_, _, _| 0.0);
        let out = solve_laplace(&p, &MultigridOptions::default()).unwrap();
        assert_eq!(out.cycles, 0);
        assert!(out.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn neumann_face_gives_flat_solution() {
        // top face free (Neumann), bottom fixed at 1, sides fixed at 1: solution is 1
        let n = 9;
        let mut p = dirichlet_box(n, |_, _, _| 1.0);
        for i in 1..n - 1 {
            for j in 1..n - 1 {
                p.fixed[(i * n + j) * n] = false;
            }
        }
        let out = solve_laplace(&p, &MultigridOptions::default()).unwrap();
        assert!(out.values.iter().all(|v| (v - 1.0).abs() < 1e-7));
    }

    #[test]
    fn cycle_cap_reports_failure() {
        let p = dirichlet_box(33, |x, _, _| x);
        let opts = MultigridOptions {
            tol: 1e-30,
            max_cycles: 3,
            ..Default::default()
        };
        match solve_laplace(&p, &opts) {
            Err(Error::SolverFailure { iterations, history, .. }) => {
                assert_eq!(iterations, 3);
                assert_eq!(history.len(), 3);
            }
            other => panic!("expected solver failure, got {other:?}"),
        }
    }

    #[test]
    fn even_counts_fall_back_to_smoothing() {
        let p = dirichlet_box(10, |x, y, _| x * y);
        let out = solve_laplace(&p, &MultigridOptions { max_cycles: 400, ..Default::default() }).unwrap();
        assert!(out.relative_residual < 1e-8);
    }
}
