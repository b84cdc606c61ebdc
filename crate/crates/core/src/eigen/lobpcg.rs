//! Block LOBPCG for the lowest eigenpairs of a symmetric operator.
//!
//! W and P are orthonormalized block by block against everything before them
//! (projection and SVQB, twice each) and their images are recomputed, so the
//! Rayleigh-Ritz matrix is formed from an orthonormal basis and the reported
//! residuals are true residuals. Converged columns stop contributing search
//! directions (soft locking).

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

pub trait SymmetricOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

pub trait Preconditioner: Sync {
    /// Symmetric positive definite approximation of A⁻¹ applied to r.
    /// `shift` is the largest current Ritz value of the block.
    fn apply(&self, r: &[f64], shift: f64, out: &mut [f64]);
}

#[derive(Debug, Clone, Copy)]
pub struct LobpcgOptions {
    /// Absolute residual target ‖Ax − θx‖ for unit x.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Extra block columns beyond the requested count.
    pub guard: usize,
    /// Iterations without a halving of the worst residual before giving up.
    pub stagnation_window: usize,
}

impl Default for LobpcgOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
            seed: 0,
            guard: 3,
            stagnation_window: 80,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LobpcgResult {
    pub values: Vec<f64>,
    /// Unit 2-norm vectors.
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    /// Worst wanted residual after each iteration.
    pub history: Vec<f64>,
}

const CHUNK: usize = 4096;

/// Chunked dot product; the chunking is fixed so the sum does not depend on
/// the thread count.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let parts: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect();
    parts.iter().sum()
}

fn gram(a: &[Vec<f64>], b: &[Vec<f64>]) -> DMatrix<f64> {
    let pairs: Vec<(usize, usize)> = (0..a.len()).flat_map(|i| (0..b.len()).map(move |j| (i, j))).collect();
    let vals: Vec<f64> = pairs.iter().map(|&(i, j)| dot(&a[i], &b[j])).collect();
    DMatrix::from_fn(a.len(), b.len(), |i, j| vals[i * b.len() + j])
}

fn gram_sym(a: &[Vec<f64>], b: &[Vec<f64>]) -> DMatrix<f64> {
    let g = gram(a, b);
    (&g + g.transpose()) * 0.5
}

/// out_j = Σ_i S_i · C[i, j]
fn combine(s: &[&Vec<f64>], c: &DMatrix<f64>) -> Vec<Vec<f64>> {
    let n = s.first().map_or(0, |v| v.len());
    (0..c.ncols())
        .into_par_iter()
        .map(|j| {
            let mut out = vec![0.0; n];
            for (i, si) in s.iter().enumerate() {
                let w = c[(i, j)];
                if w != 0.0 {
                    out.iter_mut().zip(si.iter()).for_each(|(o, v)| *o += w * v);
                }
            }
            out
        })
        .collect()
}

fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

/// Coefficients Q with SᵀS-orthonormal columns S·Q, dropping near-dependent
/// directions.
fn svqb(g: &DMatrix<f64>, drop: f64) -> DMatrix<f64> {
    let n = g.nrows();
    let d: Vec<f64> = (0..n).map(|i| 1.0 / g[(i, i)].max(f64::MIN_POSITIVE).sqrt()).collect();
    let gs = DMatrix::from_fn(n, n, |i, j| g[(i, j)] * d[i] * d[j]);
    let (lam, v) = sorted_eigen(gs);
    let lmax = lam.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..n).filter(|&i| lam[i] > drop * lmax).collect();
    DMatrix::from_fn(n, keep.len(), |i, c| d[i] * v[(i, keep[c])] / lam[keep[c]].sqrt())
}

fn sym_gram_refs(a: &[&Vec<f64>], b: &[&Vec<f64>]) -> DMatrix<f64> {
    let k = a.len();
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (0..k).map(move |j| (i, j))).collect();
    let vals: Vec<f64> = pairs.iter().map(|&(i, j)| dot(a[i], b[j])).collect();
    let g = DMatrix::from_fn(k, k, |i, j| vals[i * k + j]);
    (&g + g.transpose()) * 0.5
}

/// Orthonormal basis for span(v) ⟂ span(basis), two passes of projection and
/// SVQB. Directions lost to cancellation are dropped.
fn orthonormalize_against(basis: &[Vec<f64>], mut v: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    for _ in 0..2 {
        if v.is_empty() {
            break;
        }
        project_out(basis, &mut v);
        let q = svqb(&gram_sym(&v, &v), 1e-12);
        let vr: Vec<&Vec<f64>> = v.iter().collect();
        v = combine(&vr, &q);
    }
    v
}

fn orthonormal_basis(s: &[&Vec<f64>]) -> DMatrix<f64> {
    let owned: Vec<Vec<f64>> = s.iter().map(|v| (*v).clone()).collect();
    let q1 = svqb(&gram_sym(&owned, &owned), 1e-12);
    let s1 = combine(s, &q1);
    let q2 = svqb(&gram_sym(&s1, &s1), 1e-12);
    q1 * q2
}

fn apply_block(op: &dyn SymmetricOperator, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    x.iter()
        .map(|v| {
            let mut y = vec![0.0; v.len()];
            op.apply(v, &mut y);
            y
        })
        .collect()
}

/// Remove the X components from `v` (X orthonormal), twice.
fn project_out(x: &[Vec<f64>], v: &mut [Vec<f64>]) {
    for _ in 0..2 {
        let c = gram(x, v);
        let xr: Vec<&Vec<f64>> = x.iter().collect();
        let corr = combine(&xr, &c);
        for (vi, ci) in v.iter_mut().zip(corr) {
            vi.iter_mut().zip(ci).for_each(|(a, b)| *a -= b);
        }
    }
}

fn dense_fallback(op: &dyn SymmetricOperator, nev: usize) -> LobpcgResult {
    let n = op.dim();
    let mut a = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        op.apply(&e, &mut col);
        for i in 0..n {
            a[(i, j)] = col[i];
        }
        e[j] = 0.0;
    }
    let a = (&a + a.transpose()) * 0.5;
    let (vals, vecs) = sorted_eigen(a.clone());
    let vectors: Vec<Vec<f64>> = (0..nev).map(|j| vecs.column(j).iter().cloned().collect()).collect();
    let residuals = vectors
        .iter()
        .zip(&vals)
        .map(|(v, &t)| {
            let mut y = vec![0.0; n];
            op.apply(v, &mut y);
            y.iter().zip(v).map(|(a, b)| (a - t * b).powi(2)).sum::<f64>().sqrt()
        })
        .collect();
    LobpcgResult {
        values: vals[..nev].to_vec(),
        vectors,
        residuals,
        iterations: 0,
        history: vec![],
    }
}

/// Lowest `nev` eigenpairs.
pub fn lobpcg(
    op: &dyn SymmetricOperator,
    precond: Option<&dyn Preconditioner>,
    nev: usize,
    opts: &LobpcgOptions,
) -> Result<LobpcgResult> {
    lobpcg_from(op, precond, nev, opts, &[])
}

/// As `lobpcg`, with the leading block columns taken from `start` (e.g. the
/// vectors of a nearby problem); the rest are seeded randomly.
pub fn lobpcg_from(
    op: &dyn SymmetricOperator,
    precond: Option<&dyn Preconditioner>,
    nev: usize,
    opts: &LobpcgOptions,
    start: &[Vec<f64>],
) -> Result<LobpcgResult> {
    let n = op.dim();
    if nev == 0 {
        return Err(Error::invalid("requested zero eigenpairs"));
    }
    if nev >= n {
        return Err(Error::invalid(format!("requested {nev} eigenpairs of a {n}-dimensional operator")));
    }
    let m = nev + opts.guard;
    if n <= 400 || 4 * m > n {
        return Ok(dense_fallback(op, nev));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    if start.iter().any(|v| v.len() != n) {
        return Err(Error::invalid("starting vectors do not match the operator dimension"));
    }
    let x0: Vec<Vec<f64>> = (0..m)
        .map(|j| match start.get(j) {
            Some(v) => v.clone(),
            None => (0..n).map(|_| rng.gen::<f64>() - 0.5).collect(),
        })
        .collect();
    let xr: Vec<&Vec<f64>> = x0.iter().collect();
    let q = orthonormal_basis(&xr);
    let mut x = combine(&xr, &q);
    let mut ax = apply_block(op, &x);
    let (theta, y) = sorted_eigen(gram_sym(&x, &ax));
    let xr: Vec<&Vec<f64>> = x.iter().collect();
    let mut theta: Vec<f64> = theta[..m].to_vec();
    let c = y.columns(0, m).into_owned();
    x = combine(&xr, &c);
    ax = apply_block(op, &x);

    let mut p: Vec<Vec<f64>> = Vec::new();
    let mut history = Vec::new();
    let mut residuals = vec![f64::INFINITY; m];

    for iter in 1..=opts.max_iter {
        let r: Vec<Vec<f64>> = (0..m)
            .into_par_iter()
            .map(|j| ax[j].iter().zip(&x[j]).map(|(a, b)| a - theta[j] * b).collect())
            .collect();
        for j in 0..m {
            residuals[j] = dot(&r[j], &r[j]).sqrt();
        }
        let worst = residuals[..nev].iter().cloned().fold(0.0, f64::max);
        history.push(worst);
        log::trace!("lobpcg iter {iter}: worst residual {worst:.3e}");
        if worst < opts.tol {
            return Ok(finish(x, theta, residuals, nev, iter, history));
        }
        if !worst.is_finite() {
            break;
        }
        let w_len = history.len();
        if w_len > opts.stagnation_window {
            let old = history[w_len - 1 - opts.stagnation_window];
            let best_recent = history[w_len - opts.stagnation_window..].iter().cloned().fold(f64::INFINITY, f64::min);
            if best_recent > 0.5 * old {
                log::warn!("lobpcg stagnated at residual {worst:.3e}");
                break;
            }
        }

        let active: Vec<usize> = (0..m).filter(|&j| residuals[j] >= opts.tol).collect();
        let shift = theta[m - 1];
        let w: Vec<Vec<f64>> = active
            .par_iter()
            .map(|&j| match precond {
                Some(t) => {
                    let mut out = vec![0.0; n];
                    t.apply(&r[j], shift, &mut out);
                    out
                }
                None => r[j].clone(),
            })
            .collect();
        let w = orthonormalize_against(&x, w);
        let pa: Vec<Vec<f64>> = if p.is_empty() {
            vec![]
        } else {
            let xw: Vec<Vec<f64>> = x.iter().chain(w.iter()).cloned().collect();
            orthonormalize_against(&xw, active.iter().map(|&j| p[j].clone()).collect())
        };
        let aw = apply_block(op, &w);
        let apa = apply_block(op, &pa);

        let basis: Vec<&Vec<f64>> = x.iter().chain(w.iter()).chain(pa.iter()).collect();
        let abasis: Vec<&Vec<f64>> = ax.iter().chain(aw.iter()).chain(apa.iter()).collect();
        let (vals, y) = sorted_eigen(sym_gram_refs(&basis, &abasis));
        let c = y.columns(0, m).into_owned();
        let x_new = combine(&basis, &c);
        // P: the part of the update outside span(X), kept for every column
        let dirs = &basis[m..];
        p = if dirs.is_empty() {
            vec![vec![0.0; n]; m]
        } else {
            combine(dirs, &c.rows(m, dirs.len()).into_owned())
        };
        let ax_new = apply_block(op, &x_new);

        x = x_new;
        ax = ax_new;
        theta = vals[..m].to_vec();
    }
    let worst = history.last().copied().unwrap_or(f64::NAN);
    Err(Error::SolverFailure {
        solver: "lobpcg".into(),
        iterations: history.len(),
        residual: worst,
        history,
    })
}

fn finish(
    x: Vec<Vec<f64>>,
    theta: Vec<f64>,
    residuals: Vec<f64>,
    nev: usize,
    iterations: usize,
    history: Vec<f64>,
) -> LobpcgResult {
    let vectors = x
        .into_iter()
        .take(nev)
        .map(|mut v| {
            let nrm = dot(&v, &v).sqrt();
            // sign convention: largest-magnitude entry positive
            let mut big = 0.0f64;
            for &e in &v {
                if e.abs() > big.abs() * (1.0 + 1e-12) {
                    big = e;
                }
            }
            let s = if big < 0.0 { -1.0 / nrm } else { 1.0 / nrm };
            v.iter_mut().for_each(|e| *e *= s);
            v
        })
        .collect();
    LobpcgResult {
        values: theta[..nev].to_vec(),
        vectors,
        residuals: residuals[..nev].to_vec(),
        iterations,
        history,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 1D Dirichlet Laplacian plus a diagonal.
    struct Chain {
        diag: Vec<f64>,
    }

    impl SymmetricOperator for Chain {
        fn dim(&self) -> usize {
            self.diag.len()
        }
        fn apply(&self, x: &[f64], y: &mut [f64]) {
            let n = x.len();
            for i in 0..n {
                let mut v = (2.0 + self.diag[i]) * x[i];
                if i > 0 {
                    v -= x[i - 1];
                }
                if i + 1 < n {
                    v -= x[i + 1];
                }
                y[i] = v;
            }
        }
    }

    #[test]
    fn laplacian_chain_matches_closed_form() {
        let n = 600;
        let op = Chain { diag: vec![0.0; n] };
        let opts = LobpcgOptions {
            tol: 1e-9,
            max_iter: 3000,
            stagnation_window: 2000,
            ..Default::default()
        };
        let res = lobpcg(&op, None, 3, &opts).unwrap();
        for (k, v) in res.values.iter().enumerate() {
            let exact = 2.0 - 2.0 * (std::f64::consts::PI * (k + 1) as f64 / (n + 1) as f64).cos();
            assert!((v - exact).abs() < 1e-9, "{v} vs {exact}");
        }
    }

    #[test]
    fn small_problems_use_dense_path() {
        let op = Chain {
            diag: (0..50).map(|i| i as f64 * 0.01).collect(),
        };
        let res = lobpcg(&op, None, 4, &LobpcgOptions::default()).unwrap();
        assert_eq!(res.iterations, 0);
        assert!(res.residuals.iter().all(|&r| r < 1e-10));
        assert!(res.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn same_seed_same_answer() {
        let op = Chain {
            diag: (0..800).map(|i| ((i as f64) * 0.37).sin().abs()).collect(),
        };
        let opts = LobpcgOptions {
            tol: 1e-7,
            max_iter: 3000,
            stagnation_window: 2000,
            seed: 7,
            ..Default::default()
        };
        let a = lobpcg(&op, None, 2, &opts).unwrap();
        let b = lobpcg(&op, None, 2, &opts).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.vectors, b.vectors);
    }

    #[test]
    fn iteration_cap_is_a_solver_failure() {
        let op = Chain { diag: vec![0.0; 2000] };
        let opts = LobpcgOptions {
            tol: 1e-14,
            max_iter: 5,
            ..Default::default()
        };
        match lobpcg(&op, None, 2, &opts) {
            Err(Error::SolverFailure { history, .. }) => assert_eq!(history.len(), 5),
            other => panic!("expected solver failure, got {:?}", other.map(|r| r.values)),
        }
    }

    #[test]
    fn warm_start_converges_faster() {
        let op = Chain {
            diag: (0..900).map(|i| ((i as f64) * 0.11).cos().abs()).collect(),
        };
        let opts = LobpcgOptions {
            tol: 1e-8,
            max_iter: 3000,
            stagnation_window: 2000,
            ..Default::default()
        };
        let cold = lobpcg(&op, None, 2, &opts).unwrap();
        let warm = lobpcg_from(&op, None, 2, &opts, &cold.vectors).unwrap();
        assert!(warm.iterations < cold.iterations / 2);
        for (a, b) in warm.values.iter().zip(&cold.values) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn bad_counts_rejected() {
        let op = Chain { diag: vec![0.0; 10] };
        assert!(lobpcg(&op, None, 0, &LobpcgOptions::default()).is_err());
        assert!(lobpcg(&op, None, 10, &LobpcgOptions::default()).is_err());
    }
}
