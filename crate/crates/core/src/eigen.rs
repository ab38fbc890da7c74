//! Largest-magnitude eigenpairs of a symmetric operator.
//!
//! The solver only touches the operator through matrix-vector products. It runs
//! Chebyshev-filtered subspace iteration: a block of `m + guard` vectors is
//! repeatedly passed through the scaled Chebyshev polynomial
//! `T_d(A / a) / T_d(1 / a)`, which keeps components with `|lambda| >= a`
//! and damps those in `(-a, a)`, followed by a Rayleigh-Ritz projection. The
//! cutoff `a` tracks the smallest-magnitude Ritz value of the block. The
//! operator's spectrum must lie in `[-1, 1]`, as it does for the symmetric
//! conjugate of a Markov matrix.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Symmetric linear operator with spectrum inside `[-1, 1]`.
pub trait SymmetricOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl SymmetricOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.n()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(x, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenConfig {
    /// Residual tolerance `|A v - theta v|_2` for unit `v`.
    pub tol: f64,
    /// Chebyshev degree applied between Rayleigh-Ritz steps.
    pub degree: usize,
    /// Extra block vectors beyond the `m` requested; `None` picks `max(m / 2, 8)`.
    pub guard: Option<usize>,
    /// Matrix-vector products allowed per block column; `None` means `50 * m`.
    pub matvecs_per_column: Option<usize>,
    pub seed: u64,
}

impl Default for EigenConfig {
    fn default() -> Self {
        EigenConfig {
            tol: 1e-10,
            degree: 12,
            guard: None,
            matvecs_per_column: None,
            seed: 0x5eed,
        }
    }
}

/// Converged eigenpairs, sorted by decreasing `|lambda|`.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    /// `n x m`, orthonormal columns.
    pub vectors: DMatrix<f64>,
    pub residuals: Vec<f64>,
    pub matvecs: usize,
}

fn apply_columns<A: SymmetricOperator>(op: &A, x: &DMatrix<f64>, cols: std::ops::Range<usize>, out: &mut DMatrix<f64>) {
    let n = op.dim();
    let src = x.as_slice();
    let dst = out.as_mut_slice();
    for j in cols {
        op.apply(&src[j * n..(j + 1) * n], &mut dst[j * n..(j + 1) * n]);
    }
}

/// Rayleigh-Ritz on the span of `basis`: Ritz values sorted by magnitude,
/// Ritz vectors, and their images under the operator.
fn rayleigh_ritz(basis: &DMatrix<f64>, image: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>, DMatrix<f64>) {
    let h = basis.transpose() * image;
    let h = (&h + h.transpose()) * 0.5;
    let eig = SymmetricEigen::new(h);
    let k = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        let (va, vb) = (eig.eigenvalues[a], eig.eigenvalues[b]);
        vb.abs().total_cmp(&va.abs()).then(vb.total_cmp(&va)).then(a.cmp(&b))
    });
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let u = DMatrix::from_fn(k, k, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, basis * &u, image * &u)
}

fn residual_norms(values: &[f64], x: &DMatrix<f64>, ax: &DMatrix<f64>) -> Vec<f64> {
    values
        .iter()
        .enumerate()
        .map(|(j, &theta)| {
            ax.column(j)
                .iter()
                .zip(x.column(j).iter())
                .map(|(a, b)| (a - theta * b).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

fn orthonormalize(x: DMatrix<f64>) -> DMatrix<f64> {
    x.qr().q()
}

/// The `m` eigenpairs of largest magnitude.
pub fn largest_magnitude<A: SymmetricOperator>(op: &A, m: usize, config: &EigenConfig) -> Result<EigenPairs> {
    let n = op.dim();
    if m == 0 || m > n {
        return Err(Error::param(format!("requested {m} eigenpairs of a {n}-dimensional operator")));
    }
    let guard = config.guard.unwrap_or((m / 2).max(8));
    let block = (m + guard).min(n);

    // Small problems: project onto the whole space.
    if 2 * block >= n {
        let basis = DMatrix::<f64>::identity(n, n);
        let mut image = DMatrix::<f64>::zeros(n, n);
        apply_columns(op, &basis, 0..n, &mut image);
        let (values, x, ax) = rayleigh_ritz(&basis, &image);
        let residuals = residual_norms(&values, &x, &ax);
        return Ok(EigenPairs {
            values: values[..m].to_vec(),
            vectors: x.columns(0, m).into_owned(),
            residuals: residuals[..m].to_vec(),
            matvecs: n,
        });
    }

    let budget = config.matvecs_per_column.unwrap_or(50 * m) * block;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let start = DMatrix::from_fn(n, block, |_, _| StandardNormal.sample(&mut rng));
    let mut basis = orthonormalize(start);
    let mut image = DMatrix::<f64>::zeros(n, block);
    let mut matvecs = 0usize;

    let mut scratch = vec![0.0; n];
    loop {
        apply_columns(op, &basis, 0..block, &mut image);
        matvecs += block;
        let (values, x, ax) = rayleigh_ritz(&basis, &image);
        let residuals = residual_norms(&values, &x, &ax);
        let converged = residuals[..m].iter().all(|&r| r <= config.tol);
        if converged {
            return Ok(EigenPairs {
                values: values[..m].to_vec(),
                vectors: x.columns(0, m).into_owned(),
                residuals: residuals[..m].to_vec(),
                matvecs,
            });
        }
        if matvecs >= budget {
            let worst = residuals[..m].iter().cloned().fold(0.0, f64::max);
            return Err(Error::Numerical(format!(
                "eigensolver did not converge within {budget} matrix-vector products; \
                 worst residual {worst:.3e} (tolerance {:.1e})",
                config.tol
            )));
        }

        // Leading converged columns are left alone.
        let locked = residuals.iter().take(m).take_while(|&&r| r <= config.tol).count();
        let cutoff = values[block - 1].abs().clamp(1e-3, 1.0 - 1e-12);
        let inv_cut = 1.0 / cutoff;

        let mut filtered = x;
        let src = ax;
        let data = filtered.as_mut_slice();
        let src = src.as_slice();
        for j in locked..block {
            // Scaled three-term recurrence: y_k = T_k(A/a) v / T_k(1/a).
            let col = j * n..(j + 1) * n;
            let mut prev: Vec<f64> = data[col.clone()].to_vec();
            // First step reuses A v from the Rayleigh-Ritz image.
            let mut ratio = cutoff; // T_0(1/a) / T_1(1/a)
            let mut cur: Vec<f64> = src[col.clone()].iter().map(|v| v * inv_cut * ratio).collect();
            for _ in 1..config.degree.max(1) {
                op.apply(&cur, &mut scratch);
                matvecs += 1;
                let next_ratio = 1.0 / (2.0 * inv_cut - ratio);
                let a = 2.0 * inv_cut * next_ratio;
                let b = ratio * next_ratio;
                for ((p, c), s) in prev.iter_mut().zip(cur.iter_mut()).zip(&scratch) {
                    let next = a * s - b * *p;
                    *p = *c;
                    *c = next;
                }
                ratio = next_ratio;
            }
            data[col].copy_from_slice(&cur);
        }
        basis = orthonormalize(filtered);
    }
}
