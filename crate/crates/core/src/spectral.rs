//! Diffusion maps: eigenpairs of the random walk, the truncated embedding, and
//! diffusion distances.
//!
//! The walk `P = D^{-1} W` is conjugate to `S = D^{-1/2} W D^{-1/2}`. With
//! `S v_k = lambda_k v_k` and orthonormal `v_k`, the right eigenvectors of `P`
//! are `psi_k = v_k / sqrt(pi)`, orthonormal in `l2(pi)`. In that basis the
//! diffusion distance at time `t` is the Euclidean distance between rows of
//! `E[i][k] = lambda_k^t psi_k(i)`, exactly when all `n` eigenpairs are kept and
//! as a truncation otherwise.

use rayon::prelude::*;

use crate::dataset::squared_distance;
use crate::eigen::{largest_magnitude, EigenConfig};
use crate::error::{Error, Result};
use crate::graph::MarkovChain;
use crate::knn::{linear_scan, KdTree, Neighbor, NeighborTable};

/// Largest problem size accepted by the dense diffusion-distance oracle.
pub const EXACT_DISTANCE_MAX_N: usize = 2000;

/// Default number of eigenpairs, `min(50, n)`.
pub fn default_eigen_count(n: usize) -> usize {
    n.min(50)
}

pub const DEFAULT_DIFFUSION_TIME: u32 = 30;

/// Checks that a diffusion time is a nonnegative integer.
pub fn diffusion_time(t: f64) -> Result<u32> {
    if !(t >= 0.0) || t.fract() != 0.0 || t > u32::MAX as f64 {
        return Err(Error::param(format!(
            "diffusion time must be a nonnegative integer, got {t}"
        )));
    }
    Ok(t as u32)
}

/// Leading eigenpairs of a Markov chain.
#[derive(Debug, Clone)]
pub struct DiffusionModel {
    n: usize,
    eigenvalues: Vec<f64>,
    // n x m, row-major: psi[i * m + k] = psi_k(x_i)
    psi: Vec<f64>,
    residuals: Vec<f64>,
    matvecs: usize,
}

impl DiffusionModel {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of eigenpairs kept.
    pub fn m(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Eigenvalues sorted by decreasing magnitude; the first is 1.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    #[inline]
    pub fn psi(&self, i: usize, k: usize) -> f64 {
        self.psi[i * self.m() + k]
    }

    /// Right eigenvector `psi_k` as a column.
    pub fn eigenvector(&self, k: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.psi(i, k)).collect()
    }

    /// Residuals of the symmetric problem, `|S v_k - lambda_k v_k|_2`.
    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn matvecs(&self) -> usize {
        self.matvecs
    }

    /// Diffusion coordinates at integer time `t`.
    pub fn embed(&self, t: u32) -> Embedding {
        let m = self.m();
        let powers: Vec<f64> = self.eigenvalues.iter().map(|l| l.powi(t as i32)).collect();
        let coords = self
            .psi
            .par_chunks(m)
            .flat_map_iter(|row| row.iter().zip(&powers).map(|(p, l)| l * p).collect::<Vec<_>>())
            .collect();
        Embedding {
            n: self.n,
            m,
            t,
            coords,
        }
    }
}

/// The `m` largest-magnitude eigenpairs of `P`, via its symmetric conjugate.
pub fn top_eigenpairs(chain: &MarkovChain, m: usize, config: &EigenConfig) -> Result<DiffusionModel> {
    let n = chain.n();
    if m == 0 || m > n {
        return Err(Error::param(format!("eigenpair count must be in [1, {n}], got {m}")));
    }
    let s = chain.symmetric();
    let pairs = largest_magnitude(&s, m, config)?;
    let inv_sqrt_pi: Vec<f64> = chain.stationary().iter().map(|p| 1.0 / p.sqrt()).collect();
    let mut psi = vec![0.0; n * m];
    for k in 0..m {
        let v = pairs.vectors.column(k);
        // Fix the sign so the largest-magnitude entry is positive (first one on ties).
        let mut pivot = 0;
        for i in 1..n {
            if v[i].abs() > v[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            psi[i * m + k] = sign * v[i] * inv_sqrt_pi[i];
        }
    }
    Ok(DiffusionModel {
        n,
        eigenvalues: pairs.values,
        psi,
        residuals: pairs.residuals,
        matvecs: pairs.matvecs,
    })
}

/// Row-major `n x m` diffusion coordinates at a fixed time.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    n: usize,
    m: usize,
    t: u32,
    coords: Vec<f64>,
}

impl Embedding {
    /// Wraps explicit coordinates, mainly for tests.
    pub fn from_coords(coords: Vec<f64>, m: usize, t: u32) -> Result<Self> {
        if m == 0 || coords.len() % m != 0 {
            return Err(Error::Shape(format!("{} coordinates do not split into rows of {m}", coords.len())));
        }
        Ok(Embedding {
            n: coords.len() / m,
            m,
            t,
            coords,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn t(&self) -> u32 {
        self.t
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.coords[i * self.m..(i + 1) * self.m]
    }

    #[inline]
    pub fn sq_distance(&self, i: usize, j: usize) -> f64 {
        squared_distance(self.row(i), self.row(j))
    }

    /// Diffusion distance `D_t(x_i, x_j)`.
    #[inline]
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.sq_distance(i, j).sqrt()
    }

    /// Column norms `|E[:, k]|_2`.
    pub fn column_norms(&self) -> Vec<f64> {
        (0..self.m)
            .map(|k| (0..self.n).map(|i| self.coords[i * self.m + k].powi(2)).sum::<f64>().sqrt())
            .collect()
    }

    /// `count` nearest neighbors of every point, self excluded, via a k-d tree.
    pub fn knn_table(&self, count: usize) -> NeighborTable {
        KdTree::new(&self.coords, self.m).all_knn(count)
    }
}

/// The `count` points nearest to row `i`, excluding `i`, by exhaustive scan.
pub fn dt_nearest(embedding: &Embedding, i: usize, count: usize) -> Result<Vec<Neighbor>> {
    let n = embedding.n();
    if count == 0 || count >= n {
        return Err(Error::param(format!("neighbor count must be in [1, {n}), got {count}")));
    }
    if i >= n {
        return Err(Error::param(format!("point {i} out of range")));
    }
    Ok(linear_scan(embedding.coords(), embedding.m(), embedding.row(i), count, Some(i)))
}

/// Dense `P^t`, row-major.
fn dense_power(chain: &MarkovChain, t: u32) -> Vec<f64> {
    let n = chain.n();
    let p = chain.transitions().to_dense();
    let mut acc = vec![0.0; n * n];
    for i in 0..n {
        acc[i * n + i] = 1.0;
    }
    for _ in 0..t {
        let mut next = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = acc[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    next[i * n + j] += a * p[k * n + j];
                }
            }
        }
        acc = next;
    }
    acc
}

fn exact_from_power(power: &[f64], pi: &[f64], n: usize, i: usize, j: usize) -> f64 {
    (0..n)
        .map(|k| (power[i * n + k] - power[j * n + k]).powi(2) / pi[k])
        .sum::<f64>()
        .sqrt()
}

fn check_exact_size(n: usize) -> Result<()> {
    if n > EXACT_DISTANCE_MAX_N {
        return Err(Error::Usage(format!(
            "exact diffusion distance is dense and limited to n <= {EXACT_DISTANCE_MAX_N} \
             (got {n}); use the spectral embedding instead"
        )));
    }
    Ok(())
}

/// Diffusion distance from dense matrix powers:
/// `sqrt(sum_k ((P^t)_ik - (P^t)_jk)^2 / pi_k)`.
pub fn diffusion_distance_exact(chain: &MarkovChain, t: u32, i: usize, j: usize) -> Result<f64> {
    let n = chain.n();
    check_exact_size(n)?;
    if i >= n || j >= n {
        return Err(Error::param(format!("point index out of range for n = {n}")));
    }
    let power = dense_power(chain, t);
    Ok(exact_from_power(&power, chain.stationary(), n, i, j))
}

/// All pairwise exact diffusion distances, row-major `n x n`.
pub fn diffusion_distances_exact(chain: &MarkovChain, t: u32) -> Result<Vec<f64>> {
    let n = chain.n();
    check_exact_size(n)?;
    let power = dense_power(chain, t);
    let pi = chain.stationary();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = exact_from_power(&power, pi, n, i, j);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ImageCube;
    use crate::graph::{build_spatial_affinity, to_markov};
    use crate::sparse::CsrMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn chain(h: usize, w: usize, seed: u64) -> MarkovChain {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cube = ImageCube::new(h, w, 2, (0..h * w * 2).map(|_| rng.random::<f64>()).collect()).unwrap();
        to_markov(build_spatial_affinity(&cube, 1.5, None).unwrap()).unwrap()
    }

    #[test]
    fn single_point_chain() {
        let cube = ImageCube::new(1, 1, 3, vec![0.1, 0.2, 0.3]).unwrap();
        let c = to_markov(build_spatial_affinity(&cube, 1.0, None).unwrap()).unwrap();
        let model = top_eigenpairs(&c, 1, &EigenConfig::default()).unwrap();
        assert!((model.eigenvalues()[0] - 1.0).abs() < 1e-12);
        assert!((model.psi(0, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn leading_eigenvector_is_constant() {
        let c = chain(6, 7, 2);
        let model = top_eigenpairs(&c, 10, &EigenConfig::default()).unwrap();
        assert!((model.eigenvalues()[0] - 1.0).abs() < 1e-10);
        let psi1 = model.eigenvector(0);
        let (lo, hi) = psi1.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        assert!((hi - lo) / hi.abs() < 1e-8);
    }

    #[test]
    fn eigenvector_residuals_under_p() {
        let c = chain(12, 15, 3);
        let model = top_eigenpairs(&c, 12, &EigenConfig::default()).unwrap();
        let p = c.transitions();
        let mut out = vec![0.0; c.n()];
        for k in 0..model.m() {
            let psi = model.eigenvector(k);
            p.matvec(&psi, &mut out);
            let lam = model.eigenvalues()[k];
            let res = out.iter().zip(&psi).map(|(a, b)| (a - lam * b).abs()).fold(0.0, f64::max);
            let scale = psi.iter().map(|v| v.abs()).fold(0.0, f64::max);
            assert!(res < 1e-8 * scale, "k={k}: {res} vs {scale}");
        }
    }

    #[test]
    fn embedding_at_time_zero_is_psi() {
        let c = chain(4, 4, 4);
        let model = top_eigenpairs(&c, 16, &EigenConfig::default()).unwrap();
        let e = model.embed(0);
        for i in 0..16 {
            for k in 0..16 {
                assert_eq!(e.row(i)[k], model.psi(i, k));
            }
        }
    }

    #[test]
    fn column_norms_shrink_with_time() {
        let c = chain(5, 5, 5);
        let model = top_eigenpairs(&c, 25, &EigenConfig::default()).unwrap();
        let mut prev = model.embed(0).column_norms();
        for t in 1..10 {
            let cur = model.embed(t).column_norms();
            for (a, b) in cur.iter().zip(&prev) {
                assert!(*a <= *b * (1.0 + 1e-12));
            }
            prev = cur;
        }
    }

    #[test]
    fn row_distance_is_truncated_spectral_sum() {
        let c = chain(4, 5, 6);
        let model = top_eigenpairs(&c, 8, &EigenConfig::default()).unwrap();
        let t = 3;
        let e = model.embed(t);
        for i in 0..20 {
            for j in 0..20 {
                let direct: f64 = (0..8)
                    .map(|k| {
                        let l = model.eigenvalues()[k];
                        l.powi(2 * t as i32) * (model.psi(i, k) - model.psi(j, k)).powi(2)
                    })
                    .sum::<f64>()
                    .sqrt();
                assert!((e.distance(i, j) - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn exact_distance_basics() {
        let c = chain(3, 4, 7);
        assert_eq!(diffusion_distance_exact(&c, 2, 5, 5).unwrap(), 0.0);
        let a = diffusion_distance_exact(&c, 2, 1, 9).unwrap();
        let b = diffusion_distance_exact(&c, 2, 9, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn exact_distance_rejects_large_inputs() {
        let rows: Vec<Vec<(usize, f64)>> = (0..2001)
            .map(|i| {
                let mut r = vec![(i, 1.0)];
                if i > 0 {
                    r.push((i - 1, 0.5));
                }
                if i < 2000 {
                    r.push((i + 1, 0.5));
                }
                r
            })
            .collect();
        let w = CsrMatrix::from_rows(rows);
        let c = to_markov(crate::graph::SparseAffinity::from_weights(w, 1.0).unwrap()).unwrap();
        assert!(matches!(diffusion_distance_exact(&c, 1, 0, 1), Err(Error::Usage(_))));
    }

    #[test]
    fn spectral_identity_small() {
        let c = chain(4, 6, 8);
        let model = top_eigenpairs(&c, 24, &EigenConfig::default()).unwrap();
        for t in [1u32, 2, 4, 8] {
            let exact = diffusion_distances_exact(&c, t).unwrap();
            let e = model.embed(t);
            for i in 0..24 {
                for j in 0..24 {
                    assert!((exact[i * 24 + j] - e.distance(i, j)).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn truncation_is_monotone_in_m() {
        let c = chain(4, 5, 9);
        let model = top_eigenpairs(&c, 20, &EigenConfig::default()).unwrap();
        let full = model.embed(2);
        let mut prev = vec![0.0; 400];
        for m in 1..=20 {
            for i in 0..20 {
                for j in 0..20 {
                    let d = full.row(i)[..m]
                        .iter()
                        .zip(&full.row(j)[..m])
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    assert!(d + 1e-15 >= prev[i * 20 + j]);
                    assert!(d <= full.distance(i, j) + 1e-15);
                    prev[i * 20 + j] = d;
                }
            }
        }
    }

    #[test]
    fn distances_decay_like_second_eigenvalue() {
        let c = chain(5, 6, 10);
        let model = top_eigenpairs(&c, 30, &EigenConfig::default()).unwrap();
        let l2 = model.eigenvalues()[1].abs();
        let e0 = model.embed(0);
        let base = (0..30)
            .flat_map(|i| (0..30).map(move |j| (i, j)))
            .map(|(i, j)| e0.distance(i, j))
            .fold(0.0, f64::max);
        for t in [5u32, 20, 80, 200] {
            let e = model.embed(t);
            let max_d = (0..30)
                .flat_map(|i| (0..30).map(move |j| (i, j)))
                .map(|(i, j)| e.distance(i, j))
                .fold(0.0, f64::max);
            assert!(max_d <= l2.powi(t as i32) * base * (1.0 + 1e-9), "t={t}");
        }
    }

    #[test]
    fn nearest_rows() {
        let e = Embedding::from_coords(vec![0.0, 0.0, 3.0, 3.0, 0.0, 0.0, 1.0, 1.0], 2, 0).unwrap();
        let nn = dt_nearest(&e, 0, 1).unwrap();
        assert_eq!(nn[0].index, 2);
        assert_eq!(nn[0].sq_dist, 0.0);
        let all: Vec<usize> = dt_nearest(&e, 3, 3).unwrap().iter().map(|n| n.index).collect();
        assert_eq!(all, vec![0, 2, 1]);
        assert!(dt_nearest(&e, 0, 4).is_err());
    }

    #[test]
    fn tree_table_matches_linear_scan() {
        let c = chain(10, 10, 11);
        let model = top_eigenpairs(&c, 10, &EigenConfig::default()).unwrap();
        let e = model.embed(3);
        let table = e.knn_table(12);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let i = rng.random_range(0..100);
            assert_eq!(table.row(i), dt_nearest(&e, i, 12).unwrap().as_slice());
        }
    }

    #[test]
    fn non_integer_time_rejected() {
        assert!(diffusion_time(1.5).is_err());
        assert!(diffusion_time(-1.0).is_err());
        assert_eq!(diffusion_time(30.0).unwrap(), 30);
    }
}
