//! Weighted affinity graphs over the pixels and their random-walk normalization.
//!
//! Two graph constructions are provided. The spatially regularized graph links
//! pixels whose grid positions lie within a Euclidean radius `r`; the spectral
//! graph links each point to its `k` nearest spectra. Both use the Gaussian
//! kernel `exp(-|x_i - x_j|^2 / sigma^2)` and keep a unit self-loop on every
//! vertex, which makes the walk aperiodic.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{squared_distance, Grid, ImageCube};
use crate::error::{Error, Result};
use crate::knn::KdTree;
use crate::sparse::CsrMatrix;

/// How the affinity graph was built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GraphMode {
    /// Pixels within Euclidean grid distance `radius`.
    Spatial { radius: f64 },
    /// Symmetrized union of spectral `k`-nearest neighbors.
    SpectralKnn { k: usize },
    /// Weights supplied directly by the caller.
    Explicit,
}

/// Symmetric Gaussian affinity matrix.
#[derive(Debug, Clone)]
pub struct SparseAffinity {
    weights: CsrMatrix,
    mode: GraphMode,
    sigma: f64,
}

impl SparseAffinity {
    pub fn weights(&self) -> &CsrMatrix {
        &self.weights
    }

    pub fn mode(&self) -> GraphMode {
        self.mode
    }

    /// Kernel bandwidth actually used.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn n(&self) -> usize {
        self.weights.n()
    }

    /// Builds an affinity from explicit weights; used for hand-made test graphs.
    pub fn from_weights(weights: CsrMatrix, sigma: f64) -> Result<Self> {
        if !weights.is_symmetric() {
            return Err(Error::param("affinity weights must be exactly symmetric"));
        }
        if weights.values().iter().any(|&w| !(w > 0.0 && w <= 1.0)) {
            return Err(Error::param("affinity weights must lie in (0, 1]"));
        }
        Ok(SparseAffinity {
            weights,
            mode: GraphMode::Explicit,
            sigma,
        })
    }
}

/// Grid offsets `(dr, dc)` with `dr^2 + dc^2 <= r^2`, in row-major order.
fn ball_offsets(r: f64) -> Vec<(isize, isize)> {
    let reach = r.floor() as isize;
    let r2 = r * r;
    let mut out = Vec::new();
    for dr in -reach..=reach {
        for dc in -reach..=reach {
            if ((dr * dr + dc * dc) as f64) <= r2 {
                out.push((dr, dc));
            }
        }
    }
    out
}

fn check_radius(r: f64) -> Result<()> {
    if !(r >= 1.0) || !r.is_finite() {
        return Err(Error::param(format!("spatial radius must be >= 1, got {r}")));
    }
    Ok(())
}

fn ball_with_offsets(grid: Grid, i: usize, offsets: &[(isize, isize)]) -> impl Iterator<Item = usize> + '_ {
    let (row, col) = grid.coord(i);
    let (h, w) = (grid.height as isize, grid.width as isize);
    offsets.iter().filter_map(move |&(dr, dc)| {
        let (rr, cc) = (row as isize + dr, col as isize + dc);
        (rr >= 0 && rr < h && cc >= 0 && cc < w).then(|| grid.index(rr as usize, cc as usize))
    })
}

/// Pixels within Euclidean grid distance `r` of pixel `i`, including `i`, ascending.
pub fn spatial_ball(grid: Grid, i: usize, r: f64) -> Result<Vec<usize>> {
    check_radius(r)?;
    if i >= grid.len() {
        return Err(Error::param(format!("pixel {i} outside a {}-pixel grid", grid.len())));
    }
    let offsets = ball_offsets(r);
    Ok(ball_with_offsets(grid, i, &offsets).collect())
}

/// Reusable spatial neighborhood enumerator for a fixed grid and radius.
#[derive(Debug, Clone)]
pub struct SpatialBall {
    grid: Grid,
    radius: f64,
    offsets: Vec<(isize, isize)>,
}

impl SpatialBall {
    pub fn new(grid: Grid, radius: f64) -> Result<Self> {
        check_radius(radius)?;
        Ok(SpatialBall {
            grid,
            radius,
            offsets: ball_offsets(radius),
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        ball_with_offsets(self.grid, i, &self.offsets)
    }
}

/// Smallest stored edge weight. It sits well above the subnormal range, so
/// weights stay normal after degree normalization; subnormal operands slow
/// every sparse product by an order of magnitude.
pub const WEIGHT_FLOOR: f64 = 1e-280;

/// Turns per-row squared distances into Gaussian weights.
///
/// Without an explicit `sigma`, the bandwidth is the mean Euclidean length of
/// the off-diagonal edges. Tiny weights are clamped to [`WEIGHT_FLOOR`] so the
/// edge set never changes.
fn kernelize(rows: Vec<Vec<(usize, f64)>>, sigma: Option<f64>) -> Result<(CsrMatrix, f64)> {
    let sigma = match sigma {
        Some(s) => {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::param(format!("sigma must be > 0, got {s}")));
            }
            s
        }
        None => {
            let (sum, count) = rows
                .iter()
                .enumerate()
                .map(|(i, row)| {
                    row.iter()
                        .filter(|&&(j, _)| j != i)
                        .fold((0.0, 0usize), |(s, c), &(_, d2)| (s + d2.sqrt(), c + 1))
                })
                .fold((0.0, 0usize), |(s, c), (rs, rc)| (s + rs, c + rc));
            if count == 0 {
                1.0
            } else {
                let mean = sum / count as f64;
                if !(mean > 0.0) {
                    return Err(Error::param(
                        "all graph edges join identical spectra, so the kernel bandwidth is 0; \
                         inject noise or pass an explicit sigma",
                    ));
                }
                mean
            }
        }
    };
    let s2 = sigma * sigma;
    let rows = rows
        .into_par_iter()
        .map(|row| {
            row.into_iter()
                .map(|(j, d2)| (j, (-d2 / s2).exp().max(WEIGHT_FLOOR)))
                .collect()
        })
        .collect();
    Ok((CsrMatrix::from_rows(rows), sigma))
}

/// Spatially regularized affinity: edges between pixels within grid radius `r`.
pub fn build_spatial_affinity(cube: &ImageCube, r: f64, sigma: Option<f64>) -> Result<SparseAffinity> {
    let ball = SpatialBall::new(cube.grid(), r)?;
    let rows: Vec<Vec<(usize, f64)>> = (0..cube.len())
        .into_par_iter()
        .map(|i| {
            let xi = cube.point(i);
            ball.neighbors(i)
                .map(|j| (j, squared_distance(xi, cube.point(j))))
                .collect()
        })
        .collect();
    let (weights, sigma) = kernelize(rows, sigma)?;
    Ok(SparseAffinity {
        weights,
        mode: GraphMode::Spatial { radius: r },
        sigma,
    })
}

/// Default spectral neighbor count, `ceil(log2 n)`.
pub fn default_graph_k(n: usize) -> usize {
    (n.max(2) as f64).log2().ceil() as usize
}

/// Spectral k-NN affinity: `i ~ j` when either is among the other's `k` nearest spectra.
pub fn build_spectral_affinity(cube: &ImageCube, k: usize, sigma: Option<f64>) -> Result<SparseAffinity> {
    let n = cube.len();
    if k == 0 || k >= n {
        return Err(Error::param(format!("graph neighbor count must be in [1, {}), got {k}", n)));
    }
    let tree = KdTree::new(cube.values(), cube.bands());
    let table = tree.all_knn(k);
    let mut adjacency: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    for i in 0..n {
        for nb in table.row(i) {
            adjacency[i].push(nb.index);
            adjacency[nb.index].push(i);
        }
    }
    let rows: Vec<Vec<(usize, f64)>> = adjacency
        .into_par_iter()
        .enumerate()
        .map(|(i, mut cols)| {
            cols.sort_unstable();
            cols.dedup();
            let xi = cube.point(i);
            cols.into_iter()
                .map(|j| (j, squared_distance(xi, cube.point(j))))
                .collect()
        })
        .collect();
    let (weights, sigma) = kernelize(rows, sigma)?;
    Ok(SparseAffinity {
        weights,
        mode: GraphMode::SpectralKnn { k },
        sigma,
    })
}

/// Row-stochastic random walk `P = D^{-1} W` with its stationary distribution.
#[derive(Debug, Clone)]
pub struct MarkovChain {
    affinity: SparseAffinity,
    transitions: CsrMatrix,
    degrees: Vec<f64>,
    stationary: Vec<f64>,
}

impl MarkovChain {
    pub fn n(&self) -> usize {
        self.degrees.len()
    }

    pub fn affinity(&self) -> &SparseAffinity {
        &self.affinity
    }

    /// `P`, with the same sparsity pattern as `W`.
    pub fn transitions(&self) -> &CsrMatrix {
        &self.transitions
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    /// `pi_i = d_i / sum_j d_j`.
    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    /// The symmetric conjugate `S = D^{-1/2} W D^{-1/2}`, sharing `W`'s pattern.
    pub fn symmetric(&self) -> CsrMatrix {
        let w = self.affinity.weights();
        let inv_sqrt: Vec<f64> = self.degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
        let mut values = Vec::with_capacity(w.nnz());
        for i in 0..w.n() {
            let (cols, vals) = w.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                // Scale by the product so S_ij and S_ji round identically.
                values.push(v * (inv_sqrt[i] * inv_sqrt[j]));
            }
        }
        w.with_values(values)
    }
}

/// Normalizes an affinity into a Markov chain after checking connectivity.
pub fn to_markov(affinity: SparseAffinity) -> Result<MarkovChain> {
    let w = affinity.weights();
    let n = w.n();
    if n == 0 {
        return Err(Error::param("graph has no vertices"));
    }
    let degrees: Vec<f64> = (0..n).map(|i| w.row_sum(i)).collect();
    if let Some(i) = degrees.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::Connectivity(format!("vertex {i} has zero degree")));
    }
    if n > 1 {
        if let Some(i) = (0..n).find(|&i| w.row(i).0.iter().all(|&j| j == i)) {
            return Err(Error::Connectivity(format!("vertex {i} is isolated")));
        }
        let components = count_components(w);
        if components > 1 {
            return Err(Error::Connectivity(format!(
                "graph has {components} connected components; the random walk needs one"
            )));
        }
    }
    let total: f64 = degrees.iter().sum();
    let stationary = degrees.iter().map(|d| d / total).collect();
    let mut values = Vec::with_capacity(w.nnz());
    for (i, &d) in degrees.iter().enumerate() {
        values.extend(w.row(i).1.iter().map(|v| v / d));
    }
    let transitions = w.with_values(values);
    Ok(MarkovChain {
        affinity,
        transitions,
        degrees,
        stationary,
    })
}

fn count_components(w: &CsrMatrix) -> usize {
    let n = w.n();
    let mut seen = vec![false; n];
    let mut components = 0;
    let mut queue = VecDeque::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        components += 1;
        seen[start] = true;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            for &j in w.row(i).0 {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    components
}
