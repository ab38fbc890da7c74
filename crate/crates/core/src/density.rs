//! Gaussian kernel density estimates over spectral nearest neighbors.

use rayon::prelude::*;

use crate::dataset::ImageCube;
use crate::error::{Error, Result};
use crate::knn::{KdTree, NeighborTable};

pub const DEFAULT_KDE_NEIGHBORS: usize = 100;

/// Normalized empirical density of every point.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityProfile {
    values: Vec<f64>,
    bandwidth: f64,
    k: usize,
}

impl DensityProfile {
    /// Builds a profile from raw (unnormalized, positive) scores; for tests and tools.
    pub fn from_unnormalized(raw: Vec<f64>, bandwidth: f64, k: usize) -> Result<Self> {
        normalize(raw).map(|values| DensityProfile { values, bandwidth, k })
    }

    /// `p(x_i)`, summing to 1.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Point indices by decreasing density, ties to the lower index.
    pub fn descending_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.values.len()).collect();
        order.sort_by(|&a, &b| self.values[b].total_cmp(&self.values[a]).then(a.cmp(&b)));
        order
    }

    /// The density maximizer, lowest index on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best
    }
}

/// Exact spectral `k`-nearest neighbors of every point, self excluded.
pub fn spectral_knn(cube: &ImageCube, k: usize) -> Result<NeighborTable> {
    let n = cube.len();
    if k == 0 || k >= n {
        return Err(Error::param(format!("KDE neighbor count must be in [1, {n}), got {k}")));
    }
    Ok(KdTree::new(cube.values(), cube.bands()).all_knn(k))
}

/// Half the mean distance from each point to its tabulated neighbors.
pub fn adaptive_bandwidth(table: &NeighborTable) -> Result<f64> {
    if table.is_empty() {
        return Err(Error::param("neighbor table is empty"));
    }
    let total: f64 = table
        .iter()
        .map(|row| row.iter().map(|nb| nb.dist()).sum::<f64>())
        .sum();
    let count = (table.len() * table.k()) as f64;
    let sigma = 0.5 * total / count;
    if !(sigma > 0.0) {
        return Err(Error::param(
            "every point coincides with its neighbors, so the KDE bandwidth is 0; inject noise first",
        ));
    }
    Ok(sigma)
}

fn normalize(raw: Vec<f64>) -> Result<Vec<f64>> {
    if let Some(i) = raw.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("non-finite density at point {i}")));
    }
    // Fixed-order compensated sum keeps the normalization schedule independent.
    let mut sum = 0.0;
    let mut c = 0.0;
    for &v in &raw {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    if !(sum > 0.0) {
        return Err(Error::Numerical("density estimate vanishes everywhere".into()));
    }
    let values: Vec<f64> = raw.into_iter().map(|v| v / sum).collect();
    if let Some(i) = values.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::Numerical(format!(
            "density underflowed to zero at point {i}; the bandwidth is too small for this data"
        )));
    }
    Ok(values)
}

/// Gaussian KDE restricted to each point's neighbor list, normalized to sum to 1.
pub fn kde(table: &NeighborTable, bandwidth: f64) -> Result<DensityProfile> {
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(Error::param(format!("KDE bandwidth must be > 0, got {bandwidth}")));
    }
    let s2 = bandwidth * bandwidth;
    let raw: Vec<f64> = (0..table.len())
        .into_par_iter()
        .map(|i| table.row(i).iter().map(|nb| (-nb.sq_dist / s2).exp()).sum())
        .collect();
    DensityProfile::from_unnormalized(raw, bandwidth, table.k())
}

/// Neighbor search, adaptive bandwidth and KDE in one step.
/// `k` is clamped to `n - 1`.
pub fn estimate_density(cube: &ImageCube, k: usize) -> Result<DensityProfile> {
    let n = cube.len();
    if n < 2 {
        return Err(Error::param("density estimation needs at least two points"));
    }
    let k = k.clamp(1, n - 1);
    let table = spectral_knn(cube, k)?;
    let bandwidth = adaptive_bandwidth(&table)?;
    kde(&table, bandwidth)
}
