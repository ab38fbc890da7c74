//! Cluster modes: points that are dense and far in diffusion distance from any
//! denser point.

use rayon::prelude::*;

use crate::density::DensityProfile;
use crate::error::{Error, Result};
use crate::knn::NeighborTable;
use crate::spectral::Embedding;

/// Diffusion neighbors scanned for a denser point before falling back to a full
/// scan: `4 * ceil(log2 n)`, at most `n - 1`.
pub fn default_search_width(n: usize) -> usize {
    let log = (n.max(2) as f64).log2().ceil() as usize;
    (4 * log).min(n.saturating_sub(1)).max(1)
}

/// Distance to the nearest denser point, before and after normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct RhoProfile {
    /// Unnormalized values.
    pub raw: Vec<f64>,
    /// `raw / max(raw)`; exactly 1 at the density maximizer.
    pub rho: Vec<f64>,
    /// Points whose neighbor list held no denser point.
    pub fallbacks: usize,
}

/// `rho` for every point, using a precomputed diffusion neighbor table.
///
/// For the density maximizer the raw value is its largest diffusion distance to
/// any point. For every other point it is the distance to the nearest point
/// `x != x_i` with `p(x) >= p(x_i)`. The table rows are exact nearest-neighbor
/// lists, so the first qualifying entry is the true minimizer; rows without one
/// trigger an exhaustive scan.
pub fn compute_rho_with(embedding: &Embedding, density: &DensityProfile, table: &NeighborTable) -> Result<RhoProfile> {
    let n = embedding.n();
    if density.len() != n || (n > 1 && table.len() != n) {
        return Err(Error::Shape(format!(
            "embedding has {n} points, density {}, neighbor table {}",
            density.len(),
            table.len()
        )));
    }
    let p = density.values();
    let top = density.argmax();

    let results: Vec<(f64, bool)> = (0..n)
        .into_par_iter()
        .map(|i| {
            if i == top {
                let far = (0..n).map(|j| embedding.sq_distance(i, j)).fold(0.0, f64::max);
                return (far.sqrt(), false);
            }
            if let Some(nb) = table.row(i).iter().find(|nb| p[nb.index] >= p[i]) {
                return (nb.dist(), false);
            }
            let best = (0..n)
                .filter(|&j| j != i && p[j] >= p[i])
                .map(|j| embedding.sq_distance(i, j))
                .fold(f64::INFINITY, f64::min);
            (best.sqrt(), true)
        })
        .collect();

    let raw: Vec<f64> = results.iter().map(|r| r.0).collect();
    let fallbacks = results.iter().filter(|r| r.1).count();
    let max = raw[top];
    let rho = if max > 0.0 {
        raw.iter().map(|r| r / max).collect()
    } else {
        // Every point coincides in diffusion space; only the maximizer stands out.
        (0..n).map(|i| if i == top { 1.0 } else { 0.0 }).collect()
    };
    Ok(RhoProfile { raw, rho, fallbacks })
}

/// `rho` with the default neighbor search width.
pub fn compute_rho(embedding: &Embedding, density: &DensityProfile) -> Result<RhoProfile> {
    let n = embedding.n();
    let table = embedding.knn_table(default_search_width(n));
    compute_rho_with(embedding, density, &table)
}

/// Modes ranked by `score = p * rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSet {
    modes: Vec<usize>,
    density: Vec<f64>,
    rho: Vec<f64>,
    score: Vec<f64>,
    fallbacks: usize,
}

impl ModeSet {
    /// Mode indices, best first.
    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    /// `p * rho` for every point.
    pub fn score(&self) -> &[f64] {
        &self.score
    }

    /// How many points needed the exhaustive scan when computing `rho`.
    pub fn fallbacks(&self) -> usize {
        self.fallbacks
    }
}

/// The `count` largest values of `score`, descending, ties to the lower index.
pub fn top_indices(score: &[f64], count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..score.len()).collect();
    let cmp = |a: &usize, b: &usize| score[*b].total_cmp(&score[*a]).then(a.cmp(b));
    if count < order.len() {
        order.select_nth_unstable_by(count, cmp);
        order.truncate(count);
    }
    order.sort_by(cmp);
    order
}

/// The `count` maximizers of `p * rho`.
pub fn detect_modes(density: &DensityProfile, rho: &RhoProfile, count: usize) -> Result<ModeSet> {
    let n = density.len();
    if count == 0 || count > n {
        return Err(Error::param(format!("mode count must be in [1, {n}], got {count}")));
    }
    if rho.rho.len() != n {
        return Err(Error::Shape("rho and density lengths differ".into()));
    }
    let score: Vec<f64> = density.values().iter().zip(&rho.rho).map(|(p, r)| p * r).collect();
    Ok(ModeSet {
        modes: top_indices(&score, count),
        density: density.values().to_vec(),
        rho: rho.rho.clone(),
        score,
        fallbacks: rho.fallbacks,
    })
}
