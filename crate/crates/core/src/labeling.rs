//! Two-stage label propagation in decreasing density order, with spatial
//! consensus vetoes.
//!
//! "Higher density" means earlier in the density order (density descending,
//! lower index first), so ties never leave a point without a predecessor.

use serde::{Deserialize, Serialize};

use crate::density::DensityProfile;
use crate::error::{Error, Result};
use crate::graph::SpatialBall;
use crate::knn::NeighborTable;
use crate::sampling::LabeledSet;
use crate::spectral::Embedding;

/// Which rule fixed a point's label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    #[serde(rename = "seed")]
    Seed,
    #[serde(rename = "stage1")]
    Stage1,
    #[serde(rename = "stage2-consensus")]
    Consensus,
    #[serde(rename = "stage2-nn")]
    NearestHigher,
    #[serde(rename = "stage2-global")]
    Global,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Seed => "seed",
            Provenance::Stage1 => "stage1",
            Provenance::Consensus => "stage2-consensus",
            Provenance::NearestHigher => "stage2-nn",
            Provenance::Global => "stage2-global",
        }
    }
}

/// Final label of every point.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    labels: Vec<u32>,
    provenance: Vec<Provenance>,
    deferred: usize,
}

impl LabelMap {
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    /// Points stage 1 left for stage 2.
    pub fn deferred(&self) -> usize {
        self.deferred
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of points decided by each rule, in `Provenance` declaration order.
    pub fn provenance_counts(&self) -> [(Provenance, usize); 5] {
        let kinds = [
            Provenance::Seed,
            Provenance::Stage1,
            Provenance::Consensus,
            Provenance::NearestHigher,
            Provenance::Global,
        ];
        kinds.map(|k| (k, self.provenance.iter().filter(|&&p| p == k).count()))
    }
}

/// Spatial consensus settings.
#[derive(Debug, Clone)]
pub enum Consensus {
    /// Plain density-ordered propagation with no spatial veto.
    Off,
    /// A label wins when it holds more than `threshold` of the labeled points
    /// in the ball around a pixel.
    Ball { ball: SpatialBall, threshold: f64 },
}

pub const DEFAULT_CONSENSUS_THRESHOLD: f64 = 0.5;

impl Consensus {
    pub fn ball(ball: SpatialBall, threshold: f64) -> Result<Self> {
        if !(0.5..1.0).contains(&threshold) {
            return Err(Error::param(format!(
                "consensus threshold must be in [0.5, 1), got {threshold}"
            )));
        }
        Ok(Consensus::Ball { ball, threshold })
    }
}

/// The label held by more than `threshold` of the labeled points in the ball
/// around `i` (excluding `i`), if any.
pub fn consensus_label(labels: &[u32], ball: &SpatialBall, i: usize, threshold: f64) -> Option<u32> {
    let mut counts: Vec<(u32, usize)> = Vec::new();
    let mut total = 0usize;
    for j in ball.neighbors(i) {
        let l = labels[j];
        if j == i || l == 0 {
            continue;
        }
        total += 1;
        match counts.iter_mut().find(|c| c.0 == l) {
            Some(c) => c.1 += 1,
            None => counts.push((l, 1)),
        }
    }
    let best = counts.iter().max_by_key(|c| c.1)?;
    (best.1 as f64 > threshold * total as f64).then_some(best.0)
}

struct Propagation<'a> {
    embedding: &'a Embedding,
    candidates: &'a NeighborTable,
    rank: Vec<usize>,
    labels: Vec<u32>,
}

impl Propagation<'_> {
    /// Nearest labeled point earlier in the density order. `pool` holds every
    /// labeled point that could qualify.
    fn nearest_labeled_higher(&self, i: usize, pool: &[usize]) -> Option<usize> {
        let ri = self.rank[i];
        let qualifies = |j: usize| self.rank[j] < ri && self.labels[j] > 0;
        if self.candidates.len() == self.labels.len() {
            if let Some(nb) = self.candidates.row(i).iter().find(|nb| qualifies(nb.index)) {
                return Some(nb.index);
            }
        }
        self.nearest_in(i, pool.iter().copied().filter(|&j| qualifies(j)))
    }

    fn nearest_in(&self, i: usize, pool: impl Iterator<Item = usize>) -> Option<usize> {
        pool.map(|j| (self.embedding.sq_distance(i, j), j))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(_, j)| j)
    }
}

/// Propagates `seeds` to every point.
///
/// Stage 1 visits unlabeled points by decreasing density and copies the label
/// of the nearest (in diffusion distance) already-labeled denser point, unless
/// there is none or the spatial consensus disagrees; such points are deferred.
/// Stage 2 visits deferred points in the same order and takes the consensus
/// label, else the nearest labeled denser point, else the nearest labeled
/// point overall. `candidates` lists each point's diffusion nearest neighbors
/// in increasing distance and is only a shortcut; pass an empty table to
/// always scan.
pub fn two_stage_label_with(
    seeds: &LabeledSet,
    density: &DensityProfile,
    embedding: &Embedding,
    consensus: &Consensus,
    candidates: &NeighborTable,
) -> Result<LabelMap> {
    let n = density.len();
    if seeds.is_empty() {
        return Err(Error::param("labeling needs at least one seed"));
    }
    if embedding.n() != n {
        return Err(Error::Shape(format!(
            "density has {n} points, embedding {}",
            embedding.n()
        )));
    }
    if let Consensus::Ball { ball, .. } = consensus {
        if ball.grid().len() != n {
            return Err(Error::Shape(format!("grid has {} pixels, data {n}", ball.grid().len())));
        }
    }
    let order = density.descending_order();
    let mut rank = vec![0; n];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    let mut labels = vec![0u32; n];
    let mut provenance = vec![Provenance::Seed; n];
    for q in seeds.points() {
        if q.index >= n {
            return Err(Error::param(format!("seed index {} out of range", q.index)));
        }
        labels[q.index] = q.label;
    }
    let vote = |labels: &[u32], i: usize| match consensus {
        Consensus::Off => None,
        Consensus::Ball { ball, threshold } => consensus_label(labels, ball, i, *threshold),
    };

    let mut prop = Propagation { embedding, candidates, rank, labels };
    // Labeled points in density order, for exhaustive fallbacks.
    let mut pool: Vec<usize> = Vec::new();
    let mut deferred = Vec::new();
    for &i in &order {
        if prop.labels[i] > 0 {
            pool.push(i);
            continue;
        }
        let Some(j) = prop.nearest_labeled_higher(i, &pool) else {
            deferred.push(i);
            continue;
        };
        let purported = prop.labels[j];
        match vote(&prop.labels, i) {
            Some(c) if c != purported => deferred.push(i),
            _ => {
                prop.labels[i] = purported;
                provenance[i] = Provenance::Stage1;
                pool.push(i);
            }
        }
    }

    let stage1_deferred = deferred.len();
    for &i in &deferred {
        if let Some(c) = vote(&prop.labels, i) {
            prop.labels[i] = c;
            provenance[i] = Provenance::Consensus;
        } else if let Some(j) = prop.nearest_labeled_higher(i, &pool) {
            prop.labels[i] = prop.labels[j];
            provenance[i] = Provenance::NearestHigher;
        } else {
            let j = prop.nearest_in(i, pool.iter().copied()).expect("seed set is nonempty");
            prop.labels[i] = prop.labels[j];
            provenance[i] = Provenance::Global;
        }
        pool.push(i);
    }

    Ok(LabelMap { labels: prop.labels, provenance, deferred: stage1_deferred })
}

/// `two_stage_label_with` using exhaustive nearest-neighbor scans.
pub fn two_stage_label(
    seeds: &LabeledSet,
    density: &DensityProfile,
    embedding: &Embedding,
    consensus: &Consensus,
) -> Result<LabelMap> {
    two_stage_label_with(seeds, density, embedding, consensus, &NeighborTable::from_rows(0, Vec::new()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ball(h: usize, w: usize, r: f64) -> SpatialBall {
        SpatialBall::new(Grid::new(h, w), r).unwrap()
    }

    #[test]
    fn consensus_rules() {
        let b = ball(1, 5, 2.0);
        // Neighbors of pixel 2 are 0, 1, 3, 4.
        assert_eq!(consensus_label(&[1, 1, 9, 2, 0], &b, 2, 0.5), Some(1));
        assert_eq!(consensus_label(&[1, 2, 9, 0, 0], &b, 2, 0.5), None);
        assert_eq!(consensus_label(&[0, 0, 9, 0, 0], &b, 2, 0.5), None);
        // The center's own label never votes.
        assert_eq!(consensus_label(&[1, 2, 2, 0, 0], &b, 2, 0.5), None);
        assert_eq!(consensus_label(&[1, 1, 0, 2, 0], &b, 2, 0.7), None);
        assert!(Consensus::ball(b.clone(), 0.4).is_err());
        assert!(Consensus::ball(b, 1.0).is_err());
    }

    struct Case {
        embedding: Embedding,
        density: DensityProfile,
        h: usize,
        w: usize,
    }

    fn random_case(h: usize, w: usize, seed: u64) -> Case {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = h * w;
        Case {
            embedding: Embedding::from_coords((0..n * 3).map(|_| rng.random()).collect(), 3, 1).unwrap(),
            density: DensityProfile::from_unnormalized((0..n).map(|_| rng.random::<f64>() + 0.05).collect(), 1.0, 1)
                .unwrap(),
            h,
            w,
        }
    }

    fn random_seeds(n: usize, count: usize, classes: u32, seed: u64) -> LabeledSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let idx = rand::seq::index::sample(&mut rng, n, count);
        LabeledSet::new(idx.into_iter().map(|i| (i, rng.random_range(1..=classes))).collect()).unwrap()
    }

    #[test]
    fn single_seed_labels_everything() {
        let c = random_case(6, 7, 1);
        let seeds = LabeledSet::new(vec![(17, 4)]).unwrap();
        let cons = Consensus::ball(ball(6, 7, 2.0), 0.5).unwrap();
        let map = two_stage_label(&seeds, &c.density, &c.embedding, &cons).unwrap();
        assert!(map.labels().iter().all(|&l| l == 4));
    }

    #[test]
    fn complete_faithful_and_deterministic() {
        for s in 0..100 {
            let c = random_case(8, 9, s);
            let n = c.h * c.w;
            let seeds = random_seeds(n, 1 + (s as usize % 6), 3, s + 1000);
            let cons = Consensus::ball(ball(c.h, c.w, 1.5 + (s % 3) as f64), 0.5).unwrap();
            let a = two_stage_label(&seeds, &c.density, &c.embedding, &cons).unwrap();
            assert!(a.labels().iter().all(|&l| l > 0));
            for q in seeds.points() {
                assert_eq!(a.labels()[q.index], q.label);
                assert_eq!(a.provenance()[q.index], Provenance::Seed);
            }
            let b = two_stage_label(&seeds, &c.density, &c.embedding, &cons).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn neighbor_shortcut_matches_exhaustive_scan() {
        for s in 0..30 {
            let c = random_case(10, 10, 50 + s);
            let seeds = random_seeds(100, 5, 3, s);
            let cons = Consensus::ball(ball(10, 10, 2.0), 0.5).unwrap();
            let table = c.embedding.knn_table(6);
            let fast = two_stage_label_with(&seeds, &c.density, &c.embedding, &cons, &table).unwrap();
            let slow = two_stage_label(&seeds, &c.density, &c.embedding, &cons).unwrap();
            assert_eq!(fast, slow);
        }
    }

    #[test]
    fn without_consensus_labels_follow_nearest_denser_point() {
        // 1-D line, density decreasing left to right; seeds at both ends of the dense part.
        let e = Embedding::from_coords(vec![0.0, 1.0, 2.0, 10.0, 11.0, 12.0], 1, 0).unwrap();
        let p = DensityProfile::from_unnormalized(vec![6.0, 5.0, 4.0, 3.5, 2.0, 1.0], 1.0, 1).unwrap();
        let seeds = LabeledSet::new(vec![(0, 1), (3, 2)]).unwrap();
        let map = two_stage_label(&seeds, &p, &e, &Consensus::Off).unwrap();
        assert_eq!(map.labels(), &[1, 1, 1, 2, 2, 2]);
        assert_eq!(map.deferred(), 0);
    }

    #[test]
    fn densest_unlabeled_point_falls_back_to_global_nearest() {
        let e = Embedding::from_coords(vec![0.0, 1.0, 5.0], 1, 0).unwrap();
        let p = DensityProfile::from_unnormalized(vec![3.0, 2.0, 1.0], 1.0, 1).unwrap();
        let seeds = LabeledSet::new(vec![(2, 7)]).unwrap();
        let map = two_stage_label(&seeds, &p, &e, &Consensus::Off).unwrap();
        assert_eq!(map.labels(), &[7, 7, 7]);
        assert_eq!(map.deferred(), 2);
        assert_eq!(map.provenance()[0], Provenance::Global);
        // Point 1 now has a labeled denser point (0) and takes the stage-2 rule.
        assert_eq!(map.provenance()[1], Provenance::NearestHigher);
    }

    #[test]
    fn conflicting_consensus_defers_then_wins() {
        // 1 x 4 strip; diffusion geometry says pixel 2 belongs with pixel 0,
        // but its spatial neighbors say label 2.
        let e = Embedding::from_coords(vec![0.0, 10.0, 0.1, 10.1], 1, 0).unwrap();
        let p = DensityProfile::from_unnormalized(vec![4.0, 3.0, 2.0, 1.0], 1.0, 1).unwrap();
        let seeds = LabeledSet::new(vec![(0, 1), (1, 2), (3, 2)]).unwrap();
        let cons = Consensus::ball(ball(1, 4, 1.0), 0.5).unwrap();
        let map = two_stage_label(&seeds, &p, &e, &cons).unwrap();
        assert_eq!(map.labels()[2], 2);
        assert_eq!(map.provenance()[2], Provenance::Consensus);
        assert_eq!(map.deferred(), 1);
        // Seeds keep their labels even against their neighbors.
        assert_eq!(map.labels()[0], 1);
    }

    #[test]
    fn uniform_seed_labels_give_constant_output() {
        for s in 0..20 {
            let c = random_case(7, 7, 300 + s);
            let seeds = LabeledSet::new(
                random_seeds(49, 4, 1, s).points().iter().map(|q| (q.index, 3)).collect(),
            )
            .unwrap();
            let cons = Consensus::ball(ball(7, 7, 1.5), 0.5).unwrap();
            let map = two_stage_label(&seeds, &c.density, &c.embedding, &cons).unwrap();
            assert!(map.labels().iter().all(|&l| l == 3));
        }
    }

    #[test]
    fn rejects_empty_seeds() {
        let c = random_case(2, 2, 0);
        let empty = LabeledSet::new(Vec::new()).unwrap();
        assert!(two_stage_label(&empty, &c.density, &c.embedding, &Consensus::Off).is_err());
    }
}
