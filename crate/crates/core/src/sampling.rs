//! Training-set selection: cluster cores, mode boundaries, or uniform draws.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{Grid, GroundTruth};
use crate::error::{Error, Result};
use crate::modes::ModeSet;
use crate::spectral::Embedding;

/// One answered query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Query {
    pub index: usize,
    pub label: u32,
}

/// Label source backed by ground truth. Pixels with label 0 cannot be answered.
#[derive(Debug, Clone)]
pub struct Oracle<'a> {
    truth: &'a GroundTruth,
    log: Vec<Query>,
}

impl<'a> Oracle<'a> {
    pub fn new(truth: &'a GroundTruth) -> Self {
        Oracle { truth, log: Vec::new() }
    }

    pub fn answerable(&self, i: usize) -> bool {
        self.truth.label(i) > 0
    }

    /// Answers and logs a query, or returns `None` without logging.
    pub fn query(&mut self, i: usize) -> Option<u32> {
        let label = self.truth.label(i);
        if label == 0 {
            log::debug!("skipping query at unlabeled pixel {i}");
            return None;
        }
        self.log.push(Query { index: i, label });
        Some(label)
    }

    pub fn log(&self) -> &[Query] {
        &self.log
    }

    pub fn truth(&self) -> &GroundTruth {
        self.truth
    }

    /// Writes the query log as `index,row,col,label,order`.
    pub fn write_log_csv(&self, path: &Path) -> Result<()> {
        write_query_csv(path, self.truth.grid(), &self.log)
    }
}

pub fn write_query_csv(path: &Path, grid: Grid, queries: &[Query]) -> Result<()> {
    let mut w = csv_file(path)?;
    w.write_record(["index", "row", "col", "label", "order"]).map_err(csv_error)?;
    for (order, q) in queries.iter().enumerate() {
        let (row, col) = grid.coord(q.index);
        w.serialize((q.index, row, col, q.label, order)).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_file(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::at_path(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}

/// Oracle-labeled training points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabeledSet {
    points: Vec<Query>,
    requested: usize,
    /// Ground-truth classes still unlabeled after coverage augmentation gave up.
    missing_classes: Vec<u32>,
}

impl LabeledSet {
    /// Builds a set from explicit pairs; indices must be distinct and labels positive.
    pub fn new(points: Vec<(usize, u32)>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for &(i, label) in &points {
            if label == 0 {
                return Err(Error::param(format!("seed at point {i} has label 0")));
            }
            if !seen.insert(i) {
                return Err(Error::param(format!("point {i} is labeled twice")));
            }
        }
        let requested = points.len();
        Ok(LabeledSet {
            points: points.into_iter().map(|(index, label)| Query { index, label }).collect(),
            requested,
            missing_classes: Vec::new(),
        })
    }

    pub fn points(&self) -> &[Query] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Budget asked for; `len()` is the budget used.
    pub fn requested(&self) -> usize {
        self.requested
    }

    pub fn missing_classes(&self) -> &[u32] {
        &self.missing_classes
    }

    pub fn coverage_warning(&self) -> Option<String> {
        if self.missing_classes.is_empty() {
            None
        } else {
            Some(format!(
                "mode ranking exhausted with classes {:?} unlabeled ({} queries used)",
                self.missing_classes,
                self.points.len()
            ))
        }
    }
}

fn check_budget(budget: usize) -> Result<()> {
    if budget == 0 {
        return Err(Error::param("query budget must be at least 1"));
    }
    Ok(())
}

/// Queries the first `budget` answerable points of `ranking`.
fn query_ranked(ranking: impl IntoIterator<Item = usize>, budget: usize, oracle: &mut Oracle) -> Result<Vec<Query>> {
    let mut out = Vec::with_capacity(budget);
    for i in ranking {
        if out.len() == budget {
            break;
        }
        if let Some(label) = oracle.query(i) {
            out.push(Query { index: i, label });
        }
    }
    if out.len() < budget {
        return Err(Error::param(format!(
            "only {} answerable candidates for a budget of {budget}",
            out.len()
        )));
    }
    Ok(out)
}

/// How many of the ranked modes the oracle can answer.
pub fn answerable_modes(modes: &ModeSet, oracle: &Oracle) -> usize {
    modes.modes().iter().filter(|&&i| oracle.answerable(i)).count()
}

/// Queries the top `budget` answerable modes. With `ensure_coverage`, keeps
/// walking the mode ranking until every ground-truth class has a label or the
/// ranking runs out; the latter is reported through `missing_classes`.
pub fn sample_core(modes: &ModeSet, budget: usize, oracle: &mut Oracle, ensure_coverage: bool) -> Result<LabeledSet> {
    check_budget(budget)?;
    let ranking = modes.modes();
    if answerable_modes(modes, oracle) < budget {
        return Err(Error::param(format!(
            "{} of {} modes are answerable, fewer than the budget {budget}",
            answerable_modes(modes, oracle),
            ranking.len()
        )));
    }
    let mut points = query_ranked(ranking.iter().copied(), budget, oracle)?;
    let mut missing_classes = Vec::new();
    if ensure_coverage {
        let mut missing: Vec<u32> = oracle.truth().classes();
        missing.retain(|c| !points.iter().any(|q| q.label == *c));
        let used = ranking.iter().position(|&i| i == points[budget - 1].index).unwrap() + 1;
        for &i in &ranking[used..] {
            if missing.is_empty() {
                break;
            }
            if let Some(label) = oracle.query(i) {
                points.push(Query { index: i, label });
                missing.retain(|&c| c != label);
            }
        }
        if !missing.is_empty() {
            log::debug!("class coverage incomplete: {missing:?} have no label");
        }
        missing_classes = missing;
    }
    Ok(LabeledSet { points, requested: budget, missing_classes })
}

/// `|D_t(x*_1, x) - D_t(x*_2, x)|` for the two modes nearest each point.
pub fn boundary_scores(embedding: &Embedding, modes: &ModeSet) -> Result<Vec<f64>> {
    let ranked = modes.modes();
    if ranked.len() < 2 {
        return Err(Error::param("boundary scores need at least two modes"));
    }
    Ok((0..embedding.n())
        .into_par_iter()
        .map(|i| {
            let (mut d1, mut d2) = (f64::INFINITY, f64::INFINITY);
            for &mode in ranked {
                let d = embedding.distance(mode, i);
                if d < d1 {
                    d2 = d1;
                    d1 = d;
                } else if d < d2 {
                    d2 = d;
                }
            }
            (d1 - d2).abs()
        })
        .collect())
}

/// Queries the `budget` answerable minimizers of the boundary score, ties to
/// the lower index. No coverage augmentation.
pub fn sample_boundary(embedding: &Embedding, modes: &ModeSet, budget: usize, oracle: &mut Oracle) -> Result<LabeledSet> {
    check_budget(budget)?;
    let scores = boundary_scores(embedding, modes)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let points = query_ranked(order, budget, oracle)?;
    Ok(LabeledSet { points, requested: budget, missing_classes: Vec::new() })
}

/// Uniform draw without replacement from the answerable pixels.
pub fn sample_random(budget: usize, oracle: &mut Oracle, seed: u64) -> Result<LabeledSet> {
    check_budget(budget)?;
    let pool = oracle.truth().labeled_indices();
    if budget > pool.len() {
        return Err(Error::param(format!(
            "budget {budget} exceeds the {} answerable pixels",
            pool.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, pool.len(), budget);
    let points = query_ranked(picks.into_iter().map(|k| pool[k]), budget, oracle)?;
    Ok(LabeledSet { points, requested: budget, missing_classes: Vec::new() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::DensityProfile;
    use crate::modes::{compute_rho, detect_modes, RhoProfile};
    use rand::Rng;

    /// Modes ranked by `scores` under a uniform density.
    fn modeset(scores: &[f64], count: usize) -> ModeSet {
        let p = DensityProfile::from_unnormalized(vec![1.0; scores.len()], 1.0, 1).unwrap();
        let rho = RhoProfile { raw: scores.to_vec(), rho: scores.to_vec(), fallbacks: 0 };
        detect_modes(&p, &rho, count).unwrap()
    }

    fn truth(labels: Vec<u32>) -> GroundTruth {
        let n = labels.len();
        GroundTruth::new(1, n, labels).unwrap()
    }

    #[test]
    fn core_takes_top_answerable_modes() {
        let gt = truth(vec![1, 0, 2, 2, 1]);
        let modes = modeset(&[0.1, 0.9, 0.8, 0.2, 0.5], 5);
        let mut oracle = Oracle::new(&gt);
        let set = sample_core(&modes, 2, &mut oracle, false).unwrap();
        // Mode 1 sits on an unlabeled pixel and is skipped.
        assert_eq!(set.points().iter().map(|q| q.index).collect::<Vec<_>>(), vec![2, 4]);
        assert_eq!(oracle.log().len(), 2);
    }

    #[test]
    fn coverage_extends_the_budget() {
        let gt = truth(vec![1, 1, 1, 2]);
        let modes = modeset(&[0.9, 0.8, 0.7, 0.1], 4);
        let mut oracle = Oracle::new(&gt);
        let set = sample_core(&modes, 2, &mut oracle, true).unwrap();
        assert_eq!(set.len(), 4);
        assert_eq!(set.requested(), 2);
        assert!(set.coverage_warning().is_none());
        assert_eq!(oracle.log().len(), set.len());

        let short = modeset(&[0.9, 0.8, 0.7, 0.1], 3);
        let mut oracle = Oracle::new(&gt);
        let set = sample_core(&short, 2, &mut oracle, true).unwrap();
        assert_eq!(set.missing_classes(), &[2]);
        assert!(set.coverage_warning().is_some());
    }

    #[test]
    fn coverage_is_a_no_op_when_top_modes_cover() {
        let gt = truth(vec![1, 2, 1, 2]);
        let modes = modeset(&[0.9, 0.8, 0.7, 0.6], 4);
        let a = sample_core(&modes, 2, &mut Oracle::new(&gt), true).unwrap();
        let b = sample_core(&modes, 2, &mut Oracle::new(&gt), false).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn full_budget_queries_everything_once() {
        let gt = truth(vec![1, 2, 3, 1, 2]);
        let modes = modeset(&[0.3, 0.1, 0.5, 0.2, 0.4], 5);
        let mut oracle = Oracle::new(&gt);
        let set = sample_core(&modes, 5, &mut oracle, true).unwrap();
        let mut idx: Vec<usize> = set.points().iter().map(|q| q.index).collect();
        idx.sort_unstable();
        assert_eq!(idx, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn too_few_answerable_modes() {
        let gt = truth(vec![1, 0, 0]);
        let modes = modeset(&[0.1, 0.9, 0.8], 3);
        assert!(sample_core(&modes, 2, &mut Oracle::new(&gt), false).is_err());
        assert!(sample_core(&modes, 0, &mut Oracle::new(&gt), false).is_err());
    }

    #[test]
    fn boundary_scores_match_full_table() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 150;
        let e = Embedding::from_coords((0..n * 3).map(|_| rng.random()).collect(), 3, 1).unwrap();
        let p = DensityProfile::from_unnormalized((0..n).map(|_| rng.random::<f64>() + 0.1).collect(), 1.0, 1).unwrap();
        let modes = detect_modes(&p, &compute_rho(&e, &p).unwrap(), 7).unwrap();
        let scores = boundary_scores(&e, &modes).unwrap();
        for i in 0..n {
            let mut d: Vec<f64> = modes.modes().iter().map(|&m| e.distance(m, i)).collect();
            d.sort_by(f64::total_cmp);
            assert_eq!(scores[i], (d[0] - d[1]).abs());
        }
        // A mode's own score is its distance to the second-nearest mode.
        let m0 = modes.modes()[0];
        let nearest_other = modes.modes()[1..].iter().map(|&m| e.distance(m, m0)).fold(f64::INFINITY, f64::min);
        assert_eq!(scores[m0], nearest_other);
    }

    #[test]
    fn equidistant_point_scores_zero_and_coincident_modes_tie() {
        let e = Embedding::from_coords(vec![0.0, 2.0, 1.0], 1, 0).unwrap();
        let p = DensityProfile::from_unnormalized(vec![3.0, 2.0, 1.0], 1.0, 1).unwrap();
        let modes = detect_modes(&p, &compute_rho(&e, &p).unwrap(), 2).unwrap();
        assert_eq!(boundary_scores(&e, &modes).unwrap()[2], 0.0);

        let e = Embedding::from_coords(vec![0.0, 0.0, 1.0, 3.0, 5.0], 1, 0).unwrap();
        let p = DensityProfile::from_unnormalized(vec![2.0, 2.0, 1.0, 1.0, 1.0], 1.0, 1).unwrap();
        // The coincident pair 0, 1 are the two modes.
        let rho = RhoProfile { raw: vec![0.0; 5], rho: vec![1.0, 1.0, 0.0, 0.0, 0.0], fallbacks: 0 };
        let modes = detect_modes(&p, &rho, 2).unwrap();
        assert_eq!(modes.modes(), &[0, 1]);
        assert!(boundary_scores(&e, &modes).unwrap().iter().all(|&s| s == 0.0));
        let gt = truth(vec![1, 1, 2, 2, 2]);
        let set = sample_boundary(&e, &modes, 3, &mut Oracle::new(&gt)).unwrap();
        assert_eq!(set.points().iter().map(|q| q.index).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert!(sample_boundary(&e, &modes, 0, &mut Oracle::new(&gt)).is_err());
    }

    #[test]
    fn random_is_deterministic_and_exhaustive() {
        let gt = truth(vec![1, 0, 2, 2, 0, 3, 1]);
        let a = sample_random(3, &mut Oracle::new(&gt), 9).unwrap();
        let b = sample_random(3, &mut Oracle::new(&gt), 9).unwrap();
        assert_eq!(a, b);
        let all = sample_random(5, &mut Oracle::new(&gt), 1).unwrap();
        let mut idx: Vec<usize> = all.points().iter().map(|q| q.index).collect();
        idx.sort_unstable();
        assert_eq!(idx, gt.labeled_indices());
        assert!(sample_random(6, &mut Oracle::new(&gt), 1).is_err());
    }

    #[test]
    fn random_class_frequencies_follow_ground_truth() {
        // 60% class 1, 30% class 2, 10% class 3; unlabeled pixels interleaved.
        let mut labels = Vec::new();
        for i in 0..200 {
            labels.push(match i % 10 {
                0..=5 => 1,
                6..=8 => 2,
                _ => 3,
            });
            labels.push(0);
        }
        let gt = truth(labels);
        let draws = 200;
        let per = 10;
        let mut counts = [0usize; 4];
        for s in 0..draws {
            for q in sample_random(per, &mut Oracle::new(&gt), s).unwrap().points() {
                counts[q.label as usize] += 1;
            }
        }
        let total = (draws * per as u64) as f64;
        for (c, share) in [(1, 0.6), (2, 0.3), (3, 0.1)] {
            let sd = (total * share * (1.0 - share)).sqrt();
            assert!((counts[c] as f64 - total * share).abs() <= 3.0 * sd, "class {c}: {}", counts[c]);
        }
    }

    #[test]
    fn labeled_set_validation() {
        assert!(LabeledSet::new(vec![(0, 1), (0, 2)]).is_err());
        assert!(LabeledSet::new(vec![(0, 0)]).is_err());
        assert_eq!(LabeledSet::new(vec![(3, 1)]).unwrap().len(), 1);
    }

    #[test]
    fn query_log_csv() {
        let gt = GroundTruth::new(2, 3, vec![1, 2, 0, 3, 1, 2]).unwrap();
        let mut oracle = Oracle::new(&gt);
        oracle.query(4);
        oracle.query(2);
        oracle.query(1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.csv");
        oracle.write_log_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "index,row,col,label,order\n4,1,1,1,0\n1,0,1,2,1\n");
    }
}
