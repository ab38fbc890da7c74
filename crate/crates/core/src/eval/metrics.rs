//! Accuracy against ground truth, over pixels with a ground-truth label.

use serde::{Deserialize, Serialize};

use crate::dataset::GroundTruth;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub overall_accuracy: f64,
    pub average_accuracy: f64,
    pub kappa: f64,
    /// Pixels scored.
    pub support: usize,
}

/// Counts of (true, predicted) pairs over scored pixels.
#[derive(Debug, Clone)]
pub struct Confusion {
    /// Sorted union of true and predicted labels.
    pub labels: Vec<u32>,
    /// `counts[a * labels.len() + b]`: true `labels[a]`, predicted `labels[b]`.
    pub counts: Vec<usize>,
    pub total: usize,
}

impl Confusion {
    pub fn new(predicted: &[u32], truth: &GroundTruth) -> Result<Self> {
        let gt = truth.labels();
        if predicted.len() != gt.len() {
            return Err(Error::Shape(format!(
                "{} predictions for {} ground-truth pixels",
                predicted.len(),
                gt.len()
            )));
        }
        let pairs: Vec<(u32, u32)> = gt
            .iter()
            .zip(predicted)
            .filter(|(&g, _)| g > 0)
            .map(|(&g, &p)| (g, p))
            .collect();
        if pairs.is_empty() {
            return Err(Error::param("ground truth has no labeled pixels"));
        }
        let mut labels: Vec<u32> = pairs.iter().flat_map(|&(g, p)| [g, p]).collect();
        labels.sort_unstable();
        labels.dedup();
        let c = labels.len();
        let pos = |l: u32| labels.binary_search(&l).unwrap();
        let mut counts = vec![0; c * c];
        for &(g, p) in &pairs {
            counts[pos(g) * c + pos(p)] += 1;
        }
        Ok(Confusion { labels, counts, total: pairs.len() })
    }

    fn dim(&self) -> usize {
        self.labels.len()
    }

    fn row_sum(&self, a: usize) -> usize {
        self.counts[a * self.dim()..(a + 1) * self.dim()].iter().sum()
    }

    fn col_sum(&self, b: usize) -> usize {
        (0..self.dim()).map(|a| self.counts[a * self.dim() + b]).sum()
    }

    fn trace(&self) -> usize {
        (0..self.dim()).map(|a| self.counts[a * self.dim() + a]).sum()
    }

    pub fn overall_accuracy(&self) -> f64 {
        self.trace() as f64 / self.total as f64
    }

    /// Mean recall over classes that occur in the ground truth.
    pub fn average_accuracy(&self) -> f64 {
        let recalls: Vec<f64> = (0..self.dim())
            .filter_map(|a| {
                let support = self.row_sum(a);
                (support > 0).then(|| self.counts[a * self.dim() + a] as f64 / support as f64)
            })
            .collect();
        recalls.iter().sum::<f64>() / recalls.len() as f64
    }

    /// Cohen's kappa. When chance agreement is 1, kappa is 1 for perfect
    /// agreement and 0 otherwise.
    pub fn kappa(&self) -> f64 {
        let n = self.total as f64;
        let po = self.overall_accuracy();
        let pe: f64 = (0..self.dim())
            .map(|a| self.row_sum(a) as f64 * self.col_sum(a) as f64)
            .sum::<f64>()
            / (n * n);
        if pe >= 1.0 {
            return if po == 1.0 { 1.0 } else { 0.0 };
        }
        (po - pe) / (1.0 - pe)
    }

    pub fn metrics(&self) -> Metrics {
        Metrics {
            overall_accuracy: self.overall_accuracy(),
            average_accuracy: self.average_accuracy(),
            kappa: self.kappa(),
            support: self.total,
        }
    }
}

pub fn evaluate(predicted: &[u32], truth: &GroundTruth) -> Result<Metrics> {
    Confusion::new(predicted, truth).map(|c| c.metrics())
}

pub fn overall_accuracy(predicted: &[u32], truth: &GroundTruth) -> Result<f64> {
    Confusion::new(predicted, truth).map(|c| c.overall_accuracy())
}

pub fn average_accuracy(predicted: &[u32], truth: &GroundTruth) -> Result<f64> {
    Confusion::new(predicted, truth).map(|c| c.average_accuracy())
}

pub fn cohens_kappa(predicted: &[u32], truth: &GroundTruth) -> Result<f64> {
    Confusion::new(predicted, truth).map(|c| c.kappa())
}
