use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{accuracy, auc};
use crate::data::{Dataset, RecordRef};
use crate::network::SfktModel;

pub const ACC_THRESHOLD: f64 = 0.5;

/// Default upper edges of the length buckets; the last bucket is open.
pub const DEFAULT_BUCKET_EDGES: [usize; 4] = [10, 50, 100, 200];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Student vocabulary index.
    pub student: usize,
    /// Global step.
    pub step: usize,
    /// The student's total sequence length.
    pub total_len: usize,
    pub score: f64,
    pub label: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub count: usize,
    pub acc: Option<f64>,
    pub auc: Option<f64>,
}

impl Metrics {
    pub fn of(predictions: &[Prediction]) -> Self {
        let scores: Vec<f64> = predictions.iter().map(|p| p.score).collect();
        let labels: Vec<u8> = predictions.iter().map(|p| p.label).collect();
        Self {
            count: predictions.len(),
            acc: accuracy(&scores, &labels, ACC_THRESHOLD),
            auc: auc(&scores, &labels),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketMetrics {
    /// Exclusive lower bound on total length.
    pub lower: usize,
    /// Inclusive upper bound; `None` for the open last bucket.
    pub upper: Option<usize>,
    #[serde(flatten)]
    pub metrics: Metrics,
}

impl BucketMetrics {
    pub fn label(&self) -> String {
        match self.upper {
            Some(u) => format!("({}, {}]", self.lower, u),
            None => format!("({}, inf)", self.lower),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall: Metrics,
    pub buckets: Vec<BucketMetrics>,
}

/// Index of the bucket `(edges[k-1], edges[k]]` holding `len`, or
/// `edges.len()` for the open bucket.
pub fn bucket_of(len: usize, edges: &[usize]) -> usize {
    edges.iter().position(|&e| len <= e).unwrap_or(edges.len())
}

/// Pools predictions by the student's total sequence length. `edges` must be
/// strictly increasing.
pub fn bucketed_report(predictions: &[Prediction], edges: &[usize]) -> EvalReport {
    assert!(edges.windows(2).all(|w| w[0] < w[1]), "bucket edges must increase");
    let mut groups: Vec<Vec<Prediction>> = vec![Vec::new(); edges.len() + 1];
    for p in predictions {
        groups[bucket_of(p.total_len, edges)].push(*p);
    }
    let buckets = groups
        .iter()
        .enumerate()
        .map(|(k, g)| BucketMetrics {
            lower: if k == 0 { 0 } else { edges[k - 1] },
            upper: edges.get(k).copied(),
            metrics: Metrics::of(g),
        })
        .collect();
    EvalReport {
        overall: Metrics::of(predictions),
        buckets,
    }
}

/// Scores `records` in evaluation mode, in parallel over a shared read-only
/// model. Output order follows `records`.
pub fn predict_records(model: &SfktModel, dataset: &Dataset, records: &[RecordRef]) -> Vec<Prediction> {
    records
        .par_iter()
        .map(|&r| {
            let rec = dataset.record(r);
            Prediction {
                student: rec.student,
                step: rec.step,
                total_len: rec.total_len,
                score: model.predict(&rec),
                label: rec.label,
            }
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<14} {:>8} {:>8} {:>8}", "length", "count", "ACC", "AUC")?;
        writeln!(
            f,
            "{:<14} {:>8} {:>8} {:>8}",
            "overall",
            self.overall.count,
            opt(self.overall.acc),
            opt(self.overall.auc)
        )?;
        for b in &self.buckets {
            writeln!(
                f,
                "{:<14} {:>8} {:>8} {:>8}",
                b.label(),
                b.metrics.count,
                opt(b.metrics.acc),
                opt(b.metrics.auc)
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(total_len: usize, score: f64, label: u8) -> Prediction {
        Prediction {
            student: 0,
            step: 0,
            total_len,
            score,
            label,
        }
    }

    #[test]
    fn boundaries_are_right_inclusive() {
        let e = DEFAULT_BUCKET_EDGES;
        assert_eq!(bucket_of(1, &e), 0);
        assert_eq!(bucket_of(10, &e), 0);
        assert_eq!(bucket_of(11, &e), 1);
        assert_eq!(bucket_of(200, &e), 3);
        assert_eq!(bucket_of(201, &e), 4);
    }

    #[test]
    fn report_partitions_predictions() {
        let ps: Vec<Prediction> = [5, 10, 30, 60, 150, 250, 250]
            .iter()
            .enumerate()
            .map(|(i, &n)| pred(n, i as f64 / 10.0, (i % 2) as u8))
            .collect();
        let r = bucketed_report(&ps, &DEFAULT_BUCKET_EDGES);
        assert_eq!(r.buckets.len(), 5);
        assert_eq!(r.buckets.iter().map(|b| b.metrics.count).sum::<usize>(), r.overall.count);
        assert_eq!(r.buckets[0].metrics.count, 2);
        assert_eq!(r.buckets[4].label(), "(200, inf)");
        assert_eq!(r.buckets[1].label(), "(10, 50]");
    }

    #[test]
    fn single_class_bucket_keeps_accuracy() {
        let r = bucketed_report(&[pred(5, 0.7, 1), pred(5, 0.2, 1)], &DEFAULT_BUCKET_EDGES);
        assert_eq!(r.buckets[0].metrics.auc, None);
        assert_eq!(r.buckets[0].metrics.acc, Some(0.5));
        assert_eq!(r.buckets[2].metrics.acc, None);
    }

    #[test]
    fn json_round_trip() {
        let r = bucketed_report(&[pred(5, 0.7, 1), pred(60, 0.2, 0)], &DEFAULT_BUCKET_EDGES);
        let s = serde_json::to_string(&r).unwrap();
        let back: EvalReport = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
    }
}
