//! Accuracy and AUC, overall and per sequence-length bucket, plus the
//! practice-number similarity diagnostic.

mod metrics;
mod report;
mod similarity;

pub use metrics::{accuracy, auc, spearman};
pub use report::{
    bucket_of, bucketed_report, predict_records, BucketMetrics, EvalReport, Metrics, Prediction, ACC_THRESHOLD,
    DEFAULT_BUCKET_EDGES,
};
pub use similarity::{practice_number_similarity, SimilarityMatrix};
