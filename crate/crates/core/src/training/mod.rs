//! The training protocol: random crops re-drawn every epoch, mini-batch Adam,
//! periodic validation with best-snapshot retention, crop-averaged inference
//! and stratified k-fold cross-validation.

mod config;
mod crops;
mod metrics;
mod report;
mod split;
mod trainer;

pub use config::{Precision, TrainConfig};
pub use crops::{crop_starts, evaluate_subject, sample_crop};
pub use metrics::{metrics, predicted_class, Metrics};
pub use report::{summarize, CvSummary, EpochRecord, FoldMetrics, SubjectPrediction, TrainReport, ValidationPoint};
pub use split::{kfold_split, Fold};
pub use trainer::{check_lengths, predict, run_fold, train, train_with_progress, FoldOutcome, TrainOutcome};
