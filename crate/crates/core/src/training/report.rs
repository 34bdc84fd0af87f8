use std::fmt::Write;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationPoint {
    pub epoch: usize,
    pub accuracy: f64,
    pub f1: f64,
}

/// Every training loss and validation point of one run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub validations: Vec<ValidationPoint>,
    /// Epoch of the retained snapshot; `None` when nothing was validated.
    pub best_epoch: Option<usize>,
    pub best_accuracy: Option<f64>,
}

impl TrainReport {
    /// One line per epoch; losses are printed in shortest round-trip form so
    /// the log identifies the run bit-exactly.
    pub fn to_log(&self) -> String {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&epoch_line(e, self.validations.iter().find(|v| v.epoch == e.epoch)));
            out.push('\n');
        }
        if let (Some(epoch), Some(acc)) = (self.best_epoch, self.best_accuracy) {
            writeln!(out, "best epoch={epoch} val_accuracy={acc}").expect("string write");
        }
        out
    }
}

pub(crate) fn epoch_line(e: &EpochRecord, v: Option<&ValidationPoint>) -> String {
    let mut line = format!("epoch={} loss={}", e.epoch, e.mean_loss);
    if let Some(v) = v {
        write!(line, " val_accuracy={} val_f1={}", v.accuracy, v.f1).expect("string write");
    }
    line
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectPrediction {
    pub id: String,
    pub label: u8,
    pub probabilities: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub accuracy: f64,
    pub f1: f64,
    pub best_epoch: Option<usize>,
    pub predictions: Vec<SubjectPrediction>,
}

/// Cross-validation aggregate; standard deviations use the `n - 1` denominator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
    pub folds: Vec<FoldMetrics>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn summarize(folds: Vec<FoldMetrics>) -> CvSummary {
    let acc: Vec<f64> = folds.iter().map(|f| f.accuracy).collect();
    let f1: Vec<f64> = folds.iter().map(|f| f.f1).collect();
    let (accuracy_mean, accuracy_std) = mean_std(&acc);
    let (f1_mean, f1_std) = mean_std(&f1);
    CvSummary {
        accuracy_mean,
        accuracy_std,
        f1_mean,
        f1_std,
        folds,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_lines() {
        let r = TrainReport {
            epochs: vec![
                EpochRecord { epoch: 1, mean_loss: 0.5 },
                EpochRecord { epoch: 2, mean_loss: 0.25 },
            ],
            validations: vec![ValidationPoint { epoch: 2, accuracy: 0.75, f1: 0.8 }],
            best_epoch: Some(2),
            best_accuracy: Some(0.75),
        };
        assert_eq!(
            r.to_log(),
            "epoch=1 loss=0.5\nepoch=2 loss=0.25 val_accuracy=0.75 val_f1=0.8\nbest epoch=2 val_accuracy=0.75\n"
        );
    }

    #[test]
    fn summary_statistics() {
        let fold = |i, a| FoldMetrics {
            fold: i,
            accuracy: a,
            f1: a,
            best_epoch: None,
            predictions: vec![],
        };
        let s = summarize(vec![fold(0, 0.5), fold(1, 1.0), fold(2, 0.75)]);
        assert!((s.accuracy_mean - 0.75).abs() < 1e-15);
        assert!((s.accuracy_std - 0.25).abs() < 1e-15);
    }
}
