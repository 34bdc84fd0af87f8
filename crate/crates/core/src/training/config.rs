use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

impl std::str::FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" | "32" => Ok(Precision::F32),
            "f64" | "64" => Ok(Precision::F64),
            other => Err(Error::Config(format!("unknown precision {other:?} (expected f32 or f64)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub crop_length: usize,
    pub validate_every: usize,
    pub lr: f64,
    pub seed: u64,
    pub precision: Precision,
    /// Threads computing per-sample gradients inside a batch.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 500,
            batch_size: 8,
            crop_length: 20,
            validate_every: 10,
            lr: 1e-4,
            seed: 0,
            precision: Precision::F32,
            workers: 1,
        }
    }
}

impl TrainConfig {
    /// Shorter schedule and a larger step for the small CPU-sized models.
    pub fn desk_scale() -> Self {
        TrainConfig {
            epochs: 100,
            validate_every: 5,
            lr: 1e-3,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.epochs == 0 {
            return fail("epochs must be >= 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch size must be >= 1".into());
        }
        if self.crop_length == 0 {
            return fail("crop length must be >= 1".into());
        }
        if self.validate_every == 0 {
            return fail("validate_every must be >= 1".into());
        }
        if self.workers == 0 {
            return fail("workers must be >= 1".into());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return fail(format!("learning rate {} must be finite and >= 0", self.lr));
        }
        Ok(())
    }
}
