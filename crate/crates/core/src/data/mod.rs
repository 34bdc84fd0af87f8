//! Subject records, the synthetic cohort generator, the ST4D tensor
//! container and CSV manifests.

mod manifest;
pub mod st4d;
mod synthetic;

pub use manifest::{
    load_manifest, manifest_path, write_dataset, SubjectRef, MANIFEST_FILE, SERIES_ENTRY,
};
pub use st4d::{read_tensor_file, write_tensor_file, StoredTensor};
pub use synthetic::{generate, SignalMode, SiteShift, SyntheticSpec, SWEEP_PERIOD, TEMPORAL_PERIODS};

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// One subject: a `[T, C, D, H, W]` series, a binary label and a site tag.
#[derive(Clone, Debug, PartialEq)]
pub struct SubjectRecord<T> {
    pub id: String,
    pub series: Tensor<T>,
    /// 0 = control, 1 = positive class.
    pub label: u8,
    pub site: String,
}

impl<T: Scalar> SubjectRecord<T> {
    pub fn len(&self) -> usize {
        self.series.dims()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cast<U: Scalar>(&self) -> SubjectRecord<U> {
        SubjectRecord {
            id: self.id.clone(),
            series: self.series.cast(),
            label: self.label,
            site: self.site.clone(),
        }
    }
}
