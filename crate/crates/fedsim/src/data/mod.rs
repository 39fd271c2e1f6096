//! Dataset synthesis, raw binary ingestion, and non-IID partitioning.

mod partition;
mod rawbin;
mod synth;

pub use partition::{dirichlet_partition, mean_client_class_entropy, PartitionPlan};
pub use rawbin::read_raw_bin;
pub use synth::{synth_shapes, synth_shapes_split};

use thiserror::Error;

use crate::image::ImageTensor;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("dataset is empty")]
    Empty,
    #[error("label {label} out of range for {classes} classes")]
    BadLabel { label: usize, classes: usize },
    #[error("pixel value {value} outside [0, 255]")]
    BadPixel { value: f64 },
    #[error("synthetic generator supports at most 10 classes, got {0}")]
    TooManyClasses(usize),
    #[error("malformed record file: length {len} is not a multiple of {record} bytes")]
    MalformedFile { len: u64, record: usize },
    #[error("partition needs at least one client")]
    NoClients,
    #[error("dirichlet alpha must be positive, got {0}")]
    BadAlpha(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One image with its class label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub image: ImageTensor,
    pub label: usize,
}

/// A non-empty collection of labeled examples with a fixed class count.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    examples: Vec<LabeledExample>,
    class_count: usize,
}

impl Dataset {
    pub fn new(examples: Vec<LabeledExample>, class_count: usize) -> Result<Self, DataError> {
        if examples.is_empty() {
            return Err(DataError::Empty);
        }
        for ex in &examples {
            if ex.label >= class_count {
                return Err(DataError::BadLabel { label: ex.label, classes: class_count });
            }
            for &v in ex.image.as_slice() {
                if !v.is_finite() || !(0.0..=255.0).contains(&v) {
                    return Err(DataError::BadPixel { value: v });
                }
            }
        }
        Ok(Self { examples, class_count })
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn example(&self, idx: usize) -> &LabeledExample {
        &self.examples[idx]
    }

    /// Per-class example counts.
    pub fn class_histogram(&self) -> Vec<usize> {
        let mut hist = vec![0usize; self.class_count];
        for ex in &self.examples {
            hist[ex.label] += 1;
        }
        hist
    }
}
