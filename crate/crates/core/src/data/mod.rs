//! Labeled datasets and per-client shards.

mod dirichlet;
mod idx;
mod synth;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::radio::ClientId;

pub use dirichlet::{
    largest_remainder_counts, partition_dirichlet, sample_dirichlet, sample_gamma, PartitionConfig,
};
pub use idx::{load_idx, load_mnist_dir, MnistSplit, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use synth::{synth_dataset, SynthConfig, SynthGenerator};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad IDX magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic {
        path: String,
        expected: u32,
        found: u32,
    },
    #[error("{path}: truncated IDX data, expected {expected} bytes but found {found}")]
    Truncated {
        path: String,
        expected: u64,
        found: u64,
    },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("class {class} exhausted: needed {needed} more samples, {available} left")]
    ClassExhausted {
        class: u32,
        needed: usize,
        available: usize,
    },
    #[error("invalid partition config: {0}")]
    InvalidPartition(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
}

/// Row-major labeled samples; features stored as `f32`, labels in `0..num_classes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    input_dim: usize,
    num_classes: usize,
    features: Vec<f32>,
    labels: Vec<u32>,
}

impl Dataset {
    pub fn new(
        input_dim: usize,
        num_classes: usize,
        features: Vec<f32>,
        labels: Vec<u32>,
    ) -> Result<Self, DataError> {
        if input_dim == 0 || num_classes < 2 {
            return Err(DataError::InvalidDataset(format!(
                "input_dim {input_dim} must be >= 1 and num_classes {num_classes} >= 2"
            )));
        }
        if features.len() != labels.len() * input_dim {
            return Err(DataError::InvalidDataset(format!(
                "{} feature values for {} samples of dim {input_dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l as usize >= num_classes) {
            return Err(DataError::InvalidDataset(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        if let Some(bad) = features.iter().find(|v| !v.is_finite()) {
            return Err(DataError::InvalidDataset(format!(
                "non-finite feature {bad}"
            )));
        }
        Ok(Self {
            input_dim,
            num_classes,
            features,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self, i: usize) -> &[f32] {
        &self.features[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn label(&self, i: usize) -> u32 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.num_classes];
        for &l in &self.labels {
            h[l as usize] += 1;
        }
        h
    }

    /// Copies the given rows, in order, into a new dataset.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.input_dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.features(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            input_dim: self.input_dim,
            num_classes: self.num_classes,
            features,
            labels,
        }
    }

    /// Indices of every sample, grouped by class.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.num_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            by_class[l as usize].push(i);
        }
        by_class
    }
}

/// One client's local data `D_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetShard {
    pub client_id: ClientId,
    pub data: Dataset,
    pub class_histogram: Vec<usize>,
    /// Pool row of every sample, in shard order.
    pub source_indices: Vec<usize>,
    /// Samples drawn with replacement after a class ran dry.
    pub replacement_draws: usize,
}

impl DatasetShard {
    pub fn from_pool(
        client_id: ClientId,
        pool: &Dataset,
        source_indices: Vec<usize>,
        replacement_draws: usize,
    ) -> Self {
        let data = pool.select(&source_indices);
        let class_histogram = data.class_histogram();
        Self {
            client_id,
            data,
            class_histogram,
            source_indices,
            replacement_draws,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new(2, 2, vec![0.0; 4], vec![0, 1]).is_ok());
        assert!(Dataset::new(2, 2, vec![0.0; 3], vec![0, 1]).is_err());
        assert!(Dataset::new(2, 2, vec![0.0; 4], vec![0, 2]).is_err());
        assert!(Dataset::new(2, 1, vec![0.0; 4], vec![0, 0]).is_err());
        assert!(Dataset::new(1, 2, vec![f32::NAN], vec![0]).is_err());
    }

    #[test]
    fn select_and_histogram() {
        let d = Dataset::new(1, 3, vec![0.0, 1.0, 2.0, 3.0], vec![0, 2, 2, 1]).unwrap();
        let s = d.select(&[3, 1]);
        assert_eq!(s.features(0), &[3.0]);
        assert_eq!(s.labels(), &[1, 2]);
        assert_eq!(d.class_histogram(), vec![1, 1, 2]);
        assert_eq!(d.indices_by_class(), vec![vec![0], vec![3], vec![1, 2]]);
    }
}
