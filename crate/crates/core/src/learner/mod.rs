//! Local/global cross-entropy objectives and the local SGD update.
//!
//! A client in tier `j` trains from the global model it last received with
//! step size `j·δ`; tier 1 is the ordinary synchronous update.

mod model;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::Tier;
use crate::data::{Dataset, DatasetShard};
use crate::radio::ClientId;

pub use model::{Evaluation, Layout, ModelKind, ModelParams, ModelSpec, TensorSlot};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error("empty dataset")]
    EmptyData,
    #[error("parameter vector has {found} entries, layout expects {expected}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("non-finite parameter at index {index}")]
    NonFinite { index: usize },
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("invalid SGD config: {0}")]
    InvalidSgd(String),
    #[error("tier must be >= 1")]
    InvalidTier,
    #[error("client {client} diverged: non-finite parameters after SGD step {step}")]
    Diverged { client: ClientId, step: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    /// δ
    pub base_lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub rng_seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            base_lr: 0.1,
            batch_size: 20,
            epochs: 1,
            rng_seed: 0,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        if !(self.base_lr.is_finite() && self.base_lr > 0.0) {
            return Err(LearnError::InvalidSgd(format!("base_lr {}", self.base_lr)));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(LearnError::InvalidSgd(
                "batch_size and epochs must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Mean cross-entropy over one client's shard.
pub fn local_loss(
    spec: &ModelSpec,
    params: &ModelParams,
    shard: &DatasetShard,
) -> Result<f64, LearnError> {
    spec.loss(params, &shard.data)
}

/// Sample-weighted mean of the local losses, i.e. the loss over the union
/// of all shards.
pub fn global_loss(
    spec: &ModelSpec,
    params: &ModelParams,
    shards: &[DatasetShard],
) -> Result<f64, LearnError> {
    let total: usize = shards.iter().map(|s| s.len()).sum();
    if total == 0 {
        return Err(LearnError::EmptyData);
    }
    let mut acc = 0.0;
    for shard in shards.iter().filter(|s| !s.is_empty()) {
        acc += shard.len() as f64 / total as f64 * local_loss(spec, params, shard)?;
    }
    Ok(acc)
}

pub fn gradient(
    spec: &ModelSpec,
    params: &ModelParams,
    data: &Dataset,
    indices: &[usize],
) -> ModelParams {
    spec.gradient(params, data, indices)
}

/// Mini-batch SGD over `shard` from `params_in` with step `tier · base_lr`.
///
/// Batches are drawn from a seeded shuffle each epoch; rows inside a batch
/// are visited in ascending order, so a single batch covering the whole
/// shard reproduces `params_in - tier·δ·gradient(params_in, shard)` exactly.
pub fn local_train(
    spec: &ModelSpec,
    params_in: &ModelParams,
    shard: &DatasetShard,
    cfg: &SgdConfig,
    tier: Tier,
) -> Result<ModelParams, LearnError> {
    cfg.validate()?;
    if tier == 0 {
        return Err(LearnError::InvalidTier);
    }
    if shard.is_empty() {
        return Err(LearnError::EmptyData);
    }
    let step_size = f64::from(tier) * cfg.base_lr;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut params = params_in.clone();
    let mut order: Vec<usize> = (0..shard.len()).collect();
    let mut batch = Vec::with_capacity(cfg.batch_size);
    let mut step = 0;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend_from_slice(chunk);
            batch.sort_unstable();
            let grad = spec.gradient(&params, &shard.data, &batch);
            params.axpy(-step_size, &grad);
            step += 1;
            if !params.is_finite() {
                return Err(LearnError::Diverged {
                    client: shard.client_id,
                    step,
                });
            }
        }
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_shard() -> DatasetShard {
        let data = Dataset::new(
            2,
            3,
            vec![1.0, 0.0, 0.0, 1.0, -1.0, -1.0, 0.5, 0.5],
            vec![0, 1, 2, 0],
        )
        .unwrap();
        DatasetShard::from_pool(ClientId(4), &data, vec![0, 1, 2, 3], 0)
    }

    #[test]
    fn layout_tiles_vector() {
        for spec in [
            ModelSpec::softmax_regression(5, 3),
            ModelSpec::mlp(5, vec![4, 6], 3),
        ] {
            let layout = spec.layout();
            let mut next = 0;
            for slot in &layout.slots {
                assert_eq!(slot.offset, next);
                next += slot.len();
            }
            assert_eq!(next, layout.len());
        }
        assert_eq!(ModelSpec::softmax_regression(5, 3).num_params(), 18);
        assert_eq!(
            ModelSpec::mlp(5, vec![4], 3).num_params(),
            5 * 4 + 4 + 4 * 3 + 3
        );
    }

    #[test]
    fn init_has_zero_bias_and_small_weights() {
        let p = ModelSpec::mlp(6, vec![5], 4).init(3);
        assert!(p.tensor("hidden0.bias").unwrap().iter().all(|&b| b == 0.0));
        assert!(p.tensor("out.bias").unwrap().iter().all(|&b| b == 0.0));
        let w = p.tensor("hidden0.weight").unwrap();
        assert!(w.iter().all(|&v| v.abs() < 0.05));
        assert!(w.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn uniform_model_loss_is_ln_classes() {
        let data = Dataset::new(1, 10, vec![0.3; 10], (0..10).collect()).unwrap();
        let spec = ModelSpec::softmax_regression(1, 10);
        let loss = spec.loss(&spec.zeros(), &data).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_prediction_has_zero_loss() {
        let spec = ModelSpec::softmax_regression(1, 2);
        let mut p = spec.zeros();
        // bias of class 1 huge
        p.values_mut()[3] = 1e3;
        let data = Dataset::new(1, 2, vec![0.0], vec![1]).unwrap();
        assert_eq!(spec.loss(&p, &data).unwrap(), 0.0);
    }

    #[test]
    fn empty_inputs_are_errors() {
        let spec = ModelSpec::softmax_regression(1, 2);
        let empty = Dataset::new(1, 2, vec![], vec![]).unwrap();
        assert_eq!(spec.loss(&spec.zeros(), &empty), Err(LearnError::EmptyData));
        let shard = DatasetShard::from_pool(ClientId(0), &empty, vec![], 0);
        assert!(local_train(&spec, &spec.zeros(), &shard, &SgdConfig::default(), 1).is_err());
    }

    #[test]
    fn tier_scales_step_size() {
        let shard = toy_shard();
        let spec = ModelSpec::softmax_regression(2, 3);
        let start = spec.init(1);
        let cfg = SgdConfig {
            base_lr: 0.1,
            batch_size: shard.len(),
            epochs: 1,
            rng_seed: 9,
        };
        let all: Vec<usize> = (0..shard.len()).collect();
        let grad = spec.gradient(&start, &shard.data, &all);
        let t2 = local_train(&spec, &start, &shard, &cfg, 2).unwrap();
        let mut expected = start.clone();
        expected.axpy(-(2.0 * 0.1), &grad);
        assert_eq!(t2, expected);
        let cfg_double = SgdConfig {
            base_lr: 0.2,
            ..cfg.clone()
        };
        assert_eq!(
            t2,
            local_train(&spec, &start, &shard, &cfg_double, 1).unwrap()
        );
    }

    #[test]
    fn divergence_is_caught() {
        let shard = toy_shard();
        let spec = ModelSpec::softmax_regression(2, 3);
        let cfg = SgdConfig {
            base_lr: f64::MAX,
            batch_size: 1,
            epochs: 3,
            rng_seed: 0,
        };
        let err = local_train(&spec, &spec.init(0), &shard, &cfg, 2).unwrap_err();
        assert!(matches!(
            err,
            LearnError::Diverged {
                client: ClientId(4),
                ..
            }
        ));
    }

    #[test]
    fn model_params_rejects_bad_vectors() {
        let layout = std::sync::Arc::new(ModelSpec::softmax_regression(1, 2).layout());
        assert!(ModelParams::new(vec![0.0; 3], layout.clone()).is_err());
        assert!(ModelParams::new(vec![0.0, 0.0, f64::NAN, 0.0], layout.clone()).is_err());
        assert!(ModelParams::new(vec![0.0; 4], layout).is_ok());
    }
}
