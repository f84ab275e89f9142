//! Non-IID label partitioning: each client's class mix is a draw from a
//! symmetric Dirichlet(β) distribution.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, DatasetShard};
use crate::radio::ClientId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionConfig {
    /// Concentration β > 0; small values skew clients toward few classes.
    pub beta: f64,
    pub num_clients: usize,
    pub samples_per_client: usize,
    pub rng_seed: u64,
    /// Per-client sizes overriding `samples_per_client`.
    #[serde(default)]
    pub shard_sizes: Option<Vec<usize>>,
    /// Draw with replacement from a class once its unused samples run out,
    /// instead of failing.
    #[serde(default)]
    pub allow_replacement: bool,
}

impl PartitionConfig {
    pub fn new(beta: f64, num_clients: usize, samples_per_client: usize, rng_seed: u64) -> Self {
        Self {
            beta,
            num_clients,
            samples_per_client,
            rng_seed,
            shard_sizes: None,
            allow_replacement: false,
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        match &self.shard_sizes {
            Some(s) => s.clone(),
            None => vec![self.samples_per_client; self.num_clients],
        }
    }

    fn validate(&self) -> Result<(), DataError> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(DataError::InvalidPartition(format!(
                "beta must be finite and positive, got {}",
                self.beta
            )));
        }
        if self.num_clients == 0 {
            return Err(DataError::InvalidPartition(
                "num_clients must be >= 1".into(),
            ));
        }
        let sizes = self.sizes();
        if sizes.len() != self.num_clients {
            return Err(DataError::InvalidPartition(format!(
                "{} shard sizes for {} clients",
                sizes.len(),
                self.num_clients
            )));
        }
        if sizes.contains(&0) {
            return Err(DataError::InvalidPartition(
                "shard sizes must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Natural log of a Gamma(shape, 1) variate (Marsaglia–Tsang).
///
/// Shapes below one use `Gamma(a) = Gamma(a + 1) · U^(1/a)`, kept in log
/// space so tiny shapes do not underflow to zero.
fn ln_gamma_variate<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape < 1.0 {
        let u: f64 = rng.random::<f64>();
        // u == 0 has probability 2^-53; nudge to the smallest positive double.
        let u = if u > 0.0 { u } else { f64::MIN_POSITIVE };
        return ln_gamma_variate(shape + 1.0, rng) + u.ln() / shape;
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x: f64 = rng.sample(StandardNormal);
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u: f64 = rng.random::<f64>();
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d.ln() + v.ln();
        }
    }
}

pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    ln_gamma_variate(shape, rng).exp()
}

/// Proportions `(η_1..η_M)` from a symmetric Dirichlet(β·1_M), as normalized
/// Gamma(β) variates.
pub fn sample_dirichlet<R: Rng + ?Sized>(beta: f64, num_classes: usize, rng: &mut R) -> Vec<f64> {
    let logs: Vec<f64> = (0..num_classes)
        .map(|_| ln_gamma_variate(beta, rng))
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Integer counts summing to `total`, as close to `proportions · total` as
/// possible: floors first, then one extra unit to the largest remainders
/// (lower index wins ties).
pub fn largest_remainder_counts(proportions: &[f64], total: usize) -> Vec<usize> {
    let scaled: Vec<f64> = proportions.iter().map(|p| p * total as f64).collect();
    let mut counts: Vec<usize> = scaled.iter().map(|s| s.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..proportions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = scaled[a] - scaled[a].floor();
        let rb = scaled[b] - scaled[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut remaining = total.saturating_sub(assigned);
    for &m in order.iter().cycle() {
        if remaining == 0 {
            break;
        }
        counts[m] += 1;
        remaining -= 1;
    }
    counts
}

/// Splits `pool` into one shard per client with Dirichlet-skewed labels.
///
/// Samples are drawn without replacement, so shards are disjoint unless
/// `allow_replacement` kicks in for an exhausted class.
pub fn partition_dirichlet(
    pool: &Dataset,
    cfg: &PartitionConfig,
) -> Result<Vec<DatasetShard>, DataError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let num_classes = pool.num_classes();
    let mut by_class = pool.indices_by_class();
    for class in &mut by_class {
        class.shuffle(&mut rng);
    }
    let mut cursor = vec![0usize; num_classes];

    let mut shards = Vec::with_capacity(cfg.num_clients);
    for (client, size) in cfg.sizes().into_iter().enumerate() {
        let proportions = sample_dirichlet(cfg.beta, num_classes, &mut rng);
        let counts = largest_remainder_counts(&proportions, size);
        let mut indices = Vec::with_capacity(size);
        let mut replacement_draws = 0;
        for (class, &need) in counts.iter().enumerate() {
            let members = &by_class[class];
            let available = members.len() - cursor[class];
            if need <= available {
                indices.extend_from_slice(&members[cursor[class]..cursor[class] + need]);
                cursor[class] += need;
                continue;
            }
            if !cfg.allow_replacement || members.is_empty() {
                return Err(DataError::ClassExhausted {
                    class: class as u32,
                    needed: need,
                    available,
                });
            }
            indices.extend_from_slice(&members[cursor[class]..]);
            cursor[class] = members.len();
            let deficit = need - available;
            for _ in 0..deficit {
                indices.push(members[rng.random_range(0..members.len())]);
            }
            replacement_draws += deficit;
        }
        shards.push(DatasetShard::from_pool(
            ClientId(client as u32),
            pool,
            indices,
            replacement_draws,
        ));
    }
    Ok(shards)
}
