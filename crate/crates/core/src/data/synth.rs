//! Gaussian-blob classification data: one unit-covariance cluster per class.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub input_dim: usize,
    /// Distance of every class mean from the origin.
    pub class_radius: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_classes: 10,
            input_dim: 32,
            class_radius: 3.0,
            seed: 0,
        }
    }
}

/// Fixed class means; draws any number of independent sample sets from them.
#[derive(Debug, Clone)]
pub struct SynthGenerator {
    cfg: SynthConfig,
    means: Vec<Vec<f64>>,
}

impl SynthGenerator {
    pub fn new(cfg: SynthConfig) -> Self {
        assert!(cfg.num_classes >= 2 && cfg.input_dim >= 1);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[0x6d65616e]));
        // Random directions on the sphere of radius `class_radius`; nearly
        // orthogonal once input_dim is comfortably above num_classes.
        let means = (0..cfg.num_classes)
            .map(|_| {
                let v: Vec<f64> = (0..cfg.input_dim)
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.into_iter().map(|x| x * cfg.class_radius / norm).collect()
            })
            .collect();
        Self { cfg, means }
    }

    pub fn config(&self) -> &SynthConfig {
        &self.cfg
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    /// `samples` points with labels balanced across classes (up to one),
    /// in shuffled order. Different `stream`s give independent sets.
    pub fn generate(&self, samples: usize, stream: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.cfg.seed, &[0x64617461, stream]));
        let m = self.cfg.num_classes;
        let mut labels: Vec<u32> = (0..samples).map(|i| (i % m) as u32).collect();
        labels.shuffle(&mut rng);
        let mut features = Vec::with_capacity(samples * self.cfg.input_dim);
        for &label in &labels {
            for &mu in &self.means[label as usize] {
                let noise: f64 = rng.sample(StandardNormal);
                features.push((mu + noise) as f32);
            }
        }
        Dataset::new(self.cfg.input_dim, m, features, labels)
            .expect("generated samples are well formed")
    }
}

pub fn synth_dataset(num_classes: usize, samples: usize, input_dim: usize, seed: u64) -> Dataset {
    SynthGenerator::new(SynthConfig {
        num_classes,
        input_dim,
        seed,
        ..SynthConfig::default()
    })
    .generate(samples, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let a = synth_dataset(10, 500, 8, 42);
        let b = synth_dataset(10, 500, 8, 42);
        let c = synth_dataset(10, 500, 8, 43);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn balanced_labels() {
        let d = synth_dataset(10, 50_000, 4, 1);
        assert_eq!(d.len(), 50_000);
        assert!(d.class_histogram().iter().all(|&c| c == 5000));
    }

    #[test]
    fn streams_share_means() {
        let g = SynthGenerator::new(SynthConfig::default());
        let a = g.generate(100, 0);
        let b = g.generate(100, 1);
        assert_ne!(a, b);
        for mean in g.means() {
            let norm = mean.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 3.0).abs() < 1e-12);
        }
    }
}
