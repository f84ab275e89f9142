//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use lesson_core::data::{Dataset, SynthConfig};
use lesson_core::engine::{Algorithm, DataConfig, RunConfig, StopRule};
use lesson_core::learner::{ModelParams, ModelSpec};
use lesson_core::population::PopulationConfig;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A run small enough for property tests: 12 clients with 120 samples each
/// on 16-dimensional synthetic data.
pub fn small_config(algorithm: Algorithm, deadline_s: f64, seed: u64, rounds: u64) -> RunConfig {
    RunConfig {
        algorithm,
        deadline_s,
        seed,
        stop: StopRule::Rounds(rounds),
        population: PopulationConfig {
            num_clients: 12,
            samples_per_client: 120,
            ..PopulationConfig::default()
        },
        data: DataConfig::Synthetic {
            synth: SynthConfig {
                input_dim: 16,
                ..SynthConfig::default()
            },
            train_samples: 3_000,
            test_samples: 600,
        },
        ..RunConfig::default()
    }
}

/// Random dataset with features in [-1, 1] and uniformly drawn labels.
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, dim: usize, classes: usize) -> Dataset {
    let features = (0..n * dim)
        .map(|_| rng.random_range(-1.0f32..1.0))
        .collect();
    let labels = (0..n)
        .map(|_| rng.random_range(0..classes as u32))
        .collect();
    Dataset::new(dim, classes, features, labels).unwrap()
}

/// Parameters drawn uniformly from [-scale, scale].
pub fn random_params(spec: &ModelSpec, rng: &mut ChaCha8Rng, scale: f64) -> ModelParams {
    let mut p = spec.zeros();
    for v in p.values_mut() {
        *v = rng.random_range(-scale..scale);
    }
    p
}

/// Central-difference gradient of the mean batch loss.
pub fn numerical_gradient(
    spec: &ModelSpec,
    params: &ModelParams,
    data: &Dataset,
    indices: &[usize],
    h: f64,
) -> Vec<f64> {
    let mut probe = params.clone();
    (0..params.len())
        .map(|i| {
            let orig = probe.values()[i];
            probe.values_mut()[i] = orig + h;
            let up = spec.loss_on(&probe, data, indices);
            probe.values_mut()[i] = orig - h;
            let down = spec.loss_on(&probe, data, indices);
            probe.values_mut()[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// ‖a − b‖₂ / max(‖a‖₂, ‖b‖₂), or 0 when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
