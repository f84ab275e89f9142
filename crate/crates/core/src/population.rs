//! Random client populations around a single base station.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::radio::{
    total_latency, ChannelParams, ClientId, ClientParams, ClientProfile, LatencyBreakdown,
    RadioError,
};

/// Closed interval for uniform draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformRange {
    pub min: f64,
    pub max: f64,
}

impl UniformRange {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.min == self.max {
            self.min
        } else {
            rng.random_range(self.min..=self.max)
        }
    }

    fn is_valid_positive(&self) -> bool {
        self.min.is_finite() && self.max.is_finite() && self.min > 0.0 && self.min <= self.max
    }
}

/// Where clients sit relative to the base station.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Placement {
    /// Distance uniform on `[min_distance_km, radius_km]`.
    RadialUniform { radius_km: f64 },
    /// Position uniform over a disk of the given radius.
    DiskArea { radius_km: f64 },
    /// Position uniform over a square with the base station at its center.
    SquareArea { side_km: f64 },
}

impl Placement {
    /// Largest distance a client can be placed at.
    pub fn max_distance_km(&self) -> f64 {
        match *self {
            Placement::RadialUniform { radius_km } | Placement::DiskArea { radius_km } => radius_km,
            Placement::SquareArea { side_km } => side_km / std::f64::consts::SQRT_2,
        }
    }

    fn sample<R: Rng>(&self, min_distance_km: f64, rng: &mut R) -> f64 {
        loop {
            let d = match *self {
                Placement::RadialUniform { radius_km } => rng.random_range(0.0..=radius_km),
                Placement::DiskArea { radius_km } => radius_km * rng.random::<f64>().sqrt(),
                Placement::SquareArea { side_km } => {
                    let half = side_km / 2.0;
                    let x = rng.random_range(-half..=half);
                    let y = rng.random_range(-half..=half);
                    x.hypot(y)
                }
            };
            // Clients closer than the minimum distance are redrawn.
            if d >= min_distance_km {
                return d;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationConfig {
    pub num_clients: usize,
    pub placement: Placement,
    pub min_distance_km: f64,
    pub tx_power_w: f64,
    pub cpu_freq_hz: UniformRange,
    pub cycles_per_sample: UniformRange,
    pub samples_per_client: usize,
    pub local_iter_factor: f64,
    pub target_accuracy: f64,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        Self {
            num_clients: 50,
            placement: Placement::RadialUniform { radius_km: 2.0 },
            min_distance_km: 0.01,
            tx_power_w: 1.0,
            cpu_freq_hz: UniformRange::new(0.8e9, 3e9),
            cycles_per_sample: UniformRange::new(3e5, 5e5),
            samples_per_client: 1000,
            local_iter_factor: 1.0,
            target_accuracy: 0.05,
        }
    }
}

impl PopulationConfig {
    pub fn validate(&self) -> Result<(), RadioError> {
        let bad = |field: &'static str, value: f64, reason: &'static str| {
            Err(RadioError::InvalidParameter {
                field,
                value,
                reason,
            })
        };
        if self.num_clients == 0 {
            return bad("num_clients", 0.0, "must be at least 1");
        }
        let max_d = self.placement.max_distance_km();
        if !(max_d.is_finite() && max_d > 0.0) {
            return bad("placement", max_d, "cell size must be finite and positive");
        }
        if !(self.min_distance_km.is_finite()
            && self.min_distance_km > 0.0
            && self.min_distance_km < max_d)
        {
            return bad(
                "min_distance_km",
                self.min_distance_km,
                "must be positive and below the cell size",
            );
        }
        if !self.cpu_freq_hz.is_valid_positive() {
            return bad(
                "cpu_freq_hz",
                self.cpu_freq_hz.min,
                "range must be positive and ordered",
            );
        }
        if !self.cycles_per_sample.is_valid_positive() {
            return bad(
                "cycles_per_sample",
                self.cycles_per_sample.min,
                "range must be positive and ordered",
            );
        }
        Ok(())
    }
}

/// A client together with its fixed per-iteration latency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimClient {
    pub profile: ClientProfile,
    pub latency: LatencyBreakdown,
}

impl SimClient {
    pub fn id(&self) -> ClientId {
        self.profile.id()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    clients: Vec<SimClient>,
}

impl Population {
    /// Computes every client's latency once under `chan`.
    pub fn from_profiles(
        profiles: Vec<ClientProfile>,
        chan: &ChannelParams,
    ) -> Result<Self, RadioError> {
        let mut clients = profiles
            .into_iter()
            .map(|profile| {
                Ok(SimClient {
                    profile,
                    latency: total_latency(&profile, chan)?,
                })
            })
            .collect::<Result<Vec<_>, RadioError>>()?;
        clients.sort_by_key(|c| c.id());
        Ok(Self { clients })
    }

    /// Sorted by client id.
    pub fn clients(&self) -> &[SimClient] {
        &self.clients
    }

    pub fn len(&self) -> usize {
        self.clients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clients.is_empty()
    }

    pub fn latencies(&self) -> impl Iterator<Item = (ClientId, f64)> + '_ {
        self.clients.iter().map(|c| (c.id(), c.latency.total_s))
    }

    pub fn max_latency(&self) -> f64 {
        self.clients
            .iter()
            .map(|c| c.latency.total_s)
            .fold(0.0, f64::max)
    }

    pub fn min_latency(&self) -> f64 {
        self.clients
            .iter()
            .map(|c| c.latency.total_s)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn median_latency(&self) -> f64 {
        let mut t: Vec<f64> = self.clients.iter().map(|c| c.latency.total_s).collect();
        t.sort_by(f64::total_cmp);
        let n = t.len();
        if n == 0 {
            return f64::NAN;
        }
        if n % 2 == 1 {
            t[n / 2]
        } else {
            0.5 * (t[n / 2 - 1] + t[n / 2])
        }
    }
}

/// Draws client profiles: placement per `cfg.placement`, CPU frequency and
/// cycles per sample uniform over their ranges.
pub fn sample_profiles(
    cfg: &PopulationConfig,
    seed: u64,
) -> Result<Vec<ClientProfile>, RadioError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..cfg.num_clients)
        .map(|i| {
            let distance_km = cfg.placement.sample(cfg.min_distance_km, &mut rng);
            let cpu_freq_hz = cfg.cpu_freq_hz.sample(&mut rng);
            let cycles_per_sample = cfg.cycles_per_sample.sample(&mut rng);
            ClientProfile::new(ClientParams {
                id: ClientId(i as u32),
                distance_km,
                tx_power_w: cfg.tx_power_w,
                cpu_freq_hz,
                cycles_per_sample,
                num_samples: cfg.samples_per_client,
                local_iter_factor: cfg.local_iter_factor,
                target_accuracy: cfg.target_accuracy,
            })
        })
        .collect()
}

pub fn sample_population(
    cfg: &PopulationConfig,
    chan: &ChannelParams,
    seed: u64,
) -> Result<Population, RadioError> {
    Population::from_profiles(sample_profiles(cfg, seed)?, chan)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distances_stay_in_cell() {
        for placement in [
            Placement::RadialUniform { radius_km: 2.0 },
            Placement::DiskArea { radius_km: 2.0 },
            Placement::SquareArea { side_km: 2.0 },
        ] {
            let cfg = PopulationConfig {
                num_clients: 500,
                placement,
                ..PopulationConfig::default()
            };
            let profiles = sample_profiles(&cfg, 3).unwrap();
            for p in &profiles {
                assert!(p.distance_km() >= cfg.min_distance_km);
                assert!(p.distance_km() <= placement.max_distance_km() + 1e-12);
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = PopulationConfig::default();
        let chan = ChannelParams::default();
        assert_eq!(
            sample_population(&cfg, &chan, 8).unwrap(),
            sample_population(&cfg, &chan, 8).unwrap()
        );
        assert_ne!(
            sample_population(&cfg, &chan, 8).unwrap(),
            sample_population(&cfg, &chan, 9).unwrap()
        );
    }

    #[test]
    fn invalid_configs_rejected() {
        let base = PopulationConfig::default();
        for cfg in [
            PopulationConfig {
                num_clients: 0,
                ..base.clone()
            },
            PopulationConfig {
                min_distance_km: 0.0,
                ..base.clone()
            },
            PopulationConfig {
                cpu_freq_hz: UniformRange::new(3e9, 1e9),
                ..base.clone()
            },
            PopulationConfig {
                placement: Placement::SquareArea { side_km: -1.0 },
                ..base.clone()
            },
        ] {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }
}
