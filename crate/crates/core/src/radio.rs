//! Per-client latency model: local computation plus model upload over a
//! dedicated uplink channel.
//!
//! A client's latency for one global iteration is `t = t_comp + t_upload`,
//! with
//!
//! ```text
//! t_comp   = θ · log2(1/ε) · C · |D| / f
//! r        = b · log2(1 + p·g / N0)
//! t_upload = s / r
//! ```
//!
//! where the channel gain `g = 10^(-PL/10)` comes from the distance-based
//! pathloss.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RadioError {
    #[error("invalid {field}: {value} ({reason})")]
    InvalidParameter {
        field: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("log-distance pathloss is undefined at distance 0")]
    ZeroDistance,
    #[error("client {client} is unreachable: achievable rate is {rate_bps} bit/s")]
    Unreachable { client: ClientId, rate_bps: f64 },
}

/// Stable identifier of a simulated client.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClientId(pub u32);

impl fmt::Display for ClientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Distance-to-pathloss mapping, both with the 128.1 dB / 37.6 dB-per-unit
/// urban macro constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathlossModel {
    /// `128.1 + 37.6·log10(d)`, d in km.
    #[default]
    Log10Distance,
    /// `128.1 + 37.6·d`, d in km. Kept for fidelity with the linear form.
    VerbatimLinear,
}

pub fn pathloss_db(distance_km: f64, model: PathlossModel) -> Result<f64, RadioError> {
    if !distance_km.is_finite() || distance_km < 0.0 {
        return Err(RadioError::InvalidParameter {
            field: "distance_km",
            value: distance_km,
            reason: "must be finite and non-negative",
        });
    }
    match model {
        PathlossModel::VerbatimLinear => Ok(128.1 + 37.6 * distance_km),
        PathlossModel::Log10Distance => {
            if distance_km == 0.0 {
                return Err(RadioError::ZeroDistance);
            }
            Ok(128.1 + 37.6 * distance_km.log10())
        }
    }
}

/// Linear power gain for a pathloss expressed in dB.
pub fn gain_from_pathloss_db(pathloss_db: f64) -> f64 {
    10f64.powf(-pathloss_db / 10.0)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Shannon rate `b·log2(1 + p·g/N0)` in bit/s.
pub fn shannon_rate(bandwidth_hz: f64, tx_power_w: f64, gain: f64, noise_power_w: f64) -> f64 {
    bandwidth_hz * (tx_power_w * gain / noise_power_w).ln_1p() / std::f64::consts::LN_2
}

fn require_positive(field: &'static str, value: f64) -> Result<(), RadioError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(RadioError::InvalidParameter {
            field,
            value,
            reason: "must be finite and positive",
        })
    }
}

/// Uplink parameters shared by every client.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    bandwidth_per_client_hz: f64,
    /// Noise plus inter-cell interference over the allocated band.
    noise_power_w: f64,
    model_size_bits: f64,
    pathloss: PathlossModel,
}

impl ChannelParams {
    pub fn new(
        bandwidth_per_client_hz: f64,
        noise_power_w: f64,
        model_size_bits: f64,
        pathloss: PathlossModel,
    ) -> Result<Self, RadioError> {
        require_positive("bandwidth_per_client_hz", bandwidth_per_client_hz)?;
        require_positive("noise_power_w", noise_power_w)?;
        require_positive("model_size_bits", model_size_bits)?;
        Ok(Self {
            bandwidth_per_client_hz,
            noise_power_w,
            model_size_bits,
            pathloss,
        })
    }

    /// Same as [`ChannelParams::new`] with the noise given in dBm.
    pub fn with_noise_dbm(
        bandwidth_per_client_hz: f64,
        noise_dbm: f64,
        model_size_bits: f64,
        pathloss: PathlossModel,
    ) -> Result<Self, RadioError> {
        if !noise_dbm.is_finite() {
            return Err(RadioError::InvalidParameter {
                field: "noise_dbm",
                value: noise_dbm,
                reason: "must be finite",
            });
        }
        Self::new(
            bandwidth_per_client_hz,
            dbm_to_watts(noise_dbm),
            model_size_bits,
            pathloss,
        )
    }

    pub fn bandwidth_per_client_hz(&self) -> f64 {
        self.bandwidth_per_client_hz
    }

    pub fn noise_power_w(&self) -> f64 {
        self.noise_power_w
    }

    pub fn model_size_bits(&self) -> f64 {
        self.model_size_bits
    }

    pub fn pathloss(&self) -> PathlossModel {
        self.pathloss
    }
}

impl Default for ChannelParams {
    /// 30 kHz per client, -94 dBm noise, 100 kbit model, log-distance pathloss.
    fn default() -> Self {
        Self::with_noise_dbm(30e3, -94.0, 100e3, PathlossModel::Log10Distance)
            .expect("default channel parameters are valid")
    }
}

/// Raw inputs for a [`ClientProfile`]; validated by [`ClientProfile::new`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClientParams {
    pub id: ClientId,
    pub distance_km: f64,
    pub tx_power_w: f64,
    pub cpu_freq_hz: f64,
    pub cycles_per_sample: f64,
    pub num_samples: usize,
    /// θ: dimensionless multiplicity of local passes.
    pub local_iter_factor: f64,
    /// ε in (0, 1): target local accuracy.
    pub target_accuracy: f64,
}

/// One simulated device. Immutable once constructed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClientProfile {
    params: ClientParams,
}

impl ClientProfile {
    pub fn new(params: ClientParams) -> Result<Self, RadioError> {
        let p = &params;
        require_positive("distance_km", p.distance_km)?;
        // p = 0 is representable; such a client is rejected later as unreachable.
        if !p.tx_power_w.is_finite() || p.tx_power_w < 0.0 {
            return Err(RadioError::InvalidParameter {
                field: "tx_power_w",
                value: p.tx_power_w,
                reason: "must be finite and non-negative",
            });
        }
        require_positive("cpu_freq_hz", p.cpu_freq_hz)?;
        require_positive("cycles_per_sample", p.cycles_per_sample)?;
        require_positive("local_iter_factor", p.local_iter_factor)?;
        if p.num_samples == 0 {
            return Err(RadioError::InvalidParameter {
                field: "num_samples",
                value: 0.0,
                reason: "must be at least 1",
            });
        }
        if !(p.target_accuracy > 0.0 && p.target_accuracy < 1.0) {
            return Err(RadioError::InvalidParameter {
                field: "target_accuracy",
                value: p.target_accuracy,
                reason: "must lie in (0, 1)",
            });
        }
        Ok(Self { params })
    }

    pub fn params(&self) -> &ClientParams {
        &self.params
    }

    pub fn id(&self) -> ClientId {
        self.params.id
    }

    pub fn distance_km(&self) -> f64 {
        self.params.distance_km
    }

    pub fn num_samples(&self) -> usize {
        self.params.num_samples
    }

    /// θ·log2(1/ε); not necessarily an integer.
    pub fn local_passes(&self) -> f64 {
        self.params.local_iter_factor * (1.0 / self.params.target_accuracy).log2()
    }
}

/// Latency of one global iteration for one client, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub compute_s: f64,
    pub upload_s: f64,
    pub total_s: f64,
}

pub fn compute_latency(client: &ClientProfile) -> f64 {
    let p = client.params();
    client.local_passes() * p.cycles_per_sample * p.num_samples as f64 / p.cpu_freq_hz
}

pub fn channel_gain(client: &ClientProfile, chan: &ChannelParams) -> Result<f64, RadioError> {
    Ok(gain_from_pathloss_db(pathloss_db(
        client.distance_km(),
        chan.pathloss(),
    )?))
}

pub fn achievable_rate(client: &ClientProfile, chan: &ChannelParams) -> Result<f64, RadioError> {
    let gain = channel_gain(client, chan)?;
    Ok(shannon_rate(
        chan.bandwidth_per_client_hz(),
        client.params().tx_power_w,
        gain,
        chan.noise_power_w(),
    ))
}

pub fn upload_latency(client: &ClientProfile, chan: &ChannelParams) -> Result<f64, RadioError> {
    let rate = achievable_rate(client, chan)?;
    let latency = chan.model_size_bits() / rate;
    if rate > 0.0 && latency.is_finite() {
        Ok(latency)
    } else {
        Err(RadioError::Unreachable {
            client: client.id(),
            rate_bps: rate,
        })
    }
}

pub fn total_latency(
    client: &ClientProfile,
    chan: &ChannelParams,
) -> Result<LatencyBreakdown, RadioError> {
    let compute_s = compute_latency(client);
    let upload_s = upload_latency(client, chan)?;
    Ok(LatencyBreakdown {
        compute_s,
        upload_s,
        total_s: compute_s + upload_s,
    })
}
