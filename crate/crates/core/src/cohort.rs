//! Latency tiers and the per-round upload schedule.
//!
//! A client with latency `t` is placed in the unique tier `j >= 1` with
//! `τ(j-1) < t <= τj`, and uploads in every round `k` divisible by `j`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::radio::ClientId;

/// Tier index, `>= 1`.
pub type Tier = u32;
/// Global round index, `>= 1`.
pub type Round = u64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CohortError {
    #[error("latency of client {client} must be finite and positive, got {latency_s}")]
    InvalidLatency { client: ClientId, latency_s: f64 },
    #[error("deadline must be finite and positive, got {0}")]
    InvalidDeadline(f64),
    #[error("client {0} appears more than once")]
    DuplicateClient(ClientId),
    #[error("latency {latency_s} s is too large for deadline {deadline_s} s")]
    TierOverflow { latency_s: f64, deadline_s: f64 },
}

/// Tier for a single latency under deadline `deadline_s`.
///
/// The upper edge is inclusive: `t = τj` lands in tier `j`.
pub fn assign_tier(latency_s: f64, deadline_s: f64) -> Result<Tier, CohortError> {
    if !(deadline_s.is_finite() && deadline_s > 0.0) {
        return Err(CohortError::InvalidDeadline(deadline_s));
    }
    if !(latency_s.is_finite() && latency_s > 0.0) {
        return Err(CohortError::InvalidLatency {
            client: ClientId(u32::MAX),
            latency_s,
        });
    }
    let ratio = (latency_s / deadline_s).ceil();
    if ratio >= f64::from(Tier::MAX - 1) {
        return Err(CohortError::TierOverflow {
            latency_s,
            deadline_s,
        });
    }
    let mut j = (ratio as Tier).max(1);
    // The division can round across an edge; settle on the tier whose
    // interval holds under the same multiplications used to state it.
    while deadline_s * f64::from(j) < latency_s {
        j += 1;
    }
    while j > 1 && deadline_s * f64::from(j - 1) >= latency_s {
        j -= 1;
    }
    Ok(j)
}

/// `y_jk`: whether tier `tier` uploads in round `round`.
pub fn tier_due(tier: Tier, round: Round) -> bool {
    debug_assert!(tier >= 1 && round >= 1);
    round.is_multiple_of(u64::from(tier))
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub fn lcm(a: u64, b: u64) -> u64 {
    a / gcd(a, b) * b
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TierEntry {
    pub tier: Tier,
    pub latency_s: f64,
}

/// Client-to-tier mapping for one deadline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierAssignment {
    deadline_s: f64,
    tiers: BTreeMap<ClientId, TierEntry>,
}

impl TierAssignment {
    pub fn cluster<I>(deadline_s: f64, latencies: I) -> Result<Self, CohortError>
    where
        I: IntoIterator<Item = (ClientId, f64)>,
    {
        if !(deadline_s.is_finite() && deadline_s > 0.0) {
            return Err(CohortError::InvalidDeadline(deadline_s));
        }
        let mut tiers = BTreeMap::new();
        for (client, latency_s) in latencies {
            let tier = assign_tier(latency_s, deadline_s).map_err(|e| match e {
                CohortError::InvalidLatency { latency_s, .. } => {
                    CohortError::InvalidLatency { client, latency_s }
                }
                other => other,
            })?;
            if tiers
                .insert(client, TierEntry { tier, latency_s })
                .is_some()
            {
                return Err(CohortError::DuplicateClient(client));
            }
        }
        Ok(Self { deadline_s, tiers })
    }

    /// Same clients and latencies, new deadline.
    pub fn recluster(&self, deadline_s: f64) -> Result<Self, CohortError> {
        Self::cluster(
            deadline_s,
            self.tiers.iter().map(|(id, e)| (*id, e.latency_s)),
        )
    }

    pub fn deadline_s(&self) -> f64 {
        self.deadline_s
    }

    pub fn len(&self) -> usize {
        self.tiers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiers.is_empty()
    }

    pub fn tier_of(&self, client: ClientId) -> Option<Tier> {
        self.tiers.get(&client).map(|e| e.tier)
    }

    pub fn latency_of(&self, client: ClientId) -> Option<f64> {
        self.tiers.get(&client).map(|e| e.latency_s)
    }

    /// Entries in ascending client-id order.
    pub fn iter(&self) -> impl Iterator<Item = (ClientId, TierEntry)> + '_ {
        self.tiers.iter().map(|(id, e)| (*id, *e))
    }

    /// 0 for an empty assignment.
    pub fn max_tier(&self) -> Tier {
        self.tiers.values().map(|e| e.tier).max().unwrap_or(0)
    }

    pub fn min_tier(&self) -> Tier {
        self.tiers.values().map(|e| e.tier).min().unwrap_or(0)
    }

    /// `x_ij`: whether `client` is in tier `tier`.
    pub fn in_tier(&self, client: ClientId, tier: Tier) -> bool {
        self.tier_of(client) == Some(tier)
    }

    /// `z_ik`: whether `client` uploads in `round`.
    pub fn scheduled(&self, client: ClientId, round: Round) -> bool {
        self.tier_of(client).is_some_and(|j| tier_due(j, round))
    }

    pub fn tier_members(&self, tier: Tier) -> Vec<ClientId> {
        self.tiers
            .iter()
            .filter(|(_, e)| e.tier == tier)
            .map(|(id, _)| *id)
            .collect()
    }

    /// Clients uploading in `round`, sorted by id.
    pub fn clients_due(&self, round: Round) -> Vec<ClientId> {
        self.tiers
            .iter()
            .filter(|(_, e)| tier_due(e.tier, round))
            .map(|(id, _)| *id)
            .collect()
    }

    /// Period of the schedule: lcm of all occupied tiers.
    pub fn schedule_period(&self) -> u64 {
        self.tiers.values().map(|e| u64::from(e.tier)).fold(1, lcm)
    }
}
