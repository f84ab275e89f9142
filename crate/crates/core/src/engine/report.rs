//! CSV and manifest output. Column sets here are the contract consumed by
//! the plotting tool.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{RoundRecord, RunConfig, Simulation};
use crate::data::DatasetShard;

pub const ROUNDS_CSV_HEADER: [&str; 9] = [
    "round",
    "sim_time_s",
    "n_uploaders",
    "accuracy",
    "loss",
    "algo",
    "tau",
    "beta",
    "seed",
];

/// Fixed leading columns of the per-client CSV; one `class_<m>` count
/// column per label follows.
pub const CLIENTS_CSV_HEADER: [&str; 10] = [
    "client_id",
    "distance_km",
    "cpu_freq_hz",
    "cycles_per_sample",
    "num_samples",
    "compute_s",
    "upload_s",
    "total_s",
    "tier",
    "tau",
];

/// One row of the rounds CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRound {
    pub round: u64,
    pub sim_time_s: f64,
    pub n_uploaders: usize,
    pub accuracy: Option<f64>,
    pub loss: Option<f64>,
    pub algo: String,
    pub tau: f64,
    pub beta: f64,
    pub seed: u64,
}

/// File-name stem identifying a run: algorithm, τ, β and seed.
pub fn run_tag(cfg: &RunConfig) -> String {
    format!(
        "{}_tau{}_beta{}_seed{}",
        cfg.algorithm, cfg.deadline_s, cfg.beta, cfg.seed
    )
}

pub fn write_rounds_csv<W: Write>(
    out: W,
    records: &[RoundRecord],
    cfg: &RunConfig,
) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(ROUNDS_CSV_HEADER)?;
    for r in records {
        w.serialize(CsvRound {
            round: r.round,
            sim_time_s: r.sim_clock_s,
            n_uploaders: r.num_uploaders,
            accuracy: r.accuracy,
            loss: r.loss,
            algo: cfg.algorithm.to_string(),
            tau: cfg.deadline_s,
            beta: cfg.beta,
            seed: cfg.seed,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rounds_csv<R: Read>(input: R) -> Result<Vec<CsvRound>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}

/// Per-client latency, tier and class counts.
pub fn write_clients_csv<W: Write>(out: W, sim: &Simulation) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let shards: &[DatasetShard] = sim.shards();
    let num_classes = shards.first().map_or(0, |s| s.class_histogram.len());
    let mut header: Vec<String> = CLIENTS_CSV_HEADER.iter().map(|s| s.to_string()).collect();
    header.extend((0..num_classes).map(|m| format!("class_{m}")));
    w.write_record(&header)?;
    let tau = sim.assignment().deadline_s();
    for (client, shard) in sim.population().clients().iter().zip(shards) {
        let p = client.profile.params();
        let mut row = vec![
            client.id().to_string(),
            p.distance_km.to_string(),
            p.cpu_freq_hz.to_string(),
            p.cycles_per_sample.to_string(),
            shard.len().to_string(),
            client.latency.compute_s.to_string(),
            client.latency.upload_s.to_string(),
            client.latency.total_s.to_string(),
            sim.assignment()
                .tier_of(client.id())
                .map_or(String::new(), |t| t.to_string()),
            tau.to_string(),
        ];
        row.extend(shard.class_histogram.iter().map(|c| c.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub rounds: u64,
    pub final_sim_time_s: f64,
    pub final_accuracy: Option<f64>,
    pub final_loss: Option<f64>,
    pub max_tier: u32,
    pub tier1_clients: usize,
    pub min_latency_s: f64,
    pub median_latency_s: f64,
    pub max_latency_s: f64,
}

impl RunSummary {
    pub fn new(sim: &Simulation, records: &[RoundRecord]) -> Self {
        let last = records.last();
        Self {
            rounds: last.map_or(0, |r| r.round),
            final_sim_time_s: last.map_or(0.0, |r| r.sim_clock_s),
            final_accuracy: last.and_then(|r| r.accuracy),
            final_loss: last.and_then(|r| r.loss),
            max_tier: sim.assignment().max_tier(),
            tier1_clients: sim.assignment().tier_members(1).len(),
            min_latency_s: sim.population().min_latency(),
            median_latency_s: sim.population().median_latency(),
            max_latency_s: sim.population().max_latency(),
        }
    }
}

/// Everything needed to reproduce and identify a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tag: String,
    pub code_version: String,
    pub config: RunConfig,
    pub summary: RunSummary,
}

impl RunManifest {
    pub fn new(sim: &Simulation, records: &[RoundRecord]) -> Self {
        Self {
            tag: run_tag(sim.config()),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            config: sim.config().clone(),
            summary: RunSummary::new(sim, records),
        }
    }
}
