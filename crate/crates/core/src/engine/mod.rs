//! Round-by-round simulation of semi-synchronous federated training.
//!
//! The server owns the global round counter `k` (starting at 1) and the
//! simulated clock. In round `k` the clients scheduled for upload deliver a
//! model trained from the last global model they received; the server takes
//! the sample-weighted average of what arrived, then broadcasts the result
//! back to exactly those clients.
//!
//! Clock advance per round:
//! - LESSON and FedCS: the deadline `τ`, even if every upload arrived early.
//! - FedAvg: the slowest client's latency.

mod aggregate;
mod report;

use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use log::{debug, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::{CohortError, Round, Tier, TierAssignment};
use crate::data::{
    load_mnist_dir, partition_dirichlet, DataError, Dataset, DatasetShard, MnistSplit,
    PartitionConfig, SynthConfig, SynthGenerator,
};
use crate::learner::{
    local_train, Evaluation, LearnError, ModelKind, ModelParams, ModelSpec, SgdConfig,
};
use crate::population::{sample_profiles, Population, PopulationConfig};
use crate::radio::{ChannelParams, ClientId, PathlossModel, RadioError};
use crate::rng::derive_seed;

pub use aggregate::{aggregate, aggregation_weights, LocalUpdate};
pub use report::{
    read_rounds_csv, run_tag, write_clients_csv, write_rounds_csv, CsvRound, RunManifest,
    RunSummary, CLIENTS_CSV_HEADER, ROUNDS_CSV_HEADER,
};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
    #[error("no local models to aggregate")]
    EmptyAggregation,
    #[error(transparent)]
    Radio(#[from] RadioError),
    #[error(transparent)]
    Cohort(#[from] CohortError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error("round {round}, client {client}: {source}")]
    Training {
        round: Round,
        client: ClientId,
        #[source]
        source: LearnError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "lesson")]
    Lesson,
    #[serde(rename = "fedavg")]
    FedAvg,
    #[serde(rename = "fedcs")]
    FedCs,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Lesson, Algorithm::FedAvg, Algorithm::FedCs];

    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Lesson => "lesson",
            Algorithm::FedAvg => "fedavg",
            Algorithm::FedCs => "fedcs",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "lesson" => Ok(Algorithm::Lesson),
            "fedavg" => Ok(Algorithm::FedAvg),
            "fedcs" => Ok(Algorithm::FedCs),
            other => Err(format!(
                "unknown algorithm `{other}` (expected lesson, fedavg or fedcs)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    Rounds(u64),
    /// Run every round that completes within this much simulated time.
    TimeBudget(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub bandwidth_hz: f64,
    pub noise_dbm: f64,
    pub model_size_bits: f64,
    pub pathloss: PathlossModel,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            bandwidth_hz: 30e3,
            noise_dbm: -94.0,
            model_size_bits: 100e3,
            pathloss: PathlossModel::Log10Distance,
        }
    }
}

impl ChannelConfig {
    pub fn params(&self) -> Result<ChannelParams, RadioError> {
        ChannelParams::with_noise_dbm(
            self.bandwidth_hz,
            self.noise_dbm,
            self.model_size_bits,
            self.pathloss,
        )
    }
}

/// Local optimizer settings; the per-client, per-round shuffle seed is
/// derived from the run seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalSgd {
    pub base_lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for LocalSgd {
    fn default() -> Self {
        let d = SgdConfig::default();
        Self {
            base_lr: d.base_lr,
            batch_size: d.batch_size,
            epochs: d.epochs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataConfig {
    Synthetic {
        #[serde(flatten)]
        synth: SynthConfig,
        train_samples: usize,
        test_samples: usize,
    },
    Mnist {
        dir: PathBuf,
    },
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig::Synthetic {
            synth: SynthConfig::default(),
            train_samples: 50_000,
            test_samples: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    /// τ in seconds.
    pub deadline_s: f64,
    pub stop: StopRule,
    pub seed: u64,
    pub channel: ChannelConfig,
    pub population: PopulationConfig,
    pub model: ModelKind,
    pub sgd: LocalSgd,
    /// Dirichlet concentration of the label partition.
    pub beta: f64,
    /// Refill an exhausted class by drawing with replacement.
    pub allow_replacement: bool,
    pub data: DataConfig,
    /// Evaluate every this many rounds; the final round is always evaluated.
    pub eval_stride: u64,
    /// Relative standard deviation of per-round realized latency. `None`
    /// means realized latency equals the estimate.
    pub latency_jitter: Option<f64>,
    pub parallel_clients: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Lesson,
            deadline_s: 10.0,
            stop: StopRule::Rounds(100),
            seed: 0,
            channel: ChannelConfig::default(),
            population: PopulationConfig::default(),
            model: ModelKind::SoftmaxRegression,
            sgd: LocalSgd::default(),
            beta: 1.0,
            allow_replacement: true,
            data: DataConfig::default(),
            eval_stride: 1,
            latency_jitter: None,
            parallel_clients: true,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::InvalidConfig(m));
        if !(self.deadline_s.is_finite() && self.deadline_s > 0.0) {
            return bad(format!(
                "deadline_s must be positive, got {}",
                self.deadline_s
            ));
        }
        match self.stop {
            StopRule::Rounds(0) => return bad("rounds must be >= 1".into()),
            StopRule::TimeBudget(t) if !(t.is_finite() && t > 0.0) => {
                return bad(format!("time budget must be positive, got {t}"))
            }
            _ => {}
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if self.eval_stride == 0 {
            return bad("eval_stride must be >= 1".into());
        }
        if let Some(j) = self.latency_jitter {
            if !(j.is_finite() && j >= 0.0) {
                return bad(format!("latency_jitter must be non-negative, got {j}"));
            }
        }
        self.population.validate()?;
        self.channel.params()?;
        self.sgd_for(0).validate()?;
        Ok(())
    }

    fn sgd_for(&self, rng_seed: u64) -> SgdConfig {
        SgdConfig {
            base_lr: self.sgd.base_lr,
            batch_size: self.sgd.batch_size,
            epochs: self.sgd.epochs,
            rng_seed,
        }
    }

    pub fn partition_config(&self) -> PartitionConfig {
        PartitionConfig {
            allow_replacement: self.allow_replacement,
            ..PartitionConfig::new(
                self.beta,
                self.population.num_clients,
                self.population.samples_per_client,
                derive_seed(self.seed, &[stream::PARTITION]),
            )
        }
    }
}

/// Labels for the independent random streams of a run.
mod stream {
    pub const POPULATION: u64 = 1;
    pub const PARTITION: u64 = 2;
    pub const INIT: u64 = 3;
    pub const TRAIN: u64 = 4;
    pub const JITTER: u64 = 5;
}

/// Per-round output of the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: Round,
    /// Simulated time at the end of the round.
    pub sim_clock_s: f64,
    pub round_latency_s: f64,
    /// Clients whose model was aggregated this round, ascending.
    pub uploader_ids: Vec<ClientId>,
    pub num_uploaders: usize,
    /// For each uploader, the round of the global model it trained from
    /// (0 = initial model).
    pub base_rounds: Vec<Round>,
    /// Sum of the aggregation weights; 0 for a round without uploads.
    pub weight_sum: f64,
    pub accuracy: Option<f64>,
    pub loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<RoundRecord>,
    pub final_model: ModelParams,
}

/// Top-1 accuracy and mean cross-entropy of `params` on `test`.
pub fn evaluate(
    spec: &ModelSpec,
    params: &ModelParams,
    test: &Dataset,
) -> Result<Evaluation, EngineError> {
    Ok(spec.evaluate(params, test)?)
}

/// Training pool and test set for a run.
pub fn load_data(data: &DataConfig) -> Result<(Dataset, Dataset), EngineError> {
    match data {
        DataConfig::Synthetic {
            synth,
            train_samples,
            test_samples,
        } => {
            let generator = SynthGenerator::new(synth.clone());
            Ok((
                generator.generate(*train_samples, 0),
                generator.generate(*test_samples, 1),
            ))
        }
        DataConfig::Mnist { dir } => Ok((
            load_mnist_dir(dir, MnistSplit::Train)?,
            load_mnist_dir(dir, MnistSplit::Test)?,
        )),
    }
}

/// The client population a run with `cfg` simulates; depends only on the
/// population and channel settings and the run seed.
pub fn run_population(cfg: &RunConfig) -> Result<Population, EngineError> {
    let channel = cfg.channel.params()?;
    let profiles = sample_profiles(
        &cfg.population,
        derive_seed(cfg.seed, &[stream::POPULATION]),
    )?;
    Ok(Population::from_profiles(profiles, &channel)?)
}

/// Everything fixed before the first round: population, tiers, shards and
/// the test set.
#[derive(Debug, Clone)]
pub struct Simulation {
    cfg: RunConfig,
    spec: ModelSpec,
    channel: ChannelParams,
    population: Population,
    assignment: TierAssignment,
    shards: Vec<DatasetShard>,
    test: Dataset,
}

impl Simulation {
    /// Builds the population, generates or loads the data and partitions it.
    pub fn prepare(cfg: RunConfig) -> Result<Self, EngineError> {
        cfg.validate()?;
        let (pool, test) = load_data(&cfg.data)?;
        let shards = partition_dirichlet(&pool, &cfg.partition_config())?;
        let population = run_population(&cfg)?;
        Self::from_parts(cfg, population, shards, test)
    }

    /// Uses a caller-supplied population and data. Shard `i` must belong to
    /// the population's `i`-th client.
    pub fn from_parts(
        cfg: RunConfig,
        population: Population,
        shards: Vec<DatasetShard>,
        test: Dataset,
    ) -> Result<Self, EngineError> {
        cfg.validate()?;
        let channel = cfg.channel.params()?;
        if population.len() != shards.len() {
            return Err(EngineError::InvalidConfig(format!(
                "{} clients but {} shards",
                population.len(),
                shards.len()
            )));
        }
        for (i, (client, shard)) in population.clients().iter().zip(&shards).enumerate() {
            if client.id().0 as usize != i {
                return Err(EngineError::InvalidConfig(format!(
                    "client ids must be 0..{}, found {} at position {i}",
                    population.len(),
                    client.id()
                )));
            }
            if client.id() != shard.client_id || shard.is_empty() {
                return Err(EngineError::InvalidConfig(format!(
                    "shard for client {} is missing or empty",
                    client.id()
                )));
            }
        }
        if test.is_empty() {
            return Err(EngineError::InvalidConfig("test set is empty".into()));
        }
        let first = &shards[0].data;
        let spec = ModelSpec {
            kind: cfg.model.clone(),
            input_dim: first.input_dim(),
            num_classes: first.num_classes(),
        };
        spec.validate()?;
        if test.input_dim() != spec.input_dim {
            return Err(EngineError::InvalidConfig(format!(
                "test input dim {} differs from training dim {}",
                test.input_dim(),
                spec.input_dim
            )));
        }
        let assignment = TierAssignment::cluster(cfg.deadline_s, population.latencies())?;
        if cfg.algorithm != Algorithm::FedAvg && population.min_latency() > cfg.deadline_s {
            warn!(
                "deadline {} s is below every client's latency (min {:.3} s): tier 1 is empty and \
                 rounds before tier {} uploads carry no updates",
                cfg.deadline_s,
                population.min_latency(),
                assignment.min_tier()
            );
        }
        Ok(Self {
            cfg,
            spec,
            channel,
            population,
            assignment,
            shards,
            test,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn channel(&self) -> &ChannelParams {
        &self.channel
    }

    pub fn population(&self) -> &Population {
        &self.population
    }

    pub fn assignment(&self) -> &TierAssignment {
        &self.assignment
    }

    pub fn shards(&self) -> &[DatasetShard] {
        &self.shards
    }

    pub fn test_set(&self) -> &Dataset {
        &self.test
    }

    pub fn initial_model(&self) -> ModelParams {
        self.spec.init(derive_seed(self.cfg.seed, &[stream::INIT]))
    }

    /// Clients expected to upload in `round`, ascending.
    pub fn scheduled(&self, round: Round) -> Vec<ClientId> {
        match self.cfg.algorithm {
            Algorithm::Lesson => self.assignment.clients_due(round),
            Algorithm::FedCs => self.assignment.tier_members(1),
            Algorithm::FedAvg => self.population.clients().iter().map(|c| c.id()).collect(),
        }
    }

    /// Step-size multiplier for `client`.
    fn tier_factor(&self, client: ClientId) -> Tier {
        match self.cfg.algorithm {
            Algorithm::Lesson => self.assignment.tier_of(client).unwrap_or(1),
            Algorithm::FedAvg | Algorithm::FedCs => 1,
        }
    }

    fn realized_latencies(&self, round: Round) -> Vec<f64> {
        let estimates = self.population.clients().iter().map(|c| c.latency.total_s);
        match self.cfg.latency_jitter {
            None | Some(0.0) => estimates.collect(),
            Some(sigma) => {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(derive_seed(self.cfg.seed, &[stream::JITTER, round]));
                let normal = Normal::new(1.0, sigma).expect("sigma validated");
                estimates
                    .map(|t| t * normal.sample(&mut rng).max(0.01))
                    .collect()
            }
        }
    }

    pub fn run(&self) -> Result<RunOutput, EngineError> {
        self.run_with(|_, _| {})
    }

    /// Runs to completion, handing each round's record and the global model
    /// after that round to `observer`.
    pub fn run_with<F>(&self, mut observer: F) -> Result<RunOutput, EngineError>
    where
        F: FnMut(&RoundRecord, &ModelParams),
    {
        let n = self.population.len();
        let mut global = self.initial_model();
        // Last global model each client received, with its round tag.
        let mut received: Vec<(Arc<ModelParams>, Round)> = vec![(Arc::new(global.clone()), 0); n];
        let mut clock = 0.0;
        let mut records: Vec<RoundRecord> = Vec::new();
        let tau = self.cfg.deadline_s;

        let mut round: Round = 0;
        loop {
            round += 1;
            if let StopRule::Rounds(limit) = self.cfg.stop {
                if round > limit {
                    break;
                }
            }
            let realized = self.realized_latencies(round);
            let round_latency = match self.cfg.algorithm {
                Algorithm::FedAvg => realized.iter().copied().fold(0.0, f64::max),
                Algorithm::Lesson | Algorithm::FedCs => tau,
            };
            if let StopRule::TimeBudget(budget) = self.cfg.stop {
                if clock + round_latency > budget {
                    break;
                }
            }

            // Uploads that miss their window (only possible with jitter)
            // are dropped; the client retries at its next scheduled round.
            let delivered: Vec<ClientId> = self
                .scheduled(round)
                .into_iter()
                .filter(|id| match self.cfg.algorithm {
                    Algorithm::FedAvg => true,
                    _ => realized[id.0 as usize] <= f64::from(self.tier_factor(*id)) * tau,
                })
                .collect();

            let train = |id: &ClientId| -> Result<ModelParams, EngineError> {
                let idx = id.0 as usize;
                let sgd = self.cfg.sgd_for(derive_seed(
                    self.cfg.seed,
                    &[stream::TRAIN, u64::from(id.0), round],
                ));
                local_train(
                    &self.spec,
                    &received[idx].0,
                    &self.shards[idx],
                    &sgd,
                    self.tier_factor(*id),
                )
                .map_err(|source| EngineError::Training {
                    round,
                    client: *id,
                    source,
                })
            };
            let locals: Vec<ModelParams> = if self.cfg.parallel_clients {
                delivered.par_iter().map(train).collect::<Result<_, _>>()?
            } else {
                delivered.iter().map(train).collect::<Result<_, _>>()?
            };

            let base_rounds: Vec<Round> = delivered
                .iter()
                .map(|id| received[id.0 as usize].1)
                .collect();
            let mut weight_sum = 0.0;
            if !delivered.is_empty() {
                let updates: Vec<LocalUpdate<'_>> = delivered
                    .iter()
                    .zip(&locals)
                    .map(|(id, params)| LocalUpdate {
                        client: *id,
                        params,
                        num_samples: self.shards[id.0 as usize].len(),
                    })
                    .collect();
                weight_sum = aggregation_weights(&updates).iter().sum();
                global = aggregate(&updates)?;
                let shared = Arc::new(global.clone());
                for id in &delivered {
                    received[id.0 as usize] = (Arc::clone(&shared), round);
                }
            } else {
                debug!("round {round}: no uploads");
            }
            clock += round_latency;

            let is_last = matches!(self.cfg.stop, StopRule::Rounds(limit) if round == limit);
            let (accuracy, loss) = if round.is_multiple_of(self.cfg.eval_stride) || is_last {
                let e = self.spec.evaluate(&global, &self.test)?;
                (Some(e.accuracy), Some(e.loss))
            } else {
                (None, None)
            };
            let record = RoundRecord {
                round,
                sim_clock_s: clock,
                round_latency_s: round_latency,
                num_uploaders: delivered.len(),
                uploader_ids: delivered,
                base_rounds,
                weight_sum,
                accuracy,
                loss,
            };
            observer(&record, &global);
            records.push(record);
        }

        // A time budget ends at an unpredictable round; make sure it is evaluated.
        if let Some(last) = records.last_mut() {
            if last.accuracy.is_none() {
                let e = self.spec.evaluate(&global, &self.test)?;
                last.accuracy = Some(e.accuracy);
                last.loss = Some(e.loss);
            }
        }
        Ok(RunOutput {
            records,
            final_model: global,
        })
    }
}

/// Prepares and runs one experiment.
pub fn run(cfg: RunConfig) -> Result<RunOutput, EngineError> {
    Simulation::prepare(cfg)?.run()
}
