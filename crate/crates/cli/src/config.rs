//! Experiment configuration file: TOML with nested sections, every key
//! optional. See `docs/config.md` for the schema.

use std::path::{Path, PathBuf};

use lesson_core::data::SynthConfig;
use lesson_core::engine::{ChannelConfig, DataConfig, LocalSgd};
use lesson_core::learner::ModelKind;
use lesson_core::population::{Placement, PopulationConfig, UniformRange};
use lesson_core::radio::PathlossModel;
use lesson_core::{Algorithm, RunConfig, StopRule};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment variable naming the MNIST directory.
pub const DATA_DIR_ENV: &str = "LESSON_DATA_DIR";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid TOML: {message}")]
    Syntax { path: PathBuf, message: String },
    #[error("{path}: key `{key}`: {message}")]
    Schema {
        path: PathBuf,
        key: String,
        message: String,
    },
    #[error("key `{key}`: {message}")]
    Invalid { key: String, message: String },
}

fn invalid(key: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub run: RunSection,
    pub channel: ChannelSection,
    pub population: PopulationSection,
    pub model: ModelSection,
    pub sgd: SgdSection,
    pub data: DataSection,
    pub sweep: SweepSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub algorithm: Algorithm,
    /// Round deadline τ in seconds.
    pub tau: f64,
    pub rounds: Option<u64>,
    pub time_budget_s: Option<f64>,
    pub seed: u64,
    pub beta: f64,
    pub eval_stride: u64,
    pub latency_jitter: Option<f64>,
    pub allow_replacement: bool,
    pub parallel_clients: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        let d = RunConfig::default();
        Self {
            algorithm: d.algorithm,
            tau: d.deadline_s,
            rounds: None,
            time_budget_s: None,
            seed: d.seed,
            beta: d.beta,
            eval_stride: d.eval_stride,
            latency_jitter: d.latency_jitter,
            allow_replacement: d.allow_replacement,
            parallel_clients: d.parallel_clients,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub bandwidth_hz: f64,
    pub noise_dbm: f64,
    pub model_size_bits: f64,
    pub pathloss: PathlossModel,
}

impl Default for ChannelSection {
    fn default() -> Self {
        let d = ChannelConfig::default();
        Self {
            bandwidth_hz: d.bandwidth_hz,
            noise_dbm: d.noise_dbm,
            model_size_bits: d.model_size_bits,
            pathloss: d.pathloss,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlacementSection {
    RadialUniform { radius_km: f64 },
    DiskArea { radius_km: f64 },
    SquareArea { side_km: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeSection {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationSection {
    pub num_clients: usize,
    pub samples_per_client: usize,
    pub placement: PlacementSection,
    pub min_distance_km: f64,
    pub tx_power_w: f64,
    pub cpu_freq_hz: RangeSection,
    pub cycles_per_sample: RangeSection,
    pub local_iter_factor: f64,
    pub target_accuracy: f64,
}

impl Default for PopulationSection {
    fn default() -> Self {
        let d = PopulationConfig::default();
        Self {
            num_clients: d.num_clients,
            samples_per_client: d.samples_per_client,
            placement: match d.placement {
                Placement::RadialUniform { radius_km } => {
                    PlacementSection::RadialUniform { radius_km }
                }
                Placement::DiskArea { radius_km } => PlacementSection::DiskArea { radius_km },
                Placement::SquareArea { side_km } => PlacementSection::SquareArea { side_km },
            },
            min_distance_km: d.min_distance_km,
            tx_power_w: d.tx_power_w,
            cpu_freq_hz: RangeSection {
                min: d.cpu_freq_hz.min,
                max: d.cpu_freq_hz.max,
            },
            cycles_per_sample: RangeSection {
                min: d.cycles_per_sample.min,
                max: d.cycles_per_sample.max,
            },
            local_iter_factor: d.local_iter_factor,
            target_accuracy: d.target_accuracy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    #[default]
    SoftmaxRegression,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelName,
    /// Hidden layer widths; MLP only (default `[64]`).
    pub hidden_dims: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgdSection {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for SgdSection {
    fn default() -> Self {
        let d = LocalSgd::default();
        Self {
            lr: d.base_lr,
            batch_size: d.batch_size,
            epochs: d.epochs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    #[default]
    Synthetic,
    Mnist,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub source: DataSource,
    /// MNIST directory; falls back to `$LESSON_DATA_DIR`.
    pub dir: Option<PathBuf>,
    pub train_samples: usize,
    pub test_samples: usize,
    pub num_classes: usize,
    pub input_dim: usize,
    pub class_radius: f64,
    /// Seed of the synthetic class means and samples (not the run seed).
    pub seed: u64,
}

impl Default for DataSection {
    fn default() -> Self {
        let s = SynthConfig::default();
        let DataConfig::Synthetic {
            train_samples,
            test_samples,
            ..
        } = DataConfig::default()
        else {
            unreachable!("synthetic data is the default")
        };
        Self {
            source: DataSource::Synthetic,
            dir: None,
            train_samples,
            test_samples,
            num_classes: s.num_classes,
            input_dim: s.input_dim,
            class_radius: s.class_radius,
            seed: s.seed,
        }
    }
}

/// Axes of a cartesian sweep; a listed axis replaces the `[run]` value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub algorithm: Option<Vec<Algorithm>>,
    pub tau: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
    pub seed: Option<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Runs executed at once; defaults to the number of CPUs.
    pub parallel_runs: Option<usize>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("results"),
            parallel_runs: None,
        }
    }
}

/// Reads and schema-checks a config file. Range checks happen when the
/// plan is resolved, after command-line overrides are applied.
pub fn read_config(path: &Path) -> Result<ConfigFile, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text, path)
}

pub fn parse_config_str(text: &str, path: &Path) -> Result<ConfigFile, ConfigError> {
    let de = toml::Deserializer::parse(text).map_err(|e| ConfigError::Syntax {
        path: path.to_path_buf(),
        message: e.message().to_string(),
    })?;
    serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Schema {
        path: path.to_path_buf(),
        key: e.path().to_string(),
        message: e.inner().message().to_string(),
    })
}

fn positive(key: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(
            key,
            format!("must be a finite positive number, got {v}"),
        ))
    }
}

fn at_least_one(key: &str, v: usize) -> Result<(), ConfigError> {
    if v >= 1 {
        Ok(())
    } else {
        Err(invalid(key, "must be at least 1"))
    }
}

fn range(key: &str, r: &RangeSection) -> Result<UniformRange, ConfigError> {
    positive(&format!("{key}.min"), r.min)?;
    positive(&format!("{key}.max"), r.max)?;
    if r.min > r.max {
        return Err(invalid(key, format!("min {} exceeds max {}", r.min, r.max)));
    }
    Ok(UniformRange::new(r.min, r.max))
}

impl ConfigFile {
    /// Checks value ranges, naming the offending key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let r = &self.run;
        positive("run.tau", r.tau)?;
        positive("run.beta", r.beta)?;
        match (r.rounds, r.time_budget_s) {
            (Some(_), Some(_)) => {
                return Err(invalid(
                    "run",
                    "set either `rounds` or `time_budget_s`, not both",
                ))
            }
            (Some(0), None) => return Err(invalid("run.rounds", "must be at least 1")),
            (None, Some(t)) => positive("run.time_budget_s", t)?,
            _ => {}
        }
        if r.eval_stride == 0 {
            return Err(invalid("run.eval_stride", "must be at least 1"));
        }
        if let Some(j) = r.latency_jitter {
            if !(j.is_finite() && j >= 0.0) {
                return Err(invalid(
                    "run.latency_jitter",
                    format!("must be non-negative, got {j}"),
                ));
            }
        }

        let c = &self.channel;
        positive("channel.bandwidth_hz", c.bandwidth_hz)?;
        positive("channel.model_size_bits", c.model_size_bits)?;
        if !c.noise_dbm.is_finite() {
            return Err(invalid("channel.noise_dbm", "must be finite"));
        }

        let p = &self.population;
        at_least_one("population.num_clients", p.num_clients)?;
        at_least_one("population.samples_per_client", p.samples_per_client)?;
        match p.placement {
            PlacementSection::RadialUniform { radius_km }
            | PlacementSection::DiskArea { radius_km } => {
                positive("population.placement.radius_km", radius_km)?
            }
            PlacementSection::SquareArea { side_km } => {
                positive("population.placement.side_km", side_km)?
            }
        }
        positive("population.min_distance_km", p.min_distance_km)?;
        if p.min_distance_km >= self.population_config()?.placement.max_distance_km() {
            return Err(invalid(
                "population.min_distance_km",
                "must be smaller than the cell",
            ));
        }
        if !(p.tx_power_w.is_finite() && p.tx_power_w >= 0.0) {
            return Err(invalid("population.tx_power_w", "must be non-negative"));
        }
        positive("population.local_iter_factor", p.local_iter_factor)?;
        if !(p.target_accuracy > 0.0 && p.target_accuracy < 1.0) {
            return Err(invalid("population.target_accuracy", "must lie in (0, 1)"));
        }

        match (self.model.kind, &self.model.hidden_dims) {
            (ModelName::SoftmaxRegression, Some(_)) => {
                return Err(invalid(
                    "model.hidden_dims",
                    "only applies to kind = \"mlp\"",
                ))
            }
            (ModelName::Mlp, Some(dims)) => {
                if dims.is_empty() {
                    return Err(invalid(
                        "model.hidden_dims",
                        "mlp needs at least one hidden layer",
                    ));
                }
                if let Some(i) = dims.iter().position(|&d| d == 0) {
                    return Err(invalid(
                        format!("model.hidden_dims[{i}]"),
                        "must be at least 1",
                    ));
                }
            }
            _ => {}
        }

        positive("sgd.lr", self.sgd.lr)?;
        at_least_one("sgd.batch_size", self.sgd.batch_size)?;
        at_least_one("sgd.epochs", self.sgd.epochs)?;

        let d = &self.data;
        if d.source == DataSource::Synthetic {
            if d.num_classes < 2 {
                return Err(invalid("data.num_classes", "must be at least 2"));
            }
            at_least_one("data.input_dim", d.input_dim)?;
            at_least_one("data.train_samples", d.train_samples)?;
            at_least_one("data.test_samples", d.test_samples)?;
            positive("data.class_radius", d.class_radius)?;
        }

        let s = &self.sweep;
        for (name, len) in [
            ("sweep.algorithm", s.algorithm.as_ref().map(Vec::len)),
            ("sweep.tau", s.tau.as_ref().map(Vec::len)),
            ("sweep.beta", s.beta.as_ref().map(Vec::len)),
            ("sweep.seed", s.seed.as_ref().map(Vec::len)),
        ] {
            if len == Some(0) {
                return Err(invalid(name, "an axis needs at least one value"));
            }
        }
        for (i, &t) in s.tau.iter().flatten().enumerate() {
            positive(&format!("sweep.tau[{i}]"), t)?;
        }
        for (i, &b) in s.beta.iter().flatten().enumerate() {
            positive(&format!("sweep.beta[{i}]"), b)?;
        }
        if self.output.parallel_runs == Some(0) {
            return Err(invalid("output.parallel_runs", "must be at least 1"));
        }
        Ok(())
    }

    fn population_config(&self) -> Result<PopulationConfig, ConfigError> {
        let p = &self.population;
        Ok(PopulationConfig {
            num_clients: p.num_clients,
            placement: match p.placement {
                PlacementSection::RadialUniform { radius_km } => {
                    Placement::RadialUniform { radius_km }
                }
                PlacementSection::DiskArea { radius_km } => Placement::DiskArea { radius_km },
                PlacementSection::SquareArea { side_km } => Placement::SquareArea { side_km },
            },
            min_distance_km: p.min_distance_km,
            tx_power_w: p.tx_power_w,
            cpu_freq_hz: range("population.cpu_freq_hz", &p.cpu_freq_hz)?,
            cycles_per_sample: range("population.cycles_per_sample", &p.cycles_per_sample)?,
            samples_per_client: p.samples_per_client,
            local_iter_factor: p.local_iter_factor,
            target_accuracy: p.target_accuracy,
        })
    }

    fn data_config(&self) -> Result<DataConfig, ConfigError> {
        let d = &self.data;
        Ok(match d.source {
            DataSource::Synthetic => DataConfig::Synthetic {
                synth: SynthConfig {
                    num_classes: d.num_classes,
                    input_dim: d.input_dim,
                    class_radius: d.class_radius,
                    seed: d.seed,
                },
                train_samples: d.train_samples,
                test_samples: d.test_samples,
            },
            DataSource::Mnist => {
                let dir = d
                    .dir
                    .clone()
                    .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
                    .ok_or_else(|| {
                        invalid(
                            "data.dir",
                            format!("MNIST needs a directory (or set {DATA_DIR_ENV})"),
                        )
                    })?;
                DataConfig::Mnist { dir }
            }
        })
    }

    /// The run every sweep point starts from.
    pub fn base_run(&self) -> Result<RunConfig, ConfigError> {
        self.validate()?;
        let r = &self.run;
        let stop = match (r.rounds, r.time_budget_s) {
            (_, Some(t)) => StopRule::TimeBudget(t),
            (Some(k), None) => StopRule::Rounds(k),
            (None, None) => RunConfig::default().stop,
        };
        Ok(RunConfig {
            algorithm: r.algorithm,
            deadline_s: r.tau,
            stop,
            seed: r.seed,
            channel: ChannelConfig {
                bandwidth_hz: self.channel.bandwidth_hz,
                noise_dbm: self.channel.noise_dbm,
                model_size_bits: self.channel.model_size_bits,
                pathloss: self.channel.pathloss,
            },
            population: self.population_config()?,
            model: match self.model.kind {
                ModelName::SoftmaxRegression => ModelKind::SoftmaxRegression,
                ModelName::Mlp => ModelKind::Mlp {
                    hidden_dims: self.model.hidden_dims.clone().unwrap_or_else(|| vec![64]),
                },
            },
            sgd: LocalSgd {
                base_lr: self.sgd.lr,
                batch_size: self.sgd.batch_size,
                epochs: self.sgd.epochs,
            },
            beta: r.beta,
            allow_replacement: r.allow_replacement,
            data: self.data_config()?,
            eval_stride: r.eval_stride,
            latency_jitter: r.latency_jitter,
            parallel_clients: r.parallel_clients,
        })
    }
}
