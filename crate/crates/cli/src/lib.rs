//! Experiment driver: resolves a config file plus command-line overrides
//! into a list of runs, executes them and writes per-run CSV/JSON outputs
//! and a `summary.csv`.

pub mod config;
pub mod runner;

use std::path::PathBuf;

use lesson_core::{Algorithm, RunConfig, StopRule};

pub use config::{read_config, ConfigError, ConfigFile, DataSource};
pub use runner::{execute, RunOutcome, RunStatus, SUMMARY_CSV_HEADER};

/// Values given on the command line; each one beats the config file.
/// Setting a sweepable value pins that axis to the single value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub algorithm: Option<Algorithm>,
    pub tau: Option<f64>,
    pub beta: Option<f64>,
    pub seed: Option<u64>,
    pub rounds: Option<u64>,
    pub time_budget_s: Option<f64>,
    pub dataset: Option<DataSource>,
    pub data_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, file: &mut ConfigFile) {
        if let Some(a) = self.algorithm {
            file.run.algorithm = a;
            file.sweep.algorithm = None;
        }
        if let Some(t) = self.tau {
            file.run.tau = t;
            file.sweep.tau = None;
        }
        if let Some(b) = self.beta {
            file.run.beta = b;
            file.sweep.beta = None;
        }
        if let Some(s) = self.seed {
            file.run.seed = s;
            file.sweep.seed = None;
        }
        if let Some(k) = self.rounds {
            file.run.rounds = Some(k);
            file.run.time_budget_s = None;
        }
        if let Some(t) = self.time_budget_s {
            file.run.time_budget_s = Some(t);
            file.run.rounds = None;
        }
        if let Some(d) = self.dataset {
            file.data.source = d;
        }
        if let Some(dir) = &self.data_dir {
            file.data.dir = Some(dir.clone());
        }
        if let Some(dir) = &self.out_dir {
            file.output.dir = dir.clone();
        }
    }
}

/// Fully resolved set of runs and where their outputs go.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub runs: Vec<RunConfig>,
    pub out_dir: PathBuf,
    /// Runs executed concurrently.
    pub parallel_runs: usize,
}

impl ExperimentPlan {
    /// Expands the sweep as a cartesian product in the order
    /// algorithm × τ × β × seed (seed varies fastest).
    pub fn resolve(file: &ConfigFile) -> Result<Self, ConfigError> {
        let base = file.base_run()?;
        let s = &file.sweep;
        let algos = s.algorithm.clone().unwrap_or_else(|| vec![base.algorithm]);
        let taus = s.tau.clone().unwrap_or_else(|| vec![base.deadline_s]);
        let betas = s.beta.clone().unwrap_or_else(|| vec![base.beta]);
        let seeds = s.seed.clone().unwrap_or_else(|| vec![base.seed]);

        let mut runs = Vec::with_capacity(algos.len() * taus.len() * betas.len() * seeds.len());
        let mut tags = std::collections::HashSet::new();
        for &algorithm in &algos {
            for &deadline_s in &taus {
                for &beta in &betas {
                    for &seed in &seeds {
                        let run = RunConfig {
                            algorithm,
                            deadline_s,
                            beta,
                            seed,
                            ..base.clone()
                        };
                        let tag = lesson_core::engine::run_tag(&run);
                        if !tags.insert(tag.clone()) {
                            return Err(ConfigError::Invalid {
                                key: "sweep".into(),
                                message: format!("run `{tag}` appears twice"),
                            });
                        }
                        runs.push(run);
                    }
                }
            }
        }
        let parallel_runs = file
            .output
            .parallel_runs
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .min(runs.len());
        Ok(Self {
            runs,
            out_dir: file.output.dir.clone(),
            parallel_runs,
        })
    }
}

/// Short human description of a stop rule.
pub fn describe_stop(stop: &StopRule) -> String {
    match stop {
        StopRule::Rounds(k) => format!("{k} rounds"),
        StopRule::TimeBudget(t) => format!("{t} s simulated"),
    }
}
