//! Executes a plan: one simulation per run, outputs written atomically.

use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use lesson_core::engine::{run_tag, write_clients_csv, write_rounds_csv, RunManifest, RunSummary};
use lesson_core::{RunConfig, Simulation};
use rayon::prelude::*;
use serde::Serialize;

use crate::ExperimentPlan;

pub const SUMMARY_FILE: &str = "summary.csv";

pub const SUMMARY_CSV_HEADER: [&str; 14] = [
    "tag",
    "algo",
    "tau",
    "beta",
    "seed",
    "status",
    "rounds",
    "final_sim_time_s",
    "final_accuracy",
    "final_loss",
    "max_tier",
    "tier1_clients",
    "max_latency_s",
    "error",
];

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Ok(RunSummary),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub tag: String,
    pub config: RunConfig,
    pub status: RunStatus,
}

impl RunOutcome {
    pub fn is_ok(&self) -> bool {
        matches!(self.status, RunStatus::Ok(_))
    }
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    tag: &'a str,
    algo: &'a str,
    tau: f64,
    beta: f64,
    seed: u64,
    status: &'static str,
    rounds: Option<u64>,
    final_sim_time_s: Option<f64>,
    final_accuracy: Option<f64>,
    final_loss: Option<f64>,
    max_tier: Option<u32>,
    tier1_clients: Option<usize>,
    max_latency_s: Option<f64>,
    error: &'a str,
}

/// Output files of one run, relative to the output directory.
pub fn run_files(tag: &str) -> [String; 3] {
    [
        format!("{tag}.rounds.csv"),
        format!("{tag}.clients.csv"),
        format!("{tag}.manifest.json"),
    ]
}

/// Writes `path` via a temporary file in the same directory, so readers
/// never see a half-written file.
fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("cannot create a temporary file in {}", dir.display()))?;
    let mut w = BufWriter::new(tmp);
    fill(&mut w)?;
    let tmp = w.into_inner().map_err(|e| e.into_error())?;
    tmp.persist(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn run_one(cfg: &RunConfig, out_dir: &Path) -> Result<RunSummary> {
    let tag = run_tag(cfg);
    let sim = Simulation::prepare(cfg.clone())?;
    let records = sim.run()?.records;
    let [rounds, clients, manifest] = run_files(&tag);
    write_atomic(&out_dir.join(rounds), |w| {
        Ok(write_rounds_csv(w, &records, cfg)?)
    })?;
    write_atomic(&out_dir.join(clients), |w| Ok(write_clients_csv(w, &sim)?))?;
    let manifest_value = RunManifest::new(&sim, &records);
    write_atomic(&out_dir.join(manifest), |w| {
        serde_json::to_writer_pretty(&mut *w, &manifest_value)?;
        writeln!(w)?;
        Ok(())
    })?;
    Ok(manifest_value.summary)
}

/// Files the plan would overwrite.
pub fn collisions(plan: &ExperimentPlan) -> Vec<PathBuf> {
    plan.runs
        .iter()
        .flat_map(|r| run_files(&run_tag(r)))
        .chain(std::iter::once(SUMMARY_FILE.to_string()))
        .map(|f| plan.out_dir.join(f))
        .filter(|p| p.exists())
        .collect()
}

/// Runs every configuration in the plan. A failing run is recorded in the
/// summary and does not stop the others; the caller decides the exit code.
/// Existing outputs are an error unless `force` is set.
pub fn execute(plan: &ExperimentPlan, force: bool) -> Result<Vec<RunOutcome>> {
    std::fs::create_dir_all(&plan.out_dir)
        .with_context(|| format!("cannot create output directory {}", plan.out_dir.display()))?;
    if !force {
        let existing = collisions(plan);
        if let Some(first) = existing.first() {
            anyhow::bail!(
                "{} output file(s) already exist (first: {}); pass --force to overwrite",
                existing.len(),
                first.display()
            );
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.parallel_runs.max(1))
        .build()
        .context("cannot start the run pool")?;
    let outcomes: Vec<RunOutcome> = pool.install(|| {
        plan.runs
            .par_iter()
            .map(|cfg| {
                let tag = run_tag(cfg);
                log::info!("start {tag}");
                let status = match run_one(cfg, &plan.out_dir) {
                    Ok(summary) => {
                        log::info!(
                            "done  {tag}: {} rounds, {:.1} s simulated, accuracy {}",
                            summary.rounds,
                            summary.final_sim_time_s,
                            summary
                                .final_accuracy
                                .map_or("-".into(), |a| format!("{a:.4}"))
                        );
                        RunStatus::Ok(summary)
                    }
                    Err(e) => {
                        let msg = format!("{e:#}");
                        log::error!("fail  {tag}: {msg}");
                        RunStatus::Failed(msg)
                    }
                };
                RunOutcome {
                    tag,
                    config: cfg.clone(),
                    status,
                }
            })
            .collect()
    });

    write_atomic(&plan.out_dir.join(SUMMARY_FILE), |w| {
        write_summary(w, &outcomes)
    })?;
    Ok(outcomes)
}

pub fn write_summary(out: &mut dyn Write, outcomes: &[RunOutcome]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(SUMMARY_CSV_HEADER)?;
    for o in outcomes {
        let s = match &o.status {
            RunStatus::Ok(s) => Some(s),
            RunStatus::Failed(_) => None,
        };
        w.serialize(SummaryRow {
            tag: &o.tag,
            algo: o.config.algorithm.as_str(),
            tau: o.config.deadline_s,
            beta: o.config.beta,
            seed: o.config.seed,
            status: if s.is_some() { "ok" } else { "failed" },
            rounds: s.map(|s| s.rounds),
            final_sim_time_s: s.map(|s| s.final_sim_time_s),
            final_accuracy: s.and_then(|s| s.final_accuracy),
            final_loss: s.and_then(|s| s.final_loss),
            max_tier: s.map(|s| s.max_tier),
            tier1_clients: s.map(|s| s.tier1_clients),
            max_latency_s: s.map(|s| s.max_latency_s),
            error: match &o.status {
                RunStatus::Failed(m) => m,
                RunStatus::Ok(_) => "",
            },
        })?;
    }
    w.flush()?;
    Ok(())
}
