use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, Parser};
use lesson_cli::{
    describe_stop, execute, read_config, ConfigFile, DataSource, ExperimentPlan, Overrides,
};
use lesson_core::Algorithm;

/// Simulate semi-synchronous wireless federated learning (tiered LESSON
/// scheduling, FedAvg and FedCS) and write per-round results.
///
/// Values come from, in increasing priority: built-in defaults, the
/// `--config` file, command-line flags. A flag for a sweepable value
/// (algorithm, tau, beta, seed) replaces the corresponding sweep axis.
#[derive(Debug, Parser)]
#[command(name = "lesson", version)]
struct Cli {
    /// TOML experiment config (see docs/config.md).
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Aggregation strategy: lesson, fedavg or fedcs.
    #[arg(long, value_parser = parse_algorithm)]
    algo: Option<Algorithm>,
    /// Round deadline τ in seconds.
    #[arg(long)]
    tau: Option<f64>,
    /// Dirichlet concentration of the label partition.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Stop after this many rounds.
    #[arg(long, conflicts_with = "time_budget")]
    rounds: Option<u64>,
    /// Stop at this much simulated time in seconds.
    #[arg(long)]
    time_budget: Option<f64>,
    #[arg(long, value_enum)]
    dataset: Option<DataSource>,
    /// MNIST directory with the four IDX files (default: `data.dir`,
    /// then $LESSON_DATA_DIR).
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overwrite existing output files.
    #[arg(long)]
    force: bool,
    /// List the resolved runs and exit without simulating.
    #[arg(long)]
    dry_run: bool,
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse()
}

fn main() -> ExitCode {
    if std::env::args_os().len() <= 1 {
        // Printing help can only fail on a closed stdout; nothing to report then.
        let _ = Cli::command().print_help();
        return ExitCode::SUCCESS;
    }
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// Returns whether every run succeeded.
fn run(cli: Cli) -> anyhow::Result<bool> {
    let mut file = match &cli.config {
        Some(path) => read_config(path)?,
        None => ConfigFile::default(),
    };
    Overrides {
        algorithm: cli.algo,
        tau: cli.tau,
        beta: cli.beta,
        seed: cli.seed,
        rounds: cli.rounds,
        time_budget_s: cli.time_budget,
        dataset: cli.dataset,
        data_dir: cli.data_dir,
        out_dir: cli.out,
    }
    .apply(&mut file);
    let plan = ExperimentPlan::resolve(&file)?;

    if cli.dry_run {
        for r in &plan.runs {
            println!(
                "{}  ({})",
                lesson_core::engine::run_tag(r),
                describe_stop(&r.stop)
            );
        }
        return Ok(true);
    }
    log::info!(
        "{} run(s), {} at a time, writing to {}",
        plan.runs.len(),
        plan.parallel_runs,
        plan.out_dir.display()
    );
    let outcomes = execute(&plan, cli.force)?;
    let failed = outcomes.iter().filter(|o| !o.is_ok()).count();
    if failed > 0 {
        eprintln!(
            "error: {failed} of {} run(s) failed; see summary.csv",
            outcomes.len()
        );
    }
    Ok(failed == 0)
}
