use std::path::Path;
use std::process::{Command, Output};

use lesson_cli::SUMMARY_CSV_HEADER;
use lesson_core::engine::{read_rounds_csv, CLIENTS_CSV_HEADER, ROUNDS_CSV_HEADER};

const SMALL: &str = r#"
[run]
rounds = 5

[population]
num_clients = 12
samples_per_client = 120

[data]
train_samples = 3000
test_samples = 600
input_dim = 16
"#;

fn lesson(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lesson"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("exp.toml");
    std::fs::write(&path, format!("{SMALL}\n{extra}")).unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(Result::unwrap).collect()
}

fn header(path: &Path) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.headers().unwrap().iter().map(str::to_string).collect()
}

#[test]
fn no_arguments_prints_help() {
    let o = lesson(&[]);
    assert!(o.status.success());
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("Usage: lesson"), "{out}");
    assert!(out.contains("--config"));
}

#[test]
fn default_run_writes_every_round() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = lesson(&[
        "--algo", "lesson", "--tau", "20", "--rounds", "100", "--seed", "7", "--out", out,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let tag = "lesson_tau20_beta1_seed7";
    let rounds_path = dir.path().join(format!("{tag}.rounds.csv"));
    assert_eq!(header(&rounds_path), ROUNDS_CSV_HEADER);
    let rows = read_rounds_csv(std::fs::File::open(&rounds_path).unwrap()).unwrap();
    assert_eq!(rows.len(), 100);
    assert_eq!(rows.last().unwrap().sim_time_s, 2000.0);
    assert!(rows
        .iter()
        .all(|r| r.algo == "lesson" && r.tau == 20.0 && r.seed == 7));

    let clients = dir.path().join(format!("{tag}.clients.csv"));
    let h = header(&clients);
    assert_eq!(h[..CLIENTS_CSV_HEADER.len()], CLIENTS_CSV_HEADER);
    assert_eq!(
        h.len(),
        CLIENTS_CSV_HEADER.len() + 10,
        "one count column per class"
    );
    assert_eq!(csv_rows(&clients).len(), 50);

    let manifest: serde_json::Value = serde_json::from_slice(
        &std::fs::read(dir.path().join(format!("{tag}.manifest.json"))).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["tag"], tag);
    assert_eq!(manifest["config"]["seed"], 7);
    assert_eq!(manifest["summary"]["rounds"], 100);

    let summary = dir.path().join("summary.csv");
    assert_eq!(header(&summary), SUMMARY_CSV_HEADER);
    let rows = csv_rows(&summary);
    assert_eq!(rows.len(), 1);
    assert_eq!(&rows[0][0], tag);
    assert_eq!(&rows[0][5], "ok");
}

#[test]
fn fedavg_rounds_last_as_long_as_the_slowest_client() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("out");
    let o = lesson(&[
        "-c",
        &cfg,
        "--algo",
        "fedavg",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let slowest = csv_rows(&out.join("fedavg_tau10_beta1_seed0.clients.csv"))
        .iter()
        .map(|r| r[7].parse::<f64>().unwrap())
        .fold(0.0, f64::max);
    let rows = csv_rows(&out.join("fedavg_tau10_beta1_seed0.rounds.csv"));
    assert_eq!(rows.len(), 5);
    let mut prev = 0.0;
    for r in &rows {
        let t: f64 = r[1].parse().unwrap();
        assert!(
            (t - prev - slowest).abs() < 1e-9 * t,
            "{t} after {prev}, slowest {slowest}"
        );
        assert_eq!(&r[2], "12");
        prev = t;
    }
}

#[test]
fn sweep_writes_one_summary_row_per_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[sweep]\ntau = [10, 20, 60]\nseed = [0, 1]\n");
    let out = dir.path().join("out");
    let o = lesson(&["--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv_rows(&out.join("summary.csv"));
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| &r[5] == "ok" && &r[6] == "5"));
    assert_eq!(std::fs::read_dir(&out).unwrap().count(), 6 * 3 + 1);
    let listed = lesson(&[
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--dry-run",
        "--seed",
        "4",
    ]);
    assert_eq!(String::from_utf8_lossy(&listed.stdout).lines().count(), 3);
}

#[test]
fn existing_outputs_need_force() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("out");
    let args = ["--config", cfg.as_str(), "--out", out.to_str().unwrap()];
    assert!(lesson(&args).status.success());
    let rounds = out.join("lesson_tau10_beta1_seed0.rounds.csv");
    std::fs::write(&rounds, "sentinel").unwrap();

    let again = lesson(&args);
    assert_eq!(again.status.code(), Some(1));
    assert!(stderr(&again).contains("--force"), "{}", stderr(&again));
    assert_eq!(std::fs::read_to_string(&rounds).unwrap(), "sentinel");

    let forced = lesson(&[&args[..], &["--force"]].concat());
    assert!(forced.status.success(), "{}", stderr(&forced));
    assert_eq!(csv_rows(&rounds).len(), 5);
}

#[test]
fn failed_runs_are_reported_and_others_kept() {
    // FedAvg diverges in round 1; FedCS has nobody under a 0.25 s deadline
    // and so never trains.
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[sgd]\nlr = 1e308\n[sweep]\nalgorithm = [\"fedavg\", \"fedcs\"]\n",
    );
    let out = dir.path().join("out");
    let o = lesson(&[
        "--config",
        &cfg,
        "--tau",
        "0.25",
        "--rounds",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(
        stderr(&o).contains("1 of 2 run(s) failed"),
        "{}",
        stderr(&o)
    );

    let rows = csv_rows(&out.join("summary.csv"));
    assert_eq!(rows.len(), 2);
    assert_eq!((&rows[0][1], &rows[0][5]), ("fedavg", "failed"));
    assert!(rows[0][13].contains("round 1"), "{:?}", rows[0]);
    assert_eq!((&rows[1][1], &rows[1][5]), ("fedcs", "ok"));
    assert!(out.join("fedcs_tau0.25_beta1_seed0.rounds.csv").exists());
    assert!(!out.join("fedavg_tau0.25_beta1_seed0.rounds.csv").exists());
}

#[test]
fn bad_input_is_reported_with_its_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[sgd]\nbatch_size = \"twenty\"\n");
    let o = lesson(&["--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("sgd.batch_size"), "{}", stderr(&o));

    let o = lesson(&["--algo", "fedprox"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("fedprox"));

    let o = lesson(&["--rounds", "3", "--time-budget", "10"]);
    assert_eq!(o.status.code(), Some(2));

    let o = lesson(&["--population-size", "3"]);
    assert_eq!(o.status.code(), Some(2));
}
