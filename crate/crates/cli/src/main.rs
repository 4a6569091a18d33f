use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use orderlab::harness::{
    compare_arms_from, recovery_time, run_bob_experiment, run_bop_experiment, run_experiment, run_paired, run_sweep,
    run_theory, summary_csv, theory_csv, DatasetSpec, ExperimentConfig, SweepGrid, TheoryConfig,
};
use orderlab::metrics::MetricsLog;
use orderlab::{Error, Result};
use serde_json::json;

/// Data-ordering attack laboratory.
#[derive(Parser)]
#[command(name = "orderlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory with MNIST IDX files, or where generated digits are cached.
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Benign baseline run.
    Train(RunArgs),
    /// BRRR attack run, paired with its baseline.
    Attack(RunArgs),
    /// Batch-order backdoor run.
    Bob(RunArgs),
    /// Batch-order poisoning of a single test point.
    Bop(RunArgs),
    /// Numerical checks of the ordering theory.
    Theory {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cartesian sweep of paired runs.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Delta at the best test-loss epoch of two metrics CSVs.
    Compare {
        baseline: PathBuf,
        attacked: PathBuf,
        /// Only consider epochs from this one on.
        #[arg(long, default_value_t = 1)]
        from_epoch: usize,
        /// Also report recovery time after this attacked epoch.
        #[arg(long)]
        attack_epoch: Option<usize>,
    },
}

fn apply_overrides(cfg: &mut ExperimentConfig, a: &RunArgs) {
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(o) = &a.out {
        cfg.out_dir = Some(o.clone());
    }
    if let (Some(d), DatasetSpec::Digits { dir, .. }) = (&a.data_dir, &mut cfg.dataset) {
        *dir = Some(d.clone());
    }
}

fn load(a: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    apply_overrides(&mut cfg, a);
    Ok(cfg)
}

fn print(v: serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(&v).expect("json"));
}

fn write_out(dir: Option<&Path>, name: &str, text: &str) -> Result<()> {
    match dir {
        Some(d) => {
            std::fs::create_dir_all(d)?;
            std::fs::write(d.join(name), text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => {
            let cfg = load(&a)?.baseline();
            let log = run_experiment(&cfg)?;
            print(json!({ "run_id": cfg.run_id(), "final": log.rows.last() }));
        }
        Command::Attack(a) => {
            let cfg = load(&a)?;
            if cfg.attack.is_none() {
                return Err(Error::Validation(vec!["attack".into()]));
            }
            let (base, att) = run_paired(&cfg)?;
            let delta = compare_arms_from(&base, &att, 1)?;
            print(json!({ "run_id": cfg.run_id(), "delta": delta }));
        }
        Command::Bob(a) => {
            let cfg = load(&a)?;
            let out = run_bob_experiment(&cfg)?;
            print(json!({
                "run_id": cfg.run_id(),
                "final_trigger": out.final_trigger,
                "final_test_accuracy": out.final_test_accuracy,
                "injected_batches": out.injected.len(),
            }));
        }
        Command::Bop(a) => {
            let cfg = load(&a)?;
            let out = run_bop_experiment(&cfg)?;
            print(json!({
                "run_id": cfg.run_id(),
                "flipped_after": out.flipped_after,
                "test_accuracy_before": out.test_accuracy_before,
                "test_accuracy_after": out.test_accuracy_after,
            }));
        }
        Command::Theory { config, seed, out } => {
            let mut cfg = match config {
                Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)
                    .map_err(|e| Error::Validation(vec![format!("json: {e}")]))?,
                None => TheoryConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            write_out(out.as_deref(), "theory.csv", &theory_csv(&run_theory(&cfg)?))?;
        }
        Command::Sweep { run, workers } => {
            let mut grid = SweepGrid::from_json(&std::fs::read_to_string(&run.config)?)?;
            apply_overrides(&mut grid.base, &run);
            let out = run_sweep(&grid, workers)?;
            if grid.base.out_dir.is_none() {
                print!("{}", summary_csv(&out.cells));
            }
        }
        Command::Compare { baseline, attacked, from_epoch, attack_epoch } => {
            let b = MetricsLog::read_csv(&baseline)?;
            let a = MetricsLog::read_csv(&attacked)?;
            let delta = compare_arms_from(&b, &a, from_epoch)?;
            let recovery = attack_epoch.map(|e| recovery_time(&b, &a, e, 0.01)).transpose()?;
            print(json!({ "delta": delta, "recovery_epochs": recovery }));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
