//! `agora` command-line runner: experiment grids, store inspection, log
//! replay and calibration.
//!
//! Results go to stdout as JSON; progress goes to stderr unless `--quiet`.
//! Exit codes: 0 success, 1 failed assertion or verification, 2 usage or
//! input error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use agora_core::arena::{read_log, verify_log, LogRecord};
use agora_core::asat::{calibrate, CalibrationTargets};
use agora_core::csma::MemoryStore;
use agora_core::experiment::{
    checks, emit_report, read_summary, reaggregate, run_grid, ExperimentConfig, ExperimentError,
    ExperimentKind,
};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "agora",
    version,
    about = "Curriculum-training and hidden-role arena simulations"
)]
struct Cli {
    /// Suppress progress output on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GridArgs {
    /// Experiment config (JSON).
    config: PathBuf,
    /// Override the master seed (first episode seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for report files.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run an ASAT training grid.
    RunAsat(GridArgs),
    /// Run an arena condition grid.
    RunArena(GridArgs),
    /// Print a memory store's profile and check it against its session log.
    InspectStore { path: PathBuf },
    /// Summarize an episode log, optionally re-checking every invariant.
    Replay {
        log: PathBuf,
        /// Re-check witness soundness and energy conservation, then re-simulate.
        #[arg(long)]
        verify: bool,
    },
    /// Fit the growth model to calibration targets (JSON).
    Calibrate { config: PathBuf },
    /// Rebuild a report from its raw records and compare with its summary.
    Report { dir: PathBuf },
}

enum Failure {
    Usage(String),
    Failed(String),
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Config(_) | ExperimentError::Format { .. } => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Failed(other.to_string()),
        }
    }
}

fn print_json(value: &serde_json::Value) {
    println!(
        "{}",
        serde_json::to_string(value).expect("json values serialize")
    );
}

fn progress(quiet: bool, msg: &str) {
    if !quiet {
        eprintln!("{msg}");
    }
}

fn run_grid_command(args: &GridArgs, kind: ExperimentKind, quiet: bool) -> Result<(), Failure> {
    let mut config = ExperimentConfig::from_json_file(&args.config)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    if config.kind != kind {
        return Err(Failure::Usage(format!(
            "{} holds a {:?} config",
            args.config.display(),
            config.kind
        )));
    }
    if let Some(seed) = args.seed {
        config.seed_base = seed;
    }
    if let Some(out) = &args.out {
        config.output_dir = Some(out.clone());
    }
    let out = config
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("agora-out"));
    config.output_dir = Some(out.clone());

    let start = Instant::now();
    progress(
        quiet,
        &format!(
            "running {:?} with {} seeds per condition",
            kind, config.episodes_per_condition
        ),
    );
    let run = run_grid(&config)?;
    emit_report(&run, &out)?;
    progress(
        quiet,
        &format!(
            "done in {:.1}s; report in {}",
            start.elapsed().as_secs_f64(),
            out.display()
        ),
    );

    let results = if config.acceptance {
        checks(&run.report)
    } else {
        Vec::new()
    };
    print_json(&json!({
        "output_dir": out,
        "report": run.report,
        "checks": results,
    }));
    let failed: Vec<_> = results
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.as_str())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Failed(format!(
            "failed assertions: {}",
            failed.join(", ")
        )))
    }
}

fn inspect_store(path: &Path) -> Result<(), Failure> {
    let store = MemoryStore::open(path).map_err(|e| Failure::Failed(e.to_string()))?;
    let rebuilt = store
        .rebuild_profile()
        .map_err(|e| Failure::Failed(e.to_string()))?;
    let consistent = rebuilt == *store.profile();
    print_json(&json!({
        "root": store.root(),
        "sessions": store.last_session_id(),
        "axioms_hash": store.axioms().content_hash(),
        "mean_score": store.profile().capabilities.mean_score(),
        "proficient_count": store.profile().capabilities.proficient_count(),
        "profile": store.profile(),
        "consistent": consistent,
    }));
    if consistent {
        Ok(())
    } else {
        Err(Failure::Failed(
            "rebuilt profile differs from the stored profile".into(),
        ))
    }
}

fn replay(log: &Path, verify: bool, quiet: bool) -> Result<(), Failure> {
    let records = read_log(log).map_err(|e| Failure::Usage(e.to_string()))?;
    if verify {
        let summary = verify_log(&records, true)
            .map_err(|e| Failure::Failed(format!("verification failed: {e}")))?;
        progress(quiet, "log verified");
        print_json(&json!({ "status": "log verified", "summary": summary }));
        return Ok(());
    }
    let header = records.iter().find_map(|r| match r {
        LogRecord::Header(h) => Some(h),
        _ => None,
    });
    let summary = records.iter().rev().find_map(|r| match r {
        LogRecord::Summary(s) => Some(s),
        _ => None,
    });
    let events = records
        .iter()
        .filter(|r| matches!(r, LogRecord::Event(_)))
        .count();
    print_json(&json!({
        "seed": header.map(|h| h.config.seed),
        "roles": header.map(|h| &h.roles),
        "events": events,
        "summary": summary,
    }));
    Ok(())
}

fn run_calibration(config: &Path, quiet: bool) -> Result<(), Failure> {
    let text = std::fs::read_to_string(config)
        .map_err(|e| Failure::Usage(format!("{}: {e}", config.display())))?;
    let targets: CalibrationTargets = serde_json::from_str(&text)
        .map_err(|e| Failure::Usage(format!("{}: {e}", config.display())))?;
    progress(quiet, "fitting growth model");
    let cal = calibrate(&targets, 0..256);
    print_json(&json!(cal));
    Ok(())
}

fn report(dir: &Path) -> Result<(), Failure> {
    let summary = read_summary(dir)?;
    let rebuilt = reaggregate(dir)?;
    let matches = rebuilt == summary;
    print_json(&json!({ "report": rebuilt, "matches_summary": matches }));
    if matches {
        Ok(())
    } else {
        Err(Failure::Failed(
            "re-aggregated records differ from the summary".into(),
        ))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let quiet = cli.quiet;
    let result = match &cli.command {
        Command::RunAsat(args) => run_grid_command(args, ExperimentKind::AsatGrid, quiet),
        Command::RunArena(args) => run_grid_command(args, ExperimentKind::ArenaGrid, quiet),
        Command::InspectStore { path } => inspect_store(path),
        Command::Replay { log, verify } => replay(log, *verify, quiet),
        Command::Calibrate { config } => run_calibration(config, quiet),
        Command::Report { dir } => report(dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Failed(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
