use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use unitychain::metrics::{build_report, emit_report, parse_scenario, MetricsReport, RunLog};
use unitychain::sim::{parse_log, run_simulation, LogRecord, Scenario, SimError, SimOutcome};

/// Deterministic Unitychain simulator.
#[derive(Parser)]
#[command(name = "unitychain", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its event log and report.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run the scenario recorded in a log.
    Replay {
        #[arg(long)]
        log: PathBuf,
        /// Fail unless the re-run log is byte-identical.
        #[arg(long)]
        verify: bool,
    },
    /// Compute metrics over an existing log.
    Metrics {
        #[arg(long)]
        log: PathBuf,
        /// Comma-separated node indices; defaults to the scenario's coalition.
        #[arg(long, value_delimiter = ',')]
        coalition: Vec<u32>,
        /// Also write metrics.csv and summary.toml here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario over many seeds.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seeds: u64,
        /// First seed; defaults to the scenario's seed or 0.
        #[arg(long)]
        first_seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    /// Bad input: exit code 1.
    Input(String),
    /// The run broke a protocol invariant: exit code 2.
    Invariant(String),
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn load_scenario(path: &Path) -> Result<Scenario, Failure> {
    parse_scenario(&read(path)?).map_err(|e| Failure::Input(format!("{}:\n{e}", path.display())))
}

fn simulate(scenario: &Scenario, seed: u64) -> Result<SimOutcome, Failure> {
    run_simulation(scenario, seed).map_err(|e| match e {
        SimError::InvalidScenario(list) => Failure::Input(list.join("\n")),
        other => Failure::Input(other.to_string()),
    })
}

fn report(text: &str, coalition: &[u32]) -> Result<(RunLog, MetricsReport), Failure> {
    let log = RunLog::parse(text).map_err(|e| Failure::Input(e.to_string()))?;
    let coalition = if coalition.is_empty() { log.scenario.coalition.clone() } else { coalition.to_vec() };
    let report = build_report(&log, (!coalition.is_empty()).then_some(&coalition[..]))
        .map_err(|e| Failure::Input(e.to_string()))?;
    Ok((log, report))
}

fn violations(log: &RunLog) -> Result<(), Failure> {
    if log.violations.is_empty() {
        Ok(())
    } else {
        Err(Failure::Invariant(log.violations.join("\n")))
    }
}

fn one_line(r: &MetricsReport) -> String {
    let s = &r.summary;
    format!(
        "seed {} horizon {} blocks {} finalized {}/{} downtime {} epochs {} violations {}",
        s.seed, s.horizon, s.blocks, s.finalized, s.submitted, s.downtime_cycles, s.epochs, s.violations
    )
}

fn run(scenario: &Path, seed: Option<u64>, out: &Path) -> Result<(), Failure> {
    let scenario = load_scenario(scenario)?;
    let seed = seed.or(scenario.seed).unwrap_or(0);
    let outcome = simulate(&scenario, seed)?;
    let text = outcome.log_text();
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("events.jsonl"), &text)?;
    let (log, report) = report(&text, &[])?;
    emit_report(&report, out)?;
    println!("{}", one_line(&report));
    violations(&log)
}

fn replay(path: &Path, verify: bool) -> Result<(), Failure> {
    let text = read(path)?;
    let records = parse_log(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let Some(LogRecord::Header { seed, scenario, .. }) = records.first() else {
        return Err(Failure::Input("log has no header".into()));
    };
    let again = simulate(scenario, *seed)?.log_text();
    if verify {
        if let Some((i, (a, b))) = text.lines().zip(again.lines()).enumerate().find(|(_, (a, b))| a != b) {
            return Err(Failure::Invariant(format!("line {} differs\n  recorded: {a}\n  replayed: {b}", i + 1)));
        }
        if text != again {
            return Err(Failure::Invariant(format!(
                "logs differ in length: recorded {} lines, replayed {}",
                text.lines().count(),
                again.lines().count()
            )));
        }
        println!("verified: {} lines identical", text.lines().count());
        return Ok(());
    }
    let (log, report) = report(&again, &[])?;
    println!("{}", one_line(&report));
    violations(&log)
}

fn metrics(path: &Path, coalition: &[u32], out: Option<&Path>) -> Result<(), Failure> {
    let (_, report) = report(&read(path)?, coalition)?;
    if let Some(dir) = out {
        emit_report(&report, dir)?;
    }
    print!("{}", report.summary_toml());
    Ok(())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => 0.0,
        n if n % 2 == 1 => v[n / 2],
        n => (v[n / 2 - 1] + v[n / 2]) / 2.0,
    }
}

fn sweep(scenario: &Path, seeds: u64, first: Option<u64>, out: Option<&Path>) -> Result<(), Failure> {
    let scenario = load_scenario(scenario)?;
    let first = first.or(scenario.seed).unwrap_or(0);
    let results: Vec<Result<(RunLog, MetricsReport), Failure>> = (first..first + seeds)
        .into_par_iter()
        .map(|seed| report(&simulate(&scenario, seed)?.log_text(), &[]))
        .collect();
    let mut csv = String::from(
        "seed,blocks,finalized,downtime_cycles,epochs,violations,shuffle_distance_mean,leader_capture_rate,max_leader_streak\n",
    );
    let mut streaks = Vec::new();
    let mut broken = Vec::new();
    for r in results {
        let (log, report) = r?;
        let s = &report.summary;
        let coalition = s.coalition.as_ref();
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            s.seed,
            s.blocks,
            s.finalized,
            s.downtime_cycles,
            s.epochs,
            s.violations,
            s.shuffle_distance_mean.map(|m| format!("{m:.6}")).unwrap_or_default(),
            coalition.map(|c| format!("{:.6}", c.leader_capture_rate)).unwrap_or_default(),
            coalition.map(|c| c.max_leader_streak.to_string()).unwrap_or_default(),
        );
        if let Some(c) = coalition {
            streaks.push(c.max_leader_streak as f64);
        }
        broken.extend(log.violations.iter().map(|v| format!("seed {}: {v}", s.seed)));
    }
    print!("{csv}");
    if !streaks.is_empty() {
        println!("median max_leader_streak {}", median(streaks));
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("sweep.csv"), &csv)?;
    }
    if broken.is_empty() {
        Ok(())
    } else {
        Err(Failure::Invariant(broken.join("\n")))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { scenario, seed, out } => run(scenario, *seed, out),
        Command::Replay { log, verify } => replay(log, *verify),
        Command::Metrics { log, coalition, out } => metrics(log, coalition, out.as_deref()),
        Command::Sweep { scenario, seeds, first_seed, out } => sweep(scenario, *seeds, *first_seed, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Invariant(msg)) => {
            eprintln!("invariant violation:\n{msg}");
            ExitCode::from(2)
        }
    }
}
