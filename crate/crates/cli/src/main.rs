//! `rcl run --config <file> --out <csv> [--seeds a..b] [--trials N] [--quiet]`
//!
//! Exit status: 0 when every seed ran clean, 2 when some seed recorded a
//! violation, 1 on configuration or I/O errors. `RCL_SEED_OFFSET` shifts
//! every seed, which lets CI shard one config across jobs.

use std::ops::Range;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rcl::scenario::{run_scenario_with, SeedRow};
use rcl::{write_report, ScenarioConfig};

#[derive(Parser)]
#[command(name = "rcl", version, about = "Longest-chain consensus simulator over pluggable resource allocators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of a scenario and write the CSV report.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Half-open seed range `a..b`, or `a..=b`, replacing the config's list.
        #[arg(long, value_parser = parse_seeds)]
        seeds: Option<Range<u64>>,
        /// Number of seeds, counted from the first seed of the list.
        #[arg(long)]
        trials: Option<u64>,
        /// No per-seed progress on stderr.
        #[arg(long)]
        quiet: bool,
    },
}

fn parse_seeds(s: &str) -> Result<Range<u64>, String> {
    let (a, b, inclusive) = match s.split_once("..=") {
        Some((a, b)) => (a, b, true),
        None => {
            let (a, b) = s.split_once("..").ok_or_else(|| format!("expected a..b, got {s:?}"))?;
            (a, b, false)
        }
    };
    let a: u64 = a.trim().parse().map_err(|e| format!("bad range start {a:?}: {e}"))?;
    let b: u64 = b.trim().parse().map_err(|e| format!("bad range end {b:?}: {e}"))?;
    let end = if inclusive { b.checked_add(1).ok_or("range end overflows")? } else { b };
    if end <= a {
        return Err(format!("empty seed range {s:?}"));
    }
    Ok(a..end)
}

fn seed_offset() -> Result<u64, String> {
    match std::env::var("RCL_SEED_OFFSET") {
        Ok(v) => v.trim().parse().map_err(|e| format!("RCL_SEED_OFFSET={v:?}: {e}")),
        Err(std::env::VarError::NotPresent) => Ok(0),
        Err(e) => Err(format!("RCL_SEED_OFFSET: {e}")),
    }
}

fn seeds_for(cfg: &ScenarioConfig, range: Option<Range<u64>>, trials: Option<u64>, offset: u64) -> Result<Vec<u64>, String> {
    let mut seeds: Vec<u64> = match range {
        Some(r) => r.collect(),
        None => cfg.seeds.clone(),
    };
    if let Some(n) = trials {
        let start = seeds.first().copied().unwrap_or(0);
        seeds = (start..start.checked_add(n).ok_or("trial count overflows")?).collect();
    }
    seeds
        .into_iter()
        .map(|s| s.checked_add(offset).ok_or_else(|| format!("seed {s} + offset {offset} overflows")))
        .collect()
}

fn progress(row: &SeedRow) {
    let v: Vec<String> = row.violations.iter().map(|(k, n)| format!("{k:?}={n}")).collect();
    eprintln!(
        "seed {}: longest {} honest {} byz {} success {} violations [{}]",
        row.seed,
        row.metrics.longest_len,
        row.metrics.honest_blocks,
        row.metrics.byz_blocks,
        row.outcome.success,
        v.join(" ")
    );
}

fn run(config: PathBuf, out: PathBuf, seeds: Option<Range<u64>>, trials: Option<u64>, quiet: bool) -> Result<bool, String> {
    let mut cfg = ScenarioConfig::load(&config).map_err(|e| e.to_string())?;
    cfg.seeds = seeds_for(&cfg, seeds, trials, seed_offset()?)?;
    for w in cfg.warnings() {
        eprintln!("warning: {w}");
    }
    let report = run_scenario_with(&cfg, |row| {
        if !quiet {
            progress(row);
        }
    })
    .map_err(|e| format!("{}: {e}", config.display()))?;
    write_report(&report, &out).map_err(|e| e.to_string())?;
    if !quiet {
        eprintln!("wrote {} rows to {}", report.rows.len(), out.display());
    }
    Ok(report.has_violations())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, seeds, trials, quiet } => run(config, out, seeds, trials, quiet),
    };
    match result {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
