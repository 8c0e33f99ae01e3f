//! `otfs`: run simulation sweeps, rate curves, estimation sweeps and self-checks.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use otfs_core::harness::{
    emit_nmse_curve, emit_rate_curves, run_experiment, run_selftest, ExperimentConfig, RunOptions,
};

#[derive(Parser, Debug)]
#[command(name = "otfs", version, about = "OTFS link-level simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the BER/FER sweep of a config file.
    Run(RunArgs),
    /// Achievable-rate curves for OTFS and OFDM.
    Rates(RunArgs),
    /// Embedded-pilot NMSE against pilot SNR.
    Estimate(RunArgs),
    /// Transform, modem and AWGN invariant checks.
    Selftest {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// TOML experiment config.
    config: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Cap on trials per SNR point (draws for `rates`).
    #[arg(long)]
    trials_cap: Option<u64>,
}

impl RunArgs {
    fn load(&self) -> Result<(ExperimentConfig, RunOptions)> {
        let mut cfg =
            ExperimentConfig::load(&self.config).with_context(|| format!("loading {}", self.config.display()))?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        let opts =
            RunOptions { workers: self.workers, trials_cap: self.trials_cap, out_dir: Some(self.out_dir.clone()) };
        Ok((cfg, opts))
    }
}

fn run(command: Command) -> Result<bool> {
    match command {
        Command::Run(args) => {
            let (cfg, opts) = args.load()?;
            let out = run_experiment(&cfg, &opts)?;
            println!("{:<12} {:>8} {:>12} {:>12} {:>8} {:>7}", "output", "snr_db", "ber", "fer", "trials", "capped");
            for r in &out.records {
                println!(
                    "{:<12} {:>8} {:>12.4e} {:>12.4e} {:>8} {:>7}",
                    r.output,
                    r.snr_db,
                    r.counts.ber(),
                    r.counts.fer(),
                    r.counts.frames,
                    r.capped
                );
            }
            println!("wrote {} CSV files to {}", out.csv.len(), args.out_dir.display());
        }
        Command::Rates(args) => {
            let (cfg, opts) = args.load()?;
            let curves = emit_rate_curves(&cfg, &opts)?;
            println!("{:>8} {:>10} {:>10} {:>10}", "snr_db", "otfs", "ofdm_nocp", "ofdm_cp");
            for r in &curves.mean {
                println!("{:>8} {:>10.4} {:>10.4} {:>10.4}", r.snr_db, r.otfs, r.ofdm_nocp, r.ofdm_cp);
            }
            println!("wrote rates.csv to {}", args.out_dir.display());
        }
        Command::Estimate(args) => {
            let (cfg, opts) = args.load()?;
            let rows = emit_nmse_curve(&cfg, &opts)?;
            println!("{:>12} {:>12} {:>8}", "pilot_snr_db", "nmse", "trials");
            for r in &rows {
                println!("{:>12} {:>12.4e} {:>8}", r.pilot_snr_db, r.nmse, r.trials);
            }
            println!("wrote nmse.csv to {}", args.out_dir.display());
        }
        Command::Selftest { seed } => {
            let checks = run_selftest(seed);
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            return Ok(checks.iter().all(|c| c.passed));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
