//! Command-line entry point.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use fedsim::fed::DefenseKind;
use fedsim::harness::{
    ablate_replay, load_config, run_experiment, sweep, ExperimentConfig, SweepParam,
};

#[derive(Parser)]
#[command(name = "fedsim", version, about = "Simulate federated learning under multi-target backdoor attacks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOpts {
    /// Experiment config file.
    config: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the config's defense: none, clipcluster, or dpfedavg.
    #[arg(long, value_parser = parse_defense)]
    defense: Option<DefenseKind>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write metrics.csv, stealth.csv, summary.txt.
    Run(CommonOpts),
    /// Run the experiment once per value of a swept parameter.
    Sweep {
        #[command(flatten)]
        common: CommonOpts,
        /// Parameter to sweep: block, magnitude, ratio, block_size,
        /// interval, or targets.
        #[arg(long)]
        param: String,
        /// Comma-separated values (slash-separated lists within a value,
        /// e.g. --values 15/20/25,5/15/25).
        #[arg(long)]
        values: String,
    },
    /// Run the paired replay-on/replay-off comparison.
    AblateReplay(CommonOpts),
}

fn parse_defense(s: &str) -> Result<DefenseKind, String> {
    DefenseKind::parse(s).ok_or_else(|| format!("unknown defense `{s}` (expected none, clipcluster, or dpfedavg)"))
}

fn load_with_overrides(opts: &CommonOpts) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = load_config(&opts.config)
        .with_context(|| format!("loading {}", opts.config.display()))?;
    if let Some(seed) = opts.seed {
        cfg.fed.seed = seed;
    }
    if let Some(out) = &opts.out {
        cfg.out_dir = out.clone();
    }
    if let Some(kind) = opts.defense {
        cfg.defense.kind = kind;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn real_main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(opts) => {
            let cfg = load_with_overrides(&opts)?;
            let out = run_experiment(&cfg)?;
            println!("wrote {}", out.out_dir.join("metrics.csv").display());
            println!("final acc {:.4}", out.final_acc);
            for row in &out.asr_30 {
                println!(
                    "attacker {}: asr-30 {:.4} (round {})",
                    row.attacker, row.asr, row.round
                );
            }
        }
        Command::Sweep { common, param, values } => {
            let cfg = load_with_overrides(&common)?;
            let param = SweepParam::parse(&param)?;
            let values: Vec<String> =
                values.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
            let out = sweep(&cfg, param, &values)?;
            println!("wrote {}", cfg.out_dir.join("sweep.csv").display());
            println!("{}", out.comparison_csv.trim_end());
        }
        Command::AblateReplay(opts) => {
            let cfg = load_with_overrides(&opts)?;
            let out = ablate_replay(&cfg)?;
            println!("wrote {}", cfg.out_dir.join("ablation.csv").display());
            println!("{}", out.comparison_csv.trim_end());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
