//! Experiment execution and report emission.
//!
//! Every run writes three files into its output directory:
//!
//! - `metrics.csv` — header `round,acc,asr_1,...,asr_n,agg` (ASR columns are
//!   absent for benign runs), one row per evaluated round.
//! - `stealth.csv` — header `attacker,ssim,psnr`: per-trigger similarity
//!   metrics averaged over test images, computed on *unclipped* poisoned
//!   images. PSNR of an identical pair is emitted as the literal `inf`.
//! - `summary.txt` — final accuracy, per-attacker ASR at injection end and
//!   30 rounds later.
//!
//! Output is byte-identical across re-runs with the same config and seed,
//! no matter the parallelism degree.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::config::{ConfigError, DataSource, ExperimentConfig};
use crate::data::{dirichlet_partition, read_raw_bin, synth_shapes_split, DataError, Dataset};
use crate::fed::{FedError, Federation, RoundRecord, RoundTelemetry};
use crate::kernel::ModelArch;
use crate::stealth::{stealth_report, StealthError};
use crate::trigger::TriggerError;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("round {round}: {source}")]
    Round { round: usize, source: FedError },
    #[error(transparent)]
    Fed(#[from] FedError),
    #[error(transparent)]
    Trigger(#[from] TriggerError),
    #[error(transparent)]
    Stealth(#[from] StealthError),
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
}

/// Mean stealth metrics of one attacker's trigger over the test images.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StealthRow {
    pub attacker: usize,
    pub ssim: f64,
    pub psnr: f64,
}

/// ASR of one attacker measured `offset` rounds after its last injection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PersistenceRow {
    pub attacker: usize,
    /// The round the measurement refers to.
    pub round: usize,
    pub asr: f64,
}

/// Everything a run produced, including the exact bytes written to disk.
#[derive(Debug)]
pub struct ExperimentOutput {
    pub records: Vec<RoundRecord>,
    pub telemetry: Vec<RoundTelemetry>,
    pub stealth: Vec<StealthRow>,
    /// ASR at each attacker's last injection round.
    pub asr_at_injection_end: Vec<PersistenceRow>,
    /// ASR 30 rounds after each attacker's last injection (clamped to the
    /// final evaluated round if the run ends earlier).
    pub asr_30: Vec<PersistenceRow>,
    pub final_acc: f64,
    pub metrics_csv: String,
    pub stealth_csv: String,
    pub summary_txt: String,
    pub out_dir: PathBuf,
}

impl ExperimentOutput {
    /// The record of a given round, if that round was evaluated.
    pub fn record_at(&self, round: usize) -> Option<&RoundRecord> {
        self.records.iter().find(|r| r.round == round)
    }
}

/// Rounds after warmup are always evaluated; warmup rounds every
/// `warmup_every`. The final round is always evaluated.
fn should_evaluate(cfg: &ExperimentConfig, round: usize) -> bool {
    round >= cfg.fed.warmup_rounds
        || round % cfg.eval.warmup_every == 0
        || round + 1 == cfg.fed.total_rounds
}

pub(crate) fn build_datasets(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset), RunError> {
    match &cfg.data {
        DataSource::Synth { train_per_class, test_per_class, classes } => {
            let train = synth_shapes_split(cfg.fed.seed, 0, *train_per_class, *classes)?;
            let test = synth_shapes_split(cfg.fed.seed, 1, *test_per_class, *classes)?;
            Ok((train, test))
        }
        DataSource::Raw { train_path, test_path, classes } => {
            let train = read_raw_bin(train_path, *classes)?;
            let test = read_raw_bin(test_path, *classes)?;
            Ok((train, test))
        }
    }
}

fn format_metric(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v:.6}")
    }
}

fn metrics_csv(records: &[RoundRecord], n_attackers: usize) -> String {
    let mut s = String::from("round,acc");
    for i in 1..=n_attackers {
        write!(s, ",asr_{i}").unwrap();
    }
    s.push_str(",agg\n");
    for r in records {
        write!(s, "{},{}", r.round, format_metric(r.acc)).unwrap();
        for a in &r.asr {
            write!(s, ",{}", format_metric(*a)).unwrap();
        }
        writeln!(s, ",{}", r.aggregation.name()).unwrap();
    }
    s
}

fn stealth_csv(rows: &[StealthRow]) -> String {
    let mut s = String::from("attacker,ssim,psnr\n");
    for r in rows {
        writeln!(s, "{},{},{}", r.attacker, format_metric(r.ssim), format_metric(r.psnr))
            .unwrap();
    }
    s
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), RunError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| RunError::Write { path, source })
}

/// Runs one experiment end to end and writes its reports under
/// `cfg.out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput, RunError> {
    cfg.validate()?;
    let (train, test) = build_datasets(cfg)?;
    let partition =
        dirichlet_partition(&train, cfg.fed.n_clients, cfg.fed.dirichlet_alpha, cfg.fed.seed)?;
    let specs = cfg.attacker_specs();
    let arch = ModelArch::tiny_conv(cfg.data.classes());

    let mut federation =
        Federation::new(&arch, &train, &test, &partition, &specs, &cfg.fed, &cfg.defense)?;

    let mut records = Vec::new();
    let mut telemetry = Vec::new();
    for round in 0..cfg.fed.total_rounds {
        let outcome = federation
            .run_round(round, should_evaluate(cfg, round))
            .map_err(|source| RunError::Round { round, source })?;
        if let Some(record) = outcome.record {
            records.push(record);
        }
        telemetry.push(outcome.telemetry);
    }

    // Stealth report: per attacker, metrics averaged over the first
    // `stealth_images` test images, on unclipped poisoned copies.
    let n_images = cfg.eval.stealth_images.min(test.len());
    let mut stealth = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let (mut ssim_sum, mut psnr_sum) = (0.0, 0.0);
        for ex in test.examples().iter().take(n_images) {
            let (poisoned, _) = spec.trigger.apply(&ex.image, false)?;
            let report = stealth_report(&ex.image, &poisoned)?;
            ssim_sum += report.ssim;
            psnr_sum += report.psnr;
        }
        stealth.push(StealthRow {
            attacker: i + 1,
            ssim: ssim_sum / n_images as f64,
            psnr: psnr_sum / n_images as f64,
        });
    }

    let last_evaluated = records.last().map(|r| r.round).unwrap_or(0);
    let lookup_asr = |attacker: usize, round: usize| -> PersistenceRow {
        let round = round.min(last_evaluated);
        let record = records
            .iter()
            .find(|r| r.round >= round)
            .or(records.last())
            .expect("at least one evaluated round");
        PersistenceRow { attacker: attacker + 1, round: record.round, asr: record.asr[attacker] }
    };
    let asr_at_injection_end: Vec<PersistenceRow> = specs
        .iter()
        .enumerate()
        .map(|(i, s)| lookup_asr(i, s.last_injection_round()))
        .collect();
    let asr_30: Vec<PersistenceRow> = specs
        .iter()
        .enumerate()
        .map(|(i, s)| lookup_asr(i, s.last_injection_round() + 30))
        .collect();
    let final_acc = records.last().map(|r| r.acc).unwrap_or(0.0);

    let metrics_csv = metrics_csv(&records, specs.len());
    let stealth_csv = stealth_csv(&stealth);
    let mut summary = String::new();
    writeln!(summary, "rounds: {}", cfg.fed.total_rounds).unwrap();
    writeln!(summary, "clients: {} ({} per round)", cfg.fed.n_clients, cfg.fed.clients_per_round)
        .unwrap();
    writeln!(summary, "defense: {}", cfg.defense.kind.name()).unwrap();
    writeln!(summary, "final acc: {}", format_metric(final_acc)).unwrap();
    for (end, late) in asr_at_injection_end.iter().zip(&asr_30) {
        writeln!(
            summary,
            "attacker {}: asr {} at injection end (round {}), asr-30 {} (round {})",
            end.attacker,
            format_metric(end.asr),
            end.round,
            format_metric(late.asr),
            late.round
        )
        .unwrap();
    }
    for row in &stealth {
        writeln!(
            summary,
            "attacker {}: mean ssim {} mean psnr {}",
            row.attacker,
            format_metric(row.ssim),
            format_metric(row.psnr)
        )
        .unwrap();
    }

    fs::create_dir_all(&cfg.out_dir)
        .map_err(|source| RunError::Write { path: cfg.out_dir.clone(), source })?;
    write_file(&cfg.out_dir, "metrics.csv", &metrics_csv)?;
    write_file(&cfg.out_dir, "stealth.csv", &stealth_csv)?;
    write_file(&cfg.out_dir, "summary.txt", &summary)?;

    Ok(ExperimentOutput {
        records,
        telemetry,
        stealth,
        asr_at_injection_end,
        asr_30,
        final_acc,
        metrics_csv,
        stealth_csv,
        summary_txt: summary,
        out_dir: cfg.out_dir.clone(),
    })
}

/// Measured squared-pixel energy of an attacker's unclipped trigger delta on
/// a probe image (for frequency triggers this equals `s²m²` by Parseval).
pub(crate) fn trigger_energy(
    cfg: &ExperimentConfig,
    attacker: usize,
) -> Result<f64, RunError> {
    let (_, test) = build_datasets(cfg)?;
    let spec = &cfg.attacker_specs()[attacker];
    let probe = &test.example(0).image;
    let (poisoned, _) = spec.trigger.apply(probe, false)?;
    Ok(poisoned.sq_distance(probe).expect("same shape"))
}
