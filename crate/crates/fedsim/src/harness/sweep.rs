//! Sensitivity sweeps and the replay ablation.

use std::fmt::Write as _;
use std::fs;

use thiserror::Error;

use super::config::{defaults, ExperimentConfig, TriggerKind};
use super::experiment::{run_experiment, trigger_energy, ExperimentOutput, RunError};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("unknown sweep parameter `{0}` (expected one of: block, magnitude, ratio, block_size, interval, targets)")]
    UnknownParam(String),
    #[error("value `{value}` invalid for parameter {param}: {reason}")]
    BadValue { param: &'static str, value: String, reason: String },
    #[error("sweep needs at least one value")]
    NoValues,
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("cannot write {path}: {source}")]
    Write { path: std::path::PathBuf, source: std::io::Error },
}

/// Sweepable parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    /// Diagonal block origins, one per attacker: `15/20/25`.
    Block,
    /// Perturbation magnitude applied to every frequency trigger: `100`.
    Magnitude,
    /// Per-batch sample counts `replay/replay/own`, e.g. `3/3/8`.
    Ratio,
    /// Frequency block side length: `3`.
    BlockSize,
    /// Rounds between consecutive attackers' injection starts: `2`.
    Interval,
    /// Target labels, one per attacker: `0/4/6`.
    Targets,
}

impl SweepParam {
    pub fn parse(name: &str) -> Result<Self, SweepError> {
        match name {
            "block" => Ok(SweepParam::Block),
            "magnitude" => Ok(SweepParam::Magnitude),
            "ratio" => Ok(SweepParam::Ratio),
            "block_size" => Ok(SweepParam::BlockSize),
            "interval" => Ok(SweepParam::Interval),
            "targets" => Ok(SweepParam::Targets),
            other => Err(SweepError::UnknownParam(other.to_string())),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Block => "block",
            SweepParam::Magnitude => "magnitude",
            SweepParam::Ratio => "ratio",
            SweepParam::BlockSize => "block_size",
            SweepParam::Interval => "interval",
            SweepParam::Targets => "targets",
        }
    }
}

fn slash_list(param: &'static str, value: &str, expected_len: usize) -> Result<Vec<usize>, SweepError> {
    let parts: Result<Vec<usize>, _> = value.split('/').map(|p| p.trim().parse()).collect();
    let parts = parts.map_err(|_| SweepError::BadValue {
        param,
        value: value.to_string(),
        reason: "expected slash-separated integers".to_string(),
    })?;
    if parts.len() != expected_len {
        return Err(SweepError::BadValue {
            param,
            value: value.to_string(),
            reason: format!("expected {expected_len} entries, got {}", parts.len()),
        });
    }
    Ok(parts)
}

/// Applies one sweep value to a copy of the base config.
pub fn apply_sweep_value(
    base: &ExperimentConfig,
    param: SweepParam,
    value: &str,
) -> Result<ExperimentConfig, SweepError> {
    let mut cfg = base.clone();
    let n = cfg.attackers.len();
    match param {
        SweepParam::Block => {
            let origins = slash_list("block", value, n)?;
            for (a, origin) in cfg.attackers.iter_mut().zip(origins) {
                match &mut a.kind {
                    TriggerKind::Freq { block_u, block_v, .. } => {
                        *block_u = origin;
                        *block_v = origin;
                    }
                    TriggerKind::Patch { .. } => {
                        return Err(SweepError::BadValue {
                            param: "block",
                            value: value.to_string(),
                            reason: "patch triggers have no frequency block".to_string(),
                        })
                    }
                }
            }
        }
        SweepParam::Magnitude => {
            let m: f64 = value.trim().parse().map_err(|_| SweepError::BadValue {
                param: "magnitude",
                value: value.to_string(),
                reason: "expected a number".to_string(),
            })?;
            for a in &mut cfg.attackers {
                if let TriggerKind::Freq { magnitude, .. } = &mut a.kind {
                    *magnitude = m;
                }
            }
        }
        SweepParam::Ratio => {
            let parts = slash_list("ratio", value, 3)?;
            if parts[0] != parts[1] {
                return Err(SweepError::BadValue {
                    param: "ratio",
                    value: value.to_string(),
                    reason: "replay counts must match (replay/replay/own)".to_string(),
                });
            }
            let bs = cfg.fed.batch_size as f64;
            for a in &mut cfg.attackers {
                a.r_br = parts[0] as f64 / bs;
                a.r_b = parts[2] as f64 / bs;
            }
        }
        SweepParam::BlockSize => {
            let s: usize = value.trim().parse().map_err(|_| SweepError::BadValue {
                param: "block_size",
                value: value.to_string(),
                reason: "expected an integer".to_string(),
            })?;
            for a in &mut cfg.attackers {
                if let TriggerKind::Freq { block_size, .. } = &mut a.kind {
                    *block_size = s;
                }
            }
        }
        SweepParam::Interval => {
            let k: usize = value.trim().parse().map_err(|_| SweepError::BadValue {
                param: "interval",
                value: value.to_string(),
                reason: "expected an integer".to_string(),
            })?;
            let warmup = cfg.fed.warmup_rounds;
            for (i, a) in cfg.attackers.iter_mut().enumerate() {
                a.inject_start = Some(warmup + defaults::INJECT_OFFSET + i * k);
            }
        }
        SweepParam::Targets => {
            let targets = slash_list("targets", value, n)?;
            for (a, t) in cfg.attackers.iter_mut().zip(targets) {
                a.target = t;
            }
        }
    }
    Ok(cfg)
}

/// One sweep row: the value plus headline metrics of its run.
#[derive(Debug)]
pub struct SweepRow {
    pub value: String,
    pub output: ExperimentOutput,
    pub mean_ssim: f64,
    pub mean_psnr: f64,
    /// Unclipped trigger energy of attacker 1 (equals `s²m²` for frequency
    /// triggers).
    pub energy: f64,
}

#[derive(Debug)]
pub struct SweepOutput {
    pub param: SweepParam,
    pub rows: Vec<SweepRow>,
    pub comparison_csv: String,
}

fn sanitize(value: &str) -> String {
    value.chars().map(|c| if c == '/' || c == ' ' { '-' } else { c }).collect()
}

fn format_metric(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v:.6}")
    }
}

/// Runs the base experiment once per value (shared seed), each into its own
/// subdirectory, and writes an aggregated `sweep.csv`.
pub fn sweep(
    base: &ExperimentConfig,
    param: SweepParam,
    values: &[String],
) -> Result<SweepOutput, SweepError> {
    if values.is_empty() {
        return Err(SweepError::NoValues);
    }
    let mut rows = Vec::with_capacity(values.len());
    for value in values {
        let mut cfg = apply_sweep_value(base, param, value)?;
        cfg.out_dir = base.out_dir.join(format!("{}_{}", param.name(), sanitize(value)));
        let output = run_experiment(&cfg)?;
        let (mut ssim_sum, mut psnr_sum) = (0.0, 0.0);
        for r in &output.stealth {
            ssim_sum += r.ssim;
            psnr_sum += r.psnr;
        }
        let k = output.stealth.len().max(1) as f64;
        let energy =
            if cfg.attackers.is_empty() { 0.0 } else { trigger_energy(&cfg, 0)? };
        rows.push(SweepRow {
            value: value.clone(),
            output,
            mean_ssim: ssim_sum / k,
            mean_psnr: psnr_sum / k,
            energy,
        });
    }

    let n_attackers = base.attackers.len();
    let mut csv = String::from("value,acc");
    for i in 1..=n_attackers {
        write!(csv, ",asr_{i}").unwrap();
    }
    for i in 1..=n_attackers {
        write!(csv, ",asr30_{i}").unwrap();
    }
    csv.push_str(",ssim_mean,psnr_mean,energy\n");
    for row in &rows {
        write!(csv, "{},{}", row.value, format_metric(row.output.final_acc)).unwrap();
        for p in &row.output.asr_at_injection_end {
            write!(csv, ",{}", format_metric(p.asr)).unwrap();
        }
        for p in &row.output.asr_30 {
            write!(csv, ",{}", format_metric(p.asr)).unwrap();
        }
        writeln!(
            csv,
            ",{},{},{}",
            format_metric(row.mean_ssim),
            format_metric(row.mean_psnr),
            format_metric(row.energy)
        )
        .unwrap();
    }

    fs::create_dir_all(&base.out_dir)
        .map_err(|source| SweepError::Write { path: base.out_dir.clone(), source })?;
    let path = base.out_dir.join("sweep.csv");
    fs::write(&path, &csv).map_err(|source| SweepError::Write { path, source })?;
    Ok(SweepOutput { param, rows, comparison_csv: csv })
}

/// Replay ablation outputs: the paired runs and the comparison table.
#[derive(Debug)]
pub struct AblationOutput {
    pub with_replay: ExperimentOutput,
    pub without_replay: ExperimentOutput,
    pub comparison_csv: String,
}

/// Converts a config into its no-replay control: every attacker folds its
/// replay budget into its own poisoning ratio (`r_b += n_others * r_br`,
/// `r_br = 0`), keeping the per-batch poisoned count identical.
pub fn without_replay_config(base: &ExperimentConfig) -> ExperimentConfig {
    let mut cfg = base.clone();
    let n_others = cfg.attackers.len().saturating_sub(1) as f64;
    for a in &mut cfg.attackers {
        a.r_b += n_others * a.r_br;
        a.r_br = 0.0;
    }
    cfg
}

/// Runs the experiment with replay as configured and with replay disabled,
/// writing both runs plus `ablation.csv` under the base output directory.
pub fn ablate_replay(base: &ExperimentConfig) -> Result<AblationOutput, SweepError> {
    let mut with_cfg = base.clone();
    with_cfg.out_dir = base.out_dir.join("with_replay");
    let mut without_cfg = without_replay_config(base);
    without_cfg.out_dir = base.out_dir.join("without_replay");

    let with_replay = run_experiment(&with_cfg)?;
    let without_replay = run_experiment(&without_cfg)?;

    let n_attackers = base.attackers.len();
    let mut csv = String::from("variant,acc");
    for i in 1..=n_attackers {
        write!(csv, ",asr_{i}").unwrap();
    }
    for i in 1..=n_attackers {
        write!(csv, ",asr30_{i}").unwrap();
    }
    csv.push('\n');
    for (name, out) in [("with_replay", &with_replay), ("without_replay", &without_replay)] {
        write!(csv, "{},{}", name, format_metric(out.final_acc)).unwrap();
        for p in &out.asr_at_injection_end {
            write!(csv, ",{}", format_metric(p.asr)).unwrap();
        }
        for p in &out.asr_30 {
            write!(csv, ",{}", format_metric(p.asr)).unwrap();
        }
        csv.push('\n');
    }

    fs::create_dir_all(&base.out_dir)
        .map_err(|source| SweepError::Write { path: base.out_dir.clone(), source })?;
    let path = base.out_dir.join("ablation.csv");
    fs::write(&path, &csv).map_err(|source| SweepError::Write { path, source })?;
    Ok(AblationOutput { with_replay, without_replay, comparison_csv: csv })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::parse_config;

    fn base_config() -> ExperimentConfig {
        let text = format!(
            "\
[fed]
n_clients = 4
clients_per_round = 3
total_rounds = 8
warmup_rounds = 3
batch_size = 16
seed = 5

[data]
train_per_class = 4
test_per_class = 2

[eval]
warmup_every = 3
stealth_images = 4

[output]
dir = {}

[attacker]
channel = R
block_u = 15
block_v = 15
target = 0
inject_start = 4
inject_len = 2
local_epochs = 2
r_b = 0.25
r_br = 0.0625

[attacker]
channel = G
block_u = 20
block_v = 20
target = 4
inject_start = 5
inject_len = 2
local_epochs = 2
r_b = 0.25
r_br = 0.0625
",
            std::env::temp_dir().join("fedsim-test-sweep").display()
        );
        parse_config(&text).unwrap()
    }

    #[test]
    fn magnitude_sweep_psnr_strictly_decreases() {
        let base = base_config();
        let values: Vec<String> =
            ["80", "90", "100"].iter().map(|s| s.to_string()).collect();
        let out = sweep(&base, SweepParam::Magnitude, &values).unwrap();
        assert_eq!(out.rows.len(), 3);
        for pair in out.rows.windows(2) {
            assert!(
                pair[1].mean_psnr < pair[0].mean_psnr,
                "psnr must strictly decrease with magnitude"
            );
        }
        assert!(out.comparison_csv.starts_with("value,acc,asr_1,asr_2,asr30_1,asr30_2,"));
    }

    #[test]
    fn block_size_sweep_energy_is_exact() {
        let base = base_config();
        let values: Vec<String> = ["1", "2", "3"].iter().map(|s| s.to_string()).collect();
        let out = sweep(&base, SweepParam::BlockSize, &values).unwrap();
        for (row, s) in out.rows.iter().zip([1.0f64, 2.0, 3.0]) {
            let expected = s * s * 100.0 * 100.0;
            assert!(
                (row.energy - expected).abs() / expected < 1e-9,
                "energy {} vs s^2 m^2 = {expected}",
                row.energy
            );
        }
    }

    #[test]
    fn interval_sweep_schedules_match() {
        let base = base_config();
        for (k, expect) in [(2usize, vec![5, 7]), (5, vec![5, 10]), (10, vec![5, 15])] {
            let cfg = apply_sweep_value(&base, SweepParam::Interval, &k.to_string()).unwrap();
            let starts: Vec<usize> =
                (0..cfg.attackers.len()).map(|i| cfg.inject_start_of(i)).collect();
            assert_eq!(starts, expect, "interval {k}");
        }
    }

    #[test]
    fn ratio_value_sets_both_ratios() {
        let base = base_config();
        let cfg = apply_sweep_value(&base, SweepParam::Ratio, "3/3/8").unwrap();
        for a in &cfg.attackers {
            assert!((a.r_br - 3.0 / 16.0).abs() < 1e-12);
            assert!((a.r_b - 8.0 / 16.0).abs() < 1e-12);
        }
        assert!(apply_sweep_value(&base, SweepParam::Ratio, "3/4/8").is_err());
    }

    #[test]
    fn block_and_targets_apply_per_attacker() {
        let base = base_config();
        let cfg = apply_sweep_value(&base, SweepParam::Block, "5/15").unwrap();
        match &cfg.attackers[1].kind {
            TriggerKind::Freq { block_u, block_v, .. } => {
                assert_eq!((*block_u, *block_v), (15, 15));
            }
            _ => unreachable!(),
        }
        let cfg = apply_sweep_value(&base, SweepParam::Targets, "1/2").unwrap();
        assert_eq!(cfg.attackers[0].target, 1);
        assert_eq!(cfg.attackers[1].target, 2);
        assert!(apply_sweep_value(&base, SweepParam::Targets, "1").is_err());
    }

    #[test]
    fn unknown_param_is_rejected() {
        assert!(matches!(SweepParam::parse("bogus"), Err(SweepError::UnknownParam(_))));
    }

    #[test]
    fn ablation_runs_both_variants() {
        let base = base_config();
        let out = ablate_replay(&base).unwrap();
        assert!(out.comparison_csv.contains("with_replay"));
        assert!(out.comparison_csv.contains("without_replay"));
        // no-replay control folds replay budget into own poisoning
        let control = without_replay_config(&base);
        assert!((control.attackers[0].r_b - (0.25 + 0.0625)).abs() < 1e-12);
        assert_eq!(control.attackers[0].r_br, 0.0);
        assert!(out.with_replay.out_dir.ends_with("with_replay"));
    }
}
