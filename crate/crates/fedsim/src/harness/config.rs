//! Experiment configuration: a flat `key = value` text format with
//! `[section]` headers.
//!
//! Sections: `[fed]`, `[data]`, `[defense]`, `[eval]`, `[output]`, and one
//! `[attacker]` per attacker. Every key has a documented default except the
//! attacker's `target` and trigger placement, which must be explicit. Lines
//! starting with `#` are comments. Unknown sections, unknown keys, and
//! duplicate keys are errors; semantic validation reports every violated
//! invariant at once.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::attack::{compose_counts, AttackerSpec, ReplayMode};
use crate::fed::{DefenseConfig, DefenseKind, FedConfig};
use crate::kernel::SgdConfig;
use crate::trigger::{validate_distinct, Channel, PatchTriggerSpec, Trigger, TriggerSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: expected `key = value` or `[section]`, got `{text}`")]
    Parse { line: usize, text: String },
    #[error("line {line}: unknown section [{name}]")]
    UnknownSection { line: usize, name: String },
    #[error("line {line}: unknown key `{key}` in [{section}]")]
    UnknownKey { line: usize, section: String, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: key `{key}`: `{value}` is not a valid {expected}")]
    BadValue { line: usize, key: String, value: String, expected: &'static str },
    #[error("[{section}] is missing required key `{key}`")]
    MissingKey { section: String, key: &'static str },
    #[error("invalid config:\n{}", .0.join("\n"))]
    Invalid(Vec<String>),
}

/// Where training and test data come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synth { train_per_class: usize, test_per_class: usize, classes: usize },
    Raw { train_path: PathBuf, test_path: PathBuf, classes: usize },
}

impl DataSource {
    pub fn classes(&self) -> usize {
        match self {
            DataSource::Synth { classes, .. } | DataSource::Raw { classes, .. } => *classes,
        }
    }
}

/// When to evaluate and how many images feed the stealth report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalCadence {
    /// Evaluate every N rounds during warmup (attack and observation rounds
    /// are always evaluated).
    pub warmup_every: usize,
    pub stealth_images: usize,
}

/// Trigger selection for one attacker.
#[derive(Debug, Clone, PartialEq)]
pub enum TriggerKind {
    Freq { channel: Channel, block_u: usize, block_v: usize, block_size: usize, magnitude: f64 },
    Patch { patch_size: usize, transparency: f64 },
}

/// One `[attacker]` section. `gamma` and `inject_start` resolve to
/// context-dependent defaults when absent: gamma defaults to the number of
/// clients per round, and injection starts stagger one round apart from
/// `warmup + 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackerConfig {
    pub kind: TriggerKind,
    pub target: usize,
    pub r_b: f64,
    pub r_br: f64,
    pub gamma: Option<f64>,
    pub inject_start: Option<usize>,
    pub inject_len: usize,
    pub local_epochs: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub replay_mode: ReplayMode,
}

/// A fully parsed experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub fed: FedConfig,
    pub defense: DefenseConfig,
    pub data: DataSource,
    pub eval: EvalCadence,
    pub out_dir: PathBuf,
    pub attackers: Vec<AttackerConfig>,
}

pub mod defaults {
    pub const N_CLIENTS: usize = 20;
    pub const CLIENTS_PER_ROUND: usize = 10;
    pub const TOTAL_ROUNDS: usize = 78;
    pub const WARMUP_ROUNDS: usize = 40;
    pub const SERVER_LR: f64 = 1.0;
    pub const BENIGN_EPOCHS: usize = 2;
    pub const BENIGN_LR: f64 = 0.01;
    pub const MOMENTUM: f64 = 0.9;
    pub const WEIGHT_DECAY: f64 = 0.0005;
    pub const BATCH_SIZE: usize = 64;
    pub const DIRICHLET_ALPHA: f64 = 0.8;
    pub const REPLAY_POOL_SIZE: usize = 64;
    pub const SEED: u64 = 7;
    pub const TRAIN_PER_CLASS: usize = 80;
    pub const TEST_PER_CLASS: usize = 25;
    pub const CLASSES: usize = 10;
    pub const WARMUP_EVERY: usize = 5;
    pub const STEALTH_IMAGES: usize = 100;
    pub const OUT_DIR: &str = "out";
    pub const BLOCK_SIZE: usize = 3;
    pub const MAGNITUDE: f64 = 100.0;
    pub const R_B: f64 = 8.0 / 64.0;
    pub const R_BR: f64 = 3.0 / 64.0;
    pub const INJECT_LEN: usize = 3;
    pub const ATTACKER_EPOCHS: usize = 6;
    pub const ATTACKER_LR: f64 = 0.05;
    pub const ATTACKER_LR_DECAY: f64 = 0.1;
    pub const PATCH_SIZE: usize = 5;
    /// Injection schedules start this many rounds after warmup.
    pub const INJECT_OFFSET: usize = 2;
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            fed: FedConfig {
                n_clients: defaults::N_CLIENTS,
                clients_per_round: defaults::CLIENTS_PER_ROUND,
                total_rounds: defaults::TOTAL_ROUNDS,
                warmup_rounds: defaults::WARMUP_ROUNDS,
                server_lr: defaults::SERVER_LR,
                benign_epochs: defaults::BENIGN_EPOCHS,
                benign_sgd: SgdConfig {
                    learning_rate: defaults::BENIGN_LR,
                    momentum: defaults::MOMENTUM,
                    weight_decay: defaults::WEIGHT_DECAY,
                    lr_decay_per_iteration: 0.0,
                },
                batch_size: defaults::BATCH_SIZE,
                dirichlet_alpha: defaults::DIRICHLET_ALPHA,
                replay_pool_size: defaults::REPLAY_POOL_SIZE,
                seed: defaults::SEED,
            },
            defense: DefenseConfig::none(),
            data: DataSource::Synth {
                train_per_class: defaults::TRAIN_PER_CLASS,
                test_per_class: defaults::TEST_PER_CLASS,
                classes: defaults::CLASSES,
            },
            eval: EvalCadence {
                warmup_every: defaults::WARMUP_EVERY,
                stealth_images: defaults::STEALTH_IMAGES,
            },
            out_dir: PathBuf::from(defaults::OUT_DIR),
            attackers: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    /// The three-attacker reference setup: R/G/B channels, 3x3 blocks at
    /// (15,15)/(20,20)/(25,25), magnitude +100, targets 0/4/6.
    pub fn three_attackers() -> Self {
        let mut cfg = Self::default();
        cfg.attackers = vec![
            AttackerConfig::freq(Channel::R, 15, 0),
            AttackerConfig::freq(Channel::G, 20, 4),
            AttackerConfig::freq(Channel::B, 25, 6),
        ];
        cfg
    }

    /// Resolved gamma for attacker `idx`.
    pub fn gamma_of(&self, idx: usize) -> f64 {
        self.attackers[idx].gamma.unwrap_or(self.fed.clients_per_round as f64)
    }

    /// Resolved injection start round for attacker `idx`.
    pub fn inject_start_of(&self, idx: usize) -> usize {
        self.attackers[idx]
            .inject_start
            .unwrap_or(self.fed.warmup_rounds + defaults::INJECT_OFFSET + idx)
    }

    /// Builds the runtime attacker specs. Attacker `i` controls client `i`.
    pub fn attacker_specs(&self) -> Vec<AttackerSpec> {
        self.attackers
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let start = self.inject_start_of(i);
                let trigger = match &a.kind {
                    TriggerKind::Freq { channel, block_u, block_v, block_size, magnitude } => {
                        Trigger::Freq(TriggerSpec {
                            channel: *channel,
                            block_u: *block_u,
                            block_v: *block_v,
                            block_size: *block_size,
                            magnitude: *magnitude,
                            target_label: a.target,
                        })
                    }
                    TriggerKind::Patch { patch_size, transparency } => {
                        Trigger::Patch(PatchTriggerSpec::four_corners(
                            *patch_size,
                            *transparency,
                            a.target,
                            32,
                            32,
                        ))
                    }
                };
                AttackerSpec {
                    id: i,
                    trigger,
                    r_b: a.r_b,
                    r_br: a.r_br,
                    injection_rounds: (start..start + a.inject_len).collect::<BTreeSet<_>>(),
                    local_epochs: a.local_epochs,
                    sgd: SgdConfig {
                        learning_rate: a.lr,
                        momentum: self.fed.benign_sgd.momentum,
                        weight_decay: self.fed.benign_sgd.weight_decay,
                        lr_decay_per_iteration: a.lr_decay,
                    },
                    gamma: self.gamma_of(i),
                    replay_mode: a.replay_mode,
                }
            })
            .collect()
    }

    /// Checks every invariant and reports all violations together.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut problems = Vec::new();
        if let Err(e) = self.fed.validate() {
            problems.push(e.to_string());
        }
        if let Err(e) = self.defense.validate() {
            problems.push(e.to_string());
        }
        match &self.data {
            DataSource::Synth { train_per_class, test_per_class, classes } => {
                if *classes == 0 || *classes > 10 {
                    problems.push(format!("synth classes {classes} must be in 1..=10"));
                }
                if *train_per_class == 0 || *test_per_class == 0 {
                    problems.push("synth per-class counts must be at least 1".to_string());
                }
            }
            DataSource::Raw { train_path, test_path, .. } => {
                for path in [train_path, test_path] {
                    if !path.exists() {
                        problems.push(format!("raw data path {} does not exist", path.display()));
                    }
                }
            }
        }
        if self.eval.warmup_every == 0 {
            problems.push("eval warmup_every must be at least 1".to_string());
        }

        let classes = self.data.classes();
        let n_attackers = self.attackers.len();
        if n_attackers > self.fed.clients_per_round {
            problems.push(format!(
                "{n_attackers} attackers cannot all be force-selected with {} clients per round",
                self.fed.clients_per_round
            ));
        }
        if n_attackers > self.fed.n_clients {
            problems.push(format!(
                "{n_attackers} attackers exceed {} clients",
                self.fed.n_clients
            ));
        }

        let specs = self.attacker_specs();
        if let Err(e) = validate_distinct(&specs.iter().map(|s| s.trigger.clone()).collect::<Vec<_>>())
        {
            problems.push(e.to_string());
        }
        for (i, spec) in specs.iter().enumerate() {
            if let Err(e) = spec.trigger.validate(32, 32, classes) {
                problems.push(format!("attacker {i}: {e}"));
            }
            if let Err(e) = spec.sgd.validate() {
                problems.push(format!("attacker {i}: {e}"));
            }
            if spec.local_epochs == 0 {
                problems.push(format!("attacker {i}: local_epochs must be at least 1"));
            }
            let others = n_attackers.saturating_sub(1);
            if !(0.0..=1.0).contains(&spec.r_b) || !(0.0..=1.0).contains(&spec.r_br) {
                problems.push(format!("attacker {i}: ratios must lie in [0, 1]"));
            } else {
                if spec.r_b + others as f64 * spec.r_br > 1.0 + 1e-12 {
                    problems.push(format!(
                        "attacker {i}: r_b + {others}*r_br exceeds 1"
                    ));
                }
                if let Err(e) = compose_counts(self.fed.batch_size, spec.r_b, spec.r_br, others) {
                    problems.push(format!("attacker {i}: {e}"));
                }
            }
            if spec.gamma < 1.0 || !spec.gamma.is_finite() {
                problems.push(format!("attacker {i}: gamma {} must be >= 1", spec.gamma));
            }
            if spec.injection_rounds.is_empty() {
                problems.push(format!("attacker {i}: injection schedule is empty"));
            } else {
                let last = spec.last_injection_round();
                if last >= self.fed.total_rounds {
                    problems.push(format!(
                        "attacker {i}: injection round {last} outside 0..{}",
                        self.fed.total_rounds
                    ));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(problems))
        }
    }
}

impl AttackerConfig {
    /// Frequency-trigger attacker with the stock block size and magnitude,
    /// block origin on the diagonal.
    pub fn freq(channel: Channel, origin: usize, target: usize) -> Self {
        Self {
            kind: TriggerKind::Freq {
                channel,
                block_u: origin,
                block_v: origin,
                block_size: defaults::BLOCK_SIZE,
                magnitude: defaults::MAGNITUDE,
            },
            target,
            r_b: defaults::R_B,
            r_br: defaults::R_BR,
            gamma: None,
            inject_start: None,
            inject_len: defaults::INJECT_LEN,
            local_epochs: defaults::ATTACKER_EPOCHS,
            lr: defaults::ATTACKER_LR,
            lr_decay: defaults::ATTACKER_LR_DECAY,
            replay_mode: ReplayMode::Direct,
        }
    }

    /// Patch-trigger attacker (the transparency-patch baseline).
    pub fn patch(transparency: f64, target: usize) -> Self {
        Self {
            kind: TriggerKind::Patch { patch_size: defaults::PATCH_SIZE, transparency },
            ..Self::freq(Channel::R, 15, target)
        }
    }
}

// --- parsing -------------------------------------------------------------

struct RawEntry {
    line: usize,
    key: String,
    value: String,
}

struct RawSection {
    name: String,
    entries: Vec<RawEntry>,
}

fn lex(text: &str) -> Result<Vec<RawSection>, ConfigError> {
    let known = ["fed", "data", "defense", "eval", "output", "attacker"];
    let mut sections: Vec<RawSection> = Vec::new();
    for (i, raw_line) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw_line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if let Some(name) = trimmed.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let name = name.trim().to_string();
            if !known.contains(&name.as_str()) {
                return Err(ConfigError::UnknownSection { line, name });
            }
            sections.push(RawSection { name, entries: Vec::new() });
            continue;
        }
        let Some((key, value)) = trimmed.split_once('=') else {
            return Err(ConfigError::Parse { line, text: trimmed.to_string() });
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() {
            return Err(ConfigError::Parse { line, text: trimmed.to_string() });
        }
        let Some(section) = sections.last_mut() else {
            return Err(ConfigError::Parse { line, text: format!("`{key}` outside any section") });
        };
        if section.entries.iter().any(|e| e.key == key) {
            return Err(ConfigError::DuplicateKey { line, key });
        }
        section.entries.push(RawEntry { line, key, value });
    }
    Ok(sections)
}

/// Typed access to one section's entries, erroring on unknown keys.
struct SectionReader {
    section: String,
    entries: Vec<RawEntry>,
    used: Vec<bool>,
}

impl SectionReader {
    fn new(section: RawSection) -> Self {
        let used = vec![false; section.entries.len()];
        Self { section: section.name, entries: section.entries, used }
    }

    fn raw(&mut self, key: &str) -> Option<(usize, String)> {
        for (i, e) in self.entries.iter().enumerate() {
            if e.key == key {
                self.used[i] = true;
                return Some((e.line, e.value.clone()));
            }
        }
        None
    }

    fn parse<T: std::str::FromStr>(
        &mut self,
        key: &str,
        expected: &'static str,
    ) -> Result<Option<T>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, value)) => value.parse::<T>().map(Some).map_err(|_| {
                ConfigError::BadValue { line, key: key.to_string(), value, expected }
            }),
        }
    }

    fn get_usize(&mut self, key: &str, default: usize) -> Result<usize, ConfigError> {
        Ok(self.parse::<usize>(key, "integer")?.unwrap_or(default))
    }

    fn get_f64(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.parse::<f64>(key, "number")?.unwrap_or(default))
    }

    fn get_u64(&mut self, key: &str, default: u64) -> Result<u64, ConfigError> {
        Ok(self.parse::<u64>(key, "integer")?.unwrap_or(default))
    }

    fn require_usize(&mut self, key: &'static str) -> Result<usize, ConfigError> {
        self.parse::<usize>(key, "integer")?
            .ok_or(ConfigError::MissingKey { section: self.section.clone(), key })
    }

    fn finish(self) -> Result<(), ConfigError> {
        for (e, used) in self.entries.iter().zip(&self.used) {
            if !used {
                return Err(ConfigError::UnknownKey {
                    line: e.line,
                    section: self.section.clone(),
                    key: e.key.clone(),
                });
            }
        }
        Ok(())
    }
}

fn read_fed(reader: &mut SectionReader, fed: &mut FedConfig) -> Result<(), ConfigError> {
    fed.n_clients = reader.get_usize("n_clients", fed.n_clients)?;
    fed.clients_per_round = reader.get_usize("clients_per_round", fed.clients_per_round)?;
    fed.total_rounds = reader.get_usize("total_rounds", fed.total_rounds)?;
    fed.warmup_rounds = reader.get_usize("warmup_rounds", fed.warmup_rounds)?;
    fed.server_lr = reader.get_f64("server_lr", fed.server_lr)?;
    fed.benign_epochs = reader.get_usize("benign_epochs", fed.benign_epochs)?;
    fed.benign_sgd.learning_rate = reader.get_f64("benign_lr", fed.benign_sgd.learning_rate)?;
    fed.benign_sgd.momentum = reader.get_f64("momentum", fed.benign_sgd.momentum)?;
    fed.benign_sgd.weight_decay = reader.get_f64("weight_decay", fed.benign_sgd.weight_decay)?;
    fed.batch_size = reader.get_usize("batch_size", fed.batch_size)?;
    fed.dirichlet_alpha = reader.get_f64("dirichlet_alpha", fed.dirichlet_alpha)?;
    fed.replay_pool_size = reader.get_usize("replay_pool_size", fed.replay_pool_size)?;
    fed.seed = reader.get_u64("seed", fed.seed)?;
    Ok(())
}

fn read_data(reader: &mut SectionReader) -> Result<DataSource, ConfigError> {
    let source = reader.raw("source");
    let classes = reader.get_usize("classes", defaults::CLASSES)?;
    let train_per_class = reader.get_usize("train_per_class", defaults::TRAIN_PER_CLASS)?;
    let test_per_class = reader.get_usize("test_per_class", defaults::TEST_PER_CLASS)?;
    let raw_train = reader.raw("raw_train_path");
    let raw_test = reader.raw("raw_test_path");
    let kind = source.as_ref().map(|(_, v)| v.clone()).unwrap_or_else(|| "synth".to_string());
    match kind.as_str() {
        "synth" => Ok(DataSource::Synth { train_per_class, test_per_class, classes }),
        "raw" => {
            let train_path = raw_train
                .map(|(_, v)| PathBuf::from(v))
                .ok_or(ConfigError::MissingKey { section: "data".into(), key: "raw_train_path" })?;
            let test_path = raw_test
                .map(|(_, v)| PathBuf::from(v))
                .ok_or(ConfigError::MissingKey { section: "data".into(), key: "raw_test_path" })?;
            Ok(DataSource::Raw { train_path, test_path, classes })
        }
        _ => {
            let (line, value) = source.unwrap();
            Err(ConfigError::BadValue {
                line,
                key: "source".into(),
                value,
                expected: "one of: synth, raw",
            })
        }
    }
}

fn read_defense(reader: &mut SectionReader, defense: &mut DefenseConfig) -> Result<(), ConfigError> {
    if let Some((line, value)) = reader.raw("kind") {
        defense.kind = DefenseKind::parse(&value).ok_or(ConfigError::BadValue {
            line,
            key: "kind".into(),
            value,
            expected: "one of: none, clipcluster, dpfedavg",
        })?;
    }
    defense.clip_bound = reader.get_f64("clip_bound", defense.clip_bound)?;
    defense.noise_sigma = reader.get_f64("noise_sigma", defense.noise_sigma)?;
    Ok(())
}

fn read_attacker(reader: &mut SectionReader) -> Result<AttackerConfig, ConfigError> {
    let kind_name = reader.raw("trigger");
    let trig =
        kind_name.as_ref().map(|(_, v)| v.clone()).unwrap_or_else(|| "freq".to_string());
    let kind = match trig.as_str() {
        "freq" => {
            let channel = match reader.raw("channel") {
                Some((line, value)) => Channel::parse(&value).ok_or(ConfigError::BadValue {
                    line,
                    key: "channel".into(),
                    value,
                    expected: "one of: R, G, B",
                })?,
                None => {
                    return Err(ConfigError::MissingKey { section: "attacker".into(), key: "channel" })
                }
            };
            let block_u = reader.require_usize("block_u")?;
            let block_v = reader.require_usize("block_v")?;
            TriggerKind::Freq {
                channel,
                block_u,
                block_v,
                block_size: reader.get_usize("block_size", defaults::BLOCK_SIZE)?,
                magnitude: reader.get_f64("magnitude", defaults::MAGNITUDE)?,
            }
        }
        "patch" => {
            let transparency = reader
                .parse::<f64>("transparency", "number")?
                .ok_or(ConfigError::MissingKey { section: "attacker".into(), key: "transparency" })?;
            TriggerKind::Patch {
                patch_size: reader.get_usize("patch_size", defaults::PATCH_SIZE)?,
                transparency,
            }
        }
        other => {
            let line = kind_name.map(|(l, _)| l).unwrap_or(0);
            return Err(ConfigError::BadValue {
                line,
                key: "trigger".into(),
                value: other.to_string(),
                expected: "one of: freq, patch",
            });
        }
    };
    let replay_mode = match reader.raw("replay_mode") {
        None => ReplayMode::Direct,
        Some((_, v)) if v == "direct" => ReplayMode::Direct,
        Some((_, v)) if v == "pool" => ReplayMode::Pool,
        Some((line, value)) => {
            return Err(ConfigError::BadValue {
                line,
                key: "replay_mode".into(),
                value,
                expected: "one of: direct, pool",
            })
        }
    };
    Ok(AttackerConfig {
        kind,
        target: reader.require_usize("target")?,
        r_b: reader.get_f64("r_b", defaults::R_B)?,
        r_br: reader.get_f64("r_br", defaults::R_BR)?,
        gamma: reader.parse::<f64>("gamma", "number")?,
        inject_start: reader.parse::<usize>("inject_start", "integer")?,
        inject_len: reader.get_usize("inject_len", defaults::INJECT_LEN)?,
        local_epochs: reader.get_usize("local_epochs", defaults::ATTACKER_EPOCHS)?,
        lr: reader.get_f64("lr", defaults::ATTACKER_LR)?,
        lr_decay: reader.get_f64("lr_decay", defaults::ATTACKER_LR_DECAY)?,
        replay_mode,
    })
}

/// Parses config text into a validated [`ExperimentConfig`].
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = ExperimentConfig::default();
    for section in lex(text)? {
        let mut reader = SectionReader::new(section);
        match reader.section.as_str() {
            "fed" => read_fed(&mut reader, &mut cfg.fed)?,
            "data" => cfg.data = read_data(&mut reader)?,
            "defense" => read_defense(&mut reader, &mut cfg.defense)?,
            "eval" => {
                cfg.eval.warmup_every =
                    reader.get_usize("warmup_every", cfg.eval.warmup_every)?;
                cfg.eval.stealth_images =
                    reader.get_usize("stealth_images", cfg.eval.stealth_images)?;
            }
            "output" => {
                if let Some((_, v)) = reader.raw("dir") {
                    cfg.out_dir = PathBuf::from(v);
                }
            }
            "attacker" => cfg.attackers.push(read_attacker(&mut reader)?),
            _ => unreachable!("lex rejects unknown sections"),
        }
        reader.finish()?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Loads and validates a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

/// Canonical text form with every key explicit (defaults resolved).
/// `parse_config(serialize_config(cfg))` is semantically idempotent.
pub fn serialize_config(cfg: &ExperimentConfig) -> String {
    let mut s = String::new();
    let fed = &cfg.fed;
    writeln!(s, "[fed]").unwrap();
    writeln!(s, "n_clients = {}", fed.n_clients).unwrap();
    writeln!(s, "clients_per_round = {}", fed.clients_per_round).unwrap();
    writeln!(s, "total_rounds = {}", fed.total_rounds).unwrap();
    writeln!(s, "warmup_rounds = {}", fed.warmup_rounds).unwrap();
    writeln!(s, "server_lr = {}", fed.server_lr).unwrap();
    writeln!(s, "benign_epochs = {}", fed.benign_epochs).unwrap();
    writeln!(s, "benign_lr = {}", fed.benign_sgd.learning_rate).unwrap();
    writeln!(s, "momentum = {}", fed.benign_sgd.momentum).unwrap();
    writeln!(s, "weight_decay = {}", fed.benign_sgd.weight_decay).unwrap();
    writeln!(s, "batch_size = {}", fed.batch_size).unwrap();
    writeln!(s, "dirichlet_alpha = {}", fed.dirichlet_alpha).unwrap();
    writeln!(s, "replay_pool_size = {}", fed.replay_pool_size).unwrap();
    writeln!(s, "seed = {}", fed.seed).unwrap();
    writeln!(s).unwrap();
    writeln!(s, "[data]").unwrap();
    match &cfg.data {
        DataSource::Synth { train_per_class, test_per_class, classes } => {
            writeln!(s, "source = synth").unwrap();
            writeln!(s, "classes = {classes}").unwrap();
            writeln!(s, "train_per_class = {train_per_class}").unwrap();
            writeln!(s, "test_per_class = {test_per_class}").unwrap();
        }
        DataSource::Raw { train_path, test_path, classes } => {
            writeln!(s, "source = raw").unwrap();
            writeln!(s, "classes = {classes}").unwrap();
            writeln!(s, "raw_train_path = {}", train_path.display()).unwrap();
            writeln!(s, "raw_test_path = {}", test_path.display()).unwrap();
        }
    }
    writeln!(s).unwrap();
    writeln!(s, "[defense]").unwrap();
    writeln!(s, "kind = {}", cfg.defense.kind.name()).unwrap();
    writeln!(s, "clip_bound = {}", cfg.defense.clip_bound).unwrap();
    writeln!(s, "noise_sigma = {}", cfg.defense.noise_sigma).unwrap();
    writeln!(s).unwrap();
    writeln!(s, "[eval]").unwrap();
    writeln!(s, "warmup_every = {}", cfg.eval.warmup_every).unwrap();
    writeln!(s, "stealth_images = {}", cfg.eval.stealth_images).unwrap();
    writeln!(s).unwrap();
    writeln!(s, "[output]").unwrap();
    writeln!(s, "dir = {}", cfg.out_dir.display()).unwrap();
    for (i, a) in cfg.attackers.iter().enumerate() {
        writeln!(s).unwrap();
        writeln!(s, "[attacker]").unwrap();
        match &a.kind {
            TriggerKind::Freq { channel, block_u, block_v, block_size, magnitude } => {
                writeln!(s, "trigger = freq").unwrap();
                writeln!(s, "channel = {}", channel.name()).unwrap();
                writeln!(s, "block_u = {block_u}").unwrap();
                writeln!(s, "block_v = {block_v}").unwrap();
                writeln!(s, "block_size = {block_size}").unwrap();
                writeln!(s, "magnitude = {magnitude}").unwrap();
            }
            TriggerKind::Patch { patch_size, transparency } => {
                writeln!(s, "trigger = patch").unwrap();
                writeln!(s, "patch_size = {patch_size}").unwrap();
                writeln!(s, "transparency = {transparency}").unwrap();
            }
        }
        writeln!(s, "target = {}", a.target).unwrap();
        writeln!(s, "r_b = {}", a.r_b).unwrap();
        writeln!(s, "r_br = {}", a.r_br).unwrap();
        writeln!(s, "gamma = {}", cfg.gamma_of(i)).unwrap();
        writeln!(s, "inject_start = {}", cfg.inject_start_of(i)).unwrap();
        writeln!(s, "inject_len = {}", a.inject_len).unwrap();
        writeln!(s, "local_epochs = {}", a.local_epochs).unwrap();
        writeln!(s, "lr = {}", a.lr).unwrap();
        writeln!(s, "lr_decay = {}", a.lr_decay).unwrap();
        let mode = match a.replay_mode {
            ReplayMode::Direct => "direct",
            ReplayMode::Pool => "pool",
        };
        writeln!(s, "replay_mode = {mode}").unwrap();
    }
    s
}
