//! Federation engine: round loop, client selection, aggregation, defenses.

mod aggregate;
mod cluster;
mod eval;
mod round;

pub use aggregate::{
    clipped_clustering_agg, dp_fedavg_agg, fedavg, lower_median, ClipClusterReport,
};
pub use cluster::two_cluster_average_linkage;
pub use eval::{evaluate, evaluate_cached, EvalSets, RoundRecord};
pub use round::{ClientNorm, Federation, RoundOutcome, RoundTelemetry};

use thiserror::Error;

use crate::attack::AttackError;
use crate::data::DataError;
use crate::kernel::{KernelError, ParamVector, SgdConfig};
use crate::trigger::TriggerError;

#[derive(Debug, Error)]
pub enum FedError {
    #[error("no client updates to aggregate")]
    NoUpdates,
    #[error("aggregation needs at least {need} updates, got {got}")]
    NotEnoughUpdates { need: usize, got: usize },
    #[error("invalid federation config: {0}")]
    BadConfig(String),
    #[error("invalid defense config: {0}")]
    BadDefenseConfig(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Trigger(#[from] TriggerError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Federation-wide settings.
#[derive(Debug, Clone, PartialEq)]
pub struct FedConfig {
    pub n_clients: usize,
    /// Clients trained and aggregated per round (attackers in their
    /// injection rounds are always included).
    pub clients_per_round: usize,
    pub total_rounds: usize,
    /// Attack-free rounds at the start so the model converges first.
    pub warmup_rounds: usize,
    pub server_lr: f64,
    pub benign_epochs: usize,
    pub benign_sgd: SgdConfig,
    pub batch_size: usize,
    pub dirichlet_alpha: f64,
    /// Samples poisoned per attacker when a replay pool is built.
    pub replay_pool_size: usize,
    pub seed: u64,
}

impl FedConfig {
    pub fn validate(&self) -> Result<(), FedError> {
        let mut problems = Vec::new();
        if self.n_clients == 0 {
            problems.push("n_clients must be at least 1".to_string());
        }
        if self.clients_per_round == 0 || self.clients_per_round > self.n_clients {
            problems.push(format!(
                "clients_per_round {} must be in 1..={}",
                self.clients_per_round, self.n_clients
            ));
        }
        if self.warmup_rounds >= self.total_rounds {
            problems.push(format!(
                "warmup_rounds {} must be below total_rounds {}",
                self.warmup_rounds, self.total_rounds
            ));
        }
        if !(self.server_lr > 0.0) || !self.server_lr.is_finite() {
            problems.push(format!("server_lr {} must be positive", self.server_lr));
        }
        if self.batch_size == 0 {
            problems.push("batch_size must be at least 1".to_string());
        }
        if self.benign_epochs == 0 {
            problems.push("benign_epochs must be at least 1".to_string());
        }
        if !(self.dirichlet_alpha > 0.0) {
            problems.push(format!("dirichlet_alpha {} must be positive", self.dirichlet_alpha));
        }
        if let Err(e) = self.benign_sgd.validate() {
            problems.push(e.to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(FedError::BadConfig(problems.join("; ")))
        }
    }
}

/// Aggregation rule selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DefenseKind {
    None,
    ClippedClustering,
    DpFedAvg,
}

impl DefenseKind {
    /// Stable name used in CSV output and CLI flags.
    pub fn name(self) -> &'static str {
        match self {
            DefenseKind::None => "none",
            DefenseKind::ClippedClustering => "clipcluster",
            DefenseKind::DpFedAvg => "dpfedavg",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(DefenseKind::None),
            "clipcluster" => Some(DefenseKind::ClippedClustering),
            "dpfedavg" => Some(DefenseKind::DpFedAvg),
            _ => None,
        }
    }
}

/// Defense selection plus the DP parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefenseConfig {
    pub kind: DefenseKind,
    /// DP clipping bound S.
    pub clip_bound: f64,
    /// DP noise multiplier sigma.
    pub noise_sigma: f64,
}

impl DefenseConfig {
    pub fn none() -> Self {
        Self { kind: DefenseKind::None, clip_bound: 1.0, noise_sigma: 0.0 }
    }

    pub fn validate(&self) -> Result<(), FedError> {
        if self.kind == DefenseKind::DpFedAvg {
            if !(self.clip_bound > 0.0) {
                return Err(FedError::BadDefenseConfig(format!(
                    "dp clip bound {} must be > 0",
                    self.clip_bound
                )));
            }
            if self.noise_sigma < 0.0 {
                return Err(FedError::BadDefenseConfig(format!(
                    "dp noise sigma {} must be >= 0",
                    self.noise_sigma
                )));
            }
        }
        Ok(())
    }
}

/// One client's contribution to a round.
#[derive(Debug, Clone)]
pub struct ClientUpdate {
    pub client_id: usize,
    pub params: ParamVector,
    pub sample_count: usize,
}
