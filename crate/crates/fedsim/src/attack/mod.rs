//! Attacker-side behavior: poisoned batch composition with backdoor replay,
//! malicious local training, and model-replacement amplification.
//!
//! Replay mixes a few of the *other* attackers' backdoor samples into each
//! poisoned batch. Without it, the next attacker's injection largely erases
//! earlier backdoors (the usual catastrophic-forgetting failure of
//! sequential multi-target poisoning); with it, every injection round
//! refreshes all backdoors at once.

mod batch;
mod compose;
mod train;

pub use batch::{poison_batch, PoisonedBatch, ReplayPool, ReplaySource};
pub use compose::{compose_counts, BatchComposition};
pub use train::{attacker_local_train, benign_local_train, LocalTrainOutput};

use std::collections::BTreeSet;

use thiserror::Error;

use crate::kernel::{KernelError, ParamVector, SgdConfig};
use crate::trigger::{Trigger, TriggerError};

#[derive(Debug, Error)]
pub enum AttackError {
    #[error(
        "batch of {bs} cannot hold {own} own + {n_others}x{per_other_replay} replayed samples"
    )]
    BatchOverflow { bs: usize, own: usize, per_other_replay: usize, n_others: usize },
    #[error("replay pool underflow: need {need}, have {have}")]
    PoolUnderflow { need: usize, have: usize },
    #[error(transparent)]
    Trigger(#[from] TriggerError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// How replayed samples are sourced during injection rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplayMode {
    /// Convert clean batch images into other attackers' backdoor samples on
    /// the fly (the default; equivalent counts, no shared pool needed).
    Direct,
    /// Draw prebuilt samples from the shared replay pool.
    Pool,
}

/// Everything one attacker needs: its trigger, poisoning and replay ratios,
/// when it injects, how it trains, and how much it scales its update.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackerSpec {
    /// Attacker index; also the id of the client this attacker controls.
    pub id: usize,
    pub trigger: Trigger,
    /// Fraction of each batch converted to the attacker's own backdoor.
    pub r_b: f64,
    /// Fraction of each batch replayed per other attacker.
    pub r_br: f64,
    pub injection_rounds: BTreeSet<usize>,
    pub local_epochs: usize,
    pub sgd: SgdConfig,
    /// Model-replacement scale applied to the trained update.
    pub gamma: f64,
    pub replay_mode: ReplayMode,
}

impl AttackerSpec {
    pub fn is_injecting(&self, round: usize) -> bool {
        self.injection_rounds.contains(&round)
    }

    pub fn last_injection_round(&self) -> usize {
        *self.injection_rounds.iter().next_back().expect("injection_rounds is non-empty")
    }
}

/// Model replacement: `global + gamma * (local - global)`. With `gamma`
/// equal to the number of equally weighted clients per round, a single
/// scaled update survives averaging roughly intact.
pub fn amplify(
    global: &ParamVector,
    local: &ParamVector,
    gamma: f64,
) -> Result<ParamVector, KernelError> {
    global.check_len(local)?;
    let mut out = global.clone();
    let mut delta = local.sub(global);
    delta.scale(gamma);
    out.axpy(1.0, &delta);
    Ok(out)
}
