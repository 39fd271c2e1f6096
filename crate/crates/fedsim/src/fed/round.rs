//! The round loop.

use rand::seq::index::sample;
use rayon::prelude::*;

use super::aggregate::{clipped_clustering_agg, dp_fedavg_agg, fedavg};
use super::eval::{evaluate_cached, EvalSets, RoundRecord};
use super::{ClientUpdate, DefenseConfig, DefenseKind, FedConfig, FedError};
use crate::attack::{
    amplify, attacker_local_train, benign_local_train, AttackerSpec, ReplayMode, ReplayPool,
    ReplaySource,
};
use crate::data::{Dataset, PartitionPlan};
use crate::kernel::{init_params, ModelArch, ParamVector};
use crate::rng::{stream_rng, Stream};
use crate::trigger::Trigger;

/// Delta norm of one selected client in one round, after any amplification.
#[derive(Debug, Clone, Copy)]
pub struct ClientNorm {
    pub client_id: usize,
    pub norm: f64,
    /// True when this update came from an attacker in an injection round.
    pub malicious: bool,
}

/// Non-metric diagnostics of one round, used by tests and defense tuning.
#[derive(Debug, Clone)]
pub struct RoundTelemetry {
    pub round: usize,
    pub selected: Vec<usize>,
    pub client_norms: Vec<ClientNorm>,
    /// Clipped-clustering only: the clip bound and post-clip norms.
    pub clip_threshold: Option<f64>,
    pub clipped_norms: Vec<(usize, f64)>,
    pub kept_cluster: Option<Vec<usize>>,
    pub delta_norm: f64,
}

/// What one round produced: metrics if evaluation ran, telemetry always.
#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub record: Option<RoundRecord>,
    pub telemetry: RoundTelemetry,
}

/// A running federation: global model, client shards, attacker schedule,
/// and the defense in effect. The round loop is sequential; within a round
/// the selected clients train in parallel, each on its own seed-derived rng
/// stream, so results do not depend on the parallelism degree.
pub struct Federation<'a> {
    arch: &'a ModelArch,
    train: &'a Dataset,
    partition: &'a PartitionPlan,
    attackers: &'a [AttackerSpec],
    fed: &'a FedConfig,
    defense: &'a DefenseConfig,
    /// Per attacker: the other attackers' triggers, in attacker order.
    others: Vec<Vec<Trigger>>,
    pool: Option<ReplayPool>,
    eval_sets: EvalSets,
    global: ParamVector,
}

impl<'a> Federation<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        arch: &'a ModelArch,
        train: &'a Dataset,
        test: &'a Dataset,
        partition: &'a PartitionPlan,
        attackers: &'a [AttackerSpec],
        fed: &'a FedConfig,
        defense: &'a DefenseConfig,
    ) -> Result<Self, FedError> {
        fed.validate()?;
        defense.validate()?;
        if partition.n_clients() != fed.n_clients {
            return Err(FedError::BadConfig(format!(
                "partition has {} clients, config says {}",
                partition.n_clients(),
                fed.n_clients
            )));
        }
        for spec in attackers {
            if spec.id >= fed.n_clients {
                return Err(FedError::BadConfig(format!(
                    "attacker id {} outside client range 0..{}",
                    spec.id, fed.n_clients
                )));
            }
        }

        let others: Vec<Vec<Trigger>> = attackers
            .iter()
            .map(|spec| {
                attackers
                    .iter()
                    .filter(|o| o.id != spec.id)
                    .map(|o| o.trigger.clone())
                    .collect()
            })
            .collect();

        let pool = if attackers.iter().any(|a| a.replay_mode == ReplayMode::Pool) {
            let mut rng = stream_rng(fed.seed, Stream::ReplayPool);
            Some(ReplayPool::build(
                train.examples(),
                attackers,
                fed.replay_pool_size,
                &mut rng,
            )?)
        } else {
            None
        };

        let eval_sets = EvalSets::build(test, attackers)?;
        let global = init_params(arch, fed.seed)?;
        Ok(Self {
            arch,
            train,
            partition,
            attackers,
            fed,
            defense,
            others,
            pool,
            eval_sets,
            global,
        })
    }

    pub fn global(&self) -> &ParamVector {
        &self.global
    }

    pub fn attacker_of(&self, client_id: usize) -> Option<(usize, &AttackerSpec)> {
        self.attackers
            .iter()
            .enumerate()
            .find(|(_, a)| a.id == client_id)
    }

    /// Selects this round's clients: attackers whose schedule includes the
    /// round are always in; the rest are drawn uniformly without
    /// replacement. Returned sorted by client id.
    fn select(&self, round: usize) -> Vec<usize> {
        let injecting: Vec<usize> = self
            .attackers
            .iter()
            .filter(|a| a.is_injecting(round))
            .map(|a| a.id)
            .collect();
        let candidates: Vec<usize> =
            (0..self.fed.n_clients).filter(|c| !injecting.contains(c)).collect();
        let need = self.fed.clients_per_round.saturating_sub(injecting.len());
        let mut rng = stream_rng(self.fed.seed, Stream::Selection { round: round as u64 });
        let picks = sample(&mut rng, candidates.len(), need.min(candidates.len()));
        let mut selected = injecting;
        selected.extend(picks.iter().map(|i| candidates[i]));
        selected.sort_unstable();
        selected
    }

    fn train_client(&self, client_id: usize, round: usize) -> Result<ClientUpdate, FedError> {
        let indices = self.partition.client(client_id);
        let mut rng = stream_rng(
            self.fed.seed,
            Stream::ClientTrain { client: client_id as u64, round: round as u64 },
        );
        let params = match self.attacker_of(client_id) {
            Some((idx, spec)) => {
                let replay = match spec.replay_mode {
                    ReplayMode::Direct => ReplaySource::Direct { others: &self.others[idx] },
                    ReplayMode::Pool => ReplaySource::Pooled {
                        pool: self.pool.as_ref().expect("pool built for pool-mode attackers"),
                    },
                };
                let out = attacker_local_train(
                    self.arch,
                    &self.global,
                    spec,
                    self.train,
                    indices,
                    replay,
                    round,
                    self.fed.benign_epochs,
                    &self.fed.benign_sgd,
                    self.fed.batch_size,
                    &mut rng,
                )?;
                if spec.is_injecting(round) {
                    amplify(&self.global, &out.params, spec.gamma)?
                } else {
                    out.params
                }
            }
            None => {
                benign_local_train(
                    self.arch,
                    &self.global,
                    self.train,
                    indices,
                    self.fed.benign_epochs,
                    &self.fed.benign_sgd,
                    self.fed.batch_size,
                    &mut rng,
                )?
                .params
            }
        };
        Ok(ClientUpdate { client_id, params, sample_count: indices.len() })
    }

    /// Runs one round: select, train locally (in parallel), aggregate under
    /// the configured defense, and optionally evaluate.
    pub fn run_round(&mut self, round: usize, evaluate: bool) -> Result<RoundOutcome, FedError> {
        let selected = self.select(round);
        let updates: Vec<ClientUpdate> = selected
            .par_iter()
            .map(|&c| self.train_client(c, round))
            .collect::<Result<Vec<_>, FedError>>()?;

        let client_norms: Vec<ClientNorm> = updates
            .iter()
            .map(|u| ClientNorm {
                client_id: u.client_id,
                norm: u.params.sub(&self.global).norm(),
                malicious: self
                    .attacker_of(u.client_id)
                    .map(|(_, a)| a.is_injecting(round))
                    .unwrap_or(false),
            })
            .collect();

        let mut clip_threshold = None;
        let mut clipped_norms = Vec::new();
        let mut kept_cluster = None;
        let new_global = match self.defense.kind {
            DefenseKind::None => fedavg(&self.global, &updates, self.fed.server_lr)?,
            DefenseKind::ClippedClustering => {
                let (g, report) =
                    clipped_clustering_agg(&self.global, &updates, self.fed.server_lr)?;
                clip_threshold = Some(report.clip_threshold);
                clipped_norms = report.clipped_norms;
                kept_cluster = Some(report.kept);
                g
            }
            DefenseKind::DpFedAvg => {
                let mut rng =
                    stream_rng(self.fed.seed, Stream::DpNoise { round: round as u64 });
                dp_fedavg_agg(
                    &self.global,
                    &updates,
                    self.defense.clip_bound,
                    self.defense.noise_sigma,
                    self.fed.server_lr,
                    &mut rng,
                )?
            }
        };
        let delta_norm = new_global.sub(&self.global).norm();
        self.global = new_global;

        let record = if evaluate {
            let (acc, asr) = evaluate_cached(self.arch, &self.global, &self.eval_sets)?;
            Some(RoundRecord { round, acc, asr, delta_norm, aggregation: self.defense.kind })
        } else {
            None
        };
        Ok(RoundOutcome {
            record,
            telemetry: RoundTelemetry {
                round,
                selected,
                client_norms,
                clip_threshold,
                clipped_norms,
                kept_cluster,
                delta_norm,
            },
        })
    }
}
