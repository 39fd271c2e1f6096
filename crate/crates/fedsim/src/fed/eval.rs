//! Global-model evaluation: clean accuracy and per-attacker attack success.

use rayon::prelude::*;

use super::{DefenseKind, FedError};
use crate::attack::AttackerSpec;
use crate::data::Dataset;
use crate::image::ImageTensor;
use crate::kernel::{predict, ModelArch, ParamVector};

/// Per-round metrics of the global model.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    /// Clean test accuracy in [0, 1].
    pub acc: f64,
    /// Attack success rate per attacker, in attacker order.
    pub asr: Vec<f64>,
    /// L2 norm of the global parameter change this round.
    pub delta_norm: f64,
    /// Aggregation rule in effect.
    pub aggregation: DefenseKind,
}

/// Clean test set plus, per attacker, the triggered (clipped) copies of
/// every test image whose true label differs from that attacker's target.
/// Triggers are content-independent, so these are built once per experiment.
pub struct EvalSets {
    clean: Vec<(ImageTensor, usize)>,
    triggered: Vec<(usize, Vec<ImageTensor>)>,
}

impl EvalSets {
    pub fn build(test: &Dataset, attackers: &[AttackerSpec]) -> Result<Self, FedError> {
        let clean: Vec<(ImageTensor, usize)> =
            test.examples().iter().map(|e| (e.image.clone(), e.label)).collect();
        let mut triggered = Vec::with_capacity(attackers.len());
        for spec in attackers {
            let target = spec.trigger.target_label();
            let mut images = Vec::new();
            for ex in test.examples() {
                if ex.label == target {
                    continue;
                }
                let (img, _) = spec.trigger.apply(&ex.image, true)?;
                images.push(img);
            }
            triggered.push((target, images));
        }
        Ok(Self { clean, triggered })
    }

    pub fn n_attackers(&self) -> usize {
        self.triggered.len()
    }
}

/// Accuracy and per-attacker ASR of `params` on prebuilt evaluation sets.
pub fn evaluate_cached(
    arch: &ModelArch,
    params: &ParamVector,
    sets: &EvalSets,
) -> Result<(f64, Vec<f64>), FedError> {
    let correct = sets
        .clean
        .par_iter()
        .map(|(img, label)| {
            predict(arch, params, img).map(|p| usize::from(p == *label))
        })
        .try_reduce(|| 0usize, |a, b| Ok(a + b))?;
    let acc = correct as f64 / sets.clean.len() as f64;

    let mut asr = Vec::with_capacity(sets.triggered.len());
    for (target, images) in &sets.triggered {
        if images.is_empty() {
            asr.push(0.0);
            continue;
        }
        let hits = images
            .par_iter()
            .map(|img| predict(arch, params, img).map(|p| usize::from(p == *target)))
            .try_reduce(|| 0usize, |a, b| Ok(a + b))?;
        asr.push(hits as f64 / images.len() as f64);
    }
    Ok((acc, asr))
}

/// One-shot evaluation against a raw test set (builds the triggered copies
/// on the fly). ASR for attacker `n` is measured over test samples whose
/// true label differs from its target, triggered with its (clipped) trigger,
/// as the fraction predicted as the target.
pub fn evaluate(
    arch: &ModelArch,
    params: &ParamVector,
    test: &Dataset,
    attackers: &[AttackerSpec],
) -> Result<(f64, Vec<f64>), FedError> {
    let sets = EvalSets::build(test, attackers)?;
    evaluate_cached(arch, params, &sets)
}
