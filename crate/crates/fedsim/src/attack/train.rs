//! Local training loops: the benign client path and the malicious path
//! with per-batch poisoning.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha12Rng;

use super::batch::{poison_batch, ReplaySource};
use super::{AttackError, AttackerSpec};
use crate::data::Dataset;
use crate::image::ImageTensor;
use crate::kernel::{loss_and_grad, sgd_step, ModelArch, ParamVector, SgdConfig, SgdState};

/// Trained local parameters plus per-step loss telemetry.
#[derive(Debug, Clone)]
pub struct LocalTrainOutput {
    pub params: ParamVector,
    pub step_losses: Vec<f64>,
}

fn gather(ds: &Dataset, indices: &[usize]) -> (Vec<ImageTensor>, Vec<usize>) {
    let images = indices.iter().map(|&i| ds.example(i).image.clone()).collect();
    let labels = indices.iter().map(|&i| ds.example(i).label).collect();
    (images, labels)
}

/// Plain local SGD over the client's shard: `epochs` passes of shuffled
/// minibatches. A client with no data returns the global parameters
/// unchanged.
pub fn benign_local_train(
    arch: &ModelArch,
    global: &ParamVector,
    ds: &Dataset,
    indices: &[usize],
    epochs: usize,
    cfg: &SgdConfig,
    batch_size: usize,
    rng: &mut ChaCha12Rng,
) -> Result<LocalTrainOutput, AttackError> {
    let mut params = global.clone();
    if indices.is_empty() {
        return Ok(LocalTrainOutput { params, step_losses: Vec::new() });
    }
    let mut state = SgdState::new(cfg, params.len());
    let mut order = indices.to_vec();
    let mut step_losses = Vec::new();
    for _ in 0..epochs {
        order.shuffle(rng);
        for chunk in order.chunks(batch_size) {
            let (images, labels) = gather(ds, chunk);
            let (loss, grad) = loss_and_grad(arch, &params, &images, &labels)?;
            sgd_step(&mut params, &grad, &mut state, cfg)?;
            step_losses.push(loss);
        }
        state.decay_epoch(cfg);
    }
    Ok(LocalTrainOutput { params, step_losses })
}

/// Attacker-side local training. In one of the attacker's injection rounds
/// every batch is poisoned (own trigger plus replayed samples) and the
/// attacker's own optimizer settings apply; in any other round the update is
/// exactly the benign one for the same data and rng.
#[allow(clippy::too_many_arguments)]
pub fn attacker_local_train(
    arch: &ModelArch,
    global: &ParamVector,
    spec: &AttackerSpec,
    ds: &Dataset,
    indices: &[usize],
    replay: ReplaySource<'_>,
    round: usize,
    benign_epochs: usize,
    benign_cfg: &SgdConfig,
    batch_size: usize,
    rng: &mut ChaCha12Rng,
) -> Result<LocalTrainOutput, AttackError> {
    if !spec.injection_rounds.contains(&round) {
        return benign_local_train(
            arch,
            global,
            ds,
            indices,
            benign_epochs,
            benign_cfg,
            batch_size,
            rng,
        );
    }
    let mut params = global.clone();
    if indices.is_empty() {
        return Ok(LocalTrainOutput { params, step_losses: Vec::new() });
    }
    let mut state = SgdState::new(&spec.sgd, params.len());
    let mut order = indices.to_vec();
    let mut step_losses = Vec::new();
    for _ in 0..spec.local_epochs {
        order.shuffle(rng);
        for chunk in order.chunks(batch_size) {
            let (images, labels) = gather(ds, chunk);
            let poisoned = poison_batch(images, labels, spec, replay, rng)?;
            let (loss, grad) = loss_and_grad(arch, &params, &poisoned.images, &poisoned.labels)?;
            sgd_step(&mut params, &grad, &mut state, &spec.sgd)?;
            step_losses.push(loss);
        }
        state.decay_epoch(&spec.sgd);
    }
    Ok(LocalTrainOutput { params, step_losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::{amplify, ReplayMode};
    use crate::data::synth_shapes;
    use crate::kernel::{forward_image, init_params};
    use crate::rng::{stream_rng, Stream};
    use crate::trigger::{Channel, Trigger, TriggerSpec};
    use std::collections::BTreeSet;

    fn tiny_spec(injection_rounds: BTreeSet<usize>, r_b: f64) -> AttackerSpec {
        AttackerSpec {
            id: 0,
            trigger: Trigger::Freq(TriggerSpec {
                channel: Channel::R,
                block_u: 15,
                block_v: 15,
                block_size: 3,
                magnitude: 100.0,
                target_label: 0,
            }),
            r_b,
            r_br: 0.0,
            injection_rounds,
            local_epochs: 8,
            sgd: SgdConfig { momentum: 0.9, ..SgdConfig::new(0.05) },
            gamma: 1.0,
            replay_mode: ReplayMode::Direct,
        }
    }

    #[test]
    fn non_injection_round_equals_benign_update() {
        let arch = ModelArch::tiny_conv(10);
        let ds = synth_shapes(21, 4, 10).unwrap();
        let indices: Vec<usize> = (0..ds.len()).collect();
        let global = init_params(&arch, 3).unwrap();
        let benign_cfg = SgdConfig { momentum: 0.9, weight_decay: 0.0005, ..SgdConfig::new(0.01) };
        let spec = tiny_spec(BTreeSet::from([5]), 0.25);

        let benign = benign_local_train(
            &arch,
            &global,
            &ds,
            &indices,
            2,
            &benign_cfg,
            16,
            &mut stream_rng(9, Stream::ClientTrain { client: 0, round: 3 }),
        )
        .unwrap();
        let attacker = attacker_local_train(
            &arch,
            &global,
            &spec,
            &ds,
            &indices,
            ReplaySource::Direct { others: &[] },
            3, // not an injection round
            2,
            &benign_cfg,
            16,
            &mut stream_rng(9, Stream::ClientTrain { client: 0, round: 3 }),
        )
        .unwrap();
        assert_eq!(benign.params, attacker.params);
    }

    #[test]
    fn full_poisoning_overfits_trigger() {
        // r_b = 1: every sample triggered and relabeled; after enough epochs
        // the local model classifies every triggered training image as the
        // target.
        let arch = ModelArch::tiny_conv(10);
        let ds = synth_shapes(22, 3, 10).unwrap();
        let indices: Vec<usize> = (0..ds.len()).collect();
        let global = init_params(&arch, 4).unwrap();
        let spec = tiny_spec(BTreeSet::from([0]), 1.0);
        let out = attacker_local_train(
            &arch,
            &global,
            &spec,
            &ds,
            &indices,
            ReplaySource::Direct { others: &[] },
            0,
            2,
            &SgdConfig::new(0.01),
            16,
            &mut stream_rng(10, Stream::ClientTrain { client: 0, round: 0 }),
        )
        .unwrap();
        let mut hits = 0;
        for ex in ds.examples() {
            let (img, _) = spec.trigger.apply(&ex.image, true).unwrap();
            if forward_image(&arch, &out.params, &img)
                .unwrap()
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0
                == 0
            {
                hits += 1;
            }
        }
        assert_eq!(hits, ds.len(), "asr on train triggers should be 1");
    }

    #[test]
    fn combined_set_loss_mostly_decreases() {
        // Loss measured on a fixed clean+poisoned evaluation set after each
        // epoch of malicious training; the per-minibatch training loss is
        // noisier because every batch poisons different slots.
        let arch = ModelArch::tiny_conv(10);
        let ds = synth_shapes(23, 6, 10).unwrap();
        let indices: Vec<usize> = (0..ds.len()).collect();
        let mut spec = tiny_spec(BTreeSet::from([0]), 0.2);
        spec.local_epochs = 1;
        spec.sgd = SgdConfig { momentum: 0.9, ..SgdConfig::new(0.01) };

        // fixed evaluation set mirroring the training mixture: every clean
        // image plus an r_b-proportional share of poisoned copies
        let mut eval_images: Vec<crate::image::ImageTensor> =
            ds.examples().iter().map(|e| e.image.clone()).collect();
        let mut eval_labels: Vec<usize> = ds.examples().iter().map(|e| e.label).collect();
        let n_poisoned = (ds.len() as f64 * spec.r_b / (1.0 - spec.r_b)).round() as usize;
        for ex in ds.examples().iter().take(n_poisoned) {
            let (img, label) = spec.trigger.apply(&ex.image, true).unwrap();
            eval_images.push(img);
            eval_labels.push(label);
        }

        let mut rng = stream_rng(11, Stream::ClientTrain { client: 0, round: 0 });
        let mut params = init_params(&arch, 5).unwrap();
        let mut epoch_losses = Vec::new();
        for _ in 0..20 {
            params = attacker_local_train(
                &arch,
                &params,
                &spec,
                &ds,
                &indices,
                ReplaySource::Direct { others: &[] },
                0,
                2,
                &SgdConfig::new(0.01),
                60,
                &mut rng,
            )
            .unwrap()
            .params;
            let (loss, _) = loss_and_grad(&arch, &params, &eval_images, &eval_labels).unwrap();
            epoch_losses.push(loss);
        }
        let decreasing = epoch_losses.windows(2).filter(|w| w[1] <= w[0] + 1e-12).count();
        let frac = decreasing as f64 / (epoch_losses.len() - 1) as f64;
        assert!(frac >= 0.9, "only {frac:.2} of epochs decreased: {epoch_losses:?}");
    }

    #[test]
    fn amplify_affine_identities() {
        let global = ParamVector::from_vec(vec![1.0, 2.0]);
        let local = ParamVector::from_vec(vec![3.0, 0.0]);
        assert_eq!(amplify(&global, &local, 1.0).unwrap(), local);
        assert_eq!(amplify(&global, &global, 7.0).unwrap(), global);
        let scaled = amplify(&global, &local, 10.0).unwrap();
        assert_eq!(scaled.as_slice(), &[1.0 + 10.0 * 2.0, 2.0 - 10.0 * 2.0]);
    }

    #[test]
    fn amplify_scalar_example() {
        let global = ParamVector::from_vec(vec![0.0]);
        let local = ParamVector::from_vec(vec![0.1]);
        let out = amplify(&global, &local, 10.0).unwrap();
        assert!((out.as_slice()[0] - 1.0).abs() < 1e-15);
    }
}
