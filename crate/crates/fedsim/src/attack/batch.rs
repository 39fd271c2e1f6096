//! Poisoned batch construction, with and without a prebuilt replay pool.

use rand::seq::index::sample;
use rand::Rng;

use super::compose::{compose_counts, BatchComposition};
use super::{AttackError, AttackerSpec};
use crate::data::LabeledExample;
use crate::trigger::Trigger;

/// A training batch after poisoning. Poisoned images are clipped back into
/// pixel range; labels of poisoned slots carry the corresponding target.
#[derive(Debug, Clone)]
pub struct PoisonedBatch {
    pub images: Vec<crate::image::ImageTensor>,
    pub labels: Vec<usize>,
    pub composition: BatchComposition,
}

/// Per-attacker sets of prebuilt poisoned examples. Each attacker's set
/// carries that attacker's trigger and target label.
#[derive(Debug, Clone)]
pub struct ReplayPool {
    sets: Vec<(usize, Vec<LabeledExample>)>,
}

impl ReplayPool {
    /// Poisons `per_attacker` stock images with each attacker's trigger.
    /// Draws are without replacement per attacker, in attacker order.
    pub fn build<R: Rng>(
        stock: &[LabeledExample],
        attackers: &[AttackerSpec],
        per_attacker: usize,
        rng: &mut R,
    ) -> Result<Self, AttackError> {
        if per_attacker > stock.len() {
            return Err(AttackError::PoolUnderflow { need: per_attacker, have: stock.len() });
        }
        let mut sets = Vec::with_capacity(attackers.len());
        for spec in attackers {
            let picks = sample(rng, stock.len(), per_attacker);
            let mut examples = Vec::with_capacity(per_attacker);
            for i in picks.iter() {
                let (img, label) = spec.trigger.apply(&stock[i].image, true)?;
                examples.push(LabeledExample { image: img, label });
            }
            sets.push((spec.id, examples));
        }
        Ok(Self { sets })
    }

    pub fn set(&self, attacker_id: usize) -> Option<&[LabeledExample]> {
        self.sets.iter().find(|(id, _)| *id == attacker_id).map(|(_, v)| v.as_slice())
    }

    /// Number of attackers in the pool other than `attacker_id`.
    pub fn other_count(&self, attacker_id: usize) -> usize {
        self.sets.iter().filter(|(id, _)| *id != attacker_id).count()
    }

    fn others_of(&self, attacker_id: usize) -> impl Iterator<Item = &(usize, Vec<LabeledExample>)> {
        self.sets.iter().filter(move |(id, _)| *id != attacker_id)
    }
}

/// Where an attacker's replayed samples come from.
#[derive(Debug, Clone, Copy)]
pub enum ReplaySource<'a> {
    /// Convert clean batch images into the other attackers' backdoor
    /// samples in place.
    Direct { others: &'a [Trigger] },
    /// Substitute prebuilt samples drawn from the shared pool (the
    /// attacker's own partition is never sampled).
    Pooled { pool: &'a ReplayPool },
}

impl ReplaySource<'_> {
    pub fn n_others(&self, attacker_id: usize) -> usize {
        match self {
            ReplaySource::Direct { others } => others.len(),
            ReplaySource::Pooled { pool } => pool.other_count(attacker_id),
        }
    }
}

/// Poisons a clean batch in place: `own` randomly chosen images get the
/// attacker's own trigger, then for each other attacker `per_other_replay`
/// further images are converted to (direct) or replaced by (pooled) that
/// attacker's backdoor samples. Selection is without replacement.
pub fn poison_batch<R: Rng>(
    mut images: Vec<crate::image::ImageTensor>,
    mut labels: Vec<usize>,
    spec: &AttackerSpec,
    replay: ReplaySource<'_>,
    rng: &mut R,
) -> Result<PoisonedBatch, AttackError> {
    let bs = images.len();
    let composition = compose_counts(bs, spec.r_b, spec.r_br, replay.n_others(spec.id))?;
    let needed = composition.total_poisoned(replay.n_others(spec.id));
    let slots = sample(rng, bs, needed).into_vec();

    let (own_slots, replay_slots) = slots.split_at(composition.own);
    for &i in own_slots {
        let (img, label) = spec.trigger.apply(&images[i], true)?;
        images[i] = img;
        labels[i] = label;
    }

    match replay {
        ReplaySource::Direct { others } => {
            for (k, trigger) in others.iter().enumerate() {
                let chunk = &replay_slots
                    [k * composition.per_other_replay..(k + 1) * composition.per_other_replay];
                for &i in chunk {
                    let (img, label) = trigger.apply(&images[i], true)?;
                    images[i] = img;
                    labels[i] = label;
                }
            }
        }
        ReplaySource::Pooled { pool } => {
            for (k, (_, set)) in pool.others_of(spec.id).enumerate() {
                if set.len() < composition.per_other_replay {
                    return Err(AttackError::PoolUnderflow {
                        need: composition.per_other_replay,
                        have: set.len(),
                    });
                }
                let picks = sample(rng, set.len(), composition.per_other_replay);
                let chunk = &replay_slots
                    [k * composition.per_other_replay..(k + 1) * composition.per_other_replay];
                for (&i, j) in chunk.iter().zip(picks.iter()) {
                    images[i] = set[j].image.clone();
                    labels[i] = set[j].label;
                }
            }
        }
    }

    Ok(PoisonedBatch { images, labels, composition })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::ReplayMode;
    use crate::data::synth_shapes;
    use crate::kernel::SgdConfig;
    use crate::rng::{stream_rng, Stream};
    use crate::trigger::{Channel, TriggerSpec};
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn freq_trigger(channel: Channel, origin: usize, target: usize) -> Trigger {
        Trigger::Freq(TriggerSpec {
            channel,
            block_u: origin,
            block_v: origin,
            block_size: 3,
            magnitude: 100.0,
            target_label: target,
        })
    }

    fn spec(r_b: f64, r_br: f64) -> AttackerSpec {
        AttackerSpec {
            id: 0,
            trigger: freq_trigger(Channel::R, 15, 0),
            r_b,
            r_br,
            injection_rounds: BTreeSet::from([1]),
            local_epochs: 6,
            sgd: SgdConfig::new(0.05),
            gamma: 10.0,
            replay_mode: ReplayMode::Direct,
        }
    }

    fn clean_batch(n: usize) -> (Vec<crate::image::ImageTensor>, Vec<usize>) {
        let ds = synth_shapes(9, n / 10 + 1, 10).unwrap();
        let images = ds.examples().iter().take(n).map(|e| e.image.clone()).collect();
        let labels = ds.examples().iter().take(n).map(|e| e.label).collect();
        (images, labels)
    }

    fn others() -> Vec<Trigger> {
        vec![freq_trigger(Channel::G, 20, 4), freq_trigger(Channel::B, 25, 6)]
    }

    #[test]
    fn no_replay_means_only_own_poisoning() {
        let (images, labels) = clean_batch(64);
        let originals = images.clone();
        let mut rng = stream_rng(1, Stream::ReplayPool);
        let spec = spec(8.0 / 64.0, 0.0);
        let out = poison_batch(
            images,
            labels,
            &spec,
            ReplaySource::Direct { others: &others() },
            &mut rng,
        )
        .unwrap();
        assert_eq!(out.composition.own, 8);
        assert_eq!(out.composition.per_other_replay, 0);
        let changed = out
            .images
            .iter()
            .zip(&originals)
            .filter(|(a, b)| a != b)
            .count();
        assert_eq!(changed, 8);
        assert_eq!(out.labels.iter().filter(|&&l| l == 0).count() >= 8, true);
    }

    #[test]
    fn reference_batch_label_multiset() {
        let (images, labels) = clean_batch(64);
        let originals = images.clone();
        let original_labels = labels.clone();
        let mut rng = stream_rng(2, Stream::ReplayPool);
        let spec = spec(8.0 / 64.0, 3.0 / 64.0);
        let out = poison_batch(
            images,
            labels,
            &spec,
            ReplaySource::Direct { others: &others() },
            &mut rng,
        )
        .unwrap();
        assert_eq!(out.composition, compose_counts(64, 8.0 / 64.0, 3.0 / 64.0, 2).unwrap());

        // Poisoned slots are exactly those whose image changed; their labels
        // must be the corresponding targets: 8x label 0, 3x label 4,
        // 3x label 6. The other 50 keep their original labels.
        let mut by_target = [0usize; 10];
        let mut untouched = 0;
        for i in 0..64 {
            if out.images[i] == originals[i] {
                assert_eq!(out.labels[i], original_labels[i]);
                untouched += 1;
            } else {
                by_target[out.labels[i]] += 1;
            }
        }
        assert_eq!(untouched, 50);
        assert_eq!(by_target[0], 8);
        assert_eq!(by_target[4], 3);
        assert_eq!(by_target[6], 3);
    }

    #[test]
    fn determinism_per_rng_seed() {
        let spec = spec(8.0 / 64.0, 3.0 / 64.0);
        let (images, labels) = clean_batch(64);
        let a = poison_batch(
            images.clone(),
            labels.clone(),
            &spec,
            ReplaySource::Direct { others: &others() },
            &mut stream_rng(3, Stream::ReplayPool),
        )
        .unwrap();
        let b = poison_batch(
            images,
            labels,
            &spec,
            ReplaySource::Direct { others: &others() },
            &mut stream_rng(3, Stream::ReplayPool),
        )
        .unwrap();
        assert_eq!(a.images, b.images);
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn pool_mode_matches_direct_composition_and_skips_own_set() {
        let ds = synth_shapes(11, 10, 10).unwrap();
        let stock: Vec<LabeledExample> = ds.examples().to_vec();
        let mut specs = vec![spec(8.0 / 64.0, 3.0 / 64.0)];
        specs[0].replay_mode = ReplayMode::Pool;
        let mut a2 = spec(8.0 / 64.0, 3.0 / 64.0);
        a2.id = 1;
        a2.trigger = freq_trigger(Channel::G, 20, 4);
        let mut a3 = spec(8.0 / 64.0, 3.0 / 64.0);
        a3.id = 2;
        a3.trigger = freq_trigger(Channel::B, 25, 6);
        specs.push(a2);
        specs.push(a3);

        let pool =
            ReplayPool::build(&stock, &specs, 8, &mut stream_rng(4, Stream::ReplayPool)).unwrap();
        assert_eq!(pool.other_count(0), 2);

        let (images, labels) = clean_batch(64);
        let originals = images.clone();
        let out = poison_batch(
            images,
            labels,
            &specs[0],
            ReplaySource::Pooled { pool: &pool },
            &mut stream_rng(5, Stream::ReplayPool),
        )
        .unwrap();
        assert_eq!(out.composition, compose_counts(64, 8.0 / 64.0, 3.0 / 64.0, 2).unwrap());
        // every pool sample carries its attacker's target
        for ex in pool.set(0).unwrap() {
            assert_eq!(ex.label, 0);
        }
        // among the touched slots: 8 own-triggered (label 0), 3 replaced by
        // each other attacker's pool samples (labels 4 and 6) — never label 0
        // from the pool, since the attacker's own partition is excluded
        let mut by_target = [0usize; 10];
        for i in 0..64 {
            if out.images[i] != originals[i] {
                by_target[out.labels[i]] += 1;
            }
        }
        assert_eq!(by_target[0], 8);
        assert_eq!(by_target[4], 3);
        assert_eq!(by_target[6], 3);
    }

    #[test]
    fn pool_underflow_is_rejected() {
        let ds = synth_shapes(12, 1, 10).unwrap();
        let stock: Vec<LabeledExample> = ds.examples().iter().take(2).cloned().collect();
        let specs = vec![spec(0.0, 0.8)];
        assert!(matches!(
            ReplayPool::build(&stock, &specs, 5, &mut stream_rng(6, Stream::ReplayPool)),
            Err(AttackError::PoolUnderflow { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn poisoned_counts_match_compose(
            bs in 8usize..48,
            own_frac in 0.0f64..0.3,
            replay_frac in 0.0f64..0.08,
            seed in 0u64..50,
        ) {
            let (images, labels) = clean_batch(bs);
            let spec = spec(own_frac, replay_frac);
            let expected = compose_counts(bs, own_frac, replay_frac, 2).unwrap();
            let originals = images.clone();
            let out = poison_batch(
                images,
                labels,
                &spec,
                ReplaySource::Direct { others: &others() },
                &mut stream_rng(seed, Stream::ReplayPool),
            ).unwrap();
            prop_assert_eq!(out.composition, expected);
            let changed = out.images.iter().zip(&originals).filter(|(a, b)| a != b).count();
            // every poisoned slot changes its image (trigger magnitude is nonzero)
            prop_assert_eq!(changed, expected.total_poisoned(2));
        }
    }
}
