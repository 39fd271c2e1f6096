//! Poisoned batch arithmetic.

use super::AttackError;

/// How one attacker's batch of size `bs` splits up: `own` samples carry the
/// attacker's own trigger, `per_other_replay` samples carry each *other*
/// attacker's trigger, and the rest stay clean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchComposition {
    pub own: usize,
    pub per_other_replay: usize,
    pub clean: usize,
}

impl BatchComposition {
    pub fn total_poisoned(&self, n_others: usize) -> usize {
        self.own + n_others * self.per_other_replay
    }
}

fn round_half_up(x: f64) -> usize {
    // f64::round ties away from zero; x is never negative here.
    x.round() as usize
}

/// Splits a batch by the poisoning ratio `r_b` and replay ratio `r_br`:
/// `own = round(r_b·bs)`, `per_other_replay = round(r_br·bs)`, and the
/// remainder is clean. Errors when the poisoned counts exceed the batch.
pub fn compose_counts(
    bs: usize,
    r_b: f64,
    r_br: f64,
    n_others: usize,
) -> Result<BatchComposition, AttackError> {
    let own = round_half_up(r_b * bs as f64);
    let per_other_replay = round_half_up(r_br * bs as f64);
    let poisoned = own + n_others * per_other_replay;
    if poisoned > bs {
        return Err(AttackError::BatchOverflow { bs, own, per_other_replay, n_others });
    }
    Ok(BatchComposition { own, per_other_replay, clean: bs - poisoned })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reference_composition() {
        // 8 own + 3 per replay type (x2) + 50 clean = 64
        let c = compose_counts(64, 8.0 / 64.0, 3.0 / 64.0, 2).unwrap();
        assert_eq!(c, BatchComposition { own: 8, per_other_replay: 3, clean: 50 });
    }

    #[test]
    fn zero_ratios_leave_batch_clean() {
        let c = compose_counts(64, 0.0, 0.0, 2).unwrap();
        assert_eq!(c, BatchComposition { own: 0, per_other_replay: 0, clean: 64 });
    }

    #[test]
    fn quarter_poisoning_on_32() {
        let c = compose_counts(32, 0.25, 0.0625, 2).unwrap();
        assert_eq!(c, BatchComposition { own: 8, per_other_replay: 2, clean: 20 });
    }

    #[test]
    fn overflow_is_rejected() {
        assert!(matches!(
            compose_counts(10, 0.8, 0.3, 2),
            Err(AttackError::BatchOverflow { .. })
        ));
    }

    #[test]
    fn rounding_is_half_up() {
        // 0.5 rounds up: r_b*bs = 1.5 -> 2
        let c = compose_counts(12, 0.125, 0.0, 0).unwrap();
        assert_eq!(c.own, 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn counts_match_formulas_and_sum_to_batch(
            bs in 1usize..512,
            r_b in 0.0f64..0.5,
            r_br in 0.0f64..0.1,
            n_others in 0usize..5,
        ) {
            match compose_counts(bs, r_b, r_br, n_others) {
                Ok(c) => {
                    prop_assert_eq!(c.own, (r_b * bs as f64).round() as usize);
                    prop_assert_eq!(c.per_other_replay, (r_br * bs as f64).round() as usize);
                    prop_assert_eq!(c.own + n_others * c.per_other_replay + c.clean, bs);
                }
                Err(_) => {
                    let own = (r_b * bs as f64).round() as usize;
                    let per = (r_br * bs as f64).round() as usize;
                    prop_assert!(own + n_others * per > bs);
                }
            }
        }
    }
}
