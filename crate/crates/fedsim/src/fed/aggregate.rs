//! Server-side aggregation: FedAvg and the two robust variants.

use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

use super::cluster::two_cluster_average_linkage;
use super::{ClientUpdate, FedError};
use crate::kernel::ParamVector;

/// Lower median: element at index `(n-1)/2` of the sorted values. With a
/// benign majority this never exceeds a benign client's value, which is what
/// the clipping defense relies on.
pub fn lower_median(values: &[f64]) -> f64 {
    assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted[(sorted.len() - 1) / 2]
}

fn deltas(global: &ParamVector, updates: &[ClientUpdate]) -> Result<Vec<ParamVector>, FedError> {
    updates
        .iter()
        .map(|u| {
            global.check_len(&u.params)?;
            Ok(u.params.sub(global))
        })
        .collect()
}

/// `global + server_lr * Σ w_i (θ_i - global)` with `w_i` proportional to
/// each client's sample count. If every count is zero the global model is
/// returned unchanged.
///
/// With `server_lr == 1` this reduces to the weighted parameter average
/// `Σ w_i θ_i`, which is computed directly in that form: a one-client
/// federation then reproduces its client's parameters bit-exactly, which the
/// delta form cannot guarantee in floating point.
pub fn fedavg(
    global: &ParamVector,
    updates: &[ClientUpdate],
    server_lr: f64,
) -> Result<ParamVector, FedError> {
    if updates.is_empty() {
        return Err(FedError::NoUpdates);
    }
    let total: f64 = updates.iter().map(|u| u.sample_count as f64).sum();
    if total == 0.0 {
        for u in updates {
            global.check_len(&u.params)?;
        }
        return Ok(global.clone());
    }
    if server_lr == 1.0 {
        let mut out = ParamVector::zeros(global.len());
        for u in updates {
            global.check_len(&u.params)?;
            out.axpy(u.sample_count as f64 / total, &u.params);
        }
        return Ok(out);
    }
    let ds = deltas(global, updates)?;
    let mut out = global.clone();
    for (u, d) in updates.iter().zip(&ds) {
        let w = u.sample_count as f64 / total;
        out.axpy(server_lr * w, d);
    }
    Ok(out)
}

/// Diagnostics from one clipped-clustering aggregation.
#[derive(Debug, Clone)]
pub struct ClipClusterReport {
    /// Client id and pre-clip delta norm, in update order.
    pub original_norms: Vec<(usize, f64)>,
    /// The clip bound: lower median of the original norms.
    pub clip_threshold: f64,
    /// Client id and post-clip delta norm, in update order.
    pub clipped_norms: Vec<(usize, f64)>,
    /// Client ids whose updates were averaged.
    pub kept: Vec<usize>,
}

/// Clip-to-median plus majority clustering:
/// 1. every delta is clipped to the (lower) median of the delta norms;
/// 2. clipped deltas are split in two by average-linkage agglomerative
///    clustering under cosine distance;
/// 3. the larger cluster (tie: the one containing the smallest client id)
///    is averaged with equal weights and applied with `server_lr`.
///
/// If every delta is zero the mean (zero) is applied directly.
pub fn clipped_clustering_agg(
    global: &ParamVector,
    updates: &[ClientUpdate],
    server_lr: f64,
) -> Result<(ParamVector, ClipClusterReport), FedError> {
    if updates.len() < 2 {
        return Err(FedError::NotEnoughUpdates { need: 2, got: updates.len() });
    }
    let ds = deltas(global, updates)?;
    let norms: Vec<f64> = ds.iter().map(ParamVector::norm).collect();
    let original_norms: Vec<(usize, f64)> =
        updates.iter().zip(&norms).map(|(u, &n)| (u.client_id, n)).collect();

    if norms.iter().all(|&n| n == 0.0) {
        // all-zero deltas: plain mean, which leaves the global unchanged
        let report = ClipClusterReport {
            original_norms: original_norms.clone(),
            clip_threshold: 0.0,
            clipped_norms: original_norms,
            kept: updates.iter().map(|u| u.client_id).collect(),
        };
        return Ok((global.clone(), report));
    }

    let threshold = lower_median(&norms);
    let clipped: Vec<ParamVector> = ds
        .iter()
        .zip(&norms)
        .map(|(d, &n)| {
            let mut c = d.clone();
            if n > threshold && n > 0.0 {
                c.scale(threshold / n);
            }
            c
        })
        .collect();
    let clipped_norms: Vec<(usize, f64)> = updates
        .iter()
        .zip(&clipped)
        .map(|(u, c)| (u.client_id, c.norm()))
        .collect();

    // Cosine distance; a zero-norm delta has no direction and sits at
    // distance 1 from everything.
    let n = clipped.len();
    let mut dist = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let ni = clipped[i].norm();
            let nj = clipped[j].norm();
            let d = if ni == 0.0 || nj == 0.0 {
                1.0
            } else {
                1.0 - clipped[i].dot(&clipped[j]) / (ni * nj)
            };
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    let (a, b) = two_cluster_average_linkage(&dist);
    let winner = if a.len() > b.len() {
        a
    } else if b.len() > a.len() {
        b
    } else {
        // tie: the cluster containing the smallest client id
        let min_a = a.iter().map(|&i| updates[i].client_id).min().unwrap();
        let min_b = b.iter().map(|&i| updates[i].client_id).min().unwrap();
        if min_a < min_b {
            a
        } else {
            b
        }
    };

    let mut mean = ParamVector::zeros(global.len());
    for &i in &winner {
        mean.axpy(1.0 / winner.len() as f64, &clipped[i]);
    }
    let mut out = global.clone();
    out.axpy(server_lr, &mean);
    let report = ClipClusterReport {
        original_norms,
        clip_threshold: threshold,
        clipped_norms,
        kept: winner.iter().map(|&i| updates[i].client_id).collect(),
    };
    Ok((out, report))
}

/// DP-FedAvg: each delta is scaled by `min(1, clip_bound/‖delta‖)`, the
/// clipped deltas are averaged with equal weights, and i.i.d. Gaussian noise
/// with standard deviation `sigma * clip_bound / m` is added per coordinate
/// before applying with `server_lr`. With `sigma = 0` this is deterministic.
pub fn dp_fedavg_agg(
    global: &ParamVector,
    updates: &[ClientUpdate],
    clip_bound: f64,
    sigma: f64,
    server_lr: f64,
    rng: &mut ChaCha12Rng,
) -> Result<ParamVector, FedError> {
    if updates.is_empty() {
        return Err(FedError::NoUpdates);
    }
    if !(clip_bound > 0.0) {
        return Err(FedError::BadDefenseConfig(format!("clip bound {clip_bound} must be > 0")));
    }
    let ds = deltas(global, updates)?;
    let m = updates.len() as f64;
    let mut mean = ParamVector::zeros(global.len());
    for d in &ds {
        let norm = d.norm();
        let factor = if norm > clip_bound { clip_bound / norm } else { 1.0 };
        mean.axpy(factor / m, d);
    }
    if sigma > 0.0 {
        let noise = Normal::new(0.0, sigma * clip_bound / m).expect("std positive");
        for v in mean.as_mut_slice() {
            *v += noise.sample(rng);
        }
    }
    let mut out = global.clone();
    out.axpy(server_lr, &mean);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    fn update(id: usize, values: Vec<f64>, count: usize) -> ClientUpdate {
        ClientUpdate { client_id: id, params: ParamVector::from_vec(values), sample_count: count }
    }

    #[test]
    fn fedavg_identical_updates_is_idempotent() {
        let global = ParamVector::from_vec(vec![0.0, 0.0]);
        let theta = vec![1.0, -2.0];
        let updates = vec![update(0, theta.clone(), 3), update(1, theta.clone(), 5)];
        let out = fedavg(&global, &updates, 1.0).unwrap();
        assert_eq!(out.as_slice(), theta.as_slice());
    }

    #[test]
    fn fedavg_symmetric_deltas_cancel() {
        let global = ParamVector::from_vec(vec![1.0, 1.0]);
        let updates = vec![update(0, vec![2.0, 2.0], 4), update(1, vec![0.0, 0.0], 4)];
        let out = fedavg(&global, &updates, 1.0).unwrap();
        assert_eq!(out.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn fedavg_weighted_by_counts() {
        let global = ParamVector::from_vec(vec![0.0]);
        let updates = vec![update(0, vec![4.0], 1), update(1, vec![8.0], 3)];
        // 0.25*4 + 0.75*8 = 7
        let out = fedavg(&global, &updates, 1.0).unwrap();
        assert!((out.as_slice()[0] - 7.0).abs() < 1e-12);
    }

    #[test]
    fn fedavg_weights_sum_to_one() {
        // aggregating identical params returns them exactly for any counts
        let global = ParamVector::from_vec(vec![5.0]);
        let updates = vec![update(0, vec![9.0], 2), update(1, vec![9.0], 7), update(2, vec![9.0], 1)];
        let out = fedavg(&global, &updates, 1.0).unwrap();
        assert!((out.as_slice()[0] - 9.0).abs() < 1e-12);
    }

    #[test]
    fn lower_median_odd_and_even() {
        assert_eq!(lower_median(&[2.0, 1.0, 100.0]), 2.0);
        assert_eq!(lower_median(&[4.0, 1.0, 2.0, 100.0]), 2.0);
    }

    #[test]
    fn clipping_bounds_norms_to_median() {
        let global = ParamVector::from_vec(vec![0.0, 0.0]);
        let updates = vec![
            update(0, vec![1.0, 0.0], 1),
            update(1, vec![2.0, 0.0], 1),
            update(2, vec![100.0, 0.0], 1),
        ];
        let (_, report) = clipped_clustering_agg(&global, &updates, 1.0).unwrap();
        assert_eq!(report.clip_threshold, 2.0);
        let norms: Vec<f64> = report.clipped_norms.iter().map(|&(_, n)| n).collect();
        assert!((norms[0] - 1.0).abs() < 1e-12);
        assert!((norms[1] - 2.0).abs() < 1e-12);
        assert!((norms[2] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn identical_updates_match_fedavg() {
        let global = ParamVector::from_vec(vec![1.0, 2.0]);
        let updates: Vec<ClientUpdate> =
            (0..4).map(|i| update(i, vec![3.0, 0.0], 1)).collect();
        let (out, report) = clipped_clustering_agg(&global, &updates, 1.0).unwrap();
        let reference = fedavg(&global, &updates, 1.0).unwrap();
        for (a, b) in out.as_slice().iter().zip(reference.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
        // the forced two-way split isolates one of the identical points, but
        // the kept cluster's mean is still the common delta
        assert!(report.kept.len() >= 2);
    }

    #[test]
    fn opposite_malicious_delta_is_excluded() {
        let global = ParamVector::from_vec(vec![0.0, 0.0]);
        let mut updates: Vec<ClientUpdate> = (0..5)
            .map(|i| update(i, vec![1.0, 0.1 * i as f64], 1))
            .collect();
        // malicious update pointing the other way (cosine distance ~ 2)
        updates.push(update(5, vec![-3.0, 0.0], 1));
        let (_, report) = clipped_clustering_agg(&global, &updates, 1.0).unwrap();
        assert_eq!(report.kept, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn all_zero_deltas_fall_back_to_mean() {
        let global = ParamVector::from_vec(vec![1.0]);
        let updates = vec![update(0, vec![1.0], 1), update(1, vec![1.0], 1)];
        let (out, _) = clipped_clustering_agg(&global, &updates, 1.0).unwrap();
        assert_eq!(out.as_slice(), &[1.0]);
    }

    #[test]
    fn single_update_is_rejected() {
        let global = ParamVector::from_vec(vec![0.0]);
        let updates = vec![update(0, vec![1.0], 1)];
        assert!(clipped_clustering_agg(&global, &updates, 1.0).is_err());
    }

    #[test]
    fn dp_without_noise_equals_equal_weight_fedavg() {
        let global = ParamVector::from_vec(vec![0.0, 0.0]);
        let updates = vec![update(0, vec![1.0, 0.0], 9), update(1, vec![0.0, 1.0], 1)];
        let mut rng = stream_rng(0, Stream::DpNoise { round: 0 });
        // norms are 1 <= S, so no clipping; counts are ignored (equal weight)
        let out = dp_fedavg_agg(&global, &updates, 2.0, 0.0, 1.0, &mut rng).unwrap();
        assert!((out.as_slice()[0] - 0.5).abs() < 1e-12);
        assert!((out.as_slice()[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn dp_clips_single_oversized_update() {
        let global = ParamVector::from_vec(vec![0.0, 0.0]);
        let updates = vec![update(0, vec![4.0, 0.0], 1)];
        let mut rng = stream_rng(0, Stream::DpNoise { round: 0 });
        let out = dp_fedavg_agg(&global, &updates, 2.0, 0.0, 1.0, &mut rng).unwrap();
        // norm 4 clipped to S=2
        assert!((out.as_slice()[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn dp_noise_std_matches_formula() {
        let global = ParamVector::zeros(8);
        let updates: Vec<ClientUpdate> = (0..4).map(|i| update(i, vec![0.0; 8], 1)).collect();
        let (s, sigma) = (2.0, 0.5);
        let expected = sigma * s / 4.0;
        let mut sum_sq = 0.0;
        let mut count = 0usize;
        for round in 0..1250u64 {
            let mut rng = stream_rng(42, Stream::DpNoise { round });
            let out = dp_fedavg_agg(&global, &updates, s, sigma, 1.0, &mut rng).unwrap();
            for &v in out.as_slice() {
                sum_sq += v * v;
                count += 1;
            }
        }
        let std = (sum_sq / count as f64).sqrt();
        assert!(
            (std - expected).abs() / expected < 0.05,
            "sample std {std} vs expected {expected}"
        );
    }

    #[test]
    fn dp_rejects_nonpositive_bound() {
        let global = ParamVector::zeros(1);
        let updates = vec![update(0, vec![1.0], 1)];
        let mut rng = stream_rng(0, Stream::DpNoise { round: 0 });
        assert!(dp_fedavg_agg(&global, &updates, 0.0, 0.5, 1.0, &mut rng).is_err());
    }
}
