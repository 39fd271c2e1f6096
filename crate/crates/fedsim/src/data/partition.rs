//! Non-IID Dirichlet partitioning.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Gamma};

use super::{DataError, Dataset};
use crate::rng::{stream_rng, Stream};

/// Per-client index lists into a dataset. Lists are disjoint and their union
/// covers the dataset exactly once.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionPlan {
    clients: Vec<Vec<usize>>,
}

impl PartitionPlan {
    pub fn n_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn client(&self, id: usize) -> &[usize] {
        &self.clients[id]
    }

    pub fn clients(&self) -> &[Vec<usize>] {
        &self.clients
    }
}

/// Splits `ds` across `n_clients` by drawing, for each class, client
/// proportions from `Dirichlet(alpha * 1)` and allocating that class's
/// examples with largest-remainder rounding. Smaller `alpha` means more
/// skew. Deterministic per `(seed, alpha, n_clients)`.
pub fn dirichlet_partition(
    ds: &Dataset,
    n_clients: usize,
    alpha: f64,
    seed: u64,
) -> Result<PartitionPlan, DataError> {
    if n_clients == 0 {
        return Err(DataError::NoClients);
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(DataError::BadAlpha(alpha));
    }
    let mut rng = stream_rng(seed, Stream::Partition);
    let gamma = Gamma::new(alpha, 1.0).expect("alpha validated");

    // Indices of each class, shuffled so allocation order is random.
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.class_count()];
    for (i, ex) in ds.examples().iter().enumerate() {
        by_class[ex.label].push(i);
    }

    let mut clients: Vec<Vec<usize>> = vec![Vec::new(); n_clients];
    for indices in &mut by_class {
        indices.shuffle(&mut rng);
        if indices.is_empty() {
            continue;
        }
        // Dirichlet draw as normalized Gamma variates.
        let mut props: Vec<f64> = (0..n_clients).map(|_| gamma.sample(&mut rng)).collect();
        let total: f64 = props.iter().sum();
        if total <= 0.0 {
            // All-zero draw (possible for tiny alpha): give the class to one client.
            props = vec![0.0; n_clients];
            props[0] = 1.0;
        } else {
            for p in &mut props {
                *p /= total;
            }
        }

        // Largest-remainder rounding of quotas to integer counts.
        let n = indices.len();
        let quotas: Vec<f64> = props.iter().map(|p| p * n as f64).collect();
        let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
        let assigned: usize = counts.iter().sum();
        let mut order: Vec<usize> = (0..n_clients).collect();
        // Ties broken by client id for determinism.
        order.sort_by(|&a, &b| {
            let fa = quotas[a] - quotas[a].floor();
            let fb = quotas[b] - quotas[b].floor();
            fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
        });
        for &c in order.iter().take(n - assigned) {
            counts[c] += 1;
        }

        let mut at = 0;
        for (client, &count) in clients.iter_mut().zip(&counts) {
            client.extend_from_slice(&indices[at..at + count]);
            at += count;
        }
        debug_assert_eq!(at, n);
    }
    Ok(PartitionPlan { clients })
}

/// Mean over clients of the Shannon entropy (nats) of each client's class
/// distribution. Empty clients contribute zero entropy.
pub fn mean_client_class_entropy(ds: &Dataset, plan: &PartitionPlan) -> f64 {
    let mut total = 0.0;
    for client in plan.clients() {
        if client.is_empty() {
            continue;
        }
        let mut hist = vec![0usize; ds.class_count()];
        for &i in client {
            hist[ds.example(i).label] += 1;
        }
        let n = client.len() as f64;
        let entropy: f64 = hist
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.ln()
            })
            .sum();
        total += entropy;
    }
    total / plan.n_clients() as f64
}
