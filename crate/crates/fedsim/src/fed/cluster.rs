//! Average-linkage agglomerative clustering into two groups.

/// Splits points `0..n` into two clusters by repeatedly merging the pair of
/// clusters with the smallest average cross distance. Ties break toward the
/// lexicographically smallest cluster pair, so the result is deterministic.
/// `dist` is a full symmetric matrix; `n >= 2`.
pub fn two_cluster_average_linkage(dist: &[Vec<f64>]) -> (Vec<usize>, Vec<usize>) {
    let n = dist.len();
    assert!(n >= 2, "need at least two points");
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    while clusters.len() > 2 {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                let mut sum = 0.0;
                for &a in &clusters[i] {
                    for &b in &clusters[j] {
                        sum += dist[a][b];
                    }
                }
                let avg = sum / (clusters[i].len() * clusters[j].len()) as f64;
                let better = match best {
                    None => true,
                    Some((d, _, _)) => avg < d,
                };
                if better {
                    best = Some((avg, i, j));
                }
            }
        }
        let (_, i, j) = best.expect("at least one pair");
        let merged = clusters.remove(j);
        clusters[i].extend(merged);
        clusters[i].sort_unstable();
    }
    let b = clusters.pop().unwrap();
    let a = clusters.pop().unwrap();
    (a, b)
}
