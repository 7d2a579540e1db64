use rand::Rng;

use super::EstimateSet;
use crate::rng::CrucRng;

/// Picks `k` distinct experiments whose individual estimates seed EM and KM.
///
/// The first index is uniform; each further index is drawn with probability
/// proportional to its squared distance from the nearest index already chosen
/// (k-means++ seeding over the individual estimates). Falls back to a uniform
/// draw among the unchosen indices when all remaining distances are zero.
pub fn seed_indices(ir: &EstimateSet, k: usize, rng: &mut CrucRng) -> Vec<usize> {
    let m = ir.len();
    assert!(k >= 1 && k <= m, "need 1 <= k <= M");
    let h = ir.matrix();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..m));
    let mut nearest: Vec<f64> = (0..m)
        .map(|j| (h.column(j) - h.column(chosen[0])).norm_squared())
        .collect();
    while chosen.len() < k {
        let total: f64 = (0..m)
            .filter(|j| !chosen.contains(j))
            .map(|j| nearest[j])
            .sum();
        let next = if total > 0.0 && total.is_finite() {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for j in (0..m).filter(|j| !chosen.contains(j)) {
                if nearest[j] > 0.0 {
                    pick = Some(j);
                    if target < nearest[j] {
                        break;
                    }
                    target -= nearest[j];
                }
            }
            pick.expect("positive mass")
        } else {
            let free: Vec<usize> = (0..m).filter(|j| !chosen.contains(j)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for j in 0..m {
            let d = (h.column(j) - h.column(next)).norm_squared();
            if d < nearest[j] {
                nearest[j] = d;
            }
        }
    }
    chosen
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use nalgebra::DMatrix;

    #[test]
    fn never_picks_a_duplicate_cluster_when_clusters_are_exact() {
        // Three exact clusters of identical columns.
        let cols = [0, 0, 0, 1, 1, 2, 2, 2, 2, 1];
        let h = DMatrix::from_fn(2, cols.len(), |i, j| {
            if i == 0 {
                cols[j] as f64
            } else {
                -(cols[j] as f64) * 2.0
            }
        });
        let ids = (0..cols.len()).map(|j| j.to_string()).collect();
        let set = EstimateSet::new(ids, h).unwrap();
        for seed in 0..200 {
            let picks = seed_indices(&set, 3, &mut rng::seeded(seed));
            let mut groups: Vec<usize> = picks.iter().map(|&j| cols[j]).collect();
            groups.sort_unstable();
            assert_eq!(groups, vec![0, 1, 2], "seed {seed}");
        }
    }

    #[test]
    fn distinct_even_when_all_estimates_coincide() {
        let set = EstimateSet::new(
            (0..5).map(|j| j.to_string()).collect(),
            DMatrix::zeros(3, 5),
        )
        .unwrap();
        let mut picks = seed_indices(&set, 5, &mut rng::seeded(3));
        picks.sort_unstable();
        assert_eq!(picks, vec![0, 1, 2, 3, 4]);
    }
}
