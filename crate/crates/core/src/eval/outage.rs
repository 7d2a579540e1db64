use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{fit_em, EmConfig};
use crate::rng;
use crate::synth::{self, SyntheticSpec};

/// Minimum-cost assignment of every row to a distinct column (Hungarian
/// method with potentials). Needs `rows <= cols`; returns the column of each row.
pub fn min_cost_assignment(cost: &DMatrix<f64>) -> Result<Vec<usize>> {
    let (n, m) = cost.shape();
    if n > m {
        return Err(Error::InvalidArgument(format!(
            "cannot assign {n} rows to {m} columns"
        )));
    }
    if !cost.iter().all(|c| c.is_finite()) {
        return Err(Error::InvalidArgument(
            "assignment costs must be finite".into(),
        ));
    }
    // 1-based potentials u (rows), v (columns); way[j] is the previous column on
    // the augmenting path, owner[j] the row matched to column j (0 = free).
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut min_v = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < min_v[j] {
                        min_v[j] = cur;
                        way[j] = j0;
                    }
                    if min_v[j] < delta {
                        delta = min_v[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_v[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=m {
        if owner[j] != 0 {
            assignment[owner[j] - 1] = j - 1;
        }
    }
    Ok(assignment)
}

/// Largest `‖bank − truth‖` over the optimal matching of truth vectors to bank
/// vectors (minimum total squared error). Infinite when the bank is smaller
/// than the truth.
pub fn matched_max_error(bank: &[DVector<f64>], truth: &[DVector<f64>]) -> Result<f64> {
    if bank.len() < truth.len() {
        return Ok(f64::INFINITY);
    }
    if truth.is_empty() {
        return Ok(0.0);
    }
    let cost = DMatrix::from_fn(truth.len(), bank.len(), |i, k| {
        (&truth[i] - &bank[k]).norm_squared()
    });
    let assignment = min_cost_assignment(&cost)?;
    Ok(assignment
        .iter()
        .enumerate()
        .map(|(i, &k)| cost[(i, k)].sqrt())
        .fold(0.0, f64::max))
}

/// Matched max error of each EM restart on the dataset drawn from `spec`.
///
/// The data are generated once; restart `r` initializes EM with seed
/// `derive_seed(spec.seed, r)`.
pub fn em_recovery_errors(spec: &SyntheticSpec, k: usize, restarts: usize) -> Result<Vec<f64>> {
    if restarts == 0 {
        return Err(Error::InvalidArgument("restarts must be >= 1".into()));
    }
    let (data, truth) = synth::generate(spec)?;
    (0..restarts)
        .into_par_iter()
        .map(|r| {
            let fit = fit_em(
                &data,
                &EmConfig::new(k, rng::derive_seed(spec.seed, r as u64)),
            )?;
            matched_max_error(&fit.bank.vectors, &truth.cluster_vectors)
        })
        .collect()
}

/// Fraction of EM restarts whose matched bank misses the truth by more than `threshold`.
pub fn em_outage_rate(
    spec: &SyntheticSpec,
    k: usize,
    restarts: usize,
    threshold: f64,
) -> Result<f64> {
    if threshold.is_nan() || threshold < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "threshold must be >= 0, got {threshold}"
        )));
    }
    let errors = em_recovery_errors(spec, k, restarts)?;
    Ok(errors.iter().filter(|&&e| e > threshold).count() as f64 / restarts as f64)
}
