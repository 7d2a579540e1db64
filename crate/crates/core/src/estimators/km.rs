//! Clusterwise K-means regression: assign each experiment to the vector with the
//! smallest squared error, refit each cluster by pooled least squares, repeat
//! until the assignment stops changing.

use nalgebra::DVector;
use rayon::prelude::*;

use super::{fit_ir, seed_indices, EstimateSet, DEFAULT_MAX_ITER};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::lsq;
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct KmConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
}

impl KmConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        KmConfig {
            k,
            seed,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

/// `sse[t]` is the total squared error right after the `t`-th assignment.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KmTrace {
    pub sse: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct KmFit {
    pub estimates: EstimateSet,
    pub vectors: Vec<DVector<f64>>,
    pub assignments: Vec<usize>,
    pub trace: KmTrace,
}

fn check_vectors(vectors: &[DVector<f64>], train: &Dataset) -> Result<()> {
    if vectors.is_empty() {
        return Err(Error::InvalidArgument(
            "K-means needs at least one vector".into(),
        ));
    }
    if vectors.iter().any(|v| v.len() != train.dim()) {
        return Err(Error::Dimension(
            "K-means vector length differs from dataset dim".into(),
        ));
    }
    Ok(())
}

fn assign_with_sse(vectors: &[DVector<f64>], train: &Dataset) -> (Vec<usize>, f64) {
    let best: Vec<(usize, f64)> = train
        .experiments()
        .par_iter()
        .map(|e| {
            let mut best = (0, f64::INFINITY);
            for (k, h) in vectors.iter().enumerate() {
                let sse = (e.responses() - e.predictors() * h).norm_squared();
                if sse < best.1 {
                    best = (k, sse);
                }
            }
            best
        })
        .collect();
    let total = best.iter().map(|b| b.1).sum();
    (best.into_iter().map(|b| b.0).collect(), total)
}

/// Index of the vector with the least squared error for each experiment;
/// ties go to the lowest index.
pub fn km_assign(vectors: &[DVector<f64>], train: &Dataset) -> Result<Vec<usize>> {
    check_vectors(vectors, train)?;
    Ok(assign_with_sse(vectors, train).0)
}

/// Pooled least squares per cluster. Empty clusters keep their previous vector.
pub fn km_refit(
    assignments: &[usize],
    train: &Dataset,
    previous: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    check_vectors(previous, train)?;
    if assignments.len() != train.len() {
        return Err(Error::Dimension(format!(
            "{} assignments for {} experiments",
            assignments.len(),
            train.len()
        )));
    }
    if let Some(&bad) = assignments.iter().find(|&&k| k >= previous.len()) {
        return Err(Error::InvalidArgument(format!(
            "assignment {bad} out of range"
        )));
    }
    (0..previous.len())
        .map(|k| {
            let members: Vec<usize> = (0..train.len()).filter(|&m| assignments[m] == k).collect();
            if members.is_empty() {
                return Ok(previous[k].clone());
            }
            let (x, y) = train.stack(&members);
            Ok(lsq::solve_least_squares(&x, &y)?.coefficients)
        })
        .collect()
}

pub fn fit_km(train: &Dataset, config: &KmConfig) -> Result<KmFit> {
    if config.k == 0 || config.k > train.len() {
        return Err(Error::InvalidArgument(format!(
            "K-means needs 1 <= K <= M = {}, got K = {}",
            train.len(),
            config.k
        )));
    }
    if config.max_iter == 0 {
        return Err(Error::InvalidArgument("K-means needs max_iter >= 1".into()));
    }
    let ir = fit_ir(train)?;
    let mut vectors: Vec<DVector<f64>> = seed_indices(&ir, config.k, &mut rng::seeded(config.seed))
        .into_iter()
        .map(|m| ir.column(m))
        .collect();

    let mut trace = KmTrace::default();
    let mut current: Option<Vec<usize>> = None;
    for _ in 0..config.max_iter {
        let (assignments, sse) = assign_with_sse(&vectors, train);
        trace.sse.push(sse);
        if current.as_ref() == Some(&assignments) {
            trace.converged = true;
            break;
        }
        vectors = km_refit(&assignments, train, &vectors)?;
        trace.iterations += 1;
        current = Some(assignments);
    }
    // When the loop ran out without converging, the last refit moved the vectors;
    // report assignments consistent with the returned vectors.
    let assignments = if trace.converged {
        current.expect("converged implies an assignment")
    } else {
        assign_with_sse(&vectors, train).0
    };
    let columns = assignments.iter().map(|&k| vectors[k].clone()).collect();
    Ok(KmFit {
        estimates: EstimateSet::from_columns(train, columns)?,
        vectors,
        assignments,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::fit_cr;
    use crate::estimators::testutil::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn noiseless_data_goes_to_its_generating_vector() {
        let a = DVector::from_vec(vec![1.0, 0.0]);
        let b = DVector::from_vec(vec![0.0, 1.0]);
        let ds = dataset_from(&[b.clone(), a.clone(), b.clone()], 5, 0.0, 1);
        assert_eq!(
            km_assign(&[a.clone(), b.clone()], &ds).unwrap(),
            vec![1, 0, 1]
        );
        assert_eq!(km_assign(&[a], &ds).unwrap(), vec![0, 0, 0]);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let a = DVector::from_vec(vec![1.0, 0.0]);
        let ds = dataset_from(&[a.clone()], 5, 0.1, 2);
        assert_eq!(km_assign(&[a.clone(), a], &ds).unwrap(), vec![0]);
    }

    #[test]
    fn assignment_matches_exhaustive_table() {
        let ds = random_dataset(8, 6, 3, 3);
        let vectors: Vec<DVector<f64>> = (0..4)
            .map(|k| DVector::from_fn(3, |i, _| ((i * 7 + k * 3) % 5) as f64 - 2.0))
            .collect();
        let got = km_assign(&vectors, &ds).unwrap();
        for (m, e) in ds.experiments().iter().enumerate() {
            let table: Vec<f64> = vectors
                .iter()
                .map(|h| {
                    (0..e.len())
                        .map(|n| {
                            let r = e.responses()[n]
                                - (0..3).map(|j| e.predictors()[(n, j)] * h[j]).sum::<f64>();
                            r * r
                        })
                        .sum()
                })
                .collect();
            let best = (0..4).fold(0, |b, k| if table[k] < table[b] { k } else { b });
            assert_eq!(got[m], best);
        }
    }

    #[test]
    fn refit_single_cluster_is_cr_and_empty_cluster_is_kept() {
        let ds = random_dataset(5, 6, 2, 4);
        let prev = vec![DVector::zeros(2), DVector::from_vec(vec![9.0, 9.0])];
        let out = km_refit(&[0; 5], &ds, &prev).unwrap();
        assert_eq!(out[0], fit_cr(&ds).unwrap().column(0));
        assert_eq!(out[1], prev[1]);
    }

    #[test]
    fn refit_matches_per_cluster_oracle() {
        let ds = random_dataset(9, 6, 3, 5);
        let part = [2usize, 0, 1, 1, 2, 0, 0, 1, 2];
        let prev = vec![DVector::zeros(3); 3];
        let out = km_refit(&part, &ds, &prev).unwrap();
        for k in 0..3 {
            let members: Vec<usize> = (0..9).filter(|&m| part[m] == k).collect();
            let (x, y) = ds.stack(&members);
            let oracle = lsq::oracle_normal_equations(&x, &y).unwrap();
            assert_abs_diff_eq!(out[k], oracle.coefficients, epsilon = 1e-9);
        }
        assert!(km_refit(&[0, 5, 0, 0, 0, 0, 0, 0, 0], &ds, &prev).is_err());
    }

    #[test]
    fn single_cluster_fit_equals_cr() {
        let ds = random_dataset(7, 6, 3, 6);
        let fit = fit_km(&ds, &KmConfig::new(1, 0)).unwrap();
        assert!(fit.trace.converged);
        assert_eq!(fit.estimates, fit_cr(&ds).unwrap());
    }

    #[test]
    fn noiseless_clusters_are_recovered_and_sse_descends() {
        let centers = [vec![1.0, 0.0, 0.5], vec![-0.5, 1.0, 0.0]];
        let truth: Vec<DVector<f64>> = (0..10)
            .map(|m| DVector::from_vec(centers[(m * 7) % 2].clone()))
            .collect();
        let ds = dataset_from(&truth, 8, 0.0, 7);
        let fit = fit_km(&ds, &KmConfig::new(2, 9)).unwrap();
        for (m, h) in truth.iter().enumerate() {
            assert_abs_diff_eq!(fit.estimates.column(m), h.clone(), epsilon = 1e-10);
        }
        for seed in 0..5 {
            let fit = fit_km(
                &random_dataset(20, 6, 2, 50 + seed),
                &KmConfig::new(4, seed),
            )
            .unwrap();
            assert!(fit.trace.converged);
            for w in fit.trace.sse.windows(2) {
                assert!(w[1] <= w[0], "{w:?}");
            }
        }
    }
}
