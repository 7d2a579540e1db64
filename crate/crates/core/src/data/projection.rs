use nalgebra::DMatrix;
use rand_distr::{Distribution, Normal};

use super::{Dataset, Experiment};
use crate::error::{Error, Result};
use crate::rng;

/// Gaussian random projection from `source_dim` to `target_dim` features.
///
/// Entries are i.i.d. `N(0, 1/target_dim)`, so inner products are preserved in
/// expectation.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionSketch {
    matrix: DMatrix<f64>,
    seed: u64,
}

impl ProjectionSketch {
    /// `target_dim × source_dim` projection matrix.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn source_dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn target_dim(&self) -> usize {
        self.matrix.nrows()
    }
}

pub fn make_projection(
    source_dim: usize,
    target_dim: usize,
    seed: u64,
) -> Result<ProjectionSketch> {
    if target_dim == 0 || target_dim > source_dim {
        return Err(Error::InvalidArgument(format!(
            "projection needs 1 <= target_dim <= source_dim, got {target_dim} > {source_dim}"
        )));
    }
    let normal = Normal::new(0.0, 1.0 / (target_dim as f64).sqrt()).expect("positive std");
    let mut rng = rng::seeded(seed);
    // Column-major fill order is part of the reproducibility contract.
    let matrix = DMatrix::from_fn(target_dim, source_dim, |_, _| normal.sample(&mut rng));
    Ok(ProjectionSketch { matrix, seed })
}

/// Replaces every predictor row `x` by `P x`; responses are unchanged.
pub fn apply_projection(dataset: &Dataset, sketch: &ProjectionSketch) -> Result<Dataset> {
    if dataset.dim() != sketch.source_dim() {
        return Err(Error::InvalidArgument(format!(
            "dataset dim {} does not match sketch source dim {}",
            dataset.dim(),
            sketch.source_dim()
        )));
    }
    let pt = sketch.matrix.transpose();
    let experiments = dataset
        .experiments()
        .iter()
        .map(|e| Experiment::new(e.id(), e.predictors() * &pt, e.responses().clone()))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(experiments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn deterministic_in_seed() {
        assert_eq!(
            make_projection(30, 5, 11).unwrap(),
            make_projection(30, 5, 11).unwrap()
        );
        assert_ne!(
            make_projection(30, 5, 11).unwrap(),
            make_projection(30, 5, 12).unwrap()
        );
    }

    #[test]
    fn rejects_expanding_projection() {
        assert!(make_projection(3, 4, 0).is_err());
        assert!(make_projection(3, 0, 0).is_err());
    }

    #[test]
    fn shapes_and_zero_preservation() {
        let e = Experiment::from_rows("q", &[vec![0.0; 8], vec![1.0; 8]], &[1.0, 2.0]).unwrap();
        let ds = Dataset::new(vec![e]).unwrap();
        let sketch = make_projection(8, 3, 5).unwrap();
        let out = apply_projection(&ds, &sketch).unwrap();
        assert_eq!(out.dim(), 3);
        assert_eq!(out.experiment(0).responses(), ds.experiment(0).responses());
        assert!(out
            .experiment(0)
            .predictors()
            .row(0)
            .iter()
            .all(|&v| v == 0.0));
        let expected = sketch.matrix() * DVector::from_element(8, 1.0);
        for j in 0..3 {
            assert!((out.experiment(0).predictors()[(1, j)] - expected[j]).abs() < 1e-12);
        }

        let wrong = make_projection(9, 3, 5).unwrap();
        assert!(apply_projection(&ds, &wrong).is_err());
    }
}
