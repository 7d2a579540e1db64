#![allow(dead_code)]

use cruc_core::data::{Dataset, Experiment};
use cruc_core::rng;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut rng::CrucRng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector(len: usize, rng: &mut rng::CrucRng) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

/// `m` experiments with Gaussian predictors, random regression vectors and
/// noise of standard deviation `sigma`.
pub fn random_dataset(m: usize, n: usize, d: usize, sigma: f64, seed: u64) -> Dataset {
    let mut rng = rng::seeded(seed);
    let experiments = (0..m)
        .map(|i| {
            let x = gaussian_matrix(n, d, &mut rng);
            let h = gaussian_vector(d, &mut rng);
            let y = &x * h + gaussian_vector(n, &mut rng) * sigma;
            Experiment::new(format!("q{i}"), x, y).unwrap()
        })
        .collect();
    Dataset::new(experiments).unwrap()
}

/// Largest absolute entry difference.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}
