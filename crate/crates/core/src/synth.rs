//! Gaussian cluster simulator.
//!
//! `K₀` unit vectors are drawn uniformly on the sphere, each experiment picks
//! one uniformly at random, predictors are i.i.d. standard normal and
//! responses carry additive `N(0, σ²)` noise.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Experiment};
use crate::error::{Error, Result};
use crate::estimators::EstimateSet;
use crate::rng::{self, CrucRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub num_experiments: usize,
    pub trials_per_experiment: usize,
    pub dim: usize,
    pub num_clusters: usize,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    /// `M = 100, N = 70, K₀ = 5, d = 6`.
    fn default() -> Self {
        SyntheticSpec {
            num_experiments: 100,
            trials_per_experiment: 70,
            dim: 6,
            num_clusters: 5,
            noise_std: 0.1,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_experiments == 0 || self.trials_per_experiment == 0 || self.dim == 0 {
            return Err(Error::InvalidArgument("M, N and d must all be >= 1".into()));
        }
        if self.num_clusters == 0 || self.num_clusters > self.num_experiments {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= K0 <= M, got K0 = {} with M = {}",
                self.num_clusters, self.num_experiments
            )));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "noise_std must be >= 0, got {}",
                self.noise_std
            )));
        }
        Ok(())
    }

    /// `10·log10(1/σ²)`: signal power is 1 for unit `h` and white `x`.
    pub fn snr_db(&self) -> f64 {
        snr_db(self.noise_std)
    }
}

pub fn snr_db(sigma: f64) -> f64 {
    10.0 * (1.0 / (sigma * sigma)).log10()
}

/// Experiment ids used by [`generate`]: `"1"`, `"2"`, ….
pub fn experiment_id(m: usize) -> String {
    (m + 1).to_string()
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub cluster_vectors: Vec<DVector<f64>>,
    /// Cluster index of each experiment, `0..K₀`.
    pub assignments: Vec<usize>,
    pub per_experiment_vectors: EstimateSet,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TruthFile {
    ids: Vec<String>,
    cluster_vectors: Vec<Vec<f64>>,
    assignments: Vec<usize>,
}

impl GroundTruth {
    pub fn new(
        ids: Vec<String>,
        cluster_vectors: Vec<DVector<f64>>,
        assignments: Vec<usize>,
    ) -> Result<Self> {
        let Some(first) = cluster_vectors.first() else {
            return Err(Error::InvalidArgument(
                "ground truth needs at least one cluster".into(),
            ));
        };
        let d = first.len();
        if cluster_vectors.iter().any(|v| v.len() != d) {
            return Err(Error::Dimension("cluster vectors differ in length".into()));
        }
        if ids.len() != assignments.len() {
            return Err(Error::Dimension(format!(
                "{} ids but {} assignments",
                ids.len(),
                assignments.len()
            )));
        }
        if let Some(&a) = assignments.iter().find(|&&a| a >= cluster_vectors.len()) {
            return Err(Error::InvalidArgument(format!(
                "assignment {a} out of range for {} clusters",
                cluster_vectors.len()
            )));
        }
        let per_experiment =
            DMatrix::from_fn(d, ids.len(), |i, m| cluster_vectors[assignments[m]][i]);
        Ok(GroundTruth {
            per_experiment_vectors: EstimateSet::new(ids, per_experiment)?,
            cluster_vectors,
            assignments,
        })
    }

    pub fn num_clusters(&self) -> usize {
        self.cluster_vectors.len()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = TruthFile {
            ids: self.per_experiment_vectors.ids().to_vec(),
            cluster_vectors: self
                .cluster_vectors
                .iter()
                .map(|v| v.as_slice().to_vec())
                .collect(),
            assignments: self.assignments.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: TruthFile = serde_json::from_str(text)?;
        let vectors = file
            .cluster_vectors
            .into_iter()
            .map(DVector::from_vec)
            .collect();
        GroundTruth::new(file.ids, vectors, file.assignments)
            .map_err(|e| Error::Format(e.to_string()))
    }
}

/// Uniform draw from the unit sphere in `R^d` (normalized Gaussian).
pub fn sample_unit_sphere(d: usize, rng: &mut CrucRng) -> Result<DVector<f64>> {
    if d == 0 {
        return Err(Error::InvalidArgument(
            "sphere dimension must be >= 1".into(),
        ));
    }
    loop {
        let v = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 0.0 && norm.is_finite() {
            return Ok(v / norm);
        }
    }
}

/// Draws a dataset and its ground truth.
///
/// Cluster vectors and assignments come from stream 0 of `spec.seed`;
/// experiment `m` draws its predictors and noise from stream `m + 1`, so the
/// predictors and the standardized noise do not depend on `noise_std`.
pub fn generate(spec: &SyntheticSpec) -> Result<(Dataset, GroundTruth)> {
    spec.validate()?;
    let mut rng = rng::substream(spec.seed, 0);
    let clusters = (0..spec.num_clusters)
        .map(|_| sample_unit_sphere(spec.dim, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let assignments: Vec<usize> = (0..spec.num_experiments)
        .map(|_| rng.random_range(0..spec.num_clusters))
        .collect();

    let experiments = (0..spec.num_experiments)
        .into_par_iter()
        .map(|m| {
            let mut rng = rng::substream(spec.seed, m as u64 + 1);
            let n = spec.trials_per_experiment;
            let x = DMatrix::from_fn(n, spec.dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            let noise = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let y = &x * &clusters[assignments[m]] + noise * spec.noise_std;
            Experiment::new(experiment_id(m), x, y)
        })
        .collect::<Result<Vec<_>>>()?;
    let dataset = Dataset::new(experiments)?;
    let truth = GroundTruth::new(dataset.ids(), clusters, assignments)?;
    Ok((dataset, truth))
}

/// High-SNR parameter error of LoR with `T` neighbors of `N` trials: `σ²d/(TN)`.
pub fn asymptotic_mse(sigma: f64, d: usize, t: usize, n: usize) -> Result<f64> {
    if !(sigma >= 0.0) || !sigma.is_finite() || d == 0 || t == 0 || n == 0 {
        return Err(Error::InvalidArgument(
            "asymptotic_mse needs sigma >= 0 and d, T, N >= 1".into(),
        ));
    }
    Ok(sigma * sigma * d as f64 / (t * n) as f64)
}

/// `(1/M) Σ_m ‖ĥ_m − h_m‖²`.
pub fn parameter_mse(estimates: &EstimateSet, truth: &GroundTruth) -> Result<f64> {
    let expected = &truth.per_experiment_vectors;
    if estimates.ids() != expected.ids() || estimates.dim() != expected.dim() {
        return Err(Error::Dimension(format!(
            "estimates ({} x {}) do not match the ground truth ({} x {})",
            estimates.dim(),
            estimates.len(),
            expected.dim(),
            expected.len()
        )));
    }
    Ok((estimates.matrix() - expected.matrix()).norm_squared() / estimates.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::fit_ir;
    use approx::assert_abs_diff_eq;

    fn spec(m: usize, n: usize, d: usize, k: usize, sigma: f64, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            num_experiments: m,
            trials_per_experiment: n,
            dim: d,
            num_clusters: k,
            noise_std: sigma,
            seed,
        }
    }

    #[test]
    fn sphere_draws_have_unit_norm() {
        let mut rng = rng::seeded(1);
        for d in 1..8 {
            for _ in 0..100 {
                let v = sample_unit_sphere(d, &mut rng).unwrap();
                assert_abs_diff_eq!(v.norm(), 1.0, epsilon = 1e-12);
            }
        }
        let v = sample_unit_sphere(1, &mut rng).unwrap();
        assert!(v[0] == 1.0 || v[0] == -1.0);
        assert!(sample_unit_sphere(0, &mut rng).is_err());
    }

    #[test]
    fn sphere_draws_are_centered() {
        let mut rng = rng::seeded(2);
        let mut mean = DVector::zeros(3);
        for _ in 0..100_000 {
            mean += sample_unit_sphere(3, &mut rng).unwrap();
        }
        mean /= 100_000.0;
        assert!(mean.amax() < 0.02, "{mean}");
    }

    #[test]
    fn noiseless_responses_are_exact() {
        let (ds, truth) = generate(&spec(6, 5, 3, 2, 0.0, 3)).unwrap();
        for (m, e) in ds.experiments().iter().enumerate() {
            let h = truth.per_experiment_vectors.column(m);
            assert_eq!(e.responses(), &(e.predictors() * h));
        }
        let ir = fit_ir(&ds).unwrap();
        assert!((ir.matrix() - truth.per_experiment_vectors.matrix()).amax() < 1e-8);
    }

    #[test]
    fn generation_is_deterministic() {
        let s = spec(10, 4, 3, 3, 0.5, 4);
        let (a, ta) = generate(&s).unwrap();
        let (b, tb) = generate(&s).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let (c, _) = generate(&SyntheticSpec { seed: 5, ..s }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn truth_is_well_formed() {
        let (ds, truth) = generate(&spec(50, 3, 4, 5, 0.1, 6)).unwrap();
        assert_eq!(truth.num_clusters(), 5);
        assert!(truth.assignments.iter().all(|&a| a < 5));
        for v in &truth.cluster_vectors {
            assert_abs_diff_eq!(v.norm(), 1.0, epsilon = 1e-12);
        }
        assert_eq!(ds.ids()[0], "1");
        assert_eq!(truth.per_experiment_vectors.ids(), ds.ids().as_slice());
    }

    #[test]
    fn noise_variance_matches_sigma() {
        let sigma = 0.7;
        let (ds, truth) = generate(&spec(10, 10_000, 3, 2, sigma, 7)).unwrap();
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut count = 0.0;
        for (m, e) in ds.experiments().iter().enumerate() {
            let r = e.responses() - e.predictors() * truth.per_experiment_vectors.column(m);
            sum += r.sum();
            sum_sq += r.norm_squared();
            count += r.len() as f64;
        }
        let var = sum_sq / count - (sum / count).powi(2);
        assert!((var / (sigma * sigma) - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn noise_level_only_scales_the_noise() {
        let (a, truth) = generate(&spec(4, 6, 2, 2, 0.0, 8)).unwrap();
        let (b, _) = generate(&spec(4, 6, 2, 2, 1.0, 8)).unwrap();
        let (c, _) = generate(&spec(4, 6, 2, 2, 2.0, 8)).unwrap();
        for m in 0..4 {
            assert_eq!(a.experiment(m).predictors(), b.experiment(m).predictors());
            let nb = b.experiment(m).responses() - a.experiment(m).responses();
            let nc = c.experiment(m).responses() - a.experiment(m).responses();
            assert_abs_diff_eq!(nc, nb * 2.0, epsilon = 1e-12);
        }
        assert_eq!(truth.assignments.len(), 4);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(generate(&spec(0, 1, 1, 1, 0.0, 0)).is_err());
        assert!(generate(&spec(3, 1, 1, 4, 0.0, 0)).is_err());
        assert!(generate(&spec(3, 1, 1, 0, 0.0, 0)).is_err());
        assert!(generate(&spec(3, 1, 1, 1, -0.1, 0)).is_err());
        assert!(generate(&spec(3, 0, 1, 1, 0.0, 0)).is_err());
    }

    #[test]
    fn asymptote_examples() {
        assert_abs_diff_eq!(
            asymptotic_mse(0.1, 6, 20, 70).unwrap(),
            4.2857142857142856e-5,
            epsilon = 1e-18
        );
        assert_eq!(asymptotic_mse(0.0, 6, 20, 70).unwrap(), 0.0);
        let a = asymptotic_mse(0.3, 4, 10, 7).unwrap();
        assert_abs_diff_eq!(
            asymptotic_mse(0.3, 4, 20, 7).unwrap(),
            a / 2.0,
            epsilon = 1e-18
        );
        assert!(asymptotic_mse(0.1, 6, 0, 70).is_err());
    }

    #[test]
    fn parameter_mse_examples() {
        let (ds, truth) = generate(&spec(5, 3, 3, 2, 0.0, 9)).unwrap();
        assert_eq!(
            parameter_mse(&truth.per_experiment_vectors, &truth).unwrap(),
            0.0
        );
        let mut shifted = truth.per_experiment_vectors.matrix().clone();
        shifted[(1, 2)] += 0.3;
        let est = EstimateSet::new(ds.ids(), shifted).unwrap();
        assert_abs_diff_eq!(
            parameter_mse(&est, &truth).unwrap(),
            0.09 / 5.0,
            epsilon = 1e-15
        );

        let ir = fit_ir(&generate(&spec(5, 3, 3, 2, 0.4, 9)).unwrap().0).unwrap();
        let mut oracle = 0.0;
        for m in 0..5 {
            for i in 0..3 {
                let diff = ir.matrix()[(i, m)] - truth.per_experiment_vectors.matrix()[(i, m)];
                oracle += diff * diff;
            }
        }
        assert_abs_diff_eq!(
            parameter_mse(&ir, &truth).unwrap(),
            oracle / 5.0,
            epsilon = 1e-14
        );
        let wrong = EstimateSet::new(ds.ids(), DMatrix::zeros(2, 5)).unwrap();
        assert!(parameter_mse(&wrong, &truth).is_err());
    }

    #[test]
    fn truth_json_round_trip() {
        let (_, truth) = generate(&spec(7, 2, 3, 3, 0.0, 10)).unwrap();
        let back = GroundTruth::from_json(&truth.to_json().unwrap()).unwrap();
        assert_eq!(back, truth);
        assert!(GroundTruth::from_json("{\"ids\": []}").is_err());
    }

    #[test]
    fn snr_examples() {
        assert_abs_diff_eq!(snr_db(1.0), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(snr_db(0.1), 20.0, epsilon = 1e-12);
    }
}
