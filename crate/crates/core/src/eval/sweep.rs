use rayon::prelude::*;

use super::{evaluate, test_mse, EvalReport, Method, MethodParams};
use crate::data::{train_test_split, Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::estimators::{fit_cr, fit_ir, fit_lor, EstimateSet};
use crate::synth::{self, GroundTruth, SyntheticSpec};

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub parameter: String,
    pub grid: Vec<f64>,
    pub reports: Vec<EvalReport>,
    /// Grid value with the smallest test MSE; ties go to the smallest value.
    pub best_value: f64,
}

impl SweepResult {
    pub fn best_report(&self) -> &EvalReport {
        let i = self
            .grid
            .iter()
            .position(|&v| v == self.best_value)
            .expect("best value is on the grid");
        &self.reports[i]
    }
}

fn positive_integer(name: &str, v: f64) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 && v.is_finite() {
        Ok(v as usize)
    } else {
        Err(Error::Usage(format!(
            "--{name} grid values must be positive integers, got {v}"
        )))
    }
}

fn with_parameter(base: &MethodParams, name: &str, v: f64) -> Result<MethodParams> {
    let mut p = base.clone();
    match name {
        "t" => p.t = Some(positive_integer(name, v)?),
        "k" => p.k = Some(positive_integer(name, v)?),
        "epsilon" => p.epsilon = Some(v),
        "epsilon_factor" => p.epsilon_factor = Some(v),
        "tau" => p.tau = Some(v),
        "step" => p.step = Some(v),
        _ => {
            return Err(Error::Usage(format!(
                "cannot sweep '{name}' (expected t, k, epsilon, epsilon_factor, tau or step)"
            )))
        }
    }
    Ok(p)
}

/// Fits and scores `method` at every grid value of `parameter`.
///
/// Points run one after another so the recorded runtimes are not disturbed
/// by sibling fits.
pub fn sweep(
    method: Method,
    parameter: &str,
    grid: &[f64],
    train: &Dataset,
    test: &Dataset,
    base: &MethodParams,
) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::Usage("sweep grid is empty".into()));
    }
    let mut reports = Vec::with_capacity(grid.len());
    for &v in grid {
        let params = with_parameter(base, parameter, v)?;
        reports.push(evaluate(method, train, test, &params)?.1);
    }
    let mut best = 0;
    for i in 1..grid.len() {
        let (a, b) = (reports[i].mse, reports[best].mse);
        if a < b || (a == b && grid[i] < grid[best]) {
            best = i;
        }
    }
    Ok(SweepResult {
        parameter: parameter.to_owned(),
        grid: grid.to_vec(),
        best_value: grid[best],
        reports,
    })
}

/// Error measure for [`noise_sweep`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    /// `(1/M) Σ ‖ĥ_m − h_m‖²`, fitting on all trials.
    Parameter,
    /// Mean squared prediction error on held-out trials.
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSweepConfig {
    /// Model shape; `noise_std` and `seed` are overridden per point.
    pub spec: SyntheticSpec,
    pub sigmas: Vec<f64>,
    pub t_grid: Vec<usize>,
    pub seeds: Vec<u64>,
    pub metric: Metric,
    /// Per-trial training share under [`Metric::Test`].
    pub train_fraction: f64,
}

/// One noise level of the MSE-vs-noise curves, averaged over seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisePoint {
    pub sigma: f64,
    pub snr_db: f64,
    pub ir: f64,
    pub cr: f64,
    /// LoR at the T with the smallest averaged error.
    pub lor_best: f64,
    pub best_t: usize,
    /// `σ²d/(TN)` at `T = M/K₀` (plus `σ²` under [`Metric::Test`]).
    pub asymptote: f64,
    /// Averaged LoR error at every `t_grid` value.
    pub lor_curve: Vec<f64>,
}

struct Scorer<'a> {
    metric: Metric,
    truth: &'a GroundTruth,
    test: Option<&'a Dataset>,
}

impl Scorer<'_> {
    fn score(&self, estimates: &EstimateSet) -> Result<f64> {
        match self.metric {
            Metric::Parameter => synth::parameter_mse(estimates, self.truth),
            Metric::Test => test_mse(estimates, self.test.expect("test split present")),
        }
    }
}

/// Per-seed errors: (ir, cr, lor curve).
fn noise_point_for_seed(
    config: &NoiseSweepConfig,
    sigma: f64,
    seed: u64,
) -> Result<(f64, f64, Vec<f64>)> {
    let spec = SyntheticSpec {
        noise_std: sigma,
        seed,
        ..config.spec.clone()
    };
    let (data, truth) = synth::generate(&spec)?;
    let (train, test) = match config.metric {
        Metric::Parameter => (data, None),
        Metric::Test => {
            let (train, test) =
                train_test_split(&data, &SplitSpec::new(config.train_fraction, seed)?)?;
            (train, Some(test))
        }
    };
    let scorer = Scorer {
        metric: config.metric,
        truth: &truth,
        test: test.as_ref(),
    };
    let ir = scorer.score(&fit_ir(&train)?)?;
    let cr = scorer.score(&fit_cr(&train)?)?;
    let curve = config
        .t_grid
        .iter()
        .map(|&t| scorer.score(&fit_lor(&train, t)?))
        .collect::<Result<Vec<_>>>()?;
    Ok((ir, cr, curve))
}

/// IR, CR and LoR errors across noise levels on the Gaussian cluster model.
pub fn noise_sweep(config: &NoiseSweepConfig) -> Result<Vec<NoisePoint>> {
    if config.sigmas.is_empty() || config.t_grid.is_empty() || config.seeds.is_empty() {
        return Err(Error::Usage(
            "noise sweep needs non-empty sigma, T and seed grids".into(),
        ));
    }
    let m = config.spec.num_experiments;
    if let Some(&t) = config.t_grid.iter().find(|&&t| t == 0 || t > m) {
        return Err(Error::InvalidArgument(format!("T = {t} outside [1, {m}]")));
    }
    let n_fit = match config.metric {
        Metric::Parameter => config.spec.trials_per_experiment,
        Metric::Test => {
            SplitSpec::new(config.train_fraction, 0)?.train_count(config.spec.trials_per_experiment)
        }
    };
    let t0 = (m / config.spec.num_clusters).max(1);
    let mut points = Vec::with_capacity(config.sigmas.len());
    for &sigma in &config.sigmas {
        let per_seed = config
            .seeds
            .par_iter()
            .map(|&seed| noise_point_for_seed(config, sigma, seed))
            .collect::<Result<Vec<_>>>()?;
        let count = per_seed.len() as f64;
        let ir = per_seed.iter().map(|p| p.0).sum::<f64>() / count;
        let cr = per_seed.iter().map(|p| p.1).sum::<f64>() / count;
        let lor_curve: Vec<f64> = (0..config.t_grid.len())
            .map(|i| per_seed.iter().map(|p| p.2[i]).sum::<f64>() / count)
            .collect();
        let mut best = 0;
        for i in 1..lor_curve.len() {
            if lor_curve[i] < lor_curve[best]
                || (lor_curve[i] == lor_curve[best] && config.t_grid[i] < config.t_grid[best])
            {
                best = i;
            }
        }
        let mut asymptote = synth::asymptotic_mse(sigma, config.spec.dim, t0, n_fit)?;
        if config.metric == Metric::Test {
            asymptote += sigma * sigma;
        }
        points.push(NoisePoint {
            sigma,
            snr_db: synth::snr_db(sigma),
            ir,
            cr,
            lor_best: lor_curve[best],
            best_t: config.t_grid[best],
            asymptote,
            lor_curve,
        });
    }
    Ok(points)
}
