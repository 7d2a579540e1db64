//! Metrics, method dispatch, sweeps, the spectral neighborhood diagnostic and
//! EM outage estimation.

mod outage;
mod report;
mod spectral;
mod sweep;

pub use outage::{em_outage_rate, em_recovery_errors, matched_max_error, min_cost_assignment};
pub use report::{write_reports, EvalReport, OutputFormat};
pub use spectral::{spectral_cluster_score, spectral_score_of_rows, SpectralScore};
pub use sweep::{noise_sweep, sweep, Metric, NoisePoint, NoiseSweepConfig, SweepResult};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{
    fit_cr, fit_cw, fit_em, fit_ir, fit_km, fit_lor, EmConfig, EmEstimate, EstimateSet, KmConfig,
};
use crate::svt::{self, SvtConfig, SvtTraceRow};

/// Predictions at or above this value are HIGH, below it LOW.
pub const CLASS_THRESHOLD: f64 = 2.5;

/// Default `c` in the SVT residual budget `ε = c·sqrt(IR training SSE)`.
pub const DEFAULT_EPSILON_FACTOR: f64 = 1.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ir,
    Cr,
    Em,
    Km,
    Svt,
    Cw,
    Lor,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Ir,
        Method::Cr,
        Method::Em,
        Method::Km,
        Method::Svt,
        Method::Cw,
        Method::Lor,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ir => "ir",
            Method::Cr => "cr",
            Method::Em => "em",
            Method::Km => "km",
            Method::Svt => "svt",
            Method::Cw => "cw",
            Method::Lor => "lor",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| {
                Error::Usage(format!(
                    "unknown method '{s}' (expected one of ir, cr, em, km, svt, cw, lor)"
                ))
            })
    }
}

/// Parameters for [`fit_method`]; each method reads only the fields it needs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MethodParams {
    /// Number of clusters for EM and KM.
    pub k: Option<usize>,
    /// Neighborhood size for CW and LoR.
    pub t: Option<usize>,
    /// Initialization seed for EM and KM.
    pub seed: u64,
    pub em_estimate: EmEstimate,
    /// SVT residual budget; when absent, `epsilon_factor·sqrt(IR training SSE)`.
    pub epsilon: Option<f64>,
    pub epsilon_factor: Option<f64>,
    pub tau: Option<f64>,
    pub step: Option<f64>,
    pub max_iter: Option<usize>,
}

/// Estimates plus the parameters actually used (defaults resolved).
#[derive(Clone, Debug)]
pub struct MethodFit {
    pub estimates: EstimateSet,
    pub params: BTreeMap<String, Value>,
    /// Per-iteration residual and rank, for SVT only.
    pub svt_trace: Option<Vec<SvtTraceRow>>,
}

fn require<T: Copy>(value: Option<T>, flag: &str, method: Method) -> Result<T> {
    value.ok_or_else(|| Error::Usage(format!("method '{method}' requires --{flag}")))
}

/// Resolves the SVT configuration, filling in data-driven defaults.
pub fn svt_config(train: &Dataset, params: &MethodParams) -> Result<SvtConfig> {
    let epsilon = match params.epsilon {
        Some(e) => e,
        None => {
            let sse: f64 = crate::estimators::individual_fits(train)?
                .iter()
                .map(|f| f.residual_sse)
                .sum();
            params.epsilon_factor.unwrap_or(DEFAULT_EPSILON_FACTOR) * sse.sqrt()
        }
    };
    let mut config = SvtConfig::with_defaults(train, epsilon)?;
    if let Some(tau) = params.tau {
        config.tau = tau;
    }
    if let Some(step) = params.step {
        config.step = step;
    }
    if let Some(max_iter) = params.max_iter {
        config.max_iter = max_iter;
    }
    config.validate()?;
    Ok(config)
}

/// Fits `method` on `train`.
pub fn fit_method(method: Method, train: &Dataset, params: &MethodParams) -> Result<MethodFit> {
    let mut used = BTreeMap::new();
    let mut svt_trace = None;
    let estimates = match method {
        Method::Ir => fit_ir(train)?,
        Method::Cr => fit_cr(train)?,
        Method::Em => {
            let k = require(params.k, "k", method)?;
            let mut config = EmConfig::new(k, params.seed);
            config.estimate = params.em_estimate;
            if let Some(max_iter) = params.max_iter {
                config.max_iter = max_iter;
            }
            used.insert("k".into(), k.into());
            used.insert("seed".into(), params.seed.into());
            if params.em_estimate == EmEstimate::Mixture {
                used.insert("estimate".into(), "mixture".into());
            }
            fit_em(train, &config)?.estimates
        }
        Method::Km => {
            let k = require(params.k, "k", method)?;
            let mut config = KmConfig::new(k, params.seed);
            if let Some(max_iter) = params.max_iter {
                config.max_iter = max_iter;
            }
            used.insert("k".into(), k.into());
            used.insert("seed".into(), params.seed.into());
            fit_km(train, &config)?.estimates
        }
        Method::Svt => {
            let config = svt_config(train, params)?;
            used.insert("epsilon".into(), config.epsilon.into());
            used.insert("tau".into(), config.tau.into());
            used.insert("step".into(), config.step.into());
            let fit = svt::fit_svt(train, &config)?;
            svt_trace = Some(fit.trace);
            fit.estimates
        }
        Method::Cw => {
            let t = require(params.t, "t", method)?;
            used.insert("t".into(), t.into());
            fit_cw(train, t)?.estimates
        }
        Method::Lor => {
            let t = require(params.t, "t", method)?;
            used.insert("t".into(), t.into());
            fit_lor(train, t)?
        }
    };
    Ok(MethodFit {
        estimates,
        params: used,
        svt_trace,
    })
}

/// Fits on `train`, scores on `test` and records the fit's wall-clock time.
pub fn evaluate(
    method: Method,
    train: &Dataset,
    test: &Dataset,
    params: &MethodParams,
) -> Result<(MethodFit, EvalReport)> {
    let start = Instant::now();
    let fit = fit_method(method, train, params)?;
    let runtime_seconds = start.elapsed().as_secs_f64();
    let report = EvalReport {
        method,
        params: fit.params.clone(),
        mse: test_mse(&fit.estimates, test)?,
        classification_error: classification_error(&fit.estimates, test)?,
        runtime_seconds,
    };
    Ok((fit, report))
}

/// Scores saved estimates against a dataset.
pub fn score(
    method: Method,
    params: BTreeMap<String, Value>,
    estimates: &EstimateSet,
    test: &Dataset,
) -> Result<EvalReport> {
    Ok(EvalReport {
        method,
        params,
        mse: test_mse(estimates, test)?,
        classification_error: classification_error(estimates, test)?,
        runtime_seconds: 0.0,
    })
}

fn predictions(estimates: &EstimateSet, test: &Dataset) -> Result<Vec<(f64, f64)>> {
    estimates.check_aligned(test)?;
    let mut pairs = Vec::with_capacity(test.total_trials());
    for (m, e) in test.experiments().iter().enumerate() {
        let pred = e.predictors() * estimates.column(m);
        pairs.extend(e.responses().iter().copied().zip(pred.iter().copied()));
    }
    Ok(pairs)
}

/// Mean squared prediction residual over all test trials.
pub fn test_mse(estimates: &EstimateSet, test: &Dataset) -> Result<f64> {
    let pairs = predictions(estimates, test)?;
    Ok(pairs.iter().map(|(y, p)| (y - p) * (y - p)).sum::<f64>() / pairs.len() as f64)
}

/// Fraction of test trials whose HIGH/LOW class differs between truth and prediction.
pub fn classification_error(estimates: &EstimateSet, test: &Dataset) -> Result<f64> {
    let pairs = predictions(estimates, test)?;
    let wrong = pairs
        .iter()
        .filter(|(y, p)| (*y >= CLASS_THRESHOLD) != (*p >= CLASS_THRESHOLD))
        .count();
    Ok(wrong as f64 / pairs.len() as f64)
}

/// Median wall-clock seconds of `repetitions` fits.
pub fn benchmark_runtime(
    method: Method,
    train: &Dataset,
    params: &MethodParams,
    repetitions: usize,
) -> Result<f64> {
    if repetitions == 0 {
        return Err(Error::InvalidArgument("repetitions must be >= 1".into()));
    }
    let mut times = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let start = Instant::now();
        fit_method(method, train, params)?;
        times.push(start.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    let mid = repetitions / 2;
    Ok(if repetitions % 2 == 1 {
        times[mid]
    } else {
        0.5 * (times[mid - 1] + times[mid])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Experiment;
    use crate::estimators::testutil::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};

    fn one_experiment(x: &[f64], y: &[f64]) -> Dataset {
        let rows: Vec<Vec<f64>> = x.iter().map(|&v| vec![v]).collect();
        Dataset::new(vec![Experiment::from_rows("q", &rows, y).unwrap()]).unwrap()
    }

    fn weights(ds: &Dataset, h: f64) -> EstimateSet {
        EstimateSet::new(ds.ids(), DMatrix::from_element(1, 1, h)).unwrap()
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert_eq!("LoR".parse::<Method>().unwrap(), Method::Lor);
        assert!(matches!("svd".parse::<Method>(), Err(Error::Usage(_))));
    }

    #[test]
    fn mse_examples() {
        let ds = one_experiment(&[1.0, 2.0, -1.0], &[2.0, 4.0, -2.0]);
        assert_eq!(test_mse(&weights(&ds, 2.0), &ds).unwrap(), 0.0);
        // Predictions y + 0.5 everywhere: x = 1 with h = 2.5 and y = 2.
        let ds = one_experiment(&[1.0, 1.0], &[2.0, 2.0]);
        assert_abs_diff_eq!(
            test_mse(&weights(&ds, 2.5), &ds).unwrap(),
            0.25,
            epsilon = 1e-15
        );
    }

    #[test]
    fn mse_matches_double_loop() {
        let ds = random_dataset(5, 7, 3, 1);
        let est = EstimateSet::new(
            ds.ids(),
            DMatrix::from_fn(3, 5, |i, j| (i as f64) - 0.3 * j as f64),
        )
        .unwrap();
        let mut sum = 0.0;
        let mut count = 0;
        for (m, e) in ds.experiments().iter().enumerate() {
            for n in 0..e.len() {
                let mut pred = 0.0;
                for i in 0..3 {
                    pred += e.predictors()[(n, i)] * est.matrix()[(i, m)];
                }
                sum += (e.responses()[n] - pred).powi(2);
                count += 1;
            }
        }
        assert_abs_diff_eq!(
            test_mse(&est, &ds).unwrap(),
            sum / count as f64,
            epsilon = 1e-12
        );
    }

    #[test]
    fn classification_examples() {
        let ds = one_experiment(&[1.0], &[4.0]);
        assert_eq!(classification_error(&weights(&ds, 3.7), &ds).unwrap(), 0.0);
        let ds = one_experiment(&[1.0], &[3.0]);
        assert_eq!(classification_error(&weights(&ds, 2.4), &ds).unwrap(), 1.0);
        let ds = one_experiment(&[1.0, 1.0, 1.0, 1.0], &[0.0, 1.0, 3.0, 4.0]);
        // Prediction 2.5 is HIGH: two LOW truths misclassified.
        assert_eq!(classification_error(&weights(&ds, 2.5), &ds).unwrap(), 0.5);
    }

    #[test]
    fn misaligned_estimates_are_rejected() {
        let ds = random_dataset(3, 4, 2, 2);
        let est = EstimateSet::new(
            vec!["a".into(), "b".into(), "c".into()],
            DMatrix::zeros(2, 3),
        )
        .unwrap();
        assert!(matches!(test_mse(&est, &ds), Err(Error::Dimension(_))));
        let est = EstimateSet::new(ds.ids(), DMatrix::zeros(3, 3)).unwrap();
        assert!(classification_error(&est, &ds).is_err());
    }

    #[test]
    fn dispatch_requires_parameters() {
        let ds = random_dataset(4, 6, 2, 3);
        for (method, flag) in [
            (Method::Em, "--k"),
            (Method::Km, "--k"),
            (Method::Cw, "--t"),
            (Method::Lor, "--t"),
        ] {
            match fit_method(method, &ds, &MethodParams::default()) {
                Err(Error::Usage(msg)) => assert!(msg.contains(flag), "{msg}"),
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn dispatch_endpoints() {
        let ds = random_dataset(6, 8, 3, 4);
        let ir = fit_method(Method::Ir, &ds, &MethodParams::default())
            .unwrap()
            .estimates;
        let cr = fit_method(Method::Cr, &ds, &MethodParams::default())
            .unwrap()
            .estimates;
        let lor1 = fit_method(
            Method::Lor,
            &ds,
            &MethodParams {
                t: Some(1),
                ..Default::default()
            },
        )
        .unwrap();
        assert!((lor1.estimates.matrix() - ir.matrix()).amax() < 1e-12);
        assert_eq!(lor1.params["t"], Value::from(1));
        let em1 = fit_method(
            Method::Em,
            &ds,
            &MethodParams {
                k: Some(1),
                ..Default::default()
            },
        )
        .unwrap();
        assert!((em1.estimates.matrix() - cr.matrix()).amax() < 1e-10);
        let svt = fit_method(Method::Svt, &ds, &MethodParams::default()).unwrap();
        assert!(svt.params.contains_key("epsilon") && svt.params.contains_key("tau"));
    }

    #[test]
    fn default_svt_budget_scales_ir_error() {
        let ds = random_dataset(5, 8, 2, 5);
        let sse: f64 = crate::estimators::individual_fits(&ds)
            .unwrap()
            .iter()
            .map(|f| f.residual_sse)
            .sum();
        let c = svt_config(&ds, &MethodParams::default()).unwrap();
        assert_abs_diff_eq!(c.epsilon, 1.1 * sse.sqrt(), epsilon = 1e-12);
        let c = svt_config(
            &ds,
            &MethodParams {
                epsilon: Some(0.5),
                tau: Some(3.0),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!((c.epsilon, c.tau), (0.5, 3.0));
        assert!(svt_config(
            &ds,
            &MethodParams {
                step: Some(-1.0),
                ..Default::default()
            }
        )
        .is_err());
    }

    #[test]
    fn evaluate_scores_on_test_data() {
        let truth: Vec<DVector<f64>> = (0..4).map(|_| DVector::from_vec(vec![1.0, -1.0])).collect();
        let train = dataset_from(&truth, 6, 0.0, 6);
        let test = dataset_from(&truth, 3, 0.0, 7);
        let (fit, report) = evaluate(Method::Cr, &train, &test, &MethodParams::default()).unwrap();
        let est = fit.estimates;
        assert!(report.mse < 1e-20);
        assert_eq!(report.classification_error, 0.0);
        assert!(report.runtime_seconds >= 0.0);
        let again = score(Method::Cr, report.params.clone(), &est, &test).unwrap();
        assert_eq!(again.mse, report.mse);
    }

    #[test]
    fn benchmark_median() {
        let ds = random_dataset(4, 6, 2, 8);
        let t = benchmark_runtime(Method::Ir, &ds, &MethodParams::default(), 1).unwrap();
        assert!(t >= 0.0);
        assert!(benchmark_runtime(Method::Ir, &ds, &MethodParams::default(), 0).is_err());
    }
}
