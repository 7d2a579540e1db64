//! Mixture-of-regressions EM over experiments.
//!
//! Each experiment draws one of `K` regression vectors with probability `p_k`;
//! all trials share the noise variance `σ²`. Responsibilities are computed in
//! log space because products of `N_m` Gaussian densities underflow.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{individual_fits, seed_indices, EstimateSet, DEFAULT_EM_TOL, DEFAULT_MAX_ITER};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::lsq;
use crate::rng;

/// Lower bound on the fitted noise variance.
pub const NOISE_VARIANCE_FLOOR: f64 = 1e-12;
/// Components whose total responsibility is below this keep their vector.
pub const MIN_COMPONENT_MASS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct MixtureBank {
    pub vectors: Vec<DVector<f64>>,
    pub probabilities: Vec<f64>,
    pub noise_variance: f64,
}

impl MixtureBank {
    pub fn new(
        vectors: Vec<DVector<f64>>,
        probabilities: Vec<f64>,
        noise_variance: f64,
    ) -> Result<Self> {
        let bank = MixtureBank {
            vectors,
            probabilities,
            noise_variance,
        };
        bank.validate()?;
        Ok(bank)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    fn validate(&self) -> Result<()> {
        if self.vectors.is_empty() || self.vectors.len() != self.probabilities.len() {
            return Err(Error::InvalidArgument(
                "mixture bank needs one probability per vector and at least one vector".into(),
            ));
        }
        let d = self.vectors[0].len();
        if self
            .vectors
            .iter()
            .any(|v| v.len() != d || !v.iter().all(|x| x.is_finite()))
        {
            return Err(Error::InvalidArgument(
                "mixture vectors must be finite and equally sized".into(),
            ));
        }
        if self
            .probabilities
            .iter()
            .any(|&p| !(0.0..=1.0).contains(&p))
        {
            return Err(Error::InvalidArgument(
                "mixing probabilities must lie in [0, 1]".into(),
            ));
        }
        let total: f64 = self.probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "mixing probabilities sum to {total}, not 1"
            )));
        }
        if !(self.noise_variance > 0.0) || !self.noise_variance.is_finite() {
            return Err(Error::InvalidArgument(
                "noise variance must be positive".into(),
            ));
        }
        Ok(())
    }

    fn check_against(&self, train: &Dataset) -> Result<()> {
        self.validate()?;
        if self.vectors[0].len() != train.dim() {
            return Err(Error::Dimension(format!(
                "bank vectors have dim {}, dataset has dim {}",
                self.vectors[0].len(),
                train.dim()
            )));
        }
        Ok(())
    }
}

/// Posterior component memberships, `M × K`, rows on the probability simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct Responsibilities {
    pub matrix: DMatrix<f64>,
}

impl Responsibilities {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        for (m, row) in matrix.row_iter().enumerate() {
            if row.iter().any(|&g| !(0.0..=1.0).contains(&g)) {
                return Err(Error::InvalidArgument(format!(
                    "responsibility row {m} leaves [0, 1]"
                )));
            }
            if (row.sum() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "responsibility row {m} does not sum to 1"
                )));
            }
        }
        Ok(Responsibilities { matrix })
    }

    /// Most responsible component per experiment; ties go to the lowest index.
    pub fn argmax(&self) -> Vec<usize> {
        self.matrix
            .row_iter()
            .map(|row| {
                let mut best = 0;
                for k in 1..row.len() {
                    if row[k] > row[best] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }
}

/// Convergence diagnostics; `log_likelihood[0]` is the initial bank's value.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EmTrace {
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// How the final per-experiment estimate is read off the bank.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EmEstimate {
    /// The vector of the most responsible component.
    #[default]
    Map,
    /// The responsibility-weighted average of all bank vectors.
    Mixture,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmConfig {
    pub k: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
    pub estimate: EmEstimate,
}

impl EmConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        EmConfig {
            k,
            seed,
            tol: DEFAULT_EM_TOL,
            max_iter: DEFAULT_MAX_ITER,
            estimate: EmEstimate::Map,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EmFit {
    pub estimates: EstimateSet,
    pub bank: MixtureBank,
    pub responsibilities: Responsibilities,
    pub trace: EmTrace,
}

/// `sse[(m, k)] = ‖y_m − X_m g_k‖²`.
fn component_sse(vectors: &[DVector<f64>], train: &Dataset) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = train
        .experiments()
        .par_iter()
        .map(|e| {
            vectors
                .iter()
                .map(|g| (e.responses() - e.predictors() * g).norm_squared())
                .collect()
        })
        .collect();
    DMatrix::from_fn(train.len(), vectors.len(), |m, k| rows[m][k])
}

/// Unnormalized log posterior weights and their per-row log-sum-exp.
fn log_weights(bank: &MixtureBank, train: &Dataset) -> (DMatrix<f64>, Vec<f64>) {
    let sse = component_sse(&bank.vectors, train);
    let var = bank.noise_variance;
    let log_norm = (2.0 * std::f64::consts::PI * var).ln();
    let mut w = DMatrix::zeros(train.len(), bank.len());
    let mut lse = Vec::with_capacity(train.len());
    for (m, e) in train.experiments().iter().enumerate() {
        let n = e.len() as f64;
        for k in 0..bank.len() {
            let p = bank.probabilities[k];
            w[(m, k)] = if p > 0.0 {
                p.ln() - 0.5 * n * log_norm - sse[(m, k)] / (2.0 * var)
            } else {
                f64::NEG_INFINITY
            };
        }
        let max = w.row(m).max();
        let s: f64 = w.row(m).iter().map(|&v| (v - max).exp()).sum();
        lse.push(max + s.ln());
    }
    (w, lse)
}

/// E step: `γ_mk ∝ p_k Π_n N(y_mn | g_kᵀx_mn, σ²)`.
pub fn em_e_step(bank: &MixtureBank, train: &Dataset) -> Result<Responsibilities> {
    bank.check_against(train)?;
    let (mut w, lse) = log_weights(bank, train);
    for m in 0..w.nrows() {
        for k in 0..w.ncols() {
            w[(m, k)] = (w[(m, k)] - lse[m]).exp();
        }
        // Renormalize so rounding never pushes a row off the simplex.
        let s = w.row(m).sum();
        w.row_mut(m).unscale_mut(s);
    }
    Ok(Responsibilities { matrix: w })
}

/// `Σ_m log Σ_k p_k Π_n N(y_mn | g_kᵀx_mn, σ²)`.
pub fn em_log_likelihood(bank: &MixtureBank, train: &Dataset) -> Result<f64> {
    bank.check_against(train)?;
    Ok(log_weights(bank, train).1.iter().sum())
}

/// M step: weighted least squares per component, then `σ²` and `p_k` in closed form.
///
/// Components with total responsibility below [`MIN_COMPONENT_MASS`] keep
/// their vector from `previous`.
pub fn em_m_step(
    resp: &Responsibilities,
    train: &Dataset,
    previous: &MixtureBank,
) -> Result<MixtureBank> {
    let (x, y) = train.stacked();
    m_step_stacked(resp, train, previous, &x, &y)
}

fn m_step_stacked(
    resp: &Responsibilities,
    train: &Dataset,
    previous: &MixtureBank,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<MixtureBank> {
    let g = &resp.matrix;
    if g.nrows() != train.len() || g.ncols() != previous.len() {
        return Err(Error::Dimension(format!(
            "responsibilities are {}x{}, expected {}x{}",
            g.nrows(),
            g.ncols(),
            train.len(),
            previous.len()
        )));
    }
    previous.check_against(train)?;
    let k_count = g.ncols();
    let offsets = train.offsets();

    let mut vectors = Vec::with_capacity(k_count);
    for k in 0..k_count {
        let mass: f64 = g.column(k).sum();
        if mass < MIN_COMPONENT_MASS {
            vectors.push(previous.vectors[k].clone());
            continue;
        }
        let mut weights = vec![0.0; y.len()];
        for (m, e) in train.experiments().iter().enumerate() {
            weights[offsets[m]..offsets[m] + e.len()].fill(g[(m, k)]);
        }
        let fit = lsq::solve_weighted_least_squares(x, y, &weights)?;
        vectors.push(fit.coefficients);
    }

    let sse = component_sse(&vectors, train);
    let mut num = 0.0;
    let mut den = 0.0;
    for (m, e) in train.experiments().iter().enumerate() {
        for k in 0..k_count {
            num += g[(m, k)] * sse[(m, k)];
            den += g[(m, k)] * e.len() as f64;
        }
    }
    let noise_variance = (num / den).max(NOISE_VARIANCE_FLOOR);

    let total: f64 = g.sum();
    let probabilities = (0..k_count).map(|k| g.column(k).sum() / total).collect();
    MixtureBank::new(vectors, probabilities, noise_variance)
}

fn initial_bank(train: &Dataset, k: usize, seed: u64) -> Result<MixtureBank> {
    let fits = individual_fits(train)?;
    let sse: f64 = fits.iter().map(|f| f.residual_sse).sum();
    let ir = EstimateSet::from_columns(train, fits.into_iter().map(|f| f.coefficients).collect())?;
    let picks = seed_indices(&ir, k, &mut rng::seeded(seed));
    let vectors = picks.iter().map(|&m| ir.column(m)).collect();
    let variance = (sse / train.total_trials() as f64).max(NOISE_VARIANCE_FLOOR);
    MixtureBank::new(vectors, vec![1.0 / k as f64; k], variance)
}

pub fn fit_em(train: &Dataset, config: &EmConfig) -> Result<EmFit> {
    if config.k == 0 || config.k > train.len() {
        return Err(Error::InvalidArgument(format!(
            "EM needs 1 <= K <= M = {}, got K = {}",
            train.len(),
            config.k
        )));
    }
    if !(config.tol > 0.0) || config.max_iter == 0 {
        return Err(Error::InvalidArgument(
            "EM needs tol > 0 and max_iter >= 1".into(),
        ));
    }
    let (x, y) = train.stacked();
    let mut bank = initial_bank(train, config.k, config.seed)?;
    let mut trace = EmTrace {
        log_likelihood: vec![em_log_likelihood(&bank, train)?],
        ..EmTrace::default()
    };
    for _ in 0..config.max_iter {
        let resp = em_e_step(&bank, train)?;
        bank = m_step_stacked(&resp, train, &bank, &x, &y)?;
        let ll = em_log_likelihood(&bank, train)?;
        let prev = *trace.log_likelihood.last().expect("nonempty");
        trace.log_likelihood.push(ll);
        trace.iterations += 1;
        let scale = if prev.abs() > 0.0 { prev.abs() } else { 1.0 };
        if (ll - prev).abs() < config.tol * scale {
            trace.converged = true;
            break;
        }
    }

    let responsibilities = em_e_step(&bank, train)?;
    let columns = match config.estimate {
        EmEstimate::Map => responsibilities
            .argmax()
            .into_iter()
            .map(|k| bank.vectors[k].clone())
            .collect(),
        EmEstimate::Mixture => (0..train.len())
            .map(|m| {
                bank.vectors
                    .iter()
                    .enumerate()
                    .fold(DVector::zeros(train.dim()), |acc, (k, g)| {
                        acc + g * responsibilities.matrix[(m, k)]
                    })
            })
            .collect(),
    };
    Ok(EmFit {
        estimates: EstimateSet::from_columns(train, columns)?,
        bank,
        responsibilities,
        trace,
    })
}
