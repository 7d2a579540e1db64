//! Rank minimization of the regression-vector matrix under a residual
//! constraint, solved by singular value thresholding.
//!
//! The block-diagonal map `𝒜(G) = (X_1 g_1, …, X_M g_M)` turns the per-experiment
//! fits into one affine rank-minimization problem
//!
//! ```text
//! minimize rank(G)  subject to  ‖b − 𝒜(G)‖ ≤ ε
//! ```
//!
//! which is approached with the Uzawa iteration
//!
//! ```text
//! G_k    = D_τ(𝒜*(y_{k-1}))
//! y_k    = y_{k-1} + δ (b − 𝒜(G_k))      while ‖b − 𝒜(G_k)‖ > ε
//! ```
//!
//! Dense SVDs of the `d × M` iterate are taken every iteration, which is fine
//! for `d` up to a few dozen.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::EstimateSet;
use crate::lsq;

/// Singular values below this fraction of the largest do not count towards rank.
pub const RANK_TOLERANCE: f64 = 1e-8;

const DIVERGENCE_FACTOR: f64 = 10.0;
const DIVERGENCE_PATIENCE: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct SvtConfig {
    /// Residual budget: feasible iff `‖b − 𝒜(G)‖ ≤ epsilon`.
    pub epsilon: f64,
    /// Shrinkage threshold applied to singular values.
    pub tau: f64,
    /// Dual step size.
    pub step: f64,
    pub max_iter: usize,
    /// Relative iterate-change tolerance.
    pub tol: f64,
}

impl SvtConfig {
    /// Data-driven defaults for `tau` and `step` with the given residual budget.
    pub fn with_defaults(train: &Dataset, epsilon: f64) -> Result<Self> {
        let config = SvtConfig {
            epsilon,
            tau: default_tau(train),
            step: default_step(train),
            max_iter: 5000,
            tol: 1e-6,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be >= 0, got {}",
                self.epsilon
            )));
        }
        if !positive(self.tau) || !positive(self.step) || !positive(self.tol) || self.max_iter == 0
        {
            return Err(Error::InvalidArgument(
                "SVT needs tau > 0, step > 0, tol > 0 and max_iter >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// `5·sqrt(d·M)·mean|y|`.
pub fn default_tau(train: &Dataset) -> f64 {
    let (_, b) = train.stacked();
    let mean_abs = b.iter().map(|v| v.abs()).sum::<f64>() / b.len() as f64;
    let tau = 5.0 * ((train.dim() * train.len()) as f64).sqrt() * mean_abs;
    if tau > 0.0 {
        tau
    } else {
        1.0
    }
}

/// `1.2 / ‖𝒜‖²`, inside the `(0, 2/‖𝒜‖²)` range where the dual ascent is stable.
pub fn default_step(train: &Dataset) -> f64 {
    let norm_sq = operator_norm_squared(train);
    if norm_sq > 0.0 {
        1.2 / norm_sq
    } else {
        1.0
    }
}

/// Power-iteration estimate of `‖𝒜‖²`, the largest eigenvalue of `𝒜*𝒜`.
pub fn operator_norm_squared(train: &Dataset) -> f64 {
    let mut v = DMatrix::from_element(train.dim(), train.len(), 1.0);
    let mut estimate = 0.0;
    for _ in 0..200 {
        let norm = v.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v /= norm;
        let av = forward(&v, train);
        let next = av.norm_squared();
        v = adjoint(&av, train);
        if (next - estimate).abs() <= 1e-10 * next {
            return next;
        }
        estimate = next;
    }
    estimate
}

fn forward(g: &DMatrix<f64>, train: &Dataset) -> DVector<f64> {
    let mut out = DVector::zeros(train.total_trials());
    let mut at = 0;
    for (m, e) in train.experiments().iter().enumerate() {
        let n = e.len();
        out.rows_mut(at, n)
            .copy_from(&(e.predictors() * g.column(m)));
        at += n;
    }
    out
}

fn adjoint(r: &DVector<f64>, train: &Dataset) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(train.dim(), train.len());
    let mut at = 0;
    for (m, e) in train.experiments().iter().enumerate() {
        let n = e.len();
        out.column_mut(m)
            .copy_from(&(e.predictors().tr_mul(&r.rows(at, n))));
        at += n;
    }
    out
}

/// `𝒜(G)`: the stacked predictions `X_m g_m`, experiment by experiment.
pub fn apply_forward(g: &DMatrix<f64>, train: &Dataset) -> Result<DVector<f64>> {
    if g.shape() != (train.dim(), train.len()) {
        return Err(Error::Dimension(format!(
            "iterate is {}x{}, expected {}x{}",
            g.nrows(),
            g.ncols(),
            train.dim(),
            train.len()
        )));
    }
    Ok(forward(g, train))
}

/// `𝒜*(r)`: column `m` is `X_mᵀ r_m`.
pub fn apply_adjoint(r: &DVector<f64>, train: &Dataset) -> Result<DMatrix<f64>> {
    if r.len() != train.total_trials() {
        return Err(Error::Dimension(format!(
            "dual vector has length {}, expected {}",
            r.len(),
            train.total_trials()
        )));
    }
    Ok(adjoint(r, train))
}

/// Shrinks singular values and returns the result with its numerical rank.
fn shrink_with_rank(m: &DMatrix<f64>, tau: f64) -> Result<(DMatrix<f64>, usize)> {
    let mut svd = lsq::checked_svd(m)?;
    svd.singular_values.apply(|s| *s = (*s - tau).max(0.0));
    let s_max = svd.singular_values.max();
    let rank = if s_max > 0.0 {
        svd.singular_values
            .iter()
            .filter(|&&s| s > RANK_TOLERANCE * s_max)
            .count()
    } else {
        0
    };
    let out = svd.recompose().expect("U and Vᵀ were computed");
    Ok((out, rank))
}

/// Singular value shrinkage `D_τ`: `σ_i ↦ max(σ_i − τ, 0)`, singular vectors kept.
pub fn shrink(m: &DMatrix<f64>, tau: f64) -> Result<DMatrix<f64>> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "tau must be >= 0, got {tau}"
        )));
    }
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite matrix".into()));
    }
    if m.is_empty() {
        return Ok(m.clone());
    }
    Ok(shrink_with_rank(m, tau)?.0)
}

/// Number of singular values above [`RANK_TOLERANCE`] times the largest.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let s = m.clone().singular_values();
    let s_max = s.max();
    if s_max <= 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > RANK_TOLERANCE * s_max).count()
}

/// Sum of squared residuals `Σ_m Σ_n (y_mn − g_mᵀx_mn)²`.
pub fn squared_error(g: &DMatrix<f64>, train: &Dataset) -> Result<f64> {
    let (_, b) = train.stacked();
    Ok((b - apply_forward(g, train)?).norm_squared())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvtState {
    /// `d × M` iterate `G`.
    pub iterate: DMatrix<f64>,
    /// Dual vector of length `Σ N_m`.
    pub dual: DVector<f64>,
    pub residual_norm: f64,
    pub rank_estimate: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SvtTraceRow {
    pub iteration: usize,
    pub residual_norm: f64,
    pub rank: usize,
}

#[derive(Clone, Debug)]
pub struct SvtFit {
    pub estimates: EstimateSet,
    pub state: SvtState,
    pub trace: Vec<SvtTraceRow>,
    /// The constraint holds and the iterate stopped moving.
    pub converged: bool,
}

pub fn fit_svt(train: &Dataset, config: &SvtConfig) -> Result<SvtFit> {
    config.validate()?;
    let (_, b) = train.stacked();
    let initial_residual = b.norm();
    let mut dual = DVector::zeros(b.len());
    let mut previous = DMatrix::zeros(train.dim(), train.len());
    let mut trace = Vec::new();
    let mut growing = 0;
    let mut converged = false;
    let mut state = None;

    for iteration in 0..config.max_iter {
        let (g, rank) = shrink_with_rank(&adjoint(&dual, train), config.tau)?;
        let residual = &b - forward(&g, train);
        let residual_norm = residual.norm();
        trace.push(SvtTraceRow {
            iteration,
            residual_norm,
            rank,
        });

        let change = (&g - &previous).norm();
        let feasible = residual_norm <= config.epsilon;
        if feasible && change <= config.tol * g.norm().max(1.0) {
            converged = true;
        } else if !feasible {
            dual.axpy(config.step, &residual, 1.0);
        }

        if residual_norm > DIVERGENCE_FACTOR * initial_residual {
            growing += 1;
            if growing >= DIVERGENCE_PATIENCE {
                return Err(Error::Divergence {
                    iteration,
                    residual: residual_norm,
                });
            }
        } else {
            growing = 0;
        }

        state = Some(SvtState {
            iterate: g.clone(),
            dual: dual.clone(),
            residual_norm,
            rank_estimate: rank,
        });
        if converged {
            break;
        }
        previous = g;
    }

    let state = state.expect("max_iter >= 1");
    let estimates = EstimateSet::new(train.ids(), state.iterate.clone())?;
    Ok(SvtFit {
        estimates,
        state,
        trace,
        converged,
    })
}

/// Streams the trace as `iteration,residual_norm,rank` CSV.
pub fn write_trace_csv(trace: &[SvtTraceRow], w: &mut impl Write) -> Result<()> {
    writeln!(w, "iteration,residual_norm,rank")?;
    for row in trace {
        writeln!(w, "{},{},{}", row.iteration, row.residual_norm, row.rank)?;
    }
    Ok(())
}
