//! Second-eigenvalue diagnostic of a neighborhood's predictor rows.
//!
//! Rows of `A` are unit-normalized, `S_ij = |cos(a_i, a_j)|`, and `P = D⁻¹S`
//! with `D` the row sums. `P` is similar to the symmetric `D^{-1/2} S D^{-1/2}`,
//! whose eigenvalues are computed instead. A value near 1 means the rows split
//! into weakly coupled groups.

use nalgebra::DMatrix;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{fit_ir, neighbor_lists};

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralScore {
    /// Second-largest eigenvalue modulus of the row-stochastic similarity.
    pub value: f64,
    /// Rows of `A` left out because they are zero.
    pub excluded_rows: Vec<usize>,
}

/// Score of the rows of `a` (one observation per row).
pub fn spectral_score_of_rows(a: &DMatrix<f64>) -> Result<SpectralScore> {
    let mut excluded_rows = Vec::new();
    let mut kept = Vec::new();
    for (i, row) in a.row_iter().enumerate() {
        let norm = row.norm();
        if norm > 0.0 && norm.is_finite() {
            kept.push(row / norm);
        } else {
            excluded_rows.push(i);
        }
    }
    if kept.is_empty() {
        return Err(Error::InvalidArgument(
            "every row of the neighborhood matrix is zero".into(),
        ));
    }
    let unit = DMatrix::from_rows(&kept);
    let s = (&unit * unit.transpose()).abs();
    let inv_sqrt: Vec<f64> = s.row_iter().map(|r| 1.0 / r.sum().sqrt()).collect();
    let sym = DMatrix::from_fn(s.nrows(), s.ncols(), |i, j| {
        inv_sqrt[i] * s[(i, j)] * inv_sqrt[j]
    });
    let mut moduli: Vec<f64> = sym
        .symmetric_eigenvalues()
        .iter()
        .map(|v| v.abs())
        .collect();
    moduli.sort_by(|a, b| b.total_cmp(a));
    let value = moduli.get(1).copied().unwrap_or(0.0).clamp(0.0, 1.0);
    Ok(SpectralScore {
        value,
        excluded_rows,
    })
}

/// Score of the predictor rows pooled over `experiment_id`'s `t` nearest
/// experiments (by IR-estimate distance, the experiment itself included).
pub fn spectral_cluster_score(
    train: &Dataset,
    experiment_id: &str,
    t: usize,
) -> Result<SpectralScore> {
    if t < 2 {
        return Err(Error::InvalidArgument(format!(
            "spectral score needs T >= 2, got {t}"
        )));
    }
    let m = train
        .position(experiment_id)
        .ok_or_else(|| Error::InvalidArgument(format!("no experiment '{experiment_id}'")))?;
    let ir = fit_ir(train)?;
    let lists = neighbor_lists(&ir, t)?;
    let (a, _) = train.stack(lists.of(m));
    spectral_score_of_rows(&a)
}
