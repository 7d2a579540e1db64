//! Dense estimators: individual (IR), collective (CR), mixture EM, clusterwise
//! K-means (KM), local Curds and Whey (CW) and local regression (LoR).
//!
//! Every estimator returns an [`EstimateSet`] aligned with the training
//! dataset's experiment order.

mod em;
mod estimate_set;
mod init;
mod km;
mod local;

pub use em::{
    em_e_step, em_log_likelihood, em_m_step, fit_em, EmConfig, EmEstimate, EmFit, EmTrace,
    MixtureBank, Responsibilities, MIN_COMPONENT_MASS, NOISE_VARIANCE_FLOOR,
};
pub use estimate_set::EstimateSet;
pub use init::seed_indices;
pub use km::{fit_km, km_assign, km_refit, KmConfig, KmFit, KmTrace};
pub use local::{fit_cw, fit_lor, neighbor_lists, CwFit, CwLocalModel, NeighborList};

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::Result;
use crate::lsq::{self, LinearFit};

/// Default iteration cap for EM and KM.
pub const DEFAULT_MAX_ITER: usize = 200;
/// Default relative log-likelihood tolerance for EM.
pub const DEFAULT_EM_TOL: f64 = 1e-6;

/// Individual least-squares fits, one per experiment.
pub fn individual_fits(train: &Dataset) -> Result<Vec<LinearFit>> {
    train
        .experiments()
        .par_iter()
        .map(|e| {
            lsq::solve_least_squares(e.predictors(), e.responses())
                .map_err(|err| err.in_experiment(e.id()))
        })
        .collect()
}

/// IR: an independent least-squares fit per experiment.
pub fn fit_ir(train: &Dataset) -> Result<EstimateSet> {
    let fits = individual_fits(train)?;
    EstimateSet::from_columns(train, fits.into_iter().map(|f| f.coefficients).collect())
}

/// Pooled fit over all trials of all experiments.
pub fn pooled_fit(train: &Dataset) -> Result<LinearFit> {
    let (x, y) = train.stacked();
    lsq::solve_least_squares(&x, &y)
}

/// CR: one pooled fit shared by every experiment.
pub fn fit_cr(train: &Dataset) -> Result<EstimateSet> {
    let h = pooled_fit(train)?.coefficients;
    EstimateSet::from_columns(train, vec![h; train.len()])
}
