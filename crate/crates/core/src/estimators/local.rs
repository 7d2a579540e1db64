//! Neighborhood estimators built on individual fits: local regression (LoR)
//! and local Curds and Whey (CW).
//!
//! The distance between two experiments is the Euclidean distance between
//! their individual least-squares estimates.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::EstimateSet;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::lsq::{self, ReducedSystem};

/// For each experiment, the `T` nearest experiments, nearest first. The
/// experiment itself always comes first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighborList {
    lists: Vec<Vec<usize>>,
}

impl NeighborList {
    pub fn of(&self, m: usize) -> &[usize] {
        &self.lists[m]
    }

    pub fn lists(&self) -> &[Vec<usize>] {
        &self.lists
    }

    pub fn t(&self) -> usize {
        self.lists.first().map_or(0, Vec::len)
    }
}

fn check_t(t: usize, m: usize) -> Result<()> {
    if t == 0 || t > m {
        return Err(Error::InvalidArgument(format!(
            "neighborhood size must satisfy 1 <= T <= M = {m}, got T = {t}"
        )));
    }
    Ok(())
}

/// `T` nearest experiments by distance between individual estimates; ties go to
/// the lower experiment index.
pub fn neighbor_lists(ir: &EstimateSet, t: usize) -> Result<NeighborList> {
    let m_count = ir.len();
    check_t(t, m_count)?;
    let h = ir.matrix();
    let lists = (0..m_count)
        .into_par_iter()
        .map(|m| {
            let mut others: Vec<(f64, usize)> = (0..m_count)
                .filter(|&j| j != m)
                .map(|j| ((h.column(m) - h.column(j)).norm_squared(), j))
                .collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            std::iter::once(m)
                .chain(others.into_iter().take(t - 1).map(|(_, j)| j))
                .collect()
        })
        .collect();
    Ok(NeighborList { lists })
}

fn reduced_systems(train: &Dataset) -> Result<Vec<ReducedSystem>> {
    train
        .experiments()
        .par_iter()
        .map(|e| {
            lsq::reduce(e.predictors(), e.responses()).map_err(|err| err.in_experiment(e.id()))
        })
        .collect()
}

/// LoR: per experiment, pooled least squares over all trials of its `T`
/// nearest experiments.
pub fn fit_lor(train: &Dataset, t: usize) -> Result<EstimateSet> {
    check_t(t, train.len())?;
    let systems = reduced_systems(train)?;
    let ir = EstimateSet::from_columns(
        train,
        systems
            .iter()
            .map(|s| s.solve().map(|f| f.coefficients))
            .collect::<Result<_>>()?,
    )?;
    let neighbors = neighbor_lists(&ir, t)?;
    let columns = (0..train.len())
        .into_par_iter()
        .map(|m| {
            let group: Vec<&ReducedSystem> = neighbors.of(m).iter().map(|&j| &systems[j]).collect();
            lsq::solve_stacked(&group)
                .map(|f| f.coefficients)
                .map_err(|err| err.in_experiment(train.experiment(m).id()))
        })
        .collect::<Result<Vec<_>>>()?;
    EstimateSet::from_columns(train, columns)
}

/// CW model for one experiment: `h̃ = basis · beta`.
#[derive(Clone, Debug, PartialEq)]
pub struct CwLocalModel {
    /// `d × T` matrix of the neighbors' individual estimates.
    pub basis: DMatrix<f64>,
    pub beta: DVector<f64>,
    /// `Z` had deficient column rank and `beta` is the minimum-norm solution.
    pub rank_deficient: bool,
}

impl CwLocalModel {
    pub fn estimate(&self) -> DVector<f64> {
        &self.basis * &self.beta
    }
}

#[derive(Clone, Debug)]
pub struct CwFit {
    pub estimates: EstimateSet,
    pub models: Vec<CwLocalModel>,
}

impl CwFit {
    pub fn rank_deficient_count(&self) -> usize {
        self.models.iter().filter(|m| m.rank_deficient).count()
    }
}

/// Local Curds and Whey: per experiment, the least-squares fit over the
/// neighbors' trials restricted to the span of the neighbors' individual
/// estimates.
pub fn fit_cw(train: &Dataset, t: usize) -> Result<CwFit> {
    check_t(t, train.len())?;
    let ir = super::fit_ir(train)?;
    let neighbors = neighbor_lists(&ir, t)?;
    let models = (0..train.len())
        .into_par_iter()
        .map(|m| {
            let group = neighbors.of(m);
            let basis = ir.matrix().select_columns(group.iter());
            let (x, y) = train.stack(group);
            let z = x * &basis;
            let fit = lsq::solve_least_squares(&z, &y)
                .map_err(|err| err.in_experiment(train.experiment(m).id()))?;
            Ok(CwLocalModel {
                basis,
                beta: fit.coefficients,
                rank_deficient: fit.rank_deficient,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let estimates =
        EstimateSet::from_columns(train, models.iter().map(CwLocalModel::estimate).collect())?;
    Ok(CwFit { estimates, models })
}
