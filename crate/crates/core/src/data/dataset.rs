use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// One prediction experiment: `N_m` trials of a `d`-dimensional predictor and a
/// scalar response.
#[derive(Clone, Debug, PartialEq)]
pub struct Experiment {
    id: String,
    predictors: DMatrix<f64>,
    responses: DVector<f64>,
}

impl Experiment {
    pub fn new(
        id: impl Into<String>,
        predictors: DMatrix<f64>,
        responses: DVector<f64>,
    ) -> Result<Self> {
        let id = id.into();
        if predictors.nrows() == 0 {
            return Err(Error::InvalidArgument(format!(
                "experiment '{id}' has no trials"
            )));
        }
        if predictors.ncols() == 0 {
            return Err(Error::InvalidArgument(format!(
                "experiment '{id}' has zero-dimensional predictors"
            )));
        }
        if predictors.nrows() != responses.len() {
            return Err(Error::Dimension(format!(
                "experiment '{id}': {} predictor rows but {} responses",
                predictors.nrows(),
                responses.len()
            )));
        }
        if !predictors
            .iter()
            .chain(responses.iter())
            .all(|v| v.is_finite())
        {
            return Err(Error::InvalidArgument(format!(
                "experiment '{id}' contains non-finite values"
            )));
        }
        Ok(Experiment {
            id,
            predictors,
            responses,
        })
    }

    /// Builds an experiment from row vectors.
    pub fn from_rows(id: impl Into<String>, rows: &[Vec<f64>], responses: &[f64]) -> Result<Self> {
        let id = id.into();
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Dimension(format!(
                "experiment '{id}': ragged predictor rows"
            )));
        }
        let x = DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j]);
        Experiment::new(id, x, DVector::from_column_slice(responses))
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn predictors(&self) -> &DMatrix<f64> {
        &self.predictors
    }

    pub fn responses(&self) -> &DVector<f64> {
        &self.responses
    }

    /// Number of trials `N_m`.
    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.predictors.ncols()
    }

    /// Keeps the listed trials, in the given order.
    pub(crate) fn select_trials(&self, rows: &[usize]) -> Result<Experiment> {
        let x = self.predictors.select_rows(rows.iter());
        let y = self.responses.select_rows(rows.iter());
        Experiment::new(self.id.clone(), x, y)
    }
}

/// An ordered collection of experiments sharing one predictor dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    experiments: Vec<Experiment>,
    dim: usize,
}

impl Dataset {
    pub fn new(experiments: Vec<Experiment>) -> Result<Self> {
        let Some(first) = experiments.first() else {
            return Err(Error::InvalidArgument("dataset has no experiments".into()));
        };
        let dim = first.dim();
        let mut seen = HashSet::with_capacity(experiments.len());
        for e in &experiments {
            if e.dim() != dim {
                return Err(Error::Dimension(format!(
                    "experiment '{}' has dim {}, dataset dim is {dim}",
                    e.id(),
                    e.dim()
                )));
            }
            if !seen.insert(e.id()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate experiment id '{}'",
                    e.id()
                )));
            }
        }
        Ok(Dataset { experiments, dim })
    }

    pub fn experiments(&self) -> &[Experiment] {
        &self.experiments
    }

    pub fn experiment(&self, index: usize) -> &Experiment {
        &self.experiments[index]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.experiments.iter().position(|e| e.id() == id)
    }

    /// Number of experiments `M`.
    pub fn len(&self) -> usize {
        self.experiments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.experiments.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `Σ N_m`.
    pub fn total_trials(&self) -> usize {
        self.experiments.iter().map(Experiment::len).sum()
    }

    pub fn ids(&self) -> Vec<String> {
        self.experiments.iter().map(|e| e.id().to_owned()).collect()
    }

    /// Row offset of each experiment in the stacked trial order.
    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.experiments
            .iter()
            .map(|e| {
                let o = acc;
                acc += e.len();
                o
            })
            .collect()
    }

    /// Stacks the given experiments' trials, in order, into one design matrix
    /// and response vector.
    pub fn stack(&self, indices: &[usize]) -> (DMatrix<f64>, DVector<f64>) {
        let rows: usize = indices.iter().map(|&m| self.experiments[m].len()).sum();
        let mut x = DMatrix::zeros(rows, self.dim);
        let mut y = DVector::zeros(rows);
        let mut at = 0;
        for &m in indices {
            let e = &self.experiments[m];
            let n = e.len();
            x.rows_mut(at, n).copy_from(e.predictors());
            y.rows_mut(at, n).copy_from(e.responses());
            at += n;
        }
        (x, y)
    }

    /// All trials stacked in experiment order.
    pub fn stacked(&self) -> (DMatrix<f64>, DVector<f64>) {
        let all: Vec<usize> = (0..self.len()).collect();
        self.stack(&all)
    }

    /// Dataset with experiments reordered by `order` (a permutation of `0..M`).
    pub fn permuted(&self, order: &[usize]) -> Result<Dataset> {
        let mut seen = vec![false; self.len()];
        for &m in order {
            if m >= self.len() || std::mem::replace(&mut seen[m], true) {
                return Err(Error::InvalidArgument("order is not a permutation".into()));
            }
        }
        if order.len() != self.len() {
            return Err(Error::InvalidArgument("order is not a permutation".into()));
        }
        Dataset::new(order.iter().map(|&m| self.experiments[m].clone()).collect())
    }
}
