use rand::seq::SliceRandom;

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng;

/// Per-trial random split within every experiment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train_fraction: f64, seed: u64) -> Result<Self> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "train fraction must lie in (0, 1), got {train_fraction}"
            )));
        }
        Ok(SplitSpec {
            train_fraction,
            seed,
        })
    }

    /// Number of training trials for an experiment with `n` trials.
    ///
    /// `round(fraction * n)`, clamped so both halves keep at least one trial.
    pub fn train_count(&self, n: usize) -> usize {
        ((self.train_fraction * n as f64).round() as usize).clamp(1, n.saturating_sub(1).max(1))
    }
}

/// Splits each experiment's trials into train and test parts.
///
/// Both halves keep all experiments in the original order; the trials kept in
/// each half stay in their original relative order.
pub fn train_test_split(dataset: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    SplitSpec::new(spec.train_fraction, spec.seed)?;
    let mut rng = rng::seeded(spec.seed);
    let mut train = Vec::with_capacity(dataset.len());
    let mut test = Vec::with_capacity(dataset.len());
    for e in dataset.experiments() {
        let n = e.len();
        if n < 2 {
            return Err(Error::Split {
                experiment: e.id().to_owned(),
                trials: n,
            });
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let k = spec.train_count(n);
        let (tr, te) = idx.split_at_mut(k);
        tr.sort_unstable();
        te.sort_unstable();
        train.push(e.select_trials(tr)?);
        test.push(e.select_trials(te)?);
    }
    Ok((Dataset::new(train)?, Dataset::new(test)?))
}
