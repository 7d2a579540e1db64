use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Per-experiment regression vectors: column `m` is the estimate for
/// experiment `m` of the dataset it was fitted on.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimateSet {
    ids: Vec<String>,
    vectors: DMatrix<f64>,
}

impl EstimateSet {
    pub fn new(ids: Vec<String>, vectors: DMatrix<f64>) -> Result<Self> {
        if ids.len() != vectors.ncols() {
            return Err(Error::Dimension(format!(
                "{} ids for {} estimate columns",
                ids.len(),
                vectors.ncols()
            )));
        }
        if ids.is_empty() || vectors.nrows() == 0 {
            return Err(Error::InvalidArgument("empty estimate set".into()));
        }
        if !vectors.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite estimate".into()));
        }
        Ok(EstimateSet { ids, vectors })
    }

    pub fn from_columns(dataset: &Dataset, columns: Vec<DVector<f64>>) -> Result<Self> {
        if columns.len() != dataset.len() {
            return Err(Error::Dimension(format!(
                "{} estimates for {} experiments",
                columns.len(),
                dataset.len()
            )));
        }
        if columns.iter().any(|c| c.len() != dataset.dim()) {
            return Err(Error::Dimension(
                "estimate length differs from dataset dim".into(),
            ));
        }
        EstimateSet::new(dataset.ids(), DMatrix::from_columns(&columns))
    }

    /// `d × M` matrix of estimates.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn column(&self, m: usize) -> DVector<f64> {
        self.vectors.column(m).into_owned()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }

    /// Checks that this set lines up with `dataset` (same ids, same order, same dim).
    pub fn check_aligned(&self, dataset: &Dataset) -> Result<()> {
        if self.dim() != dataset.dim() {
            return Err(Error::Dimension(format!(
                "estimates have dim {}, dataset has dim {}",
                self.dim(),
                dataset.dim()
            )));
        }
        if self.len() != dataset.len()
            || self
                .ids
                .iter()
                .zip(dataset.experiments())
                .any(|(a, e)| a != e.id())
        {
            return Err(Error::Dimension(
                "estimate columns do not match the dataset's experiments".into(),
            ));
        }
        Ok(())
    }

    /// Writes one CSV column per experiment: a header row of ids followed by
    /// `d` rows of coefficients. `metadata` lines are emitted first as `#` comments.
    pub fn write_csv(&self, w: &mut impl Write, metadata: &[String]) -> Result<()> {
        for line in metadata {
            writeln!(w, "# {line}")?;
        }
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(&self.ids)?;
        for i in 0..self.dim() {
            csv.write_record(self.vectors.row(i).iter().map(|v| v.to_string()))?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn read_csv(r: impl Read) -> Result<Self> {
        let mut csv = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .has_headers(true)
            .from_reader(r);
        let ids: Vec<String> = csv.headers()?.iter().map(str::to_owned).collect();
        if ids.is_empty() || ids.iter().all(String::is_empty) {
            return Err(Error::Format("estimate file has no header row".into()));
        }
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (i, rec) in csv.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|v| {
                    v.trim().parse::<f64>().map_err(|_| {
                        Error::Format(format!("estimate row {}: bad number '{v}'", i + 1))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::Format(
                "estimate file has no coefficient rows".into(),
            ));
        }
        let m = ids.len();
        let vectors = DMatrix::from_fn(rows.len(), m, |i, j| rows[i][j]);
        EstimateSet::new(ids, vectors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let set = EstimateSet::new(
            vec!["a".into(), "b".into()],
            DMatrix::from_row_slice(2, 2, &[0.1, -1e-300, 1.0 / 3.0, 12345.678]),
        )
        .unwrap();
        let mut buf = Vec::new();
        set.write_csv(&mut buf, &["meta=1".into()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# meta=1\na,b\n"));
        assert_eq!(EstimateSet::read_csv(buf.as_slice()).unwrap(), set);
    }

    #[test]
    fn corrupted_file_is_a_format_error() {
        assert!(matches!(
            EstimateSet::read_csv("a,b\n1.0,oops\n".as_bytes()),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            EstimateSet::read_csv("a,b\n1.0\n".as_bytes()),
            Err(Error::Format(_))
        ));
        assert!(EstimateSet::read_csv("a,b\n".as_bytes()).is_err());
    }
}
