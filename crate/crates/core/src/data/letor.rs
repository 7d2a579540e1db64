//! LETOR / SVMlight-style text: `<score> qid:<id> <fid>:<val> ...`.
//!
//! Feature ids are 1-based. Anything after a `#` is a comment. Rows are grouped
//! into experiments by `qid`, in order of first appearance; features that are not
//! listed are zero.

use std::collections::HashMap;
use std::fmt::Write;

use nalgebra::{DMatrix, DVector};

use super::{Dataset, Experiment};
use crate::error::{Error, Result};

struct Row {
    score: f64,
    features: Vec<(usize, f64)>,
}

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn content(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
    .trim()
}

fn parse_line(lineno: usize, text: &str) -> Result<(String, Row)> {
    let mut tokens = text.split_whitespace();
    let score_tok = tokens
        .next()
        .ok_or_else(|| parse_error(lineno, "empty line"))?;
    let score: f64 = score_tok
        .parse()
        .map_err(|_| parse_error(lineno, format!("bad score '{score_tok}'")))?;
    if !score.is_finite() {
        return Err(parse_error(lineno, "score is not finite"));
    }
    let qid_tok = tokens
        .next()
        .ok_or_else(|| parse_error(lineno, "missing qid"))?;
    let qid = qid_tok
        .strip_prefix("qid:")
        .filter(|q| !q.is_empty())
        .ok_or_else(|| parse_error(lineno, format!("expected qid:<id>, got '{qid_tok}'")))?;

    let mut features = Vec::new();
    for tok in tokens {
        let (fid, val) = tok
            .split_once(':')
            .ok_or_else(|| parse_error(lineno, format!("expected <fid>:<val>, got '{tok}'")))?;
        let fid: usize = fid
            .parse()
            .map_err(|_| parse_error(lineno, format!("bad feature id '{fid}'")))?;
        if fid == 0 {
            return Err(parse_error(lineno, "feature ids start at 1"));
        }
        let val: f64 = val
            .parse()
            .map_err(|_| parse_error(lineno, format!("bad feature value '{val}'")))?;
        if !val.is_finite() {
            return Err(parse_error(lineno, format!("feature {fid} is not finite")));
        }
        if features.iter().any(|&(f, _)| f == fid) {
            return Err(parse_error(lineno, format!("feature {fid} listed twice")));
        }
        features.push((fid, val));
    }
    Ok((qid.to_owned(), Row { score, features }))
}

/// Parses LETOR text into a dataset of dimension `dim`.
pub fn parse_letor(text: &str, dim: usize) -> Result<Dataset> {
    if dim == 0 {
        return Err(Error::InvalidArgument("dim must be positive".into()));
    }
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<Row>> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let body = content(line);
        if body.is_empty() {
            continue;
        }
        let (qid, row) = parse_line(lineno, body)?;
        if let Some(&(fid, _)) = row.features.iter().find(|&&(f, _)| f > dim) {
            return Err(Error::Dimension(format!(
                "line {lineno}: feature id {fid} exceeds dim {dim}"
            )));
        }
        groups
            .entry(qid.clone())
            .or_insert_with(|| {
                order.push(qid);
                Vec::new()
            })
            .push(row);
    }

    let experiments = order
        .into_iter()
        .map(|qid| {
            let rows = groups.remove(&qid).expect("grouped qid");
            let mut x = DMatrix::zeros(rows.len(), dim);
            let mut y = DVector::zeros(rows.len());
            for (n, row) in rows.iter().enumerate() {
                y[n] = row.score;
                for &(fid, val) in &row.features {
                    x[(n, fid - 1)] = val;
                }
            }
            Experiment::new(qid, x, y)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(experiments)
}

/// Largest feature id mentioned in LETOR text.
pub fn infer_letor_dim(text: &str) -> Result<usize> {
    let mut dim = 0;
    for (i, line) in text.lines().enumerate() {
        let body = content(line);
        if body.is_empty() {
            continue;
        }
        let (_, row) = parse_line(i + 1, body)?;
        dim = row.features.iter().fold(dim, |d, &(f, _)| d.max(f));
    }
    if dim == 0 {
        return Err(Error::Format(
            "cannot infer dimension: no features present".into(),
        ));
    }
    Ok(dim)
}

/// Serializes a dataset to LETOR text; zero features are omitted.
pub fn to_letor(dataset: &Dataset) -> Result<String> {
    let mut out = String::new();
    for e in dataset.experiments() {
        if e.id().is_empty() || e.id().contains(|c: char| c.is_whitespace() || c == '#') {
            return Err(Error::Format(format!(
                "experiment id '{}' cannot be written as a qid",
                e.id()
            )));
        }
        let x = e.predictors();
        for n in 0..e.len() {
            write!(out, "{} qid:{}", e.responses()[n], e.id()).unwrap();
            for j in 0..x.ncols() {
                let v = x[(n, j)];
                if v != 0.0 {
                    write!(out, " {}:{}", j + 1, v).unwrap();
                }
            }
            out.push('\n');
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_line() {
        let ds = parse_letor("3 qid:7 1:0.5 4:2.0", 4).unwrap();
        assert_eq!(ds.len(), 1);
        let e = ds.experiment(0);
        assert_eq!(e.id(), "7");
        assert_eq!(
            e.predictors().row(0).iter().copied().collect::<Vec<_>>(),
            vec![0.5, 0.0, 0.0, 2.0]
        );
        assert_eq!(e.responses()[0], 3.0);
    }

    #[test]
    fn groups_rows_by_qid_in_first_appearance_order() {
        let text = "1 qid:9 1:1\n3 qid:7 1:0.5\n# comment\n\n2 qid:9 2:4 # trailing\n0 qid:7\n";
        let ds = parse_letor(text, 2).unwrap();
        assert_eq!(ds.ids(), vec!["9", "7"]);
        assert_eq!(ds.experiment(0).len(), 2);
        assert_eq!(ds.experiment(1).len(), 2);
        assert_eq!(ds.experiment(0).predictors()[(1, 1)], 4.0);
    }

    #[test]
    fn two_lines_same_qid() {
        let ds = parse_letor("3 qid:7 1:0.5\n1 qid:7 2:1.5", 4).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.experiment(0).len(), 2);
    }

    #[test]
    fn feature_beyond_dim_is_dimension_error() {
        assert!(matches!(
            parse_letor("3 qid:7 9:1.0", 4),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn malformed_lines_report_line_number() {
        let cases = [
            "1 qid:1 1:1\nx qid:1 1:1",
            "1 qid:1 1:1\n1 1:1",
            "1 qid:1 1:1\n1 qid:1 1-1",
            "1 qid:1 1:1\n1 qid:1 0:1",
            "1 qid:1 1:1\n1 qid:1 1:abc",
            "1 qid:1 1:1\n1 qid:1 1:1 1:2",
        ];
        for text in cases {
            match parse_letor(text, 3) {
                Err(Error::Parse { line, .. }) => assert_eq!(line, 2, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn infers_dimension() {
        assert_eq!(infer_letor_dim("1 qid:1 3:1\n2 qid:2 5:1").unwrap(), 5);
        assert!(infer_letor_dim("1 qid:1").is_err());
    }
}
