//! Binary dataset cache.
//!
//! Layout (all integers little-endian `u32`, reals little-endian `f64`):
//!
//! ```text
//! magic "CRUCDAT\0" | version | dim | M
//! per experiment: id_len | id (UTF-8) | N_m | N_m*dim predictors (row-major) | N_m responses
//! ```

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};

use super::{Dataset, Experiment};
use crate::error::{Error, Result};

pub const CACHE_MAGIC: &[u8; 8] = b"CRUCDAT\0";
pub const CACHE_VERSION: u32 = 1;

fn put_u32(w: &mut impl Write, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b) as usize)
}

fn get_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(f64::from_le_bytes(b))
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("truncated dataset cache".into())
    } else {
        Error::Io(e)
    }
}

pub fn write_cache(dataset: &Dataset, w: &mut impl Write) -> Result<()> {
    w.write_all(CACHE_MAGIC)?;
    put_u32(w, CACHE_VERSION as usize)?;
    put_u32(w, dataset.dim())?;
    put_u32(w, dataset.len())?;
    for e in dataset.experiments() {
        put_u32(w, e.id().len())?;
        w.write_all(e.id().as_bytes())?;
        put_u32(w, e.len())?;
        let x = e.predictors();
        for n in 0..e.len() {
            for j in 0..x.ncols() {
                w.write_all(&x[(n, j)].to_le_bytes())?;
            }
        }
        for v in e.responses().iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_cache(r: &mut impl Read) -> Result<Dataset> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != CACHE_MAGIC {
        return Err(Error::Format("not a dataset cache (bad magic)".into()));
    }
    let version = get_u32(r)?;
    if version != CACHE_VERSION as usize {
        return Err(Error::Format(format!(
            "unsupported cache version {version} (expected {CACHE_VERSION})"
        )));
    }
    let dim = get_u32(r)?;
    let count = get_u32(r)?;
    let mut experiments = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let id_len = get_u32(r)?;
        let mut id = vec![0u8; id_len];
        r.read_exact(&mut id).map_err(truncated)?;
        let id = String::from_utf8(id)
            .map_err(|_| Error::Format("experiment id is not UTF-8".into()))?;
        let n = get_u32(r)?;
        let mut x = DMatrix::zeros(n, dim);
        for i in 0..n {
            for j in 0..dim {
                x[(i, j)] = get_f64(r)?;
            }
        }
        let mut y = DVector::zeros(n);
        for i in 0..n {
            y[i] = get_f64(r)?;
        }
        experiments.push(Experiment::new(id, x, y)?);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after dataset cache".into()));
    }
    Dataset::new(experiments)
}
