//! Experiments, datasets and their on-disk formats.

mod cache;
mod dataset;
mod letor;
mod projection;
mod split;

pub use cache::{read_cache, write_cache, CACHE_MAGIC, CACHE_VERSION};
pub use dataset::{Dataset, Experiment};
pub use letor::{infer_letor_dim, parse_letor, to_letor};
pub use projection::{apply_projection, make_projection, ProjectionSketch};
pub use split::{train_test_split, SplitSpec};

use std::path::Path;

use crate::error::{Error, Result};

/// Loads a dataset from a binary cache (detected by its magic bytes) or LETOR text.
///
/// For LETOR input `dim` fixes the feature dimension; when absent it is the
/// largest feature id present.
pub fn load_dataset(path: &Path, dim: Option<usize>) -> Result<Dataset> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(CACHE_MAGIC) {
        let ds = read_cache(&mut bytes.as_slice())?;
        if let Some(d) = dim {
            if d != ds.dim() {
                return Err(Error::Dimension(format!(
                    "cache {} has dim {}, expected {d}",
                    path.display(),
                    ds.dim()
                )));
            }
        }
        return Ok(ds);
    }
    let text = String::from_utf8(bytes)
        .map_err(|e| Error::Format(format!("{}: not UTF-8 text: {e}", path.display())))?;
    let dim = match dim {
        Some(d) => d,
        None => infer_letor_dim(&text)?,
    };
    parse_letor(&text, dim)
}
