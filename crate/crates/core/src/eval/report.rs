use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::Method;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: Method,
    pub params: BTreeMap<String, Value>,
    pub mse: f64,
    pub classification_error: f64,
    pub runtime_seconds: f64,
}

impl EvalReport {
    /// `key=value` pairs joined by `;`, keys in order.
    pub fn params_string(&self) -> String {
        self.params
            .iter()
            .map(|(k, v)| match v {
                Value::String(s) => format!("{k}={s}"),
                other => format!("{k}={other}"),
            })
            .collect::<Vec<_>>()
            .join(";")
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Jsonl,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Jsonl => "jsonl",
        }
    }
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.extension())
    }
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "jsonl" => Ok(OutputFormat::Jsonl),
            _ => Err(Error::Usage(format!(
                "unknown format '{s}' (expected csv or jsonl)"
            ))),
        }
    }
}

/// Writes reports as CSV (metadata as `#` lines) or JSON lines (metadata in
/// a leading `{"metadata": [...]}` record). Runtimes are included only when
/// `timing` is set, so that untimed output is reproducible byte for byte.
pub fn write_reports(
    reports: &[EvalReport],
    format: OutputFormat,
    timing: bool,
    metadata: &[String],
    w: &mut impl Write,
) -> Result<()> {
    match format {
        OutputFormat::Csv => {
            for line in metadata {
                writeln!(w, "# {line}")?;
            }
            let mut csv = csv::Writer::from_writer(w);
            let mut header = vec!["method", "params", "mse", "classification_error"];
            if timing {
                header.push("runtime_seconds");
            }
            csv.write_record(&header)?;
            for r in reports {
                let mut row = vec![
                    r.method.to_string(),
                    r.params_string(),
                    r.mse.to_string(),
                    r.classification_error.to_string(),
                ];
                if timing {
                    row.push(r.runtime_seconds.to_string());
                }
                csv.write_record(&row)?;
            }
            csv.flush()?;
        }
        OutputFormat::Jsonl => {
            if !metadata.is_empty() {
                writeln!(w, "{}", serde_json::json!({ "metadata": metadata }))?;
            }
            for r in reports {
                let mut value = serde_json::to_value(r)?;
                if !timing {
                    value
                        .as_object_mut()
                        .expect("report is an object")
                        .remove("runtime_seconds");
                }
                writeln!(w, "{value}")?;
            }
        }
    }
    Ok(())
}
