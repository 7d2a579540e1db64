//! Command-line flags and their TOML config-file counterparts.
//!
//! Each command's flags double as the schema of its config file (same names,
//! snake_case). Flags win over the file. Path fields are skipped when hashing
//! so that moving files around does not change a run's config hash.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimators::EmEstimate;
use crate::eval::{Method, MethodParams, OutputFormat};

#[derive(Debug, Parser)]
#[command(
    name = "cruc",
    version,
    about = "Clustered regression with unknown clusters"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic dataset and its ground truth
    Gen(GenArgs),
    /// Fit one or all methods and score them on held-out trials
    Fit(FitArgs),
    /// Sweep a method parameter, or the noise level of the synthetic model
    Sweep(SweepArgs),
    /// Rescore a saved estimate file
    Eval(EvalArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Letor,
    Cache,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatArg {
    Csv,
    Jsonl,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Jsonl => OutputFormat::Jsonl,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimateArg {
    Map,
    Mixture,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricArg {
    Parameter,
    Test,
}

macro_rules! merge_fields {
    ($dst:expr, $src:expr; $($field:ident),* $(,)?) => {
        $( if $dst.$field.is_none() { $dst.$field = $src.$field.take(); } )*
    };
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenArgs {
    /// TOML file with default values for these flags
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Number of experiments M [default: 100]
    #[arg(long)]
    pub experiments: Option<usize>,
    /// Trials per experiment N [default: 70]
    #[arg(long)]
    pub trials: Option<usize>,
    /// Feature dimension d [default: 6]
    #[arg(long)]
    pub dim: Option<usize>,
    /// Number of true clusters K0 [default: 5]
    #[arg(long)]
    pub clusters: Option<usize>,
    /// Noise standard deviation [default: 0.1]
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory [default: results]
    #[arg(long)]
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    /// Dataset file format [default: letor]
    #[arg(long, value_enum)]
    pub data_format: Option<DataFormat>,
}

/// Dataset selection shared by fit, sweep and eval.
#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataArgs {
    /// Dataset to split into train and test trials
    #[arg(long, conflicts_with_all = ["train", "test"])]
    #[serde(skip_serializing)]
    pub data: Option<PathBuf>,
    /// Training dataset (with --test)
    #[arg(long)]
    #[serde(skip_serializing)]
    pub train: Option<PathBuf>,
    /// Test dataset
    #[arg(long)]
    #[serde(skip_serializing)]
    pub test: Option<PathBuf>,
    /// Feature dimension of LETOR input [default: largest feature id]
    #[arg(long)]
    pub dim: Option<usize>,
    /// Share of each experiment's trials used for training with --data [default: 0.7]
    #[arg(long)]
    pub train_fraction: Option<f64>,
}

/// Method selection and parameters shared by fit and sweep.
#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MethodArgs {
    /// ir, cr, em, km, svt, cw, lor (fit also accepts all)
    #[arg(long)]
    pub method: Option<String>,
    /// Number of clusters for em and km
    #[arg(long)]
    pub k: Option<usize>,
    /// Neighborhood size for cw and lor
    #[arg(long)]
    pub t: Option<usize>,
    /// SVT residual budget ||b - A(G)|| <= epsilon
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// SVT budget as a multiple of sqrt(IR training SSE) when --epsilon is absent [default: 1.1]
    #[arg(long)]
    pub epsilon_factor: Option<f64>,
    /// SVT shrinkage threshold
    #[arg(long)]
    pub tau: Option<f64>,
    /// SVT dual step size
    #[arg(long)]
    pub delta: Option<f64>,
    /// Iteration cap for em, km and svt
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Per-experiment EM estimate [default: map]
    #[arg(long, value_enum)]
    pub em_estimate: Option<EstimateArg>,
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(skip)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub method: MethodArgs,
    /// Seed for the train/test split and EM/KM initialization [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory [default: results]
    #[arg(long)]
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    /// Report format [default: csv]
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Include wall-clock runtimes in reports (makes output run-dependent)
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub timing: Option<bool>,
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(skip)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub method: MethodArgs,
    /// Parameter to sweep: t, k, epsilon, epsilon_factor, tau or step
    #[arg(long)]
    pub param: Option<String>,
    /// Comma-separated values of --param
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    /// Comma-separated noise levels; switches to the synthetic noise sweep
    #[arg(long, value_delimiter = ',')]
    pub noise_grid: Option<Vec<f64>>,
    /// Comma-separated LoR neighborhood sizes for the noise sweep [default: 1,5,10,...,M]
    #[arg(long, value_delimiter = ',')]
    pub t_grid: Option<Vec<usize>>,
    /// Number of synthetic datasets per noise level, seeds seed..seed+n [default: 10]
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Noise-sweep error measure [default: parameter]
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,
    #[arg(long)]
    pub experiments: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Feature dimension of the synthetic model [default: 6]
    #[arg(long)]
    pub model_dim: Option<usize>,
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Include runtimes and write the runtime-vs-parameter series
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub timing: Option<bool>,
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Estimate CSV written by fit
    #[arg(long)]
    #[serde(skip_serializing)]
    pub estimates: Option<PathBuf>,
    #[command(flatten)]
    #[serde(skip)]
    pub data: DataArgs,
    /// Method tag for the report [default: read from the estimate file]
    #[arg(long)]
    pub method: Option<String>,
    /// Split seed when scoring against --data [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report file (also printed to stdout)
    #[arg(long)]
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
}

fn read_table(path: Option<&Path>) -> Result<toml::Table> {
    let Some(path) = path else {
        return Ok(toml::Table::new());
    };
    let text = std::fs::read_to_string(path)?;
    text.parse::<toml::Table>()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn from_table<T: for<'de> Deserialize<'de>>(table: toml::Table, path: Option<&Path>) -> Result<T> {
    T::deserialize(toml::Value::Table(table)).map_err(|e| {
        let at = path.map(|p| p.display().to_string()).unwrap_or_default();
        Error::Format(format!("{at}: {e}"))
    })
}

/// Moves the entries named in `keys` out of `table`.
fn take_keys(table: &mut toml::Table, keys: &[&str]) -> toml::Table {
    keys.iter()
        .filter_map(|&k| table.remove(k).map(|v| (k.to_owned(), v)))
        .collect()
}

const DATA_KEYS: &[&str] = &["data", "train", "test", "dim", "train_fraction"];
const METHOD_KEYS: &[&str] = &[
    "method",
    "k",
    "t",
    "epsilon",
    "epsilon_factor",
    "tau",
    "delta",
    "max_iter",
    "em_estimate",
];

/// Reads a config file whose keys span the command's own flags plus the
/// shared data (and optionally method) groups; unknown keys are errors.
fn read_grouped<T: for<'de> Deserialize<'de> + Default>(
    path: Option<&Path>,
    with_method: bool,
) -> Result<(T, DataArgs, MethodArgs)> {
    let mut table = read_table(path)?;
    let data = from_table(take_keys(&mut table, DATA_KEYS), path)?;
    let method = if with_method {
        from_table(take_keys(&mut table, METHOD_KEYS), path)?
    } else {
        MethodArgs::default()
    };
    Ok((from_table(table, path)?, data, method))
}

/// First 16 hex digits of the SHA-256 of the serialized (path-free) config.
pub fn config_hash(config: &impl Serialize) -> Result<String> {
    let json = serde_json::to_string(config)?;
    Ok(hex::encode(Sha256::digest(json.as_bytes()))[..16].to_owned())
}

/// Hash input for commands with grouped flags.
pub fn grouped_hash(
    own: &impl Serialize,
    data: &DataArgs,
    method: Option<&MethodArgs>,
) -> Result<String> {
    config_hash(&serde_json::json!({ "own": own, "data": data, "method": method }))
}

impl DataArgs {
    fn merge(&mut self, mut file: DataArgs) {
        merge_fields!(self, file; data, train, test, dim, train_fraction);
    }
}

impl MethodArgs {
    fn merge(&mut self, mut file: MethodArgs) {
        merge_fields!(self, file; method, k, t, epsilon, epsilon_factor, tau, delta, max_iter, em_estimate);
    }

    pub fn params(&self, seed: u64) -> MethodParams {
        MethodParams {
            k: self.k,
            t: self.t,
            seed,
            em_estimate: match self.em_estimate {
                Some(EstimateArg::Mixture) => EmEstimate::Mixture,
                _ => EmEstimate::Map,
            },
            epsilon: self.epsilon,
            epsilon_factor: self.epsilon_factor,
            tau: self.tau,
            step: self.delta,
            max_iter: self.max_iter,
        }
    }

    /// The single method named by `--method`.
    pub fn single(&self) -> Result<Method> {
        self.method
            .as_deref()
            .ok_or_else(|| Error::Usage("--method is required".into()))?
            .parse()
    }
}

impl GenArgs {
    pub fn resolve(mut self) -> Result<Self> {
        let mut file: GenArgs =
            from_table(read_table(self.config.as_deref())?, self.config.as_deref())?;
        merge_fields!(self, file; experiments, trials, dim, clusters, sigma, seed, out, data_format);
        Ok(self)
    }
}

impl FitArgs {
    pub fn resolve(mut self) -> Result<Self> {
        let (mut file, data, method): (FitArgs, _, _) = read_grouped(self.config.as_deref(), true)?;
        self.data.merge(data);
        self.method.merge(method);
        merge_fields!(self, file; seed, out, format, timing);
        Ok(self)
    }
}

impl SweepArgs {
    pub fn resolve(mut self) -> Result<Self> {
        let (mut file, data, method): (SweepArgs, _, _) =
            read_grouped(self.config.as_deref(), true)?;
        self.data.merge(data);
        self.method.merge(method);
        merge_fields!(self, file; param, grid, noise_grid, t_grid, seeds, metric, experiments, trials,
            model_dim, clusters, seed, out, format, timing);
        Ok(self)
    }
}

impl EvalArgs {
    pub fn resolve(mut self) -> Result<Self> {
        let (mut file, data, _): (EvalArgs, _, _) = read_grouped(self.config.as_deref(), false)?;
        self.data.merge(data);
        merge_fields!(self, file; estimates, method, seed, out, format);
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn parse(args: &[&str]) -> Command {
        Cli::try_parse_from(std::iter::once("cruc").chain(args.iter().copied()))
            .unwrap()
            .command
    }

    #[test]
    fn flags_override_config_file() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "experiments = 12\nsigma = 0.5\nseed = 3").unwrap();
        let path = file.path().to_str().unwrap().to_owned();
        let Command::Gen(args) = parse(&["gen", "--config", &path, "--sigma", "0.2"]) else {
            panic!()
        };
        let args = args.resolve().unwrap();
        assert_eq!(args.experiments, Some(12));
        assert_eq!(args.sigma, Some(0.2));
        assert_eq!(args.seed, Some(3));
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "experimentz = 12").unwrap();
        let path = file.path().to_str().unwrap().to_owned();
        let Command::Gen(args) = parse(&["gen", "--config", &path]) else {
            panic!()
        };
        assert!(matches!(args.resolve(), Err(Error::Format(_))));
    }

    #[test]
    fn nested_fit_config() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(
            file,
            "method = \"lor\"\nt = 4\ntrain_fraction = 0.5\nformat = \"jsonl\""
        )
        .unwrap();
        let path = file.path().to_str().unwrap().to_owned();
        let Command::Fit(args) = parse(&["fit", "--config", &path, "--t", "7"]) else {
            panic!()
        };
        let args = args.resolve().unwrap();
        assert_eq!(args.method.method.as_deref(), Some("lor"));
        assert_eq!(args.method.t, Some(7));
        assert_eq!(args.data.train_fraction, Some(0.5));
        assert_eq!(args.format, Some(FormatArg::Jsonl));
    }

    #[test]
    fn unknown_keys_in_grouped_config_are_rejected() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "t = 4\nneighbours = 3").unwrap();
        let path = file.path().to_str().unwrap().to_owned();
        let Command::Fit(args) = parse(&["fit", "--config", &path]) else {
            panic!()
        };
        assert!(matches!(args.resolve(), Err(Error::Format(_))));
        // Method keys are not part of eval's schema.
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "t = 4").unwrap();
        let path = file.path().to_str().unwrap().to_owned();
        let Command::Eval(args) = parse(&["eval", "--config", &path]) else {
            panic!()
        };
        assert!(args.resolve().is_err());
    }

    #[test]
    fn hash_ignores_paths() {
        let a = GenArgs {
            seed: Some(1),
            out: Some("x".into()),
            ..Default::default()
        };
        let b = GenArgs {
            seed: Some(1),
            out: Some("y".into()),
            ..Default::default()
        };
        let c = GenArgs {
            seed: Some(2),
            ..Default::default()
        };
        assert_eq!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        assert_ne!(config_hash(&a).unwrap(), config_hash(&c).unwrap());
        assert_eq!(config_hash(&a).unwrap().len(), 16);
    }

    #[test]
    fn grids_are_comma_separated() {
        let Command::Sweep(args) = parse(&["sweep", "--param", "t", "--grid", "1,5,10"]) else {
            panic!()
        };
        assert_eq!(args.grid, Some(vec![1.0, 5.0, 10.0]));
    }
}
