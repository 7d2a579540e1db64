//! The `cruc` command-line driver: `gen`, `fit`, `sweep` and `eval`.
//!
//! Every output file starts with a metadata line carrying the crate version,
//! the command, a hash of its configuration, the RNG algorithm and the seed.
//! Files are written to a temporary sibling and renamed into place.

mod args;

pub use args::{Cli, Command, DataArgs, EvalArgs, FitArgs, GenArgs, MethodArgs, SweepArgs};

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde_json::Value;

use self::args::{config_hash, grouped_hash, DataFormat, MetricArg};
use crate::data::{load_dataset, to_letor, train_test_split, write_cache, Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::estimators::EstimateSet;
use crate::eval::{
    self, noise_sweep, write_reports, Method, Metric, NoiseSweepConfig, OutputFormat,
};
use crate::rng::RNG_ALGORITHM;
use crate::svt::write_trace_csv;
use crate::synth::{self, SyntheticSpec};

const DEFAULT_OUT: &str = "results";
const DEFAULT_TRAIN_FRACTION: f64 = 0.7;

/// Runs the command line and returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    match run(cli.command, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error[{}]: {err}", err.code());
            if matches!(err, Error::Usage(_)) {
                2
            } else {
                1
            }
        }
    }
}

pub fn run(command: Command, out: &mut impl Write) -> Result<()> {
    match command {
        Command::Gen(args) => cmd_gen(args.resolve()?, out),
        Command::Fit(args) => cmd_fit(args.resolve()?, out),
        Command::Sweep(args) => cmd_sweep(args.resolve()?, out),
        Command::Eval(args) => cmd_eval(args.resolve()?, out),
    }
}

fn metadata(command: &str, hash: &str, seed: u64) -> String {
    format!(
        "cruc version={} command={command} config_hash={hash} rng={RNG_ALGORITHM} seed={seed}",
        env!("CARGO_PKG_VERSION")
    )
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn write_with(path: &Path, body: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    body(&mut buf)?;
    write_atomic(path, &buf)
}

fn out_dir(out: &Option<PathBuf>) -> PathBuf {
    out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn cmd_gen(args: GenArgs, out: &mut impl Write) -> Result<()> {
    let defaults = SyntheticSpec::default();
    let spec = SyntheticSpec {
        num_experiments: args.experiments.unwrap_or(defaults.num_experiments),
        trials_per_experiment: args.trials.unwrap_or(defaults.trials_per_experiment),
        dim: args.dim.unwrap_or(defaults.dim),
        num_clusters: args.clusters.unwrap_or(defaults.num_clusters),
        noise_std: args.sigma.unwrap_or(defaults.noise_std),
        seed: args.seed.unwrap_or(defaults.seed),
    };
    let (data, truth) = synth::generate(&spec)?;
    let meta = metadata("gen", &config_hash(&args)?, spec.seed);
    let dir = out_dir(&args.out);
    let data_path = match args.data_format.unwrap_or(DataFormat::Letor) {
        DataFormat::Letor => {
            let path = dir.join("data.letor");
            write_atomic(&path, format!("# {meta}\n{}", to_letor(&data)?).as_bytes())?;
            path
        }
        DataFormat::Cache => {
            let path = dir.join("data.bin");
            write_with(&path, |buf| write_cache(&data, buf))?;
            path
        }
    };
    let truth_path = dir.join("truth.json");
    write_atomic(&truth_path, truth.to_json()?.as_bytes())?;

    let mut sizes = vec![0usize; spec.num_clusters];
    for &a in &truth.assignments {
        sizes[a] += 1;
    }
    writeln!(
        out,
        "generated M={} N={} d={} K0={} sigma={} snr_db={:.2} seed={}",
        spec.num_experiments,
        spec.trials_per_experiment,
        spec.dim,
        spec.num_clusters,
        spec.noise_std,
        spec.snr_db(),
        spec.seed
    )?;
    writeln!(out, "cluster sizes: {sizes:?}")?;
    writeln!(
        out,
        "wrote {} and {}",
        data_path.display(),
        truth_path.display()
    )?;
    Ok(())
}

/// Loads train and test data from `--data` (split by `seed`) or `--train`/`--test`.
fn load_split(data: &DataArgs, seed: u64) -> Result<(Dataset, Dataset)> {
    if let Some(path) = &data.data {
        let all = load_dataset(path, data.dim)?;
        let spec = SplitSpec::new(data.train_fraction.unwrap_or(DEFAULT_TRAIN_FRACTION), seed)?;
        return train_test_split(&all, &spec);
    }
    match (&data.train, &data.test) {
        (Some(train), Some(test)) => {
            let train = load_dataset(train, data.dim)?;
            let test = load_dataset(test, Some(train.dim()))?;
            Ok((train, test))
        }
        _ => Err(Error::Usage(
            "give --data, or both --train and --test".into(),
        )),
    }
}

fn estimate_metadata(
    meta: &str,
    method: Method,
    params: &BTreeMap<String, Value>,
) -> Result<Vec<String>> {
    Ok(vec![
        meta.to_owned(),
        format!("method={method}"),
        format!("params={}", serde_json::to_string(params)?),
    ])
}

fn cmd_fit(args: FitArgs, out: &mut impl Write) -> Result<()> {
    let seed = args.seed.unwrap_or(0);
    let methods = match args.method.method.as_deref() {
        Some("all") => Method::ALL.to_vec(),
        _ => vec![args.method.single()?],
    };
    let params = args.method.params(seed);
    for &m in &methods {
        if matches!(m, Method::Em | Method::Km) && params.k.is_none() {
            return Err(Error::Usage(format!("method '{m}' requires --k")));
        }
        if matches!(m, Method::Cw | Method::Lor) && params.t.is_none() {
            return Err(Error::Usage(format!("method '{m}' requires --t")));
        }
    }
    let (train, test) = load_split(&args.data, seed)?;
    let meta = metadata(
        "fit",
        &grouped_hash(&args, &args.data, Some(&args.method))?,
        seed,
    );
    let dir = out_dir(&args.out);
    let format: OutputFormat = args.format.map(Into::into).unwrap_or_default();
    let timing = args.timing.unwrap_or(false);

    let mut reports = Vec::with_capacity(methods.len());
    for method in methods {
        let (fit, report) = eval::evaluate(method, &train, &test, &params)?;
        let lines = estimate_metadata(&meta, method, &fit.params)?;
        write_with(&dir.join(format!("estimates_{method}.csv")), |buf| {
            fit.estimates.write_csv(buf, &lines)
        })?;
        if let Some(trace) = &fit.svt_trace {
            write_with(&dir.join("svt_trace.csv"), |buf| {
                writeln!(buf, "# {meta}")?;
                write_trace_csv(trace, buf)
            })?;
        }
        reports.push(report);
    }
    let report_path = dir.join(format!("report.{}", format.extension()));
    write_with(&report_path, |buf| {
        write_reports(&reports, format, timing, std::slice::from_ref(&meta), buf)
    })?;
    write_reports(&reports, format, timing, &[], out)?;
    Ok(())
}

fn default_t_grid(m: usize) -> Vec<usize> {
    let mut grid = vec![1];
    grid.extend((5..=m).step_by(5));
    if *grid.last().expect("non-empty") != m {
        grid.push(m);
    }
    grid
}

fn cmd_sweep(args: SweepArgs, out: &mut impl Write) -> Result<()> {
    if args.noise_grid.is_some() {
        return noise_mode(args, out);
    }
    let seed = args.seed.unwrap_or(0);
    let method = args.method.single()?;
    let param = args.param.clone().ok_or_else(|| {
        Error::Usage("--param is required (or --noise-grid for a noise sweep)".into())
    })?;
    let grid = args
        .grid
        .clone()
        .ok_or_else(|| Error::Usage("--grid is required".into()))?;
    let (train, test) = load_split(&args.data, seed)?;
    let meta = metadata(
        "sweep",
        &grouped_hash(&args, &args.data, Some(&args.method))?,
        seed,
    );
    let dir = out_dir(&args.out);
    let format: OutputFormat = args.format.map(Into::into).unwrap_or_default();
    let timing = args.timing.unwrap_or(false);

    let result = eval::sweep(
        method,
        &param,
        &grid,
        &train,
        &test,
        &args.method.params(seed),
    )?;
    write_with(&dir.join(format!("sweep.{}", format.extension())), |buf| {
        write_reports(
            &result.reports,
            format,
            timing,
            std::slice::from_ref(&meta),
            buf,
        )
    })?;
    write_with(&dir.join(format!("mse_vs_{param}.csv")), |buf| {
        writeln!(buf, "# {meta}")?;
        writeln!(buf, "{param},mse")?;
        for (v, r) in result.grid.iter().zip(&result.reports) {
            writeln!(buf, "{v},{}", r.mse)?;
        }
        Ok(())
    })?;
    if timing {
        write_with(&dir.join(format!("runtime_vs_{param}.csv")), |buf| {
            writeln!(buf, "# {meta}")?;
            writeln!(buf, "{param},runtime_seconds")?;
            for (v, r) in result.grid.iter().zip(&result.reports) {
                writeln!(buf, "{v},{}", r.runtime_seconds)?;
            }
            Ok(())
        })?;
    }
    let best = result.best_report();
    let summary = serde_json::json!({
        "metadata": meta,
        "method": method,
        "parameter": param,
        "best_value": result.best_value,
        "mse": best.mse,
        "classification_error": best.classification_error,
    });
    write_atomic(
        &dir.join("best.json"),
        format!("{}\n", serde_json::to_string_pretty(&summary)?).as_bytes(),
    )?;
    write_reports(&result.reports, format, timing, &[], out)?;
    writeln!(
        out,
        "best {param} = {} (mse {})",
        result.best_value, best.mse
    )?;
    Ok(())
}

fn noise_mode(args: SweepArgs, out: &mut impl Write) -> Result<()> {
    let defaults = SyntheticSpec::default();
    let seed = args.seed.unwrap_or(0);
    let spec = SyntheticSpec {
        num_experiments: args.experiments.unwrap_or(defaults.num_experiments),
        trials_per_experiment: args.trials.unwrap_or(defaults.trials_per_experiment),
        dim: args.model_dim.unwrap_or(defaults.dim),
        num_clusters: args.clusters.unwrap_or(defaults.num_clusters),
        noise_std: 0.0,
        seed,
    };
    spec.validate()?;
    let count = args.seeds.unwrap_or(10);
    if count == 0 {
        return Err(Error::Usage("--seeds must be >= 1".into()));
    }
    let config = NoiseSweepConfig {
        sigmas: args.noise_grid.clone().expect("noise mode"),
        t_grid: args
            .t_grid
            .clone()
            .unwrap_or_else(|| default_t_grid(spec.num_experiments)),
        seeds: (0..count as u64).map(|i| seed.wrapping_add(i)).collect(),
        metric: match args.metric {
            Some(MetricArg::Test) => Metric::Test,
            _ => Metric::Parameter,
        },
        train_fraction: args.data.train_fraction.unwrap_or(DEFAULT_TRAIN_FRACTION),
        spec,
    };
    let points = noise_sweep(&config)?;
    let meta = metadata("sweep", &grouped_hash(&args, &args.data, None)?, seed);
    let dir = out_dir(&args.out);
    write_with(&dir.join("mse_vs_noise.csv"), |buf| {
        writeln!(buf, "# {meta}")?;
        writeln!(buf, "sigma,snr_db,ir,cr,lor,asymptote")?;
        for p in &points {
            writeln!(
                buf,
                "{},{},{},{},{},{}",
                p.sigma, p.snr_db, p.ir, p.cr, p.lor_best, p.asymptote
            )?;
        }
        Ok(())
    })?;
    write_with(&dir.join("optimal_t.csv"), |buf| {
        writeln!(buf, "# {meta}")?;
        writeln!(buf, "sigma,snr_db,best_t")?;
        for p in &points {
            writeln!(buf, "{},{},{}", p.sigma, p.snr_db, p.best_t)?;
        }
        Ok(())
    })?;
    write_with(&dir.join("lor_vs_t.csv"), |buf| {
        writeln!(buf, "# {meta}")?;
        writeln!(buf, "sigma,t,mse")?;
        for p in &points {
            for (t, v) in config.t_grid.iter().zip(&p.lor_curve) {
                writeln!(buf, "{},{t},{v}", p.sigma)?;
            }
        }
        Ok(())
    })?;
    writeln!(out, "sigma,snr_db,ir,cr,lor,best_t,asymptote")?;
    for p in &points {
        writeln!(
            out,
            "{},{:.2},{:.6e},{:.6e},{:.6e},{},{:.6e}",
            p.sigma, p.snr_db, p.ir, p.cr, p.lor_best, p.best_t, p.asymptote
        )?;
    }
    Ok(())
}

/// `method=` and `params=` lines from an estimate file's `#` header.
fn read_estimate_header(text: &str) -> Result<(Option<Method>, BTreeMap<String, Value>)> {
    let mut method = None;
    let mut params = BTreeMap::new();
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        let line = line.trim_start_matches('#').trim();
        if let Some(m) = line.strip_prefix("method=") {
            method = Some(m.parse()?);
        } else if let Some(p) = line.strip_prefix("params=") {
            params = serde_json::from_str(p)?;
        }
    }
    Ok((method, params))
}

fn cmd_eval(args: EvalArgs, out: &mut impl Write) -> Result<()> {
    let path = args
        .estimates
        .as_ref()
        .ok_or_else(|| Error::Usage("--estimates is required".into()))?;
    let text = std::fs::read_to_string(path)?;
    let (file_method, params) = read_estimate_header(&text)?;
    let estimates = EstimateSet::read_csv(text.as_bytes())?;
    let method = match &args.method {
        Some(m) => m.parse()?,
        None => file_method
            .ok_or_else(|| Error::Usage("estimate file names no method; pass --method".into()))?,
    };
    let seed = args.seed.unwrap_or(0);
    let test = if let Some(test) = &args.data.test {
        load_dataset(test, Some(estimates.dim()))?
    } else if let Some(data) = &args.data.data {
        let all = load_dataset(data, Some(estimates.dim()))?;
        let spec = SplitSpec::new(
            args.data.train_fraction.unwrap_or(DEFAULT_TRAIN_FRACTION),
            seed,
        )?;
        train_test_split(&all, &spec)?.1
    } else {
        return Err(Error::Usage(
            "give --test, or --data with the split used for fitting".into(),
        ));
    };
    let report = eval::score(method, params, &estimates, &test)?;
    let format: OutputFormat = args.format.map(Into::into).unwrap_or_default();
    if let Some(path) = &args.out {
        let meta = metadata("eval", &grouped_hash(&args, &args.data, None)?, seed);
        write_with(path, |buf| {
            write_reports(std::slice::from_ref(&report), format, false, &[meta], buf)
        })?;
    }
    write_reports(&[report], format, false, &[], out)?;
    Ok(())
}
