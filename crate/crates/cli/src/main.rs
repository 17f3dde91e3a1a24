//! `hdbf`: two-sample mean tests on CSV data and the Monte-Carlo harness.
//!
//! Exit status is 0 on success, 2 on usage errors and 1 on data or runtime
//! errors. `HDBF_THREADS` caps the number of worker threads.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hdbf::io::{load_group, pairs_csv, report_csv, test_result_csv, CsvSpec};
use hdbf::parallel::with_threads;
use hdbf::randomization::{DEFAULT_ALPHA, DEFAULT_RESAMPLES};
use hdbf::simulation::{
    gamma_mixture_weights, qq_pairs, resampled_null_sizes, roc_curve, run_method, run_power_experiment, run_size_experiment,
    ExperimentReport, Model, ModelSpec, QqReference, DEFAULT_REPS, DEFAULT_SIM_RESAMPLES,
};
use hdbf::{DataMatrix, Error, Method, RngSeed};

#[derive(Parser)]
#[command(name = "hdbf", version, about = "High-dimensional two-sample mean tests with unequal covariances")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test equality of the mean vectors of two groups stored as CSV files.
    Test(TestArgs),
    /// Empirical size (beta = 0) or power of test procedures on a simulation model.
    Simulate(SimulateArgs),
    /// Quantile pairs of the standardized null statistic against a reference law.
    Qq(QqArgs),
    /// Power as a function of the nominal level.
    Roc(RocArgs),
    /// Size of each procedure on null data resampled from two real groups.
    ResampleSize(ResampleArgs),
}

#[derive(Args)]
struct InputArgs {
    #[arg(long)]
    group1: PathBuf,
    #[arg(long)]
    group2: PathBuf,
    /// The first line of each file is a header.
    #[arg(long)]
    header: bool,
    /// Field delimiter: a single character, or `tab`.
    #[arg(long, default_value = ",", value_parser = parse_delimiter)]
    delimiter: u8,
    /// Files store variables in rows and observations in columns.
    #[arg(long)]
    transpose: bool,
}

#[derive(Args)]
struct ModelArgs {
    /// I, II, III, IV or gamma:G.
    #[arg(long, value_parser = parse_model)]
    model: Model,
    #[arg(long)]
    n1: usize,
    #[arg(long)]
    n2: usize,
    #[arg(long)]
    p: usize,
}

#[derive(Args)]
struct TestArgs {
    #[command(flatten)]
    input: InputArgs,
    /// NEW, CQ, EB, WB, CHI2_TCQ, CHI2_NORM, a comma-separated list, or `all`.
    #[arg(long, default_value = "NEW", value_parser = parse_methods)]
    method: Methods,
    #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
    b: usize,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Signal-to-noise ratio; 0 gives an empirical size.
    #[arg(long, default_value_t = 0.0)]
    beta: f64,
    #[arg(long, default_value_t = DEFAULT_REPS)]
    reps: usize,
    #[arg(long, default_value_t = DEFAULT_SIM_RESAMPLES)]
    b: usize,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "all", value_parser = parse_methods)]
    methods: Methods,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct QqArgs {
    /// `qf` compares with the Gaussian quadratic form of `--model`; `gamma:G`
    /// uses the equicorrelated model and its chi-square mixture limit.
    #[arg(long, default_value = "qf")]
    mode: String,
    /// Required for `--mode qf`.
    #[arg(long, value_parser = parse_model)]
    model: Option<Model>,
    #[arg(long)]
    n1: usize,
    #[arg(long)]
    n2: usize,
    #[arg(long)]
    p: usize,
    #[arg(long, default_value_t = DEFAULT_REPS)]
    reps: usize,
    /// Reference sample size.
    #[arg(long, default_value_t = 100_000)]
    n_ref: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RocArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value = "NEW", value_parser = parse_method)]
    method: Method,
    #[arg(long, default_value_t = DEFAULT_REPS)]
    reps: usize,
    #[arg(long, default_value_t = DEFAULT_SIM_RESAMPLES)]
    b: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Comma-separated nominal levels; defaults to 0.01, 0.02, ..., 0.99.
    #[arg(long, value_delimiter = ',')]
    grid: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ResampleArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value = "all", value_parser = parse_methods)]
    methods: Methods,
    #[arg(long, default_value_t = DEFAULT_REPS)]
    reps: usize,
    #[arg(long, default_value_t = DEFAULT_SIM_RESAMPLES)]
    b: usize,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone)]
struct Methods(Vec<Method>);

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_methods(s: &str) -> Result<Methods, String> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(Methods(Method::ALL.to_vec()));
    }
    let mut out = vec![];
    for part in s.split(',') {
        let m = parse_method(part)?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    Ok(Methods(out))
}

fn parse_model(s: &str) -> Result<Model, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_delimiter(s: &str) -> Result<u8, String> {
    match s {
        "tab" | "\\t" | "\t" => Ok(b'\t'),
        _ if s.len() == 1 && s.is_ascii() => Ok(s.as_bytes()[0]),
        _ => Err(format!("delimiter must be a single ASCII character or `tab`, got `{s}`")),
    }
}

fn load(input: &InputArgs) -> Result<(DataMatrix, DataMatrix), Error> {
    let spec = |path: &PathBuf| {
        CsvSpec::new(path)
            .with_header(input.header)
            .with_delimiter(input.delimiter)
            .transposed(input.transpose)
    };
    let x1 = load_group(&spec(&input.group1))?;
    let x2 = load_group(&spec(&input.group2))?;
    if x1.cols() != x2.cols() {
        return Err(Error::DimensionMismatch(x1.cols(), x2.cols()));
    }
    Ok((x1, x2))
}

fn emit(out: &Option<PathBuf>, csv: &str) -> Result<(), Error> {
    match out {
        Some(path) => fs::write(path, csv).map_err(|e| Error::Io(format!("{}: {e}", path.display()))),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn summarize(report: &ExperimentReport) {
    for t in &report.tallies {
        println!(
            "model={} n1={} n2={} p={} beta={} method={} rate={:.4} se={:.4} errors={} elapsed={:.2}s",
            report.model,
            report.n1,
            report.n2,
            report.p,
            report.beta,
            t.method,
            report.rate(t.method).unwrap_or(0.0),
            report.se(t.method).unwrap_or(0.0),
            t.errors,
            report.elapsed.as_secs_f64()
        );
    }
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Test(a) => {
            let (x1, x2) = load(&a.input)?;
            let seed = RngSeed::new(a.seed);
            let results = a
                .method
                .0
                .iter()
                .map(|&m| run_method(m, &x1, &x2, a.b, a.alpha, seed.child(m.stream_tag())))
                .collect::<Result<Vec<_>, _>>()?;
            for r in &results {
                println!("{r}");
            }
            if a.out.is_some() {
                emit(&a.out, &test_result_csv(&results))?;
            }
        }
        Command::Simulate(a) => {
            let m = &a.model;
            let spec = ModelSpec::new(m.model, m.n1, m.n2, m.p)?;
            let report = if a.beta == 0.0 {
                run_size_experiment(&spec, &a.methods.0, a.reps, a.b, a.alpha, a.seed)?
            } else {
                run_power_experiment(&spec, a.beta, &a.methods.0, a.reps, a.b, a.alpha, a.seed)?
            };
            summarize(&report);
            emit(&a.out, &report_csv(&report))?;
        }
        Command::Qq(a) => {
            let (spec, reference) = if let Some(g) = a.mode.strip_prefix("gamma:") {
                let gamma: f64 = g
                    .parse()
                    .map_err(|_| Error::InvalidParameter { name: "mode", reason: format!("bad gamma in `{}`", a.mode) })?;
                let w = gamma_mixture_weights(gamma, a.p)?;
                (ModelSpec::new(Model::Gamma(gamma), a.n1, a.n2, a.p)?, QqReference::Mixture(w))
            } else if a.mode == "qf" {
                let model = a.model.ok_or(Error::InvalidParameter {
                    name: "model",
                    reason: "`--mode qf` needs `--model`".into(),
                })?;
                (ModelSpec::new(model, a.n1, a.n2, a.p)?, QqReference::QuadraticForm)
            } else {
                return Err(Error::InvalidParameter {
                    name: "mode",
                    reason: format!("expected `qf` or `gamma:G`, got `{}`", a.mode),
                });
            };
            let pairs = qq_pairs(&spec, &reference, a.reps, a.seed, a.n_ref)?;
            let max_gap = pairs.iter().map(|(e, r)| (e - r).abs()).fold(0.0, f64::max);
            println!("qq mode={} model={} pairs={} max_abs_gap={max_gap:.4}", a.mode, spec.model(), pairs.len());
            emit(&a.out, &pairs_csv(("empirical", "reference"), &pairs))?;
        }
        Command::Roc(a) => {
            let m = &a.model;
            let spec = ModelSpec::new(m.model, m.n1, m.n2, m.p)?;
            let grid = if a.grid.is_empty() { (1..100).map(|i| i as f64 / 100.0).collect() } else { a.grid };
            let curve = roc_curve(&spec, a.beta, a.method, a.reps, a.b, a.seed, &grid)?;
            let at5 = curve.iter().find(|(l, _)| (l - 0.05).abs() < 1e-12).map(|c| c.1);
            match at5 {
                Some(p) => println!("roc method={} beta={} points={} power@0.05={p:.4}", a.method, a.beta, curve.len()),
                None => println!("roc method={} beta={} points={}", a.method, a.beta, curve.len()),
            }
            emit(&a.out, &pairs_csv(("alpha", "power"), &curve))?;
        }
        Command::ResampleSize(a) => {
            let (x1, x2) = load(&a.input)?;
            let report = resampled_null_sizes(&x1, &x2, &a.methods.0, a.reps, a.b, a.alpha, a.seed)?;
            summarize(&report);
            emit(&a.out, &report_csv(&report))?;
        }
    }
    Ok(())
}

fn threads() -> usize {
    std::env::var("HDBF_THREADS").ok().and_then(|v| v.trim().parse().ok()).unwrap_or(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match with_threads(threads(), || run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
