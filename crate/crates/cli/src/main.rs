//! `stdf`: estimation, testing, simulation and replication studies for
//! parametric stable tail dependence functions.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use stdf::estimator::{default_weights, fit_from, starting_point};
use stdf::harness::{run_study, StudyConfig};
use stdf::inference::{attach_covariance, submodel_test, Hypothesis};
use stdf::quadrature::CubatureSpec;
use stdf::samplers::{sample_family_with, substream, FactorForm, FactorSampler};
use stdf::{compute_ranks, EmpiricalStdf, Error, ErrorKind, EstimationConfig, Family, Sample, WeightSpec};

#[derive(Parser)]
#[command(name = "stdf", version, about = "M-estimation of stable tail dependence functions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a parametric model at one or several k.
    Estimate(EstimateArgs),
    /// Wald-type test of a submodel, e.g. symmetry `eta2=0`.
    TestSubmodel(TestArgs),
    /// Evaluate the empirical tail dependence function at given points.
    StdfEval(EvalArgs),
    /// Draw a sample from a max-stable model.
    Simulate(SimulateArgs),
    /// Run a replication study described by a TOML file.
    Study(StudyArgs),
}

#[derive(Args, Clone)]
struct FitArgs {
    /// CSV with a header row and one numeric column per variable.
    #[arg(long)]
    data: PathBuf,
    /// `logistic`, `alog` or `factor:R`.
    #[arg(long)]
    model: String,
    #[arg(long, conflicts_with = "k_grid")]
    k: Option<usize>,
    /// Comma-separated list of k.
    #[arg(long, value_delimiter = ',')]
    k_grid: Option<Vec<usize>>,
    /// Weight functions, e.g. "x1;x2;1"; the model default when absent.
    #[arg(long)]
    g: Option<String>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Total optimizer runs per fit.
    #[arg(long)]
    restarts: Option<usize>,
    /// Points per randomization for the covariance integrals.
    #[arg(long)]
    sigma_points: Option<usize>,
    /// Write JSON here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    fit: FitArgs,
    /// Skip standard errors.
    #[arg(long)]
    no_covariance: bool,
}

#[derive(Args)]
struct TestArgs {
    #[command(flatten)]
    fit: FitArgs,
    /// Hypothesis as comma-separated `name=value` pairs.
    #[arg(long)]
    null: String,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    k: usize,
    /// CSV of evaluation points with the same number of columns as the data.
    #[arg(long)]
    points: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// `logistic`, `alog` or `factor:R`.
    #[arg(long)]
    model: String,
    /// Parameter vector: theta; theta,eta1,eta2; or the stacked first R-1
    /// loading columns.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    theta: Vec<f64>,
    #[arg(long)]
    d: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Factor models: `max` or `sum`.
    #[arg(long, default_value = "max")]
    form: String,
    /// Noise scale of the `sum` form.
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long)]
    config: PathBuf,
    /// Tidy CSV report; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON summary with the resolved configuration.
    #[arg(long)]
    json: Option<PathBuf>,
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, kind) = match e.kind() {
            ErrorKind::Data => (2, "data"),
            ErrorKind::Fit => (3, "fit"),
            ErrorKind::Inference => (4, "inference"),
        };
        Failure {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Error::from(e).into()
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Error::from(e).into()
    }
}

type CliResult = Result<(), Failure>;

fn output(path: &Option<PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn write_json<T: Serialize>(path: &Option<PathBuf>, value: &T) -> CliResult {
    let mut w = output(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

struct Prepared {
    sample: Sample,
    template: Family,
    g: WeightSpec,
    config: EstimationConfig,
    k_grid: Vec<usize>,
}

fn prepare(args: &FitArgs) -> Result<Prepared, Failure> {
    let sample = Sample::from_csv_path(&args.data)?;
    let template = Family::template(&args.model, sample.d())?;
    let g = match &args.g {
        Some(text) => WeightSpec::parse(text, sample.d())?,
        None => default_weights(&template),
    };
    let k_grid = match (&args.k, &args.k_grid) {
        (Some(k), _) => vec![*k],
        (None, Some(grid)) if !grid.is_empty() => grid.clone(),
        _ => return Err(Error::Config("give --k or --k-grid".into()).into()),
    };
    let mut config = EstimationConfig::default().with_seed(args.seed);
    if let Some(r) = args.restarts {
        config.optimizer.restarts = r;
    }
    if let Some(p) = args.sigma_points {
        config.sigma_cubature = CubatureSpec::default().fixed(p);
    }
    for &k in &k_grid {
        config.clone().with_k(k).validate(sample.n())?;
    }
    Ok(Prepared {
        sample,
        template,
        g,
        config,
        k_grid,
    })
}

fn resolved(args: &FitArgs, p: &Prepared) -> serde_json::Value {
    json!({
        "data": args.data,
        "model": args.model,
        "n": p.sample.n(),
        "d": p.sample.d(),
        "columns": p.sample.columns(),
        "k_grid": p.k_grid,
        "g": p.g.to_string(),
        "estimation": p.config,
    })
}

fn estimate(args: &EstimateArgs) -> CliResult {
    let p = prepare(&args.fit)?;
    let ranks = compute_ranks(&p.sample);
    let mut results = Vec::new();
    let mut start = None;
    for &k in &p.k_grid {
        let cfg = p.config.clone().with_k(k);
        let s = match (&p.template, &start) {
            (Family::Factor(_), Some(s)) => s,
            _ => &*start.insert(starting_point(&ranks, &p.template, &cfg)?),
        };
        let mut r = fit_from(&ranks, &p.template, &p.g, &cfg, s)?;
        if !args.no_covariance {
            attach_covariance(&mut r, &p.g, &cfg)?;
        }
        eprintln!("{}", summary_line(&r));
        results.push(r);
    }
    write_json(
        &args.fit.out,
        &json!({ "command": "estimate", "config": resolved(&args.fit, &p), "results": results }),
    )
}

fn summary_line(r: &stdf::EstimateResult) -> String {
    let se = r.std_errors.clone().unwrap_or_default();
    let parts: Vec<String> = r
        .param_names
        .iter()
        .zip(&r.theta)
        .enumerate()
        .map(|(i, (n, t))| match se.get(i) {
            Some(s) => format!("{n}={t:.4} ({s:.4})"),
            None => format!("{n}={t:.4}"),
        })
        .collect();
    format!("k={:<5} Q={:.3e} {}", r.k, r.q_value, parts.join(" "))
}

fn test_submodel(args: &TestArgs) -> CliResult {
    let p = prepare(&args.fit)?;
    let hypothesis = Hypothesis::parse(&args.null, &p.template.param_names())?;
    let ranks = compute_ranks(&p.sample);
    let mut results = Vec::new();
    for &k in &p.k_grid {
        let cfg = p.config.clone().with_k(k);
        let start = starting_point(&ranks, &p.template, &cfg)?;
        let fit = fit_from(&ranks, &p.template, &p.g, &cfg, &start)?;
        let t = submodel_test(&fit, &hypothesis, &p.g, &cfg)?;
        eprintln!("k={:<5} S={:.3} p={:.3}", k, t.statistic, t.p_value);
        results.push(t);
    }
    write_json(
        &args.fit.out,
        &json!({
            "command": "test-submodel",
            "config": resolved(&args.fit, &p),
            "null": args.null,
            "results": results,
        }),
    )
}

fn stdf_eval(args: &EvalArgs) -> CliResult {
    let sample = Sample::from_csv_path(&args.data)?;
    let (header, points) = read_points(&args.points)?;
    if header.len() != sample.d() {
        return Err(Error::InvalidSample(format!("points have {} columns, data {}", header.len(), sample.d())).into());
    }
    let emp = EmpiricalStdf::from_sample(&sample, args.k)?;
    let mut w = csv::Writer::from_writer(output(&args.out)?);
    let mut out_header = header;
    out_header.push("stdf".into());
    w.write_record(&out_header).map_err(Error::from)?;
    for x in &points {
        let mut rec: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        rec.push(emp.eval(x).to_string());
        w.write_record(&rec).map_err(Error::from)?;
    }
    w.flush()?;
    Ok(())
}

/// Header and rows of a point file; any number of rows, non-negative entries.
fn read_points(path: &PathBuf) -> stdf::Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::InvalidSample(format!(
                "point {} has {} fields",
                row + 1,
                rec.len()
            )));
        }
        let mut x = Vec::with_capacity(rec.len());
        for (col, field) in rec.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| Error::MissingValue {
                row: row + 1,
                col: col + 1,
            })?;
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidSample(format!(
                    "point {} has coordinate {v}; need finite and non-negative",
                    row + 1
                )));
            }
            x.push(v);
        }
        rows.push(x);
    }
    Ok((header, rows))
}

fn simulate(args: &SimulateArgs) -> CliResult {
    let family = Family::from_model(&args.model, args.d, &args.theta)?;
    let mut rng = substream(args.seed, 0);
    let sample = match (&family, args.form.as_str()) {
        (Family::Factor(m), "sum") => {
            FactorSampler::from_model(m, FactorForm::Sum { noise: args.noise }).sample_with(args.n, &mut rng)?
        }
        (_, "max") => sample_family_with(&family, args.n, &mut rng)?,
        (_, other) => return Err(Error::Config(format!("unknown form {other:?}")).into()),
    };
    let columns: Vec<String> = (1..=args.d).map(|j| format!("x{j}")).collect();
    let sample = Sample::with_columns(sample.as_slice().to_vec(), sample.n(), sample.d(), columns)?;
    sample.write_csv(output(&args.out)?)?;
    Ok(())
}

fn study(args: &StudyArgs) -> CliResult {
    let config = StudyConfig::from_path(&args.config)?;
    let report = run_study(&config)?;
    report.write_csv(output(&args.out)?)?;
    if let Some(path) = &args.json {
        let mut w = output(&Some(path.clone()))?;
        w.write_all(report.to_json()?.as_bytes())?;
        writeln!(w)?;
        w.flush()?;
    }
    if report.flagged {
        eprintln!("warning: more than 10% of fits failed at some k");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Estimate(a) => estimate(a),
        Command::TestSubmodel(a) => test_submodel(a),
        Command::StdfEval(a) => stdf_eval(a),
        Command::Simulate(a) => simulate(a),
        Command::Study(a) => study(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", json!({ "error": f.kind, "message": f.message }));
            ExitCode::from(f.code)
        }
    }
}
