//! `convexa`: command-line front end over the core library.
//!
//! `compute` evaluates one functional on a body or measure spec, `verify`
//! runs an experiment suite and writes report.jsonl + summary.csv, `sweep`
//! tabulates a registry formula over a parameter grid, and `formulas` lists
//! that registry.
//!
//! Exit codes: 0 success, 1 at least one check failed, 2 configuration
//! error, 3 numeric error. Errors print one machine-readable JSON object to
//! stderr; every JSON artifact carries a `schema_version` field.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde_json::{json, Value};

use convexa_core::bodies::schema::BodySpec;
use convexa_core::bounds::{self, ArgValue, FormulaInfo};
use convexa_core::error::ErrorClass;
use convexa_core::functionals::{self, Bias, ProfileKind};
use convexa_core::harness::{self, report, CheckKind, ExperimentConfig, Verdict, SCHEMA_VERSION};
use convexa_core::measures::{
    centroid_body_support, psi_alpha_constant, LogConcaveMeasure, MeasureSpec,
};
use convexa_core::{Body, EstimateCI, GeomError, RngStream};

#[derive(Parser)]
#[command(name = "convexa", version, about = "Convex-body functionals, experiment suites, and bound sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one functional on a body or measure spec; prints an
    /// estimate with its standard error as JSON.
    Compute(ComputeArgs),
    /// Run an experiment suite; writes report.jsonl and summary.csv and
    /// prints a verdict table.
    Verify(VerifyArgs),
    /// Tabulate a bound formula over a parameter grid as CSV.
    Sweep(SweepArgs),
    /// List the bound-formula registry.
    Formulas,
}

#[derive(Args)]
struct ComputeArgs {
    /// Body spec: a JSON file path, or inline JSON starting with '{'.
    #[arg(long, value_name = "SPEC", conflicts_with = "measure")]
    body: Option<String>,
    /// Measure spec: a JSON file path, or inline JSON starting with '{'.
    #[arg(long, value_name = "SPEC")]
    measure: Option<String>,
    /// One of: mean_norm, mean_width, vrad, profile:w_k, profile:v_k,
    /// profile:w_k_minus, profile:v_k_minus, isotropic_constant,
    /// centroid_support, psi_alpha.
    #[arg(long)]
    functional: String,
    /// Sample budget (spherical draws or measure samples, per the functional).
    #[arg(long, default_value_t = 100_000)]
    samples: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Moment order for centroid_support; grid end for psi_alpha.
    #[arg(long)]
    q: Option<f64>,
    /// Direction for centroid_support: "e<i>" (1-based axis), comma-separated
    /// floats, or a JSON array. Default e1.
    #[arg(long)]
    dir: Option<String>,
    /// Subspace dimension for the profile functionals.
    #[arg(long)]
    k: Option<usize>,
    /// Moment-growth exponent for psi_alpha, in [1, 2].
    #[arg(long, default_value_t = 2.0)]
    alpha: f64,
}

#[derive(Args)]
struct VerifyArgs {
    /// Experiment suite: a JSON file holding one config object or an array.
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Output directory for report.jsonl and summary.csv.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Keep only experiments running this check (e.g. "santalo").
    #[arg(long, value_name = "CHECK")]
    only: Option<String>,
    /// Override every experiment's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker-thread cap; CONVEXA_WORKERS is the fallback. Results do not
    /// depend on it.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    /// Formula id from the registry (see `convexa formulas`).
    #[arg(long)]
    formula: String,
    /// JSON object mapping each parameter to a value or an array of values
    /// (arrays of arrays for vector parameters); rows are the full product.
    #[arg(long)]
    grid: String,
    /// CSV output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            return fail(&GeomError::InvalidConfig(e.to_string()));
        }
        Err(e) => {
            // --help / --version.
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    let result = match cli.command {
        Command::Compute(args) => compute(args),
        Command::Verify(args) => verify(args),
        Command::Sweep(args) => sweep(args),
        Command::Formulas => formulas(),
    };
    match result {
        Ok(code) => code,
        Err(e) => fail(&e),
    }
}

/// Stdout writes tolerate a closed pipe (`convexa ... | head`).
fn emit(text: &str) {
    let _ = std::io::stdout().write_all(text.as_bytes());
}

fn fail(e: &GeomError) -> ExitCode {
    let (class, code) = match e.class() {
        ErrorClass::Config => ("config", 2u8),
        ErrorClass::Numeric => ("numeric", 3u8),
    };
    let payload = json!({
        "schema_version": SCHEMA_VERSION,
        "error": e.to_string(),
        "class": class,
        "exit_code": code,
    });
    eprintln!("{payload}");
    ExitCode::from(code)
}

/// Spec flags accept inline JSON or a file path.
fn load_spec(arg: &str, what: &str) -> Result<String, GeomError> {
    if arg.trim_start().starts_with('{') {
        Ok(arg.to_string())
    } else {
        fs::read_to_string(arg)
            .map_err(|e| GeomError::InvalidConfig(format!("{what} spec {arg}: {e}")))
    }
}

fn body_subject(args: &ComputeArgs) -> Result<Body, GeomError> {
    let spec = args.body.as_deref().ok_or_else(|| {
        GeomError::InvalidConfig(format!("functional {} needs --body", args.functional))
    })?;
    BodySpec::from_json(&load_spec(spec, "body")?)?.build()
}

fn measure_subject(args: &ComputeArgs) -> Result<LogConcaveMeasure, GeomError> {
    let spec = args.measure.as_deref().ok_or_else(|| {
        GeomError::InvalidConfig(format!("functional {} needs --measure", args.functional))
    })?;
    MeasureSpec::from_json(&load_spec(spec, "measure")?)?.build()
}

/// "e3" (1-based axis), "0.6,0.8", or "[0.6, 0.8]".
fn parse_dir(text: &str, n: usize) -> Result<DVector<f64>, GeomError> {
    let bad = |why: String| GeomError::InvalidConfig(format!("direction \"{text}\": {why}"));
    let coords: Vec<f64> = if let Some(axis) = text.strip_prefix('e') {
        let i: usize = axis.parse().map_err(|_| bad("axis index must be an integer".into()))?;
        if !(1..=n).contains(&i) {
            return Err(bad(format!("axis index out of range 1..={n}")));
        }
        let mut v = vec![0.0; n];
        v[i - 1] = 1.0;
        v
    } else if text.trim_start().starts_with('[') {
        serde_json::from_str(text).map_err(|e| bad(e.to_string()))?
    } else {
        text.split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| bad(e.to_string()))?
    };
    if coords.len() != n {
        return Err(bad(format!("expected {n} coordinates, got {}", coords.len())));
    }
    if coords.iter().any(|c| !c.is_finite()) || coords.iter().all(|c| *c == 0.0) {
        return Err(bad("coordinates must be finite and not all zero".into()));
    }
    Ok(DVector::from_vec(coords))
}

fn bias_value(bias: Bias) -> Value {
    serde_json::to_value(bias).expect("bias serializes")
}

fn compute(args: ComputeArgs) -> Result<ExitCode, GeomError> {
    let stream = RngStream::new(args.seed, 0).derive("compute");
    let samples = args.samples;
    let name = args.functional.as_str();
    let (est, extras): (EstimateCI, Vec<(&str, Value)>) = match name {
        "mean_norm" => (functionals::mean_norm(&body_subject(&args)?, samples, stream)?, vec![]),
        "mean_width" => (functionals::mean_width(&body_subject(&args)?, samples, stream)?, vec![]),
        "vrad" => (functionals::vrad(&body_subject(&args)?, samples, stream)?, vec![]),
        _ if name.starts_with("profile:") => {
            let kind = match &name["profile:".len()..] {
                "w_k" => ProfileKind::WK,
                "v_k" => ProfileKind::VK,
                "w_k_minus" => ProfileKind::WKMinus,
                "v_k_minus" => ProfileKind::VKMinus,
                other => {
                    return Err(GeomError::InvalidConfig(format!(
                        "unknown profile kind \"{other}\"; known: w_k, v_k, w_k_minus, v_k_minus"
                    )));
                }
            };
            let k = args.k.ok_or_else(|| {
                GeomError::InvalidConfig("profile functionals need --k".into())
            })?;
            let body = body_subject(&args)?;
            let curve = functionals::volumetric_profile(&body, kind, &[k], 32, samples, stream)?;
            let (_, est) = curve.points[0];
            (est, vec![("k", k.into()), ("bias", bias_value(curve.bias))])
        }
        "isotropic_constant" => {
            (measure_subject(&args)?.isotropic_constant(samples as usize, stream)?, vec![])
        }
        "centroid_support" => {
            let q = args.q.ok_or_else(|| {
                GeomError::InvalidConfig("centroid_support needs --q".into())
            })?;
            let measure = measure_subject(&args)?;
            let dir = parse_dir(args.dir.as_deref().unwrap_or("e1"), measure.dim())?;
            (centroid_body_support(&measure, q, &dir, samples as usize, stream)?, vec![])
        }
        "psi_alpha" => {
            let measure = measure_subject(&args)?;
            let q_end = args.q.unwrap_or(16.0);
            if !(q_end >= 2.0) {
                return Err(GeomError::InvalidConfig(format!(
                    "psi_alpha grid end --q must be >= 2, got {q_end}"
                )));
            }
            let mut q_grid = vec![2.0];
            while *q_grid.last().unwrap() * 2.0 <= q_end {
                q_grid.push(q_grid.last().unwrap() * 2.0);
            }
            let psi =
                psi_alpha_constant(&measure, args.alpha, &q_grid, 50, samples as usize, stream)?;
            (
                psi.estimate,
                vec![("bias", bias_value(psi.bias)), ("attained_q", psi.attained_q.into())],
            )
        }
        other => {
            return Err(GeomError::InvalidConfig(format!(
                "unknown functional \"{other}\"; known: mean_norm, mean_width, vrad, \
                 profile:w_k, profile:v_k, profile:w_k_minus, profile:v_k_minus, \
                 isotropic_constant, centroid_support, psi_alpha"
            )));
        }
    };
    let mut obj = match serde_json::to_value(est) {
        Ok(Value::Object(m)) => m,
        _ => unreachable!("estimate serializes to an object"),
    };
    obj.insert("schema_version".into(), SCHEMA_VERSION.into());
    obj.insert("functional".into(), name.into());
    for (key, value) in extras {
        obj.insert(key.into(), value);
    }
    emit(&format!("{}\n", Value::Object(obj)));
    Ok(ExitCode::SUCCESS)
}

const ALL_CHECKS: &[CheckKind] = &[
    CheckKind::Sandwich,
    CheckKind::Santalo,
    CheckKind::VkMonotone,
    CheckKind::ZqInclusions,
    CheckKind::ZnEquiv,
    CheckKind::ZqVradScaling,
    CheckKind::MZqScaling,
    CheckKind::ProjectionWitness,
    CheckKind::CoveringProfile,
    CheckKind::ZqProjectionProfile,
    CheckKind::PsiAlphaSuite,
    CheckKind::ConditionalSuite,
    CheckKind::LowMstarCrosscheck,
];

fn parse_check(name: &str) -> Result<CheckKind, GeomError> {
    ALL_CHECKS.iter().copied().find(|c| c.name() == name).ok_or_else(|| {
        let known: Vec<&str> = ALL_CHECKS.iter().map(|c| c.name()).collect();
        GeomError::InvalidConfig(format!(
            "unknown check \"{name}\"; known: {}",
            known.join(", ")
        ))
    })
}

fn parse_suite(text: &str) -> Result<Vec<ExperimentConfig>, GeomError> {
    let err = |e: serde_json::Error| GeomError::InvalidConfig(format!("experiment config: {e}"));
    if text.trim_start().starts_with('[') {
        serde_json::from_str(text).map_err(err)
    } else {
        serde_json::from_str::<ExperimentConfig>(text).map(|c| vec![c]).map_err(err)
    }
}

/// Applies `--workers`, falling back to CONVEXA_WORKERS. Grid points carry
/// their own derived streams, so the cap never changes results.
fn init_workers(flag: Option<usize>) -> Result<(), GeomError> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("CONVEXA_WORKERS") {
            Ok(s) if s.trim().is_empty() => None,
            Ok(s) => Some(s.trim().parse::<usize>().map_err(|_| {
                GeomError::InvalidConfig(format!(
                    "CONVEXA_WORKERS must be a positive integer, got \"{s}\""
                ))
            })?),
            Err(_) => None,
        },
    };
    let Some(n) = n else { return Ok(()) };
    if n == 0 {
        return Err(GeomError::InvalidConfig("workers must be >= 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| GeomError::InvalidConfig(format!("worker pool: {e}")))
}

fn verify(args: VerifyArgs) -> Result<ExitCode, GeomError> {
    init_workers(args.workers)?;
    let text = fs::read_to_string(&args.config).map_err(|e| {
        GeomError::InvalidConfig(format!("config {}: {e}", args.config.display()))
    })?;
    let mut configs = parse_suite(&text)?;
    if let Some(only) = &args.only {
        let kind = parse_check(only)?;
        configs.retain(|c| c.check == kind);
        if configs.is_empty() {
            return Err(GeomError::InvalidConfig(format!(
                "no experiment in the suite runs check \"{only}\""
            )));
        }
    }
    if let Some(seed) = args.seed {
        for cfg in &mut configs {
            cfg.seed = seed;
        }
    }
    fs::create_dir_all(&args.out).map_err(|e| {
        GeomError::InvalidConfig(format!("out dir {}: {e}", args.out.display()))
    })?;
    let records = harness::run_suite(&configs)?;
    report::write_jsonl(&records, &args.out.join("report.jsonl"))?;
    report::write_summary_csv(&records, &args.out.join("summary.csv"))?;
    emit(&report::verdict_table(&records));
    if records.iter().any(|r| r.verdict == Verdict::Fail) {
        Ok(ExitCode::from(1))
    } else {
        Ok(ExitCode::SUCCESS)
    }
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One grid axis: the values a single parameter ranges over.
enum Axis {
    Scalar(Vec<f64>),
    Vector(Vec<Vec<f64>>),
}

impl Axis {
    fn len(&self) -> usize {
        match self {
            Axis::Scalar(v) => v.len(),
            Axis::Vector(v) => v.len(),
        }
    }

    fn arg(&self, i: usize) -> ArgValue {
        match self {
            Axis::Scalar(v) => ArgValue::Scalar(v[i]),
            Axis::Vector(v) => ArgValue::Vector(v[i].clone()),
        }
    }

    fn cell(&self, i: usize) -> String {
        match self {
            Axis::Scalar(v) => v[i].to_string(),
            Axis::Vector(v) => {
                let inner: Vec<String> = v[i].iter().map(f64::to_string).collect();
                csv_field(&format!("[{}]", inner.join(",")))
            }
        }
    }
}

fn number(v: &Value, name: &str) -> Result<f64, GeomError> {
    v.as_f64().ok_or_else(|| {
        GeomError::InvalidConfig(format!("grid axis {name}: expected a number, got {v}"))
    })
}

fn scalar_axis(v: &Value, name: &str) -> Result<Axis, GeomError> {
    let values = match v {
        Value::Array(items) => {
            items.iter().map(|x| number(x, name)).collect::<Result<Vec<f64>, _>>()?
        }
        other => vec![number(other, name)?],
    };
    if values.is_empty() {
        return Err(GeomError::InvalidConfig(format!("grid axis {name} is empty")));
    }
    Ok(Axis::Scalar(values))
}

fn vector_axis(v: &Value, name: &str) -> Result<Axis, GeomError> {
    let Value::Array(items) = v else {
        return Err(GeomError::InvalidConfig(format!(
            "grid axis {name}: expected an array (or array of arrays), got {v}"
        )));
    };
    if items.is_empty() {
        return Err(GeomError::InvalidConfig(format!("grid axis {name} is empty")));
    }
    let values = if items.iter().all(Value::is_array) {
        items
            .iter()
            .map(|row| {
                row.as_array().unwrap().iter().map(|x| number(x, name)).collect()
            })
            .collect::<Result<Vec<Vec<f64>>, _>>()?
    } else {
        vec![items.iter().map(|x| number(x, name)).collect::<Result<Vec<f64>, _>>()?]
    };
    Ok(Axis::Vector(values))
}

fn sweep(args: SweepArgs) -> Result<ExitCode, GeomError> {
    let info: &FormulaInfo =
        bounds::REGISTRY.iter().find(|f| f.id == args.formula).ok_or_else(|| {
            let known: Vec<&str> = bounds::REGISTRY.iter().map(|f| f.id).collect();
            GeomError::InvalidConfig(format!(
                "unknown formula \"{}\"; known: {}",
                args.formula,
                known.join(", ")
            ))
        })?;
    let grid: serde_json::Map<String, Value> =
        serde_json::from_str(&args.grid).map_err(|e| {
            GeomError::InvalidConfig(format!("--grid must be a JSON object: {e}"))
        })?;
    for key in grid.keys() {
        if !info.scalar_params.contains(&key.as_str())
            && !info.vector_params.contains(&key.as_str())
        {
            return Err(GeomError::InvalidConfig(format!(
                "formula {} has no parameter \"{key}\"",
                info.id
            )));
        }
    }
    let lookup = |name: &str| {
        grid.get(name).ok_or_else(|| {
            GeomError::InvalidConfig(format!("grid is missing parameter \"{name}\""))
        })
    };
    let mut axes: Vec<(&str, Axis)> = Vec::new();
    for &name in info.scalar_params {
        axes.push((name, scalar_axis(lookup(name)?, name)?));
    }
    for &name in info.vector_params {
        axes.push((name, vector_axis(lookup(name)?, name)?));
    }

    let mut out = String::new();
    for (name, _) in &axes {
        out.push_str(name);
        out.push(',');
    }
    out.push_str("value,flags\n");

    // Odometer over the axes, last parameter fastest.
    let mut idx = vec![0usize; axes.len()];
    loop {
        let mut call: BTreeMap<String, ArgValue> = BTreeMap::new();
        for ((name, axis), &i) in axes.iter().zip(&idx) {
            call.insert((*name).to_string(), axis.arg(i));
        }
        let bound = bounds::evaluate(info.id, &call)?;
        for ((_, axis), &i) in axes.iter().zip(&idx) {
            out.push_str(&axis.cell(i));
            out.push(',');
        }
        out.push_str(&bound.value.to_string());
        out.push(',');
        out.push_str(&csv_field(&bound.flags.join(";")));
        out.push('\n');

        let mut pos = axes.len();
        loop {
            if pos == 0 {
                break;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < axes[pos].1.len() {
                break;
            }
            idx[pos] = 0;
        }
        if idx.iter().all(|&i| i == 0) {
            break;
        }
    }

    match &args.out {
        Some(path) => fs::write(path, out).map_err(|e| {
            GeomError::InvalidConfig(format!("out file {}: {e}", path.display()))
        })?,
        None => emit(&out),
    }
    Ok(ExitCode::SUCCESS)
}

fn formulas() -> Result<ExitCode, GeomError> {
    let payload = json!({
        "schema_version": SCHEMA_VERSION,
        "formulas": bounds::REGISTRY,
    });
    emit(&format!("{payload}\n"));
    Ok(ExitCode::SUCCESS)
}
