//! Command-line front end. Progress goes to stderr; data goes to files.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 internal invariant
//! violation.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::datasets::{make_folds, rescale_minmax, Dataset};
use crate::error::Error;
use crate::harness::{
    aggregate, export_results, run_cv_experiment, run_sweep, sha256_hex, RunManifest, SweepConfig, SweepSpace,
    PAPER_FRACTIONS,
};
use crate::learning::fit_with;
use crate::metrics::{accuracy, clustering_error};
use crate::som::{Params, Phase, SomModel};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "altsom", version, about = "Semi-supervised self-organizing map with adaptive local thresholds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a map and write it as JSON.
    Fit(FitArgs),
    /// Write the cluster and predicted class of every row.
    Predict(PredictArgs),
    /// Score a trained map against labeled data.
    Evaluate(EvaluateArgs),
    /// Repeated k-fold cross-validation of one parameter setting.
    Cv(CvArgs),
    /// Latin Hypercube sweep with cross-validation at each setting.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Input file (.arff, otherwise comma-separated).
    #[arg(long)]
    data: PathBuf,
    /// Zero-based label column for delimited input (default: last).
    #[arg(long = "labels-column")]
    labels_column: Option<usize>,
    /// Skip min-max rescaling of the features.
    #[arg(long)]
    no_rescale: bool,
}

#[derive(Debug, Args)]
struct ParamArgs {
    /// JSON parameter file; flags below override its values.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    lp: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long = "age-wins")]
    age_wins: Option<u64>,
    #[arg(long = "e-b")]
    e_b: Option<f64>,
    #[arg(long = "e-n")]
    e_n: Option<f64>,
    /// Relevance slope.
    #[arg(long)]
    slope: Option<f64>,
    #[arg(long)]
    minwd: Option<f64>,
    #[arg(long)]
    epochs: Option<u32>,
    #[arg(long = "n-max")]
    n_max: Option<usize>,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Model output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Output CSV with one row per input row.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Optional JSON report path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CvArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated supervision fractions.
    #[arg(long, value_delimiter = ',')]
    fractions: Option<Vec<f64>>,
    #[arg(long, default_value_t = 3)]
    folds: usize,
    #[arg(long, default_value_t = 3)]
    repetitions: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    /// JSON sweep space (parameter ranges); defaults to the standard ranges.
    #[arg(long, alias = "ranges")]
    params: Option<PathBuf>,
    #[arg(long = "n-configs", default_value_t = 500)]
    n_configs: usize,
    /// Comma-separated supervision fractions.
    #[arg(long, value_delimiter = ',')]
    fractions: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long, default_value_t = 3)]
    folds: usize,
    #[arg(long, default_value_t = 3)]
    repetitions: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(msg: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: msg.into(),
        }
    }

    fn data(msg: impl Into<String>) -> Self {
        Failure {
            code: EXIT_DATA,
            message: msg.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidParam { .. } => EXIT_USAGE,
            Error::Dimension { .. }
            | Error::EmptyDataset
            | Error::LengthMismatch { .. }
            | Error::Parse { .. }
            | Error::Io { .. }
            | Error::Json(_) => EXIT_DATA,
            Error::EmptyMap | Error::Contract(_) => EXIT_INTERNAL,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult = std::result::Result<(), Failure>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Cv(a) => cmd_cv(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn load_data(args: &DataArgs) -> std::result::Result<(Dataset, Vec<u8>), Failure> {
    let bytes = std::fs::read(&args.data).map_err(|e| Failure::data(format!("{}: {e}", args.data.display())))?;
    let ds = Dataset::load(&args.data, args.labels_column).map_err(|e| match e {
        Error::Contract(m) => Failure::usage(m),
        other => Failure::data(format!("{}: {other}", args.data.display())),
    })?;
    let ds = if args.no_rescale { ds } else { rescale_minmax(&ds) };
    Ok((ds, bytes))
}

fn resolve_params(args: &ParamArgs, rows: usize) -> std::result::Result<Params, Failure> {
    let mut p = match &args.params {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<Params>(&text)
                .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?
        }
        None => Params::midpoint(rows),
    };
    macro_rules! apply {
        ($($field:ident <- $flag:ident),*) => {
            $(if let Some(v) = args.$flag { p.$field = v; })*
        };
    }
    apply!(lp <- lp, beta <- beta, age_wins <- age_wins, e_b <- e_b, e_n <- e_n, s <- slope,
           minwd <- minwd, epochs <- epochs, n_max <- n_max);
    p.validate()?;
    Ok(p)
}

fn parse_fractions(f: Option<Vec<f64>>) -> std::result::Result<Vec<f64>, Failure> {
    let f = f.unwrap_or_else(|| PAPER_FRACTIONS.to_vec());
    if f.is_empty() {
        return Err(Failure::usage("no supervision fractions given"));
    }
    if let Some(bad) = f.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Failure::usage(format!("fraction {bad} outside [0, 1]")));
    }
    Ok(f)
}

fn check_folds(k: usize, reps: usize, rows: usize) -> CliResult {
    if k < 2 || k > rows {
        return Err(Failure::usage(format!("--folds {k} invalid for {rows} rows")));
    }
    if reps == 0 {
        return Err(Failure::usage("--repetitions must be at least 1"));
    }
    Ok(())
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}

fn cmd_fit(a: FitArgs) -> CliResult {
    let (data, _) = load_data(&a.data)?;
    let params = resolve_params(&a.params, data.len())?;
    let started = Instant::now();
    let mut convergence_at = None;
    let mut observer = |phase: Phase, _: &_, _: &SomModel| {
        if phase == Phase::Convergence && convergence_at.is_none() {
            convergence_at = Some(Instant::now());
        }
    };
    let model = fit_with(&data, &params, a.seed, &mut observer)?;
    let finished = Instant::now();
    model.save(&a.out)?;
    let split = convergence_at.unwrap_or(finished);
    eprintln!(
        "nodes: {}  organization: {:.3}s  convergence: {:.3}s",
        model.len(),
        (split - started).as_secs_f64(),
        (finished - split).as_secs_f64()
    );
    Ok(())
}

fn load_model(path: &Path) -> std::result::Result<SomModel, Failure> {
    SomModel::load(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn check_dim(model: &SomModel, data: &Dataset) -> CliResult {
    if model.dim() != data.dim() {
        return Err(Failure::data(format!(
            "dimension mismatch: model expects m = {}, data has {} features",
            model.dim(),
            data.dim()
        )));
    }
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> CliResult {
    let model = load_model(&a.model)?;
    let (data, _) = load_data(&a.data)?;
    check_dim(&model, &data)?;
    let mut out = String::from("row,cluster,class\n");
    for (i, x) in data.rows().enumerate() {
        let cluster = model.assign_cluster(x)?;
        let class = model
            .predict_class(x)?
            .and_then(|c| model.class_names().get(c).cloned())
            .unwrap_or_default();
        let _ = writeln!(out, "{i},{cluster},{class}");
    }
    std::fs::write(&a.out, out).map_err(|e| Failure::data(format!("{}: {e}", a.out.display())))?;
    eprintln!("predicted {} rows", data.len());
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> CliResult {
    let model = load_model(&a.model)?;
    let (data, _) = load_data(&a.data)?;
    check_dim(&model, &data)?;
    let mut predicted = Vec::new();
    let mut clusters = Vec::new();
    let mut truth = Vec::new();
    for (i, x) in data.rows().enumerate() {
        let Some(label) = data.label(i) else { continue };
        predicted.push(
            model
                .predict_class(x)?
                .and_then(|c| model.class_names().get(c).cloned()),
        );
        clusters.push(model.assign_cluster(x)?);
        truth.push(data.class_names()[label].clone());
    }
    if truth.is_empty() {
        return Err(Failure::data("no labeled rows to evaluate"));
    }
    let acc = accuracy(&predicted, &truth)?;
    let ce = clustering_error(&clusters, &truth)?;
    println!("accuracy {acc}\nce {ce}\nnodes {}", model.len());
    if let Some(out) = &a.out {
        let report = serde_json::json!({ "accuracy": acc, "ce": ce, "nodes": model.len(), "rows": truth.len() });
        let text = serde_json::to_string_pretty(&report).map_err(Error::from)? + "\n";
        std::fs::write(out, text).map_err(|e| Failure::data(format!("{}: {e}", out.display())))?;
    }
    Ok(())
}

fn cmd_cv(a: CvArgs) -> CliResult {
    let (data, _) = load_data(&a.data)?;
    check_folds(a.folds, a.repetitions, data.len())?;
    let fractions = parse_fractions(a.fractions)?;
    let train_rows = data.len() - data.len() / a.folds;
    let params = resolve_params(&a.params, train_rows)?;
    let plan = make_folds(&data, a.folds, a.repetitions, a.seed)?;
    let started = Instant::now();
    let results = run_cv_experiment(&data, &params, &fractions, &plan, a.seed)?;
    let summary = aggregate(&results);
    export_results(&results, &summary, &dataset_name(&a.data.data), &a.out)?;
    for g in &summary.best_accuracy {
        eprintln!(
            "fraction {:>5}: accuracy {:.4} ± {:.4}  ce {:.4} ± {:.4}",
            g.supervision_fraction, g.mean_accuracy, g.std_accuracy, g.mean_ce, g.std_ce
        );
    }
    eprintln!("{} runs in {:.2}s", results.len(), started.elapsed().as_secs_f64());
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> CliResult {
    let (data, bytes) = load_data(&a.data)?;
    check_folds(a.folds, a.repetitions, data.len())?;
    let fractions = parse_fractions(a.fractions)?;
    if a.n_configs == 0 {
        return Err(Failure::usage("--n-configs must be at least 1"));
    }
    let space = match &a.params {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<SweepSpace>(&text)
                .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?
        }
        None => SweepSpace::default(),
    };
    space.validate().map_err(|e| Failure::usage(e.to_string()))?;

    let cfg = SweepConfig {
        n_configs: a.n_configs,
        fractions: fractions.clone(),
        folds: a.folds,
        repetitions: a.repetitions,
        master_seed: a.seed,
        workers: a.workers,
    };
    let started = Instant::now();
    eprintln!(
        "sweeping {} configs x {} folds x {} repetitions x {} fractions",
        a.n_configs,
        a.folds,
        a.repetitions,
        fractions.len()
    );
    let out = run_sweep(&data, &space, &cfg)?;
    let name = dataset_name(&a.data.data);
    export_results(&out.results, &out.summary, &name, &a.out)?;
    RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        dataset: name,
        dataset_sha256: sha256_hex(&bytes),
        master_seed: a.seed,
        n_configs: a.n_configs,
        fractions,
        folds: a.folds,
        repetitions: a.repetitions,
        space,
    }
    .write(&a.out)?;
    for g in &out.summary.best_ce {
        eprintln!(
            "fraction {:>5}: best ce {:.4} (config {}), best accuracy {:.4}",
            g.supervision_fraction,
            g.mean_ce,
            g.config_index,
            out.summary
                .best_accuracy
                .iter()
                .find(|b| b.supervision_fraction == g.supervision_fraction)
                .map_or(f64::NAN, |b| b.mean_accuracy)
        );
    }
    eprintln!("{} runs in {:.2}s", out.results.len(), started.elapsed().as_secs_f64());
    Ok(())
}
