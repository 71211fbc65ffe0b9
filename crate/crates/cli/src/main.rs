//! `mfusion` command-line front end.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use mfusion::benchmarks::{generate, AnalyticProblem, ProblemKind};
use mfusion::data::{load_csv, save_csv, MixedDataset};
use mfusion::evaluation::{
    compare, fit_model, random_search, run_ablation, FittedModel, MetricsReport, ModelConfig, ModelKind, SearchSpace,
};
use mfusion::{Error, Result};

#[derive(Parser)]
#[command(name = "mfusion", version, about = "Multi-fidelity data fusion toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an analytic benchmark: train.csv, test.csv, problem.json.
    Genbench(GenbenchArgs),
    /// Fit a model: model.json and history.csv.
    Fit(RunArgs),
    /// Score a fitted model on a test set: metrics.json.
    Eval(EvalArgs),
    /// Random hyperparameter search: trials.json and best.json.
    Tune(RunArgs),
    /// Export latent manifolds of a fitted model.
    Manifold(ManifoldArgs),
    /// Fit every configured model kind and score it: comparison.json.
    Compare(RunArgs),
    /// Pro-NDF ablation grid Base, V1..V4: ablation.json.
    Ablate(RunArgs),
}

#[derive(Args)]
struct GenbenchArgs {
    /// rational, wingweight or borehole.
    #[arg(long)]
    problem: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Override the training noise variance.
    #[arg(long)]
    noise_var: Option<f64>,
    /// Override the test set size.
    #[arg(long)]
    test_size: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model kind when the config does not name one.
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides every model seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Tuning budget (number of trials).
    #[arg(long)]
    budget: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    /// model.json written by `fit`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ManifoldArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Realizations per source (Pro-NDF).
    #[arg(long, default_value_t = 1000)]
    realizations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// JSON run configuration. Command-line flags override its fields.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    model: Option<ModelConfig>,
    /// Models for `compare`; defaults to every kind.
    models: Vec<ModelConfig>,
    space: SearchSpace,
    budget: Option<usize>,
    seed: Option<u64>,
    train: Option<PathBuf>,
    test: Option<PathBuf>,
    out: Option<PathBuf>,
    /// Realizations used to rank sources for ablation V4.
    manifold_realizations: Option<usize>,
}

#[derive(Serialize)]
struct ProblemManifest {
    name: String,
    domain: Vec<(f64, f64)>,
    seed: u64,
    sizes: Vec<usize>,
    noise_var: f64,
    test_size: usize,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_rows<S: Serialize>(path: &Path, rows: &[S]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn existing(path: Option<PathBuf>, what: &str) -> std::result::Result<PathBuf, Failure> {
    let p = path.ok_or_else(|| usage(format!("missing --{what}")))?;
    if !p.is_file() {
        return Err(usage(format!("--{what} {} does not exist", p.display())));
    }
    Ok(p)
}

fn out_dir(path: Option<PathBuf>) -> std::result::Result<PathBuf, Failure> {
    let p = path.ok_or_else(|| usage("missing --out"))?;
    fs::create_dir_all(&p).map_err(|e| usage(format!("cannot create {}: {e}", p.display())))?;
    Ok(p)
}

struct Resolved {
    config: RunConfig,
    model: ModelConfig,
    train: Option<PathBuf>,
    test: Option<PathBuf>,
    out: Option<PathBuf>,
}

fn resolve(args: RunArgs) -> std::result::Result<Resolved, Failure> {
    let mut config: RunConfig = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| usage(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| usage(format!("invalid config {}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    let mut model = match (config.model.take(), args.model) {
        (Some(m), Some(k)) if m.kind() != k => {
            return Err(usage(format!("--model {k} conflicts with config model {}", m.kind())))
        }
        (Some(m), _) => m,
        (None, k) => ModelConfig::default_for(k.unwrap_or(ModelKind::ProNdf)),
    };
    if let Some(seed) = args.seed.or(config.seed) {
        model.set_seed(seed);
        config.models.iter_mut().for_each(|m| m.set_seed(seed));
        config.seed = Some(seed);
    }
    if let Some(b) = args.budget {
        config.budget = Some(b);
    }
    Ok(Resolved {
        train: args.train.or(config.train.take()),
        test: args.test.or(config.test.take()),
        out: args.out.or(config.out.take()),
        config,
        model,
    })
}

fn load_test(path: &Path, train: &MixedDataset<f64>) -> Result<MixedDataset<f64>> {
    load_csv::<f64>(path)?.conform_to(train.schema())
}

fn cmd_genbench(args: GenbenchArgs) -> CmdResult {
    let kind: ProblemKind = args.problem.parse().map_err(|e: Error| usage(e.to_string()))?;
    let mut problem = AnalyticProblem::from_kind(kind);
    if let Some(v) = args.noise_var {
        problem = problem.with_noise_var(v);
    }
    if let Some(n) = args.test_size {
        problem.test_size = n;
    }
    let out = out_dir(Some(args.out))?;
    let data = generate::<f64>(&problem, args.seed)?;
    save_csv(&data.train(), out.join("train.csv"))?;
    save_csv(&data.test, out.join("test.csv"))?;
    let manifest = ProblemManifest {
        name: problem.name(),
        domain: problem.domain.clone(),
        seed: args.seed,
        sizes: problem.sizes.clone(),
        noise_var: problem.noise_var,
        test_size: problem.test_size,
    };
    write_json(&out.join("problem.json"), &manifest)?;
    Ok(())
}

fn cmd_fit(args: RunArgs) -> CmdResult {
    let r = resolve(args)?;
    let train_path = existing(r.train, "train")?;
    let out = out_dir(r.out)?;
    let train = load_csv::<f64>(&train_path)?;
    let (model, history) = fit_model(&r.model, &train)?;
    write_json(&out.join("model.json"), &model)?;
    history.write_csv(BufWriter::new(File::create(out.join("history.csv")).map_err(Error::from)?))?;
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> CmdResult {
    let model_path = existing(Some(args.model), "model")?;
    let test_path = existing(Some(args.test), "test")?;
    let out = out_dir(Some(args.out))?;
    let text = fs::read_to_string(&model_path).map_err(Error::from)?;
    let model: FittedModel<f64> = serde_json::from_str(&text).map_err(Error::from)?;
    let test = load_csv::<f64>(&test_path)?.conform_to(model.schema())?;
    let report = MetricsReport::from_predictions(&model.predict_many(&test.inputs())?, &test.targets())?;
    write_json(&out.join("metrics.json"), &report)?;
    Ok(())
}

fn cmd_tune(args: RunArgs) -> CmdResult {
    let r = resolve(args)?;
    let train_path = existing(r.train, "train")?;
    let out = out_dir(r.out)?;
    let train = load_csv::<f64>(&train_path)?;
    let budget = r.config.budget.unwrap_or(30);
    let seed = r.config.seed.unwrap_or_else(|| r.model.seed());
    let result = random_search(&r.model, &r.config.space, budget, &train, seed)?;
    write_json(&out.join("trials.json"), &result.trials)?;
    write_json(&out.join("best.json"), &result.best)?;
    Ok(())
}

fn cmd_manifold(args: ManifoldArgs) -> CmdResult {
    let model_path = existing(Some(args.model), "model")?;
    let out = out_dir(Some(args.out))?;
    if args.realizations == 0 {
        return Err(usage("--realizations must be ≥ 1"));
    }
    let text = fs::read_to_string(&model_path).map_err(Error::from)?;
    let model: FittedModel<f64> = serde_json::from_str(&text).map_err(Error::from)?;
    write_rows(
        &out.join("manifold_fidelity.csv"),
        &model.fidelity_manifold(args.realizations, args.seed)?,
    )?;
    if model.schema().dt() > 0 {
        write_rows(&out.join("manifold_categorical.csv"), &model.categorical_manifold()?)?;
    }
    Ok(())
}

fn cmd_compare(args: RunArgs) -> CmdResult {
    let r = resolve(args)?;
    let train_path = existing(r.train, "train")?;
    let test_path = existing(r.test, "test")?;
    let out = out_dir(r.out)?;
    let train = load_csv::<f64>(&train_path)?;
    let test = load_test(&test_path, &train)?;
    let mut configs = r.config.models;
    if configs.is_empty() {
        configs = ModelKind::ALL.iter().map(|&k| ModelConfig::default_for(k)).collect();
        if let Some(seed) = r.config.seed {
            configs.iter_mut().for_each(|c| c.set_seed(seed));
        }
    }
    let rows = compare(&configs, &train, &test)?;
    write_json(&out.join("comparison.json"), &rows)?;
    Ok(())
}

fn cmd_ablate(args: RunArgs) -> CmdResult {
    let r = resolve(args)?;
    let ModelConfig::ProNdf(base) = &r.model else {
        return Err(usage("ablation applies to prondf only"));
    };
    let train_path = existing(r.train, "train")?;
    let test_path = existing(r.test, "test")?;
    let out = out_dir(r.out)?;
    let train = load_csv::<f64>(&train_path)?;
    let test = load_test(&test_path, &train)?;
    let m = r.config.manifold_realizations.unwrap_or(base.train.m_pred);
    let rows = run_ablation(base, &train, &test, m)?;
    write_json(&out.join("ablation.json"), &rows)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Genbench(a) => cmd_genbench(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Tune(a) => cmd_tune(a),
        Command::Manifold(a) => cmd_manifold(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Ablate(a) => cmd_ablate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
