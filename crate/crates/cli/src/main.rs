mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use feataug::{ErrorClass, Method};

use config::{ConfigError, Experiment, ExperimentConfig, SynthConfig};

/// Feature-space data augmentation and few-shot integration experiments.
#[derive(Debug, Parser)]
#[command(name = "feataug", version)]
struct Cli {
    /// TOML experiment config (a previous run.lock works too).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed every other seed derives from.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads: 0 = all cores, 1 = sequential.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic Gaussian-mixture bundle.
    Synth(SynthArgs),
    /// Validate three embedding files and write them as one bundle.
    Ingest(IngestArgs),
    /// Generate vectors for one label with one method.
    Augment(AugmentArgs),
    /// Few-shot integration simulation.
    Fsi(FsiArgs),
    /// FSI over a range of seed counts.
    Sweep(SweepArgs),
    /// Augment every class by fractions of its size.
    Fulldata(FullDataArgs),
    /// Train the softmax classifier on a bundle.
    TrainClassifier(DataArgs),
    /// Score a classifier checkpoint.
    Evaluate(EvaluateArgs),
    /// 2-D principal-component projection of embedding files.
    Project(ProjectArgs),
    /// Re-render markdown tables from a results CSV.
    Report(ReportArgs),
}

#[derive(Debug, Args, Default)]
struct DataArgs {
    /// Bundle manifest (train/dev/test embedding files).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Use the default synthetic bundle when no data source is configured.
    #[arg(long, conflicts_with = "manifest")]
    synth: bool,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    separation: Option<f64>,
    #[arg(long)]
    train: Option<usize>,
    #[arg(long)]
    dev: Option<usize>,
    #[arg(long)]
    test: Option<usize>,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    dev: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AugmentArgs {
    #[arg(long)]
    method: Option<Method>,
    /// Number of vectors to generate.
    #[arg(long)]
    n: Option<usize>,
    /// Perturb noise scale.
    #[arg(long)]
    alpha: Option<f64>,
    /// Extrapolation factor.
    #[arg(long)]
    lambda: Option<f64>,
    /// Label whose rows in the input are the seeds.
    #[arg(long)]
    label: Option<String>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Manifest whose train split trains the CVAE or delta-encoder.
    #[arg(long)]
    train_from: Option<PathBuf>,
    #[arg(long)]
    load_model: Option<PathBuf>,
    #[arg(long)]
    save_model: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// Comma-separated method keys.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long)]
    repeats: Option<usize>,
}

#[derive(Debug, Args)]
struct FsiArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    exp: ExperimentArgs,
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    n_aug: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    exp: ExperimentArgs,
    #[arg(long)]
    target: Option<String>,
    #[arg(long, value_delimiter = ',')]
    ks: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    n_aug: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
struct FullDataArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    exp: ExperimentArgs,
    #[arg(long, value_delimiter = ',')]
    fractions: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data_source: DataArgs,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Embedding file to score instead of the bundle's test split.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ProjectArgs {
    /// Embedding files; groups are tagged `<file stem>:<label>`.
    #[arg(long = "input", required = false)]
    inputs: Vec<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    results: Option<PathBuf>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_opt<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

/// Records `--manifest` for path merging and honours `--synth`.
fn apply_data(cfg: &mut ExperimentConfig, flags: &mut ExperimentConfig, data: DataArgs) {
    flags.data.manifest = data.manifest;
    if data.synth && cfg.data.manifest.is_none() && cfg.data.synth.is_none() {
        cfg.data.synth = Some(SynthConfig::default());
    }
}

fn apply_experiment(cfg: &mut ExperimentConfig, exp: ExperimentArgs) {
    set(&mut cfg.methods, exp.methods);
    set(&mut cfg.repeats, exp.repeats);
}

/// Builds the effective configuration: config file (or defaults), then
/// command-line flags. Flag paths resolve against the working directory.
fn resolve(cli: Cli) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let experiment = match &cli.command {
        Command::Synth(_) => Experiment::Synth,
        Command::Ingest(_) => Experiment::Ingest,
        Command::Augment(_) => Experiment::Augment,
        Command::Fsi(_) => Experiment::Fsi,
        Command::Sweep(_) => Experiment::Sweep,
        Command::Fulldata(_) => Experiment::Fulldata,
        Command::TrainClassifier(_) => Experiment::TrainClassifier,
        Command::Evaluate(_) => Experiment::Evaluate,
        Command::Project(_) => Experiment::Project,
        Command::Report(_) => Experiment::Report,
    };
    if let Some(e) = cfg.experiment.filter(|e| *e != experiment) {
        return Err(ConfigError::new(
            "experiment",
            format!("config is for `{}`, not `{}`", e.name(), experiment.name()),
        ));
    }
    cfg.experiment = Some(experiment);
    set(&mut cfg.master_seed, cli.seed);
    set(&mut cfg.jobs, cli.jobs);
    let mut flags = ExperimentConfig { out: cli.out, ..ExperimentConfig::default() };
    match cli.command {
        Command::Synth(a) => {
            let s = cfg.data.synth.get_or_insert_with(SynthConfig::default);
            set(&mut s.dim, a.dim);
            set(&mut s.separation, a.separation);
            set(&mut s.train, a.train);
            set(&mut s.dev, a.dev);
            set(&mut s.test, a.test);
            cfg.data.manifest = None;
        }
        Command::Ingest(a) => {
            flags.ingest.train = a.train;
            flags.ingest.dev = a.dev;
            flags.ingest.test = a.test;
        }
        Command::Augment(a) => {
            set_opt(&mut cfg.augment.method, a.method);
            set(&mut cfg.augment.n, a.n);
            set(&mut cfg.generators.perturb.alpha, a.alpha);
            set(&mut cfg.generators.extra.lambda, a.lambda);
            set_opt(&mut cfg.augment.label, a.label);
            flags.augment.input = a.input;
            flags.augment.output = a.output;
            flags.augment.train_from = a.train_from;
            flags.augment.load_model = a.load_model;
            flags.augment.save_model = a.save_model;
        }
        Command::Fsi(a) => {
            apply_data(&mut cfg, &mut flags, a.data);
            apply_experiment(&mut cfg, a.exp);
            set_opt(&mut cfg.fsi.target, a.target);
            set(&mut cfg.fsi.k, a.k);
            set(&mut cfg.fsi.n_aug, a.n_aug);
        }
        Command::Sweep(a) => {
            apply_data(&mut cfg, &mut flags, a.data);
            apply_experiment(&mut cfg, a.exp);
            set_opt(&mut cfg.fsi.target, a.target);
            set(&mut cfg.sweep.ks, a.ks);
            set(&mut cfg.sweep.n_aug, a.n_aug);
        }
        Command::Fulldata(a) => {
            apply_data(&mut cfg, &mut flags, a.data);
            apply_experiment(&mut cfg, a.exp);
            set(&mut cfg.fulldata.fractions, a.fractions);
        }
        Command::TrainClassifier(a) => {
            apply_data(&mut cfg, &mut flags, a);
        }
        Command::Evaluate(a) => {
            apply_data(&mut cfg, &mut flags, a.data_source);
            flags.evaluate.model = a.model;
            flags.evaluate.data = a.data;
        }
        Command::Project(a) => flags.project.inputs = a.inputs,
        Command::Report(a) => flags.report.results = a.results,
    }
    let cwd = Path::new(".");
    flags.for_each_path(|p| {
        if p.is_relative() {
            *p = std::path::absolute(cwd.join(&*p)).unwrap_or_else(|_| p.clone());
        }
    });
    merge_paths(&mut cfg, flags);
    cfg.validate()?;
    Ok(cfg)
}

/// Copies every path given on the command line over the config's value.
fn merge_paths(cfg: &mut ExperimentConfig, flags: ExperimentConfig) {
    set_opt(&mut cfg.out, flags.out);
    if flags.data.manifest.is_some() {
        cfg.data.manifest = flags.data.manifest;
        cfg.data.synth = None;
    }
    let (a, f) = (&mut cfg.augment, flags.augment);
    set_opt(&mut a.input, f.input);
    set_opt(&mut a.output, f.output);
    set_opt(&mut a.train_from, f.train_from);
    set_opt(&mut a.load_model, f.load_model);
    set_opt(&mut a.save_model, f.save_model);
    set_opt(&mut cfg.ingest.train, flags.ingest.train);
    set_opt(&mut cfg.ingest.dev, flags.ingest.dev);
    set_opt(&mut cfg.ingest.test, flags.ingest.test);
    set_opt(&mut cfg.evaluate.model, flags.evaluate.model);
    set_opt(&mut cfg.evaluate.data, flags.evaluate.data);
    set_opt(&mut cfg.report.results, flags.report.results);
    if !flags.project.inputs.is_empty() {
        cfg.project.inputs = flags.project.inputs;
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<feataug::Error>() {
            return match e.class() {
                ErrorClass::Config => 2,
                ErrorClass::Data => 3,
                ErrorClass::Numeric => 4,
                ErrorClass::Io => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = resolve(cli).map_err(anyhow::Error::from).and_then(commands::run);
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
