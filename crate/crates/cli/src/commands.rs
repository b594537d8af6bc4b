use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use feataug::classifier::{evaluate, train_classifier, ClassifierTrainConfig, SoftmaxClassifier};
use feataug::cvae::{sample_cvae, train_cvae, CvaeModel, CvaeTrainConfig};
use feataug::dataio::{load_embeddings, save_embeddings, AugmentedBatch, DatasetBundle, EmbeddingDataset, Method};
use feataug::deltaenc::{generate_delta, train_delta, DeltaEncoderModel, DeltaGenStrategy, DeltaTrainConfig};
use feataug::fsi::{
    full_data_augment, generate, markdown_table, project_2d, read_rows, result_rows, results_from_rows,
    run_fsi, seed_sweep, sweep_table, write_projection, write_rows, ExperimentResult, FullDataSpec,
    SimulationSpec, TrainedGenerators,
};
use feataug::rng::derive_seed;
use feataug::synthgen::{generate_mixture, snipslike_spec};
use feataug::Jobs;

use crate::config::{require, ConfigError, Experiment, ExperimentConfig, LOCK_FILE};

const RESULTS_CSV: &str = "results.csv";
const RESULTS_MD: &str = "results.md";

pub fn run(mut cfg: ExperimentConfig) -> Result<()> {
    match cfg.experiment.expect("resolved experiment") {
        Experiment::Synth => synth(&mut cfg),
        Experiment::Ingest => ingest(&cfg),
        Experiment::Augment => augment(&cfg),
        Experiment::Fsi => fsi(&mut cfg),
        Experiment::Sweep => sweep(&mut cfg),
        Experiment::Fulldata => fulldata(&mut cfg),
        Experiment::TrainClassifier => train(&mut cfg),
        Experiment::Evaluate => evaluate_cmd(&mut cfg),
        Experiment::Project => project(&cfg),
        Experiment::Report => report(&cfg),
    }
}

fn jobs(cfg: &ExperimentConfig) -> Jobs {
    Jobs::from_count(cfg.jobs)
}

fn out_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = cfg.out_dir()?.to_path_buf();
    fs::create_dir_all(&dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    Ok(dir)
}

fn write_lock(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let path = dir.join(LOCK_FILE);
    fs::write(&path, cfg.to_lock()?).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Loads the configured data source, pinning the synthetic seed into the
/// config so the run.lock is explicit.
fn load_bundle(cfg: &mut ExperimentConfig) -> Result<DatasetBundle> {
    cfg.validate_data()?;
    if let Some(manifest) = &cfg.data.manifest {
        return DatasetBundle::load_manifest(manifest)
            .with_context(|| format!("loading data.manifest {}", manifest.display()));
    }
    let synth = cfg.data.synth.as_mut().expect("validated data source");
    let seed = *synth.seed.get_or_insert(cfg.master_seed);
    let spec = snipslike_spec(synth.dim, synth.separation, seed)?.with_counts(synth.train, synth.dev, synth.test);
    Ok(generate_mixture(&spec, seed)?)
}

/// Resolves `fsi.target`, defaulting to the first label.
fn resolve_target(cfg: &mut ExperimentConfig, bundle: &DatasetBundle) -> Result<(usize, String)> {
    let vocab = bundle.vocab();
    let name = match &cfg.fsi.target {
        Some(name) => name.clone(),
        None => vocab.name(0).context("bundle has no labels")?.to_string(),
    };
    let id = vocab
        .id(&name)
        .ok_or_else(|| ConfigError::new("fsi.target", format!("label `{name}` is not in the bundle")))?;
    cfg.fsi.target = Some(name.clone());
    Ok((id, name))
}

fn synth(cfg: &mut ExperimentConfig) -> Result<()> {
    let dir = out_dir(cfg)?;
    let bundle = load_bundle(cfg)?;
    let manifest = bundle.save_to_dir(&dir)?;
    write_lock(cfg, &dir)?;
    println!("{}", manifest.display());
    Ok(())
}

fn ingest(cfg: &ExperimentConfig) -> Result<()> {
    let i = &cfg.ingest;
    let hint = "pass --train/--dev/--test";
    let train = load_embeddings(require(&i.train, "ingest.train", hint)?)?;
    let dev = load_embeddings(require(&i.dev, "ingest.dev", hint)?)?;
    let test = load_embeddings(require(&i.test, "ingest.test", hint)?)?;
    let bundle = DatasetBundle::unify(train, dev, test)?;
    let dir = out_dir(cfg)?;
    let manifest = bundle.save_to_dir(&dir)?;
    write_lock(cfg, &dir)?;
    println!(
        "{}: dim {}, {} labels, {}/{}/{} rows",
        manifest.display(),
        bundle.dim(),
        bundle.vocab().len(),
        bundle.train.len(),
        bundle.dev.len(),
        bundle.test.len()
    );
    Ok(())
}

fn cvae_model(cfg: &ExperimentConfig, train: &EmbeddingDataset) -> Result<CvaeModel> {
    let a = &cfg.augment;
    if let Some(path) = &a.load_model {
        return Ok(CvaeModel::load(path)?);
    }
    let c = CvaeTrainConfig { seed: derive_seed(cfg.master_seed, "cvae", 0), ..cfg.generators.cvae.clone() };
    let model = train_cvae(train, &c).map_err(|e| e.with_method("CVAE"))?.0;
    if let Some(path) = &a.save_model {
        model.save(path)?;
    }
    Ok(model)
}

fn delta_model(cfg: &ExperimentConfig, train: &EmbeddingDataset) -> Result<DeltaEncoderModel> {
    let a = &cfg.augment;
    if let Some(path) = &a.load_model {
        return Ok(DeltaEncoderModel::load(path)?);
    }
    let c = DeltaTrainConfig { seed: derive_seed(cfg.master_seed, "delta", 0), ..cfg.generators.delta.clone() };
    let model = train_delta(train, &c).map_err(|e| e.with_method("Delta-encoder"))?.0;
    if let Some(path) = &a.save_model {
        model.save(path)?;
    }
    Ok(model)
}

fn augment(cfg: &ExperimentConfig) -> Result<()> {
    let a = &cfg.augment;
    let method = *require(&a.method, "augment.method", "pass --method")?;
    let label_name = require(&a.label, "augment.label", "pass --label")?;
    let input = load_embeddings(require(&a.input, "augment.input", "pass --input")?)?;
    let output = require(&a.output, "augment.output", "pass --output")?;
    let label = input
        .vocab()
        .id(label_name)
        .ok_or_else(|| ConfigError::new("augment.label", format!("label `{label_name}` is not in the input")))?;
    let seeds = input.vectors_of(label);
    let gen_seed = derive_seed(cfg.master_seed, "augment", 0);
    let train = match &a.train_from {
        Some(manifest) if method.is_learned() && a.load_model.is_none() => {
            DatasetBundle::load_manifest(manifest)
                .with_context(|| format!("loading augment.train_from {}", manifest.display()))?
                .train
        }
        _ => input.clone(),
    };
    let batch = match method {
        Method::Cvae => {
            let model = cvae_model(cfg, &train)?;
            let id = train
                .vocab()
                .id(label_name)
                .ok_or_else(|| ConfigError::new("augment.label", format!("label `{label_name}` is not in the training data")))?;
            let b = sample_cvae(&model, id, a.n, gen_seed).map_err(|e| e.with_method("CVAE"))?;
            AugmentedBatch { label, ..b }
        }
        Method::DeltaR | Method::DeltaS => {
            let model = delta_model(cfg, &train)?;
            let strategy = if method == Method::DeltaR { DeltaGenStrategy::DeltaR } else { DeltaGenStrategy::DeltaS };
            generate_delta(&model, &input, label, a.n, strategy, gen_seed).map_err(|e| e.with_method(method.display_name()))?
        }
        _ => generate(method, label, &seeds, &input, a.n, &cfg.generators, &TrainedGenerators::default(), gen_seed)?,
    };
    let mut ds = EmbeddingDataset::new(input.dim(), input.vocab().clone())?;
    for v in &batch.vectors {
        ds.push(label, v)?;
    }
    save_embeddings(&ds, output)?;
    let lock_dir = match &cfg.out {
        Some(_) => out_dir(cfg)?,
        None => output.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    write_lock(cfg, &lock_dir)?;
    println!("{} {} vectors for `{label_name}` -> {}", batch.len(), method.display_name(), output.display());
    Ok(())
}

fn write_results(dir: &Path, rows: &[feataug::fsi::ResultRow], markdown: &str) -> Result<()> {
    let csv_path = dir.join(RESULTS_CSV);
    let file = fs::File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?;
    write_rows(rows, file)?;
    write_text(&dir.join(RESULTS_MD), markdown)?;
    print!("{markdown}");
    Ok(())
}

fn simulation_spec(cfg: &ExperimentConfig, target: usize, k: usize, n_aug: Vec<usize>) -> SimulationSpec {
    SimulationSpec {
        target,
        k,
        n_aug,
        methods: cfg.methods.clone(),
        repeats: cfg.repeats,
        master_seed: cfg.master_seed,
        classifier: cfg.classifier.clone(),
        generators: cfg.generators.clone(),
    }
}

fn fsi(cfg: &mut ExperimentConfig) -> Result<()> {
    let dir = out_dir(cfg)?;
    let bundle = load_bundle(cfg)?;
    let (target, name) = resolve_target(cfg, &bundle)?;
    let spec = simulation_spec(cfg, target, cfg.fsi.k, cfg.fsi.n_aug.clone());
    let result = run_fsi(&bundle, &spec, jobs(cfg))?;
    let rows = result_rows("fsi", &name, Some(spec.k), &result);
    let md = format!(
        "FSI on `{name}`, k = {}, {} repeats\n\n{}",
        spec.k,
        spec.repeats,
        markdown_table(&result)
    );
    write_results(&dir, &rows, &md)?;
    write_lock(cfg, &dir)
}

fn sweep(cfg: &mut ExperimentConfig) -> Result<()> {
    let dir = out_dir(cfg)?;
    let bundle = load_bundle(cfg)?;
    let (target, name) = resolve_target(cfg, &bundle)?;
    let base = simulation_spec(cfg, target, 1, cfg.sweep.n_aug.clone());
    let results = seed_sweep(&bundle, &base, &cfg.sweep.ks, jobs(cfg))?;
    let rows: Vec<_> = results
        .iter()
        .flat_map(|(k, r)| result_rows("sweep", &name, Some(*k), r))
        .collect();
    let md = format!("Seed-count sweep on `{name}`, {} repeats\n\n{}", base.repeats, sweep_table(&results));
    write_results(&dir, &rows, &md)?;
    write_lock(cfg, &dir)
}

fn fulldata(cfg: &mut ExperimentConfig) -> Result<()> {
    let dir = out_dir(cfg)?;
    let bundle = load_bundle(cfg)?;
    let spec = FullDataSpec {
        fractions: cfg.fulldata.fractions.clone(),
        methods: cfg.methods.clone(),
        repeats: cfg.repeats,
        master_seed: cfg.master_seed,
        classifier: cfg.classifier.clone(),
        generators: cfg.generators.clone(),
    };
    let result = full_data_augment(&bundle, &spec, jobs(cfg))?;
    let rows = result_rows("fulldata", "", None, &result);
    let md = format!("Full-data augmentation, {} repeats\n\n{}", spec.repeats, markdown_table(&result));
    write_results(&dir, &rows, &md)?;
    write_lock(cfg, &dir)
}

fn train(cfg: &mut ExperimentConfig) -> Result<()> {
    let dir = out_dir(cfg)?;
    let bundle = load_bundle(cfg)?;
    let c = ClassifierTrainConfig { seed: derive_seed(cfg.master_seed, "classifier", 0), ..cfg.classifier.clone() };
    let (model, trace) = train_classifier(&bundle.train, &bundle.dev, &c)?;
    model.save(dir.join("classifier.ckpt"))?;
    let mut text = String::from("epoch,dev_accuracy\n");
    for (i, acc) in trace.iter().enumerate() {
        text.push_str(&format!("{},{acc}\n", i + 1));
    }
    write_text(&dir.join("dev_trace.csv"), &text)?;
    let eval = evaluate(&model, &bundle.test)?;
    println!("test accuracy: {:.4}", eval.accuracy);
    write_lock(cfg, &dir)
}

fn evaluate_cmd(cfg: &mut ExperimentConfig) -> Result<()> {
    let model_path = require(&cfg.evaluate.model, "evaluate.model", "pass --model")?.clone();
    let model = SoftmaxClassifier::load(&model_path)?;
    let data = match cfg.evaluate.data.clone() {
        Some(path) => load_embeddings(path)?,
        None => load_bundle(cfg)?.test,
    };
    let eval = evaluate(&model, &data)?;
    println!("accuracy: {:.4}", eval.accuracy);
    if cfg.out.is_some() {
        let dir = out_dir(cfg)?;
        let names = data.vocab().names();
        let mut text = String::from("true,predicted,count\n");
        for (t, row) in eval.confusion.iter().enumerate() {
            for (p, &count) in row.iter().enumerate() {
                if count > 0 {
                    let name = |i: usize| names.get(i).map_or_else(|| i.to_string(), Clone::clone);
                    text.push_str(&format!("{},{},{count}\n", name(t), name(p)));
                }
            }
        }
        write_text(&dir.join("confusion.csv"), &text)?;
        write_lock(cfg, &dir)?;
    }
    Ok(())
}

fn project(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.project.inputs.is_empty() {
        return Err(ConfigError::new("project.inputs", "required (pass --input, repeatable)").into());
    }
    let mut vectors = Vec::new();
    let mut groups = Vec::new();
    for path in &cfg.project.inputs {
        let ds = load_embeddings(path)?;
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        for (label, row) in ds.rows() {
            vectors.push(row.to_vec());
            groups.push(format!("{stem}:{}", ds.vocab().name(label).unwrap_or("?")));
        }
    }
    let points = project_2d(&vectors, &groups)?;
    let dir = out_dir(cfg)?;
    let path = dir.join("projection.csv");
    let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    write_projection(&points, file)?;
    write_lock(cfg, &dir)?;
    println!("{} points -> {}", points.len(), path.display());
    Ok(())
}

fn report(cfg: &ExperimentConfig) -> Result<()> {
    let path = require(&cfg.report.results, "report.results", "pass --results")?;
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let rows = read_rows(file)?;
    let grouped = results_from_rows(&rows)?;
    let md = if grouped.len() > 1 {
        let sweep: Vec<(usize, ExperimentResult)> = grouped
            .into_iter()
            .map(|(k, r)| (k.unwrap_or(0), r))
            .collect();
        sweep_table(&sweep)
    } else {
        grouped.into_iter().map(|(_, r)| markdown_table(&r)).collect()
    };
    print!("{md}");
    if cfg.out.is_some() {
        let dir = out_dir(cfg)?;
        write_text(&dir.join(RESULTS_MD), &md)?;
    }
    Ok(())
}
