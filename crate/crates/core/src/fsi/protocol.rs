//! Few-shot integration simulation, seed-count sweep and full-data
//! augmentation experiments.
//!
//! Every repeat derives its seed as `derive_seed(master_seed, "<experiment>-run", r)`
//! and every cell inside it derives from that run seed, so repeats are
//! independent and may run concurrently without changing any result.

use serde::{Deserialize, Serialize};

use crate::augment::{extrapolate, linear_delta, perturb, upsample, ExtraConfig, PerturbConfig};
use crate::classifier::{evaluate, train_classifier, ClassifierTrainConfig};
use crate::cvae::{sample_cvae, train_cvae, CvaeModel, CvaeTrainConfig};
use crate::dataio::{concat, merge, remove_label, subsample_class, AugmentedBatch, DatasetBundle, EmbeddingDataset, Method};
use crate::deltaenc::{generate_delta, train_delta, DeltaEncoderModel, DeltaGenStrategy, DeltaTrainConfig};
use crate::error::{Error, Result};
use crate::par::{map_ordered, Jobs};
use crate::rng::derive_seed;

use super::stats::{AggregateResult, AugSize};

/// Per-method generator settings.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfigs {
    pub perturb: PerturbConfig,
    pub extra: ExtraConfig,
    pub cvae: CvaeTrainConfig,
    pub delta: DeltaTrainConfig,
}

impl GeneratorConfigs {
    pub fn validate(&self) -> Result<()> {
        self.perturb.validate()?;
        self.extra.validate()?;
        self.cvae.validate()?;
        self.delta.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    pub target: usize,
    pub k: usize,
    pub n_aug: Vec<usize>,
    pub methods: Vec<Method>,
    pub repeats: usize,
    pub master_seed: u64,
    pub classifier: ClassifierTrainConfig,
    pub generators: GeneratorConfigs,
}

impl SimulationSpec {
    /// k = 10, n_aug = [100, 512], every method, 10 repeats.
    pub fn new(target: usize, master_seed: u64) -> Self {
        Self {
            target,
            k: 10,
            n_aug: vec![100, 512],
            methods: Method::ALL.to_vec(),
            repeats: 10,
            master_seed,
            classifier: ClassifierTrainConfig::default(),
            generators: GeneratorConfigs::default(),
        }
    }

    fn validate(&self, bundle: &DatasetBundle) -> Result<()> {
        bundle.vocab().check(self.target)?;
        if self.k == 0 || self.repeats == 0 {
            return Err(Error::Config("k and repeats must be >= 1".into()));
        }
        self.classifier.validate()?;
        self.generators.validate()?;
        let available = bundle.train.count_label(self.target);
        if available < self.k {
            return Err(Error::InsufficientData(format!(
                "target `{}` has {available} training rows, k = {} requested",
                bundle.vocab().name(self.target).unwrap_or("?"),
                self.k
            )));
        }
        Ok(())
    }
}

/// Baseline plus one aggregate per (size, method), sizes outermost.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub baseline: AggregateResult,
    pub cells: Vec<AggregateResult>,
}

impl ExperimentResult {
    pub fn cell(&self, method: Method, size: AugSize) -> Option<&AggregateResult> {
        self.cells.iter().find(|c| c.method == Some(method) && c.size == size)
    }

    /// Reassembles aggregates from per-repeat accuracy rows.
    fn from_repeats(
        methods: &[Method],
        sizes: &[AugSize],
        repeats: Vec<(f64, Vec<f64>)>,
    ) -> Result<Self> {
        let baseline = AggregateResult::new(None, AugSize::None, repeats.iter().map(|r| r.0).collect())?;
        let mut cells = Vec::with_capacity(sizes.len() * methods.len());
        for (si, &size) in sizes.iter().enumerate() {
            for (mi, &method) in methods.iter().enumerate() {
                let idx = si * methods.len() + mi;
                let runs = repeats.iter().map(|r| r.1[idx]).collect();
                cells.push(AggregateResult::new(Some(method), size, runs)?);
            }
        }
        Ok(Self { baseline, cells })
    }
}

/// Generators trained once per repeat and shared by every cell that needs them.
#[derive(Debug, Default)]
pub struct TrainedGenerators {
    pub cvae: Option<CvaeModel>,
    pub delta: Option<DeltaEncoderModel>,
}

impl TrainedGenerators {
    pub fn train(methods: &[Method], data: &EmbeddingDataset, cfg: &GeneratorConfigs, seed: u64) -> Result<Self> {
        let mut out = Self::default();
        if methods.contains(&Method::Cvae) {
            let c = CvaeTrainConfig { seed: derive_seed(seed, "cvae", 0), ..cfg.cvae.clone() };
            out.cvae = Some(train_cvae(data, &c).map_err(|e| e.with_method("CVAE"))?.0);
        }
        if methods.iter().any(|m| matches!(m, Method::DeltaR | Method::DeltaS)) {
            let c = DeltaTrainConfig { seed: derive_seed(seed, "delta", 0), ..cfg.delta.clone() };
            out.delta = Some(train_delta(data, &c).map_err(|e| e.with_method("Delta-encoder"))?.0);
        }
        Ok(out)
    }
}

/// Generates `n` vectors for `label` with `method`. `seeds` are the real
/// examples of `label`; `pool` is the labeled data the delta-encoder draws
/// pairs and anchors from.
#[allow(clippy::too_many_arguments)]
pub fn generate(
    method: Method,
    label: usize,
    seeds: &[Vec<f64>],
    pool: &EmbeddingDataset,
    n: usize,
    cfg: &GeneratorConfigs,
    models: &TrainedGenerators,
    seed: u64,
) -> Result<AugmentedBatch> {
    let wrap = |vectors| AugmentedBatch { label, vectors, method, gen_seed: seed };
    let missing = || Error::Config(format!("{method} generator was not trained"));
    let out = match method {
        Method::Upsample => upsample(seeds, n).map(wrap),
        Method::Perturb => perturb(seeds, n, &cfg.perturb, seed).map(wrap),
        Method::Linear => linear_delta(seeds, n, seed).map(wrap),
        Method::Extra => extrapolate(seeds, n, &cfg.extra, seed).map(wrap),
        Method::Cvae => sample_cvae(models.cvae.as_ref().ok_or_else(missing)?, label, n, seed),
        Method::DeltaR | Method::DeltaS => {
            let strategy = if method == Method::DeltaR {
                DeltaGenStrategy::DeltaR
            } else {
                DeltaGenStrategy::DeltaS
            };
            generate_delta(models.delta.as_ref().ok_or_else(missing)?, pool, label, n, strategy, seed)
        }
    };
    out.map_err(|e| e.with_method(method.display_name()))
}

fn accuracy(train: &EmbeddingDataset, dev: &EmbeddingDataset, test: &EmbeddingDataset, cfg: &ClassifierTrainConfig) -> Result<f64> {
    let (model, _) = train_classifier(train, dev, cfg)?;
    Ok(evaluate(&model, test)?.accuracy)
}

fn fsi_repeat(bundle: &DatasetBundle, spec: &SimulationSpec, repeat: usize) -> Result<(f64, Vec<f64>)> {
    let run_seed = derive_seed(spec.master_seed, "fsi-run", repeat as u64);
    let (seeds, rest) = subsample_class(&bundle.train, spec.target, spec.k, derive_seed(run_seed, "subsample", 0))?;
    let train = concat(&rest, &seeds)?;
    let dev = remove_label(&bundle.dev, spec.target);
    let clf = ClassifierTrainConfig { seed: derive_seed(run_seed, "classifier", 0), ..spec.classifier.clone() };

    let baseline = accuracy(&train, &dev, &bundle.test, &clf)?;
    let models = TrainedGenerators::train(&spec.methods, &train, &spec.generators, derive_seed(run_seed, "generators", 0))?;
    let seed_vectors = seeds.vectors_of(spec.target);
    let mut cells = Vec::with_capacity(spec.n_aug.len() * spec.methods.len());
    for &n in &spec.n_aug {
        for &method in &spec.methods {
            let gen_seed = derive_seed(run_seed, method.key(), n as u64);
            let batch = generate(method, spec.target, &seed_vectors, &train, n, &spec.generators, &models, gen_seed)?;
            let augmented = merge(&train, &batch)?;
            cells.push(accuracy(&augmented, &dev, &bundle.test, &clf)?);
        }
    }
    log::info!("fsi repeat {repeat}: baseline {baseline:.4}");
    Ok((baseline, cells))
}

/// Few-shot integration of `spec.target`: keep `k` random target rows, drop
/// the target from dev, augment, train, and score on the full test set.
pub fn run_fsi(bundle: &DatasetBundle, spec: &SimulationSpec, jobs: Jobs) -> Result<ExperimentResult> {
    spec.validate(bundle)?;
    let repeats = map_ordered((0..spec.repeats).collect(), jobs, |r| fsi_repeat(bundle, spec, r));
    let repeats = repeats.into_iter().collect::<Result<Vec<_>>>()?;
    let sizes: Vec<AugSize> = spec.n_aug.iter().map(|&n| AugSize::Count(n)).collect();
    ExperimentResult::from_repeats(&spec.methods, &sizes, repeats)
}

/// Runs [`run_fsi`] for each seed count in `ks`, reusing every other field
/// of `base`.
pub fn seed_sweep(bundle: &DatasetBundle, base: &SimulationSpec, ks: &[usize], jobs: Jobs) -> Result<Vec<(usize, ExperimentResult)>> {
    if ks.is_empty() {
        return Err(Error::Config("sweep needs at least one k".into()));
    }
    let max_k = *ks.iter().max().expect("nonempty");
    for &k in ks {
        SimulationSpec { k, ..base.clone() }.validate(bundle)?;
    }
    debug_assert!(bundle.train.count_label(base.target) >= max_k);
    ks.iter()
        .map(|&k| Ok((k, run_fsi(bundle, &SimulationSpec { k, ..base.clone() }, jobs)?)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FullDataSpec {
    pub fractions: Vec<f64>,
    pub methods: Vec<Method>,
    pub repeats: usize,
    pub master_seed: u64,
    pub classifier: ClassifierTrainConfig,
    pub generators: GeneratorConfigs,
}

impl FullDataSpec {
    /// 5%, 10% and 20% with every method, 10 repeats.
    pub fn new(master_seed: u64) -> Self {
        Self {
            fractions: vec![0.05, 0.10, 0.20],
            methods: Method::ALL.to_vec(),
            repeats: 10,
            master_seed,
            classifier: ClassifierTrainConfig::default(),
            generators: GeneratorConfigs::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if let Some(f) = self.fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return Err(Error::Config(format!("fraction {f} is outside (0, 1]")));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be >= 1".into()));
        }
        self.classifier.validate()?;
        self.generators.validate()
    }
}

/// `floor(fraction * count)`, tolerant of representation error such as
/// `0.29 * 100 = 28.999999999999996`.
pub fn generated_count(fraction: f64, count: usize) -> usize {
    (fraction * count as f64 + 1e-9).floor() as usize
}

fn full_data_repeat(bundle: &DatasetBundle, spec: &FullDataSpec, repeat: usize) -> Result<(f64, Vec<f64>)> {
    let run_seed = derive_seed(spec.master_seed, "fulldata-run", repeat as u64);
    let clf = ClassifierTrainConfig { seed: derive_seed(run_seed, "classifier", 0), ..spec.classifier.clone() };
    let train = &bundle.train;
    let baseline = accuracy(train, &bundle.dev, &bundle.test, &clf)?;
    let models = TrainedGenerators::train(&spec.methods, train, &spec.generators, derive_seed(run_seed, "generators", 0))?;
    let per_class: Vec<Vec<Vec<f64>>> = (0..train.num_classes()).map(|c| train.vectors_of(c)).collect();
    let mut cells = Vec::with_capacity(spec.fractions.len() * spec.methods.len());
    for (fi, &fraction) in spec.fractions.iter().enumerate() {
        for &method in &spec.methods {
            let mut augmented = train.clone();
            for (label, seeds) in per_class.iter().enumerate() {
                let n = generated_count(fraction, seeds.len());
                if n == 0 {
                    continue;
                }
                let gen_seed = derive_seed(derive_seed(run_seed, method.key(), fi as u64), "class", label as u64);
                let batch = generate(method, label, seeds, train, n, &spec.generators, &models, gen_seed)?;
                augmented = merge(&augmented, &batch)?;
            }
            cells.push(accuracy(&augmented, &bundle.dev, &bundle.test, &clf)?);
        }
    }
    log::info!("full-data repeat {repeat}: baseline {baseline:.4}");
    Ok((baseline, cells))
}

/// Augments every class by each fraction of its size, with generators
/// trained on the full training split.
pub fn full_data_augment(bundle: &DatasetBundle, spec: &FullDataSpec, jobs: Jobs) -> Result<ExperimentResult> {
    spec.validate()?;
    let repeats = map_ordered((0..spec.repeats).collect(), jobs, |r| full_data_repeat(bundle, spec, r));
    let repeats = repeats.into_iter().collect::<Result<Vec<_>>>()?;
    let sizes: Vec<AugSize> = spec.fractions.iter().map(|&f| AugSize::Fraction(f)).collect();
    ExperimentResult::from_repeats(&spec.methods, &sizes, repeats)
}
