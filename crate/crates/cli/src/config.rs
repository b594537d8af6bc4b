use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use feataug::classifier::ClassifierTrainConfig;
use feataug::fsi::GeneratorConfigs;
use feataug::Method;
use serde::{Deserialize, Serialize};

pub const LOCK_FILE: &str = "run.lock";

/// A configuration problem, reported with the path of the offending field.
#[derive(Debug)]
pub struct ConfigError {
    pub field: String,
    pub msg: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Self { field: field.into(), msg: msg.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config field `{}`: {}", self.field, self.msg)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Synth,
    Ingest,
    Augment,
    Fsi,
    Sweep,
    Fulldata,
    TrainClassifier,
    Evaluate,
    Project,
    Report,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Synth => "synth",
            Experiment::Ingest => "ingest",
            Experiment::Augment => "augment",
            Experiment::Fsi => "fsi",
            Experiment::Sweep => "sweep",
            Experiment::Fulldata => "fulldata",
            Experiment::TrainClassifier => "train-classifier",
            Experiment::Evaluate => "evaluate",
            Experiment::Project => "project",
            Experiment::Report => "report",
        }
    }
}

/// Synthetic Gaussian-mixture bundle. `seed = None` uses the master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub dim: usize,
    pub separation: f64,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub seed: Option<u64>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { dim: 16, separation: 8.0, train: 1800, dev: 100, test: 100, seed: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub manifest: Option<PathBuf>,
    pub synth: Option<SynthConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FsiConfig {
    /// Target label name; the first label of the vocabulary when unset.
    pub target: Option<String>,
    pub k: usize,
    pub n_aug: Vec<usize>,
}

impl Default for FsiConfig {
    fn default() -> Self {
        Self { target: None, k: 10, n_aug: vec![100, 512] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub ks: Vec<usize>,
    pub n_aug: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { ks: vec![5, 10, 15, 20, 25, 30], n_aug: vec![100] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FullDataConfig {
    pub fractions: Vec<f64>,
}

impl Default for FullDataConfig {
    fn default() -> Self {
        Self { fractions: vec![0.05, 0.10, 0.20] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub method: Option<Method>,
    pub n: usize,
    /// Label whose rows in `input` are the seeds.
    pub label: Option<String>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    /// Manifest whose train split trains CVAE / delta-encoder models;
    /// `input` is used when unset.
    pub train_from: Option<PathBuf>,
    pub load_model: Option<PathBuf>,
    pub save_model: Option<PathBuf>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            method: None,
            n: 100,
            label: None,
            input: None,
            output: None,
            train_from: None,
            load_model: None,
            save_model: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub model: Option<PathBuf>,
    /// Embedding file to score; the data source's test split when unset.
    pub data: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectConfig {
    pub inputs: Vec<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub results: Option<PathBuf>,
}

/// Everything a run depends on. Seeds inside nested sections are replaced
/// by ones derived from `master_seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<Experiment>,
    pub master_seed: u64,
    /// Worker threads: 0 for all cores, 1 for sequential.
    pub jobs: usize,
    pub out: Option<PathBuf>,
    pub methods: Vec<Method>,
    pub repeats: usize,
    pub data: DataConfig,
    pub fsi: FsiConfig,
    pub sweep: SweepConfig,
    pub fulldata: FullDataConfig,
    pub augment: AugmentConfig,
    pub ingest: IngestConfig,
    pub evaluate: EvaluateConfig,
    pub project: ProjectConfig,
    pub report: ReportConfig,
    pub classifier: ClassifierTrainConfig,
    pub generators: GeneratorConfigs,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            master_seed: 0,
            jobs: 0,
            out: None,
            methods: Method::ALL.to_vec(),
            repeats: 10,
            data: DataConfig::default(),
            fsi: FsiConfig::default(),
            sweep: SweepConfig::default(),
            fulldata: FullDataConfig::default(),
            augment: AugmentConfig::default(),
            ingest: IngestConfig::default(),
            evaluate: EvaluateConfig::default(),
            project: ProjectConfig::default(),
            report: ReportConfig::default(),
            classifier: ClassifierTrainConfig::default(),
            generators: GeneratorConfigs::default(),
        }
    }
}

fn absolutize(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl ExperimentConfig {
    /// Parses a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError::new("--config", format!("{}: {e}", path.display())))?;
        let mut cfg = parse(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("")).to_path_buf();
        cfg.for_each_path(|p| absolutize(&base, p));
        Ok(cfg)
    }

    pub fn for_each_path(&mut self, mut f: impl FnMut(&mut PathBuf)) {
        let a = &mut self.augment;
        let i = &mut self.ingest;
        let singles = [
            &mut self.out,
            &mut self.data.manifest,
            &mut a.input,
            &mut a.output,
            &mut a.train_from,
            &mut a.load_model,
            &mut a.save_model,
            &mut i.train,
            &mut i.dev,
            &mut i.test,
            &mut self.evaluate.model,
            &mut self.evaluate.data,
            &mut self.report.results,
        ];
        for p in singles.into_iter().flatten() {
            f(p);
        }
        self.project.inputs.iter_mut().for_each(f);
    }

    pub fn out_dir(&self) -> Result<&Path, ConfigError> {
        self.out
            .as_deref()
            .ok_or_else(|| ConfigError::new("out", "no output directory; pass --out or set `out`"))
    }

    /// Checks fields every experiment relies on. Seeds must fit TOML's
    /// signed 64-bit integers so the run.lock can record them.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.master_seed > i64::MAX as u64 {
            return Err(ConfigError::new("master_seed", "must be at most 2^63 - 1"));
        }
        if self.repeats == 0 {
            return Err(ConfigError::new("repeats", "must be >= 1"));
        }
        let mut seen = Vec::new();
        for m in &self.methods {
            if seen.contains(m) {
                return Err(ConfigError::new("methods", format!("`{}` listed twice", m.key())));
            }
            seen.push(*m);
        }
        self.classifier
            .validate()
            .map_err(|e| ConfigError::new("classifier", e.to_string()))?;
        self.generators
            .validate()
            .map_err(|e| ConfigError::new("generators", e.to_string()))?;
        Ok(())
    }

    /// Checks the data-source invariant: exactly one of `data.manifest` and
    /// `[data.synth]`, and the manifest must exist.
    pub fn validate_data(&self) -> Result<(), ConfigError> {
        match (&self.data.manifest, &self.data.synth) {
            (Some(_), Some(_)) => Err(ConfigError::new(
                "data",
                "set exactly one of `data.manifest` and `[data.synth]`, not both",
            )),
            (None, None) => Err(ConfigError::new(
                "data",
                "no data source; set `data.manifest` (or --manifest) or `[data.synth]`",
            )),
            (Some(m), None) if !m.is_file() => Err(ConfigError::new(
                "data.manifest",
                format!("manifest file `{}` does not exist", m.display()),
            )),
            (None, Some(s)) if s.seed.is_some_and(|v| v > i64::MAX as u64) => {
                Err(ConfigError::new("data.synth.seed", "must be at most 2^63 - 1"))
            }
            _ => Ok(()),
        }
    }

    /// Serialized form written as `run.lock`.
    pub fn to_lock(&self) -> Result<String, ConfigError> {
        let body = toml::to_string(self).map_err(|e| ConfigError::new("<lock>", e.to_string()))?;
        Ok(format!("# Resolved configuration; rerun with `--config {LOCK_FILE}`.\n{body}"))
    }
}

/// Parses config text, naming the offending field on failure.
pub fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let de = toml::Deserializer::parse(text).map_err(|e| ConfigError::new("<document>", e.message().to_string()))?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let field = if path == "." { "<document>".to_string() } else { path };
        ConfigError::new(field, e.inner().message().to_string())
    })
}

pub fn require<'a, T>(value: &'a Option<T>, field: &str, hint: &str) -> Result<&'a T, ConfigError> {
    value
        .as_ref()
        .ok_or_else(|| ConfigError::new(field, format!("required ({hint})")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_the_lock_format() {
        let mut cfg = ExperimentConfig { experiment: Some(Experiment::Fsi), master_seed: 42, ..Default::default() };
        cfg.data.synth = Some(SynthConfig { seed: Some(7), ..Default::default() });
        cfg.out = Some("/tmp/x".into());
        let text = cfg.to_lock().unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(parse("nonsense = 1").is_err());
        assert_eq!(parse("[fsi]\nkk = 3").unwrap_err().field, "fsi.kk");
        assert_eq!(parse("[fsi]\nk = \"x\"").unwrap_err().field, "fsi.k");
    }

    #[test]
    fn data_source_must_be_unique() {
        let mut cfg = ExperimentConfig::default();
        assert_eq!(cfg.validate_data().unwrap_err().field, "data");
        cfg.data.synth = Some(SynthConfig::default());
        cfg.data.manifest = Some("m.toml".into());
        assert_eq!(cfg.validate_data().unwrap_err().field, "data");
        cfg.data.synth = None;
        assert_eq!(cfg.validate_data().unwrap_err().field, "data.manifest");
    }

    #[test]
    fn large_seeds_are_rejected() {
        let cfg = ExperimentConfig { master_seed: u64::MAX, ..Default::default() };
        assert_eq!(cfg.validate().unwrap_err().field, "master_seed");
    }
}
