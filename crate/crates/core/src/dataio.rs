//! Embedding datasets, the EMBV1 text format, and the dataset surgery used by
//! the few-shot integration protocol.
//!
//! # EMBV1
//!
//! ```text
//! embv1 <dim> <count>
//! labels <name1> <name2> ...        (optional: closes the vocabulary)
//! <label>\t<v1> <v2> ... <v_dim>    (exactly <count> rows)
//! ```
//!
//! Without a `labels` line, labels are interned in order of first appearance.
//! Values are written in the shortest decimal form that parses back to the
//! identical `f64`, so save/load is bit-exact.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, SeededRng};

/// Ordered, duplicate-free label names with a dense `0..C` id mapping.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelVocab {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelVocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Self::new();
        for name in names {
            let name = name.into();
            if vocab.index.contains_key(&name) {
                return Err(Error::Config(format!("duplicate label `{name}`")));
            }
            vocab.intern(&name)?;
        }
        Ok(vocab)
    }

    /// Returns the id for `name`, adding it if new.
    pub fn intern(&mut self, name: &str) -> Result<usize> {
        if let Some(&id) = self.index.get(name) {
            return Ok(id);
        }
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(Error::Config(format!(
                "label `{name}` must be non-empty and contain no whitespace"
            )));
        }
        let id = self.names.len();
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), id);
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn check(&self, id: usize) -> Result<()> {
        if id < self.len() {
            Ok(())
        } else {
            Err(Error::InvalidLabel {
                id,
                classes: self.len(),
            })
        }
    }
}

/// Labeled fixed-width vectors, stored row-major in one flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDataset {
    dim: usize,
    labels: Vec<usize>,
    values: Vec<f64>,
    vocab: LabelVocab,
}

impl EmbeddingDataset {
    pub fn new(dim: usize, vocab: LabelVocab) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        Ok(Self {
            dim,
            labels: Vec::new(),
            values: Vec::new(),
            vocab,
        })
    }

    pub fn push(&mut self, label: usize, vector: &[f64]) -> Result<()> {
        self.vocab.check(label)?;
        if vector.len() != self.dim {
            return Err(Error::DimMismatch {
                context: "dataset row".into(),
                expected: self.dim,
                found: vector.len(),
            });
        }
        if let Some(v) = vector.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("dataset row component {v}")));
        }
        self.labels.push(label);
        self.values.extend_from_slice(vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn vocab(&self) -> &LabelVocab {
        &self.vocab
    }

    pub fn num_classes(&self) -> usize {
        self.vocab.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Flat row-major view of all vectors (`len() * dim()` values).
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn rows(&self) -> impl Iterator<Item = (usize, &[f64])> + '_ {
        self.labels
            .iter()
            .copied()
            .zip(self.values.chunks_exact(self.dim))
    }

    pub fn indices_of(&self, label: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == label).collect()
    }

    pub fn count_label(&self, label: usize) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Vectors of every row carrying `label`, in dataset order.
    pub fn vectors_of(&self, label: usize) -> Vec<Vec<f64>> {
        self.rows()
            .filter(|(l, _)| *l == label)
            .map(|(_, v)| v.to_vec())
            .collect()
    }

    /// New dataset holding the given rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut out = Self {
            dim: self.dim,
            labels: Vec::with_capacity(indices.len()),
            values: Vec::with_capacity(indices.len() * self.dim),
            vocab: self.vocab.clone(),
        };
        for &i in indices {
            out.labels.push(self.labels[i]);
            out.values.extend_from_slice(self.row(i));
        }
        out
    }

    /// Same rows with labels translated into `vocab` by name.
    fn remap(&self, vocab: &LabelVocab) -> Result<Self> {
        let table = self
            .vocab
            .names()
            .iter()
            .map(|n| vocab.id(n).ok_or_else(|| Error::UnknownLabel(n.clone())))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dim: self.dim,
            labels: self.labels.iter().map(|&l| table[l]).collect(),
            values: self.values.clone(),
            vocab: vocab.clone(),
        })
    }
}

/// Train/dev/test splits sharing one vocabulary and width.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub train: EmbeddingDataset,
    pub dev: EmbeddingDataset,
    pub test: EmbeddingDataset,
}

impl DatasetBundle {
    pub fn new(train: EmbeddingDataset, dev: EmbeddingDataset, test: EmbeddingDataset) -> Result<Self> {
        for (name, split) in [("dev", &dev), ("test", &test)] {
            if split.dim() != train.dim() {
                return Err(Error::DimMismatch {
                    context: format!("{name} split"),
                    expected: train.dim(),
                    found: split.dim(),
                });
            }
            if split.vocab() != train.vocab() {
                return Err(Error::Config(format!(
                    "{name} split vocabulary differs from train"
                )));
            }
        }
        Ok(Self { train, dev, test })
    }

    /// Builds a bundle from independently loaded splits, merging their
    /// vocabularies in train, dev, test first-appearance order.
    pub fn unify(train: EmbeddingDataset, dev: EmbeddingDataset, test: EmbeddingDataset) -> Result<Self> {
        let mut vocab = train.vocab().clone();
        for split in [&dev, &test] {
            for name in split.vocab().names() {
                vocab.intern(name)?;
            }
        }
        Self::new(train.remap(&vocab)?, dev.remap(&vocab)?, test.remap(&vocab)?)
    }

    pub fn dim(&self) -> usize {
        self.train.dim()
    }

    pub fn vocab(&self) -> &LabelVocab {
        self.train.vocab()
    }

    /// Loads the three splits named by a manifest file.
    pub fn load_manifest(path: impl AsRef<Path>) -> Result<Self> {
        let manifest = Manifest::load(path)?;
        Self::unify(
            load_embeddings(&manifest.train)?,
            load_embeddings(&manifest.dev)?,
            load_embeddings(&manifest.test)?,
        )
    }

    /// Writes `train.embv1`, `dev.embv1`, `test.embv1` and `manifest.toml`
    /// into `dir`, returning the manifest path.
    pub fn save_to_dir(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_embeddings(&self.train, dir.join("train.embv1"))?;
        save_embeddings(&self.dev, dir.join("dev.embv1"))?;
        save_embeddings(&self.test, dir.join("test.embv1"))?;
        let manifest_path = dir.join("manifest.toml");
        Manifest {
            train: "train.embv1".into(),
            dev: "dev.embv1".into(),
            test: "test.embv1".into(),
        }
        .save(&manifest_path)?;
        Ok(manifest_path)
    }
}

/// Key/value document naming the split files. Relative paths resolve
/// against the manifest's own directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub train: PathBuf,
    pub dev: PathBuf,
    pub test: PathBuf,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: Manifest = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("manifest {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        for p in [&mut manifest.train, &mut manifest.dev, &mut manifest.test] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(manifest)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = toml::to_string(self).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Augmentation method identifiers, in the order results are reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Upsample,
    Perturb,
    Cvae,
    Linear,
    Extra,
    DeltaR,
    DeltaS,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Upsample,
        Method::Perturb,
        Method::Cvae,
        Method::Linear,
        Method::Extra,
        Method::DeltaR,
        Method::DeltaS,
    ];

    /// Display name used in reports.
    pub fn display_name(self) -> &'static str {
        match self {
            Method::Upsample => "Upsample",
            Method::Perturb => "Perturb",
            Method::Cvae => "CVAE",
            Method::Linear => "Linear",
            Method::Extra => "Extra",
            Method::DeltaR => "DeltaR",
            Method::DeltaS => "DeltaS",
        }
    }

    /// Lowercase identifier used in configs and CSV files.
    pub fn key(self) -> &'static str {
        match self {
            Method::Upsample => "upsample",
            Method::Perturb => "perturb",
            Method::Cvae => "cvae",
            Method::Linear => "linear",
            Method::Extra => "extra",
            Method::DeltaR => "deltar",
            Method::DeltaS => "deltas",
        }
    }

    pub fn is_learned(self) -> bool {
        matches!(self, Method::Cvae | Method::DeltaR | Method::DeltaS)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Method::ALL
            .into_iter()
            .find(|m| m.key() == lower)
            .ok_or_else(|| Error::Config(format!("unknown augmentation method `{s}`")))
    }
}

/// Generated vectors for one label.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedBatch {
    pub label: usize,
    pub vectors: Vec<Vec<f64>>,
    pub method: Method,
    pub gen_seed: u64,
}

impl AugmentedBatch {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Shortest decimal representation that reparses to the same bits.
pub(crate) fn format_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(&text, path)
}

/// Parses EMBV1 text. `origin` is used only for error messages.
pub fn parse_embeddings(text: &str, origin: &Path) -> Result<EmbeddingDataset> {
    let err = |line: usize, msg: String| Error::Format {
        path: origin.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l)).peekable();

    let (_, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let (dim, count) = match fields.as_slice() {
        ["embv1", dim, count] => {
            let dim: usize = dim
                .parse()
                .map_err(|_| err(1, format!("bad dimension `{dim}`")))?;
            let count: usize = count
                .parse()
                .map_err(|_| err(1, format!("bad row count `{count}`")))?;
            (dim, count)
        }
        _ => return Err(err(1, "expected header `embv1 <dim> <count>`".into())),
    };
    if dim == 0 {
        return Err(err(1, "dimension must be positive".into()));
    }

    let mut closed = false;
    let mut vocab = LabelVocab::new();
    if let Some((lineno, line)) = lines.peek().copied() {
        if let Some(rest) = line.strip_prefix("labels") {
            if rest.is_empty() || rest.starts_with(char::is_whitespace) {
                let names: Vec<&str> = rest.split_whitespace().collect();
                vocab = LabelVocab::from_names(names).map_err(|e| err(lineno, e.to_string()))?;
                closed = true;
                lines.next();
            }
        }
    }

    let mut ds = EmbeddingDataset::new(dim, vocab.clone())?;
    ds.labels.reserve(count);
    ds.values.reserve(count * dim);
    let mut rows = 0;
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        if rows == count {
            return Err(err(lineno, format!("more rows than the declared {count}")));
        }
        let (name, rest) = line
            .split_once('\t')
            .ok_or_else(|| err(lineno, "expected `<label>\\t<values>`".into()))?;
        let label = if closed {
            vocab
                .id(name)
                .ok_or_else(|| err(lineno, format!("unknown label `{name}` (closed vocabulary)")))?
        } else {
            ds.vocab.intern(name).map_err(|e| err(lineno, e.to_string()))?
        };
        let start = ds.values.len();
        for tok in rest.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| err(lineno, format!("bad number `{tok}`")))?;
            if !v.is_finite() {
                return Err(err(lineno, format!("non-finite value `{tok}`")));
            }
            ds.values.push(v);
        }
        let found = ds.values.len() - start;
        if found != dim {
            return Err(err(
                lineno,
                format!("dimension mismatch: expected {dim} values, found {found}"),
            ));
        }
        ds.labels.push(label);
        rows += 1;
    }
    if rows != count {
        return Err(err(
            text.lines().count().max(1),
            format!("expected {count} rows, found {rows}"),
        ));
    }
    Ok(ds)
}

pub fn format_embeddings(ds: &EmbeddingDataset) -> String {
    let mut out = String::with_capacity(32 + ds.len() * (ds.dim() * 20 + 16));
    let _ = writeln!(out, "embv1 {} {}", ds.dim(), ds.len());
    if !ds.vocab().is_empty() {
        out.push_str("labels");
        for name in ds.vocab().names() {
            out.push(' ');
            out.push_str(name);
        }
        out.push('\n');
    }
    for (label, v) in ds.rows() {
        out.push_str(ds.vocab().name(label).expect("label ids are valid"));
        out.push('\t');
        for (d, x) in v.iter().enumerate() {
            if d > 0 {
                out.push(' ');
            }
            out.push_str(&format_f64(*x));
        }
        out.push('\n');
    }
    out
}

pub fn save_embeddings(ds: &EmbeddingDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_embeddings(ds)).map_err(|e| Error::io(path, e))
}

/// Draws `k` target rows uniformly without replacement.
///
/// Returns `(seeds, rest)`: `seeds` holds the sampled target rows (in
/// dataset order), `rest` every row of the other labels. Unsampled target
/// rows are dropped.
pub fn subsample_class(
    ds: &EmbeddingDataset,
    label: usize,
    k: usize,
    seed: u64,
) -> Result<(EmbeddingDataset, EmbeddingDataset)> {
    ds.vocab().check(label)?;
    if k == 0 {
        return Err(Error::Config("seed count k must be positive".into()));
    }
    let mut target = ds.indices_of(label);
    if target.len() < k {
        return Err(Error::InsufficientData(format!(
            "label `{}` has {} rows, {k} seeds requested",
            ds.vocab().name(label).unwrap_or("?"),
            target.len()
        )));
    }
    let mut rng = rng_from_seed(seed);
    partial_shuffle(&mut target, k, &mut rng);
    let mut chosen = target[..k].to_vec();
    chosen.sort_unstable();
    let rest: Vec<usize> = (0..ds.len()).filter(|&i| ds.label(i) != label).collect();
    Ok((ds.select(&chosen), ds.select(&rest)))
}

/// Moves a uniform random `k`-subset to the front of `items`.
pub(crate) fn partial_shuffle<T>(items: &mut [T], k: usize, rng: &mut SeededRng) {
    use rand::Rng;
    let n = items.len();
    for i in 0..k.min(n) {
        let j = rng.random_range(i..n);
        items.swap(i, j);
    }
}

/// Keeps at most `max` rows per label (a seeded uniform subset), preserving
/// dataset order. `None` keeps everything.
pub fn cap_per_class(ds: &EmbeddingDataset, max: Option<usize>, seed: u64) -> EmbeddingDataset {
    let Some(max) = max else {
        return ds.clone();
    };
    let mut keep = Vec::new();
    for label in 0..ds.num_classes() {
        let mut idx = ds.indices_of(label);
        if idx.len() > max {
            let mut rng = crate::rng::rng_from_seed(crate::rng::derive_seed(seed, "cap", label as u64));
            partial_shuffle(&mut idx, max, &mut rng);
            idx.truncate(max);
        }
        keep.extend(idx);
    }
    keep.sort_unstable();
    ds.select(&keep)
}

/// Copy of `ds` without any row of `label`. Vocabulary is unchanged.
pub fn remove_label(ds: &EmbeddingDataset, label: usize) -> EmbeddingDataset {
    let keep: Vec<usize> = (0..ds.len()).filter(|&i| ds.label(i) != label).collect();
    ds.select(&keep)
}

/// Appends the generated vectors after the real rows.
pub fn merge(ds: &EmbeddingDataset, batch: &AugmentedBatch) -> Result<EmbeddingDataset> {
    ds.vocab().check(batch.label)?;
    let mut out = ds.clone();
    out.labels.reserve(batch.len());
    out.values.reserve(batch.len() * ds.dim());
    for v in &batch.vectors {
        out.push(batch.label, v)?;
    }
    Ok(out)
}

/// Concatenation of two datasets over the same vocabulary.
pub fn concat(a: &EmbeddingDataset, b: &EmbeddingDataset) -> Result<EmbeddingDataset> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch {
            context: "concat".into(),
            expected: a.dim(),
            found: b.dim(),
        });
    }
    if a.vocab() != b.vocab() {
        return Err(Error::Config("concat: vocabularies differ".into()));
    }
    let mut out = a.clone();
    out.labels.extend_from_slice(&b.labels);
    out.values.extend_from_slice(&b.values);
    Ok(out)
}
