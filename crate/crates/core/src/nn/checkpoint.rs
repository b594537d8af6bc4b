//! Versioned text container for trained networks.
//!
//! ```text
//! feataug-checkpoint 1
//! kind <model kind>
//! meta <key> <value>                       (zero or more)
//! mlp <name> <layer count>                 (zero or more networks)
//! layer <inputs> <outputs> <activation> <dropout>
//! w <outputs * inputs values, row-major>
//! b <outputs values>
//! ...                                      (one layer/w/b triple per layer)
//! end
//! ```
//!
//! Numbers use the shortest decimal form that reparses to identical bits.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Activation, Dense, Mlp};
use crate::dataio::format_f64;
use crate::error::{Error, Result};

pub const MAGIC: &str = "feataug-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub meta: Vec<(String, String)>,
    pub networks: Vec<(String, Mlp)>,
}

impl Checkpoint {
    pub fn new(kind: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            meta: Vec::new(),
            networks: Vec::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_owned(), value.to_string()));
        self
    }

    pub fn with_network(mut self, name: &str, mlp: &Mlp) -> Self {
        self.networks.push((name.to_owned(), mlp.clone()));
        self
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Config(format!("checkpoint is missing meta `{key}`")))
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.meta(key)?;
        raw.parse()
            .map_err(|_| Error::Config(format!("checkpoint meta `{key}` has bad value `{raw}`")))
    }

    pub fn network(&self, name: &str) -> Result<&Mlp> {
        self.networks
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| Error::Config(format!("checkpoint is missing network `{name}`")))
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "checkpoint holds a `{}` model, expected `{kind}`",
                self.kind
            )))
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{MAGIC} {VERSION}\nkind {}\n", self.kind);
        for (k, v) in &self.meta {
            out.push_str(&format!("meta {k} {v}\n"));
        }
        let join = |it: &mut dyn Iterator<Item = &f64>| {
            it.map(|v| format_f64(*v)).collect::<Vec<_>>().join(" ")
        };
        for (name, mlp) in &self.networks {
            out.push_str(&format!("mlp {name} {}\n", mlp.layers.len()));
            for l in &mlp.layers {
                out.push_str(&format!(
                    "layer {} {} {} {}\n",
                    l.inputs(),
                    l.outputs(),
                    l.activation.name(),
                    format_f64(l.dropout)
                ));
                out.push_str(&format!("w {}\n", join(&mut l.weight.iter())));
                out.push_str(&format!("b {}\n", join(&mut l.bias.iter())));
            }
        }
        out.push_str("end\n");
        out
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let err = |line: usize, msg: &str| Error::Format {
            path: origin.to_path_buf(),
            line,
            msg: msg.to_owned(),
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| lines.next().ok_or_else(|| err(0, &format!("truncated before {what}")));

        let (n, header) = next("header")?;
        if header != format!("{MAGIC} {VERSION}") {
            return Err(err(n, "unsupported checkpoint header"));
        }
        let (n, kind_line) = next("kind")?;
        let kind = kind_line
            .strip_prefix("kind ")
            .ok_or_else(|| err(n, "expected `kind <name>`"))?;
        let mut ckpt = Checkpoint::new(kind);
        loop {
            let (n, line) = next("end")?;
            if line == "end" {
                return Ok(ckpt);
            }
            if let Some(rest) = line.strip_prefix("meta ") {
                let (k, v) = rest.split_once(' ').ok_or_else(|| err(n, "expected `meta <key> <value>`"))?;
                ckpt.meta.push((k.to_owned(), v.to_owned()));
                continue;
            }
            let rest = line.strip_prefix("mlp ").ok_or_else(|| err(n, "expected `meta`, `mlp` or `end`"))?;
            let (name, count) = rest.split_once(' ').ok_or_else(|| err(n, "expected `mlp <name> <layers>`"))?;
            let count: usize = count.parse().map_err(|_| err(n, "bad layer count"))?;
            let mut layers = Vec::with_capacity(count);
            for _ in 0..count {
                let (n, spec) = next("layer")?;
                let f: Vec<&str> = spec.split(' ').collect();
                let (inputs, outputs, activation, dropout) = match f.as_slice() {
                    ["layer", i, o, a, d] => (
                        i.parse::<usize>().map_err(|_| err(n, "bad layer inputs"))?,
                        o.parse::<usize>().map_err(|_| err(n, "bad layer outputs"))?,
                        Activation::from_name(a).ok_or_else(|| err(n, "unknown activation"))?,
                        d.parse::<f64>().map_err(|_| err(n, "bad dropout"))?,
                    ),
                    _ => return Err(err(n, "expected `layer <in> <out> <activation> <dropout>`")),
                };
                let mut values = |tag: &str, len: usize| -> Result<Vec<f64>> {
                    let (n, line) = next(tag)?;
                    let body = line
                        .strip_prefix(tag)
                        .and_then(|r| r.strip_prefix(' ').or(if r.is_empty() { Some("") } else { None }))
                        .ok_or_else(|| err(n, &format!("expected `{tag}` line")))?;
                    let vals = body
                        .split_whitespace()
                        .map(|t| t.parse::<f64>().map_err(|_| err(n, "bad number")))
                        .collect::<Result<Vec<_>>>()?;
                    if vals.len() != len {
                        return Err(err(n, &format!("expected {len} values, found {}", vals.len())));
                    }
                    if vals.iter().any(|v| !v.is_finite()) {
                        return Err(err(n, "non-finite parameter"));
                    }
                    Ok(vals)
                };
                let w = values("w", inputs * outputs)?;
                let b = values("b", outputs)?;
                layers.push(Dense {
                    weight: Array2::from_shape_vec((outputs, inputs), w).expect("checked length"),
                    bias: Array1::from(b),
                    activation,
                    dropout,
                });
            }
            ckpt.networks.push((name.to_owned(), Mlp::from_layers(layers)?));
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }
}
