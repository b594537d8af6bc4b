//! CSV and markdown rendering of experiment results.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::dataio::{format_f64, Method};
use crate::error::{Error, Result};

use super::protocol::ExperimentResult;
use super::stats::{format_mean_sd, AggregateResult, AugSize};

/// One row per (method, size, run). `method` is the method key or `none`
/// for the baseline; `size` is a count (`512`), a percentage (`5%`) or empty.
/// `target` is empty for experiments that augment every class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub target: String,
    pub k: Option<usize>,
    pub method: String,
    pub size: String,
    pub run: usize,
    pub accuracy: String,
}

fn method_key(m: Option<Method>) -> &'static str {
    m.map_or("none", Method::key)
}

/// Flattens `result` into rows, baseline first.
pub fn result_rows(experiment: &str, target: &str, k: Option<usize>, result: &ExperimentResult) -> Vec<ResultRow> {
    std::iter::once(&result.baseline)
        .chain(&result.cells)
        .flat_map(|cell| {
            cell.runs.iter().enumerate().map(move |(run, acc)| ResultRow {
                experiment: experiment.to_string(),
                target: target.to_string(),
                k,
                method: method_key(cell.method).to_string(),
                size: cell.size.label(),
                run,
                accuracy: format_f64(*acc),
            })
        })
        .collect()
}

pub fn write_rows<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn read_rows<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

fn parse_size(s: &str) -> Result<AugSize> {
    if s.is_empty() {
        return Ok(AugSize::None);
    }
    let bad = || Error::Config(format!("bad augmentation size `{s}`"));
    match s.strip_suffix('%') {
        Some(p) => Ok(AugSize::Fraction(p.parse::<f64>().map_err(|_| bad())? / 100.0)),
        None => Ok(AugSize::Count(s.parse().map_err(|_| bad())?)),
    }
}

type CellRuns = (Option<Method>, String, Vec<f64>);

/// Rebuilds aggregates from stored rows, grouped by `k`, in first-seen order.
pub fn results_from_rows(rows: &[ResultRow]) -> Result<Vec<(Option<usize>, ExperimentResult)>> {
    let mut order: Vec<Option<usize>> = Vec::new();
    let mut cells: BTreeMap<Option<usize>, Vec<CellRuns>> = BTreeMap::new();
    for row in rows {
        if !order.contains(&row.k) {
            order.push(row.k);
        }
        let method = match row.method.as_str() {
            "none" => None,
            m => Some(m.parse::<Method>()?),
        };
        let acc: f64 = row
            .accuracy
            .parse()
            .map_err(|_| Error::Config(format!("bad accuracy `{}`", row.accuracy)))?;
        let group = cells.entry(row.k).or_default();
        match group.iter_mut().find(|(m, s, _)| *m == method && *s == row.size) {
            Some(cell) => cell.2.push(acc),
            None => group.push((method, row.size.clone(), vec![acc])),
        }
    }
    order
        .into_iter()
        .map(|k| {
            let mut baseline = None;
            let mut out = Vec::new();
            for (method, size, runs) in cells.remove(&k).unwrap_or_default() {
                let agg = AggregateResult::new(method, parse_size(&size)?, runs)?;
                if method.is_none() {
                    baseline = Some(agg);
                } else {
                    out.push(agg);
                }
            }
            let baseline = baseline.ok_or_else(|| Error::Config("results have no baseline rows".into()))?;
            Ok((k, ExperimentResult { baseline, cells: out }))
        })
        .collect()
}

/// `| # | Method | Accuracy |` with the baseline first and method rows
/// grouped under their size.
pub fn markdown_table(result: &ExperimentResult) -> String {
    let mut s = String::from("| # | Method | Accuracy |\n|---|---|---|\n");
    s.push_str(&format!("|  | {} | {} |\n", result.baseline.method_name(), format_mean_sd(&result.baseline.summary())));
    let mut last: Option<AugSize> = None;
    for cell in &result.cells {
        let label = if last == Some(cell.size) { String::new() } else { cell.size.label() };
        last = Some(cell.size);
        s.push_str(&format!("| {label} | {} | {} |\n", cell.method_name(), format_mean_sd(&cell.summary())));
    }
    s
}

/// One row per k, baseline first, then one column per (method, size).
pub fn sweep_table(results: &[(usize, ExperimentResult)]) -> String {
    let Some((_, first)) = results.first() else {
        return String::new();
    };
    let mut header = vec!["k".to_string(), first.baseline.method_name().to_string()];
    let multi_size = first.cells.iter().any(|c| c.size != first.cells[0].size);
    for c in &first.cells {
        header.push(if multi_size {
            format!("{} ({})", c.method_name(), c.size.label())
        } else {
            c.method_name().to_string()
        });
    }
    let mut s = format!("| {} |\n|{}\n", header.join(" | "), "---|".repeat(header.len()));
    for (k, r) in results {
        let mut row = vec![k.to_string(), format_mean_sd(&r.baseline.summary())];
        row.extend(r.cells.iter().map(|c| format_mean_sd(&c.summary())));
        s.push_str(&format!("| {} |\n", row.join(" | ")));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ExperimentResult {
        let cell = |m, n, runs: Vec<f64>| AggregateResult::new(Some(m), AugSize::Count(n), runs).unwrap();
        ExperimentResult {
            baseline: AggregateResult::new(None, AugSize::None, vec![0.85, 0.9]).unwrap(),
            cells: vec![
                cell(Method::Upsample, 100, vec![0.9, 0.92]),
                cell(Method::Linear, 100, vec![0.93, 0.95]),
                cell(Method::Upsample, 512, vec![0.91, 0.94]),
                cell(Method::Linear, 512, vec![0.96, 0.97]),
            ],
        }
    }

    #[test]
    fn markdown_groups_by_size() {
        let t = markdown_table(&sample());
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "| # | Method | Accuracy |");
        assert_eq!(lines[2], "|  | No Augmentation | 87.50 (3.54) |");
        assert_eq!(lines[3], "| 100 | Upsample | 91.00 (1.41) |");
        assert_eq!(lines[4], "|  | Linear | 94.00 (1.41) |");
        assert_eq!(lines[5], "| 512 | Upsample | 92.50 (2.12) |");
        assert_eq!(lines.len(), 7);
    }

    #[test]
    fn csv_round_trip() {
        let r = sample();
        let rows = result_rows("fsi", "PlayMusic", Some(10), &r);
        assert_eq!(rows.len(), 10);
        let mut buf = Vec::new();
        write_rows(&rows, &mut buf).unwrap();
        let back = read_rows(buf.as_slice()).unwrap();
        assert_eq!(back, rows);
        let rebuilt = results_from_rows(&back).unwrap();
        assert_eq!(rebuilt.len(), 1);
        assert_eq!(rebuilt[0].1, r);
    }

    #[test]
    fn fraction_sizes_parse() {
        assert_eq!(parse_size("5%").unwrap(), AugSize::Fraction(0.05));
        assert_eq!(parse_size("512").unwrap(), AugSize::Count(512));
        assert!(parse_size("x").is_err());
    }
}
