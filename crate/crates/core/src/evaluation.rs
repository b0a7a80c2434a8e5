//! Effectiveness metrics, model ranking, correlation and report files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::MatchSet;
use crate::model::GroundTruth;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricTriple {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MetricTriple {
    pub fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self { precision, recall, f1 }
    }

    /// From `correct` true pairs among `predicted` pairs, with `actual` true pairs overall.
    pub fn from_counts(correct: usize, predicted: usize, actual: usize) -> Self {
        let precision = if predicted == 0 {
            0.0
        } else {
            correct as f64 / predicted as f64
        };
        let recall = if actual == 0 {
            1.0
        } else {
            correct as f64 / actual as f64
        };
        Self::new(precision, recall)
    }
}

pub fn match_metrics(matches: &MatchSet, gt: &GroundTruth) -> MetricTriple {
    let correct = matches
        .pairs
        .iter()
        .filter(|p| gt.contains(&p.left, &p.right))
        .count();
    MetricTriple::from_counts(correct, matches.len(), gt.len())
}

/// Sample Pearson correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::UndefinedCorrelation(format!(
            "series lengths differ ({} vs {})",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::UndefinedCorrelation("need at least two observations".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Scores of models (rows) on datasets (columns); absent cells are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub cells: Vec<Vec<Option<f64>>>,
}

impl ScoreMatrix {
    pub fn new(rows: Vec<String>, cols: Vec<String>, cells: Vec<Vec<Option<f64>>>) -> Result<Self> {
        if cells.len() != rows.len() || cells.iter().any(|r| r.len() != cols.len()) {
            return Err(Error::Domain(format!(
                "score matrix is not {}x{}",
                rows.len(),
                cols.len()
            )));
        }
        Ok(Self { rows, cols, cells })
    }

    pub fn column(&self, c: usize) -> impl Iterator<Item = Option<f64>> + '_ {
        self.cells.iter().map(move |r| r[c])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    /// `ranks[model][dataset]`, 1 = best.
    pub ranks: Vec<Vec<Option<usize>>>,
    /// Mean rank per model over its present cells.
    pub average: Vec<Option<f64>>,
}

/// Competition ranking per dataset: rank 1 is the highest score and tied
/// models share the smaller rank.
pub fn rank_models(scores: &ScoreMatrix) -> Ranking {
    let columns: Vec<Vec<Option<f64>>> = (0..scores.cols.len()).map(|c| scores.column(c).collect()).collect();
    let ranks: Vec<Vec<Option<usize>>> = scores
        .cells
        .iter()
        .map(|row| {
            row.iter()
                .zip(&columns)
                .map(|(cell, col)| {
                    cell.map(|s| col.iter().flatten().filter(|o| o.total_cmp(&s).is_gt()).count() + 1)
                })
                .collect()
        })
        .collect();
    let average = ranks
        .iter()
        .map(|row| {
            let present: Vec<usize> = row.iter().flatten().copied().collect();
            (!present.is_empty()).then(|| present.iter().sum::<usize>() as f64 / present.len() as f64)
        })
        .collect();
    Ranking { ranks, average }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockingRow {
    pub model: String,
    pub dataset: String,
    pub k: usize,
    pub index: String,
    pub recall: f64,
    pub precision: f64,
    pub secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingRow {
    pub model: String,
    pub dataset: String,
    pub algorithm: String,
    pub delta: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub secs: f64,
}

pub const BLOCKING_HEADER: [&str; 7] = ["model", "dataset", "k", "index", "recall", "precision", "secs"];
pub const MATCHING_HEADER: [&str; 8] = ["model", "dataset", "algorithm", "delta", "precision", "recall", "f1", "secs"];

#[derive(Debug, Clone, PartialEq)]
pub enum Report {
    Blocking(Vec<BlockingRow>),
    Matching(Vec<MatchingRow>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    JsonLines,
}

fn write_rows<T: Serialize>(path: &Path, header: &[&str], rows: &[T], format: ReportFormat) -> Result<()> {
    let io = |e| Error::io(path, e);
    match format {
        ReportFormat::Csv => {
            let csv_err = |e: csv::Error| Error::io(path, e.into());
            let mut w = csv::WriterBuilder::new()
                .has_headers(false)
                .from_path(path)
                .map_err(csv_err)?;
            w.write_record(header).map_err(csv_err)?;
            for row in rows {
                w.serialize(row).map_err(csv_err)?;
            }
            w.flush().map_err(io)
        }
        ReportFormat::JsonLines => {
            let mut w = BufWriter::new(File::create(path).map_err(io)?);
            for row in rows {
                let line = serde_json::to_string(row).map_err(|e| Error::Format(e.to_string()))?;
                writeln!(w, "{line}").map_err(io)?;
            }
            w.flush().map_err(io)
        }
    }
}

/// Writes a report with a fixed column order; identical input gives identical bytes.
pub fn emit_report(report: &Report, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let path = path.as_ref();
    match report {
        Report::Blocking(rows) => write_rows(path, &BLOCKING_HEADER, rows, format),
        Report::Matching(rows) => write_rows(path, &MATCHING_HEADER, rows, format),
    }
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse(path, i as u64 + 1, e.to_string()))?);
    }
    Ok(out)
}

pub fn read_blocking_jsonl(path: impl AsRef<Path>) -> Result<Vec<BlockingRow>> {
    read_jsonl(path.as_ref())
}

pub fn read_matching_jsonl(path: impl AsRef<Path>) -> Result<Vec<MatchingRow>> {
    read_jsonl(path.as_ref())
}
