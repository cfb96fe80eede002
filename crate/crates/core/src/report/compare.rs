//! Summary table across runs, read back from their `rounds.csv` files.

use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::ClientId;
use crate::error::{Error, Result};

use super::{fmt_g6, moving_average};

#[derive(Debug, Clone, PartialEq)]
pub struct RoundsRow {
    pub round: usize,
    pub selected_ids: Vec<ClientId>,
    pub test_accuracy: f64,
    pub test_loss: f64,
    pub selection_time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CompareMetric {
    FinalAccuracy,
    FinalMaAccuracy,
    BestAccuracy,
    RoundsTo90,
    MeanSelectionTime,
}

impl CompareMetric {
    pub const ALL: [CompareMetric; 5] = [
        CompareMetric::FinalAccuracy,
        CompareMetric::FinalMaAccuracy,
        CompareMetric::BestAccuracy,
        CompareMetric::RoundsTo90,
        CompareMetric::MeanSelectionTime,
    ];

    pub fn column(self) -> &'static str {
        match self {
            CompareMetric::FinalAccuracy => "final_accuracy",
            CompareMetric::FinalMaAccuracy => "final_ma_accuracy",
            CompareMetric::BestAccuracy => "best_accuracy",
            CompareMetric::RoundsTo90 => "rounds_to_90",
            CompareMetric::MeanSelectionTime => "mean_selection_time_s",
        }
    }
}

impl fmt::Display for CompareMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.column())
    }
}

impl FromStr for CompareMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CompareMetric::ALL
            .into_iter()
            .find(|m| m.column() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = CompareMetric::ALL.iter().map(|m| m.column()).collect();
                Error::Usage(format!("unknown metric '{s}' (expected one of {})", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub run: String,
    pub final_accuracy: f64,
    pub final_ma_accuracy: f64,
    pub best_accuracy: f64,
    /// First round whose moving average reaches 90% of the run's final moving average.
    pub rounds_to_90: usize,
    /// Mean over strategy rounds; the bootstrap round is excluded.
    pub mean_selection_time_s: f64,
}

impl CompareRow {
    fn cell(&self, metric: CompareMetric) -> String {
        match metric {
            CompareMetric::FinalAccuracy => fmt_g6(self.final_accuracy),
            CompareMetric::FinalMaAccuracy => fmt_g6(self.final_ma_accuracy),
            CompareMetric::BestAccuracy => fmt_g6(self.best_accuracy),
            CompareMetric::RoundsTo90 => self.rounds_to_90.to_string(),
            CompareMetric::MeanSelectionTime => fmt_g6(self.mean_selection_time_s),
        }
    }
}

const HEADER: [&str; 5] = ["round", "selected_ids", "test_accuracy", "test_loss", "selection_time_s"];

pub fn read_rounds_csv(path: &Path) -> Result<Vec<RoundsRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let origin = path.display().to_string();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: origin.clone(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(parse_err(1, format!("expected header {}", HEADER.join(","))));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| parse_err(line, e.to_string()))?;
        let float = |idx: usize| -> Result<f64> {
            record[idx]
                .parse::<f64>()
                .map_err(|_| parse_err(line, format!("bad {} '{}'", HEADER[idx], &record[idx])))
        };
        let round = record[0]
            .parse::<usize>()
            .map_err(|_| parse_err(line, format!("bad round '{}'", &record[0])))?;
        let selected_ids = if record[1].is_empty() {
            Vec::new()
        } else {
            record[1]
                .split(';')
                .map(|s| s.parse::<ClientId>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| parse_err(line, format!("bad selected_ids '{}'", &record[1])))?
        };
        rows.push(RoundsRow {
            round,
            selected_ids,
            test_accuracy: float(2)?,
            test_loss: float(3)?,
            selection_time_s: float(4)?,
        });
    }
    if rows.is_empty() {
        return Err(parse_err(1, "no data rows".into()));
    }
    Ok(rows)
}

fn rounds_file(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join("rounds.csv")
    } else {
        path.to_path_buf()
    }
}

fn run_name(path: &Path) -> String {
    let named = if path.is_dir() { Some(path) } else { path.parent() };
    named
        .and_then(|p| p.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

pub fn summarize(run: String, rows: &[RoundsRow], window: usize) -> Result<CompareRow> {
    let acc: Vec<f64> = rows.iter().map(|r| r.test_accuracy).collect();
    let ma = moving_average(&acc, window)?;
    let final_ma = *ma.last().ok_or_else(|| Error::Usage(format!("run '{run}' has no rounds")))?;
    let target = 0.9 * final_ma;
    let hit = ma.iter().position(|&v| v >= target).unwrap_or(ma.len() - 1);
    let timed: Vec<f64> = rows.iter().filter(|r| r.round > 0).map(|r| r.selection_time_s).collect();
    let mean_time = if timed.is_empty() {
        0.0
    } else {
        timed.iter().sum::<f64>() / timed.len() as f64
    };
    Ok(CompareRow {
        run,
        final_accuracy: acc[acc.len() - 1],
        final_ma_accuracy: final_ma,
        best_accuracy: acc.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        rounds_to_90: rows[hit].round,
        mean_selection_time_s: mean_time,
    })
}

/// Each path is a run directory (containing `rounds.csv`) or a rounds file.
/// Rows come back sorted by run name.
pub fn compare_runs(paths: &[PathBuf], window: usize) -> Result<Vec<CompareRow>> {
    if paths.len() < 2 {
        return Err(Error::Usage("compare needs at least two runs".into()));
    }
    let mut runs = Vec::with_capacity(paths.len());
    for p in paths {
        let rows = read_rounds_csv(&rounds_file(p))?;
        runs.push((run_name(p), rows));
    }
    let expected = runs[0].1.len();
    if let Some((name, rows)) = runs.iter().find(|(_, rows)| rows.len() != expected) {
        return Err(Error::Usage(format!(
            "round counts differ: '{}' has {expected}, '{name}' has {}",
            runs[0].0,
            rows.len()
        )));
    }
    let mut out = runs
        .into_iter()
        .map(|(name, rows)| summarize(name, &rows, window))
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| a.run.cmp(&b.run));
    Ok(out)
}

fn columns(metric: Option<CompareMetric>) -> Vec<CompareMetric> {
    metric.map_or_else(|| CompareMetric::ALL.to_vec(), |m| vec![m])
}

pub fn format_compare_csv(rows: &[CompareRow], metric: Option<CompareMetric>) -> String {
    let cols = columns(metric);
    let mut out = String::from("run");
    for c in &cols {
        out.push(',');
        out.push_str(c.column());
    }
    out.push('\n');
    for row in rows {
        out.push_str(&row.run);
        for c in &cols {
            out.push(',');
            out.push_str(&row.cell(*c));
        }
        out.push('\n');
    }
    out
}

pub fn format_compare_text(rows: &[CompareRow], metric: Option<CompareMetric>) -> String {
    let cols = columns(metric);
    let mut table: Vec<Vec<String>> = Vec::with_capacity(rows.len() + 1);
    table.push(
        std::iter::once("run".to_string())
            .chain(cols.iter().map(|c| c.column().to_string()))
            .collect(),
    );
    for row in rows {
        table.push(
            std::iter::once(row.run.clone())
                .chain(cols.iter().map(|c| row.cell(*c)))
                .collect(),
        );
    }
    let widths: Vec<usize> = (0..=cols.len())
        .map(|j| table.iter().map(|r| r[j].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in &table {
        let cells: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(j, c)| {
                if j == 0 {
                    format!("{c:<w$}", w = widths[j])
                } else {
                    format!("{c:>w$}", w = widths[j])
                }
            })
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    }
    out
}
