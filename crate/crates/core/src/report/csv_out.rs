use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::cluster::GridResult;
use crate::error::{Error, Result};
use crate::sim::{ExperimentResult, TimingRow};

use super::moving_average;
use super::svg::{histogram_svg, line_chart_svg, write_svg, Series};

/// `printf("%.6g")`: six significant digits, trailing zeros dropped.
pub fn fmt_g6(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{mantissa}e{sign}{:02}", exp.abs());
    }
    let decimals = (5 - exp).max(0) as usize;
    trim_zeros(&format!("{v:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn join_ids(ids: impl IntoIterator<Item = u32>) -> String {
    ids.into_iter().map(|i| i.to_string()).collect::<Vec<_>>().join(";")
}

pub fn rounds_csv(result: &ExperimentResult) -> String {
    let mut out = String::from("round,selected_ids,test_accuracy,test_loss,selection_time_s\n");
    for r in &result.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.round,
            join_ids(r.selected_ids()),
            fmt_g6(r.test_accuracy),
            fmt_g6(r.test_loss),
            fmt_g6(r.selection_time_s)
        );
    }
    out
}

pub fn participation_csv(result: &ExperimentResult) -> String {
    let mut out = String::from("client_id,count\n");
    for (id, count) in &result.participation {
        let _ = writeln!(out, "{id},{count}");
    }
    out
}

/// `None` when no round was clustered.
pub fn clusters_csv(result: &ExperimentResult) -> Option<String> {
    let mut out = String::from("round,client_id,cluster_id\n");
    let mut any = false;
    for r in &result.records {
        if let Some(snap) = &r.clusters {
            any = true;
            for (id, label) in snap.members.iter().zip(snap.assignment.labels()) {
                let _ = writeln!(out, "{},{id},{label}", r.round);
            }
        }
    }
    any.then_some(out)
}

pub fn timing_csv(rows: &[TimingRow]) -> String {
    let mut out = String::from("strategy,n_clients,mean_s,min_s,max_s\n");
    for t in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            t.strategy,
            t.n_clients,
            fmt_g6(t.stats.mean_s),
            fmt_g6(t.stats.min_s),
            fmt_g6(t.stats.max_s)
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunArtifactSet {
    pub rounds: PathBuf,
    pub participation: PathBuf,
    pub clusters: Option<PathBuf>,
    pub timing: PathBuf,
    pub accuracy_svg: PathBuf,
    pub participation_svg: PathBuf,
    pub config_echo: PathBuf,
}

/// Writes the CSV tables. Pure in `result`: same result, same bytes.
pub fn emit_csv(result: &ExperimentResult, dir: &Path) -> Result<(PathBuf, PathBuf, Option<PathBuf>, PathBuf)> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let rounds = dir.join("rounds.csv");
    write_file(&rounds, &rounds_csv(result))?;
    let participation = dir.join("participation.csv");
    write_file(&participation, &participation_csv(result))?;
    let clusters = match clusters_csv(result) {
        Some(text) => {
            let p = dir.join("clusters.csv");
            write_file(&p, &text)?;
            Some(p)
        }
        None => None,
    };
    let timing = emit_timing_csv(&result.timing, dir)?;
    Ok((rounds, participation, clusters, timing))
}

pub fn emit_timing_csv(rows: &[TimingRow], dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("timing.csv");
    write_file(&path, &timing_csv(rows))?;
    Ok(path)
}

pub fn emit_gridsearch_csv(results: &[GridResult], dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = String::from("rank,metric,linkage,k,mean_silhouette\n");
    for (i, r) in results.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            i + 1,
            r.metric,
            r.linkage,
            r.k,
            fmt_g6(r.mean_silhouette)
        );
    }
    let path = dir.join("gridsearch.csv");
    write_file(&path, &out)?;
    Ok(path)
}

/// CSV tables, both charts and the config echo.
pub fn emit_run_artifacts(result: &ExperimentResult, dir: &Path) -> Result<RunArtifactSet> {
    let (rounds, participation, clusters, timing) = emit_csv(result, dir)?;
    let window = result.config.moving_average_window;
    let acc = moving_average(&result.accuracy_series(), window)?;
    let accuracy_svg = dir.join("accuracy.svg");
    write_svg(
        &line_chart_svg(
            &[Series {
                label: result.config.strategy.label(),
                values: acc,
            }],
            &format!("Test accuracy (moving average, window {window})"),
            "round",
            "accuracy",
        )?,
        &accuracy_svg,
    )?;
    let participation_svg = dir.join("participation.svg");
    let bars: Vec<(String, f64)> = result
        .participation
        .iter()
        .map(|(id, c)| (id.to_string(), *c as f64))
        .collect();
    write_svg(
        &histogram_svg(&bars, "Participations per client", "client", "participations")?,
        &participation_svg,
    )?;
    let config_echo = dir.join("config.toml");
    write_file(&config_echo, &result.config.to_toml_string()?)?;
    Ok(RunArtifactSet {
        rounds,
        participation,
        clusters,
        timing,
        accuracy_svg,
        participation_svg,
        config_echo,
    })
}
