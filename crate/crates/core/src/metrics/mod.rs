//! Curves, summary tables and exports.
//!
//! Curves always take the running max per problem first and average across
//! problems second.

mod svg;

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::icrl::EpisodeLog;
use crate::task::TaskKind;

pub use svg::render_svg;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("empty series")]
    Empty,
    #[error("series lengths differ: {0:?}")]
    Ragged(Vec<usize>),
    #[error("{method}/{task}: problem {problem_id} has episodes {episodes:?}, expected 1..={expected}")]
    MissingEpisodes {
        method: String,
        task: String,
        problem_id: String,
        episodes: Vec<u32>,
        expected: usize,
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: {reason}")]
    Jsonl { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub label: String,
    pub values: Vec<f64>,
}

impl MetricSeries {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            label: label.into(),
            values,
        }
    }
}

/// Prefix maximum.
pub fn running_max_series(values: &[f64]) -> Result<Vec<f64>, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut best = f64::NEG_INFINITY;
    Ok(values
        .iter()
        .map(|&v| {
            best = best.max(v);
            best
        })
        .collect())
}

/// Pointwise mean of equally long series.
pub fn aggregate_mean(series: &[Vec<f64>]) -> Result<Vec<f64>, MetricsError> {
    let first = series.first().ok_or(MetricsError::Empty)?;
    if series.iter().any(|s| s.len() != first.len()) {
        return Err(MetricsError::Ragged(series.iter().map(Vec::len).collect()));
    }
    let n = series.len() as f64;
    Ok((0..first.len()).map(|i| series.iter().map(|s| s[i]).sum::<f64>() / n).collect())
}

/// Sample standard deviation over `sqrt(n)`; 0 for fewer than two values.
pub fn standard_error(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    var.sqrt() / (n as f64).sqrt()
}

/// `88 ± 0.7`: the mean to a whole number, the error to one decimal.
pub fn format_pm(mean: f64, stderr: f64) -> String {
    format!("{mean:.0} ± {stderr:.1}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub task: String,
    pub episode: u32,
    pub mean: f64,
    pub running_max_mean: f64,
    /// Standard error of the running-max values across problems.
    pub stderr: f64,
}

/// Per (method, task): metric curves per problem, ordered by problem id.
pub fn problem_curves(logs: &[EpisodeLog]) -> Result<BTreeMap<(String, TaskKind), Vec<(String, Vec<f64>)>>, MetricsError> {
    let mut grouped: BTreeMap<(String, TaskKind), BTreeMap<String, Vec<(u32, f64)>>> = BTreeMap::new();
    for l in logs {
        grouped
            .entry((l.method.clone(), l.task))
            .or_default()
            .entry(l.problem_id.clone())
            .or_default()
            .push((l.episode, l.metric));
    }
    let mut out = BTreeMap::new();
    for ((method, task), problems) in grouped {
        let expected = problems.values().map(Vec::len).max().unwrap_or(0);
        let mut curves = Vec::new();
        for (problem_id, mut points) in problems {
            points.sort_by_key(|p| p.0);
            let episodes: Vec<u32> = points.iter().map(|p| p.0).collect();
            if episodes != (1..=expected as u32).collect::<Vec<_>>() {
                return Err(MetricsError::MissingEpisodes {
                    method,
                    task: task.name().to_string(),
                    problem_id,
                    episodes,
                    expected,
                });
            }
            curves.push((problem_id, points.into_iter().map(|p| p.1).collect()));
        }
        out.insert((method, task), curves);
    }
    Ok(out)
}

/// One row per (method, task, episode).
pub fn summarize(logs: &[EpisodeLog]) -> Result<Vec<SummaryRow>, MetricsError> {
    let mut rows = Vec::new();
    for ((method, task), curves) in problem_curves(logs)? {
        let raw: Vec<Vec<f64>> = curves.iter().map(|c| c.1.clone()).collect();
        let maxed = raw.iter().map(|c| running_max_series(c)).collect::<Result<Vec<_>, _>>()?;
        let mean = aggregate_mean(&raw)?;
        let running = aggregate_mean(&maxed)?;
        for i in 0..mean.len() {
            let column: Vec<f64> = maxed.iter().map(|c| c[i]).collect();
            rows.push(SummaryRow {
                method: method.clone(),
                task: task.name().to_string(),
                episode: i as u32 + 1,
                mean: mean[i],
                running_max_mean: running[i],
                stderr: standard_error(&column),
            });
        }
    }
    Ok(rows)
}

/// Mean and running-max-mean curves per (method, task), for plotting.
pub fn curve_series(rows: &[SummaryRow]) -> Vec<MetricSeries> {
    let mut grouped: BTreeMap<(&str, &str), Vec<&SummaryRow>> = BTreeMap::new();
    for r in rows {
        grouped.entry((&r.method, &r.task)).or_default().push(r);
    }
    let mut out = Vec::new();
    for ((method, task), rs) in grouped {
        out.push(MetricSeries::new(format!("{method} {task} mean"), rs.iter().map(|r| r.mean).collect()));
        out.push(MetricSeries::new(
            format!("{method} {task} running max"),
            rs.iter().map(|r| r.running_max_mean).collect(),
        ));
    }
    out
}

const SUMMARY_HEADER: [&str; 6] = ["method", "task", "episode", "mean", "running_max_mean", "stderr"];

pub fn write_summary_csv(rows: &[SummaryRow], out: impl Write) -> Result<(), MetricsError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Token and call totals per (method, task).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostRow {
    pub method: String,
    pub task: String,
    pub episodes: u64,
    pub failed_episodes: u64,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub policy_calls: u64,
    pub judge_calls: u64,
}

pub fn cost_ledger(logs: &[EpisodeLog]) -> Vec<CostRow> {
    let mut grouped: BTreeMap<(String, TaskKind), CostRow> = BTreeMap::new();
    for l in logs {
        let row = grouped.entry((l.method.clone(), l.task)).or_insert_with(|| CostRow {
            method: l.method.clone(),
            task: l.task.name().to_string(),
            ..CostRow::default()
        });
        row.episodes += 1;
        row.failed_episodes += u64::from(l.failed);
        row.tokens_in += l.tokens_in;
        row.tokens_out += l.tokens_out;
        row.policy_calls += u64::from(l.policy_calls);
        row.judge_calls += u64::from(l.judge_calls);
    }
    grouped.into_values().collect()
}

const COST_HEADER: [&str; 8] = [
    "method",
    "task",
    "episodes",
    "failed_episodes",
    "tokens_in",
    "tokens_out",
    "policy_calls",
    "judge_calls",
];

pub fn write_costs_csv(rows: &[CostRow], out: impl Write) -> Result<(), MetricsError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(COST_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_jsonl(logs: &[EpisodeLog], mut out: impl Write) -> Result<(), MetricsError> {
    for l in logs {
        let line = serde_json::to_string(l).expect("EpisodeLog serializes");
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl(input: impl BufRead) -> Result<Vec<EpisodeLog>, MetricsError> {
    let mut logs = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        logs.push(serde_json::from_str(&line).map_err(|e| MetricsError::Jsonl {
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(logs)
}
