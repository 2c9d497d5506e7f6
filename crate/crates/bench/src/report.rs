use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::scenario::ScenarioKind;

/// Aggregated measurements of one (scenario, field count) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub scenario: ScenarioKind,
    pub fields: usize,
    /// Successful requests over all runs.
    pub requests: u64,
    /// Mean of the per-run mean latencies.
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub p99_ms: f64,
    /// Mean of the per-run throughputs.
    pub rps: f64,
    pub errors: u64,
    pub run_mean_ms: Vec<f64>,
    pub run_rps: Vec<f64>,
}

impl BenchRow {
    /// Standard error of [`mean_ms`](Self::mean_ms) from the run-to-run spread.
    pub fn mean_ms_stderr(&self) -> f64 {
        stderr(&self.run_mean_ms)
    }

    pub fn rps_stderr(&self) -> f64 {
        stderr(&self.run_rps)
    }
}

fn stderr(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    /// Measured seconds per run, after warmup.
    pub duration_s: f64,
    pub warmup_s: f64,
    pub concurrency: usize,
    pub runs: usize,
    pub seed: u64,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn row(&self, scenario: ScenarioKind, fields: usize) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.scenario == scenario && r.fields == fields)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" | "markdown-table" => Ok(ReportFormat::Markdown),
            _ => Err(format!("unknown format `{s}` (expected csv, json or markdown)")),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
            ReportFormat::Markdown => "markdown",
        })
    }
}

pub const COLUMNS: [&str; 9] =
    ["scenario", "fields", "requests", "mean_ms", "p50_ms", "p95_ms", "p99_ms", "rps", "errors"];

fn cells(row: &BenchRow) -> [String; 9] {
    [
        row.scenario.to_string(),
        row.fields.to_string(),
        row.requests.to_string(),
        format!("{:.3}", row.mean_ms),
        format!("{:.3}", row.p50_ms),
        format!("{:.3}", row.p95_ms),
        format!("{:.3}", row.p99_ms),
        format!("{:.1}", row.rps),
        row.errors.to_string(),
    ]
}

pub fn emit_report(report: &BenchReport, format: ReportFormat, out: &mut dyn Write) -> io::Result<()> {
    match format {
        ReportFormat::Csv => {
            writeln!(out, "{}", COLUMNS.join(","))?;
            for row in &report.rows {
                writeln!(out, "{}", cells(row).join(","))?;
            }
        }
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut *out, report)?;
            writeln!(out)?;
        }
        ReportFormat::Markdown => {
            writeln!(
                out,
                "{} run(s) of {} s after {} s warmup, concurrency {}, seed {}\n",
                report.runs, report.duration_s, report.warmup_s, report.concurrency, report.seed
            )?;
            writeln!(out, "| {} |", COLUMNS.join(" | "))?;
            let rule: Vec<&str> =
                COLUMNS.iter().enumerate().map(|(i, _)| if i == 0 { "---" } else { "---:" }).collect();
            writeln!(out, "| {} |", rule.join(" | "))?;
            for row in &report.rows {
                writeln!(out, "| {} |", cells(row).join(" | "))?;
            }
        }
    }
    Ok(())
}
