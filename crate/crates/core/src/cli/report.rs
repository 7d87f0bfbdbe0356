//! Comparison of training runs from their metrics tables.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};

/// Series written as plot data, one file per metric.
pub const PLOT_METRICS: [&str; 6] = [
    "valid_tool_reward",
    "mean_tool_calls",
    "accuracy",
    "mean_reward",
    "format_quality",
    "frame_calls_per_success",
];

/// A metrics table loaded from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTable {
    pub label: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl MetricsTable {
    pub fn parse(label: impl Into<String>, text: &str) -> Result<Self> {
        let label = label.into();
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = reader.headers()?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.with_context(|| format!("{label}: row {}", i + 1))?;
            let row = record
                .iter()
                .map(|v| {
                    v.parse::<f64>()
                        .with_context(|| format!("{label}: row {}: bad number '{v}'", i + 1))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        let table = MetricsTable { label, header, rows };
        for col in ["step", "valid_tool_reward", "mean_tool_calls", "accuracy"] {
            table.column(col)?;
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let label = path
            .file_name()
            .map(|s| s.to_string_lossy().trim_end_matches(".csv").to_string())
            .unwrap_or_else(|| path.display().to_string());
        Self::parse(label, &text)
    }

    fn column_index(&self, name: &str) -> Result<usize> {
        match self.header.iter().position(|h| h == name) {
            Some(i) => Ok(i),
            None => bail!("{}: no column '{name}'", self.label),
        }
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let i = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn last(&self, name: &str) -> Result<Option<f64>> {
        Ok(self.column(name)?.last().copied())
    }
}

/// First step whose value reaches `threshold`.
pub fn first_crossing(steps: &[f64], values: &[f64], threshold: f64) -> Option<usize> {
    steps
        .iter()
        .zip(values)
        .find(|(_, v)| **v >= threshold)
        .map(|(s, _)| *s as usize)
}

/// Per-run summary line data.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub label: String,
    pub steps: usize,
    pub crossing: Option<usize>,
    pub final_tool_calls: Option<f64>,
    pub final_accuracy: Option<f64>,
}

pub fn summarize(table: &MetricsTable, threshold: f64) -> Result<RunSummary> {
    Ok(RunSummary {
        label: table.label.clone(),
        steps: table.rows.len(),
        crossing: first_crossing(&table.column("step")?, &table.column("valid_tool_reward")?, threshold),
        final_tool_calls: table.last("mean_tool_calls")?,
        final_accuracy: table.last("accuracy")?,
    })
}

/// Fail unless every table has the first table's columns.
pub fn check_schemas(tables: &[MetricsTable]) -> Result<()> {
    let Some(first) = tables.first() else {
        bail!("report needs at least one metrics file");
    };
    for t in &tables[1..] {
        if t.header != first.header {
            bail!(
                "schema mismatch: {} and {} have different columns",
                first.label,
                t.label
            );
        }
    }
    Ok(())
}

/// Make run labels unique by suffixing repeats.
pub fn dedupe_labels(tables: &mut [MetricsTable]) {
    let mut seen: Vec<String> = Vec::new();
    for t in tables.iter_mut() {
        let base = t.label.clone();
        let mut k = 2;
        while seen.contains(&t.label) {
            t.label = format!("{base}#{k}");
            k += 1;
        }
        seen.push(t.label.clone());
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.4}"))
}

pub fn render_summary(summaries: &[RunSummary], threshold: f64) -> String {
    let width = summaries.iter().map(|s| s.label.len()).max().unwrap_or(3).max(3);
    let mut out = String::new();
    writeln!(out, "valid-tool-reward threshold: {threshold}").unwrap();
    writeln!(
        out,
        "{:<width$}  {:>6}  {:>8}  {:>17}  {:>14}",
        "run", "steps", "crossing", "final_tool_calls", "final_accuracy"
    )
    .unwrap();
    for s in summaries {
        writeln!(
            out,
            "{:<width$}  {:>6}  {:>8}  {:>17}  {:>14}",
            s.label,
            s.steps,
            s.crossing.map_or_else(|| "none".into(), |c| c.to_string()),
            fmt_opt(s.final_tool_calls),
            fmt_opt(s.final_accuracy),
        )
        .unwrap();
    }
    out
}

/// Step-aligned columns of `metric`, one per run. Runs shorter than the
/// longest leave blank cells.
pub fn plot_data(tables: &[MetricsTable], metric: &str) -> Result<String> {
    let mut columns = Vec::with_capacity(tables.len());
    let mut steps: Vec<usize> = Vec::new();
    for t in tables {
        let s: Vec<usize> = t.column("step")?.into_iter().map(|x| x as usize).collect();
        let v = t.column(metric)?;
        steps.extend(&s);
        columns.push(s.into_iter().zip(v).collect::<std::collections::BTreeMap<_, _>>());
    }
    steps.sort_unstable();
    steps.dedup();
    let mut out = String::from("step");
    for t in tables {
        out.push('\t');
        out.push_str(&t.label);
    }
    out.push('\n');
    for step in steps {
        out.push_str(&step.to_string());
        for c in &columns {
            out.push('\t');
            if let Some(v) = c.get(&step) {
                out.push_str(&v.to_string());
            }
        }
        out.push('\n');
    }
    Ok(out)
}
