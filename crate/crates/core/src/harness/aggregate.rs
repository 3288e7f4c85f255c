use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::metrics::{read_metrics, MetricsRow, COLUMNS};
use super::stats::mean_std;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub step: u64,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

/// Across-seed statistics of completed runs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub rows: Vec<SummaryRow>,
    pub completed: Vec<PathBuf>,
    pub failed: Vec<PathBuf>,
    /// Mean and population std of the last row's eval_return.
    pub final_eval: Option<(f64, f64)>,
}

impl RunSummary {
    pub fn get(&self, step: u64, metric: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.step == step && r.metric == metric)
    }

    /// Long format: `step,metric,mean,std,n`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["step", "metric", "mean", "std", "n"])?;
        for r in &self.rows {
            w.write_record([
                r.step.to_string(),
                r.metric.clone(),
                r.mean.to_string(),
                r.std.to_string(),
                r.n.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_report<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "completed runs: {}", self.completed.len())?;
        for f in &self.failed {
            writeln!(out, "excluded (aborted): {}", f.display())?;
        }
        if let Some((m, s)) = self.final_eval {
            writeln!(out, "final eval return: {m:.4} ± {s:.4}")?;
        }
        Ok(())
    }
}

/// Per-step mean and population standard deviation over the given runs.
/// Runs that end in an error row are excluded; step grids must agree.
pub fn aggregate(paths: &[PathBuf]) -> Result<RunSummary> {
    if paths.is_empty() {
        return Err(Error::Argument("aggregate needs at least one metrics file".into()));
    }
    let mut runs: Vec<(PathBuf, Vec<MetricsRow>)> = Vec::new();
    let mut failed = Vec::new();
    for p in paths {
        let rows = read_metrics(p)?;
        if rows.iter().any(|r| !r.is_ok()) {
            failed.push(p.clone());
        } else {
            runs.push((p.clone(), rows));
        }
    }
    if runs.is_empty() {
        return Err(Error::Argument("every metrics file ends in an error".into()));
    }
    let grid: Vec<u64> = runs[0].1.iter().map(|r| r.step).collect();
    for (p, rows) in &runs[1..] {
        if rows.iter().map(|r| r.step).ne(grid.iter().copied()) {
            return Err(Error::Input {
                path: p.display().to_string(),
                msg: format!("step grid differs from {}", runs[0].0.display()),
            });
        }
    }
    let metric_order: Vec<&str> = COLUMNS[1..COLUMNS.len() - 1].to_vec();
    let mut out = Vec::new();
    for (i, step) in grid.iter().enumerate() {
        let mut per_metric: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for (_, rows) in &runs {
            for (name, value) in rows[i].metrics() {
                if let Some(v) = value.filter(|v| v.is_finite()) {
                    per_metric.entry(name).or_default().push(v);
                }
            }
        }
        for name in &metric_order {
            if let Some(values) = per_metric.get(name) {
                let (mean, std) = mean_std(values);
                out.push(SummaryRow {
                    step: *step,
                    metric: name.to_string(),
                    mean,
                    std,
                    n: values.len(),
                });
            }
        }
    }
    let finals: Vec<f64> = runs
        .iter()
        .filter_map(|(_, rows)| rows.last().and_then(|r| r.eval_return))
        .collect();
    let mut completed: Vec<PathBuf> = runs.into_iter().map(|(p, _)| p).collect();
    completed.sort();
    failed.sort();
    Ok(RunSummary {
        rows: out,
        completed,
        failed,
        final_eval: (!finals.is_empty()).then(|| mean_std(&finals)),
    })
}
