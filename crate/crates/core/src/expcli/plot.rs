//! Interval means for learning-curve plots.

use std::path::Path;

use super::sweep::{read_episodes, RunRows};
use super::fmt_real;
use crate::stats;
use crate::{Error, Result};

pub const PLOT_HEADER: [&str; 6] = ["label", "interval", "mean", "ci_low", "ci_high", "n_runs"];

#[derive(Debug, Clone, PartialEq)]
pub struct PlotRow {
    pub label: String,
    pub interval: usize,
    pub mean: f64,
    /// NaN when fewer than two runs cover the interval.
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_runs: usize,
}

/// Per-label, per-interval statistics over runs of the interval mean.
/// Runs too short to cover an interval are left out of its row.
pub fn plot_rows(runs: &[RunRows], window_size: usize) -> Vec<PlotRow> {
    let mut labels: Vec<&str> = Vec::new();
    for r in runs {
        if !labels.contains(&r.label.as_str()) {
            labels.push(&r.label);
        }
    }
    let mut rows = Vec::new();
    for label in labels {
        let group: Vec<&RunRows> = runs.iter().filter(|r| r.label == label).collect();
        let intervals = group.iter().map(|r| r.episodes.len() / window_size).max().unwrap_or(0);
        for k in 0..intervals {
            let means: Vec<f64> = group
                .iter()
                .filter(|r| r.episodes.len() >= (k + 1) * window_size)
                .map(|r| {
                    let chunk = &r.episodes[k * window_size..(k + 1) * window_size];
                    chunk.iter().map(|e| e.return_).sum::<f64>() / window_size as f64
                })
                .collect();
            let (mean, ci_low, ci_high) = match stats::summarize(&means) {
                Ok(s) => (s.mean, s.ci_low, s.ci_high),
                Err(_) => (stats::mean(&means), f64::NAN, f64::NAN),
            };
            rows.push(PlotRow {
                label: label.to_string(),
                interval: k,
                mean,
                ci_low,
                ci_high,
                n_runs: means.len(),
            });
        }
    }
    rows
}

/// Writes `plot.csv` next to `episodes.csv` and returns its rows.
pub fn emit_plot_data(out_dir: &Path, window_size: usize) -> Result<Vec<PlotRow>> {
    if window_size == 0 {
        return Err(Error::Config("plot window must be positive".into()));
    }
    let rows = plot_rows(&read_episodes(out_dir)?, window_size);
    let path = out_dir.join("plot.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(PLOT_HEADER)?;
    for r in &rows {
        w.write_record([
            r.label.clone(),
            r.interval.to_string(),
            fmt_real(r.mean),
            fmt_real(r.ci_low),
            fmt_real(r.ci_high),
            r.n_runs.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(rows)
}
