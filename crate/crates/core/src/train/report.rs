//! Plain-text results and history tables.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::MetricsReport;
use super::EpochRecord;
use crate::error::Result;

/// One evaluation: a protocol/fold pair with its metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub protocol: String,
    pub fold: String,
    pub metrics: MetricsReport,
    pub config_digest: String,
    pub seed: u64,
}

const RESULT_COLUMNS: [&str; 11] = [
    "protocol",
    "fold",
    "specificity",
    "recall",
    "precision",
    "fp_rate",
    "f1",
    "auc",
    "accuracy",
    "config_digest",
    "seed",
];

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

/// Results as a whitespace-aligned table; metric columns are percentages.
pub fn results_table(records: &[ResultRecord]) -> String {
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            let m = &r.metrics;
            vec![
                r.protocol.clone(),
                r.fold.clone(),
                pct(m.specificity),
                pct(m.recall),
                pct(m.precision),
                pct(m.fp_rate),
                pct(m.f1),
                pct(m.auc),
                pct(m.accuracy),
                r.config_digest.chars().take(12).collect(),
                r.seed.to_string(),
            ]
        })
        .collect();
    table(&RESULT_COLUMNS, &rows)
}

pub fn history_table(history: &[EpochRecord]) -> String {
    let rows: Vec<Vec<String>> = history
        .iter()
        .map(|h| {
            vec![
                h.epoch.to_string(),
                format!("{:.6}", h.lr),
                format!("{:.6}", h.train_loss),
                format!("{:.4}", h.train_acc),
            ]
        })
        .collect();
    table(&["epoch", "lr", "train_loss", "train_acc"], &rows)
}

fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let mut line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c:<w$}"))
            .collect();
        let _ = writeln!(out, "{}", padded.join("  ").trim_end());
    };
    line(header.to_vec());
    for row in rows {
        line(row.iter().map(String::as_str).collect());
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}
