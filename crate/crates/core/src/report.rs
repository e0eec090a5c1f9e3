//! Report formatting: aligned text tables plus JSON with identical values.
//!
//! Accuracy-like values are rounded to 2 decimals and MCC to 4 before either
//! format is written, so the JSON parses back to exactly what the table
//! shows. Nothing time- or host-dependent goes into report files; identical
//! runs produce byte-identical output.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::downstream::EvalReport;
use crate::error::{Error, Result};

pub fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

pub fn round4(v: f64) -> f64 {
    (v * 10_000.0).round() / 10_000.0
}

/// An `EvalReport` with presentation rounding applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundedReport {
    pub label: String,
    pub n: usize,
    pub accuracy: f64,
    pub mcc: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub train_accuracy: Option<f64>,
    pub generalization_gap: Option<f64>,
}

impl RoundedReport {
    pub fn new(label: &str, r: &EvalReport) -> Self {
        RoundedReport {
            label: label.to_string(),
            n: r.n,
            accuracy: round2(r.accuracy),
            mcc: round4(r.mcc),
            tp: r.tp,
            fp: r.fp,
            tn: r.tn,
            fn_: r.fn_,
            train_accuracy: r.train_accuracy.map(round2),
            generalization_gap: r.generalization_gap.map(round2),
        }
    }
}

fn opt(v: Option<f64>, width: usize, decimals: usize) -> String {
    match v {
        Some(v) => format!("{v:>width$.decimals$}"),
        None => format!("{:>width$}", "undefined"),
    }
}

pub fn render_reports_text(reports: &[RoundedReport]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<16} {:>7} {:>9} {:>8} {:>5} {:>5} {:>5} {:>5} {:>10} {:>9}\n",
        "report", "samples", "accuracy", "mcc", "tp", "fp", "tn", "fn", "train_acc", "gap"
    ));
    for r in reports {
        out.push_str(&format!(
            "{:<16} {:>7} {:>9.2} {:>8.4} {:>5} {:>5} {:>5} {:>5} {} {}\n",
            r.label,
            r.n,
            r.accuracy,
            r.mcc,
            r.tp,
            r.fp,
            r.tn,
            r.fn_,
            opt(r.train_accuracy, 10, 2),
            opt(r.generalization_gap, 9, 2),
        ));
    }
    out
}

/// Write `<prefix>.txt` and `<prefix>.json` carrying the same values.
pub fn write_report(reports: &[(String, EvalReport)], prefix: &Path) -> Result<(PathBuf, PathBuf)> {
    if reports.is_empty() {
        return Err(Error::Contract("write_report: no reports".into()));
    }
    let rounded: Vec<RoundedReport> =
        reports.iter().map(|(label, r)| RoundedReport::new(label, r)).collect();
    let text_path = prefix.with_extension("txt");
    let json_path = prefix.with_extension("json");
    std::fs::write(&text_path, render_reports_text(&rounded))?;
    let json = serde_json::to_string_pretty(&serde_json::json!({ "reports": rounded }))
        .map_err(|e| Error::Data(e.to_string()))?;
    std::fs::write(&json_path, json)?;
    Ok((text_path, json_path))
}

pub fn read_report_json(path: &Path) -> Result<Vec<RoundedReport>> {
    let text = std::fs::read_to_string(path)?;
    let v: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Data(e.to_string()))?;
    let reports = v
        .get("reports")
        .ok_or_else(|| Error::Data("report JSON missing 'reports'".into()))?;
    serde_json::from_value(reports.clone()).map_err(|e| Error::Data(e.to_string()))
}

/// One ablation variant aggregated over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub mode: String,
    pub context_mode: String,
    pub use_identity: bool,
    pub seeds: Vec<u64>,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub mcc_mean: f64,
    pub mcc_std: f64,
    pub gap_mean: f64,
}

pub fn render_ablation_text(rows: &[AblationRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<22} {:<7} {:<13} {:<9} {:>6} {:>9} {:>8} {:>8} {:>8} {:>8}\n",
        "variant", "mode", "context", "identity", "seeds", "acc_mean", "acc_std", "mcc_mean", "mcc_std", "gap"
    ));
    for r in rows {
        out.push_str(&format!(
            "{:<22} {:<7} {:<13} {:<9} {:>6} {:>9.2} {:>8.2} {:>8.4} {:>8.4} {:>8.2}\n",
            r.variant,
            r.mode,
            r.context_mode,
            if r.use_identity { "on" } else { "off" },
            r.seeds.len(),
            r.accuracy_mean,
            r.accuracy_std,
            r.mcc_mean,
            r.mcc_std,
            r.gap_mean,
        ));
    }
    out
}

pub fn write_ablation(rows: &[AblationRow], prefix: &Path) -> Result<(PathBuf, PathBuf)> {
    if rows.is_empty() {
        return Err(Error::Contract("write_ablation: no rows".into()));
    }
    let text_path = prefix.with_extension("txt");
    let json_path = prefix.with_extension("json");
    std::fs::write(&text_path, render_ablation_text(rows))?;
    let json = serde_json::to_string_pretty(&serde_json::json!({ "variants": rows }))
        .map_err(|e| Error::Data(e.to_string()))?;
    std::fs::write(&json_path, json)?;
    Ok((text_path, json_path))
}
