//! ROC and crash-analysis outputs.

use std::path::Path;

use dropdrive_core::eval::{PeakRow, RocCurve, RocPoint, ThresholdChoice};
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::json::{ensure_parent, write_json};

pub const ROC_HEADER: [&str; 3] = ["threshold", "tpr", "fpr"];
pub const PEAK_HEADER: [&str; 5] = [
    "crash_id",
    "first_breach_frames",
    "first_breach_seconds",
    "peak_frames",
    "peak_seconds",
];

/// JSON summary written next to each ROC CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocSummary {
    pub auc: f64,
    pub chosen_threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub policy: String,
    pub positives: usize,
    pub negatives: usize,
}

impl RocSummary {
    pub fn new(curve: &RocCurve, choice: &ThresholdChoice) -> Self {
        Self {
            auc: curve.auc,
            chosen_threshold: choice.threshold,
            tpr: choice.tpr,
            fpr: choice.fpr,
            policy: choice.policy(),
            positives: curve.positives,
            negatives: curve.negatives,
        }
    }
}

pub fn write_roc(csv_path: &Path, curve: &RocCurve, choice: &ThresholdChoice) -> Result<()> {
    ensure_parent(csv_path)?;
    let mut w = csv::Writer::from_path(csv_path).at(csv_path)?;
    w.write_record(ROC_HEADER).at(csv_path)?;
    for p in &curve.points {
        w.write_record([p.threshold.to_string(), p.tpr.to_string(), p.fpr.to_string()])
            .at(csv_path)?;
    }
    w.flush().at(csv_path)?;
    write_json(&csv_path.with_extension("json"), &RocSummary::new(curve, choice))
}

pub fn read_roc_points(path: &Path) -> Result<Vec<RocPoint>> {
    let mut r = csv::Reader::from_path(path).at(path)?;
    let header = r.headers().at(path)?.clone();
    if header.iter().ne(ROC_HEADER) {
        return Err(Error::format(path, "expected header threshold,tpr,fpr"));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.at(path)?;
        let num = |k: usize| {
            rec[k]
                .parse::<f64>()
                .map_err(|_| Error::format(path, format!("row {}: bad {}", i + 1, ROC_HEADER[k])))
        };
        out.push(RocPoint {
            threshold: num(0)?,
            tpr: num(1)?,
            fpr: num(2)?,
        });
    }
    Ok(out)
}

pub fn write_peaks(path: &Path, rows: &[PeakRow]) -> Result<()> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path).at(path)?;
    w.write_record(PEAK_HEADER).at(path)?;
    let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
    for r in rows {
        w.write_record([
            r.crash_id.to_string(),
            opt(r.first_breach_frames.map(|f| f.to_string())),
            opt(r.first_breach_seconds.map(|s| s.to_string())),
            r.peak_frames.to_string(),
            r.peak_seconds.to_string(),
        ])
        .at(path)?;
    }
    w.flush().at(path)
}
