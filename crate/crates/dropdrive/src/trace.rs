//! Drive traces as CSV (`frame,t,angle_deg,vr,entropy,mi,variance,crashed,alert`)
//! with a JSON metadata sidecar.

use std::path::{Path, PathBuf};

use dropdrive_core::monitor::{DriveTrace, Measures, TraceMeta, TraceRow};

use crate::error::{Error, IoContext, Result};
use crate::json::{ensure_parent, read_json, write_json};

pub const TRACE_HEADER: [&str; 9] = ["frame", "t", "angle_deg", "vr", "entropy", "mi", "variance", "crashed", "alert"];

/// `run.csv` -> `run.meta.json`.
pub fn meta_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_trace(path: &Path, trace: &DriveTrace) -> Result<()> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path).at(path)?;
    w.write_record(TRACE_HEADER).at(path)?;
    for r in &trace.rows {
        let m = r.measures;
        w.write_record([
            r.frame.to_string(),
            r.t.to_string(),
            r.angle_deg.to_string(),
            opt(m.vr),
            opt(m.entropy),
            opt(m.mi),
            opt(m.variance),
            u8::from(r.crashed).to_string(),
            u8::from(r.alert).to_string(),
        ])
        .at(path)?;
    }
    w.flush().at(path)?;
    write_json(&meta_path(path), &trace.meta)
}

/// Rows of a trace CSV.
pub fn read_trace_rows(path: &Path) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_path(path).at(path)?;
    let header = r.headers().at(path)?.clone();
    if header.iter().ne(TRACE_HEADER) {
        return Err(Error::format(path, format!("unexpected trace header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.at(path)?;
        let bad = |what: &str| Error::format(path, format!("row {}: bad {what}", line + 1));
        let num = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(TRACE_HEADER[i]));
        let opt = |i: usize| -> Result<Option<f64>> {
            if rec[i].is_empty() {
                Ok(None)
            } else {
                num(i).map(Some)
            }
        };
        let flag = |i: usize| match &rec[i] {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(bad(TRACE_HEADER[i])),
        };
        rows.push(TraceRow {
            frame: rec[0].parse().map_err(|_| bad("frame"))?,
            t: num(1)?,
            angle_deg: num(2)?,
            measures: Measures {
                vr: opt(3)?,
                entropy: opt(4)?,
                mi: opt(5)?,
                variance: opt(6)?,
            },
            crashed: flag(7)?,
            alert: flag(8)?,
        });
    }
    Ok(rows)
}

pub fn read_trace(path: &Path) -> Result<DriveTrace> {
    let rows = read_trace_rows(path)?;
    let meta: TraceMeta = read_json(&meta_path(path))?;
    let trace = DriveTrace { meta, rows };
    trace.validate()?;
    Ok(trace)
}
