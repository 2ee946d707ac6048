//! CSV and JSON writers with fixed headers and number formatting.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::dynamics::{LoopSweepRow, TimePoint};
use crate::ep::{GapMap, SweepTable};
use crate::{Error, Result};

pub const RATIO_SWEEP_HEADER: [&str; 6] = [
    "ratio",
    "gamma2",
    "enantiomer",
    "branch",
    "delta_ep",
    "omega12_ep",
];
pub const TIMESERIES_HEADER: [&str; 12] = [
    "tau",
    "re_c1",
    "im_c1",
    "re_c2",
    "im_c2",
    "re_aplus",
    "im_aplus",
    "re_aminus",
    "im_aminus",
    "pop_plus_norm",
    "pop_minus_norm",
    "branch_label",
];
pub const LOOP_SWEEP_HEADER: [&str; 11] = [
    "loop_time",
    "direction",
    "enantiomer",
    "initial",
    "pop_plus_norm",
    "pop_minus_norm",
    "pop_plus_raw",
    "pop_minus_raw",
    "eigenvalue_swap",
    "dominant",
    "status",
];
/// Floor applied to log₁₀ gaps in the map output.
pub const LOG_GAP_FLOOR: f64 = -16.0;

/// Rows of strings under a fixed header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    /// Records keyed by header name.
    fn to_json_records(&self) -> Vec<serde_json::Value> {
        self.rows
            .iter()
            .map(|row| {
                let fields = self.header.iter().zip(row).map(|(h, v)| {
                    let value = match v.parse::<f64>() {
                        Ok(x) if x.is_finite() => serde_json::json!(x),
                        _ => serde_json::Value::String(v.clone()),
                    };
                    (h.clone(), value)
                });
                serde_json::Value::Object(fields.collect())
            })
            .collect()
    }
}

/// 17 significant digits in scientific notation.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn ratio_sweep_table(table: &SweepTable) -> Table {
    let mut t = Table::new(&RATIO_SWEEP_HEADER);
    for r in &table.rows {
        t.rows.push(vec![
            fmt_float(r.ratio),
            fmt_float(r.gamma2),
            r.enantiomer.as_str().to_string(),
            r.branch.to_string(),
            fmt_float(r.delta_ep),
            fmt_float(r.omega12_ep),
        ]);
    }
    t
}

/// Header is `<x>,<y>,log10_gap_R,log10_gap_L`, i.e. the contract header
/// `delta,omega12,...` for the default axes. Gaps are clamped at −16.
pub fn gap_map_table(map: &GapMap) -> Table {
    let x = map.x_axis.axis.as_str();
    let y = map.y_axis.axis.as_str();
    let mut t = Table::new(&[x, y, "log10_gap_R", "log10_gap_L"]);
    for r in &map.records {
        t.rows.push(vec![
            fmt_float(r.x),
            fmt_float(r.y),
            fmt_float(r.log10_gap_right.max(LOG_GAP_FLOOR)),
            fmt_float(r.log10_gap_left.max(LOG_GAP_FLOOR)),
        ]);
    }
    t
}

pub fn timeseries_table(points: &[TimePoint]) -> Table {
    let mut t = Table::new(&TIMESERIES_HEADER);
    for p in points {
        t.rows.push(vec![
            fmt_float(p.tau),
            fmt_float(p.c[0].re),
            fmt_float(p.c[0].im),
            fmt_float(p.c[1].re),
            fmt_float(p.c[1].im),
            fmt_float(p.a_plus.re),
            fmt_float(p.a_plus.im),
            fmt_float(p.a_minus.re),
            fmt_float(p.a_minus.im),
            fmt_float(p.pop_plus_norm),
            fmt_float(p.pop_minus_norm),
            p.branch_label.to_string(),
        ]);
    }
    t
}

pub fn loop_sweep_table(rows: &[LoopSweepRow]) -> Table {
    let mut t = Table::new(&LOOP_SWEEP_HEADER);
    for r in rows {
        let mut row = vec![
            fmt_float(r.loop_time),
            r.direction.as_str().to_string(),
            r.enantiomer.as_str().to_string(),
            r.initial.clone(),
        ];
        match &r.summary {
            Some(s) => row.extend([
                fmt_float(s.final_pop_plus_norm),
                fmt_float(s.final_pop_minus_norm),
                fmt_float(s.final_pop_plus_raw),
                fmt_float(s.final_pop_minus_raw),
                s.eigenvalue_swap.to_string(),
                s.dominant_final_state.as_str().to_string(),
            ]),
            None => row.extend(std::iter::repeat_n(String::new(), 6)),
        }
        row.push(r.status.clone());
        t.rows.push(row);
    }
    t
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// RFC 4180 CSV, quoting only where needed.
pub fn write_csv(path: &Path, table: &Table) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    w.write_record(&table.header)
        .map_err(|e| csv_err(path, e))?;
    for row in &table.rows {
        w.write_record(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => io_err(path, source),
        other => Error::Serialize(format!("{}: {other:?}", path.display())),
    }
}

/// Pretty JSON with a trailing newline. Key order follows struct field order.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| Error::Serialize(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn write_table_json(path: &Path, table: &Table) -> Result<()> {
    write_json(path, &table.to_json_records())
}
