//! CSV traces and JSON reports.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nashpl::IterationRecord;
use serde::Serialize;

use crate::{HarnessError, Result};

pub const TRACE_HEADER: [&str; 6] = ["iter", "block", "case", "k", "gap", "grad_sq"];

/// 17 significant digits, enough to read every `f64` back exactly.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `iter,block,case,k,gap,grad_sq`. `block` is 1-based with 0 for the
/// start and cyclic sweeps; a missing case is `none` and a missing `k` is `nan`.
pub fn write_trace_csv(path: &Path, trace: &[IterationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(TRACE_HEADER)?;
    for r in trace {
        w.write_record([
            r.iter.to_string(),
            r.block.map_or(0, |b| b + 1).to_string(),
            r.tag.map_or("none", |t| t.name()).to_string(),
            r.k.map_or_else(|| "nan".to_string(), fmt_num),
            fmt_num(r.gap),
            fmt_num(r.grad_sq),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `iter,sum_f` with `sum_f = Σ_i f_i`.
pub fn write_sum_f_csv(path: &Path, trace: &[IterationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(["iter", "sum_f"])?;
    for r in trace {
        w.write_record([r.iter.to_string(), fmt_num(r.sum_f)])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads one numeric column back from a trace file.
pub fn read_column(path: &Path, column: &str) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let idx = r
        .headers()?
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| HarnessError::Config(format!("{} has no column `{column}`", path.display())))?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            let v = rec.get(idx).unwrap_or("");
            v.parse::<f64>().map_err(|_| HarnessError::Config(format!("{}: bad number `{v}`", path.display())))
        })
        .collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}
