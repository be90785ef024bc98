//! CSV output of benchmark records.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use super::BenchRecord;
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 17] = [
    "dim",
    "p",
    "T",
    "layout",
    "realization",
    "transfer_mode",
    "reduction_strategy",
    "with_reduction",
    "samples",
    "workers",
    "mean_total_s",
    "mean_compute_s",
    "mean_transfer_s",
    "mean_alloc_s",
    "time_per_volume_update_s",
    "time_per_unknown_update_s",
    "reduced_eigenvalue",
];

/// Extra column written with `extended`.
pub const EXTENDED_COLUMN: &str = "min_total_s";

/// 17 significant digits, enough to recover every `f64` exactly.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn row(record: &BenchRecord, extended: bool) -> Vec<String> {
    let c = &record.config;
    let mut row = vec![
        c.dim.to_string(),
        c.patch_size.to_string(),
        c.patches.to_string(),
        c.layout.to_string(),
        c.realization.to_string(),
        c.transfer_mode.to_string(),
        c.reduction_strategy.to_string(),
        c.with_reduction.to_string(),
        c.samples.to_string(),
        c.workers.to_string(),
        format_float(record.mean_total_s),
        format_float(record.mean_compute_s),
        format_float(record.mean_transfer_s),
        format_float(record.mean_alloc_s),
        format_float(record.time_per_volume_update_s),
        format_float(record.time_per_unknown_update_s),
        record
            .reduced_eigenvalue
            .map(format_float)
            .unwrap_or_default(),
    ];
    if extended {
        row.push(format_float(record.min_total_s));
    }
    row
}

/// Writes the header and one row per record, in the given order.
pub fn emit_csv<W: Write>(records: &[BenchRecord], writer: W, extended: bool) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = CSV_HEADER.to_vec();
    if extended {
        header.push(EXTENDED_COLUMN);
    }
    w.write_record(&header)?;
    for record in records {
        w.write_record(row(record, extended))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(records: &[BenchRecord], path: &Path, extended: bool) -> Result<()> {
    let file = File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    emit_csv(records, file, extended).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })
}
