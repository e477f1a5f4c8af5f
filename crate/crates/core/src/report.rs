//! Plot-ready output: histogram binning and CSV/JSON writers.
//!
//! Floats are written through the csv/serde_json serializers, which emit
//! the shortest decimal string that round-trips, so re-reading a report
//! reproduces the numbers bit-for-bit.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Equal-width histogram of a sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
    pub counts: Vec<u64>,
    pub n: usize,
}

impl Histogram {
    /// Bin edges, length bins + 1.
    pub fn edges(&self) -> Vec<f64> {
        let w = (self.hi - self.lo) / self.bins as f64;
        (0..=self.bins).map(|i| self.lo + w * i as f64).collect()
    }
}

/// Bin `xs` into `bins` equal-width cells spanning the sample range.
/// A constant sample gets a unit-width cell around its value.
pub fn histogram(xs: &[f64], bins: usize) -> Result<Histogram> {
    if xs.is_empty() || bins == 0 {
        return Err(Error::InvalidInput("histogram needs data and bins".into()));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &x in xs {
        if !x.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite sample value {x}")));
        }
        lo = lo.min(x);
        hi = hi.max(x);
    }
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let w = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    for &x in xs {
        let i = (((x - lo) / w) as usize).min(bins - 1);
        counts[i] += 1;
    }
    Ok(Histogram {
        lo,
        hi,
        bins,
        counts,
        n: xs.len(),
    })
}

/// Write labeled columns of equal length as CSV with a header row.
pub fn write_columns_csv<P: AsRef<Path>>(path: P, labels: &[&str], columns: &[&[f64]]) -> Result<()> {
    if labels.len() != columns.len() {
        return Err(Error::InvalidInput(format!(
            "{} labels for {} columns",
            labels.len(),
            columns.len()
        )));
    }
    let rows = columns.first().map_or(0, |c| c.len());
    if columns.iter().any(|c| c.len() != rows) {
        return Err(Error::InvalidInput("ragged columns".into()));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(labels)?;
    let mut record = Vec::with_capacity(columns.len());
    for i in 0..rows {
        record.clear();
        for c in columns {
            record.push(format!("{}", c[i]));
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Serialize typed rows as CSV (header derived from the row type).
pub fn write_rows_csv<P: AsRef<Path>, S: Serialize>(path: P, rows: &[S]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Write a histogram as CSV rows (bin_lo, bin_hi, count, density).
pub fn write_histogram_csv<P: AsRef<Path>>(path: P, h: &Histogram) -> Result<()> {
    let edges = h.edges();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["bin_lo", "bin_hi", "count", "density"])?;
    let width = (h.hi - h.lo) / h.bins as f64;
    for (i, &c) in h.counts.iter().enumerate() {
        let density = c as f64 / (h.n as f64 * width);
        w.write_record([
            format!("{}", edges[i]),
            format!("{}", edges[i + 1]),
            format!("{c}"),
            format!("{density}"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<P: AsRef<Path>, T: Serialize>(path: P, value: &T) -> Result<()> {
    let file = File::create(path)?;
    let mut buf = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut buf, value)?;
    buf.write_all(b"\n")?;
    buf.flush()?;
    Ok(())
}
