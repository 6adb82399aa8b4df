//! Snapshot and report export.
//!
//! Snapshots are CSV files with columns `x[,y],value`, a header row, and
//! 17-significant-digit decimal floats, so identical runs produce
//! byte-identical files.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write one nodal snapshot. `coords` carries one `[x, y]` pair per value;
/// the second component is ignored in 1D.
pub fn write_snapshot_csv(
    path: &Path,
    dim: usize,
    coords: &[[f64; 2]],
    values: &[f64],
) -> Result<()> {
    if coords.len() != values.len() {
        return Err(Error::Metric(format!(
            "snapshot has {} coordinates for {} values",
            coords.len(),
            values.len()
        )));
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut run = || -> std::io::Result<()> {
        if dim == 1 {
            writeln!(w, "x,value")?;
            for (c, v) in coords.iter().zip(values) {
                writeln!(w, "{},{}", fmt17(c[0]), fmt17(*v))?;
            }
        } else {
            writeln!(w, "x,y,value")?;
            for (c, v) in coords.iter().zip(values) {
                writeln!(w, "{},{},{}", fmt17(c[0]), fmt17(c[1]), fmt17(*v))?;
            }
        }
        w.flush()
    };
    run().map_err(|e| Error::io(path, e))
}

/// Pretty-printed JSON report; serde maps are ordered, so output is
/// deterministic.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| Error::Config(format!("report serialization failed: {e}")))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}
