//! CSV input and output for batches, loss traces and point clouds.

use std::path::Path;

use crate::distributions::PointCloud;
use crate::error::{Error, Result};
use crate::vector::Batch;

/// Writes one point per row under a header `x1,x2,...`.
pub fn write_batch_csv(path: impl AsRef<Path>, batch: &Batch) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record((1..=batch.dim()).map(|j| format!("x{j}")))?;
    for row in batch.rows() {
        w.write_record(row.iter().map(f64::to_string))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_batch_csv(path: impl AsRef<Path>) -> Result<Batch> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(parse_row(&rec?)?);
    }
    Batch::from_rows(&rows)
}

/// Writes `step,loss` with 1-based steps.
pub fn write_loss_csv(path: impl AsRef<Path>, losses: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "loss"])?;
    for (i, l) in losses.iter().enumerate() {
        w.write_record([(i + 1).to_string(), l.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn parse_row(rec: &csv::StringRecord) -> Result<Vec<f64>> {
    rec.iter()
        .map(|f| {
            f.trim()
                .parse::<f64>()
                .map_err(|e| Error::invalid(format!("bad number '{f}' in CSV row: {e}")))
        })
        .collect()
}

/// Reads a point cloud: a header row, one point per row, and an optional
/// column named `weight` holding unnormalized positive weights.
pub fn read_point_cloud_csv(path: impl AsRef<Path>) -> Result<PointCloud> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let weight_col = headers.iter().position(|h| h.trim().eq_ignore_ascii_case("weight"));
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for rec in r.records() {
        let mut row = parse_row(&rec?)?;
        if let Some(c) = weight_col {
            if c >= row.len() {
                return Err(Error::invalid("missing weight value"));
            }
            weights.push(row.remove(c));
        }
        points.push(row);
    }
    if weight_col.is_some() {
        PointCloud::weighted(&points, weights)
    } else {
        PointCloud::uniform(&points)
    }
}
