//! Error norms and convergence-rate fitting.

use crate::error::{Error, Result};

/// Discrete L2 norm of the difference, weighted by the nodal cell measure.
pub fn error_norm(a: &[f64], b: &[f64], node_weight: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Metric(format!(
            "length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((node_weight * sum).sqrt())
}

/// Weighted L2 norm of a single field.
pub fn norm(values: &[f64], node_weight: f64) -> f64 {
    (node_weight * values.iter().map(|v| v * v).sum::<f64>()).sqrt()
}

/// Least-squares slope in log-log coordinates with the RMS fit residual.
pub fn fit_rate(pairs: &[(f64, f64)]) -> Result<(f64, f64)> {
    if pairs.len() < 3 {
        return Err(Error::Metric(format!(
            "rate fit needs at least 3 points, got {}",
            pairs.len()
        )));
    }
    if pairs.iter().any(|&(p, e)| p <= 0.0 || e <= 0.0) {
        return Err(Error::Metric("rate fit needs positive values".into()));
    }
    let logs: Vec<(f64, f64)> = pairs.iter().map(|&(p, e)| (p.ln(), e.ln())).collect();
    let n = logs.len() as f64;
    let sx: f64 = logs.iter().map(|p| p.0).sum();
    let sy: f64 = logs.iter().map(|p| p.1).sum();
    let sxx: f64 = logs.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = logs.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return Err(Error::Metric("rate fit needs distinct parameters".into()));
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let ss: f64 = logs
        .iter()
        .map(|&(x, y)| {
            let r = y - slope * x - intercept;
            r * r
        })
        .sum();
    Ok((slope, (ss / n).sqrt()))
}

/// Relative L2 deviation of a nodal field from its mirror image about the
/// domain center on one axis. Works on the periodic tensor grid: node `i`
/// maps to `(n - i) mod n`.
pub fn asymmetry_norm(values: &[f64], cells_per_axis: usize, dim: usize, axis: usize) -> f64 {
    let n = cells_per_axis;
    let total = n.pow(dim as u32);
    assert_eq!(values.len(), total, "field size does not match the grid");
    let mut diff2 = 0.0;
    let mut norm2 = 0.0;
    for id in 0..total {
        let (i, j) = (id % n, id / n);
        let (mi, mj) = match axis {
            0 => ((n - i) % n, j),
            _ => (i, (n - j) % n),
        };
        let mirrored = if dim == 1 { mi } else { mj * n + mi };
        let d = values[id] - values[mirrored];
        diff2 += d * d;
        norm2 += values[id] * values[id];
    }
    if norm2 == 0.0 {
        0.0
    } else {
        (diff2 / norm2).sqrt()
    }
}
