//! Oscillatory scattering coefficients.
//!
//! The inverse scattering coefficient `a` is strictly positive and periodic;
//! its oscillation length scale is `delta`. Built-in analytic forms cover the
//! benchmark experiments; tabulated media support ingestion from CSV files.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Nodal values of a coefficient on a uniform periodic lattice, evaluated by
/// (bi)linear interpolation with periodic wrap.
#[derive(Debug, Clone)]
pub struct TabulatedValues {
    /// Period lengths per axis (second entry unused in 1D).
    pub cell: [f64; 2],
    /// Lattice nodes per axis.
    pub shape: [usize; 2],
    /// Row-major nodal values, `values[j * shape[0] + i]`.
    pub values: Vec<f64>,
}

impl TabulatedValues {
    fn interpolate(&self, dim: usize, point: &[f64]) -> f64 {
        let frac = |axis: usize, x: f64| -> (usize, usize, f64) {
            let n = self.shape[axis];
            let spacing = self.cell[axis] / n as f64;
            let u = x.rem_euclid(self.cell[axis]) / spacing;
            let i0 = (u.floor() as usize).min(n - 1);
            (i0, (i0 + 1) % n, u - i0 as f64)
        };
        let (i0, i1, tx) = frac(0, point[0]);
        if dim == 1 {
            return self.values[i0] * (1.0 - tx) + self.values[i1] * tx;
        }
        let (j0, j1, ty) = frac(1, point[1]);
        let nx = self.shape[0];
        let v00 = self.values[j0 * nx + i0];
        let v10 = self.values[j0 * nx + i1];
        let v01 = self.values[j1 * nx + i0];
        let v11 = self.values[j1 * nx + i1];
        v00 * (1.0 - tx) * (1.0 - ty)
            + v10 * tx * (1.0 - ty)
            + v01 * (1.0 - tx) * ty
            + v11 * tx * ty
    }
}

/// Analytic form of the coefficient.
#[derive(Debug, Clone)]
pub enum MediaForm {
    /// `a = c` everywhere.
    Constant(f64),
    /// `a(x) = 1.1 + sin(10 pi x)`, ten periods on `[-1, 1]`.
    Sine10,
    /// `a(x) = 1.1 + sin(20 pi x)`, twenty periods on `[-1, 1]`.
    Sine20,
    /// `a(x) = 1 / (cos(2 pi x / delta) + 4)`; its harmonic mean is `1/4`.
    CosDelta,
    /// `a(x, y) = 1.1 + sin(2 pi x) sin(10 pi y)`: strongly anisotropic
    /// oscillation (one period in x, ten in y over `[-1, 1]`).
    Aniso2d,
    /// The classical multiscale benchmark coefficient
    /// `(2 + 1.8 sin(10 pi x)) / (2 + 1.8 cos(10 pi y))
    ///  + (2 + sin(10 pi y)) / (2 + 1.8 sin(10 pi x))`.
    Benchmark2d,
    /// Nodal table with (bi)linear interpolation.
    Tabulated(TabulatedValues),
}

/// A validated scattering coefficient: analytic form, dimension, oscillation
/// scale and period cell. Immutable after construction.
#[derive(Debug, Clone)]
pub struct MediaSpec {
    form: MediaForm,
    dim: usize,
    delta: f64,
    period: [f64; 2],
}

impl MediaSpec {
    pub fn constant(value: f64, dim: usize) -> Result<Self> {
        if value <= 0.0 {
            return Err(Error::InvalidMedia {
                value,
                point: vec![0.0; dim],
            });
        }
        check_dim(dim)?;
        Ok(MediaSpec {
            form: MediaForm::Constant(value),
            dim,
            delta: 1.0,
            period: [1.0, 1.0],
        })
    }

    /// Look up one of the benchmark coefficients by name.
    ///
    /// `delta` is required for `cos_delta` and ignored by the fixed-scale
    /// forms.
    pub fn builtin(name: &str, delta: Option<f64>) -> Result<Self> {
        let spec = match name {
            "sine10" => MediaSpec {
                form: MediaForm::Sine10,
                dim: 1,
                delta: 0.2,
                period: [0.2, 1.0],
            },
            "sine20" => MediaSpec {
                form: MediaForm::Sine20,
                dim: 1,
                delta: 0.1,
                period: [0.1, 1.0],
            },
            "cos_delta" => {
                let delta = delta.ok_or_else(|| {
                    Error::Config("media cos_delta requires a delta value".into())
                })?;
                if delta <= 0.0 {
                    return Err(Error::Config(format!("delta must be positive, got {delta}")));
                }
                MediaSpec {
                    form: MediaForm::CosDelta,
                    dim: 1,
                    delta,
                    period: [delta, 1.0],
                }
            }
            "aniso2d" => MediaSpec {
                form: MediaForm::Aniso2d,
                dim: 2,
                delta: 0.2,
                period: [1.0, 0.2],
            },
            "benchmark2d" => MediaSpec {
                form: MediaForm::Benchmark2d,
                dim: 2,
                delta: 0.2,
                period: [0.2, 0.2],
            },
            other => {
                return Err(Error::Config(format!("unknown builtin media `{other}`")));
            }
        };
        Ok(spec)
    }

    /// Media from nodal values tabulated on the given period cell.
    pub fn tabulated(table: TabulatedValues, dim: usize) -> Result<Self> {
        check_dim(dim)?;
        if table.values.len() != table.shape[0] * if dim == 2 { table.shape[1] } else { 1 } {
            return Err(Error::Config(format!(
                "tabulated media has {} values for shape {:?}",
                table.values.len(),
                &table.shape[..dim]
            )));
        }
        let period = table.cell;
        let delta = if dim == 1 {
            period[0]
        } else {
            period[0].min(period[1])
        };
        let spec = MediaSpec {
            form: MediaForm::Tabulated(table),
            dim,
            delta,
            period,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Read tabulated media from a CSV file with columns `x[,y],value` and a
    /// header row. The points must form a complete uniform lattice; the
    /// period per axis is the lattice extent plus one spacing.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut rows = Vec::new();
        let mut dim = 0usize;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if lineno == 0 {
                dim = line.split(',').count() - 1;
                check_dim(dim).map_err(|_| {
                    Error::Config(format!("media csv header `{line}` must be x[,y],value"))
                })?;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != dim + 1 {
                return Err(Error::Config(format!(
                    "media csv line {} has {} fields, expected {}",
                    lineno + 1,
                    fields.len(),
                    dim + 1
                )));
            }
            let mut parsed = [0.0f64; 3];
            for (k, f) in fields.iter().enumerate() {
                parsed[k] = f.trim().parse::<f64>().map_err(|_| {
                    Error::Config(format!("media csv line {}: bad number `{f}`", lineno + 1))
                })?;
            }
            rows.push((parsed[0], if dim == 2 { parsed[1] } else { 0.0 }, parsed[dim]));
        }
        if rows.is_empty() {
            return Err(Error::Config(format!(
                "media csv {} has no data rows",
                path.display()
            )));
        }

        let xs = lattice_axis(rows.iter().map(|r| r.0))?;
        let ys = if dim == 2 {
            lattice_axis(rows.iter().map(|r| r.1))?
        } else {
            (vec![0.0], 1.0)
        };
        let (x_nodes, dx) = xs;
        let (y_nodes, dy) = ys;
        let (nx, ny) = (x_nodes.len(), y_nodes.len());
        if rows.len() != nx * ny {
            return Err(Error::Config(format!(
                "media csv has {} rows, expected complete {nx}x{ny} lattice",
                rows.len()
            )));
        }
        let mut values = vec![f64::NAN; nx * ny];
        for (x, y, v) in rows {
            let i = index_on(&x_nodes, x);
            let j = index_on(&y_nodes, y);
            values[j * nx + i] = v;
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::Config("media csv lattice has missing points".into()));
        }
        let table = TabulatedValues {
            cell: [dx * nx as f64, dy * ny as f64],
            shape: [nx, ny],
            values,
        };
        MediaSpec::tabulated(table, dim)
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    /// Oscillation length scale.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Period per axis.
    pub fn period(&self) -> &[f64] {
        &self.period[..self.dim.max(1)]
    }

    pub fn form(&self) -> &MediaForm {
        &self.form
    }

    /// Evaluate `a` at a point. The form is total; positivity is enforced by
    /// [`MediaSpec::validate`] and by [`MediaSpec::checked_evaluate`].
    pub fn evaluate(&self, point: &[f64]) -> f64 {
        let x = point[0];
        let y = if self.dim == 2 { point[1] } else { 0.0 };
        match &self.form {
            MediaForm::Constant(c) => *c,
            MediaForm::Sine10 => 1.1 + (10.0 * PI * x).sin(),
            MediaForm::Sine20 => 1.1 + (20.0 * PI * x).sin(),
            MediaForm::CosDelta => 1.0 / ((2.0 * PI * x / self.delta).cos() + 4.0),
            MediaForm::Aniso2d => 1.1 + (2.0 * PI * x).sin() * (10.0 * PI * y).sin(),
            MediaForm::Benchmark2d => {
                let sx = (10.0 * PI * x).sin();
                let cy = (10.0 * PI * y).cos();
                let sy = (10.0 * PI * y).sin();
                (2.0 + 1.8 * sx) / (2.0 + 1.8 * cy) + (2.0 + sy) / (2.0 + 1.8 * sx)
            }
            MediaForm::Tabulated(t) => t.interpolate(self.dim, point),
        }
    }

    /// Evaluate and reject non-positive values.
    pub fn checked_evaluate(&self, point: &[f64]) -> Result<f64> {
        let value = self.evaluate(point);
        if value > 0.0 && value.is_finite() {
            Ok(value)
        } else {
            Err(Error::InvalidMedia {
                value,
                point: point[..self.dim].to_vec(),
            })
        }
    }

    /// Positivity and periodicity check by dense sampling: 64 points per
    /// period per dimension over one period cell.
    pub fn validate(&self) -> Result<()> {
        const SAMPLES: usize = 64;
        let n = [
            SAMPLES,
            if self.dim == 2 { SAMPLES } else { 1 },
        ];
        for j in 0..n[1] {
            for i in 0..n[0] {
                let p = [
                    self.period[0] * i as f64 / n[0] as f64,
                    self.period[1] * j as f64 / n[1] as f64,
                ];
                let v = self.checked_evaluate(&p)?;
                for axis in 0..self.dim {
                    let mut shifted = p;
                    shifted[axis] += self.period[axis];
                    let w = self.evaluate(&shifted);
                    if (v - w).abs() > 1e-12 * v.abs().max(1.0) {
                        return Err(Error::InvalidMedia {
                            value: w - v,
                            point: p[..self.dim].to_vec(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Canonical description used for cache fingerprints.
    pub fn fingerprint_string(&self) -> String {
        match &self.form {
            MediaForm::Constant(c) => format!("constant:{:x}", c.to_bits()),
            MediaForm::Sine10 => "sine10".into(),
            MediaForm::Sine20 => "sine20".into(),
            MediaForm::CosDelta => format!("cos_delta:{:x}", self.delta.to_bits()),
            MediaForm::Aniso2d => "aniso2d".into(),
            MediaForm::Benchmark2d => "benchmark2d".into(),
            MediaForm::Tabulated(t) => {
                let mut h = 0xcbf29ce484222325u64;
                for v in &t.values {
                    h = (h ^ v.to_bits()).wrapping_mul(0x100000001b3);
                }
                format!(
                    "tabulated:{}x{}:{:x}:{:x}:{h:x}",
                    t.shape[0],
                    t.shape[1],
                    t.cell[0].to_bits(),
                    t.cell[1].to_bits()
                )
            }
        }
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 1 || dim == 2 {
        Ok(())
    } else {
        Err(Error::Config(format!("dimension must be 1 or 2, got {dim}")))
    }
}

/// Collect sorted unique coordinates and verify uniform spacing.
fn lattice_axis(coords: impl Iterator<Item = f64>) -> Result<(Vec<f64>, f64)> {
    let mut nodes: Vec<f64> = coords.collect();
    nodes.sort_by(|a, b| a.total_cmp(b));
    nodes.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    if nodes.len() < 2 {
        return Ok((nodes, 1.0));
    }
    let spacing = nodes[1] - nodes[0];
    for w in nodes.windows(2) {
        if ((w[1] - w[0]) - spacing).abs() > 1e-9 * spacing {
            return Err(Error::Config(
                "media csv points do not form a uniform lattice".into(),
            ));
        }
    }
    Ok((nodes, spacing))
}

fn index_on(nodes: &[f64], x: f64) -> usize {
    nodes
        .iter()
        .position(|&n| (n - x).abs() < 1e-12 + 1e-9 * x.abs())
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sine10_matches_direct_substitution() {
        let media = MediaSpec::builtin("sine10", None).unwrap();
        assert_relative_eq!(media.evaluate(&[0.05]), 2.1, epsilon = 1e-12);
    }

    #[test]
    fn constant_media_everywhere() {
        let media = MediaSpec::constant(3.25, 2).unwrap();
        assert_eq!(media.evaluate(&[0.3, -0.7]), 3.25);
        assert_eq!(media.evaluate(&[-1.0, 1.0]), 3.25);
    }

    #[test]
    fn aniso2d_matches_direct_substitution() {
        let media = MediaSpec::builtin("aniso2d", None).unwrap();
        assert_relative_eq!(media.evaluate(&[0.25, 0.05]), 2.1, epsilon = 1e-12);
    }

    #[test]
    fn cos_delta_formula() {
        let media = MediaSpec::builtin("cos_delta", Some(0.125)).unwrap();
        let x = 0.03;
        let expected = 1.0 / ((16.0 * PI * x).cos() + 4.0);
        assert_relative_eq!(media.evaluate(&[x]), expected, epsilon = 1e-15);
    }

    #[test]
    fn benchmark2d_formula() {
        let media = MediaSpec::builtin("benchmark2d", None).unwrap();
        let (x, y) = (0.017, -0.31);
        let sx = (10.0 * PI * x).sin();
        let expected = (2.0 + 1.8 * sx) / (2.0 + 1.8 * (10.0 * PI * y).cos())
            + (2.0 + (10.0 * PI * y).sin()) / (2.0 + 1.8 * sx);
        assert_relative_eq!(media.evaluate(&[x, y]), expected, epsilon = 1e-15);
    }

    #[test]
    fn unknown_builtin_is_config_error() {
        assert!(matches!(
            MediaSpec::builtin("granite", None),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn cos_delta_requires_delta() {
        assert!(MediaSpec::builtin("cos_delta", None).is_err());
    }

    #[test]
    fn builtins_validate_positive_and_periodic() {
        for (name, delta) in [
            ("sine10", None),
            ("sine20", None),
            ("cos_delta", Some(1.0 / 24.0)),
            ("aniso2d", None),
            ("benchmark2d", None),
        ] {
            let media = MediaSpec::builtin(name, delta).unwrap();
            media.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn nonpositive_evaluation_reports_point() {
        let table = TabulatedValues {
            cell: [1.0, 1.0],
            shape: [4, 1],
            values: vec![1.0, 2.0, -0.5, 2.0],
        };
        let err = MediaSpec::tabulated(table, 1).unwrap_err();
        assert!(matches!(err, Error::InvalidMedia { .. }));
    }

    #[test]
    fn tabulated_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("media.csv");
        let mut text = String::from("x,y,value\n");
        for j in 0..4 {
            for i in 0..4 {
                text.push_str(&format!("{},{},{}\n", i as f64 * 0.25, j as f64 * 0.25, 1.0 + (i + 4 * j) as f64));
            }
        }
        std::fs::write(&path, text).unwrap();
        let media = MediaSpec::from_csv(&path).unwrap();
        assert_eq!(media.dimension(), 2);
        // Exact at nodes, bilinear in between.
        assert_relative_eq!(media.evaluate(&[0.25, 0.5]), 1.0 + 9.0, epsilon = 1e-12);
        let mid = media.evaluate(&[0.125, 0.0]);
        assert_relative_eq!(mid, 1.5, epsilon = 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn periodicity_of_builtins(x in -1.0f64..1.0, y in -1.0f64..1.0) {
            for (name, delta) in [("sine10", None), ("cos_delta", Some(0.125)), ("benchmark2d", None)] {
                let media = MediaSpec::builtin(name, delta).unwrap();
                let p = [x, y];
                let v = media.evaluate(&p);
                proptest::prop_assert!(v > 0.0);
                for axis in 0..media.dimension() {
                    let mut q = p;
                    q[axis] += media.period()[axis];
                    proptest::prop_assert!((media.evaluate(&q) - v).abs() <= 1e-12 * v.abs().max(1.0));
                }
            }
        }
    }
}
