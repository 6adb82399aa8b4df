//! Experiment configuration (JSON; unknown keys rejected).

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::media::MediaSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Fixed media, shrinking Knudsen number; error against the resolved
    /// heat solution.
    EpsSweep,
    /// Shrinking oscillation scale at fixed small Knudsen number; error
    /// against the homogenized heat solution.
    DeltaSweep,
    /// The same problem on nested coarse resolutions; nodal densities are
    /// compared at shared nodes.
    ResolutionConsistency,
    /// Symmetric versus asymmetric even-equation projection.
    FormulationCompare,
    /// One solve with snapshot export.
    SingleRun,
}

/// Media declaration: a builtin name plus `delta`, or a CSV table of nodal
/// values.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct MediaConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
    /// Constant media value (mostly for smoke tests).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<f64>,
}

impl MediaConfig {
    pub fn builtin(name: &str, delta: Option<f64>) -> Self {
        MediaConfig {
            name: Some(name.to_string()),
            delta,
            table: None,
            constant: None,
        }
    }

    /// Build the media, optionally overriding `delta` (used by delta sweeps).
    pub fn build(&self, dimension: usize, delta_override: Option<f64>) -> Result<MediaSpec> {
        let delta = delta_override.or(self.delta);
        let spec = match (&self.name, &self.table, self.constant) {
            (Some(name), None, None) => MediaSpec::builtin(name, delta)?,
            (None, Some(path), None) => MediaSpec::from_csv(path)?,
            (None, None, Some(c)) => MediaSpec::constant(c, dimension)?,
            _ => {
                return Err(Error::Config(
                    "media must give exactly one of `name`, `table`, or `constant`".into(),
                ))
            }
        };
        if spec.dimension() != dimension {
            return Err(Error::Config(format!(
                "media is {}-dimensional but the experiment is {}-dimensional",
                spec.dimension(),
                dimension
            )));
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Initial density formula, cosine by default: `1 + 0.5 cos(pi x)` in 1D and
/// `1 + 0.5 cos(pi x) cos(pi y)` in 2D -- smooth, periodic on `[-1, 1]`,
/// strictly positive, and independent of the velocity variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialDensity {
    #[default]
    Cosine,
    Uniform,
}

impl InitialDensity {
    pub fn evaluate(self, dim: usize, x: &[f64]) -> f64 {
        use std::f64::consts::PI;
        match self {
            InitialDensity::Uniform => 1.0,
            InitialDensity::Cosine => {
                let mut v = 0.5 * (PI * x[0]).cos();
                if dim == 2 {
                    v *= (PI * x[1]).cos();
                }
                1.0 + v
            }
        }
    }
}

fn default_dt() -> f64 {
    1e-3
}
fn default_final_time() -> f64 {
    0.1
}
fn default_epsilons() -> Vec<f64> {
    vec![1.0]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub media: MediaConfig,
    pub dimension: usize,
    /// Coarse cells per axis.
    pub coarse_cells: usize,
    /// Fine cells per coarse cell (at the finest listed resolution for
    /// consistency studies).
    pub refinement: usize,
    /// Velocity basis size N.
    pub basis_order: usize,
    /// Quadrature points K; defaults to 2N.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quad_points: Option<usize>,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    /// Oscillation scales for delta sweeps.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub deltas: Vec<f64>,
    /// Coarse resolutions for consistency studies.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub resolutions: Vec<usize>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_final_time")]
    pub final_time: f64,
    #[serde(default)]
    pub initial_density: InitialDensity,
    /// Cell-problem lattice resolution for homogenized references.
    #[serde(default = "default_cell_resolution")]
    pub cell_resolution: usize,
}

fn default_cell_resolution() -> usize {
    128
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn quad_points(&self) -> usize {
        self.quad_points
            .unwrap_or((2 * self.basis_order).max(self.basis_order + 2))
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension != 1 && self.dimension != 2 {
            return Err(Error::Config(format!(
                "dimension must be 1 or 2, got {}",
                self.dimension
            )));
        }
        if self.coarse_cells < 2 {
            return Err(Error::Config("coarse_cells must be at least 2".into()));
        }
        if self.refinement < 1 {
            return Err(Error::Config("refinement must be at least 1".into()));
        }
        if self.basis_order < 1 {
            return Err(Error::Config("basis_order must be at least 1".into()));
        }
        if self.quad_points() < self.basis_order + 2 {
            return Err(Error::Config(format!(
                "quad_points {} too small for basis_order {} (need N + 2)",
                self.quad_points(),
                self.basis_order
            )));
        }
        if self.dt <= 0.0 {
            return Err(Error::Config("dt must be positive".into()));
        }
        if self.final_time < self.dt {
            return Err(Error::Config("final_time must be at least one step".into()));
        }
        if self.epsilons.is_empty() || self.epsilons.iter().any(|&e| e <= 0.0) {
            return Err(Error::Config("epsilons must be positive".into()));
        }
        match self.kind {
            ExperimentKind::DeltaSweep => {
                if self.deltas.len() < 2 {
                    return Err(Error::Config(
                        "delta_sweep needs at least two `deltas`".into(),
                    ));
                }
                if self.deltas.iter().any(|&d| d <= 0.0) {
                    return Err(Error::Config("deltas must be positive".into()));
                }
            }
            ExperimentKind::EpsSweep => {
                if self.epsilons.len() < 2 {
                    return Err(Error::Config(
                        "eps_sweep needs at least two `epsilons`".into(),
                    ));
                }
            }
            ExperimentKind::ResolutionConsistency => {
                if self.resolutions.len() < 2 {
                    return Err(Error::Config(
                        "resolution_consistency needs at least two `resolutions`".into(),
                    ));
                }
                let max = *self.resolutions.iter().max().unwrap();
                for &res in &self.resolutions {
                    if res < 2 {
                        return Err(Error::Config("resolutions must be at least 2".into()));
                    }
                    if !max.is_multiple_of(res) || !(self.refinement * max).is_multiple_of(res) {
                        return Err(Error::Config(format!(
                            "resolution {res} must divide the finest resolution {max} so grids nest"
                        )));
                    }
                }
            }
            ExperimentKind::FormulationCompare | ExperimentKind::SingleRun => {}
        }
        Ok(())
    }

    /// Regime advisories collected into the run report.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let eps_min = self.epsilons.iter().cloned().fold(f64::INFINITY, f64::min);
        let deltas: Vec<f64> = if self.deltas.is_empty() {
            self.media.delta.into_iter().collect()
        } else {
            self.deltas.clone()
        };
        if let Some(delta_min) = deltas.iter().cloned().reduce(f64::min) {
            if eps_min > delta_min / 4.0 {
                out.push(format!(
                    "regime warning: eps = {eps_min:.3e} exceeds delta/4 = {:.3e}; the scheme \
                     targets eps << delta << 1",
                    delta_min / 4.0
                ));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> String {
        r#"{
            "kind": "single_run",
            "media": {"name": "sine10"},
            "dimension": 1,
            "coarse_cells": 16,
            "refinement": 8,
            "basis_order": 4
        }"#
        .to_string()
    }

    #[test]
    fn parses_with_defaults() {
        let cfg = ExperimentConfig::from_json(&minimal_json()).unwrap();
        assert_eq!(cfg.dt, 1e-3);
        assert_eq!(cfg.final_time, 0.1);
        assert_eq!(cfg.quad_points(), 8);
        assert_eq!(cfg.epsilons, vec![1.0]);
        assert_eq!(cfg.initial_density, InitialDensity::Cosine);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = minimal_json().replace("\"basis_order\": 4", "\"basis_order\": 4, \"bogus\": 1");
        assert!(ExperimentConfig::from_json(&bad).is_err());
    }

    #[test]
    fn config_roundtrips_through_json() {
        let cfg = ExperimentConfig::from_json(&minimal_json()).unwrap();
        let echoed = serde_json::to_string(&cfg).unwrap();
        let back = ExperimentConfig::from_json(&echoed).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), echoed);
    }

    #[test]
    fn sweep_requirements_enforced() {
        let mut cfg = ExperimentConfig::from_json(&minimal_json()).unwrap();
        cfg.kind = ExperimentKind::DeltaSweep;
        assert!(cfg.validate().is_err());
        cfg.deltas = vec![0.125, 0.025];
        cfg.media = MediaConfig::builtin("cos_delta", None);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn regime_warning_fires() {
        let mut cfg = ExperimentConfig::from_json(&minimal_json()).unwrap();
        cfg.kind = ExperimentKind::DeltaSweep;
        cfg.deltas = vec![0.125, 0.025];
        cfg.epsilons = vec![0.5];
        assert!(!cfg.warnings().is_empty());
        cfg.epsilons = vec![1e-4];
        assert!(cfg.warnings().is_empty());
    }

    #[test]
    fn media_requires_exactly_one_source() {
        let cfg = MediaConfig {
            name: Some("sine10".into()),
            constant: Some(1.0),
            ..Default::default()
        };
        assert!(cfg.build(1, None).is_err());
        assert!(MediaConfig::default().build(1, None).is_err());
    }
}
