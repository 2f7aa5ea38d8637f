//! Run configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid1D, TimeGrid};

/// Solver and optimizer settings, read from a JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Tikhonov weight on `w`.
    pub gamma_w: f64,
    /// Tikhonov weight on `b`.
    pub gamma_b: f64,
    /// Stopping tolerance on the relative control change.
    pub tol: f64,
    /// Maximum number of backtracking trials per line search.
    pub max_armijo: usize,
    pub cfl: f64,
    /// Spatial domain `[a, b]`.
    pub domain: [f64; 2],
    pub n_cells: usize,
    /// Particle state dimension; the transport solver is one-dimensional.
    #[serde(default = "one")]
    pub dimension: usize,
    #[serde(default = "one_f64")]
    pub t_final: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Cap on outer Gauss–Seidel iterations.
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
}

fn one() -> usize {
    1
}

fn one_f64() -> f64 {
    1.0
}

fn default_dt() -> f64 {
    1e-2
}

fn default_max_iterations() -> usize {
    500
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            gamma_w: 1e-3,
            gamma_b: 1e-3,
            tol: 1e-4,
            max_armijo: 10,
            cfl: 0.45,
            domain: [-2.0, 3.0],
            n_cells: 200,
            dimension: 1,
            t_final: 1.0,
            dt: 1e-2,
            max_iterations: default_max_iterations(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &'static str, reason: String| Err(Error::InvalidConfig { field, reason });
        if !(self.gamma_w >= 0.0) || !self.gamma_w.is_finite() {
            return bad("gamma_w", format!("must be a nonnegative number, got {}", self.gamma_w));
        }
        if !(self.gamma_b >= 0.0) || !self.gamma_b.is_finite() {
            return bad("gamma_b", format!("must be a nonnegative number, got {}", self.gamma_b));
        }
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return bad("tol", format!("must be positive, got {}", self.tol));
        }
        if self.max_armijo == 0 {
            return bad("max_armijo", "need at least one trial".into());
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return bad("cfl", format!("must lie in (0, 1], got {}", self.cfl));
        }
        if !(self.domain[1] > self.domain[0]) || self.domain.iter().any(|v| !v.is_finite()) {
            return bad(
                "domain",
                format!("need a < b, got [{}, {}]", self.domain[0], self.domain[1]),
            );
        }
        if self.n_cells < 8 {
            return bad("n_cells", format!("need at least 8 cells, got {}", self.n_cells));
        }
        if self.dimension == 0 {
            return bad("dimension", "must be at least 1".into());
        }
        if self.max_iterations == 0 {
            return bad("max_iterations", "must be at least 1".into());
        }
        self.time_grid()?;
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid1D> {
        Grid1D::new(self.domain[0], self.domain[1], self.n_cells)
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.t_final, self.dt)
    }

    /// Parse and validate.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::InvalidConfig {
            field: "config",
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_exact_field_names() {
        let text = r#"{
            "gamma_w": 1.0, "gamma_b": 1e-4, "tol": 1e-4, "max_armijo": 10,
            "cfl": 0.45, "domain": [-2.0, 3.0], "n_cells": 400, "dimension": 1
        }"#;
        let cfg = RunConfig::from_json(text).unwrap();
        assert_eq!(cfg.gamma_b, 1e-4);
        assert_eq!(cfg.n_cells, 400);
        assert_eq!(cfg.dt, 1e-2);
        assert_eq!(cfg.max_iterations, 500);
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_invalid_values() {
        let base = RunConfig::default();
        assert!(base.validate().is_ok());
        for (cfg, field) in [
            (RunConfig { tol: 0.0, ..base.clone() }, "tol"),
            (RunConfig { cfl: 1.5, ..base.clone() }, "cfl"),
            (RunConfig { n_cells: 0, ..base.clone() }, "n_cells"),
            (RunConfig { n_cells: 7, ..base.clone() }, "n_cells"),
            (RunConfig { domain: [1.0, -1.0], ..base.clone() }, "domain"),
            (RunConfig { gamma_w: -1.0, ..base.clone() }, "gamma_w"),
            (RunConfig { dt: 0.3, ..base.clone() }, "dt"),
        ] {
            match cfg.validate() {
                Err(Error::InvalidConfig { field: f, .. }) => assert_eq!(f, field),
                other => panic!("expected error for {field}, got {other:?}"),
            }
        }
        assert!(RunConfig::from_json(r#"{"gamma_w": 1}"#).is_err());
    }
}
