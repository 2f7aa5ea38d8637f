//! Uniform time and space grids.

use crate::error::{Error, Result};

/// Uniform time grid `t_k = k * dt`, `k = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_final: f64,
    dt: f64,
    n_steps: usize,
}

impl TimeGrid {
    /// Builds a grid from a horizon and a step; `t_final / dt` must be an integer.
    pub fn new(t_final: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidConfig {
                field: "dt",
                reason: format!("time step must be positive, got {dt}"),
            });
        }
        if !(t_final > 0.0) || !t_final.is_finite() {
            return Err(Error::InvalidConfig {
                field: "t_final",
                reason: format!("horizon must be positive, got {t_final}"),
            });
        }
        let n = (t_final / dt).round();
        if n < 1.0 || (n * dt - t_final).abs() > 1e-9 * t_final {
            return Err(Error::InvalidConfig {
                field: "dt",
                reason: format!("horizon {t_final} is not an integer multiple of dt {dt}"),
            });
        }
        Ok(Self {
            t_final,
            dt,
            n_steps: n as usize,
        })
    }

    pub fn with_steps(t_final: f64, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::InvalidConfig {
                field: "n_steps",
                reason: "need at least one step".into(),
            });
        }
        Self::new(t_final, t_final / n_steps as f64)
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    #[inline]
    pub fn node(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(move |k| self.node(k))
    }

    /// Trapezoidal weights on the nodes.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let mut w = vec![self.dt; self.n_nodes()];
        w[0] *= 0.5;
        w[self.n_steps] *= 0.5;
        w
    }

    /// Trapezoidal quadrature of node samples.
    pub fn trapezoid(&self, samples: &[f64]) -> f64 {
        debug_assert_eq!(samples.len(), self.n_nodes());
        let n = samples.len() - 1;
        let inner: f64 = samples[1..n].iter().sum();
        self.dt * (inner + 0.5 * (samples[0] + samples[n]))
    }
}

/// Uniform partition of `[a, b]` into `n_cells` cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    a: f64,
    b: f64,
    n_cells: usize,
    dx: f64,
}

impl Grid1D {
    pub fn new(a: f64, b: f64, n_cells: usize) -> Result<Self> {
        if !(b > a) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidConfig {
                field: "domain",
                reason: format!("need a < b, got [{a}, {b}]"),
            });
        }
        if n_cells == 0 {
            return Err(Error::InvalidConfig {
                field: "n_cells",
                reason: "need at least one cell".into(),
            });
        }
        Ok(Self {
            a,
            b,
            n_cells,
            dx: (b - a) / n_cells as f64,
        })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Midpoint of cell `j`.
    #[inline]
    pub fn center(&self, j: usize) -> f64 {
        self.a + (j as f64 + 0.5) * self.dx
    }

    /// Interface `i`, with `i = 0` the left end and `i = n_cells` the right end.
    #[inline]
    pub fn interface(&self, i: usize) -> f64 {
        if i == self.n_cells {
            self.b
        } else {
            self.a + i as f64 * self.dx
        }
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_cells).map(|j| self.center(j)).collect()
    }

    /// Index of the cell containing `x`, or `None` outside `[a, b]`.
    pub fn locate(&self, x: f64) -> Option<usize> {
        if !(x >= self.a && x <= self.b) {
            return None;
        }
        let j = ((x - self.a) / self.dx).floor() as usize;
        Some(j.min(self.n_cells - 1))
    }
}
