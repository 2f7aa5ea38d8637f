//! Time-dependent weight/bias controls.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// Anything that yields `(w(t), b(t))` for a time in the horizon.
pub trait Controls {
    fn at(&self, t: f64) -> (f64, f64);
}

impl<F> Controls for F
where
    F: Fn(f64) -> (f64, f64),
{
    fn at(&self, t: f64) -> (f64, f64) {
        self(t)
    }
}

/// Weight and bias sampled on a [`TimeGrid`], piecewise linear in between.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPath {
    grid: TimeGrid,
    w: Vec<f64>,
    b: Vec<f64>,
}

// Node snapping tolerance, in units of dt.
const NODE_SNAP: f64 = 1e-9;

impl ControlPath {
    pub fn from_samples(grid: TimeGrid, w: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if w.len() != grid.n_nodes() || b.len() != grid.n_nodes() {
            return Err(Error::Shape(format!(
                "control samples have lengths ({}, {}), grid has {} nodes",
                w.len(),
                b.len(),
                grid.n_nodes()
            )));
        }
        if w.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("control samples"));
        }
        Ok(Self { grid, w, b })
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        let n = grid.n_nodes();
        Self {
            grid,
            w: vec![0.0; n],
            b: vec![0.0; n],
        }
    }

    /// Samples `f` at every node.
    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> (f64, f64)) -> Result<Self> {
        let (w, b) = grid.nodes().map(f).unzip();
        Self::from_samples(grid, w, b)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn horizon(&self) -> f64 {
        self.grid.t_final()
    }

    /// Whether `w(0) = b(0) = 0`, as required of trainable controls.
    pub fn is_admissible(&self) -> bool {
        self.w[0] == 0.0 && self.b[0] == 0.0
    }

    /// Copy with the origin values forced to zero.
    pub fn pinned(mut self) -> Self {
        self.w[0] = 0.0;
        self.b[0] = 0.0;
        self
    }

    /// Evaluate at `t`, erroring outside `[0, T]`.
    pub fn eval(&self, t: f64) -> Result<(f64, f64)> {
        let horizon = self.horizon();
        let slack = NODE_SNAP * self.grid.dt();
        if !(t >= -slack && t <= horizon + slack) {
            return Err(Error::OutOfHorizon { t, horizon });
        }
        Ok(self.interpolate(t))
    }

    /// Piecewise-linear interpolation, clamped to the horizon; exact at nodes.
    #[inline]
    pub fn interpolate(&self, t: f64) -> (f64, f64) {
        let n = self.grid.n_steps();
        let s = (t / self.grid.dt()).clamp(0.0, n as f64);
        let nearest = s.round();
        if (s - nearest).abs() <= NODE_SNAP {
            let k = nearest as usize;
            return (self.w[k], self.b[k]);
        }
        let k = (s.floor() as usize).min(n - 1);
        let theta = s - k as f64;
        (
            (1.0 - theta) * self.w[k] + theta * self.w[k + 1],
            (1.0 - theta) * self.b[k] + theta * self.b[k + 1],
        )
    }

    /// `max_k max(|w_k|, |b_k|)`.
    pub fn c0_norm(&self) -> f64 {
        self.w
            .iter()
            .chain(&self.b)
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// `max_k max(|w_k - w'_k|, |b_k - b'_k|)`.
    pub fn c0_distance(&self, other: &ControlPath) -> f64 {
        let dw = self.w.iter().zip(&other.w).map(|(x, y)| (x - y).abs());
        let db = self.b.iter().zip(&other.b).map(|(x, y)| (x - y).abs());
        dw.chain(db).fold(0.0_f64, f64::max)
    }

    /// Largest finite-difference slopes `(L_w, L_b)`.
    pub fn lipschitz(&self) -> (f64, f64) {
        let dt = self.grid.dt();
        let slope = |v: &[f64]| {
            v.windows(2)
                .map(|p| (p[1] - p[0]).abs() / dt)
                .fold(0.0_f64, f64::max)
        };
        (slope(&self.w), slope(&self.b))
    }

    /// `self - step * (dw, db)`, component-wise on the nodes.
    pub fn stepped(&self, step: f64, dw: &[f64], db: &[f64]) -> Self {
        let w = self.w.iter().zip(dw).map(|(x, d)| x - step * d).collect();
        let b = self.b.iter().zip(db).map(|(x, d)| x - step * d).collect();
        Self {
            grid: self.grid,
            w,
            b,
        }
    }
}

impl Controls for ControlPath {
    fn at(&self, t: f64) -> (f64, f64) {
        self.interpolate(t)
    }
}

/// Free-function form of [`ControlPath::eval`].
pub fn control_eval(c: &ControlPath, t: f64) -> Result<(f64, f64)> {
    c.eval(t)
}

/// Closed-form scalar function of time used to declare controls in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeFn {
    /// `Σ c_i t^i`.
    Polynomial { coeffs: Vec<f64> },
    /// `scale * (e^t - 1)`.
    ExpMinusOne { scale: f64 },
    /// `amplitude * sin(2π frequency t + phase)`.
    Sine {
        amplitude: f64,
        frequency: f64,
        phase: f64,
    },
}

impl TimeFn {
    pub fn constant(c: f64) -> Self {
        TimeFn::Polynomial { coeffs: vec![c] }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeFn::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c),
            TimeFn::ExpMinusOne { scale } => scale * t.exp_m1(),
            TimeFn::Sine {
                amplitude,
                frequency,
                phase,
            } => amplitude * (2.0 * std::f64::consts::PI * frequency * t + phase).sin(),
        }
    }
}

/// A pair of closed-form control functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSpec {
    pub w: TimeFn,
    pub b: TimeFn,
}

impl ControlSpec {
    pub fn zero() -> Self {
        Self {
            w: TimeFn::constant(0.0),
            b: TimeFn::constant(0.0),
        }
    }

    pub fn sample(&self, grid: TimeGrid) -> Result<ControlPath> {
        ControlPath::from_fn(grid, |t| (self.w.eval(t), self.b.eval(t)))
    }
}

impl Controls for ControlSpec {
    fn at(&self, t: f64) -> (f64, f64) {
        (self.w.eval(t), self.b.eval(t))
    }
}
