//! Adjoint-based training of the controls: mean-field loss, control gradients,
//! Armijo backtracking and the block Gauss–Seidel loop.

use std::io::Write;
use std::sync::Mutex;

use crate::activation::Activation;
use crate::config::RunConfig;
use crate::control::ControlPath;
use crate::error::{Error, Result};
use crate::fvm::{cell_averages, solve_transport, DensityField, DriftSpec, FvmOptions, Trajectory};
use crate::grid::{Grid1D, TimeGrid};
use crate::io::fmt_f64;
use crate::measures::{moments, EmpiricalMeasure, Measure};

const ARMIJO_RHO0: f64 = 1.0;
const ARMIJO_FACTOR: f64 = 0.5;
const ARMIJO_C: f64 = 1e-4;
const TARGET_MASS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
enum TargetKind {
    Density(DensityField),
    Atoms(EmpiricalMeasure),
}

/// Target distribution `g`, with the two moments the quadratic loss needs.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetMeasure {
    kind: TargetKind,
    mean: f64,
    second_moment: f64,
}

impl TargetMeasure {
    pub fn from_density(field: DensityField) -> Result<Self> {
        let mass = field.mass();
        if (mass - 1.0).abs() > TARGET_MASS_TOL {
            return Err(Error::Unnormalized { mass });
        }
        let mean = moments(&field, 1);
        let second_moment = moments(&field, 2).max(mean * mean);
        Ok(Self {
            kind: TargetKind::Density(field),
            mean,
            second_moment,
        })
    }

    pub fn from_atoms(atoms: EmpiricalMeasure) -> Self {
        let mean = moments(&atoms, 1);
        let second_moment = moments(&atoms, 2).max(mean * mean);
        Self {
            kind: TargetKind::Atoms(atoms),
            mean,
            second_moment,
        }
    }

    pub fn point(x: f64) -> Self {
        Self::from_atoms(EmpiricalMeasure::point(x))
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn second_moment(&self) -> f64 {
        self.second_moment
    }

    pub fn variance(&self) -> f64 {
        self.second_moment - self.mean * self.mean
    }

    pub fn density(&self) -> Option<&DensityField> {
        match &self.kind {
            TargetKind::Density(f) => Some(f),
            TargetKind::Atoms(_) => None,
        }
    }

    pub fn as_measure(&self) -> Measure<'_> {
        match &self.kind {
            TargetKind::Density(f) => Measure::Density(f),
            TargetKind::Atoms(a) => Measure::Atoms(a),
        }
    }
}

/// `ℓ̃(x) = ∫ (x - y)² dg(y)`.
pub fn tilde_loss(x: f64, g: &TargetMeasure) -> f64 {
    x * x - 2.0 * g.mean * x + g.second_moment
}

/// Initial adjoint `λ_0(x) = 2x - 2 m_g` as cell averages.
pub fn adjoint_initial(g: &TargetMeasure, grid: &Grid1D) -> Result<DensityField> {
    let m = g.mean;
    DensityField::new(*grid, cell_averages(|x| 2.0 * x - 2.0 * m, grid)?, 0.0)
}

/// Gradient of the reduced cost with respect to the nodal controls.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Gradient {
    /// `max_t |g_w(t)|` and `max_t |g_b(t)|`.
    pub fn max_abs(&self) -> (f64, f64) {
        let m = |v: &[f64]| v.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
        (m(&self.w), m(&self.b))
    }

    /// Trapezoidal `∫ g_w² + g_b² dt`.
    pub fn norm_sq(&self, time: &TimeGrid) -> f64 {
        let sq: Vec<f64> = self.w.iter().zip(&self.b).map(|(a, b)| a * a + b * b).collect();
        time.trapezoid(&sq)
    }

    /// `∫ g_w δw + g_b δb dt` with both factors piecewise linear between nodes.
    pub fn directional(&self, d: &ControlPath) -> f64 {
        let h = d.grid().dt();
        let ip = |g: &[f64], e: &[f64]| -> f64 {
            g.windows(2)
                .zip(e.windows(2))
                .map(|(g, e)| 2.0 * g[0] * e[0] + g[0] * e[1] + g[1] * e[0] + 2.0 * g[1] * e[1])
                .sum::<f64>()
                * h
                / 6.0
        };
        ip(&self.w, d.w()) + ip(&self.b, d.b())
    }

    /// Zeroes the `t = 0` entries, matching the pinned controls.
    pub fn pinned(mut self) -> Self {
        if let Some(v) = self.w.first_mut() {
            *v = 0.0;
        }
        if let Some(v) = self.b.first_mut() {
            *v = 0.0;
        }
        self
    }
}

/// Per-node gradients from a forward trajectory and a time-reversed adjoint
/// trajectory on the same grids.
pub fn control_gradient(
    c: &ControlPath,
    f_traj: &[DensityField],
    lam_traj: &[DensityField],
    activation: Activation,
    cfg: &RunConfig,
) -> Result<Gradient> {
    let n_nodes = c.grid().n_nodes();
    if f_traj.len() != n_nodes || lam_traj.len() != n_nodes {
        return Err(Error::Shape(format!(
            "trajectories have {} and {} snapshots, controls have {} nodes",
            f_traj.len(),
            lam_traj.len(),
            n_nodes
        )));
    }
    let grid = f_traj[0].grid();
    if f_traj.iter().chain(lam_traj).any(|f| f.grid() != grid) {
        return Err(Error::Shape("trajectories live on different grids".into()));
    }
    let dx = grid.dx();
    let xs = grid.centers();
    let n = n_nodes - 1;
    let mut gw = Vec::with_capacity(n_nodes);
    let mut gb = Vec::with_capacity(n_nodes);
    for k in 0..n_nodes {
        let (w, b) = (c.w()[k], c.b()[k]);
        let f = f_traj[k].averages();
        let lam = lam_traj[n - k].averages();
        let (mut sw, mut sb) = (0.0, 0.0);
        for j in 0..xs.len() {
            let s = lam[j] * activation.derivative(w * xs[j] + b) * f[j];
            sb += s;
            sw += s * xs[j];
        }
        gw.push(cfg.gamma_w * w + dx * sw);
        gb.push(cfg.gamma_b * b + dx * sb);
    }
    Ok(Gradient { w: gw, b: gb })
}

/// Extremes seen over every forward solve of a problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub forward_solves: usize,
    pub max_mass_error: f64,
    pub min_value: f64,
}

impl Default for SolveStats {
    fn default() -> Self {
        Self {
            forward_solves: 0,
            max_mass_error: 0.0,
            min_value: f64::INFINITY,
        }
    }
}

/// Everything fixed during training: initial density, target, activation and
/// solver settings.
#[derive(Debug)]
pub struct ControlProblem {
    pub f0: DensityField,
    pub target: TargetMeasure,
    pub activation: Activation,
    pub config: RunConfig,
    time: TimeGrid,
    stats: Mutex<SolveStats>,
}

impl ControlProblem {
    pub fn new(
        f0: DensityField,
        target: TargetMeasure,
        activation: Activation,
        config: RunConfig,
    ) -> Result<Self> {
        config.validate()?;
        if *f0.grid() != config.grid()? {
            return Err(Error::Shape("initial density is not on the configured grid".into()));
        }
        if !activation.is_bounded() {
            log::warn!("{activation} is unbounded; the theory assumes compactly supported data");
        }
        let time = config.time_grid()?;
        Ok(Self {
            f0,
            target,
            activation,
            config,
            time,
            stats: Mutex::new(SolveStats::default()),
        })
    }

    pub fn time_grid(&self) -> &TimeGrid {
        &self.time
    }

    pub fn grid(&self) -> &Grid1D {
        self.f0.grid()
    }

    pub fn stats(&self) -> SolveStats {
        *self.stats.lock().expect("stats lock")
    }

    /// Forward density trajectory under `c`.
    pub fn forward(&self, c: &ControlPath) -> Result<Trajectory> {
        let drift = DriftSpec::forward(c.clone(), self.activation);
        let traj = solve_transport(&self.f0, &drift, &self.time, &FvmOptions::density(self.config.cfl))?;
        let m0 = self.f0.mass();
        let mut s = self.stats.lock().expect("stats lock");
        s.forward_solves += 1;
        for f in &traj {
            s.max_mass_error = s.max_mass_error.max((f.mass() - m0).abs());
            s.min_value = s.min_value.min(f.min());
        }
        Ok(traj)
    }

    /// Adjoint trajectory in reversed time `s = T - t`.
    pub fn adjoint(&self, c: &ControlPath) -> Result<Trajectory> {
        let lam0 = adjoint_initial(&self.target, self.grid())?;
        let drift = DriftSpec::adjoint(c.clone(), self.activation);
        solve_transport(&lam0, &drift, &self.time, &FvmOptions::adjoint(self.config.cfl))
    }

    /// `∫ ℓ̃ f_T dx` by midpoint quadrature.
    pub fn terminal_cost(&self, f_t: &DensityField) -> f64 {
        f_t.integrate(|x| tilde_loss(x, &self.target))
    }

    /// Tikhonov part `γ_w/2 ∫ w² + γ_b/2 ∫ b²`.
    pub fn regularization(&self, c: &ControlPath) -> f64 {
        let sq = |v: &[f64]| self.time.trapezoid(&v.iter().map(|x| x * x).collect::<Vec<_>>());
        0.5 * self.config.gamma_w * sq(c.w()) + 0.5 * self.config.gamma_b * sq(c.b())
    }

    /// Reduced cost of `c`.
    pub fn cost(&self, c: &ControlPath) -> Result<f64> {
        let traj = self.forward(c)?;
        Ok(self.cost_of(c, &traj))
    }

    fn cost_of(&self, c: &ControlPath, traj: &[DensityField]) -> f64 {
        self.terminal_cost(traj.last().expect("nonempty trajectory")) + self.regularization(c)
    }

    /// Gradient at `c`, with the forward trajectory that produced it.
    pub fn gradient(&self, c: &ControlPath) -> Result<(Gradient, Trajectory)> {
        let f = self.forward(c)?;
        let lam = self.adjoint(c)?;
        Ok((control_gradient(c, &f, &lam, self.activation, &self.config)?, f))
    }

    /// Backtracks `ρ = ρ₀ 2^{-m}` along `-grad` from `c` (cost `cost0`) and
    /// returns the accepted controls, their cost and `ρ*`.
    ///
    /// If no trial satisfies sufficient decrease, the best decreasing trial is
    /// returned; if none decreases the cost, `c` comes back with `ρ* = 0`.
    /// Trials whose forward solve fails count as infinite cost.
    pub fn armijo_search(
        &self,
        c: &ControlPath,
        cost0: f64,
        grad: &Gradient,
    ) -> (ControlPath, f64, f64) {
        let grad = grad.clone().pinned();
        let slope = grad.norm_sq(&self.time);
        if slope == 0.0 {
            return (c.clone(), cost0, 0.0);
        }
        let mut best: Option<(ControlPath, f64, f64)> = None;
        let mut rho = ARMIJO_RHO0;
        for _ in 0..self.config.max_armijo {
            let trial = c.stepped(rho, &grad.w, &grad.b).pinned();
            let cost = match self.cost(&trial) {
                Ok(v) if v.is_finite() => v,
                _ => f64::INFINITY,
            };
            if cost <= cost0 - ARMIJO_C * rho * slope {
                return (trial, cost, rho);
            }
            if cost < cost0 && best.as_ref().is_none_or(|b| cost < b.1) {
                best = Some((trial, cost, rho));
            }
            rho *= ARMIJO_FACTOR;
        }
        best.unwrap_or_else(|| (c.clone(), cost0, 0.0))
    }

    /// Block Gauss–Seidel training from `c0`.
    pub fn train(&self, c0: &ControlPath) -> Result<OptimState> {
        if c0.grid() != &self.time {
            return Err(Error::Shape("initial controls are not on the configured time grid".into()));
        }
        let diverged = |iteration: usize, reason: String| Error::Divergence { iteration, reason };
        let mut c = c0.clone();
        let f = self.forward(&c).map_err(|e| diverged(0, e.to_string()))?;
        let mut cost = self.cost_of(&c, &f);
        if !cost.is_finite() {
            return Err(diverged(0, format!("initial cost is {cost}")));
        }
        let mut state = OptimState {
            controls: c.clone(),
            cost_history: vec![cost],
            rel_error_history: Vec::new(),
            iteration: 0,
            log: Vec::new(),
            stop: StopReason::MaxIterations,
            initial_grad_max: f64::NAN,
            final_grad_max: f64::NAN,
        };
        for k in 1..=self.config.max_iterations {
            let lam = self.adjoint(&c).map_err(|e| diverged(k, e.to_string()))?;
            let f = self.forward(&c).map_err(|e| diverged(k, e.to_string()))?;
            let grad = control_gradient(&c, &f, &lam, self.activation, &self.config)?;
            let (gw, gb) = grad.clone().pinned().max_abs();
            if k == 1 {
                state.initial_grad_max = gw.max(gb);
            }
            state.final_grad_max = gw.max(gb);
            let (next, next_cost, rho) = self.armijo_search(&c, cost, &grad);
            if !next_cost.is_finite() {
                return Err(diverged(k, format!("cost became {next_cost}")));
            }
            let norm = next.c0_norm();
            let dist = next.c0_distance(&c);
            let e_k = if dist == 0.0 { 0.0 } else { dist / norm };
            state.log.push(IterationRecord {
                k,
                cost: next_cost,
                e_k,
                rho_star: rho,
                max_grad_w: gw,
                max_grad_b: gb,
            });
            log::debug!("iteration {k}: cost {next_cost:.6e}, e {e_k:.3e}, rho {rho}");
            c = next;
            cost = next_cost;
            state.cost_history.push(cost);
            state.rel_error_history.push(e_k);
            state.iteration = k;
            if rho == 0.0 {
                state.stop = StopReason::Stalled;
                break;
            }
            if e_k <= self.config.tol {
                state.stop = StopReason::Tolerance;
                break;
            }
        }
        state.controls = c;
        Ok(state)
    }
}

/// Why [`ControlProblem::train`] stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// `e^(k) <= TOL`.
    Tolerance,
    /// The line search found no decrease.
    Stalled,
    MaxIterations,
}

/// One row of the iteration log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub cost: f64,
    pub e_k: f64,
    pub rho_star: f64,
    pub max_grad_w: f64,
    pub max_grad_b: f64,
}

/// Result and history of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub controls: ControlPath,
    /// Cost of the initial guess followed by the cost after each iteration.
    pub cost_history: Vec<f64>,
    pub rel_error_history: Vec<f64>,
    pub iteration: usize,
    pub log: Vec<IterationRecord>,
    pub stop: StopReason,
    /// `max(|g_w|, |g_b|)` at the first and last evaluated iterate.
    pub initial_grad_max: f64,
    pub final_grad_max: f64,
}

impl OptimState {
    pub fn converged(&self) -> bool {
        self.stop == StopReason::Tolerance
    }

    pub fn final_cost(&self) -> f64 {
        *self.cost_history.last().expect("nonempty history")
    }

    /// CSV with columns `k, cost, e_k, rho_star, max_abs_grad_w, max_abs_grad_b`.
    pub fn write_log_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["k", "cost", "e_k", "rho_star", "max_abs_grad_w", "max_abs_grad_b"])?;
        for r in &self.log {
            w.write_record([
                r.k.to_string(),
                fmt_f64(r.cost),
                fmt_f64(r.e_k),
                fmt_f64(r.rho_star),
                fmt_f64(r.max_grad_w),
                fmt_f64(r.max_grad_b),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// CSV with columns `t, w, b`.
pub fn write_controls_csv<W: Write>(c: &ControlPath, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "w", "b"])?;
    for (k, t) in c.grid().nodes().enumerate() {
        w.write_record([fmt_f64(t), fmt_f64(c.w()[k]), fmt_f64(c.b()[k])])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the output of [`write_controls_csv`] back onto `grid`.
pub fn read_controls_csv<R: std::io::Read>(reader: R, grid: TimeGrid) -> Result<ControlPath> {
    let mut r = csv::Reader::from_reader(reader);
    let (mut w, mut b) = (Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec?;
        let field = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Io(format!("bad control row {:?}", rec)))
        };
        w.push(field(1)?);
        b.push(field(2)?);
    }
    ControlPath::from_samples(grid, w, b)
}

/// Root of `w e^{-2w} = c` on the increasing branch `w < 1/2`.
pub fn solve_weight_equation(c: f64) -> Result<f64> {
    let bound = 0.5 * (-1.0_f64).exp();
    if !c.is_finite() {
        return Err(Error::NonFinite("closed-form right-hand side"));
    }
    if c >= bound {
        return Err(Error::NoRoot { c, bound });
    }
    let h = |w: f64| w * (-2.0 * w).exp() - c;
    // h(c) <= 0 <= h(0) for c < 0, h(0) <= 0 < h(1/2) otherwise
    let (mut lo, mut hi) = if c < 0.0 { (c, 0.0) } else { (0.0, 0.5) };
    let mut w = if c < 0.0 { 0.5 * c } else { c.min(0.25) };
    for _ in 0..200 {
        let hw = h(w);
        if hw == 0.0 {
            return Ok(w);
        }
        if hw < 0.0 {
            lo = w;
        } else {
            hi = w;
        }
        let slope = (1.0 - 2.0 * w) * (-2.0 * w).exp();
        let newton = w - hw / slope;
        let next = if newton > lo && newton < hi && slope > 0.0 {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - w).abs() <= 1e-16 * (1.0 + w.abs()) || hi - lo <= 1e-16 * (1.0 + lo.abs()) {
            return Ok(next);
        }
        w = next;
    }
    Ok(w)
}

/// Time-constant `(w, b)` from the identity-activation optimality system:
/// `w e^{-2w} = (1/γ_w) ∫ x λ_T f_0 dx` and `b = (1/γ_b) e^{w} ∫ λ_T f_0 dx`.
///
/// The constants do not satisfy `w(0) = b(0) = 0`; callers decide how to use them.
pub fn identity_closed_form(
    f0: &DensityField,
    lam_t: &DensityField,
    cfg: &RunConfig,
) -> Result<(f64, f64)> {
    if f0.grid() != lam_t.grid() {
        return Err(Error::Shape("closed form needs both fields on one grid".into()));
    }
    if !(cfg.gamma_w > 0.0) || !(cfg.gamma_b > 0.0) {
        return Err(Error::InvalidConfig {
            field: "gamma_w",
            reason: "the closed form divides by both Tikhonov weights".into(),
        });
    }
    let g = f0.grid();
    let (mut m0, mut m1) = (0.0, 0.0);
    for (j, (f, l)) in f0.averages().iter().zip(lam_t.averages()).enumerate() {
        m0 += f * l;
        m1 += g.center(j) * f * l;
    }
    let (m0, m1) = (m0 * g.dx(), m1 * g.dx());
    let w = solve_weight_equation(m1 / cfg.gamma_w)?;
    Ok((w, w.exp() * m0 / cfg.gamma_b))
}
