//! Finite-volume solver for `∂_t u + ∂_x(v(x, t) u) = 0` in one dimension:
//! CWENO3 interface states, local Lax–Friedrichs fluxes, and SSP-RK3 in time.
//!
//! The same solver advances the forward density (drift `σ(w(t)x + b(t))`) and
//! the time-reversed adjoint (drift `-σ(w(T-s)x + b(T-s))`).

mod flux;
mod reconstruct;

pub use flux::llf_flux;
pub use reconstruct::{
    cweno3_faces, cweno3_reconstruct, limit_positive, optimal_parabola_faces, CWENO_EPS,
    CWENO_POWER,
};

use crate::activation::Activation;
use crate::control::ControlPath;
use crate::error::{Error, Result};
use crate::grid::{Grid1D, TimeGrid};

/// Cell averages on a [`Grid1D`] at a given time.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    grid: Grid1D,
    averages: Vec<f64>,
    time: f64,
}

impl DensityField {
    pub fn new(grid: Grid1D, averages: Vec<f64>, time: f64) -> Result<Self> {
        if averages.len() != grid.n_cells() {
            return Err(Error::Shape(format!(
                "{} averages for {} cells",
                averages.len(),
                grid.n_cells()
            )));
        }
        Ok(Self {
            grid,
            averages,
            time,
        })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn averages(&self) -> &[f64] {
        &self.averages
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.time = t;
        self
    }

    /// `dx Σ ū_j`.
    pub fn mass(&self) -> f64 {
        self.grid.dx() * self.averages.iter().sum::<f64>()
    }

    pub fn min(&self) -> f64 {
        self.averages.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Midpoint quadrature `dx Σ h(x_j) ū_j`.
    pub fn integrate(&self, h: impl Fn(f64) -> f64) -> f64 {
        let g = &self.grid;
        g.dx()
            * self
                .averages
                .iter()
                .enumerate()
                .map(|(j, u)| h(g.center(j)) * u)
                .sum::<f64>()
    }

    /// Rescales to unit mass.
    pub fn normalized(mut self) -> Result<Self> {
        let m = self.mass();
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::Unnormalized { mass: m });
        }
        self.averages.iter_mut().for_each(|v| *v /= m);
        Ok(self)
    }
}

/// A density trajectory sampled at every node of a [`TimeGrid`].
pub type Trajectory = Vec<DensityField>;

/// Velocity field `σ(w(t)x + b(t))`, optionally reversed in time and direction.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftSpec {
    pub control: ControlPath,
    pub activation: Activation,
    /// When set, the velocity at time `s` is `-σ(w(T-s)x + b(T-s))`.
    pub time_reversed: bool,
}

impl DriftSpec {
    pub fn forward(control: ControlPath, activation: Activation) -> Self {
        Self {
            control,
            activation,
            time_reversed: false,
        }
    }

    pub fn adjoint(control: ControlPath, activation: Activation) -> Self {
        Self {
            control,
            activation,
            time_reversed: true,
        }
    }

    /// `(w, b, sign)` active at solver time `t`.
    #[inline]
    fn coefficients(&self, t: f64) -> (f64, f64, f64) {
        if self.time_reversed {
            let (w, b) = self.control.interpolate(self.control.horizon() - t);
            (w, b, -1.0)
        } else {
            let (w, b) = self.control.interpolate(t);
            (w, b, 1.0)
        }
    }

    #[inline]
    pub fn velocity(&self, x: f64, t: f64) -> f64 {
        let (w, b, sign) = self.coefficients(t);
        sign * self.activation.value(w * x + b)
    }

    /// Upper bound of `|v|` over `[a, b] x [0, T]`.
    pub fn speed_bound(&self, grid: &Grid1D) -> f64 {
        if let Some(bound) = self.activation.bound() {
            return bound;
        }
        // Identity, ReLU and GCU satisfy |σ(z)| <= |z|, and w x + b is affine in
        // x on the domain and in t between control nodes.
        let c = &self.control;
        c.w()
            .iter()
            .zip(c.b())
            .flat_map(|(&w, &b)| [w * grid.a() + b, w * grid.b() + b])
            .map(|z| match self.activation {
                Activation::Identity | Activation::Relu => self.activation.value(z).abs(),
                _ => z.abs(),
            })
            .fold(0.0, f64::max)
    }
}

/// Ghost-cell treatment at the domain ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Ghost averages are zero: nothing enters, outflow is upwinded.
    ZeroInflow,
    /// Ghost averages continue the boundary cells linearly.
    Extrapolate,
}

/// Regularization `ε` of the CWENO smoothness indicators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Epsilon {
    Fixed(f64),
    /// `ε = dx²`.
    GridSquared,
}

impl Epsilon {
    #[inline]
    pub fn value(self, dx: f64) -> f64 {
        match self {
            Epsilon::Fixed(e) => e,
            Epsilon::GridSquared => dx * dx,
        }
    }
}

/// Settings of a transport solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FvmOptions {
    pub cfl: f64,
    pub boundary: Boundary,
    pub epsilon: Epsilon,
    /// Clip reconstructed face values of nonnegative cells at zero
    /// (conservative; meant for densities, not for adjoint fields).
    pub positivity: bool,
    /// Cap on SSP-RK3 substeps inside one control interval.
    pub max_substeps: usize,
}

impl FvmOptions {
    pub fn new(cfl: f64, boundary: Boundary) -> Self {
        Self {
            cfl,
            boundary,
            epsilon: Epsilon::GridSquared,
            positivity: false,
            max_substeps: 10_000,
        }
    }

    /// Zero-inflow boundaries with the positivity limiter.
    pub fn density(cfl: f64) -> Self {
        Self {
            positivity: true,
            ..Self::new(cfl, Boundary::ZeroInflow)
        }
    }

    /// Extrapolated boundaries, no limiter.
    pub fn adjoint(cfl: f64) -> Self {
        Self::new(cfl, Boundary::Extrapolate)
    }
}

impl Default for FvmOptions {
    fn default() -> Self {
        Self::density(0.45)
    }
}

const GHOSTS: usize = 2;

/// `d ū_j/dt = -(F_{j+1/2} - F_{j-1/2}) / dx`.
pub fn semidiscrete_rhs(
    field: &DensityField,
    drift: &DriftSpec,
    t: f64,
    opts: &FvmOptions,
) -> Vec<f64> {
    let mut out = vec![0.0; field.averages.len()];
    rhs_into(&field.grid, &field.averages, drift, t, opts, &mut out);
    out
}

fn rhs_into(
    grid: &Grid1D,
    u: &[f64],
    drift: &DriftSpec,
    t: f64,
    opts: &FvmOptions,
    out: &mut [f64],
) {
    let n = u.len();
    let mut ext = vec![0.0; n + 2 * GHOSTS];
    ext[GHOSTS..GHOSTS + n].copy_from_slice(u);
    if opts.boundary == Boundary::Extrapolate && n >= 2 {
        let (l0, l1) = (u[0], u[1]);
        let (r0, r1) = (u[n - 1], u[n - 2]);
        ext[1] = 2.0 * l0 - l1;
        ext[0] = 3.0 * l0 - 2.0 * l1;
        ext[n + GHOSTS] = 2.0 * r0 - r1;
        ext[n + GHOSTS + 1] = 3.0 * r0 - 2.0 * r1;
    }

    // faces[c] = (left, right) reconstruction of extended cell c + 1, which is
    // grid cell c - 1 for c in 0..=n+1
    let eps = opts.epsilon.value(grid.dx());
    let faces: Vec<(f64, f64)> = (1..=n + 2)
        .map(|e| {
            let f = cweno3_faces([ext[e - 1], ext[e], ext[e + 1]], eps);
            if opts.positivity {
                limit_positive(ext[e], f)
            } else {
                f
            }
        })
        .collect();

    let (w, b, sign) = drift.coefficients(t);
    let a = drift.activation;
    let dx = grid.dx();
    let mut flux_left = {
        let speed = sign * a.value(w * grid.interface(0) + b);
        llf_flux(faces[0].1, faces[1].0, speed)
    };
    for j in 0..n {
        let speed = sign * a.value(w * grid.interface(j + 1) + b);
        let flux_right = llf_flux(faces[j + 1].1, faces[j + 2].0, speed);
        out[j] = -(flux_right - flux_left) / dx;
        flux_left = flux_right;
    }
}

fn max_interface_speed(grid: &Grid1D, drift: &DriftSpec, t: f64) -> f64 {
    (0..=grid.n_cells())
        .map(|i| drift.velocity(grid.interface(i), t).abs())
        .fold(0.0, f64::max)
}

/// One Shu–Osher SSP-RK3 step of size `dt` starting at `field.time()`.
pub fn ssprk3_step(
    field: &DensityField,
    drift: &DriftSpec,
    dt: f64,
    opts: &FvmOptions,
) -> Result<DensityField> {
    let grid = field.grid;
    let t = field.time;
    let max_speed = [t, t + dt, t + 0.5 * dt]
        .into_iter()
        .map(|s| max_interface_speed(&grid, drift, s))
        .fold(0.0, f64::max);
    check_cfl(max_speed, dt, grid.dx(), opts.cfl)?;
    let mut next = field.clone();
    step_unchecked(&grid, &mut next.averages, drift, t, dt, opts);
    next.time = t + dt;
    Ok(next)
}

fn check_cfl(max_speed: f64, dt: f64, dx: f64, cfl: f64) -> Result<()> {
    if !max_speed.is_finite() || dt * max_speed > cfl * dx * (1.0 + 1e-12) {
        return Err(Error::Cfl {
            max_speed,
            dt,
            dx,
            cfl,
        });
    }
    Ok(())
}

fn step_unchecked(
    grid: &Grid1D,
    u: &mut [f64],
    drift: &DriftSpec,
    t: f64,
    dt: f64,
    opts: &FvmOptions,
) {
    let n = u.len();
    let mut l = vec![0.0; n];

    rhs_into(grid, u, drift, t, opts, &mut l);
    let u1: Vec<f64> = u.iter().zip(&l).map(|(a, r)| a + dt * r).collect();

    rhs_into(grid, &u1, drift, t + dt, opts, &mut l);
    let u2: Vec<f64> = u
        .iter()
        .zip(&u1)
        .zip(&l)
        .map(|((a, b), r)| 0.75 * a + 0.25 * (b + dt * r))
        .collect();

    rhs_into(grid, &u2, drift, t + 0.5 * dt, opts, &mut l);
    for ((a, b), r) in u.iter_mut().zip(&u2).zip(&l) {
        *a = *a / 3.0 + 2.0 / 3.0 * (b + dt * r);
    }
}

/// Number of equal substeps per control interval that satisfies the CFL bound
/// for the whole solve.
pub fn substeps_for(drift: &DriftSpec, grid: &Grid1D, dt: f64, opts: &FvmOptions) -> Result<usize> {
    let speed = drift.speed_bound(grid);
    if !speed.is_finite() {
        return Err(Error::Cfl {
            max_speed: speed,
            dt,
            dx: grid.dx(),
            cfl: opts.cfl,
        });
    }
    let ratio = dt * speed / (opts.cfl * grid.dx());
    let n = (ratio * (1.0 - 1e-12)).ceil().max(1.0);
    if n > opts.max_substeps as f64 {
        return Err(Error::Cfl {
            max_speed: speed,
            dt: dt / opts.max_substeps as f64,
            dx: grid.dx(),
            cfl: opts.cfl,
        });
    }
    Ok(n as usize)
}

/// Advances `f0` over `time`, returning the snapshot at every time node.
///
/// Each control interval is split into the same number of SSP-RK3 substeps,
/// chosen from [`DriftSpec::speed_bound`] so the CFL limit holds throughout.
pub fn solve_transport(
    f0: &DensityField,
    drift: &DriftSpec,
    time: &TimeGrid,
    opts: &FvmOptions,
) -> Result<Trajectory> {
    let grid = f0.grid;
    let n_sub = substeps_for(drift, &grid, time.dt(), opts)?;
    let h = time.dt() / n_sub as f64;
    let mut traj = Vec::with_capacity(time.n_nodes());
    let mut current = f0.clone().with_time(0.0);
    traj.push(current.clone());
    for k in 0..time.n_steps() {
        let t0 = time.node(k);
        for s in 0..n_sub {
            step_unchecked(
                &grid,
                &mut current.averages,
                drift,
                t0 + s as f64 * h,
                h,
                opts,
            );
        }
        current.time = time.node(k + 1);
        if current.averages.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("transport solution"));
        }
        traj.push(current.clone());
    }
    Ok(traj)
}

const GAUSS3_NODES: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
const GAUSS3_WEIGHTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];

/// Cell averages of `u` by three-point Gauss–Legendre quadrature per cell.
pub fn cell_averages(u: impl Fn(f64) -> f64, grid: &Grid1D) -> Result<Vec<f64>> {
    let half = 0.5 * grid.dx();
    let mut out = Vec::with_capacity(grid.n_cells());
    for j in 0..grid.n_cells() {
        let xc = grid.center(j);
        let avg: f64 = GAUSS3_NODES
            .iter()
            .zip(GAUSS3_WEIGHTS)
            .map(|(&xi, wq)| wq * u(xc + half * xi))
            .sum::<f64>()
            * 0.5;
        if !avg.is_finite() {
            return Err(Error::NonFinite("initial density"));
        }
        out.push(avg);
    }
    Ok(out)
}

/// Projects a density onto the grid and renormalizes it to unit mass.
pub fn project_initial(density: impl Fn(f64) -> f64, grid: &Grid1D) -> Result<DensityField> {
    let avgs = cell_averages(density, grid)?;
    DensityField::new(*grid, avgs, 0.0)?.normalized()
}
