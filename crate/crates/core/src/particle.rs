//! Microscopic dynamics: the residual network recursion, its neural-ODE limit,
//! and the empirical loss.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::activation::Activation;
use crate::control::{ControlPath, Controls};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::io::fmt_f64;

/// `M` particles in `R^d` together with their targets.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    dim: usize,
    states: Vec<f64>,
    targets: Vec<f64>,
    time: f64,
}

impl ParticleEnsemble {
    /// `states` and `targets` are row-major `M x dim` arrays.
    pub fn new(dim: usize, states: Vec<f64>, targets: Vec<f64>) -> Result<Self> {
        if dim == 0 || states.is_empty() || !states.len().is_multiple_of(dim) {
            return Err(Error::Shape(format!(
                "{} state values do not form rows of dimension {dim}",
                states.len()
            )));
        }
        if states.len() != targets.len() {
            return Err(Error::Shape(format!(
                "states have {} values but targets have {}",
                states.len(),
                targets.len()
            )));
        }
        Ok(Self {
            dim,
            states,
            targets,
            time: 0.0,
        })
    }

    /// One-dimensional ensemble with targets set to zero.
    pub fn from_positions(xs: Vec<f64>) -> Result<Self> {
        let targets = vec![0.0; xs.len()];
        Self::new(1, xs, targets)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets[i * self.dim..(i + 1) * self.dim]
    }

    /// Component-wise mean of the states.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for row in self.states.chunks_exact(self.dim) {
            for (acc, x) in m.iter_mut().zip(row) {
                *acc += x;
            }
        }
        let n = self.len() as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["index".to_string()];
        header.extend((1..=self.dim).map(|k| format!("x_{k}")));
        header.extend((1..=self.dim).map(|k| format!("y_{k}")));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = vec![i.to_string()];
            rec.extend(self.state(i).iter().map(|&v| fmt_f64(v)));
            rec.extend(self.target(i).iter().map(|&v| fmt_f64(v)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        let cols = header.len();
        if cols < 3 || (cols - 1) % 2 != 0 || &header[0] != "index" {
            return Err(Error::Shape(format!("unexpected ensemble header {header:?}")));
        }
        let dim = (cols - 1) / 2;
        let (mut states, mut targets) = (Vec::new(), Vec::new());
        for rec in r.records() {
            let rec = rec?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Io(format!("bad number `{s}`: {e}")))
            };
            for k in 0..dim {
                states.push(parse(&rec[1 + k])?);
                targets.push(parse(&rec[1 + dim + k])?);
            }
        }
        Self::new(dim, states, targets)
    }
}

/// Layer count, step, and activation of a residual network with identity skips.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResNetConfig {
    pub n_layers: usize,
    pub dt: f64,
    pub activation: Activation,
}

/// Pushes `x0` through `L + 1` residual updates
/// `x <- x + dt * σ(w(κ dt) x + b(κ dt))`.
pub fn resnet_forward(x0: &[f64], c: &ControlPath, cfg: &ResNetConfig) -> Result<Vec<f64>> {
    if !(cfg.dt > 0.0) {
        return Err(Error::InvalidConfig {
            field: "dt",
            reason: format!("layer step must be positive, got {}", cfg.dt),
        });
    }
    let last = cfg.n_layers as f64 * cfg.dt;
    c.eval(last)?;
    let mut x = x0.to_vec();
    for kappa in 0..=cfg.n_layers {
        let (w, b) = c.interpolate(kappa as f64 * cfg.dt);
        euler_update(&mut x, w, b, cfg.dt, cfg.activation);
    }
    Ok(x)
}

#[inline]
fn euler_update(x: &mut [f64], w: f64, b: f64, dt: f64, a: Activation) {
    for v in x.iter_mut() {
        *v += dt * a.value(w * *v + b);
    }
}

/// Time integrator for the particle ODE.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OdeMethod {
    Euler,
    Rk4,
}

/// Ensemble size from which integration runs in parallel.
const PAR_THRESHOLD: usize = 4096;

/// Integrates `dx_i/dt = σ(w(t) x_i + b(t))` from `t = 0` to `grid.t_final()`.
pub fn ode_integrate<C: Controls + Sync>(
    ens: &ParticleEnsemble,
    c: &C,
    a: Activation,
    grid: &TimeGrid,
    method: OdeMethod,
) -> ParticleEnsemble {
    let dim = ens.dim;
    let mut out = ens.clone();
    let advance = |row: &mut [f64]| match method {
        OdeMethod::Euler => {
            for k in 0..grid.n_steps() {
                let (w, b) = c.at(grid.node(k));
                euler_update(row, w, b, grid.dt(), a);
            }
        }
        OdeMethod::Rk4 => {
            for k in 0..grid.n_steps() {
                rk4_update(row, c, a, grid.node(k), grid.dt());
            }
        }
    };
    if ens.len() >= PAR_THRESHOLD {
        out.states.par_chunks_mut(dim).for_each(advance);
    } else {
        out.states.chunks_mut(dim).for_each(advance);
    }
    out.time = ens.time + grid.t_final();
    out
}

fn rk4_update<C: Controls>(x: &mut [f64], c: &C, a: Activation, t: f64, dt: f64) {
    let (w0, b0) = c.at(t);
    let (wh, bh) = c.at(t + 0.5 * dt);
    let (w1, b1) = c.at(t + dt);
    for v in x.iter_mut() {
        let f = |y: f64, w: f64, b: f64| a.value(w * y + b);
        let k1 = f(*v, w0, b0);
        let k2 = f(*v + 0.5 * dt * k1, wh, bh);
        let k3 = f(*v + 0.5 * dt * k2, wh, bh);
        let k4 = f(*v + dt * k3, w1, b1);
        *v += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
}

/// `(1/M) Σ |x_i - y_i|²`.
pub fn empirical_loss(ens: &ParticleEnsemble) -> f64 {
    let total: f64 = ens
        .states
        .chunks_exact(ens.dim)
        .zip(ens.targets.chunks_exact(ens.dim))
        .map(|(x, y)| x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum();
    total / ens.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn path(n: usize, dt: f64, w: f64, b: f64) -> ControlPath {
        let grid = TimeGrid::new(n as f64 * dt, dt).unwrap();
        ControlPath::from_fn(grid, |_| (w, b)).unwrap()
    }

    #[test]
    fn zero_controls_fix_tanh_states() {
        let c = path(20, 0.1, 0.0, 0.0);
        for l in [0, 3, 19] {
            let cfg = ResNetConfig {
                n_layers: l,
                dt: 0.1,
                activation: Activation::Tanh,
            };
            assert_eq!(resnet_forward(&[1.0], &c, &cfg).unwrap(), vec![1.0]);
        }
    }

    #[test]
    fn constant_bias_gives_linear_growth() {
        let (l, dt, b0) = (7, 0.05, 0.8);
        let c = path(10, dt, 0.0, b0);
        let cfg = ResNetConfig {
            n_layers: l,
            dt,
            activation: Activation::Identity,
        };
        let x = resnet_forward(&[0.0], &c, &cfg).unwrap()[0];
        assert!((x - (l + 1) as f64 * dt * b0).abs() < 1e-14);
    }

    #[test]
    fn sigmoid_recursion_matches_scalar_loop() {
        let c = path(10, 0.1, 1.0, 0.0);
        let cfg = ResNetConfig {
            n_layers: 9,
            dt: 0.1,
            activation: Activation::Sigmoid,
        };
        let mut y: f64 = 0.3;
        for _ in 0..10 {
            y = y + 0.1 / (1.0 + (-y).exp());
        }
        let x = resnet_forward(&[0.3], &c, &cfg).unwrap()[0];
        assert!((x - y).abs() < 1e-15, "{x} vs {y}");
    }

    #[test]
    fn resnet_needs_controls_for_every_layer() {
        let c = path(5, 0.1, 0.0, 0.0);
        let cfg = ResNetConfig {
            n_layers: 9,
            dt: 0.1,
            activation: Activation::Tanh,
        };
        assert!(resnet_forward(&[0.0], &c, &cfg).is_err());
    }

    #[test]
    fn euler_with_unit_bias() {
        let grid = TimeGrid::new(1.0, 0.01).unwrap();
        let c = ControlPath::from_fn(grid, |_| (0.0, 1.0)).unwrap();
        let ens = ParticleEnsemble::from_positions(vec![2.0]).unwrap();
        let out = ode_integrate(&ens, &c, Activation::Identity, &grid, OdeMethod::Euler);
        assert!((out.states()[0] - 3.0).abs() < 1e-12);
        assert_eq!(out.time(), 1.0);
    }

    #[test]
    fn rk4_exponential_growth() {
        let grid = TimeGrid::new(1.0, 0.01).unwrap();
        let c = ControlPath::from_fn(grid, |_| (1.0, 0.0)).unwrap();
        let ens = ParticleEnsemble::from_positions(vec![1.0]).unwrap();
        let out = ode_integrate(&ens, &c, Activation::Identity, &grid, OdeMethod::Rk4);
        assert!((out.states()[0] - std::f64::consts::E).abs() < 1e-6);
    }

    #[test]
    fn rk4_self_convergence_is_fourth_order() {
        let ctrl = |t: f64| (0.8 * (3.0 * t).sin(), 0.5 * t.cos() - 0.2);
        let ens = ParticleEnsemble::from_positions(vec![-0.7, 0.1, 0.9]).unwrap();
        let run = |n: usize| {
            let g = TimeGrid::with_steps(1.0, n).unwrap();
            ode_integrate(&ens, &ctrl, Activation::Tanh, &g, OdeMethod::Rk4)
        };
        let reference = run(4096);
        let err = |n: usize| {
            run(n)
                .states()
                .iter()
                .zip(reference.states())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2, e3) = (err(8), err(16), err(32));
        let o1 = (e1 / e2).log2();
        let o2 = (e2 / e3).log2();
        assert!(o1 >= 3.9 && o2 >= 3.9, "orders {o1} {o2}");
    }

    #[test]
    fn identity_mean_is_conserved_under_centering_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..500).map(|_| rng.random_range(-1.0..2.0)).collect();
        let ens = ParticleEnsemble::from_positions(xs).unwrap();
        let m0 = ens.mean()[0];
        let ctrl = move |t: f64| {
            let w = (2.0 * t).sin() - 0.5;
            (w, -w * m0)
        };
        let grid = TimeGrid::new(1.0, 0.01).unwrap();
        let out = ode_integrate(&ens, &ctrl, Activation::Identity, &grid, OdeMethod::Rk4);
        assert!((out.mean()[0] - m0).abs() < 1e-12);
    }

    #[test]
    fn losses() {
        let e = ParticleEnsemble::new(1, vec![0.5, 1.5], vec![0.5, 1.5]).unwrap();
        assert_eq!(empirical_loss(&e), 0.0);
        let e = ParticleEnsemble::new(1, vec![0.0, 0.0], vec![1.0, -1.0]).unwrap();
        assert_eq!(empirical_loss(&e), 1.0);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = 2;
        let xs: Vec<f64> = (0..2000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ys: Vec<f64> = (0..2000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let e = ParticleEnsemble::new(d, xs.clone(), ys.clone()).unwrap();
        // independent accumulation
        let mut acc = 0.0;
        for i in 0..1000 {
            let mut sq = 0.0;
            for k in 0..d {
                let diff = xs[i * d + k] - ys[i * d + k];
                sq += diff.powi(2);
            }
            acc += sq;
        }
        assert!((empirical_loss(&e) - acc / 1000.0).abs() < 1e-12);
    }

    #[test]
    fn shape_checks() {
        assert!(ParticleEnsemble::new(2, vec![1.0; 3], vec![1.0; 3]).is_err());
        assert!(ParticleEnsemble::new(1, vec![1.0; 3], vec![1.0; 2]).is_err());
        assert!(ParticleEnsemble::new(1, vec![], vec![]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let e = ParticleEnsemble::new(2, vec![0.1, 1.0 / 3.0, -2.5, 1e-300], vec![1.0, 2.0, 3.0, 4.0])
            .unwrap();
        let mut buf = Vec::new();
        e.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("index,x_1,x_2,y_1,y_2"));
        let back = ParticleEnsemble::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, e);
    }

    proptest! {
        #[test]
        fn euler_equals_resnet(
            x0 in -3.0f64..3.0,
            ws in proptest::collection::vec(-2.0f64..2.0, 65),
            bs in proptest::collection::vec(-2.0f64..2.0, 65),
            layers in 0usize..64,
            act in 0usize..4,
        ) {
            let a = [Activation::Identity, Activation::Sigmoid, Activation::Tanh, Activation::Gcu][act];
            let dt = 0.05;
            let n = layers + 1;
            let grid = TimeGrid::new(n as f64 * dt, dt).unwrap();
            let c = ControlPath::from_samples(grid, ws[..=n].to_vec(), bs[..=n].to_vec()).unwrap();
            let cfg = ResNetConfig { n_layers: layers, dt, activation: a };
            let r = resnet_forward(&[x0], &c, &cfg).unwrap();
            let ens = ParticleEnsemble::from_positions(vec![x0]).unwrap();
            let o = ode_integrate(&ens, &c, a, &grid, OdeMethod::Euler);
            prop_assert_eq!(r[0].to_bits(), o.states()[0].to_bits());
        }
    }
}
