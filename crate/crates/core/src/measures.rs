//! One-dimensional probability measures: Wasserstein-1 distance, moments,
//! particle histograms, and Dirac steady states.

use rand::Rng;

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::fvm::DensityField;
use crate::grid::Grid1D;
use crate::particle::ParticleEnsemble;

const ATOM_MASS_TOL: f64 = 1e-12;
const DENSITY_MASS_TOL: f64 = 1e-8;

/// Weighted atoms `Σ ρ_i δ_{x_i}` with unit total weight, sorted by location.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    atoms: Vec<(f64, f64)>,
}

impl EmpiricalMeasure {
    pub fn new(mut atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Unnormalized { mass: 0.0 });
        }
        if atoms.iter().any(|(x, w)| !x.is_finite() || !w.is_finite()) {
            return Err(Error::NonFinite("atoms"));
        }
        if atoms.iter().any(|&(_, w)| w < 0.0) {
            return Err(Error::Shape("negative atom weight".into()));
        }
        let mass: f64 = atoms.iter().map(|a| a.1).sum();
        let tol = ATOM_MASS_TOL.max(4.0 * f64::EPSILON * atoms.len() as f64);
        if (mass - 1.0).abs() > tol {
            return Err(Error::Unnormalized { mass });
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self { atoms })
    }

    /// Equal weights `1/M` on each sample.
    pub fn uniform(samples: &[f64]) -> Result<Self> {
        let w = 1.0 / samples.len() as f64;
        Self::new(samples.iter().map(|&x| (x, w)).collect())
    }

    pub fn point(x: f64) -> Self {
        Self {
            atoms: vec![(x, 1.0)],
        }
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }
}

/// Either kind of measure accepted by [`wasserstein1`] and [`moments`].
#[derive(Debug, Clone, Copy)]
pub enum Measure<'a> {
    Atoms(&'a EmpiricalMeasure),
    Density(&'a DensityField),
}

impl<'a> From<&'a EmpiricalMeasure> for Measure<'a> {
    fn from(m: &'a EmpiricalMeasure) -> Self {
        Measure::Atoms(m)
    }
}

impl<'a> From<&'a DensityField> for Measure<'a> {
    fn from(f: &'a DensityField) -> Self {
        Measure::Density(f)
    }
}

// Cumulative distribution with exact left/right limits.
enum Cdf<'a> {
    Atoms {
        locs: Vec<f64>,
        cum: Vec<f64>,
    },
    Density {
        field: &'a DensityField,
        cum: Vec<f64>,
    },
}

impl<'a> Cdf<'a> {
    fn build(m: Measure<'a>) -> Result<Self> {
        match m {
            Measure::Atoms(e) => {
                let locs = e.atoms.iter().map(|a| a.0).collect();
                let mut acc = 0.0;
                let cum = e
                    .atoms
                    .iter()
                    .map(|a| {
                        acc += a.1;
                        acc
                    })
                    .collect();
                Ok(Cdf::Atoms { locs, cum })
            }
            Measure::Density(f) => {
                let mass = f.mass();
                if (mass - 1.0).abs() > DENSITY_MASS_TOL {
                    return Err(Error::Unnormalized { mass });
                }
                let dx = f.grid().dx();
                let mut cum = Vec::with_capacity(f.averages().len() + 1);
                let mut acc = 0.0;
                cum.push(0.0);
                for u in f.averages() {
                    acc += u * dx;
                    cum.push(acc);
                }
                Ok(Cdf::Density { field: f, cum })
            }
        }
    }

    fn breakpoints(&self, out: &mut Vec<f64>) {
        match self {
            Cdf::Atoms { locs, .. } => out.extend_from_slice(locs),
            Cdf::Density { field, .. } => {
                let g = field.grid();
                out.extend((0..=g.n_cells()).map(|i| g.interface(i)));
            }
        }
    }

    /// `(F(x⁻), F(x))`.
    fn limits(&self, x: f64) -> (f64, f64) {
        match self {
            Cdf::Atoms { locs, cum } => {
                let below = locs.partition_point(|&l| l < x);
                let upto = locs.partition_point(|&l| l <= x);
                let at = |k: usize| if k == 0 { 0.0 } else { cum[k - 1] };
                (at(below), at(upto))
            }
            Cdf::Density { field, cum } => {
                let g = field.grid();
                let v = if x <= g.a() {
                    0.0
                } else if x >= g.b() {
                    cum[g.n_cells()]
                } else {
                    let j = g.locate(x).unwrap_or(0);
                    cum[j] + field.averages()[j] * (x - g.interface(j))
                };
                (v, v)
            }
        }
    }
}

/// `∫ |F_μ(x) - F_ν(x)| dx`, exact for atoms and piecewise-constant densities.
pub fn wasserstein1<'a, 'b>(mu: impl Into<Measure<'a>>, nu: impl Into<Measure<'b>>) -> Result<f64> {
    let f = Cdf::build(mu.into())?;
    let g = Cdf::build(nu.into())?;
    let mut pts = Vec::new();
    f.breakpoints(&mut pts);
    g.breakpoints(&mut pts);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut total = 0.0;
    for seg in pts.windows(2) {
        let (p, q) = (seg[0], seg[1]);
        let d0 = f.limits(p).1 - g.limits(p).1;
        let d1 = f.limits(q).0 - g.limits(q).0;
        total += abs_linear_integral(d0, d1, q - p);
    }
    Ok(total)
}

// ∫_0^h |d0 + (d1 - d0) s/h| ds
fn abs_linear_integral(d0: f64, d1: f64, h: f64) -> f64 {
    if d0 * d1 >= 0.0 {
        0.5 * h * (d0.abs() + d1.abs())
    } else {
        0.5 * h * (d0 * d0 + d1 * d1) / (d0.abs() + d1.abs())
    }
}

/// Raw moment `∫ x^k dμ`; midpoint quadrature for densities.
pub fn moments<'a>(m: impl Into<Measure<'a>>, k: u32) -> f64 {
    match m.into() {
        Measure::Atoms(e) => e.atoms.iter().map(|(x, w)| w * x.powi(k as i32)).sum(),
        Measure::Density(f) => f.integrate(|x| x.powi(k as i32)),
    }
}

/// Histogram of one-dimensional particles.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub field: DensityField,
    /// Particles that fell outside the grid and were dropped before normalizing.
    pub outside: usize,
}

/// Unit-mass histogram of particle positions on `grid`.
pub fn particles_to_density(ens: &ParticleEnsemble, grid: &Grid1D) -> Result<Histogram> {
    if ens.dim() != 1 {
        return Err(Error::Shape(format!(
            "histograms need one-dimensional particles, got d = {}",
            ens.dim()
        )));
    }
    let mut counts = vec![0usize; grid.n_cells()];
    let mut outside = 0;
    for &x in ens.states() {
        match grid.locate(x) {
            Some(j) => counts[j] += 1,
            None => outside += 1,
        }
    }
    let inside = ens.len() - outside;
    if inside == 0 {
        return Err(Error::Unnormalized { mass: 0.0 });
    }
    let scale = 1.0 / (inside as f64 * grid.dx());
    let avgs = counts.iter().map(|&c| c as f64 * scale).collect();
    Ok(Histogram {
        field: DensityField::new(*grid, avgs, ens.time())?,
        outside,
    })
}

/// Draws `m` samples from the piecewise-constant density `field` by inverting
/// its cumulative distribution.
pub fn sample_density<R: Rng + ?Sized>(field: &DensityField, m: usize, rng: &mut R) -> Result<Vec<f64>> {
    let g = field.grid();
    let dx = g.dx();
    let mut cum = Vec::with_capacity(g.n_cells() + 1);
    let mut acc = 0.0;
    cum.push(0.0);
    for u in field.averages() {
        acc += u.max(0.0) * dx;
        cum.push(acc);
    }
    if !(acc > 0.0) {
        return Err(Error::Unnormalized { mass: acc });
    }
    Ok((0..m)
        .map(|_| {
            let r = rng.random::<f64>() * acc;
            let j = (cum.partition_point(|&c| c <= r).max(1) - 1).min(g.n_cells() - 1);
            let u = field.averages()[j].max(0.0);
            let frac = if u > 0.0 { ((r - cum[j]) / (u * dx)).clamp(0.0, 1.0) } else { 0.5 };
            g.interface(j) + frac * dx
        })
        .collect())
}

/// Zeros of `σ(w̄ y + b̄)` inside `domain`.
pub fn steady_state_support(
    w_bar: f64,
    b_bar: f64,
    a: Activation,
    domain: (f64, f64),
) -> Result<Vec<f64>> {
    if w_bar == 0.0 {
        return Err(Error::RankDeficient);
    }
    let (lo, hi) = domain;
    // image of the domain under y -> w̄ y + b̄
    let (z_lo, z_hi) = {
        let (p, q) = (w_bar * lo + b_bar, w_bar * hi + b_bar);
        (p.min(q), p.max(q))
    };
    let zeros: Vec<f64> = match a {
        Activation::Identity | Activation::Tanh => vec![0.0],
        Activation::Sigmoid => vec![],
        Activation::Gcu => {
            let half_pi = std::f64::consts::FRAC_PI_2;
            let pi = std::f64::consts::PI;
            let mut z = vec![0.0];
            let k_lo = ((z_lo - half_pi) / pi).floor() as i64 - 1;
            let k_hi = ((z_hi - half_pi) / pi).ceil() as i64 + 1;
            z.extend((k_lo..=k_hi).map(|k| half_pi + k as f64 * pi));
            z
        }
        Activation::Relu => {
            return Err(Error::Infeasible(
                "ReLU vanishes on a half-line; steady states are not a finite set of atoms".into(),
            ))
        }
    };
    let mut ys: Vec<f64> = zeros
        .into_iter()
        .filter(|z| (z_lo..=z_hi).contains(z))
        .map(|z| (z - b_bar) / w_bar)
        .collect();
    ys.sort_by(f64::total_cmp);
    Ok(ys)
}

/// `f_∞ = Σ ρ_i δ_{y_i}` supported on zeros of `σ(w̄ y + b̄)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateSpec {
    pub w_bar: f64,
    pub b_bar: f64,
    pub zeros: Vec<f64>,
    pub support: Vec<f64>,
    pub masses: Vec<f64>,
}

impl SteadyStateSpec {
    /// Builds the steady state with the given masses on the support found in
    /// `domain`; `masses` must match the support length and sum to one.
    pub fn new(
        w_bar: f64,
        b_bar: f64,
        a: Activation,
        domain: (f64, f64),
        masses: Vec<f64>,
    ) -> Result<Self> {
        let support = steady_state_support(w_bar, b_bar, a, domain)?;
        if masses.len() != support.len() {
            return Err(Error::Shape(format!(
                "{} masses for {} support points",
                masses.len(),
                support.len()
            )));
        }
        let total: f64 = masses.iter().sum();
        if masses.iter().any(|&r| !(0.0..=1.0).contains(&r)) || (total - 1.0).abs() > ATOM_MASS_TOL {
            return Err(Error::Unnormalized { mass: total });
        }
        let zeros = support.iter().map(|y| w_bar * y + b_bar).collect();
        Ok(Self {
            w_bar,
            b_bar,
            zeros,
            support,
            masses,
        })
    }

    pub fn measure(&self) -> Result<EmpiricalMeasure> {
        EmpiricalMeasure::new(self.support.iter().copied().zip(self.masses.iter().copied()).collect())
    }
}
