//! Reproducible experiment definitions: the three training tests, the
//! particle-vs-PDE convergence study, and the two controllability checks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::config::RunConfig;
use crate::control::{ControlPath, ControlSpec, TimeFn};
use crate::error::{Error, Result};
use crate::fvm::{project_initial, solve_transport, DensityField, DriftSpec, FvmOptions};
use crate::grid::Grid1D;
use crate::measures::{particles_to_density, sample_density, wasserstein1};
use crate::optim::{ControlProblem, TargetMeasure};
use crate::particle::{ode_integrate, OdeMethod, ParticleEnsemble};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioName {
    Test1,
    Test2,
    Test3,
    Convergence,
    ShiftControl,
    ScaleControl,
}

/// Initial or target density, up to normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensitySpec {
    /// Uniform on `[lo, hi]`.
    Indicator { lo: f64, hi: f64 },
    Gaussian { mean: f64, std: f64 },
    /// `x^{a1-1} (1-x)^{a2-1}` on `[0, 1]`.
    Beta { a1: f64, a2: f64 },
}

impl DensitySpec {
    /// Unnormalized profile; fields built from it are normalized after projection.
    pub fn profile(&self, x: f64) -> f64 {
        match *self {
            DensitySpec::Indicator { lo, hi } => {
                if (lo..=hi).contains(&x) {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            DensitySpec::Gaussian { mean, std } => {
                let z = (x - mean) / std;
                (-0.5 * z * z).exp() / (std * (2.0 * std::f64::consts::PI).sqrt())
            }
            DensitySpec::Beta { a1, a2 } => {
                if (0.0..=1.0).contains(&x) {
                    x.powf(a1 - 1.0) * (1.0 - x).powf(a2 - 1.0)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            DensitySpec::Indicator { lo, hi } => 0.5 * (lo + hi),
            DensitySpec::Gaussian { mean, .. } => mean,
            DensitySpec::Beta { a1, a2 } => a1 / (a1 + a2),
        }
    }

    /// Interval holding the mass (eight standard deviations for Gaussians).
    pub fn support(&self) -> (f64, f64) {
        match *self {
            DensitySpec::Indicator { lo, hi } => (lo, hi),
            DensitySpec::Gaussian { mean, std } => (mean - 8.0 * std, mean + 8.0 * std),
            DensitySpec::Beta { .. } => (0.0, 1.0),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            DensitySpec::Indicator { lo, hi } => lo < hi,
            DensitySpec::Gaussian { std, .. } => std > 0.0,
            DensitySpec::Beta { a1, a2 } => a1 >= 1.0 && a2 >= 1.0,
        };
        if !ok {
            return Err(Error::InvalidConfig {
                field: "f0",
                reason: format!("degenerate density {self:?}"),
            });
        }
        Ok(())
    }

    pub fn project(&self, grid: &Grid1D) -> Result<DensityField> {
        project_initial(|x| self.profile(x), grid)
    }
}

/// How the target `g` is obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetSpec {
    /// `g(x) = f_0(x - β)`.
    Translate { beta: f64 },
    /// `g(x) = f_0(x e^α + (1 - e^α) μ) e^α` with `μ` the mean of `f_0`.
    Scale { alpha: f64 },
    /// Terminal state of a forward solve under `exact_controls`.
    Manufactured,
    Density(DensitySpec),
}

/// A complete, serializable experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: ScenarioName,
    pub f0: DensitySpec,
    pub g: TargetSpec,
    pub activation: Activation,
    #[serde(default)]
    pub exact_controls: Option<ControlSpec>,
    pub initial_guess: ControlSpec,
    pub config: RunConfig,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub particle_counts: Vec<usize>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| Error::InvalidConfig {
            field: "scenario",
            reason: format!("line {} column {}: {e}", e.line(), e.column()),
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        self.f0.validate()?;
        let [a, b] = self.config.domain;
        let inside = |(lo, hi): (f64, f64)| lo >= a && hi <= b;
        if !inside(self.f0.support()) {
            return Err(Error::InvalidConfig {
                field: "f0",
                reason: format!("support {:?} leaves the domain [{a}, {b}]", self.f0.support()),
            });
        }
        match &self.g {
            TargetSpec::Density(d) => {
                d.validate()?;
                if !inside(d.support()) {
                    return Err(Error::InvalidConfig {
                        field: "g",
                        reason: format!("support {:?} leaves the domain [{a}, {b}]", d.support()),
                    });
                }
            }
            TargetSpec::Translate { beta } => {
                let (lo, hi) = self.f0.support();
                if !inside((lo + beta, hi + beta)) {
                    return Err(Error::InvalidConfig {
                        field: "g",
                        reason: format!("translate by {beta} leaves the domain [{a}, {b}]"),
                    });
                }
            }
            TargetSpec::Scale { .. } => {}
            TargetSpec::Manufactured => {
                if self.exact_controls.is_none() {
                    return Err(Error::InvalidConfig {
                        field: "exact_controls",
                        reason: "a manufactured target needs exact controls".into(),
                    });
                }
            }
        }
        if self.name == ScenarioName::Convergence {
            if self.seeds.is_empty() {
                return Err(Error::InvalidConfig {
                    field: "seeds",
                    reason: "the convergence study needs at least one seed".into(),
                });
            }
            if self.particle_counts.len() < 2 || self.particle_counts.windows(2).any(|p| p[0] >= p[1]) {
                return Err(Error::InvalidConfig {
                    field: "particle_counts",
                    reason: "need at least two strictly increasing counts".into(),
                });
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid1D> {
        self.config.grid()
    }

    pub fn initial_density(&self) -> Result<DensityField> {
        self.f0.project(&self.grid()?)
    }

    pub fn exact_path(&self) -> Result<Option<ControlPath>> {
        let time = self.config.time_grid()?;
        self.exact_controls.as_ref().map(|c| c.sample(time)).transpose()
    }

    pub fn initial_controls(&self) -> Result<ControlPath> {
        self.initial_guess.sample(self.config.time_grid()?)
    }

    pub fn target_density(&self) -> Result<DensityField> {
        let grid = self.grid()?;
        match &self.g {
            TargetSpec::Translate { beta } => project_initial(|x| self.f0.profile(x - beta), &grid),
            TargetSpec::Scale { alpha } => {
                let (s, mu) = (alpha.exp(), self.f0.mean());
                project_initial(|x| self.f0.profile(x * s + (1.0 - s) * mu) * s, &grid)
            }
            TargetSpec::Density(d) => d.project(&grid),
            TargetSpec::Manufactured => {
                let exact = self.exact_path()?.ok_or(Error::InvalidConfig {
                    field: "exact_controls",
                    reason: "missing".into(),
                })?;
                let traj = solve_transport(
                    &self.initial_density()?,
                    &DriftSpec::forward(exact, self.activation),
                    &self.config.time_grid()?,
                    &FvmOptions::density(self.config.cfl),
                )?;
                traj.last().expect("nonempty").clone().normalized()
            }
        }
    }

    pub fn problem(&self) -> Result<ControlProblem> {
        let target = TargetMeasure::from_density(self.target_density()?)?;
        ControlProblem::new(self.initial_density()?, target, self.activation, self.config.clone())
    }
}

fn base_config(n_cells: usize) -> RunConfig {
    RunConfig {
        n_cells,
        ..RunConfig::default()
    }
}

/// Indicator of `[-1/2, 1/2]` translated by one.
///
/// The iteration cap is raised above the default because the bounded
/// activations need a few thousand steepest-descent steps to reach `tol`.
pub fn build_test1(activation: Activation) -> Scenario {
    Scenario {
        name: ScenarioName::Test1,
        f0: DensitySpec::Indicator { lo: -0.5, hi: 0.5 },
        g: TargetSpec::Translate { beta: 1.0 },
        activation,
        exact_controls: None,
        initial_guess: ControlSpec::zero(),
        config: RunConfig {
            max_iterations: 10_000,
            ..base_config(200)
        },
        seeds: Vec::new(),
        particle_counts: Vec::new(),
    }
}

/// Gaussian `N(1, 0.1²)` contracted about its mean by `e^{-1/4}`.
pub fn build_test2() -> Scenario {
    Scenario {
        name: ScenarioName::Test2,
        f0: DensitySpec::Gaussian { mean: 1.0, std: 0.1 },
        g: TargetSpec::Scale { alpha: 0.25 },
        activation: Activation::Identity,
        exact_controls: None,
        initial_guess: ControlSpec::zero(),
        config: RunConfig {
            max_iterations: 10_000,
            ..base_config(400)
        },
        seeds: Vec::new(),
        particle_counts: Vec::new(),
    }
}

/// Initial guess for Test 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Test3Guess {
    Zero,
    /// `w(t) = b(t) = t`.
    Linear,
}

/// Beta(2, 5) data moved by `w_e = e^t - 1`, `b_e = -5t² + t` under the sigmoid.
pub fn build_test3(guess: Test3Guess) -> Scenario {
    let initial_guess = match guess {
        Test3Guess::Zero => ControlSpec::zero(),
        Test3Guess::Linear => ControlSpec {
            w: TimeFn::Polynomial { coeffs: vec![0.0, 1.0] },
            b: TimeFn::Polynomial { coeffs: vec![0.0, 1.0] },
        },
    };
    Scenario {
        name: ScenarioName::Test3,
        f0: DensitySpec::Beta { a1: 2.0, a2: 5.0 },
        g: TargetSpec::Manufactured,
        activation: Activation::Sigmoid,
        exact_controls: Some(ControlSpec {
            w: TimeFn::ExpMinusOne { scale: 1.0 },
            b: TimeFn::Polynomial {
                coeffs: vec![0.0, 1.0, -5.0],
            },
        }),
        initial_guess,
        config: RunConfig {
            gamma_w: 1.0,
            gamma_b: 1e-4,
            max_iterations: 10_000,
            ..base_config(400)
        },
        seeds: Vec::new(),
        particle_counts: Vec::new(),
    }
}

/// Smooth fixed controls under tanh; particles sampled from a Gaussian.
pub fn build_convergence_study(particle_counts: Vec<usize>, seed: u64) -> Scenario {
    Scenario {
        name: ScenarioName::Convergence,
        f0: DensitySpec::Gaussian { mean: 0.0, std: 0.25 },
        g: TargetSpec::Manufactured,
        activation: Activation::Tanh,
        exact_controls: Some(ControlSpec {
            w: TimeFn::Polynomial { coeffs: vec![0.0, -0.5] },
            b: TimeFn::Polynomial { coeffs: vec![0.0, 0.8] },
        }),
        initial_guess: ControlSpec::zero(),
        config: base_config(400),
        seeds: (seed..seed + 5).collect(),
        particle_counts,
    }
}

/// Constant bias `b0` with `σ(b0) T = β` moving the Test 1 indicator by `β`.
pub fn build_shift_control(activation: Activation, beta: f64, t_final: f64) -> Result<Scenario> {
    let b0 = activation.preimage(beta / t_final).ok_or_else(|| {
        Error::Infeasible(format!(
            "β/T = {} is outside the range of {activation}",
            beta / t_final
        ))
    })?;
    Ok(Scenario {
        name: ScenarioName::ShiftControl,
        f0: DensitySpec::Indicator { lo: -0.5, hi: 0.5 },
        g: TargetSpec::Translate { beta },
        activation,
        exact_controls: Some(ControlSpec {
            w: TimeFn::constant(0.0),
            b: TimeFn::constant(b0),
        }),
        initial_guess: ControlSpec::zero(),
        config: RunConfig {
            t_final,
            dt: t_final / 100.0,
            ..base_config(200)
        },
        seeds: Vec::new(),
        particle_counts: Vec::new(),
    })
}

/// Identity activation with `w ≡ -α/T` and `b = -w μ`, contracting the Test 2
/// Gaussian about its mean.
pub fn build_scale_control(alpha: f64) -> Scenario {
    let (mu, t_final) = (1.0, 1.0);
    let w = -alpha / t_final;
    Scenario {
        name: ScenarioName::ScaleControl,
        f0: DensitySpec::Gaussian { mean: mu, std: 0.1 },
        g: TargetSpec::Scale { alpha },
        activation: Activation::Identity,
        exact_controls: Some(ControlSpec {
            w: TimeFn::constant(w),
            b: TimeFn::constant(-w * mu),
        }),
        initial_guess: ControlSpec::zero(),
        config: base_config(400),
        seeds: Vec::new(),
        particle_counts: Vec::new(),
    }
}

/// Distance between the transported density and the scenario target under
/// the scenario's exact controls.
pub fn verify_exact_controls(s: &Scenario) -> Result<ExactControlCheck> {
    let exact = s.exact_path()?.ok_or(Error::InvalidConfig {
        field: "exact_controls",
        reason: "controllability checks need exact controls".into(),
    })?;
    let g = s.target_density()?;
    let traj = solve_transport(
        &s.initial_density()?,
        &DriftSpec::forward(exact, s.activation),
        &s.config.time_grid()?,
        &FvmOptions::density(s.config.cfl),
    )?;
    let f_t = traj.last().expect("nonempty").clone();
    Ok(ExactControlCheck {
        w1: wasserstein1(&f_t, &g)?,
        f_t,
        g,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactControlCheck {
    pub w1: f64,
    pub f_t: DensityField,
    pub g: DensityField,
}

/// `W1(f_T, f_0(· - β))` with the constant bias solving `σ(b0) T = β`.
pub fn verify_controllability_shift(beta: f64, activation: Activation, t_final: f64) -> Result<f64> {
    Ok(verify_exact_controls(&build_shift_control(activation, beta, t_final)?)?.w1)
}

/// Terminal states of the constant bias `b ≡ 1` and of `b(t) = t² + 1` over a
/// horizon `T` with `T³/3 + T = 1`, so that both integrate to a unit shift.
pub fn shift_nonuniqueness() -> Result<(DensityField, DensityField)> {
    // T³/3 + T - 1 = 0 has a single real root; Newton from 1 converges fast.
    let mut t = 1.0_f64;
    for _ in 0..50 {
        t -= (t * t * t / 3.0 + t - 1.0) / (t * t + 1.0);
    }
    let constant = build_shift_control(Activation::Identity, 1.0, 1.0)?;
    let mut varying = build_shift_control(Activation::Identity, 1.0, t)?;
    varying.exact_controls = Some(ControlSpec {
        w: TimeFn::constant(0.0),
        b: TimeFn::Polynomial {
            coeffs: vec![1.0, 0.0, 1.0],
        },
    });
    Ok((verify_exact_controls(&constant)?.f_t, verify_exact_controls(&varying)?.f_t))
}

/// Averaged `W1(particle histogram at T, PDE f_T)` per particle count.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub particle_counts: Vec<usize>,
    pub seeds: Vec<u64>,
    /// `w1[i][s]` for count `i` and seed `s`.
    pub w1: Vec<Vec<f64>>,
    pub mean_w1: Vec<f64>,
    /// Least-squares slope of `log W1` against `log M`.
    pub slope: f64,
    pub outside: usize,
}

/// Runs the particle-vs-PDE comparison of a convergence scenario.
pub fn run_convergence_study(s: &Scenario) -> Result<ConvergenceReport> {
    s.validate()?;
    let grid = s.grid()?;
    let time = s.config.time_grid()?;
    let exact = s.exact_path()?.ok_or(Error::InvalidConfig {
        field: "exact_controls",
        reason: "the convergence study needs fixed controls".into(),
    })?;
    let f0 = s.initial_density()?;
    let pde = solve_transport(
        &f0,
        &DriftSpec::forward(exact.clone(), s.activation),
        &time,
        &FvmOptions::density(s.config.cfl),
    )?;
    let f_t = pde.last().expect("nonempty");
    let mut w1 = Vec::with_capacity(s.particle_counts.len());
    let mut outside = 0;
    for &m in &s.particle_counts {
        let mut row = Vec::with_capacity(s.seeds.len());
        for &seed in &s.seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (m as u64).rotate_left(32));
            let xs = sample_density(&f0, m, &mut rng)?;
            let ens = ParticleEnsemble::from_positions(xs)?;
            let end = ode_integrate(&ens, &exact, s.activation, &time, OdeMethod::Rk4);
            let h = particles_to_density(&end, &grid)?;
            outside += h.outside;
            row.push(wasserstein1(&h.field, f_t)?);
        }
        w1.push(row);
    }
    let mean_w1: Vec<f64> = w1.iter().map(|r| r.iter().sum::<f64>() / r.len() as f64).collect();
    let xs: Vec<f64> = s.particle_counts.iter().map(|&m| (m as f64).ln()).collect();
    let ys: Vec<f64> = mean_w1.iter().map(|v| v.ln()).collect();
    Ok(ConvergenceReport {
        particle_counts: s.particle_counts.clone(),
        seeds: s.seeds.clone(),
        w1,
        mean_w1,
        slope: fit_slope(&xs, &ys),
        outside,
    })
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
