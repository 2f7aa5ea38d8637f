//! Mean-field residual networks: particle dynamics, a finite-volume transport
//! solver, adjoint-based training of time-dependent controls, and the
//! measure utilities used to compare them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod activation;
pub mod config;
pub mod control;
pub mod error;
pub mod fvm;
pub mod grid;
pub mod io;
pub mod measures;
pub mod optim;
pub mod particle;
pub mod scenarios;

pub use activation::{activation_eval, Activation};
pub use config::RunConfig;
pub use control::{control_eval, ControlPath, ControlSpec, Controls, TimeFn};
pub use error::{Error, Result};
pub use fvm::{Boundary, DensityField, DriftSpec, FvmOptions, Trajectory};
pub use grid::{Grid1D, TimeGrid};
pub use particle::{OdeMethod, ParticleEnsemble, ResNetConfig};
