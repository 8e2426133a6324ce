//! Simulation of a quasi-ideal clock under repeated theta-smeared time
//! measurements.
//!
//! * [`theta`]: Jacobi θ3 with imaginary modular parameter.
//! * [`clock`]: states, bases, free evolution and the commutator check.
//! * [`measurement`]: Kraus operators, measurement chains and the
//!   density-matrix oracle for pseudo-correlations.
//! * [`correlations`]: the factored `phase · C1 · C2 · C3` evaluation.
//! * [`timebasis`]: sharp measurements in the time basis.
//! * [`oscillator`]: the driven harmonic oscillator under linear measurement.
//! * [`waveform`]: estimating a white-noise drive from clock readings.
//! * [`experiments`]: sweeps, configuration, CSV output and fits.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clock;
pub mod correlations;
pub mod error;
pub mod experiments;
pub mod measurement;
pub mod numerics;
pub mod oscillator;
pub mod rng;
pub mod theta;
pub mod timebasis;
pub mod waveform;

pub use error::{Error, Result};
pub use theta::ThetaEvalConfig;
