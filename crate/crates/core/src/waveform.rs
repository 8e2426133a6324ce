//! Estimating a white-noise waveform from clock readings.
//!
//! The clock runs at rate `1 + x(t)`, so between readings spaced `s` grid
//! units apart it advances by `δ_j = s + X_j` with `X_j = √d ∫ x dt` over the
//! interval. For white noise of intensity `σ²` these are i.i.d.
//! `N(0, σ² √d s)`. The estimate of `X_j` is the unwrapped increment of the
//! readings in grid units minus the known spacing.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clock::{self, Basis, ClockParams, StateVector};
use crate::error::{Error, Result};
use crate::measurement::{unwrap_increment, KrausSampler, MeasurementParams};
use crate::numerics::{ComplexEstimate, KahanSum};
use crate::rng::StreamKey;
use crate::theta::ThetaEvalConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveformExperimentConfig {
    pub noise_sigma: f64,
    /// Readings are `d^{−γ}` apart in physical time, `d^{1/2−γ}` grid units.
    pub gamma: f64,
    pub clock: ClockParams,
    pub meas: MeasurementParams,
    pub n_measurements: usize,
    pub seed: u64,
}

impl WaveformExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::InvalidParam(format!("noise_sigma must be non-negative, got {}", self.noise_sigma)));
        }
        if !(0.0..=0.5).contains(&self.gamma) {
            return Err(Error::InvalidParam(format!("gamma must lie in [0, 1/2], got {}", self.gamma)));
        }
        if self.n_measurements < 2 {
            return Err(Error::InvalidParam("at least two readings are needed for one increment".into()));
        }
        self.clock.validate()?;
        self.meas.validate()
    }

    /// Reading spacing in grid units.
    pub fn spacing(&self) -> f64 {
        (self.clock.d as f64).powf(0.5 - self.gamma)
    }

    /// Standard deviation of each `X_j`.
    pub fn signal_scale(&self) -> f64 {
        self.noise_sigma * ((self.clock.d as f64).sqrt() * self.spacing()).sqrt()
    }
}

/// `1 − e^{−2πσ²}`, the averaged per-visit damping for jittered integer spacings.
pub fn effective_damping_constant(noise_sigma: f64) -> f64 {
    1.0 - (-2.0 * PI * noise_sigma * noise_sigma).exp()
}

/// Monte-Carlo average of `1 − e^{−2πiδ}` with `δ = 1 + N(0, σ²)`.
pub fn damping_average_mc(noise_sigma: f64, draws: usize, key: StreamKey) -> Result<ComplexEstimate> {
    let normal = Normal::new(0.0, noise_sigma).map_err(|e| Error::InvalidParam(e.to_string()))?;
    let mut rng = key.rng();
    let samples: Vec<Complex64> = (0..draws)
        .map(|_| {
            let delta = 1.0 + normal.sample(&mut rng);
            Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, -2.0 * PI * delta)
        })
        .collect();
    Ok(ComplexEstimate::from_samples(&samples))
}

/// `d^{(3/2)γ − 1/2}`.
pub fn detectability_threshold(d: f64, gamma: f64) -> f64 {
    d.powf(1.5 * gamma - 0.5)
}

/// True `X_j` and estimates `X̂_j` for `j = 2..=n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformTrial {
    pub truth: Vec<f64>,
    pub estimates: Vec<f64>,
}

impl WaveformTrial {
    pub fn errors(&self) -> impl Iterator<Item = f64> + '_ {
        self.estimates.iter().zip(&self.truth).map(|(e, t)| e - t)
    }
}

/// Precomputed state and sampler for repeated trials.
#[derive(Clone)]
pub struct WaveformExperiment {
    cfg: WaveformExperimentConfig,
    state: StateVector,
    sampler: KrausSampler,
}

impl WaveformExperiment {
    pub fn new(cfg: WaveformExperimentConfig, theta_cfg: &ThetaEvalConfig) -> Result<Self> {
        cfg.validate()?;
        let sampler = KrausSampler::new(cfg.clock.d, &cfg.meas, theta_cfg)?;
        let state = clock::change_basis_with(
            &clock::build_quasi_ideal_state(&cfg.clock, theta_cfg)?,
            Basis::Time,
            sampler.dft(),
        );
        Ok(Self { cfg, state, sampler })
    }

    pub fn config(&self) -> &WaveformExperimentConfig {
        &self.cfg
    }

    /// One trial on stream `key`: the jitters are drawn first, then the readings.
    pub fn trial(&self, key: StreamKey) -> Result<WaveformTrial> {
        let cfg = &self.cfg;
        let mut rng = key.rng();
        let scale = cfg.signal_scale();
        let jitters: Vec<f64> = if scale > 0.0 {
            let normal = Normal::new(0.0, scale).map_err(|e| Error::InvalidParam(e.to_string()))?;
            (0..cfg.n_measurements).map(|_| normal.sample(&mut rng)).collect()
        } else {
            vec![0.0; cfg.n_measurements]
        };
        let spacing = cfg.spacing();
        let readings = self.readings(&jitters, spacing, &mut rng)?;
        let rd = (cfg.clock.d as f64).sqrt();
        let estimates = readings.windows(2).map(|w| rd * unwrap_increment(w[1] - w[0], rd) - spacing).collect();
        Ok(WaveformTrial { truth: jitters[1..].to_vec(), estimates })
    }

    fn readings<R: Rng + ?Sized>(&self, jitters: &[f64], spacing: f64, rng: &mut R) -> Result<Vec<f64>> {
        let mut psi = self.state.clone();
        jitters
            .iter()
            .map(|x| {
                psi = clock::evolve_with(&psi, spacing + x, self.sampler.dft());
                let (xi, post) = self.sampler.measure(&psi, rng)?;
                psi = post;
                Ok(xi)
            })
            .collect()
    }
}

pub fn run_waveform_trial(
    cfg: &WaveformExperimentConfig,
    key: StreamKey,
    theta_cfg: &ThetaEvalConfig,
) -> Result<WaveformTrial> {
    WaveformExperiment::new(*cfg, theta_cfg)?.trial(key)
}

/// Error statistics pooled over trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveformSummary {
    pub trials: usize,
    pub mean_error: f64,
    pub error_stdev: f64,
    pub signal_stdev: f64,
    pub mean_estimate: f64,
    pub mean_estimate_stderr: f64,
}

/// Runs `trials` trials, trial `i` on sample stream `i` of `key`.
pub fn run_waveform_trials(experiment: &WaveformExperiment, trials: usize, key: StreamKey) -> Result<WaveformSummary> {
    let runs =
        (0..trials as u64).into_par_iter().map(|i| experiment.trial(key.with_sample(i))).collect::<Result<Vec<_>>>()?;
    let errors: Vec<f64> = runs.iter().flat_map(|r| r.errors()).collect();
    let estimates: Vec<f64> = runs.iter().flat_map(|r| r.estimates.iter().copied()).collect();
    let truth: Vec<f64> = runs.iter().flat_map(|r| r.truth.iter().copied()).collect();
    let (mean_error, error_var) = mean_var(&errors);
    let (_, signal_var) = mean_var(&truth);
    let (mean_estimate, est_var) = mean_var(&estimates);
    Ok(WaveformSummary {
        trials,
        mean_error,
        error_stdev: error_var.sqrt(),
        signal_stdev: signal_var.sqrt(),
        mean_estimate,
        mean_estimate_stderr: (est_var / estimates.len() as f64).sqrt(),
    })
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    if x.len() < 2 {
        return (x.first().copied().unwrap_or(f64::NAN), f64::NAN);
    }
    let mean = x.iter().copied().collect::<KahanSum>().value() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).collect::<KahanSum>().value() / (n - 1.0);
    (mean, var)
}
