//! Linear measurements of a driven harmonic oscillator (`ω = m = ħ = 1`) and
//! the finite-difference force estimator
//!
//! ```text
//! x̂(t_j) = q̃_j + (q̃_{j+1} + q̃_{j−1} − 2q̃_j)/τ²
//! ```
//!
//! Position readings at different times fail to commute,
//! `[q(t'), q(t)] = i sin(t − t')`, and that is the whole backaction story.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numerics::adaptive_simpson;

/// Symmetrised `(q, p)` second moments.
pub type Cov2 = [[f64; 2]; 2];

/// Minimum-uncertainty ground state.
pub const VACUUM: Cov2 = [[0.5, 0.0], [0.0, 0.5]];

const QUAD_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearMeasurementPlan {
    pub times: Vec<f64>,
    /// Imprecision `σ_j` of each reading.
    pub sigmas: Vec<f64>,
    pub initial_cov: Cov2,
}

impl LinearMeasurementPlan {
    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.sigmas.len() {
            return Err(Error::InvalidParam("times and sigmas differ in length".into()));
        }
        if self.times.iter().any(|t| !t.is_finite()) || self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParam("times must be finite and strictly increasing".into()));
        }
        if self.sigmas.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidParam("sigmas must be positive".into()));
        }
        let c = &self.initial_cov;
        let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
        if (c[0][1] - c[1][0]).abs() > 1e-12 || det < 0.25 - 1e-12 || c[0][0] <= 0.0 {
            return Err(Error::InvalidParam(format!(
                "initial covariance must be symmetric with determinant ≥ 1/4, got {c:?}"
            )));
        }
        Ok(())
    }
}

/// `B^init_{jl}`: the initial covariance carried by free rotation to `t_j`, `t_l`.
pub fn initial_covariance(cov: &Cov2, tj: f64, tl: f64) -> f64 {
    let a = [tj.cos(), tj.sin()];
    let b = [tl.cos(), tl.sin()];
    (0..2).map(|r| (0..2).map(|s| a[r] * cov[r][s] * b[s]).sum::<f64>()).sum()
}

/// Covariance of the readings: wavefunction spread, imprecision and the
/// backaction sum `Σ_{n ≤ j,l} c_{jn} c_{ln} / (4σ_n²)`, `c_{jn} = sin(t_j − t_n)`.
pub fn covariance_matrix(plan: &LinearMeasurementPlan) -> Result<Vec<Vec<f64>>> {
    plan.validate()?;
    let n = plan.times.len();
    let t = &plan.times;
    let mut b = vec![vec![0.0; n]; n];
    for j in 0..n {
        for l in j..n {
            let mut v = initial_covariance(&plan.initial_cov, t[j], t[l]);
            if j == l {
                v += plan.sigmas[j].powi(2);
            }
            for k in 0..=j {
                v += (t[j] - t[k]).sin() * (t[l] - t[k]).sin() / (4.0 * plan.sigmas[k].powi(2));
            }
            b[j][l] = v;
            b[l][j] = v;
        }
    }
    Ok(b)
}

/// `(2cos τ − 2 + τ²)/τ²`, the weight of the free-oscillator terms in the estimator.
pub fn stencil_prefactor(tau: f64) -> f64 {
    if tau.abs() < 1e-3 {
        // Series avoids the cancellation in 2cos τ − 2 + τ².
        let t2 = tau * tau;
        t2 / 12.0 - t2 * t2 / 360.0 + t2 * t2 * t2 / 20160.0
    } else {
        (2.0 * tau.cos() - 2.0 + tau * tau) / (tau * tau)
    }
}

/// `(2/π)/τ³`, the backaction floor on the estimator variance for `τ ≤ 1`.
pub fn backaction_floor(tau: f64) -> f64 {
    2.0 / PI / tau.powi(3)
}

/// Estimator centred on reading `center` (counted from 1) of readings at
/// `t_n = (n−1)τ`.
#[derive(Clone)]
pub struct ForceEstimatorSpec<F> {
    pub tau: f64,
    pub center: usize,
    pub waveform: F,
}

impl<F: Fn(f64) -> f64> ForceEstimatorSpec<F> {
    pub fn new(tau: f64, center: usize, waveform: F) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidParam(format!("tau must be positive, got {tau}")));
        }
        if center < 2 {
            return Err(Error::InvalidParam("the stencil needs a reading before the centre".into()));
        }
        Ok(Self { tau, center, waveform })
    }

    /// Estimation time `t_j`.
    pub fn time(&self) -> f64 {
        (self.center - 1) as f64 * self.tau
    }
}

/// Centre index `⌈1/τ⌉ + 1`: readings cover about one unit of time before it.
pub fn default_center(tau: f64) -> usize {
    (1.0 / tau).ceil() as usize + 1
}

/// Per-reading backaction strength `σ_n` of the appendix parametrisation; the
/// matching Gaussian imprecision variance is `1/(4σ_n²)`.
#[derive(Debug, Clone, PartialEq)]
pub enum SigmaPlan {
    Uniform(f64),
    PerIndex(Vec<f64>),
}

impl SigmaPlan {
    fn get(&self, n: usize) -> Result<f64> {
        match self {
            SigmaPlan::Uniform(s) => Ok(*s),
            SigmaPlan::PerIndex(v) => {
                v.get(n).copied().ok_or_else(|| Error::InvalidParam(format!("no sigma for reading {}", n + 1)))
            }
        }
    }
}

/// Variance of the estimator at the spec's centre, from the covariance of
/// readings `1..=center+1`.
pub fn fd_estimator_variance<F: Fn(f64) -> f64>(
    spec: &ForceEstimatorSpec<F>,
    sigma: &SigmaPlan,
    initial_cov: &Cov2,
) -> Result<f64> {
    let n = spec.center + 1;
    let sigmas = (0..n)
        .map(|k| {
            let s = sigma.get(k)?;
            if !(s > 0.0) {
                return Err(Error::InvalidParam(format!("sigma must be positive, got {s}")));
            }
            Ok(1.0 / (2.0 * s))
        })
        .collect::<Result<Vec<_>>>()?;
    let plan = LinearMeasurementPlan {
        times: (0..n).map(|k| k as f64 * spec.tau).collect(),
        sigmas,
        initial_cov: *initial_cov,
    };
    let b = covariance_matrix(&plan)?;
    let t2 = spec.tau * spec.tau;
    let j = spec.center - 1;
    let idx = [j - 1, j, j + 1];
    let w = [1.0 / t2, (t2 - 2.0) / t2, 1.0 / t2];
    Ok((0..3).map(|a| (0..3).map(|c| w[a] * b[idx[a]][idx[c]] * w[c]).sum::<f64>()).sum())
}

/// Smallest variance over a log-spaced grid of uniform `σ²`; returns `(σ², variance)`.
pub fn min_variance_over_sigma<F: Fn(f64) -> f64>(
    spec: &ForceEstimatorSpec<F>,
    sigma_sq_grid: &[f64],
    initial_cov: &Cov2,
) -> Result<(f64, f64)> {
    let mut best = (f64::NAN, f64::INFINITY);
    for &s2 in sigma_sq_grid {
        let v = fd_estimator_variance(spec, &SigmaPlan::Uniform(s2.sqrt()), initial_cov)?;
        if v < best.1 {
            best = (s2, v);
        }
    }
    if best.1.is_finite() {
        Ok(best)
    } else {
        Err(Error::InvalidParam("empty sigma grid".into()))
    }
}

/// `∫_0^t x(t') sin(t − t') dt'`.
fn driven_q<F: Fn(f64) -> f64>(x: &F, t: f64) -> Result<f64> {
    adaptive_simpson(|s| x(s) * (t - s).sin(), 0.0, t, QUAD_TOL)
}

/// Expected estimator minus `x(t)` for a zero-mean initial state.
pub fn fd_estimator_bias<F: Fn(f64) -> f64>(spec: &ForceEstimatorSpec<F>) -> Result<f64> {
    let x = &spec.waveform;
    let (t, tau) = (spec.time(), spec.tau);
    let history = stencil_prefactor(tau) * driven_q(x, t)?;
    let local = adaptive_simpson(|u| (tau - u).sin() * (x(t + u) + x(t - u)), 0.0, tau, QUAD_TOL)? / (tau * tau);
    Ok(history + local - x(t))
}

/// Means of `q(t)` and `p(t)` from the initial means under the force `x`.
pub fn heisenberg_moments<F: Fn(f64) -> f64>(initial_mean: (f64, f64), x: F, t: f64) -> Result<(f64, f64)> {
    let (q0, p0) = initial_mean;
    let (c, s) = (t.cos(), t.sin());
    let dq = driven_q(&x, t)?;
    let dp = adaptive_simpson(|u| x(u) * (t - u).cos(), 0.0, t, QUAD_TOL)?;
    Ok((c * q0 + s * p0 + dq, c * p0 - s * q0 + dp))
}
