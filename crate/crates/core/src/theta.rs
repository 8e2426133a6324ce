//! Jacobi θ3 with a purely imaginary modular parameter.
//!
//! Everything here evaluates
//!
//! ```text
//! θ3(z, iτ) = Σ_m exp(−πτm² + 2πimz),   τ > 0
//! ```
//!
//! For `τ < 1` the series is slow, so the value goes through the modular
//! transformation `θ3(z, iτ) = τ^{-1/2} e^{−πz²/τ} θ3(−iz/τ, i/τ)` and the
//! series that is actually summed always has parameter ≥ 1. The summation
//! window is centred on the dominant index, which keeps complex arguments with
//! a large imaginary part from overflowing half-way through the sum.

use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ThetaError {
    #[error("invalid theta parameter: {0}")]
    InvalidParam(String),
    #[error("theta series needs {needed} terms, cap is {cap}")]
    NonConvergent { needed: usize, cap: usize },
}

/// Tolerance and term cap for the series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaEvalConfig {
    pub rel_tol: f64,
    pub max_terms: usize,
}

impl Default for ThetaEvalConfig {
    fn default() -> Self {
        Self { rel_tol: 1e-12, max_terms: 1_000_000 }
    }
}

impl ThetaEvalConfig {
    pub fn validate(&self) -> Result<(), ThetaError> {
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(ThetaError::InvalidParam(format!("rel_tol must lie in (0, 1), got {}", self.rel_tol)));
        }
        if self.max_terms < 3 {
            return Err(ThetaError::InvalidParam("max_terms must be at least 3".into()));
        }
        Ok(())
    }

    /// Half-width of the summation window for a series with parameter `tau_eff`.
    fn half_width(&self, tau_eff: f64) -> Result<usize, ThetaError> {
        let m = ((1.0 / self.rel_tol).ln() / (PI * tau_eff)).sqrt().ceil() as usize + 2;
        let needed = 2 * m + 1;
        if needed > self.max_terms {
            return Err(ThetaError::NonConvergent { needed, cap: self.max_terms });
        }
        Ok(m)
    }
}

/// Validated modular parameter `τ` of `θ3(·, iτ)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ThetaParam {
    tau: f64,
}

impl ThetaParam {
    pub fn new(tau: f64) -> Result<Self, ThetaError> {
        check_tau(tau)?;
        Ok(Self { tau })
    }

    pub fn tau(self) -> f64 {
        self.tau
    }
}

fn check_tau(tau: f64) -> Result<(), ThetaError> {
    if tau.is_finite() && tau > 0.0 {
        Ok(())
    } else {
        Err(ThetaError::InvalidParam(format!("tau must be positive and finite, got {tau}")))
    }
}

/// Representative of `x` modulo 1 in `[-1/2, 1/2]`.
#[inline]
pub(crate) fn reduce_unit(x: f64) -> f64 {
    x - x.round()
}

/// `exp(log_pref) · Σ_m exp(−πτm² + 2πimz)` with `τ ≥ 1` and `Re z` already
/// reduced. The quadratic in the exponent is completed around the real
/// maximiser `m* = −Im z/τ` before exponentiating.
fn centred_series(z: Complex64, tau: f64, log_pref: Complex64, cfg: &ThetaEvalConfig) -> Result<Complex64, ThetaError> {
    let half = cfg.half_width(tau)? as i64;
    let m_star = -z.im / tau;
    let m0 = m_star.round() as i64;
    let peak = log_pref.re + PI * z.im * z.im / tau;
    let term = |m: i64| {
        let dm = m as f64 - m_star;
        let re = peak - PI * tau * dm * dm;
        // m·x is reduced again so the phase stays accurate for large m.
        let phase = 2.0 * PI * reduce_unit(m as f64 * z.re) + log_pref.im;
        Complex64::from_polar(re.exp(), phase)
    };
    // Smallest terms first.
    let mut sum = Complex64::new(0.0, 0.0);
    for k in (1..=half).rev() {
        sum += term(m0 - k) + term(m0 + k);
    }
    Ok(sum + term(m0))
}

/// `θ3(z, iτ)`.
pub fn theta3(z: Complex64, tau: f64, cfg: &ThetaEvalConfig) -> Result<Complex64, ThetaError> {
    check_tau(tau)?;
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(ThetaError::InvalidParam(format!("non-finite argument {z}")));
    }
    let z = Complex64::new(reduce_unit(z.re), z.im);
    if tau >= 1.0 {
        return centred_series(z, tau, Complex64::new(0.0, 0.0), cfg);
    }
    let log_pref = Complex64::new(-0.5 * tau.ln(), 0.0) - PI * z * z / tau;
    let w = Complex64::new(reduce_unit(z.im / tau), -z.re / tau);
    centred_series(w, 1.0 / tau, log_pref, cfg)
}

/// `θ3(x, iτ)` for real `x`; real arithmetic only, used in the hot loops.
pub fn theta3_real(x: f64, tau: f64, cfg: &ThetaEvalConfig) -> Result<f64, ThetaError> {
    check_tau(tau)?;
    if !x.is_finite() {
        return Err(ThetaError::InvalidParam(format!("non-finite argument {x}")));
    }
    let x = reduce_unit(x);
    if tau >= 1.0 {
        let half = cfg.half_width(tau)?;
        let mut sum = 0.0;
        for m in (1..=half).rev() {
            let m = m as f64;
            sum += (-PI * tau * m * m).exp() * (2.0 * PI * m * x).cos();
        }
        Ok(1.0 + 2.0 * sum)
    } else {
        let half = cfg.half_width(1.0 / tau)? as i64;
        let image = |n: i64| {
            let u = x + n as f64;
            (-PI * u * u / tau).exp()
        };
        let mut sum = 0.0;
        for k in (1..=half).rev() {
            sum += image(-k) + image(k);
        }
        Ok((sum + image(0)) / tau.sqrt())
    }
}

/// `θ3(z, iτ) / θ3(0, iτ)`.
pub fn theta3_normalized(z: Complex64, tau: f64, cfg: &ThetaEvalConfig) -> Result<Complex64, ThetaError> {
    Ok(theta3(z, tau, cfg)? / theta3_real(0.0, tau, cfg)?)
}

/// Right-hand side of the θ3 multiplication formula,
/// `(1/(a+b)) Σ_{0≤r<a+b} θ3((aw+z+r)/(a+b), iaτ/(a+b)) θ3((z−bw+r)/(a+b), ibτ/(a+b))`,
/// which equals `θ3(z, iabτ) θ3(w, iτ)`.
pub fn theta3_multiplication_rhs(
    a: u32,
    b: u32,
    z: Complex64,
    w: Complex64,
    tau: f64,
    cfg: &ThetaEvalConfig,
) -> Result<Complex64, ThetaError> {
    if a == 0 || b == 0 {
        return Err(ThetaError::InvalidParam("a and b must be positive".into()));
    }
    check_tau(tau)?;
    let (af, bf) = (a as f64, b as f64);
    let s = af + bf;
    let mut sum = Complex64::new(0.0, 0.0);
    for r in 0..(a + b) {
        let r = r as f64;
        let left = theta3((af * w + z + r) / s, af * tau / s, cfg)?;
        let right = theta3((z - bf * w + r) / s, bf * tau / s, cfg)?;
        sum += left * right;
    }
    Ok(sum / s)
}
