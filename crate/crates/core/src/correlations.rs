//! Pseudo-correlations `⟨∏ exp(2πi m_k ξ̃_{I_k}/√d)⟩` in factored form,
//! `phase · C1 · C2 · C3`.
//!
//! C1 comes from the spread of the initial wavefunction, C2 from the
//! measurement imprecision, and C3 is the backaction: the expectation of a
//! phase picked up by a random walk in energy space each time the walk sits
//! on one of the `|S|` ring sites where the shifted energy label `p − S`
//! leaves the band (`S` being the running suffix sum of the `m_k`).

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::clock::{half_width, label, wrap_label, ClockParams};
use crate::error::{Error, Result};
use crate::measurement::{canonical_queries, check_queries, MeasurementParams};
use crate::numerics::ComplexEstimate;
use crate::rng::StreamKey;
use crate::theta::{theta3, theta3_real, ThetaEvalConfig};

/// Below this size circular convolutions are summed directly.
pub const DIRECT_CONVOLUTION_MAX: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationQuery {
    pub clock: ClockParams,
    pub meas: MeasurementParams,
    /// `δ_j` in grid units, one per measurement.
    pub deltas: Vec<f64>,
    /// `(m_k, I_k)` with `I_k` counted from 1.
    pub queries: Vec<(i64, usize)>,
}

impl CorrelationQuery {
    /// Single query `(m, n)` after `n` measurements at constant spacing `delta`.
    pub fn single(clock: ClockParams, meas: MeasurementParams, delta: f64, m: i64, n: usize) -> Self {
        Self { clock, meas, deltas: vec![delta; n], queries: vec![(m, n)] }
    }

    /// Validated, canonical form of the queries.
    pub fn canonical(&self) -> Result<Vec<(i64, usize)>> {
        self.clock.validate()?;
        self.meas.validate()?;
        let q = canonical_queries(&self.queries);
        check_queries(&q, self.deltas.len(), self.clock.d)?;
        Ok(q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorBreakdown {
    pub phase: Complex64,
    pub c1: f64,
    pub c2: f64,
    pub c3: Complex64,
    pub product: Complex64,
}

impl FactorBreakdown {
    fn assemble(phase: Complex64, c1: f64, c2: f64, c3: Complex64) -> Self {
        Self { phase, c1, c2, c3, product: phase * c1 * c2 * c3 }
    }
}

/// Jump distribution of the energy walk, indexed by jump label `q ∈ −h..=h`.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkKernel {
    pub step_probs: Vec<f64>,
    pub shift_m: i64,
    cdf: Vec<f64>,
}

impl WalkKernel {
    pub fn new(d: usize, sigma_m_sq: f64, shift_m: i64, cfg: &ThetaEvalConfig) -> Result<Self> {
        let step_probs = step_distribution(d, sigma_m_sq, shift_m, cfg)?;
        let cdf = cumulative(&step_probs);
        Ok(Self { step_probs, shift_m, cdf })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        let d = self.step_probs.len();
        label(draw(&self.cdf, rng.random::<f64>()), d)
    }

    pub fn mean(&self) -> f64 {
        let d = self.step_probs.len();
        self.step_probs.iter().enumerate().map(|(s, p)| p * label(s, d) as f64).sum()
    }
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut c: Vec<f64> = p
        .iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect();
    let total = acc;
    c.iter_mut().for_each(|x| *x /= total);
    c
}

fn draw(cdf: &[f64], u: f64) -> usize {
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

/// `q ↦ θ3(q/d + m/2d, i/(2σ²d)) / (√(2σ²d) e^{−πσ²m²/2d} θ3(iσ²m/d, 2iσ²/d))`.
pub fn step_distribution(d: usize, sigma_m_sq: f64, shift_m: i64, cfg: &ThetaEvalConfig) -> Result<Vec<f64>> {
    crate::clock::check_odd(d)?;
    if !(sigma_m_sq > 0.0 && sigma_m_sq.is_finite()) {
        return Err(Error::InvalidParam(format!("sigma_m_sq must be positive, got {sigma_m_sq}")));
    }
    let df = d as f64;
    let m = shift_m as f64;
    let tau_kraus = 2.0 * sigma_m_sq / df;
    let shifted = theta3(Complex64::new(0.0, sigma_m_sq * m / df), tau_kraus, cfg)?.re;
    let denom = (2.0 * sigma_m_sq * df).sqrt() * (-PI * sigma_m_sq * m * m / (2.0 * df)).exp() * shifted;
    let tau = 1.0 / (2.0 * sigma_m_sq * df);
    let probs = (0..d)
        .map(|s| Ok(theta3_real(label(s, d) as f64 / df + m / (2.0 * df), tau, cfg)? / denom))
        .collect::<Result<Vec<f64>>>()?;
    let drift = (probs.iter().sum::<f64>() - 1.0).abs();
    if drift > 1e-8 {
        return Err(Error::NormalizationDrift { what: "step distribution", drift });
    }
    Ok(probs)
}

/// `θ3(M/2d, i/(2ξ²d)) θ3(M/2, id/(2ξ²)) + θ3(1/2 − M/2d, ·) θ3(1/2 + M/2, ·)`.
fn overlap_bracket(clock: &ClockParams, msum: i64, cfg: &ThetaEvalConfig) -> Result<f64> {
    let d = clock.d as f64;
    let m = msum as f64;
    let a = 1.0 / (2.0 * clock.width_sq * d);
    let b = d / (2.0 * clock.width_sq);
    Ok(theta3_real(m / (2.0 * d), a, cfg)? * theta3_real(m / 2.0, b, cfg)?
        + theta3_real(0.5 - m / (2.0 * d), a, cfg)? * theta3_real(0.5 + m / 2.0, b, cfg)?)
}

/// Starting distribution of the energy walk for total weight `msum`.
pub fn initial_distribution(clock: &ClockParams, msum: i64, cfg: &ThetaEvalConfig) -> Result<Vec<f64>> {
    clock.validate()?;
    let d = clock.d;
    if msum.unsigned_abs() as usize >= d {
        return Err(Error::InvalidQuery(format!("|msum| = {} must stay below d = {d}", msum.abs())));
    }
    let df = d as f64;
    let tau = 1.0 / (clock.width_sq * df);
    let norm = df / 2.0 * overlap_bracket(clock, msum, cfg)?;
    if !(norm > 0.0) {
        return Err(Error::NormalizationDrift { what: "initial distribution", drift: norm });
    }
    let n0 = clock.n0 as f64;
    let dist = (0..d)
        .map(|s| {
            let p = label(s, d) as f64;
            Ok(theta3_real((p - n0 - msum as f64) / df, tau, cfg)? * theta3_real((p - n0) / df, tau, cfg)? / norm)
        })
        .collect::<Result<Vec<f64>>>()?;
    let drift = (dist.iter().sum::<f64>() - 1.0).abs();
    if drift > 1e-8 {
        return Err(Error::NormalizationDrift { what: "initial distribution", drift });
    }
    Ok(dist)
}

/// Wavefunction factor: overlap of the energy amplitudes with their shift by `msum`.
pub fn c1_factor(clock: &ClockParams, msum: i64, cfg: &ThetaEvalConfig) -> Result<f64> {
    Ok(overlap_bracket(clock, msum, cfg)? / overlap_bracket(clock, 0, cfg)?)
}

/// Imprecision factor `∏ θ3(iσ²m/d, 2iσ²/d)/θ3(0, 2iσ²/d) · e^{−πσ²m²/d}`.
pub fn c2_factor(d: usize, sigma_m_sq: f64, ms: &[i64], cfg: &ThetaEvalConfig) -> Result<f64> {
    let df = d as f64;
    let tau = 2.0 * sigma_m_sq / df;
    let norm = theta3_real(0.0, tau, cfg)?;
    ms.iter().try_fold(1.0, |acc, &m| {
        let mf = m as f64;
        let shifted = theta3(Complex64::new(0.0, sigma_m_sq * mf / df), tau, cfg)?.re;
        Ok(acc * shifted / norm * (-PI * sigma_m_sq * mf * mf / df).exp())
    })
}

/// `exp((2πi/d) Σ_k m_k Σ_{j≤I_k} δ_j)`.
pub fn drift_phase(d: usize, deltas: &[f64], queries: &[(i64, usize)]) -> Complex64 {
    let mut elapsed = 0.0;
    let mut next = 0;
    let mut arg = 0.0;
    for &(m, i) in queries {
        while next < i {
            elapsed += deltas[next];
            next += 1;
        }
        // Reduce before accumulating to keep the phase accurate for long chains.
        arg += (m as f64 * elapsed / d as f64).rem_euclid(1.0);
    }
    Complex64::from_polar(1.0, 2.0 * PI * arg)
}

/// Per-step schedule of the walk: suffix sums, kernel shifts, damping phases.
struct WalkPlan {
    d: usize,
    /// `(S_j, shift at step j, δ_j)` for `j = 1..=I_n`.
    steps: Vec<(i64, i64, f64)>,
}

impl WalkPlan {
    fn new(d: usize, deltas: &[f64], queries: &[(i64, usize)]) -> Self {
        let mut steps = Vec::new();
        let mut prev = 0;
        for (k, &(_, i)) in queries.iter().enumerate() {
            let suffix: i64 = queries[k..].iter().map(|q| q.0).sum();
            for j in prev + 1..=i {
                let shift = if j == i { queries[k].0 } else { 0 };
                steps.push((suffix, shift, deltas[j - 1]));
            }
            prev = i;
        }
        Self { d, steps }
    }

    /// Multiplier at energy label `p` before step `j`.
    #[inline]
    fn damping(&self, p: i64, suffix: i64, delta: f64) -> Option<Complex64> {
        if suffix == 0 || (p - suffix).abs() <= half_width(self.d) {
            return None;
        }
        let frac = delta - delta.round();
        if frac == 0.0 {
            return None;
        }
        Some(Complex64::from_polar(1.0, -2.0 * PI * frac * suffix.signum() as f64))
    }

    fn shifts(&self) -> Vec<i64> {
        let mut s: Vec<i64> = self.steps.iter().map(|x| x.1).collect();
        s.sort_unstable();
        s.dedup();
        s
    }
}

/// Forward plan, inverse plan and the kernel's spectrum.
type FftPlan = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>, Vec<Complex64>);

/// Circular convolution on `Z_d` with a fixed real kernel.
struct Convolver {
    d: usize,
    kernel: Vec<f64>,
    fast: Option<FftPlan>,
}

impl Convolver {
    /// `kernel` is indexed by jump label slot (`q + h`).
    fn new(kernel: &[f64], force_fast: Option<bool>) -> Self {
        let d = kernel.len();
        // Re-index by q mod d so the convolution needs no offset.
        let by_residue: Vec<f64> = (0..d).map(|r| kernel[(wrap_label(r as i64, d) + half_width(d)) as usize]).collect();
        let use_fast = force_fast.unwrap_or(d > DIRECT_CONVOLUTION_MAX);
        let fast = use_fast.then(|| {
            let mut planner = FftPlanner::new();
            let fwd = planner.plan_fft_forward(d);
            let inv = planner.plan_fft_inverse(d);
            let mut spec: Vec<Complex64> = by_residue.iter().map(|&x| Complex64::new(x, 0.0)).collect();
            fwd.process(&mut spec);
            (fwd, inv, spec)
        });
        Self { d, kernel: by_residue, fast }
    }

    fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let d = self.d;
        match &self.fast {
            None => {
                let mut out = vec![Complex64::new(0.0, 0.0); d];
                for (a, x) in v.iter().enumerate() {
                    if *x == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    for (q, w) in self.kernel.iter().enumerate() {
                        let t = if a + q >= d { a + q - d } else { a + q };
                        out[t] += x * w;
                    }
                }
                out
            }
            Some((fwd, inv, spec)) => {
                let mut buf = v.to_vec();
                fwd.process(&mut buf);
                buf.iter_mut().zip(spec).for_each(|(x, k)| *x *= k);
                inv.process(&mut buf);
                let scale = 1.0 / d as f64;
                buf.iter_mut().for_each(|x| *x *= scale);
                buf
            }
        }
    }
}

/// Exact C3 by forward propagation of the weighted walk distribution.
pub fn c3_transfer_matrix(query: &CorrelationQuery, cfg: &ThetaEvalConfig) -> Result<Complex64> {
    c3_transfer_matrix_with(query, cfg, None)
}

/// As [`c3_transfer_matrix`], optionally forcing the direct (`Some(false)`)
/// or FFT (`Some(true)`) convolution path.
pub fn c3_transfer_matrix_with(
    query: &CorrelationQuery,
    cfg: &ThetaEvalConfig,
    force_fast: Option<bool>,
) -> Result<Complex64> {
    let queries = query.canonical()?;
    if queries.is_empty() {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let d = query.clock.d;
    let msum: i64 = queries.iter().map(|q| q.0).sum();
    let plan = WalkPlan::new(d, &query.deltas, &queries);
    let convolvers = plan
        .shifts()
        .into_iter()
        .map(|m| Ok((m, Convolver::new(&step_distribution(d, query.meas.sigma_m_sq, m, cfg)?, force_fast))))
        .collect::<Result<Vec<_>>>()?;
    let mut v: Vec<Complex64> =
        initial_distribution(&query.clock, msum, cfg)?.into_iter().map(|x| Complex64::new(x, 0.0)).collect();
    for &(suffix, shift, delta) in &plan.steps {
        for (s, x) in v.iter_mut().enumerate() {
            if let Some(w) = plan.damping(label(s, d), suffix, delta) {
                *x *= w;
            }
        }
        let conv = &convolvers.iter().find(|c| c.0 == shift).expect("kernel for every shift").1;
        v = conv.apply(&v);
    }
    Ok(v.iter().sum())
}

/// Monte-Carlo C3: walks sampled from the initial and jump distributions,
/// each sample on its own counter-based stream.
pub fn c3_monte_carlo(
    query: &CorrelationQuery,
    samples: usize,
    key: StreamKey,
    cfg: &ThetaEvalConfig,
) -> Result<ComplexEstimate> {
    if samples == 0 {
        return Err(Error::InvalidParam("at least one sample is needed".into()));
    }
    let queries = query.canonical()?;
    if queries.is_empty() {
        return Ok(ComplexEstimate::from_samples(&vec![Complex64::new(1.0, 0.0); samples]));
    }
    let d = query.clock.d;
    let msum: i64 = queries.iter().map(|q| q.0).sum();
    let plan = WalkPlan::new(d, &query.deltas, &queries);
    let kernels = plan
        .shifts()
        .into_iter()
        .map(|m| Ok((m, WalkKernel::new(d, query.meas.sigma_m_sq, m, cfg)?)))
        .collect::<Result<Vec<_>>>()?;
    let step_kernels: Vec<&WalkKernel> =
        plan.steps.iter().map(|st| &kernels.iter().find(|k| k.0 == st.1).expect("kernel for every shift").1).collect();
    let init = cumulative(&initial_distribution(&query.clock, msum, cfg)?);

    let weights: Vec<Complex64> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = key.with_sample(i).rng();
            let mut p = label(draw(&init, rng.random::<f64>()), d);
            let mut w = Complex64::new(1.0, 0.0);
            for (&(suffix, _, delta), kernel) in plan.steps.iter().zip(&step_kernels) {
                if let Some(f) = plan.damping(p, suffix, delta) {
                    w *= f;
                }
                p = wrap_label(p + kernel.sample(&mut rng), d);
            }
            w
        })
        .collect();
    Ok(ComplexEstimate::from_samples(&weights))
}

/// phase, C1 and C2 for a query, with a caller-supplied C3.
pub fn factors_with_c3(query: &CorrelationQuery, c3: Complex64, cfg: &ThetaEvalConfig) -> Result<FactorBreakdown> {
    let queries = query.canonical()?;
    let d = query.clock.d;
    let msum: i64 = queries.iter().map(|q| q.0).sum();
    let ms: Vec<i64> = queries.iter().map(|q| q.0).collect();
    Ok(FactorBreakdown::assemble(
        drift_phase(d, &query.deltas, &queries),
        c1_factor(&query.clock, msum, cfg)?,
        c2_factor(d, query.meas.sigma_m_sq, &ms, cfg)?,
        c3,
    ))
}

/// Full factorisation with C3 from the transfer matrix.
pub fn factors_exact(query: &CorrelationQuery, cfg: &ThetaEvalConfig) -> Result<FactorBreakdown> {
    let c3 = c3_transfer_matrix(query, cfg)?;
    factors_with_c3(query, c3, cfg)
}

/// `e^{−π c r² d^{α−1}/2}`, the large-`d` form of C1 for `ξ² = c d^α`.
pub fn asymptotic_c1(d: f64, alpha: f64, c_const: f64, r: i64) -> f64 {
    (-PI * c_const * (r * r) as f64 * d.powf(alpha - 1.0) / 2.0).exp()
}

/// `e^{−π c (Σm²) d^{β−1}/2}`, the large-`d` form of C2 for `σ_m² = c d^β`, `β < 1`.
pub fn asymptotic_c2(d: f64, beta: f64, c_const: f64, ms: &[i64]) -> f64 {
    let m2: i64 = ms.iter().map(|m| m * m).sum();
    (-PI * c_const * m2 as f64 * d.powf(beta - 1.0) / 2.0).exp()
}

/// `1 − t/√d`, leading bound on `|⟨e^{2πiξ̃_I/√d}⟩|` for sharp measurements.
pub fn sharp_bound(d: f64, t: f64) -> f64 {
    1.0 - t / d.sqrt()
}
