//! Sharp measurements: the clock read out projectively in the time basis.
//!
//! Between two readings the clock evolves freely by `δ` grid units, so the
//! reading performs a random walk on `ℤ_d` whose jump law is the Fejér kernel
//!
//! ```text
//! P(J) = sin²(π(J−δ)) / (d² sin²(π(J−δ)/d))
//! ```
//!
//! and whose characteristic function at frequency `m` (`|m| < d`) is
//! `e^{2πimδ/d} (1 − (1 − e^{−2πiδ·sign m}) |m|/d)`. Nothing here requires `d`
//! odd, so the `d = 4^p` family of the Cauchy limit is admitted; labels live in
//! `−⌊d/2⌋ ..= ⌈d/2⌉−1`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::canonical_queries;
use crate::numerics::ComplexEstimate;
use crate::rng::StreamKey;

#[inline]
fn ring_half(d: usize) -> i64 {
    (d / 2) as i64
}

/// Ring label stored at `slot`.
#[inline]
pub fn ring_label(slot: usize, d: usize) -> i64 {
    slot as i64 - ring_half(d)
}

/// Storage slot of an arbitrary integer label.
#[inline]
pub fn ring_slot(k: i64, d: usize) -> usize {
    (k + ring_half(d)).rem_euclid(d as i64) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeBasisChainParams {
    pub d: usize,
    /// Free evolution between readings, in grid units.
    pub delta: f64,
    /// Initial time label.
    pub k0: i64,
}

impl TimeBasisChainParams {
    pub fn new(d: usize, delta: f64, k0: i64) -> Result<Self> {
        let p = Self { d, delta, k0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::InvalidParam(format!("dimension must be at least 2, got {}", self.d)));
        }
        if !self.delta.is_finite() {
            return Err(Error::InvalidParam("delta must be finite".into()));
        }
        let h = ring_half(self.d);
        if self.k0 < -h || self.k0 > self.d as i64 - 1 - h {
            return Err(Error::IndexOutOfRange { index: self.k0, d: self.d });
        }
        Ok(())
    }
}

/// `sin²(πx)` with the argument reduced first, so integer `x` gives exactly 0.
#[inline]
fn sin_pi_sq(x: f64) -> f64 {
    (PI * (x - x.round())).sin().powi(2)
}

/// Jump law indexed by slot offset `J mod d`.
pub fn jump_probabilities(d: usize, delta: f64) -> Vec<f64> {
    let df = d as f64;
    (0..d)
        .map(|j| {
            let x = j as f64 - delta;
            let den = sin_pi_sq(x / df);
            if den == 0.0 {
                1.0
            } else {
                sin_pi_sq(x) / (df * df * den)
            }
        })
        .collect()
}

/// Characteristic function `E[e^{2πimJ/d}]` of one jump, `|m| < d`.
pub fn jump_cf(d: usize, delta: f64, m: i64) -> Complex64 {
    let df = d as f64;
    let drift = Complex64::from_polar(1.0, 2.0 * PI * m as f64 * delta / df);
    drift * damping_factor(d, delta, m)
}

/// `1 − (1 − e^{−2πiδ·sign m}) |m|/d`.
pub fn damping_factor(d: usize, delta: f64, m: i64) -> Complex64 {
    if m == 0 {
        return Complex64::new(1.0, 0.0);
    }
    let frac = delta - delta.round();
    let w = Complex64::from_polar(1.0, -2.0 * PI * frac * m.signum() as f64);
    Complex64::new(1.0, 0.0) - (Complex64::new(1.0, 0.0) - w) * (m.unsigned_abs() as f64 / d as f64)
}

/// Eigenvalue of the transition matrix on `v_n = (e^{2πink/d})_k / √d`.
pub fn transition_eigenvalue(d: usize, delta: f64, n: i64) -> Complex64 {
    jump_cf(d, delta, -n)
}

/// Circulant Markov matrix, `get(l, k)` the probability of moving from `k` to `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    d: usize,
    jumps: Vec<f64>,
}

impl TransitionMatrix {
    pub fn dim(&self) -> usize {
        self.d
    }

    /// Entry for slots `l`, `k`.
    pub fn get(&self, l: usize, k: usize) -> f64 {
        self.jumps[(l + self.d - k) % self.d]
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.d).map(|l| (0..self.d).map(|k| self.get(l, k)).collect()).collect()
    }

    /// `M p`.
    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        (0..self.d).map(|l| (0..self.d).map(|k| self.get(l, k) * p[k]).sum()).collect()
    }

    pub fn apply_complex(&self, v: &[Complex64]) -> Vec<Complex64> {
        (0..self.d).map(|l| (0..self.d).map(|k| v[k] * self.get(l, k)).sum()).collect()
    }
}

pub fn transition_matrix(d: usize, delta: f64) -> Result<TransitionMatrix> {
    TimeBasisChainParams::new(d, delta, 0)?;
    Ok(TransitionMatrix { d, jumps: jump_probabilities(d, delta) })
}

/// Canonical queries for a chain: sorted, merged, zeros dropped, indices ≥ 1
/// and every suffix sum of `m` below `d` in magnitude.
fn checked_queries(queries: &[(i64, usize)], d: usize) -> Result<Vec<(i64, usize)>> {
    let q = canonical_queries(queries);
    if q.iter().any(|&(_, i)| i == 0) {
        return Err(Error::InvalidQuery("measurement indices start at 1".into()));
    }
    let mut suffix = 0i64;
    for &(m, _) in q.iter().rev() {
        suffix += m;
        if suffix.unsigned_abs() as usize >= d {
            return Err(Error::InvalidQuery(format!("suffix sum {suffix} not below d = {d}")));
        }
    }
    Ok(q)
}

/// `⟨∏_p e^{2πi m_p l_{I_p}/d}⟩` for the chain started at `|θ_{k0}⟩`.
///
/// Writing `S_p = Σ_{q≥p} m_q`, the walk between readings `I_{p−1}` and `I_p`
/// contributes `φ(S_p)^{I_p−I_{p−1}}` with `φ` the jump characteristic function.
pub fn analytic_moment(d: usize, delta: f64, k0: i64, queries: &[(i64, usize)]) -> Result<Complex64> {
    TimeBasisChainParams::new(d, delta, k0)?;
    let q = checked_queries(queries, d)?;
    let df = d as f64;
    let mut phase = 0.0;
    let mut damping = Complex64::new(1.0, 0.0);
    let mut suffix: i64 = q.iter().map(|x| x.0).sum();
    let mut prev = 0usize;
    for &(m, i) in &q {
        phase += m as f64 * (k0 as f64 + delta * i as f64) / df;
        damping *= damping_factor(d, delta, suffix).powu((i - prev) as u32);
        suffix -= m;
        prev = i;
    }
    Ok(Complex64::from_polar(1.0, 2.0 * PI * (phase - phase.round())) * damping)
}

/// Inverse-CDF sampler of the chain.
#[derive(Debug, Clone)]
pub struct ChainSampler {
    params: TimeBasisChainParams,
    cdf: Vec<f64>,
}

impl ChainSampler {
    pub fn new(params: TimeBasisChainParams) -> Result<Self> {
        params.validate()?;
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = jump_probabilities(params.d, params.delta)
            .into_iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        let total = acc;
        cdf.iter_mut().for_each(|c| *c /= total);
        Ok(Self { params, cdf })
    }

    pub fn params(&self) -> &TimeBasisChainParams {
        &self.params
    }

    fn jump<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        let u: f64 = rng.random();
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1) as i64
    }

    /// Labels after each of `steps` readings (the start label is not included).
    pub fn sample<R: Rng + ?Sized>(&self, steps: usize, rng: &mut R) -> Vec<i64> {
        let d = self.params.d;
        let mut k = self.params.k0;
        (0..steps)
            .map(|_| {
                k = ring_label(ring_slot(k + self.jump(rng), d), d);
                k
            })
            .collect()
    }
}

pub fn sample_chain(params: TimeBasisChainParams, steps: usize, key: StreamKey) -> Result<Vec<i64>> {
    Ok(ChainSampler::new(params)?.sample(steps, &mut key.rng()))
}

/// Monte-Carlo estimate of the moment computed by [`analytic_moment`], one
/// stream per chain.
pub fn empirical_moment(
    params: TimeBasisChainParams,
    queries: &[(i64, usize)],
    chains: usize,
    key: StreamKey,
) -> Result<ComplexEstimate> {
    let d = params.d;
    let q = checked_queries(queries, d)?;
    let sampler = ChainSampler::new(params)?;
    let steps = q.last().map_or(0, |x| x.1);
    let samples: Vec<Complex64> = (0..chains as u64)
        .into_par_iter()
        .map(|c| {
            let path = sampler.sample(steps, &mut key.with_sample(c).rng());
            let r: i64 = q.iter().map(|&(m, i)| (m * path[i - 1]).rem_euclid(d as i64)).sum();
            Complex64::from_polar(1.0, 2.0 * PI * (r % d as i64) as f64 / d as f64)
        })
        .collect();
    Ok(ComplexEstimate::from_samples(&samples))
}

/// Exact distribution of the label after `steps` readings, by slot.
pub fn marginal(params: TimeBasisChainParams, steps: usize) -> Result<Vec<f64>> {
    let m = transition_matrix(params.d, params.delta)?;
    let mut p = vec![0.0; params.d];
    p[ring_slot(params.k0, params.d)] = 1.0;
    for _ in 0..steps {
        p = m.apply(&p);
    }
    Ok(p)
}

pub fn total_variation_to_uniform(p: &[f64]) -> f64 {
    let u = 1.0 / p.len() as f64;
    0.5 * p.iter().map(|x| (x - u).abs()).sum::<f64>()
}

fn check_cf_args(thetas: &[f64], times: &[f64]) -> Result<()> {
    if thetas.len() != times.len() {
        return Err(Error::InvalidParam("thetas and times differ in length".into()));
    }
    if thetas.iter().chain(times).any(|x| !x.is_finite()) {
        return Err(Error::InvalidParam("non-finite theta or time".into()));
    }
    if times.first().is_some_and(|&t| t < 0.0) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParam("times must be non-negative and increasing".into()));
    }
    Ok(())
}

/// Finite-dimensional characteristic function of the Cauchy-with-drift limit,
/// `e^{2πiΣθ_k t_k} e^{−2Σ_k |Σ_{l≥k} θ_l| (t_k − t_{k−1})}` with `t_0 = 0`.
pub fn cauchy_limit_cf(thetas: &[f64], times: &[f64]) -> Result<Complex64> {
    check_cf_args(thetas, times)?;
    let mut decay = 0.0;
    let mut prev = 0.0;
    let mut suffix: f64 = thetas.iter().sum();
    for (th, t) in thetas.iter().zip(times) {
        decay += suffix.abs() * (t - prev);
        suffix -= th;
        prev = *t;
    }
    Ok(uniform_limit_cf(thetas, times)? * (-2.0 * decay).exp())
}

/// `e^{2πiΣθ_k t_k}`, the deterministic-drift limit.
pub fn uniform_limit_cf(thetas: &[f64], times: &[f64]) -> Result<Complex64> {
    check_cf_args(thetas, times)?;
    let s: f64 = thetas.iter().zip(times).map(|(a, b)| a * b).sum();
    Ok(Complex64::from_polar(1.0, 2.0 * PI * s))
}

/// The scaled sharp process `Ξ_t = ξ̃_{⌊2t√d⌋}` at `d = 4^p`, `δ = 1/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledProcess {
    pub p: u32,
}

impl ScaledProcess {
    pub fn dim(&self) -> usize {
        4usize.pow(self.p)
    }

    pub fn params(&self) -> TimeBasisChainParams {
        TimeBasisChainParams { d: self.dim(), delta: 0.5, k0: 0 }
    }

    /// Reading index `⌊2^{p+1} t⌋` sampled at time `t`.
    pub fn index(&self, t: f64) -> usize {
        (2f64.powi(self.p as i32 + 1) * t).floor() as usize
    }

    /// Chain queries for `⟨∏ e^{2πiθ_k Ξ_{t_k}}⟩` with integer `θ_k`.
    pub fn queries(&self, thetas: &[i64], times: &[f64]) -> Vec<(i64, usize)> {
        let root = 1i64 << self.p;
        thetas.iter().zip(times).map(|(&th, &t)| (th * root, self.index(t))).collect()
    }
}
