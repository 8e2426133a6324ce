//! Theta-smeared time measurements of the clock.
//!
//! The Kraus operators are diagonal in the time basis,
//!
//! ```text
//! Ω_k(ξ̃) = θ3(0, 2iσ²/d)^{-1/2} d^{-1/4} θ3((k − ξ̃√d)/d, iσ²/d),   ξ̃ ∈ [−√d/2, √d/2)
//! ```
//!
//! so an outcome is a continuous reading of the (rescaled) time `k/√d`
//! blurred by a periodic Gaussian of width `σ`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clock::{self, check_odd, label, Basis, ClockParams, Dft, StateVector};
use crate::error::{Error, Result};
use crate::rng::StreamKey;
use crate::theta::{theta3, theta3_real, ThetaEvalConfig};

/// Dense cap of the density-matrix oracle.
pub const ORACLE_DIMENSION_CAP: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementParams {
    pub sigma_m_sq: f64,
    #[serde(default = "default_oversample")]
    pub grid_oversample: usize,
}

fn default_oversample() -> usize {
    8
}

impl MeasurementParams {
    pub fn new(sigma_m_sq: f64) -> Self {
        Self { sigma_m_sq, grid_oversample: default_oversample() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_m_sq.is_finite() && self.sigma_m_sq > 0.0) {
            return Err(Error::InvalidParam(format!(
                "sigma_m_sq must be positive (use the timebasis module for sharp measurements), got {}",
                self.sigma_m_sq
            )));
        }
        if self.grid_oversample == 0 {
            return Err(Error::InvalidParam("grid_oversample must be positive".into()));
        }
        Ok(())
    }

    /// Outcome grid step in ξ̃ units.
    pub fn grid_step(&self, d: usize) -> f64 {
        let rd = (d as f64).sqrt();
        let sigma = self.sigma_m_sq.sqrt();
        (sigma / (8.0 * rd) * (2.0 * PI).sqrt()).min(1.0 / (self.grid_oversample as f64 * rd))
    }
}

/// Map `x` onto `[−L/2, L/2)`.
#[inline]
pub fn wrap_centered(x: f64, period: f64) -> f64 {
    x - period * (x / period + 0.5).floor()
}

/// Representative of `x` in `(−L/2, L/2]`, used for outcome increments.
#[inline]
pub fn unwrap_increment(x: f64, period: f64) -> f64 {
    x - period * (x / period - 0.5).ceil()
}

/// Evaluates `Ω_k(ξ̃)` for one `(d, σ²)`.
#[derive(Debug, Clone)]
pub struct KrausKernel {
    d: usize,
    sigma_m_sq: f64,
    scale: f64,
    cfg: ThetaEvalConfig,
}

impl KrausKernel {
    pub fn new(d: usize, params: &MeasurementParams, cfg: &ThetaEvalConfig) -> Result<Self> {
        check_odd(d)?;
        params.validate()?;
        let df = d as f64;
        let norm = theta3_real(0.0, 2.0 * params.sigma_m_sq / df, cfg)?;
        Ok(Self { d, sigma_m_sq: params.sigma_m_sq, scale: norm.powf(-0.5) * df.powf(-0.25), cfg: *cfg })
    }

    pub fn value(&self, k: i64, xi_tilde: f64) -> Result<f64> {
        let df = self.d as f64;
        let x = (k as f64 - xi_tilde * df.sqrt()) / df;
        Ok(self.scale * theta3_real(x, self.sigma_m_sq / df, &self.cfg)?)
    }

    pub fn diag(&self, xi_tilde: f64) -> Result<Vec<f64>> {
        (0..self.d).map(|s| self.value(label(s, self.d), xi_tilde)).collect()
    }
}

/// `Ω_k(ξ̃)` for every `k`.
pub fn kraus_diag(xi_tilde: f64, d: usize, params: &MeasurementParams, cfg: &ThetaEvalConfig) -> Result<Vec<f64>> {
    let half = (d as f64).sqrt() / 2.0;
    if !(xi_tilde >= -half - 1e-12 && xi_tilde <= half + 1e-12) {
        return Err(Error::InvalidParam(format!("outcome {xi_tilde} outside [−√d/2, √d/2]")));
    }
    KrausKernel::new(d, params, cfg)?.diag(xi_tilde)
}

/// Outcome density `f(ξ̃) = Σ_k Ω_k(ξ̃)² |⟨θ_k|ψ⟩|²` on the uniform outcome grid.
pub fn outcome_density(
    state: &StateVector,
    params: &MeasurementParams,
    d: usize,
    cfg: &ThetaEvalConfig,
) -> Result<Vec<(f64, f64)>> {
    let kernel = KrausKernel::new(d, params, cfg)?;
    let probs = state.time_probabilities();
    let rd = (d as f64).sqrt();
    let step = params.grid_step(d);
    let nodes = (rd / step).ceil() as usize;
    let step = rd / nodes as f64;
    (0..=nodes)
        .map(|i| {
            let xi = -rd / 2.0 + step * i as f64;
            let mut f = 0.0;
            for (s, p) in probs.iter().enumerate() {
                if *p > 0.0 {
                    f += p * kernel.value(label(s, d), xi)?.powi(2);
                }
            }
            Ok((xi, f))
        })
        .collect()
}

/// Inverse-CDF table of the outcome offset `e = ξ̃ − k/√d` given time label `k`.
///
/// Given `k` the outcome density is `Ω_k(ξ̃)²`, a translate of one fixed
/// periodic bump, so a single table per `(d, σ²)` serves every label.
#[derive(Debug, Clone)]
struct OffsetTable {
    start: f64,
    step: f64,
    cdf: Vec<f64>,
}

impl OffsetTable {
    fn new(kernel: &KrausKernel, params: &MeasurementParams) -> Result<Self> {
        let d = kernel.d;
        let rd = (d as f64).sqrt();
        let nodes = (rd / params.grid_step(d)).ceil() as usize;
        let step = rd / nodes as f64;
        let start = -rd / 2.0;
        let dens =
            (0..=nodes).map(|i| Ok(kernel.value(0, start + step * i as f64)?.powi(2))).collect::<Result<Vec<f64>>>()?;
        let mut cdf = Vec::with_capacity(nodes + 1);
        let mut acc = 0.0;
        cdf.push(0.0);
        for w in dens.windows(2) {
            acc += 0.5 * step * (w[0] + w[1]);
            cdf.push(acc);
        }
        let total = acc;
        if !(total > 1e-12) {
            return Err(Error::DegenerateDensity(total));
        }
        cdf.iter_mut().for_each(|c| *c /= total);
        Ok(Self { start, step, cdf })
    }

    fn sample(&self, u: f64) -> f64 {
        let i = self.cdf.partition_point(|&c| c <= u).clamp(1, self.cdf.len() - 1);
        let (lo, hi) = (self.cdf[i - 1], self.cdf[i]);
        let frac = if hi > lo { (u - lo) / (hi - lo) } else { 0.5 };
        self.start + self.step * ((i - 1) as f64 + frac)
    }
}

/// Reusable sampler for repeated measurements at fixed `(d, σ²)`.
#[derive(Clone)]
pub struct KrausSampler {
    kernel: KrausKernel,
    offsets: OffsetTable,
    dft: Dft,
}

impl KrausSampler {
    pub fn new(d: usize, params: &MeasurementParams, cfg: &ThetaEvalConfig) -> Result<Self> {
        let kernel = KrausKernel::new(d, params, cfg)?;
        let offsets = OffsetTable::new(&kernel, params)?;
        Ok(Self { kernel, offsets, dft: Dft::new(d) })
    }

    pub fn dim(&self) -> usize {
        self.kernel.d
    }

    pub fn dft(&self) -> &Dft {
        &self.dft
    }

    /// Draw an outcome and return it with the renormalised post-measurement
    /// state, in the time basis.
    pub fn measure<R: Rng + ?Sized>(&self, state: &StateVector, rng: &mut R) -> Result<(f64, StateVector)> {
        let d = self.dim();
        let psi = clock::change_basis_with(state, Basis::Time, &self.dft);
        let total: f64 = psi.amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if !(total > 1e-12) {
            return Err(Error::DegenerateDensity(total));
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = d - 1;
        for (s, a) in psi.amplitudes.iter().enumerate() {
            acc += a.norm_sqr();
            if acc > target {
                chosen = s;
                break;
            }
        }
        let rd = (d as f64).sqrt();
        let offset = self.offsets.sample(rng.random::<f64>());
        let xi = wrap_centered(label(chosen, d) as f64 / rd + offset, rd);

        let mut post = psi;
        for (s, a) in post.amplitudes.iter_mut().enumerate() {
            *a *= self.kernel.value(label(s, d), xi)?;
        }
        let mass = post.normalize();
        if !(mass > 1e-300) {
            return Err(Error::DegenerateDensity(mass * mass));
        }
        Ok((xi, post))
    }
}

/// One outcome of the measurement with the renormalised post-measurement state.
pub fn sample_outcome<R: Rng + ?Sized>(
    state: &StateVector,
    params: &MeasurementParams,
    d: usize,
    cfg: &ThetaEvalConfig,
    rng: &mut R,
) -> Result<(f64, StateVector)> {
    KrausSampler::new(d, params, cfg)?.measure(state, rng)
}

/// Outcomes of a measurement chain together with everything that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub outcomes: Vec<f64>,
    pub deltas: Vec<f64>,
    pub key: StreamKey,
    pub d: usize,
    pub params: MeasurementParams,
}

impl TrajectoryRecord {
    /// Writes `step,delta,outcome` rows, steps counted from 1.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["step", "delta", "outcome"])?;
        for (j, (delta, xi)) in self.deltas.iter().zip(&self.outcomes).enumerate() {
            w.write_record([(j + 1).to_string(), fmt_sig(*delta), fmt_sig(*xi)])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Increments `ξ̃_j − ξ̃_{j−1}` mapped into `(−√d/2, √d/2]`, the first
    /// one taken from `start`.
    pub fn increments(&self, start: f64) -> Vec<f64> {
        let rd = (self.d as f64).sqrt();
        let mut prev = start;
        self.outcomes
            .iter()
            .map(|&x| {
                let inc = unwrap_increment(x - prev, rd);
                prev = x;
                inc
            })
            .collect()
    }
}

/// 17 significant digits, the precision used in every CSV this crate writes.
pub fn fmt_sig(x: f64) -> String {
    format!("{x:.16e}")
}

/// Alternate `evolve(δ_j)` and a measurement, recording each outcome.
pub fn run_chain(
    state: &StateVector,
    deltas: &[f64],
    sampler: &KrausSampler,
    params: &MeasurementParams,
    key: StreamKey,
) -> Result<TrajectoryRecord> {
    let mut rng = key.rng();
    let mut psi = clock::change_basis_with(state, Basis::Time, sampler.dft());
    let mut outcomes = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        psi = clock::evolve_with(&psi, delta, sampler.dft());
        let (xi, post) = sampler.measure(&psi, &mut rng)?;
        outcomes.push(xi);
        psi = post;
    }
    Ok(TrajectoryRecord { outcomes, deltas: deltas.to_vec(), key, d: sampler.dim(), params: *params })
}

/// `∫ Ω_{k'}(ξ̃) Ω_k(ξ̃) e^{2πinξ̃/√d} dξ̃`, with the phase carried by `k'`.
pub fn moment_weight(k: i64, kp: i64, n: i64, d: usize, sigma_m_sq: f64, cfg: &ThetaEvalConfig) -> Result<Complex64> {
    let df = d as f64;
    let tau = 2.0 * sigma_m_sq / df;
    let z = Complex64::new((k - kp) as f64 / df, -sigma_m_sq * n as f64 / df);
    let ratio = theta3(z, tau, cfg)? / theta3_real(0.0, tau, cfg)?;
    let phase = Complex64::from_polar(
        (-PI * sigma_m_sq * (n * n) as f64 / df).exp(),
        2.0 * PI * ((n * kp).rem_euclid(d as i64)) as f64 / df,
    );
    Ok(ratio * phase)
}

/// The same moment with the phase carried by `k`.
pub fn moment_weight_alt(
    k: i64,
    kp: i64,
    n: i64,
    d: usize,
    sigma_m_sq: f64,
    cfg: &ThetaEvalConfig,
) -> Result<Complex64> {
    let df = d as f64;
    let tau = 2.0 * sigma_m_sq / df;
    let z = Complex64::new((k - kp) as f64 / df, sigma_m_sq * n as f64 / df);
    let ratio = theta3(z, tau, cfg)? / theta3_real(0.0, tau, cfg)?;
    let phase = Complex64::from_polar(
        (-PI * sigma_m_sq * (n * n) as f64 / df).exp(),
        2.0 * PI * ((n * k).rem_euclid(d as i64)) as f64 / df,
    );
    Ok(ratio * phase)
}

/// `d×d` density matrix in the time basis, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub d: usize,
    pub entries: Vec<Complex64>,
}

impl DensityMatrix {
    pub fn from_state(state: &StateVector) -> Self {
        let psi = clock::change_basis(state, Basis::Time);
        let d = psi.dim();
        let mut entries = Vec::with_capacity(d * d);
        for a in &psi.amplitudes {
            for b in &psi.amplitudes {
                entries.push(a * b.conj());
            }
        }
        Self { d, entries }
    }

    #[inline]
    pub fn get(&self, k: usize, kp: usize) -> Complex64 {
        self.entries[k * self.d + kp]
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.d).map(|k| self.get(k, k)).sum()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..self.d {
            for kp in 0..self.d {
                worst = worst.max((self.get(k, kp) - self.get(kp, k).conj()).norm());
            }
        }
        worst
    }

    /// `ρ ↦ U ρ U†` for free evolution by `dt` grid units.
    pub fn evolve(&mut self, dt: f64, dft: &Dft) {
        let d = self.d;
        let phases = clock::evolution_phases(d, dt);
        // Rows: ρ A, then columns: A† (ρ A) gives the energy-basis matrix.
        self.map_rows(|r| dft.energy_to_time(r));
        self.map_cols(|c| dft.time_to_energy(c));
        for n in 0..d {
            for np in 0..d {
                self.entries[n * d + np] *= phases[n] * phases[np].conj();
            }
        }
        self.map_rows(|r| dft.time_to_energy(r));
        self.map_cols(|c| dft.energy_to_time(c));
    }

    /// Elementwise `ρ_{kk'} ← ρ_{kk'} · w(k, k')`.
    pub fn multiply_elementwise<F: Fn(usize, usize) -> Complex64>(&mut self, w: F) {
        let d = self.d;
        for k in 0..d {
            for kp in 0..d {
                self.entries[k * d + kp] *= w(k, kp);
            }
        }
    }

    fn map_rows<F: Fn(&[Complex64]) -> Vec<Complex64>>(&mut self, f: F) {
        let d = self.d;
        for r in 0..d {
            let out = f(&self.entries[r * d..(r + 1) * d]);
            self.entries[r * d..(r + 1) * d].copy_from_slice(&out);
        }
    }

    fn map_cols<F: Fn(&[Complex64]) -> Vec<Complex64>>(&mut self, f: F) {
        let d = self.d;
        let mut col = vec![Complex64::new(0.0, 0.0); d];
        for c in 0..d {
            for r in 0..d {
                col[r] = self.entries[r * d + c];
            }
            let out = f(&col);
            for r in 0..d {
                self.entries[r * d + c] = out[r];
            }
        }
    }
}

/// Elementwise channel multiplier for a measurement weighted by
/// `e^{2πimξ̃/√d}` (`m = 0` is the nonselective dephasing).
pub fn channel_multiplier(d: usize, sigma_m_sq: f64, m: i64, cfg: &ThetaEvalConfig) -> Result<Vec<Complex64>> {
    // Indexed by (k − k') mod d and k' separately: w = table[(k−k') mod d] · phase[k'].
    let df = d as f64;
    let tau = 2.0 * sigma_m_sq / df;
    let norm = theta3_real(0.0, tau, cfg)?;
    let damp = (-PI * sigma_m_sq * (m * m) as f64 / df).exp();
    (0..d)
        .map(|r| {
            let z = Complex64::new(r as f64 / df, -sigma_m_sq * m as f64 / df);
            Ok(theta3(z, tau, cfg)? / norm * damp)
        })
        .collect()
}

/// Sort by index, merge coincident indices and drop zero weights.
pub fn canonical_queries(queries: &[(i64, usize)]) -> Vec<(i64, usize)> {
    let mut q: Vec<(i64, usize)> = queries.to_vec();
    q.sort_by_key(|&(_, i)| i);
    let mut out: Vec<(i64, usize)> = Vec::with_capacity(q.len());
    for (m, i) in q {
        match out.last_mut() {
            Some(last) if last.1 == i => last.0 += m,
            _ => out.push((m, i)),
        }
    }
    out.retain(|&(m, _)| m != 0);
    out
}

pub(crate) fn check_queries(queries: &[(i64, usize)], n_steps: usize, d: usize) -> Result<()> {
    for w in queries.windows(2) {
        if w[0].1 >= w[1].1 {
            return Err(Error::InvalidQuery("query indices must be strictly increasing".into()));
        }
    }
    if let Some(&(_, i)) = queries.first() {
        if i == 0 {
            return Err(Error::InvalidQuery("query indices start at 1".into()));
        }
    }
    if let Some(&(_, i)) = queries.last() {
        if i > n_steps {
            return Err(Error::InvalidQuery(format!("query index {i} beyond {n_steps} measurements")));
        }
    }
    let mut suffix = 0i64;
    for &(m, _) in queries.iter().rev() {
        suffix += m;
        if suffix.unsigned_abs() as usize >= d {
            return Err(Error::InvalidQuery(format!("suffix sum {suffix} reaches the dimension {d}")));
        }
    }
    Ok(())
}

/// Exact `⟨∏_k exp(2πi m_k ξ̃_{I_k}/√d)⟩` by propagating the density matrix.
///
/// Queries are `(m_k, I_k)` with measurement indices counted from 1; the
/// `j`-th measurement follows an evolution by `deltas[j−1]`.
pub fn oracle_moment(
    clock_params: &ClockParams,
    deltas: &[f64],
    meas: &MeasurementParams,
    queries: &[(i64, usize)],
    cfg: &ThetaEvalConfig,
) -> Result<Complex64> {
    clock_params.validate()?;
    meas.validate()?;
    let d = clock_params.d;
    if d > ORACLE_DIMENSION_CAP {
        return Err(Error::DimensionTooLarge { d, cap: ORACLE_DIMENSION_CAP });
    }
    check_queries(queries, deltas.len(), d)?;
    let Some(&(_, last)) = queries.last() else {
        return Ok(Complex64::new(1.0, 0.0));
    };
    let dft = Dft::new(d);
    let mut rho = DensityMatrix::from_state(&clock::build_quasi_ideal_state(clock_params, cfg)?);
    let dephase = channel_multiplier(d, meas.sigma_m_sq, 0, cfg)?;
    let di = d as i64;
    for (j, &delta) in deltas.iter().enumerate().take(last) {
        rho.evolve(delta, &dft);
        let index = j + 1;
        match queries.iter().find(|q| q.1 == index) {
            Some(&(m, _)) => {
                let table = channel_multiplier(d, meas.sigma_m_sq, m, cfg)?;
                rho.multiply_elementwise(|k, kp| {
                    let r = (k as i64 - kp as i64).rem_euclid(di) as usize;
                    let phase = 2.0 * PI * (m * label(kp, d)).rem_euclid(di) as f64 / d as f64;
                    table[r] * Complex64::from_polar(1.0, phase)
                });
            }
            None => rho.multiply_elementwise(|k, kp| dephase[(k as i64 - kp as i64).rem_euclid(di) as usize]),
        }
    }
    Ok(rho.trace())
}

/// Number of measurement steps `⌈2t√d⌉` covering physical time `t` at `δ = 1/2`.
pub fn steps_for_time(t: f64, d: usize) -> usize {
    (2.0 * t * (d as f64).sqrt()).ceil() as usize
}
