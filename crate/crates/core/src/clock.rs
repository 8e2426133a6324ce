//! Quasi-ideal clock states on a `d`-dimensional ring.
//!
//! Conventions, fixed once for the whole crate:
//!
//! * energy eigenstates `|n⟩` and time eigenstates `|θ_j⟩` are both indexed
//!   by `−h..=h` with `h = (d−1)/2`, stored ascending;
//! * `⟨θ_j|n⟩ = d^{-1/2} e^{2πijn/d}`;
//! * `H = (2π/√d) Σ n |n⟩⟨n|`, and time is measured in grid units of `1/√d`,
//!   so evolving by one grid unit maps `|θ_j⟩` to `|θ_{j+1}⟩`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::theta::{theta3_real, ThetaEvalConfig};

/// Above this size the centred DFT switches from the dense sum to an FFT.
pub const DIRECT_DFT_MAX: usize = 512;

/// Dense-operator cap for the commutator evaluation.
pub const QND_DIMENSION_CAP: usize = 2049;

/// `(d−1)/2`.
#[inline]
pub fn half_width(d: usize) -> i64 {
    (d as i64 - 1) / 2
}

/// Storage slot of ring label `k ∈ −h..=h`.
#[inline]
pub fn slot(k: i64, d: usize) -> usize {
    (k + half_width(d)) as usize
}

/// Ring label stored at `slot`.
#[inline]
pub fn label(slot: usize, d: usize) -> i64 {
    slot as i64 - half_width(d)
}

/// Reduce an integer into `−h..=h` (odd `d`).
#[inline]
pub fn wrap_label(k: i64, d: usize) -> i64 {
    let h = half_width(d);
    (k + h).rem_euclid(d as i64) - h
}

pub(crate) fn check_odd(d: usize) -> Result<()> {
    if d < 3 || d.is_multiple_of(2) {
        Err(Error::InvalidParam(format!("dimension must be odd and at least 3, got {d}")))
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockParams {
    pub d: usize,
    /// Squared width ξ² of the theta envelope; the time-basis variance is `ξ² d / 4π`.
    pub width_sq: f64,
    /// Mean energy label.
    pub n0: i64,
}

impl ClockParams {
    pub fn new(d: usize, width_sq: f64, n0: i64) -> Result<Self> {
        let p = Self { d, width_sq, n0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_odd(self.d)?;
        if !(self.width_sq.is_finite() && self.width_sq > 0.0) {
            return Err(Error::InvalidParam(format!("width_sq must be positive, got {}", self.width_sq)));
        }
        if self.n0.abs() > half_width(self.d) {
            return Err(Error::IndexOutOfRange { index: self.n0, d: self.d });
        }
        Ok(())
    }

    /// `1 − |1 − 2 n0/(d−1)|`: how far the energy centre sits from the band edge.
    pub fn edge_margin(&self) -> f64 {
        1.0 - (1.0 - 2.0 * self.n0 as f64 / (self.d as f64 - 1.0)).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Basis {
    Energy,
    Time,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub amplitudes: Vec<Complex64>,
    pub basis: Basis,
}

impl StateVector {
    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm_sq(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalize(&mut self) -> f64 {
        let n = self.norm_sq().sqrt();
        if n > 0.0 {
            for a in &mut self.amplitudes {
                *a /= n;
            }
        }
        n
    }

    /// `⟨self|other⟩`, converting `other` into this state's basis if needed.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        let other = change_basis(other, self.basis);
        self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum()
    }

    /// `|⟨θ_k|ψ⟩|²` for every `k`.
    pub fn time_probabilities(&self) -> Vec<f64> {
        change_basis(self, Basis::Time).amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }
}

/// Unitary DFT between the energy and time bases with centred labels.
///
/// Reusable: holds the FFT plans and the label-shift twiddles for one `d`.
#[derive(Clone)]
pub struct Dft {
    d: usize,
    engine: Engine,
}

#[derive(Clone)]
enum Engine {
    Direct { roots: Vec<Complex64> },
    Fast { forward: Arc<dyn Fft<f64>>, inverse: Arc<dyn Fft<f64>>, pre: Vec<Complex64>, post: Vec<Complex64> },
}

impl Dft {
    pub fn new(d: usize) -> Self {
        if d <= DIRECT_DFT_MAX {
            Self::direct(d)
        } else {
            Self::fast(d)
        }
    }

    pub fn direct(d: usize) -> Self {
        let roots = (0..d).map(|r| Complex64::from_polar(1.0, 2.0 * PI * r as f64 / d as f64)).collect();
        Self { d, engine: Engine::Direct { roots } }
    }

    pub fn fast(d: usize) -> Self {
        let mut planner = FftPlanner::new();
        let h = half_width(d) as f64;
        let df = d as f64;
        // e^{2πi(a−h)(b−h)/d} = e^{2πiab/d} e^{−2πiha/d} e^{−2πihb/d} e^{2πih²/d}
        let pre: Vec<Complex64> =
            (0..d).map(|a| Complex64::from_polar(1.0, -2.0 * PI * ((h * a as f64) % df) / df)).collect();
        let global = Complex64::from_polar(1.0 / df.sqrt(), 2.0 * PI * ((h * h) % df) / df);
        let post = pre.iter().map(|p| p * global).collect();
        Self {
            d,
            engine: Engine::Fast {
                forward: planner.plan_fft_forward(d),
                inverse: planner.plan_fft_inverse(d),
                pre,
                post,
            },
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// `a_j = d^{-1/2} Σ_n e^{2πijn/d} ψ_n`.
    pub fn energy_to_time(&self, energy: &[Complex64]) -> Vec<Complex64> {
        self.apply(energy, 1.0)
    }

    /// `ψ_n = d^{-1/2} Σ_j e^{−2πijn/d} a_j`.
    pub fn time_to_energy(&self, time: &[Complex64]) -> Vec<Complex64> {
        self.apply(time, -1.0)
    }

    fn apply(&self, input: &[Complex64], sign: f64) -> Vec<Complex64> {
        let d = self.d;
        assert_eq!(input.len(), d, "vector length does not match the DFT size");
        match &self.engine {
            Engine::Direct { roots } => {
                let scale = 1.0 / (d as f64).sqrt();
                let di = d as i64;
                (0..d)
                    .map(|a| {
                        let j = label(a, d);
                        let mut acc = Complex64::new(0.0, 0.0);
                        for (b, x) in input.iter().enumerate() {
                            let r = (j * label(b, d)).rem_euclid(di) as usize;
                            let w = roots[r];
                            acc += x * if sign > 0.0 { w } else { w.conj() };
                        }
                        acc * scale
                    })
                    .collect()
            }
            Engine::Fast { forward, inverse, pre, post } => {
                let (plan, conj) = if sign > 0.0 { (inverse, false) } else { (forward, true) };
                let tw = |c: &Complex64| if conj { c.conj() } else { *c };
                let mut buf: Vec<Complex64> = input.iter().zip(pre).map(|(x, p)| x * tw(p)).collect();
                plan.process(&mut buf);
                buf.iter_mut().zip(post).for_each(|(x, p)| *x *= tw(p));
                buf
            }
        }
    }
}

/// Time-basis amplitudes `ψ(k)` of the quasi-ideal state, before normalisation.
fn time_envelope(params: &ClockParams, cfg: &ThetaEvalConfig) -> Result<Vec<Complex64>> {
    let d = params.d as f64;
    (0..params.d)
        .map(|s| {
            let k = label(s, params.d) as f64;
            let env = theta3_real(k / d, params.width_sq / d, cfg)?;
            Ok(Complex64::from_polar(env, 2.0 * PI * params.n0 as f64 * k / d))
        })
        .collect()
}

/// Closed-form normaliser of the energy amplitudes `θ3((p−n0)/d, i/(ξ²d))`.
pub fn energy_normalizer(params: &ClockParams, cfg: &ThetaEvalConfig) -> Result<f64> {
    let d = params.d as f64;
    let xi2 = params.width_sq;
    let a = 1.0 / (2.0 * xi2 * d);
    let b = d / (2.0 * xi2);
    let bracket = theta3_real(0.0, a, cfg)? * theta3_real(0.0, b, cfg)?
        + theta3_real(0.5, a, cfg)? * theta3_real(d / 2.0, b, cfg)?;
    Ok((2.0 / d).sqrt() / bracket.sqrt())
}

/// Closed-form normaliser of the time amplitudes `θ3(k/d, iξ²/d) e^{2πin0k/d}`.
pub fn time_normalizer(params: &ClockParams, cfg: &ThetaEvalConfig) -> Result<f64> {
    let d = params.d as f64;
    let xi2 = params.width_sq;
    let a = xi2 / (2.0 * d);
    let b = d * xi2 / 2.0;
    let bracket = theta3_real(0.0, a, cfg)? * theta3_real(0.0, b, cfg)?
        + theta3_real(0.5, a, cfg)? * theta3_real(d / 2.0, b, cfg)?;
    Ok((2.0 / d).sqrt() / bracket.sqrt())
}

/// The quasi-ideal state, returned in the energy basis.
///
/// Its time-basis amplitudes are `ψ(k) = N θ3(k/d, iξ²/d) e^{2πi n0 k/d}`,
/// and its energy amplitudes `N' θ3((p−n0)/d, i/(ξ²d))` are what is stored.
pub fn build_quasi_ideal_state(params: &ClockParams, cfg: &ThetaEvalConfig) -> Result<StateVector> {
    params.validate()?;
    let d = params.d as f64;
    let norm = energy_normalizer(params, cfg)?;
    let amplitudes = (0..params.d)
        .map(|s| {
            let p = label(s, params.d) as f64;
            let v = theta3_real((p - params.n0 as f64) / d, 1.0 / (params.width_sq * d), cfg)?;
            Ok(Complex64::new(norm * v, 0.0))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StateVector { amplitudes, basis: Basis::Energy })
}

/// Time-basis amplitudes of the quasi-ideal state built straight from the
/// time-domain envelope and its own closed-form normaliser.
pub fn quasi_ideal_time_amplitudes(params: &ClockParams, cfg: &ThetaEvalConfig) -> Result<Vec<Complex64>> {
    params.validate()?;
    let norm = time_normalizer(params, cfg)?;
    Ok(time_envelope(params, cfg)?.into_iter().map(|a| a * norm).collect())
}

/// `|θ_j⟩` in the energy basis.
pub fn time_eigenstate(d: usize, j: i64) -> Result<StateVector> {
    check_odd(d)?;
    if j.abs() > half_width(d) {
        return Err(Error::IndexOutOfRange { index: j, d });
    }
    let scale = 1.0 / (d as f64).sqrt();
    let amplitudes = (0..d)
        .map(|s| {
            let r = (j * label(s, d)).rem_euclid(d as i64) as f64;
            Complex64::from_polar(scale, -2.0 * PI * r / d as f64)
        })
        .collect();
    Ok(StateVector { amplitudes, basis: Basis::Energy })
}

/// Energy-basis phases `e^{−2πi n dt/d}` of free evolution by `dt` grid units.
pub fn evolution_phases(d: usize, dt_grid: f64) -> Vec<Complex64> {
    let df = d as f64;
    // Integer and fractional parts are split so n·dt stays exact for integer dt.
    let whole = dt_grid.trunc();
    let frac = dt_grid - whole;
    (0..d)
        .map(|s| {
            let n = label(s, d);
            let r = ((n as f64 * whole) % df) / df + n as f64 * frac / df;
            Complex64::from_polar(1.0, -2.0 * PI * r)
        })
        .collect()
}

/// Free evolution by `dt_grid` grid units; the result keeps the input's basis.
pub fn evolve(state: &StateVector, dt_grid: f64) -> StateVector {
    let dft = Dft::new(state.dim());
    evolve_with(state, dt_grid, &dft)
}

pub fn evolve_with(state: &StateVector, dt_grid: f64, dft: &Dft) -> StateVector {
    let phases = evolution_phases(state.dim(), dt_grid);
    match state.basis {
        Basis::Energy => StateVector {
            amplitudes: state.amplitudes.iter().zip(&phases).map(|(a, p)| a * p).collect(),
            basis: Basis::Energy,
        },
        Basis::Time => {
            let mut e = dft.time_to_energy(&state.amplitudes);
            e.iter_mut().zip(&phases).for_each(|(a, p)| *a *= p);
            StateVector { amplitudes: dft.energy_to_time(&e), basis: Basis::Time }
        }
    }
}

pub fn change_basis(state: &StateVector, target: Basis) -> StateVector {
    if state.basis == target {
        return state.clone();
    }
    let dft = Dft::new(state.dim());
    change_basis_with(state, target, &dft)
}

pub fn change_basis_with(state: &StateVector, target: Basis, dft: &Dft) -> StateVector {
    let amplitudes = match (state.basis, target) {
        (Basis::Energy, Basis::Time) => dft.energy_to_time(&state.amplitudes),
        (Basis::Time, Basis::Energy) => dft.time_to_energy(&state.amplitudes),
        _ => state.amplitudes.clone(),
    };
    StateVector { amplitudes, basis: target }
}

/// Which time operator enters the commutator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeOperator {
    /// `t̂ = Σ k |θ_k⟩⟨θ_k|`.
    Linear,
    /// `exp(2πi m t̂/d)` at the later time and `exp(2πi n t̂/d)` at the earlier one.
    Periodic { m: i64, n: i64 },
}

/// `⟨θ_k| [A(t1), B(t0)] |Ψ0⟩` with `X(t) = U(t)† X U(t)`, times in grid units.
///
/// Both operators are diagonal in the time basis, so the Heisenberg-picture
/// products are applied to the state vector directly instead of forming the
/// dense `d×d` matrices.
pub fn qnd_commutator_element(
    params: &ClockParams,
    t0: f64,
    t1: f64,
    k: i64,
    op: TimeOperator,
    cfg: &ThetaEvalConfig,
) -> Result<Complex64> {
    params.validate()?;
    let d = params.d;
    if d > QND_DIMENSION_CAP {
        return Err(Error::DimensionTooLarge { d, cap: QND_DIMENSION_CAP });
    }
    if k.abs() > half_width(d) {
        return Err(Error::IndexOutOfRange { index: k, d });
    }
    let dft = Dft::new(d);
    let psi = change_basis_with(&build_quasi_ideal_state(params, cfg)?, Basis::Time, &dft);

    let diag = |winding: Option<i64>| -> Vec<Complex64> {
        (0..d)
            .map(|s| {
                let kk = label(s, d) as f64;
                match winding {
                    None => Complex64::new(kk, 0.0),
                    Some(w) => Complex64::from_polar(1.0, 2.0 * PI * w as f64 * kk / d as f64),
                }
            })
            .collect()
    };
    let (late, early) = match op {
        TimeOperator::Linear => (diag(None), diag(None)),
        TimeOperator::Periodic { m, n } => (diag(Some(m)), diag(Some(n))),
    };
    let heisenberg = |v: &StateVector, diag: &[Complex64], t: f64| {
        let mut u = evolve_with(v, t, &dft);
        u.amplitudes.iter_mut().zip(diag).for_each(|(a, x)| *a *= x);
        evolve_with(&u, -t, &dft)
    };
    let ab = heisenberg(&heisenberg(&psi, &early, t0), &late, t1);
    let ba = heisenberg(&heisenberg(&psi, &late, t1), &early, t0);
    let s = slot(k, d);
    Ok(ab.amplitudes[s] - ba.amplitudes[s])
}
