//! Small numeric helpers shared by the modules: compensated sums, quadrature
//! and ordinary least squares.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = KahanSum::default();
        iter.into_iter().for_each(|x| s.add(x));
        s
    }
}

/// Mean and componentwise standard error of complex samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexEstimate {
    pub mean: Complex64,
    pub stderr_re: f64,
    pub stderr_im: f64,
}

impl ComplexEstimate {
    pub fn from_samples(samples: &[Complex64]) -> Self {
        let n = samples.len() as f64;
        if samples.is_empty() {
            return Self { mean: Complex64::new(f64::NAN, f64::NAN), stderr_re: f64::NAN, stderr_im: f64::NAN };
        }
        let re: KahanSum = samples.iter().map(|s| s.re).collect();
        let im: KahanSum = samples.iter().map(|s| s.im).collect();
        let mean = Complex64::new(re.value() / n, im.value() / n);
        if samples.len() < 2 {
            return Self { mean, stderr_re: 0.0, stderr_im: 0.0 };
        }
        let vr: KahanSum = samples.iter().map(|s| (s.re - mean.re).powi(2)).collect();
        let vi: KahanSum = samples.iter().map(|s| (s.im - mean.im).powi(2)).collect();
        Self { mean, stderr_re: (vr.value() / (n - 1.0) / n).sqrt(), stderr_im: (vi.value() / (n - 1.0) / n).sqrt() }
    }

    /// Standard error of the modulus-scale deviation, `hypot` of the two components.
    pub fn stderr(&self) -> f64 {
        self.stderr_re.hypot(self.stderr_im)
    }
}

/// Adaptive Simpson quadrature on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64> {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * tol || (b - a).abs() < 1e-14 * (1.0 + a.abs()) {
            return Ok(left + right + delta / 15.0);
        }
        if depth == 0 {
            return Err(Error::QuadratureFailure(format!("no convergence on [{a}, {b}]")));
        }
        Ok(rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
            + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
    }
    if a == b {
        return Ok(0.0);
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(&f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Trapezoid rule for a smooth function periodic on `[a, a + period)`,
/// doubling the node count until two successive estimates agree to `tol`.
pub fn periodic_trapezoid<F: Fn(f64) -> f64>(f: F, a: f64, period: f64, start_nodes: usize, tol: f64) -> Result<f64> {
    let mut n = start_nodes.max(4);
    let mut prev = trapezoid_nodes(&f, a, period, n);
    for _ in 0..24 {
        n *= 2;
        let next = trapezoid_nodes(&f, a, period, n);
        if (next - prev).abs() <= tol {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::QuadratureFailure(format!("periodic trapezoid stalled at {n} nodes")))
}

fn trapezoid_nodes<F: Fn(f64) -> f64>(f: &F, a: f64, period: f64, n: usize) -> f64 {
    let h = period / n as f64;
    let s: KahanSum = (0..n).map(|i| f(a + h * i as f64)).collect();
    s.value() * h
}

/// Least-squares line through `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_line(points: &[(f64, f64)]) -> Result<LineFit> {
    if points.len() < 2 {
        return Err(Error::InvalidParam("a line fit needs at least two points".into()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParam("all abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LineFit { slope, intercept: my - slope * mx, r_squared })
}
