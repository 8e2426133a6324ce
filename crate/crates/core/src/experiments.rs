//! Sweeps and experiment runners behind the command-line tool.
//!
//! Every random quantity is drawn from a stream keyed by
//! `(seed, experiment_id(name), sample_index)`, so outputs do not depend on
//! the number of worker threads.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clock::{self, ClockParams, TimeOperator};
use crate::correlations::{c3_monte_carlo, c3_transfer_matrix, factors_with_c3, CorrelationQuery};
use crate::error::{Error, Result};
use crate::measurement::{fmt_sig, oracle_moment, steps_for_time, MeasurementParams};
use crate::numerics::{fit_line, LineFit};
use crate::oscillator::{self, ForceEstimatorSpec, VACUUM};
use crate::rng::{experiment_id, StreamKey};
use crate::theta::ThetaEvalConfig;
use crate::timebasis::{self, TimeBasisChainParams};
use crate::waveform::{self, WaveformExperiment, WaveformExperimentConfig};

/// Log-spaced odd dimensions used by the Figure-1 presets.
pub const DEFAULT_D_GRID: [usize; 9] = [501, 707, 1001, 1415, 2001, 2829, 4001, 5657, 8001];

/// Resolved sign and indexing conventions; hashed into the version string.
pub const CONVENTIONS: &str = "\
time-eigenstate <theta_j|n> = exp(+2 pi i j n/d)/sqrt(d);\
evolution |n> -> exp(-2 pi i n delta/d)|n>;\
drift phase exp(+(2 pi i/d) sum_k m_k sum_{j<=I_k} delta_j);\
damping 1-(1-exp(-2 pi i delta sign S))|S|/d, S = suffix sum of m;\
oracle weight phase on k';\
queries sorted, merged, zeros dropped;\
fig1 n = ceil(2 t sqrt d), query (-1, n)";

/// 16 hex digits identifying [`CONVENTIONS`].
pub fn convention_hash() -> String {
    format!("{:016x}", experiment_id(CONVENTIONS))
}

fn default_d_grid() -> Vec<usize> {
    DEFAULT_D_GRID.to_vec()
}

/// Sweep over `d` with `σ_m² = c₂ d^β`, `ξ² = c₁ d^α` and the single query
/// `(−1, ⌈2t√d⌉)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub d_grid: Vec<usize>,
    /// β.
    pub sigma_m_exponent: f64,
    /// c₂.
    pub sigma_m_const: f64,
    /// α.
    pub width_exponent: f64,
    /// c₁.
    pub width_const: f64,
    pub t: f64,
    pub delta: f64,
    pub samples: usize,
    pub seed: u64,
    pub exact_c3: bool,
    pub output_path: Option<PathBuf>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            d_grid: default_d_grid(),
            sigma_m_exponent: -0.12,
            sigma_m_const: 1.0,
            width_exponent: -0.5,
            width_const: 1.0,
            t: 1.0,
            delta: 0.5,
            samples: 5000,
            seed: 0,
            exact_c3: false,
            output_path: None,
        }
    }
}

impl SweepConfig {
    /// `fig1-top` (β = −0.12, α = −0.5) or `fig1-bottom` (β = −0.65, α = 0).
    pub fn preset(name: &str) -> Option<Self> {
        let (beta, alpha) = match name {
            "fig1-top" => (-0.12, -0.5),
            "fig1-bottom" => (-0.65, 0.0),
            _ => return None,
        };
        Some(Self { sigma_m_exponent: beta, width_exponent: alpha, ..Self::default() })
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_grid.is_empty() {
            return Err(Error::InvalidParam("d_grid is empty".into()));
        }
        if let Some(d) = self.d_grid.iter().find(|d| **d < 3 || *d % 2 == 0) {
            return Err(Error::InvalidParam(format!("d_grid entries must be odd and ≥ 3, got {d}")));
        }
        if self.samples == 0 {
            return Err(Error::InvalidParam("samples must be at least 1".into()));
        }
        let finite = [self.sigma_m_exponent, self.sigma_m_const, self.width_exponent, self.width_const, self.delta];
        if finite.iter().any(|x| !x.is_finite()) || !(self.t > 0.0) {
            return Err(Error::InvalidParam("sweep parameters must be finite and t positive".into()));
        }
        if !(self.sigma_m_const > 0.0 && self.width_const > 0.0) {
            return Err(Error::InvalidParam("scaling constants must be positive".into()));
        }
        Ok(())
    }

    pub fn sigma_m_sq(&self, d: usize) -> f64 {
        self.sigma_m_const * (d as f64).powf(self.sigma_m_exponent)
    }

    pub fn xi_sq(&self, d: usize) -> f64 {
        self.width_const * (d as f64).powf(self.width_exponent)
    }

    pub fn query(&self, d: usize) -> Result<CorrelationQuery> {
        let n = steps_for_time(self.t, d);
        Ok(CorrelationQuery::single(
            ClockParams::new(d, self.xi_sq(d), 0)?,
            MeasurementParams::new(self.sigma_m_sq(d)),
            self.delta,
            -1,
            n,
        ))
    }
}

/// Rows that know how to print themselves as CSV.
pub trait CsvRow {
    fn header() -> &'static [&'static str];
    fn fields(&self) -> Vec<String>;
}

/// Header plus rows, `\n` line endings.
pub fn write_csv<R: CsvRow, W: Write>(rows: &[R], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(R::header())?;
    for r in rows {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file<R: CsvRow>(rows: &[R], path: &Path) -> Result<()> {
    write_csv(rows, std::io::BufWriter::new(std::fs::File::create(path)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub d: usize,
    pub sigma_m_sq: f64,
    pub xi_sq: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3_re: f64,
    pub c3_im: f64,
    /// Zero when C3 is exact.
    pub c3_stderr: f64,
    /// Standard error of `Re C3` alone.
    #[serde(skip)]
    pub c3_stderr_re: f64,
    pub one_minus_c1c2: f64,
    /// `1 − C1 C2 Re C3`.
    pub one_minus_c1c2c3: f64,
}

impl CsvRow for SweepRow {
    fn header() -> &'static [&'static str] {
        &["d", "sigma_m_sq", "xi_sq", "c1", "c2", "c3_re", "c3_im", "c3_stderr", "one_minus_c1c2", "one_minus_c1c2c3"]
    }

    fn fields(&self) -> Vec<String> {
        let mut f = vec![self.d.to_string()];
        f.extend(
            [
                self.sigma_m_sq,
                self.xi_sq,
                self.c1,
                self.c2,
                self.c3_re,
                self.c3_im,
                self.c3_stderr,
                self.one_minus_c1c2,
                self.one_minus_c1c2c3,
            ]
            .map(fmt_sig),
        );
        f
    }
}

/// One grid point of a sweep.
pub fn sweep_point(cfg: &SweepConfig, d: usize, theta_cfg: &ThetaEvalConfig) -> Result<SweepRow> {
    let query = cfg.query(d)?;
    let (c3, stderr, stderr_re) = if cfg.exact_c3 {
        (c3_transfer_matrix(&query, theta_cfg)?, 0.0, 0.0)
    } else {
        let key = StreamKey::new(cfg.seed, experiment_id(&format!("c3/{d}")), 0);
        let est = c3_monte_carlo(&query, cfg.samples, key, theta_cfg)?;
        (est.mean, est.stderr(), est.stderr_re)
    };
    let f = factors_with_c3(&query, c3, theta_cfg)?;
    let c12 = f.c1 * f.c2;
    Ok(SweepRow {
        d,
        sigma_m_sq: query.meas.sigma_m_sq,
        xi_sq: query.clock.width_sq,
        c1: f.c1,
        c2: f.c2,
        c3_re: c3.re,
        c3_im: c3.im,
        c3_stderr: stderr,
        c3_stderr_re: stderr_re,
        one_minus_c1c2: 1.0 - c12,
        one_minus_c1c2c3: 1.0 - c12 * c3.re,
    })
}

/// Rows in `d_grid` order.
pub fn run_figure1_sweep(cfg: &SweepConfig, theta_cfg: &ThetaEvalConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    cfg.d_grid.iter().map(|&d| sweep_point(cfg, d, theta_cfg)).collect()
}

/// Least squares on `(ln x, ln y)`.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<LineFit> {
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::InvalidParam("log-log fit needs positive coordinates".into()));
    }
    fit_line(&points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect::<Vec<_>>())
}

/// Outcome of comparing the factorisation with the density-matrix oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheckReport {
    pub cases: usize,
    pub skipped: usize,
    pub max_deviation: f64,
    pub worst_case: String,
}

/// Grid over `d`, number of readings `J`, spacing, `σ_m²`, `ξ²`, `n0`, with
/// every single query `(m, J)` and double query `((m₁, I₁), (m₂, J))`,
/// `m ∈ −2..=2`. Queries whose suffix sums reach `d` are skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleGrid {
    pub dims: Vec<usize>,
    pub max_readings: usize,
    pub deltas: Vec<f64>,
    pub sigma_m_sq: Vec<f64>,
    pub xi_sq: Vec<f64>,
    pub n0: Vec<i64>,
    pub m_range: i64,
}

impl Default for OracleGrid {
    fn default() -> Self {
        Self {
            dims: vec![3, 5, 11, 31],
            max_readings: 5,
            deltas: vec![0.5, 0.3, 1.0],
            sigma_m_sq: vec![0.05, 0.5, 5.0],
            xi_sq: vec![0.2, 1.0, 5.0],
            n0: vec![0, 2],
            m_range: 2,
        }
    }
}

impl OracleGrid {
    fn queries(&self, j: usize) -> Vec<Vec<(i64, usize)>> {
        let ms: Vec<i64> = (-self.m_range..=self.m_range).collect();
        let mut out: Vec<Vec<(i64, usize)>> = ms.iter().map(|&m| vec![(m, j)]).collect();
        for i1 in 1..j {
            for &m1 in &ms {
                for &m2 in &ms {
                    out.push(vec![(m1, i1), (m2, j)]);
                }
            }
        }
        out
    }
}

pub fn oracle_check(grid: &OracleGrid, theta_cfg: &ThetaEvalConfig) -> Result<OracleCheckReport> {
    let mut settings = Vec::new();
    for &d in &grid.dims {
        for &n0 in &grid.n0 {
            if n0.abs() > clock::half_width(d) {
                continue;
            }
            for &xi in &grid.xi_sq {
                for &s2 in &grid.sigma_m_sq {
                    for &delta in &grid.deltas {
                        for j in 1..=grid.max_readings {
                            settings.push((d, n0, xi, s2, delta, j));
                        }
                    }
                }
            }
        }
    }
    let results = settings
        .par_iter()
        .map(|&(d, n0, xi, s2, delta, j)| {
            let clock = ClockParams::new(d, xi, n0)?;
            let meas = MeasurementParams::new(s2);
            let deltas = vec![delta; j];
            let mut worst = (0.0f64, String::new());
            let (mut cases, mut skipped) = (0usize, 0usize);
            for queries in grid.queries(j) {
                let q = CorrelationQuery { clock, meas, deltas: deltas.clone(), queries: queries.clone() };
                let factored = match crate::correlations::factors_exact(&q, theta_cfg) {
                    Err(Error::InvalidQuery(_)) => {
                        skipped += 1;
                        continue;
                    }
                    r => r?.product,
                };
                let exact = oracle_moment(&clock, &deltas, &meas, &queries, theta_cfg)?;
                let dev = (factored - exact).norm();
                cases += 1;
                if dev > worst.0 || worst.1.is_empty() {
                    worst =
                        (dev, format!("d={d} n0={n0} xi_sq={xi} sigma_m_sq={s2} delta={delta} queries={queries:?}"));
                }
            }
            Ok((cases, skipped, worst))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = OracleCheckReport { cases: 0, skipped: 0, max_deviation: 0.0, worst_case: String::new() };
    for (c, s, (dev, desc)) in results {
        report.cases += c;
        report.skipped += s;
        if dev > report.max_deviation || report.worst_case.is_empty() {
            report.max_deviation = dev;
            report.worst_case = desc;
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QndRow {
    pub d: usize,
    pub magnitude: f64,
}

impl CsvRow for QndRow {
    fn header() -> &'static [&'static str] {
        &["d", "magnitude"]
    }

    fn fields(&self) -> Vec<String> {
        vec![self.d.to_string(), fmt_sig(self.magnitude)]
    }
}

/// `|⟨θ_0|[t̂(3.7), t̂(1.5)]|Ψ0⟩|` for `ξ² = √d`, `n0 = 0`.
pub fn qnd_decay(dims: &[usize], theta_cfg: &ThetaEvalConfig) -> Result<Vec<QndRow>> {
    dims.iter()
        .map(|&d| {
            let params = ClockParams::new(d, (d as f64).sqrt(), 0)?;
            let c = clock::qnd_commutator_element(&params, 1.5, 3.7, 0, TimeOperator::Linear, theta_cfg)?;
            Ok(QndRow { d, magnitude: c.norm() })
        })
        .collect()
}

/// Exponential fit `ln|c| ≈ a + rate·d`.
pub fn qnd_decay_fit(rows: &[QndRow]) -> Result<LineFit> {
    fit_line(&rows.iter().map(|r| (r.d as f64, r.magnitude.ln())).collect::<Vec<_>>())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillatorRow {
    pub tau: f64,
    pub center: usize,
    pub best_sigma_sq: f64,
    pub min_variance: f64,
    pub floor: f64,
}

impl CsvRow for OscillatorRow {
    fn header() -> &'static [&'static str] {
        &["tau", "center", "best_sigma_sq", "min_variance", "floor"]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            fmt_sig(self.tau),
            self.center.to_string(),
            fmt_sig(self.best_sigma_sq),
            fmt_sig(self.min_variance),
            fmt_sig(self.floor),
        ]
    }
}

/// `points` log-spaced values on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points < 2 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points).map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp()).collect()
}

/// Minimum of the estimator variance over a uniform-σ² grid, per `τ`, in the vacuum.
pub fn oscillator_scan(taus: &[f64]) -> Result<Vec<OscillatorRow>> {
    taus.par_iter()
        .map(|&tau| {
            let center = oscillator::default_center(tau);
            let spec = ForceEstimatorSpec::new(tau, center, |_| 0.0)?;
            // σ² ∝ 1/τ is where the optimum sits; scan two decades around it.
            let grid = log_grid(0.01 / tau, 100.0 / tau, 801);
            let (best_sigma_sq, min_variance) = oscillator::min_variance_over_sigma(&spec, &grid, &VACUUM)?;
            Ok(OscillatorRow { tau, center, best_sigma_sq, min_variance, floor: oscillator::backaction_floor(tau) })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveformRow {
    pub d: usize,
    pub sigma_m_sq: f64,
    pub spacing: f64,
    pub trials: usize,
    pub mean_error: f64,
    pub error_stdev: f64,
    pub signal_stdev: f64,
}

impl CsvRow for WaveformRow {
    fn header() -> &'static [&'static str] {
        &["d", "sigma_m_sq", "spacing", "trials", "mean_error", "error_stdev", "signal_stdev"]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.d.to_string(),
            fmt_sig(self.sigma_m_sq),
            fmt_sig(self.spacing),
            self.trials.to_string(),
            fmt_sig(self.mean_error),
            fmt_sig(self.error_stdev),
            fmt_sig(self.signal_stdev),
        ]
    }
}

/// Waveform estimation across `d` with `σ_m² = c d^β`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveformSweepConfig {
    pub d_grid: Vec<usize>,
    pub sigma_m_exponent: f64,
    pub sigma_m_const: f64,
    pub xi_sq: f64,
    pub noise_sigma: f64,
    pub gamma: f64,
    pub n_measurements: usize,
    pub trials: usize,
    pub seed: u64,
}

impl Default for WaveformSweepConfig {
    fn default() -> Self {
        Self {
            d_grid: default_d_grid(),
            sigma_m_exponent: -0.4,
            sigma_m_const: 1.0,
            xi_sq: 1.0,
            noise_sigma: 0.1,
            gamma: 0.5,
            n_measurements: 16,
            trials: 400,
            seed: 0,
        }
    }
}

pub fn waveform_sweep(cfg: &WaveformSweepConfig, theta_cfg: &ThetaEvalConfig) -> Result<Vec<WaveformRow>> {
    cfg.d_grid
        .iter()
        .map(|&d| {
            let sigma_m_sq = cfg.sigma_m_const * (d as f64).powf(cfg.sigma_m_exponent);
            let wcfg = WaveformExperimentConfig {
                noise_sigma: cfg.noise_sigma,
                gamma: cfg.gamma,
                clock: ClockParams::new(d, cfg.xi_sq, 0)?,
                meas: MeasurementParams::new(sigma_m_sq),
                n_measurements: cfg.n_measurements,
                seed: cfg.seed,
            };
            let exp = WaveformExperiment::new(wcfg, theta_cfg)?;
            let key = StreamKey::new(cfg.seed, experiment_id(&format!("waveform/{d}")), 0);
            let s = waveform::run_waveform_trials(&exp, cfg.trials, key)?;
            Ok(WaveformRow {
                d,
                sigma_m_sq,
                spacing: wcfg.spacing(),
                trials: cfg.trials,
                mean_error: s.mean_error,
                error_stdev: s.error_stdev,
                signal_stdev: s.signal_stdev,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeBasisRow {
    pub d: usize,
    pub delta: f64,
    pub queries: Vec<(i64, usize)>,
    pub chains: usize,
    pub analytic_re: f64,
    pub analytic_im: f64,
    pub empirical_re: f64,
    pub empirical_im: f64,
    pub stderr: f64,
}

impl CsvRow for TimeBasisRow {
    fn header() -> &'static [&'static str] {
        &["d", "delta", "queries", "chains", "analytic_re", "analytic_im", "empirical_re", "empirical_im", "stderr"]
    }

    fn fields(&self) -> Vec<String> {
        let q: Vec<String> = self.queries.iter().map(|(m, i)| format!("{m}@{i}")).collect();
        vec![
            self.d.to_string(),
            fmt_sig(self.delta),
            q.join(" "),
            self.chains.to_string(),
            fmt_sig(self.analytic_re),
            fmt_sig(self.analytic_im),
            fmt_sig(self.empirical_re),
            fmt_sig(self.empirical_im),
            fmt_sig(self.stderr),
        ]
    }
}

/// Sampled sharp-measurement chains against the closed form.
pub fn timebasis_compare(
    params: TimeBasisChainParams,
    queries: &[(i64, usize)],
    chains: usize,
    seed: u64,
) -> Result<TimeBasisRow> {
    let analytic = timebasis::analytic_moment(params.d, params.delta, params.k0, queries)?;
    let key = StreamKey::new(seed, experiment_id(&format!("timebasis/{}", params.d)), 0);
    let est = timebasis::empirical_moment(params, queries, chains, key)?;
    Ok(TimeBasisRow {
        d: params.d,
        delta: params.delta,
        queries: queries.to_vec(),
        chains,
        analytic_re: analytic.re,
        analytic_im: analytic.im,
        empirical_re: est.mean.re,
        empirical_im: est.mean.im,
        stderr: est.stderr(),
    })
}
