use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use qiclock::clock::{self, ClockParams};
use qiclock::correlations::{c3_monte_carlo, factors_exact, factors_with_c3, CorrelationQuery};
use qiclock::experiments::{self, convention_hash, log_grid, OracleGrid, SweepConfig, WaveformSweepConfig};
use qiclock::measurement::{run_chain, KrausSampler, MeasurementParams};
use qiclock::rng::{experiment_id, StreamKey};
use qiclock::timebasis::TimeBasisChainParams;
use qiclock::ThetaEvalConfig;

#[derive(Parser)]
#[command(name = "qiclock", about = "Measured quasi-ideal clock simulations")]
struct Cli {
    /// Master seed for every random stream (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON configuration for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Acceptance tolerance for checks that have one.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Figure-1 sweep of C1, C2, C3 over the dimension grid.
    Sweep(SweepArgs),
    /// Factorised moment for one set of queries, as JSON.
    Correlate(CorrelateArgs),
    /// One measurement trajectory as CSV.
    Chain(ChainArgs),
    /// Compare the factorisation with the density-matrix oracle; --config takes a grid.
    OracleCheck,
    /// Minimum force-estimator variance against the backaction floor.
    Oscillator(OscillatorArgs),
    /// Waveform-estimation error across dimensions.
    Waveform(WaveformArgs),
    /// Sharp-measurement chains against the closed-form moment, as JSON.
    Timebasis(TimebasisArgs),
    /// QND commutator magnitude against the dimension.
    QndDecay(QndArgs),
}

#[derive(Args)]
struct SweepArgs {
    /// `fig1-top` or `fig1-bottom`; ignored when --config is given.
    #[arg(long, default_value = "fig1-top")]
    preset: String,
    /// Use the transfer matrix for C3 instead of Monte Carlo.
    #[arg(long)]
    exact: bool,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    d_grid: Option<Vec<usize>>,
}

#[derive(Args)]
struct CorrelateArgs {
    #[arg(long, default_value_t = 101)]
    d: usize,
    /// ξ²; defaults to √d.
    #[arg(long)]
    xi_sq: Option<f64>,
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    n0: i64,
    #[arg(long, default_value_t = 1.0)]
    sigma_m_sq: f64,
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    delta: f64,
    /// Number of readings; defaults to the last query index.
    #[arg(long)]
    steps: Option<usize>,
    /// `m:I` pairs, repeatable.
    #[arg(long = "query", value_parser = parse_query, allow_hyphen_values = true)]
    queries: Vec<(i64, usize)>,
    /// Estimate C3 by Monte Carlo with this many walks.
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args)]
struct ChainArgs {
    #[arg(long, default_value_t = 101)]
    d: usize,
    #[arg(long)]
    xi_sq: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    sigma_m_sq: f64,
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    delta: f64,
    #[arg(long, default_value_t = 20)]
    steps: usize,
}

#[derive(Args)]
struct OscillatorArgs {
    #[arg(long, default_value_t = 0.02)]
    tau_min: f64,
    #[arg(long, default_value_t = 1.0)]
    tau_max: f64,
    #[arg(long, default_value_t = 12)]
    points: usize,
}

#[derive(Args)]
struct WaveformArgs {
    #[arg(long, value_delimiter = ',')]
    d_grid: Option<Vec<usize>>,
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args)]
struct TimebasisArgs {
    #[arg(long, default_value_t = 101)]
    d: usize,
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    delta: f64,
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    k0: i64,
    /// `m:I` pairs, repeatable; defaults to `1:5 -2:9`.
    #[arg(long = "query", value_parser = parse_query, allow_hyphen_values = true)]
    queries: Vec<(i64, usize)>,
    #[arg(long, default_value_t = 1_000_000)]
    chains: usize,
}

#[derive(Args)]
struct QndArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [11usize, 21, 41, 81, 161])]
    dims: Vec<usize>,
}

fn parse_query(s: &str) -> Result<(i64, usize), String> {
    let (m, i) = s.split_once(':').ok_or_else(|| format!("expected m:I, got {s}"))?;
    let m = m.trim().parse().map_err(|e| format!("bad weight in {s}: {e}"))?;
    let i = i.trim().parse().map_err(|e| format!("bad index in {s}: {e}"))?;
    Ok((m, i))
}

/// Errors caused by what the user asked for rather than by the numerics.
#[derive(Debug)]
struct BadInput(String);

impl std::fmt::Display for BadInput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for BadInput {}

fn bad(msg: impl Into<String>) -> anyhow::Error {
    BadInput(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<BadInput>().is_some() {
        return 2;
    }
    match err.downcast_ref::<qiclock::Error>() {
        Some(
            qiclock::Error::InvalidParam(_)
            | qiclock::Error::InvalidQuery(_)
            | qiclock::Error::IndexOutOfRange { .. }
            | qiclock::Error::DimensionTooLarge { .. }
            | qiclock::Error::Json(_),
        ) => 2,
        _ => 1,
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| bad(format!("bad config {}: {e}", path.display())))
}

struct Ctx {
    seed: Option<u64>,
    config: Option<PathBuf>,
    out: Option<PathBuf>,
    tol: Option<f64>,
    theta: ThetaEvalConfig,
}

impl Ctx {
    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn sink(&self, fallback: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
        match self.out.as_deref().or(fallback) {
            Some(p) => {
                let f = std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?;
                Ok(Box::new(std::io::BufWriter::new(f)))
            }
            None => Ok(Box::new(std::io::stdout().lock())),
        }
    }

    fn write_json<T: serde::Serialize>(&self, value: &T) -> anyhow::Result<()> {
        let mut w = self.sink(None)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }
}

fn default_width(d: usize, xi_sq: Option<f64>) -> f64 {
    xi_sq.unwrap_or((d as f64).sqrt())
}

fn sweep(ctx: &Ctx, a: SweepArgs) -> anyhow::Result<()> {
    let mut cfg = match &ctx.config {
        Some(p) => read_json::<SweepConfig>(p)?,
        None => SweepConfig::preset(&a.preset)
            .ok_or_else(|| bad(format!("unknown preset {}; use fig1-top or fig1-bottom", a.preset)))?,
    };
    if let Some(s) = ctx.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.samples {
        cfg.samples = n;
    }
    if let Some(g) = a.d_grid {
        cfg.d_grid = g;
    }
    cfg.exact_c3 |= a.exact;
    cfg.validate()?;
    let rows = experiments::run_figure1_sweep(&cfg, &ctx.theta)?;
    experiments::write_csv(&rows, ctx.sink(cfg.output_path.as_deref())?)?;
    Ok(())
}

fn correlate(ctx: &Ctx, a: CorrelateArgs) -> anyhow::Result<()> {
    let query = match &ctx.config {
        Some(p) => read_json::<CorrelationQuery>(p)?,
        None => {
            if a.queries.is_empty() {
                return Err(bad("give at least one --query m:I or a --config file"));
            }
            let last = a.queries.iter().map(|q| q.1).max().unwrap_or(0);
            CorrelationQuery {
                clock: ClockParams::new(a.d, default_width(a.d, a.xi_sq), a.n0)?,
                meas: MeasurementParams::new(a.sigma_m_sq),
                deltas: vec![a.delta; a.steps.unwrap_or(last)],
                queries: a.queries,
            }
        }
    };
    let breakdown = match a.samples {
        Some(n) => {
            let key = StreamKey::new(ctx.seed(), experiment_id("cli/correlate"), 0);
            let est = c3_monte_carlo(&query, n, key, &ctx.theta)?;
            factors_with_c3(&query, est.mean, &ctx.theta)?
        }
        None => factors_exact(&query, &ctx.theta)?,
    };
    ctx.write_json(&breakdown)
}

fn chain(ctx: &Ctx, a: ChainArgs) -> anyhow::Result<()> {
    let params = ClockParams::new(a.d, default_width(a.d, a.xi_sq), 0)?;
    let meas = MeasurementParams::new(a.sigma_m_sq);
    let sampler = KrausSampler::new(a.d, &meas, &ctx.theta)?;
    let state = clock::build_quasi_ideal_state(&params, &ctx.theta)?;
    let key = StreamKey::new(ctx.seed(), experiment_id("cli/chain"), 0);
    let rec = run_chain(&state, &vec![a.delta; a.steps], &sampler, &meas, key)?;
    rec.write_csv(ctx.sink(None)?)?;
    Ok(())
}

fn oracle_check(ctx: &Ctx) -> anyhow::Result<()> {
    let grid = match &ctx.config {
        Some(p) => read_json::<OracleGrid>(p)?,
        None => OracleGrid::default(),
    };
    let report = experiments::oracle_check(&grid, &ctx.theta)?;
    let tol = ctx.tol.unwrap_or(1e-8);
    ctx.write_json(&serde_json::json!({
        "cases": report.cases,
        "skipped": report.skipped,
        "max_deviation": report.max_deviation,
        "worst_case": report.worst_case,
        "tolerance": tol,
    }))?;
    if report.max_deviation > tol {
        return Err(anyhow!("max deviation {:e} exceeds tolerance {tol:e}", report.max_deviation));
    }
    Ok(())
}

fn oscillator(ctx: &Ctx, a: OscillatorArgs) -> anyhow::Result<()> {
    if !(a.tau_min > 0.0 && a.tau_max >= a.tau_min) {
        return Err(bad("need 0 < tau-min ≤ tau-max"));
    }
    let rows = experiments::oscillator_scan(&log_grid(a.tau_min, a.tau_max, a.points))?;
    experiments::write_csv(&rows, ctx.sink(None)?)?;
    Ok(())
}

fn waveform(ctx: &Ctx, a: WaveformArgs) -> anyhow::Result<()> {
    let mut cfg: WaveformSweepConfig = match &ctx.config {
        Some(p) => read_json(p)?,
        None => WaveformSweepConfig::default(),
    };
    if let Some(s) = ctx.seed {
        cfg.seed = s;
    }
    if let Some(g) = a.d_grid {
        cfg.d_grid = g;
    }
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    let rows = experiments::waveform_sweep(&cfg, &ctx.theta)?;
    experiments::write_csv(&rows, ctx.sink(None)?)?;
    Ok(())
}

fn timebasis(ctx: &Ctx, a: TimebasisArgs) -> anyhow::Result<()> {
    let params = TimeBasisChainParams::new(a.d, a.delta, a.k0)?;
    let queries = if a.queries.is_empty() { vec![(1, 5), (-2, 9)] } else { a.queries };
    let row = experiments::timebasis_compare(params, &queries, a.chains, ctx.seed())?;
    ctx.write_json(&row)
}

fn qnd_decay(ctx: &Ctx, a: QndArgs) -> anyhow::Result<()> {
    let rows = experiments::qnd_decay(&a.dims, &ctx.theta)?;
    experiments::write_csv(&rows, ctx.sink(None)?)?;
    if rows.len() >= 2 {
        let fit = experiments::qnd_decay_fit(&rows)?;
        eprintln!("exponential rate {:.6} per unit d, r² {:.4}", fit.slope, fit.r_squared);
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(bad("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    if cli.tol.is_some_and(|t| t.is_nan() || t <= 0.0) {
        return Err(bad("--tol must be positive"));
    }
    let ctx = Ctx { seed: cli.seed, config: cli.config, out: cli.out, tol: cli.tol, theta: ThetaEvalConfig::default() };
    match cli.command {
        Command::Sweep(a) => sweep(&ctx, a),
        Command::Correlate(a) => correlate(&ctx, a),
        Command::Chain(a) => chain(&ctx, a),
        Command::OracleCheck => oracle_check(&ctx),
        Command::Oscillator(a) => oscillator(&ctx, a),
        Command::Waveform(a) => waveform(&ctx, a),
        Command::Timebasis(a) => timebasis(&ctx, a),
        Command::QndDecay(a) => qnd_decay(&ctx, a),
    }
}

fn main() -> ExitCode {
    let version = format!("{} (conventions {})", env!("CARGO_PKG_VERSION"), convention_hash());
    let matches = Cli::command().version(version.leak() as &str).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
