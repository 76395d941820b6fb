use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fcov::asymptotics::{LimitFunctional, QuantileCache, DEFAULT_DRAWS, DEFAULT_RESOLUTION};
use fcov::parallel::with_threads;
use fcov::pipeline::{cmd_detect, cmd_preprocess, DetectRequest, InputFormat, Method, ReportFormat, EXIT_ERROR};
use fcov::simulation::{run_size_power, SimulationConfig};
use fcov::statistics::{DEFAULT_EPS1, DEFAULT_EPS2};
use fcov::{Alternative, FcovError};

#[derive(Parser)]
#[command(name = "fcov", version, about = "CUSUM tests for covariance changes in functional time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test one series of curves or volumes for a covariance change.
    Detect(DetectArgs),
    /// Run a size and power experiment and write the table as CSV.
    Simulate(SimulateArgs),
    /// Quantiles of the Brownian-bridge limit laws.
    CriticalValues(CriticalArgs),
    /// Remove a polynomial time trend from every voxel or grid point.
    Preprocess(PreprocessArgs),
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    input: PathBuf,
    /// Input format; guessed from the extension when omitted.
    #[arg(long)]
    format: Option<InputFormat>,
    #[arg(long, default_value = "wfunc")]
    method: Method,
    #[arg(long, default_value = "amoc")]
    alt: Alternative,
    /// Projection dimension of the multivariate methods on curves.
    #[arg(long, default_value_t = 8)]
    d: usize,
    /// Eigenfunctions per spatial axis of the multivariate methods on volumes.
    #[arg(long = "d-axis", default_value_t = 2)]
    d_axis: usize,
    /// Block length; defaults to round(n^(1/3)).
    #[arg(long = "K")]
    block: Option<usize>,
    /// Bootstrap replicates.
    #[arg(long = "B", default_value_t = 1000)]
    replicates: usize,
    #[arg(long, default_value_t = DEFAULT_EPS1)]
    eps1: f64,
    #[arg(long, default_value_t = DEFAULT_EPS2)]
    eps2: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = all cores). Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Write the report here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, default_value = "text")]
    report: ReportFormat,
    /// Number of component p-values to list.
    #[arg(long, default_value_t = 0)]
    top: usize,
    /// Cap on the tensor basis of the functional methods on volumes.
    #[arg(long = "max-basis", default_value_t = 10_000)]
    max_basis: usize,
    /// Order of the polynomial trend removed from volumes.
    #[arg(long = "detrend-order", default_value_t = 3)]
    detrend_order: usize,
    /// Skip detrending of volumes.
    #[arg(long = "no-detrend")]
    no_detrend: bool,
    /// Include the runtime in the report.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// File of key=value lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra key=value settings, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct CriticalArgs {
    /// Number of independent bridges.
    #[arg(long, default_value_t = 1)]
    dim: usize,
    #[arg(long, default_value = "sum-amoc")]
    functional: LimitFunctional,
    /// Comma-separated levels.
    #[arg(long, default_value = "0.1,0.05,0.025,0.01", value_delimiter = ',')]
    alpha: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_DRAWS)]
    draws: usize,
    #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
    resolution: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Quantile cache directory.
    #[arg(long = "cache-dir", env = "FCOV_CACHE_DIR")]
    cache_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    format: Option<InputFormat>,
    #[arg(long, default_value_t = 3)]
    order: usize,
}

fn emit(output: Option<&Path>, text: &str) -> Result<(), FcovError> {
    match output {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn detect(a: DetectArgs) -> Result<i32, FcovError> {
    let mut req = DetectRequest::new(&a.input);
    if let Some(f) = a.format {
        req.format = f;
    }
    let s = &mut req.settings;
    s.method = a.method;
    s.alternative = a.alt;
    s.d = a.d;
    s.block = a.block;
    s.replicates = a.replicates;
    s.eps1 = a.eps1;
    s.eps2 = a.eps2;
    s.seed = a.seed;
    req.d_axis = a.d_axis;
    req.alpha = a.alpha;
    req.top = a.top;
    req.max_basis = a.max_basis;
    req.detrend_order = (!a.no_detrend).then_some(a.detrend_order);
    req.timing = a.timing;
    let report = with_threads(a.threads, || cmd_detect(&req))?;
    if let Some(d) = &report.diagnostic {
        eprintln!("fcov: {d}");
    }
    emit(a.output.as_deref(), &report.render(a.report))?;
    Ok(report.exit_code())
}

fn simulate(a: SimulateArgs) -> Result<i32, FcovError> {
    let mut text = match &a.config {
        Some(p) => fs::read_to_string(p)?,
        None => String::new(),
    };
    for kv in &a.set {
        if !kv.contains('=') {
            return Err(FcovError::InvalidInput(format!("expected KEY=VALUE, got '{kv}'")));
        }
        text.push('\n');
        text.push_str(kv);
    }
    let mut cfg = SimulationConfig::from_kv_str(&text)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let start = std::time::Instant::now();
    let mut table = with_threads(a.threads, || run_size_power(&cfg))?;
    if a.timing {
        table.runtime_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    }
    emit(a.output.as_deref(), &table.to_csv())?;
    Ok(0)
}

fn critical_values(a: CriticalArgs) -> Result<i32, FcovError> {
    let dir = a.cache_dir.unwrap_or_else(QuantileCache::default_dir);
    let mut cache = QuantileCache::open(&dir)?;
    let (q, hit) =
        with_threads(a.threads, || cache.quantiles(a.dim, a.functional, &a.alpha, a.draws, a.resolution, a.seed))?;
    eprintln!("fcov: {} {}", if hit { "read from" } else { "cached in" }, cache.path().display());
    let mut out = String::from("dim,functional,alpha,quantile,M,resolution,seed\n");
    for (alpha, q) in a.alpha.iter().zip(q) {
        out.push_str(&format!("{},{},{alpha},{q},{},{},{}\n", a.dim, a.functional, a.draws, a.resolution, a.seed));
    }
    emit(a.output.as_deref(), &out)?;
    Ok(0)
}

fn preprocess(a: PreprocessArgs) -> Result<i32, FcovError> {
    let format = a.format.unwrap_or_else(|| InputFormat::from_path(&a.input));
    cmd_preprocess(&a.input, &a.output, format, a.order)?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Detect(a) => detect(a),
        Command::Simulate(a) => simulate(a),
        Command::CriticalValues(a) => critical_values(a),
        Command::Preprocess(a) => preprocess(a),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("fcov: {e}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
