//! Command-line front end: single quantization runs, parameter sweeps, and
//! the invariant check suite.
//!
//! Exit codes: 0 success, 2 usage/config error, 3 numerical abort.

use clap::{Args, Parser, Subcommand};
use mmdquant::distributions::TargetDistribution;
use mmdquant::experiment::{
    self, cmd_quantize, cmd_sweep, fmt17, ExperimentConfig, Method, SweepSpec,
};
use mmdquant::kernel::KernelSpec;
use mmdquant::sgd::{CostVariant, SgdConfig};
use mmdquant::{Error, Result};
use std::collections::HashMap;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "mmdquant",
    about = "Quantize probability measures by weighted support points minimizing MMD"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one quantization and write report.json, CSV tables, and SVG plots
    Quantize(QuantizeArgs),
    /// Run a (target, ell, nu) grid and write sweep.csv plus per-cell reports
    Sweep(SweepArgs),
    /// Run the invariant suite and print pass/fail lines
    Check,
}

#[derive(Args)]
struct QuantizeArgs {
    /// Optional key=value config file; explicit flags override its entries
    #[arg(long)]
    config: Option<PathBuf>,
    /// Target family: normal, uniform, or exponential
    #[arg(long)]
    target: Option<String>,
    /// Normal mean
    #[arg(long)]
    mean: Option<f64>,
    /// Normal standard deviation
    #[arg(long)]
    std: Option<f64>,
    /// Uniform lower bound
    #[arg(long)]
    lo: Option<f64>,
    /// Uniform upper bound
    #[arg(long)]
    hi: Option<f64>,
    /// Exponential rate
    #[arg(long)]
    rate: Option<f64>,
    /// Kernel bandwidth
    #[arg(long)]
    ell: Option<f64>,
    /// Matern smoothness; "inf" selects the Gaussian kernel
    #[arg(long)]
    nu: Option<String>,
    /// Number of support points
    #[arg(long)]
    n: Option<usize>,
    /// Method: sgd, penalized, or closedform
    #[arg(long)]
    method: Option<String>,
    /// SGD iteration budget
    #[arg(long)]
    iters: Option<u64>,
    /// RNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// Cost variant for sgd: symmetric or asymmetric
    #[arg(long)]
    cost: Option<String>,
    /// Output directory (default: $MMDQUANT_OUTPUT_DIR or ./out)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Comma-separated target families
    #[arg(long, default_value = "normal,uniform,exponential")]
    targets: String,
    /// Comma-separated bandwidths
    #[arg(long, default_value = "0.1,0.5")]
    ells: String,
    /// Comma-separated smoothness values; "inf" selects Gaussian
    #[arg(long, default_value = "0.5,2.5,inf")]
    nus: String,
    /// Number of support points
    #[arg(long, default_value_t = 5)]
    n: usize,
    /// Method: sgd, penalized, or closedform
    #[arg(long, default_value = "sgd")]
    method: String,
    /// SGD iteration budget per cell
    #[arg(long, default_value_t = 10_000)]
    iters: u64,
    /// RNG seed; per-cell seeds are derived from it
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (default: $MMDQUANT_OUTPUT_DIR or ./out)
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Quantize(args) => run_quantize(args),
        Command::Sweep(args) => run_sweep(args),
        Command::Check => {
            let mut stdout = std::io::stdout();
            return if experiment::run_checks(&mut stdout) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::InvalidParameter(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("numerical error: {e}");
            ExitCode::from(3)
        }
    }
}

fn default_out_dir() -> PathBuf {
    std::env::var_os(experiment::OUTPUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// Plain key=value lines; '#' starts a comment, blank lines ignored.
fn read_config_file(path: &PathBuf) -> Result<HashMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidParameter(format!("cannot read config file: {e}")))?;
    let mut map = HashMap::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidParameter(format!("bad config line: {line}")))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn parse_from<T: std::str::FromStr>(map: &HashMap<String, String>, key: &str) -> Result<Option<T>> {
    match map.get(key) {
        None => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|_| Error::InvalidParameter(format!("bad config value {key}={v}"))),
    }
}

fn parse_nu(s: &str) -> Result<f64> {
    if s == "inf" || s == "infinity" {
        Ok(f64::INFINITY)
    } else {
        s.parse()
            .map_err(|_| Error::InvalidParameter(format!("bad smoothness value: {s}")))
    }
}

fn build_target(
    family: &str,
    mean: f64,
    std: f64,
    lo: f64,
    hi: f64,
    rate: f64,
) -> Result<TargetDistribution> {
    match family {
        "normal" => TargetDistribution::normal(mean, std),
        "uniform" => TargetDistribution::uniform(lo, hi),
        "exponential" => TargetDistribution::exponential(rate),
        other => Err(Error::InvalidParameter(format!(
            "unknown target '{other}' (expected normal, uniform, or exponential)"
        ))),
    }
}

fn run_quantize(args: QuantizeArgs) -> Result<()> {
    let file = match &args.config {
        Some(path) => read_config_file(path)?,
        None => HashMap::new(),
    };
    // flags override file entries, file entries override defaults
    let target_family = args
        .target
        .or_else(|| file.get("target").cloned())
        .unwrap_or_else(|| "normal".to_string());
    let mean = args.mean.or(parse_from(&file, "mean")?).unwrap_or(0.0);
    let std = args.std.or(parse_from(&file, "std")?).unwrap_or(1.0);
    let lo = args.lo.or(parse_from(&file, "lo")?).unwrap_or(0.0);
    let hi = args.hi.or(parse_from(&file, "hi")?).unwrap_or(1.0);
    let rate = args.rate.or(parse_from(&file, "rate")?).unwrap_or(1.0);
    let ell = args.ell.or(parse_from(&file, "ell")?).unwrap_or(0.5);
    let nu_text = args
        .nu
        .or_else(|| file.get("nu").cloned())
        .unwrap_or_else(|| "inf".to_string());
    let n = args.n.or(parse_from(&file, "n")?).unwrap_or(5);
    let method_text = args
        .method
        .or_else(|| file.get("method").cloned())
        .unwrap_or_else(|| "sgd".to_string());
    let iters = args.iters.or(parse_from(&file, "iters")?).unwrap_or(10_000);
    let seed = args.seed.or(parse_from(&file, "seed")?).unwrap_or(0);
    let cost_text = args
        .cost
        .or_else(|| file.get("cost").cloned())
        .unwrap_or_else(|| "symmetric".to_string());
    let out = args
        .out
        .or_else(|| file.get("out").map(PathBuf::from))
        .unwrap_or_else(default_out_dir);

    let target = build_target(&target_family, mean, std, lo, hi, rate)?;
    let nu = parse_nu(&nu_text)?;
    let kernel = if nu.is_infinite() {
        KernelSpec::gaussian(ell)?
    } else {
        KernelSpec::matern(ell, nu)?
    };
    let method: Method = method_text.parse()?;
    let mut sgd = SgdConfig::new(n, iters, seed);
    sgd.cost_variant = match cost_text.as_str() {
        "symmetric" => CostVariant::Symmetric,
        "asymmetric" => CostVariant::Asymmetric,
        other => {
            return Err(Error::InvalidParameter(format!(
                "unknown cost variant '{other}' (expected symmetric or asymmetric)"
            )))
        }
    };

    let cfg = ExperimentConfig {
        target,
        kernel,
        n_points: n,
        method,
        sgd,
        output_dir: out.clone(),
    };
    let report = cmd_quantize(&cfg)?;
    println!(
        "method={} n={} mmd={} ({}) negative_weights={} wall_time={:.3}s",
        report.method.as_str(),
        report.n_points,
        fmt17(report.mmd),
        if report.mmd_is_closed_form {
            "closed form"
        } else {
            "Monte Carlo"
        },
        report.negative_weight_count,
        report.wall_time_secs
    );
    println!("artifacts written to {}", out.display());
    Ok(())
}

fn run_sweep(args: SweepArgs) -> Result<()> {
    let out = args.out.unwrap_or_else(default_out_dir);
    let mut targets = Vec::new();
    for family in args.targets.split(',') {
        targets.push(build_target(family.trim(), 0.0, 1.0, 0.0, 1.0, 1.0)?);
    }
    let parse_f64_list = |s: &str, what: &str| -> Result<Vec<f64>> {
        s.split(',')
            .map(|v| {
                let v = v.trim();
                if what == "nu" {
                    parse_nu(v)
                } else {
                    v.parse()
                        .map_err(|_| Error::InvalidParameter(format!("bad {what} value: {v}")))
                }
            })
            .collect()
    };
    let spec = SweepSpec {
        targets,
        ells: parse_f64_list(&args.ells, "ell")?,
        nus: parse_f64_list(&args.nus, "nu")?,
        n_points: args.n,
        method: args.method.parse()?,
        seed: args.seed,
        sgd_iters: args.iters,
        output_dir: out.clone(),
    };
    let rows = cmd_sweep(&spec)?;
    let failures = rows.iter().filter(|r| r.status != "ok").count();
    println!(
        "sweep complete: {} cells, {} failed; sweep.csv written to {}",
        rows.len(),
        failures,
        out.display()
    );
    Ok(())
}
