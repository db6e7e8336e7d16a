//! Experiment layer behind the command-line interface: single quantization
//! runs, parameter sweeps over (target, ell, nu) grids, artifact emission
//! (JSON report, CSV tables, SVG plots), and a quick invariant suite.
//!
//! All CSV numbers are printed with 17 significant digits so that a reload
//! reproduces every double bit-for-bit, and every run is a pure function of
//! its config and seed: reruns produce byte-identical CSV files.

use crate::closedform::{self, NormalTargetSpec, WeightMode};
use crate::distributions::{derive_seed, TargetDistribution};
use crate::error::{Error, Result};
use crate::kernel::{self, KernelSpec};
use crate::linalg;
use crate::montecarlo;
use crate::sgd::{self, IterationTrace, SgdConfig};
use crate::weights::{self, Quantization, WeightKind};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "MMDQUANT_OUTPUT_DIR";

/// Draws used for Monte-Carlo embeddings and self-energies in reports.
const REPORT_MC_DRAWS: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    /// Stochastic gradient descent on points, sum-to-one weights at the end.
    SgdAlg1,
    /// Joint stochastic descent on points and penalized simplex weights.
    PenalizedJoint,
    /// Deterministic closed-form descent (normal target, Gaussian kernel).
    ClosedFormDeterministic,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::SgdAlg1 => "sgd",
            Method::PenalizedJoint => "penalized",
            Method::ClosedFormDeterministic => "closedform",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Method::SgdAlg1),
            "penalized" => Ok(Method::PenalizedJoint),
            "closedform" => Ok(Method::ClosedFormDeterministic),
            other => Err(Error::InvalidParameter(format!(
                "unknown method '{other}' (expected sgd, penalized, or closedform)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub target: TargetDistribution,
    pub kernel: KernelSpec,
    pub n_points: usize,
    pub method: Method,
    pub sgd: SgdConfig,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_points == 0 {
            return Err(Error::InvalidParameter("n_points must be >= 1".into()));
        }
        if self.sgd.n_points != self.n_points {
            return Err(Error::InvalidParameter(
                "sgd.n_points disagrees with n_points".into(),
            ));
        }
        if self.method == Method::ClosedFormDeterministic {
            let normal = matches!(self.target, TargetDistribution::Normal { .. });
            if !normal || !self.kernel.is_gaussian() {
                return Err(Error::InvalidParameter(
                    "closedform method requires a normal target and Gaussian kernel".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Full result of one quantization run, echoing its configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MmdReport {
    pub target: TargetDistribution,
    pub kernel: KernelSpec,
    pub n_points: usize,
    pub method: Method,
    pub seed: u64,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub weight_kind: WeightKind,
    /// MMD distance (square root of the MMD^2 estimate, clamped at zero).
    pub mmd: f64,
    /// True when `mmd` comes from the closed form rather than Monte Carlo.
    pub mmd_is_closed_form: bool,
    /// Negative weights in the sum-to-one solution at the final points,
    /// before any non-negativity handling.
    pub negative_weight_count: usize,
    pub iterations: u64,
    pub wall_time_secs: f64,
}

impl MmdReport {
    pub fn quantization(&self) -> Quantization {
        Quantization {
            points: self.points.clone(),
            weights: self.weights.clone(),
            kind: self.weight_kind,
        }
    }
}

/// 17 significant digits: lossless round-trip for any finite double.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn target_name(t: &TargetDistribution) -> &'static str {
    match t {
        TargetDistribution::Normal { .. } => "normal",
        TargetDistribution::Uniform { .. } => "uniform",
        TargetDistribution::Exponential { .. } => "exponential",
    }
}

fn nu_label(spec: &KernelSpec) -> String {
    if spec.is_gaussian() {
        "inf".to_string()
    } else {
        format!("{}", spec.smoothness_nu)
    }
}

fn quantile_init(target: &TargetDistribution, n: usize) -> Result<Vec<f64>> {
    (0..n)
        .map(|i| target.quantile((i as f64 + 0.5) / n as f64))
        .collect()
}

/// Run one quantization and write report.json, points.csv, trace.csv (SGD
/// methods), density.svg, and embeddings.svg into the output directory.
pub fn cmd_quantize(cfg: &ExperimentConfig) -> Result<MmdReport> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| Error::InvalidParameter(format!("cannot create output dir: {e}")))?;
    let start = std::time::Instant::now();

    let (quantization, trace, iterations, mmd_sq_running) = match cfg.method {
        Method::ClosedFormDeterministic => {
            let n = normal_spec(cfg)?;
            let r = closedform::deterministic_optimize(&n, cfg.n_points, WeightMode::SumToOne, None)?;
            (r.quantization, Vec::new(), r.iterations as u64, r.mmd_sq)
        }
        Method::SgdAlg1 => {
            let init = quantile_init(&cfg.target, cfg.n_points)?;
            let out = sgd::sgd_quantize(&cfg.kernel, &cfg.target, &cfg.sgd, &init)?;
            write_trace_csv(&cfg.output_dir.join("trace.csv"), &out.trace)?;
            (out.quantization, out.trace, out.state.iter, out.mmd_sq_estimate)
        }
        Method::PenalizedJoint => {
            let init = quantile_init(&cfg.target, cfg.n_points)?;
            let mu0 = vec![1.0 / cfg.n_points as f64; cfg.n_points];
            let out =
                sgd::sgd_quantize_penalized(&cfg.kernel, &cfg.target, &cfg.sgd, &init, &mu0)?;
            write_trace_csv(&cfg.output_dir.join("trace.csv"), &out.trace)?;
            (out.quantization, out.trace, out.state.iter, out.mmd_sq_estimate)
        }
    };
    let _ = trace; // trace already on disk; kept for symmetry of the match arms
    quantization.validate()?;

    let (mmd_sq, closed) = report_mmd_sq(cfg, &quantization, mmd_sq_running)?;
    let negative_weight_count = count_negative_sum_to_one(cfg, &quantization)?;

    let report = MmdReport {
        target: cfg.target,
        kernel: cfg.kernel,
        n_points: cfg.n_points,
        method: cfg.method,
        seed: cfg.sgd.seed,
        points: quantization.points.clone(),
        weights: quantization.weights.clone(),
        weight_kind: quantization.kind,
        mmd: mmd_sq.max(0.0).sqrt(),
        mmd_is_closed_form: closed,
        negative_weight_count,
        iterations,
        wall_time_secs: start.elapsed().as_secs_f64(),
    };

    write_report_json(&cfg.output_dir.join("report.json"), &report)?;
    write_points_csv(&cfg.output_dir.join("points.csv"), &quantization)?;
    write_density_svg(&cfg.output_dir.join("density.svg"), &cfg.target, &quantization)?;
    write_embeddings_svg(
        &cfg.output_dir.join("embeddings.svg"),
        &cfg.target,
        &cfg.kernel,
        &quantization,
    )?;
    Ok(report)
}

fn normal_spec(cfg: &ExperimentConfig) -> Result<NormalTargetSpec> {
    match cfg.target {
        TargetDistribution::Normal { mean, std } => {
            NormalTargetSpec::new(mean, std, cfg.kernel.bandwidth_ell)
        }
        _ => Err(Error::InvalidParameter("normal target required".into())),
    }
}

/// MMD^2 of the final quantization: closed form for normal target with
/// Gaussian kernel, else Monte-Carlo embedding and self-energy.
fn report_mmd_sq(
    cfg: &ExperimentConfig,
    q: &Quantization,
    running_estimate: f64,
) -> Result<(f64, bool)> {
    if matches!(cfg.target, TargetDistribution::Normal { .. }) && cfg.kernel.is_gaussian() {
        let n = normal_spec(cfg)?;
        let sys = linalg::build_system(&cfg.kernel, &q.points)?;
        let m: Vec<f64> = q.points.iter().map(|&x| n.embedding_at(x)).collect();
        return Ok((
            weights::mmd_sq_of_weights(&sys, &m, &q.weights, n.self_energy()),
            true,
        ));
    }
    if cfg.sgd.max_iters == 0 {
        // nothing sampled yet: estimate from scratch instead of reporting 0
        let (m, self_energy) = mc_embedding_and_self_energy(cfg, &q.points);
        let sys = linalg::build_system(&cfg.kernel, &q.points)?;
        return Ok((
            weights::mmd_sq_of_weights(&sys, &m, &q.weights, self_energy),
            false,
        ));
    }
    let _ = running_estimate;
    let (m, self_energy) = mc_embedding_and_self_energy(cfg, &q.points);
    let sys = linalg::build_system(&cfg.kernel, &q.points)?;
    Ok((
        weights::mmd_sq_of_weights(&sys, &m, &q.weights, self_energy),
        false,
    ))
}

fn mc_embedding_and_self_energy(cfg: &ExperimentConfig, points: &[f64]) -> (Vec<f64>, f64) {
    let emb_seed = derive_seed(cfg.sgd.seed, 0x00e1);
    let analytic: Option<Vec<f64>> = points
        .iter()
        .map(|&x| cfg.target.analytic_embedding(&cfg.kernel, x))
        .collect();
    let m = analytic.unwrap_or_else(|| {
        montecarlo::mc_embedding(&cfg.target, &cfg.kernel, points, REPORT_MC_DRAWS, emb_seed)
    });
    let se_seed = derive_seed(cfg.sgd.seed, 0x005e);
    let spec = cfg.kernel;
    let self_energy = montecarlo::mc_pair_mean(&cfg.target, REPORT_MC_DRAWS, se_seed, move |s| {
        kernel::eval(&spec, s.xi, s.xi_prime)
    })
    .mean;
    (m, self_energy)
}

/// Negative entries of the sum-to-one weights at the final points.
fn count_negative_sum_to_one(cfg: &ExperimentConfig, q: &Quantization) -> Result<usize> {
    if q.kind == WeightKind::SumToOne {
        return Ok(q.weights.iter().filter(|&&w| w < 0.0).count());
    }
    let sys = linalg::build_system(&cfg.kernel, &q.points)?;
    let analytic: Option<Vec<f64>> = q
        .points
        .iter()
        .map(|&x| cfg.target.analytic_embedding(&cfg.kernel, x))
        .collect();
    let m = analytic.unwrap_or_else(|| {
        montecarlo::mc_embedding(
            &cfg.target,
            &cfg.kernel,
            &q.points,
            REPORT_MC_DRAWS,
            derive_seed(cfg.sgd.seed, 0x00e1),
        )
    });
    let sto = weights::sum_to_one_weights(&sys, &m);
    Ok(sto.weights.iter().filter(|&&w| w < 0.0).count())
}

// ---------------------------------------------------------------- artifacts

fn io_err(e: std::io::Error) -> Error {
    Error::InvalidParameter(format!("io error: {e}"))
}

fn write_report_json(path: &Path, report: &MmdReport) -> Result<()> {
    let text = serde_json::to_string_pretty(report)
        .map_err(|e| Error::InvalidParameter(format!("json error: {e}")))?;
    std::fs::write(path, text + "\n").map_err(io_err)
}

pub fn read_report_json(path: &Path) -> Result<MmdReport> {
    let text = std::fs::read_to_string(path).map_err(io_err)?;
    let report: MmdReport = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidParameter(format!("json error: {e}")))?;
    report.quantization().validate()?;
    Ok(report)
}

pub fn write_points_csv(path: &Path, q: &Quantization) -> Result<()> {
    let mut out = String::from("index,x,p\n");
    for (i, (x, p)) in q.points.iter().zip(&q.weights).enumerate() {
        writeln!(out, "{i},{},{}", fmt17(*x), fmt17(*p)).expect("string write");
    }
    std::fs::write(path, out).map_err(io_err)
}

pub fn read_points_csv(path: &Path) -> Result<Vec<(usize, f64, f64)>> {
    let text = std::fs::read_to_string(path).map_err(io_err)?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 {
            if line != "index,x,p" {
                return Err(Error::InvalidParameter(format!(
                    "bad points.csv header: {line}"
                )));
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::InvalidParameter(format!("bad row: {line}")));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::InvalidParameter(format!("bad number: {s}")))
        };
        rows.push((
            fields[0]
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad index: {}", fields[0])))?,
            parse(fields[1])?,
            parse(fields[2])?,
        ));
    }
    Ok(rows)
}

fn write_trace_csv(path: &Path, trace: &IterationTrace) -> Result<()> {
    let n = trace.first().map_or(0, |p| p.points.len());
    let mut out = String::from("t,running_mmd_sq");
    for i in 0..n {
        write!(out, ",x_{i}").expect("string write");
    }
    out.push('\n');
    for row in trace {
        write!(out, "{},{}", row.t, fmt17(row.running_mmd_sq)).expect("string write");
        for x in &row.points {
            write!(out, ",{}", fmt17(*x)).expect("string write");
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(io_err)
}

// ------------------------------------------------------------------- sweeps

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub targets: Vec<TargetDistribution>,
    pub ells: Vec<f64>,
    /// Smoothness values; `f64::INFINITY` selects the Gaussian kernel.
    pub nus: Vec<f64>,
    pub n_points: usize,
    pub method: Method,
    pub seed: u64,
    pub sgd_iters: u64,
    pub output_dir: PathBuf,
}

impl SweepSpec {
    pub fn defaults(output_dir: PathBuf, seed: u64) -> Self {
        Self {
            targets: vec![
                TargetDistribution::normal(0.0, 1.0).expect("valid"),
                TargetDistribution::uniform(0.0, 1.0).expect("valid"),
                TargetDistribution::exponential(1.0).expect("valid"),
            ],
            ells: vec![0.1, 0.5],
            nus: vec![0.5, 2.5, f64::INFINITY],
            n_points: 5,
            method: Method::SgdAlg1,
            seed,
            sgd_iters: 10_000,
            output_dir,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub target: String,
    pub ell: f64,
    pub nu_label: String,
    pub n_points: usize,
    pub method: Method,
    pub mmd: Option<f64>,
    pub status: String,
}

/// Run every (target, ell, nu) cell, each into its own subdirectory, and
/// assemble sweep.csv in grid order with a single writer. Cell failures
/// land in the status column and do not stop the sweep.
pub fn cmd_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    if spec.targets.is_empty() || spec.ells.is_empty() || spec.nus.is_empty() {
        return Err(Error::InvalidParameter("empty sweep grid".into()));
    }
    if spec.n_points == 0 {
        return Err(Error::InvalidParameter("n_points must be >= 1".into()));
    }
    std::fs::create_dir_all(&spec.output_dir).map_err(io_err)?;

    let mut cells = Vec::new();
    for target in &spec.targets {
        for &ell in &spec.ells {
            for &nu in &spec.nus {
                cells.push((*target, ell, nu));
            }
        }
    }

    let run_cell = |(idx, &(target, ell, nu)): (usize, &(TargetDistribution, f64, f64))| {
        let kernel = if nu.is_infinite() {
            KernelSpec::gaussian(ell)
        } else {
            KernelSpec::matern(ell, nu)
        };
        let row_base = |kernel: &std::result::Result<KernelSpec, Error>| SweepRow {
            target: target_name(&target).to_string(),
            ell,
            nu_label: match kernel {
                Ok(k) => nu_label(k),
                Err(_) => format!("{nu}"),
            },
            n_points: spec.n_points,
            method: spec.method,
            mmd: None,
            status: String::new(),
        };
        let mut row = row_base(&kernel);
        let kernel = match kernel {
            Ok(k) => k,
            Err(e) => {
                row.status = sanitize_status(&e.to_string());
                return row;
            }
        };
        let cell_dir = spec.output_dir.join(format!(
            "cell_{}_ell{}_nu{}",
            target_name(&target),
            ell,
            nu_label(&kernel)
        ));
        let mut sgd_cfg = SgdConfig::new(
            spec.n_points,
            spec.sgd_iters,
            derive_seed(spec.seed, idx as u64),
        );
        sgd_cfg.stop_rel_tol = 0.0; // fixed-length runs keep sweeps comparable
        let cfg = ExperimentConfig {
            target,
            kernel,
            n_points: spec.n_points,
            method: spec.method,
            sgd: sgd_cfg,
            output_dir: cell_dir,
        };
        match cmd_quantize(&cfg) {
            Ok(report) => {
                row.mmd = Some(report.mmd);
                row.status = "ok".to_string();
            }
            Err(e) => row.status = sanitize_status(&e.to_string()),
        }
        row
    };

    #[cfg(feature = "parallel")]
    let rows: Vec<SweepRow> = {
        use rayon::prelude::*;
        cells.par_iter().enumerate().map(run_cell).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<SweepRow> = cells.iter().enumerate().map(run_cell).collect();

    write_sweep_csv(&spec.output_dir.join("sweep.csv"), &rows)?;
    Ok(rows)
}

/// Status strings share the CSV with commas banned and newlines collapsed.
fn sanitize_status(s: &str) -> String {
    s.replace([',', '\n', '\r'], ";")
}

fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut out = String::from("target,ell,nu,n,method,mmd,status\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.target,
            r.ell,
            r.nu_label,
            r.n_points,
            r.method.as_str(),
            r.mmd.map_or_else(|| "nan".to_string(), fmt17),
            r.status
        )
        .expect("string write");
    }
    std::fs::write(path, out).map_err(io_err)
}

// -------------------------------------------------------------------- plots

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 400.0;
const MARGIN: f64 = 40.0;

struct Frame {
    x_lo: f64,
    x_hi: f64,
    y_hi: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x_lo) / (self.x_hi - self.x_lo) * (SVG_W - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        SVG_H - MARGIN - y / self.y_hi * (SVG_H - 2.0 * MARGIN)
    }
}

fn svg_open(title: &str) -> String {
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
         <svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_W}\" height=\"{SVG_H}\" \
         viewBox=\"0 0 {SVG_W} {SVG_H}\">\n\
         <title>{title}</title>\n\
         <rect width=\"{SVG_W}\" height=\"{SVG_H}\" fill=\"white\"/>\n"
    )
}

fn svg_polyline(out: &mut String, frame: &Frame, xs: &[f64], ys: &[f64], color: &str) {
    out.push_str(&format!(
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\""
    ));
    for (x, y) in xs.iter().zip(ys) {
        write!(out, "{:.3},{:.3} ", frame.px(*x), frame.py(*y)).expect("string write");
    }
    out.push_str("\"/>\n");
}

fn svg_axes(out: &mut String) {
    write!(
        out,
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = MARGIN,
        b = SVG_H - MARGIN,
        r = SVG_W - MARGIN,
        t = MARGIN
    )
    .expect("string write");
}

fn plot_grid(lo: f64, hi: f64) -> Vec<f64> {
    const N: usize = 257;
    (0..N)
        .map(|i| lo + (hi - lo) * i as f64 / (N - 1) as f64)
        .collect()
}

/// Target density with the quantization's probability masses as stems.
fn write_density_svg(path: &Path, target: &TargetDistribution, q: &Quantization) -> Result<()> {
    let (lo, hi) = target.plot_range();
    let xs = plot_grid(lo, hi);
    let dens: Vec<f64> = xs.iter().map(|&x| target.density(x)).collect();
    let y_hi = dens
        .iter()
        .chain(q.weights.iter())
        .fold(1e-12_f64, |a, &b| a.max(b))
        * 1.05;
    let frame = Frame { x_lo: lo, x_hi: hi, y_hi };

    let mut out = svg_open("target density and quantization masses");
    svg_axes(&mut out);
    svg_polyline(&mut out, &frame, &xs, &dens, "#1f77b4");
    for (x, p) in q.points.iter().zip(&q.weights) {
        let px = frame.px(*x);
        let top = frame.py(p.max(0.0));
        let base = frame.py(0.0);
        write!(
            out,
            "<line x1=\"{px:.3}\" y1=\"{base:.3}\" x2=\"{px:.3}\" y2=\"{top:.3}\" \
             stroke=\"#d62728\" stroke-width=\"2\"/>\n\
             <circle cx=\"{px:.3}\" cy=\"{top:.3}\" r=\"3\" fill=\"#d62728\"/>\n"
        )
        .expect("string write");
    }
    out.push_str("</svg>\n");
    std::fs::write(path, out).map_err(io_err)
}

/// Target embedding and quantization embedding overlaid on one frame.
fn write_embeddings_svg(
    path: &Path,
    target: &TargetDistribution,
    spec: &KernelSpec,
    q: &Quantization,
) -> Result<()> {
    let (lo, hi) = target.plot_range();
    let xs = plot_grid(lo, hi);
    let target_emb: Vec<f64> = match xs
        .iter()
        .map(|&x| target.analytic_embedding(spec, x))
        .collect::<Option<Vec<f64>>>()
    {
        Some(v) => v,
        None => montecarlo::mc_embedding(target, spec, &xs, 100_000, 1),
    };
    let quant_emb: Vec<f64> = xs
        .iter()
        .map(|&x| {
            q.points
                .iter()
                .zip(&q.weights)
                .map(|(&xi, &p)| p * kernel::eval(spec, x, xi))
                .sum()
        })
        .collect();
    let y_hi = target_emb
        .iter()
        .chain(quant_emb.iter())
        .fold(1e-12_f64, |a, &b| a.max(b))
        * 1.05;
    let frame = Frame { x_lo: lo, x_hi: hi, y_hi };

    let mut out = svg_open("target and quantization kernel embeddings");
    svg_axes(&mut out);
    svg_polyline(&mut out, &frame, &xs, &target_emb, "#1f77b4");
    svg_polyline(&mut out, &frame, &xs, &quant_emb, "#d62728");
    out.push_str("</svg>\n");
    std::fs::write(path, out).map_err(io_err)
}

// -------------------------------------------------------------------- check

/// Fast invariant suite for the `check` subcommand; prints one pass/fail
/// line per invariant and returns overall success.
pub fn run_checks(out: &mut dyn std::io::Write) -> bool {
    let mut all_ok = true;
    let mut report = |name: &str, ok: bool, out: &mut dyn std::io::Write| {
        let _ = writeln!(out, "{} {name}", if ok { "PASS" } else { "FAIL" });
        all_ok &= ok;
    };

    // kernel normalization at a representative bandwidth per family
    for (spec, tol) in [
        (KernelSpec::gaussian(0.5), 1e-10),
        (KernelSpec::matern(0.5, 0.5), 1e-8),
        (KernelSpec::matern(0.5, 2.5), 1e-8),
    ] {
        let spec = spec.expect("valid spec");
        let err = kernel::unit_integral_check(&spec);
        report(
            &format!("kernel unit integral ({:?} nu={})", spec.family, nu_label(&spec)),
            err.abs() <= tol,
            out,
        );
    }

    // matern 1/2 equals the Laplace closed form
    {
        let spec = KernelSpec::matern(0.7, 0.5).expect("valid spec");
        let ok = (0..100).all(|i| {
            let d = i as f64 * 0.05;
            let closed = (-d / 0.7).exp() / (2.0 * 0.7);
            (kernel::eval(&spec, 0.0, d) - closed).abs() <= 1e-12
        });
        report("matern 1/2 matches Laplace closed form", ok, out);
    }

    // bordered weights sum to one
    {
        let spec = KernelSpec::gaussian(0.5).expect("valid spec");
        let pts = [-1.2, -0.3, 0.4, 1.7];
        let n = NormalTargetSpec::new(0.0, 1.0, 0.5).expect("valid spec");
        let sys = linalg::build_system(&spec, &pts).expect("pd system");
        let m: Vec<f64> = pts.iter().map(|&x| n.embedding_at(x)).collect();
        let q = weights::sum_to_one_weights(&sys, &m);
        let sum: f64 = q.weights.iter().sum();
        report("sum-to-one weights sum to 1", (sum - 1.0).abs() <= 1e-12, out);
    }

    // simplex projection feasibility and idempotence
    {
        let mu = [0.9, -0.4, 0.3, 0.7, -0.1];
        let p = weights::project_simplex(&mu);
        let feasible = p.iter().all(|&v| v >= 0.0)
            && (p.iter().sum::<f64>() - 1.0).abs() <= 1e-12;
        let idem = weights::project_simplex(&p) == p;
        report("simplex projection feasible and idempotent", feasible && idem, out);
    }

    // deterministic optimizer: symmetric points, unit mass
    {
        let n = NormalTargetSpec::new(0.0, 1.0, 0.5).expect("valid spec");
        let r = closedform::deterministic_optimize(&n, 5, WeightMode::SumToOne, None)
            .expect("optimize");
        let pts = &r.quantization.points;
        let symmetric = (0..5).all(|i| (pts[i] + pts[4 - i]).abs() <= 1e-4);
        let sum: f64 = r.quantization.weights.iter().sum();
        report(
            "closed-form optimum symmetric with unit mass",
            symmetric && (sum - 1.0).abs() <= 1e-10 && r.mmd >= 0.0,
            out,
        );
    }

    // sgd determinism
    {
        let spec = KernelSpec::gaussian(0.5).expect("valid spec");
        let target = TargetDistribution::normal(0.0, 1.0).expect("valid");
        let cfg = SgdConfig::new(2, 300, 42);
        let init = [-0.6, 0.6];
        let a = sgd::sgd_quantize(&spec, &target, &cfg, &init).expect("sgd");
        let b = sgd::sgd_quantize(&spec, &target, &cfg, &init).expect("sgd");
        let ok = a
            .quantization
            .points
            .iter()
            .zip(&b.quantization.points)
            .all(|(x, y)| x.to_bits() == y.to_bits());
        report("sgd runs are bitwise deterministic", ok, out);
    }

    all_ok
}
