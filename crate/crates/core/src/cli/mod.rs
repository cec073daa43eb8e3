//! Command-line front end.
//!
//! Every command writes machine-readable outputs (CSV for matrices and
//! traces, JSON for reports) and embeds a [`RunManifest`] in each JSON file.
//! Exit codes: 0 success, 1 check or numerical failure, 2 usage or input
//! error. `HS_THREADS` caps the worker threads used for per-sample work.

mod manifest;

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

pub use manifest::{write_atomic, write_json, RunManifest};

use crate::bandwidth::{compute_bandwidth_with, BandwidthConfig, BandwidthRule, DEFAULT_VARIANCE_FLOOR};
use crate::datasets::{evaluate_transfer, load_csv_with, make_shift_pair, matrix_to_csv, to_csv_string, CsvOptions, EvalReport, ShiftSpec};
use crate::density::{Bandwidth, DomainTag, ProjectionMatrix, SampleSet};
use crate::divergence::{bandwidth_coupling_discrepancy, gradient, objective, objective_with, DivergenceOptions};
use crate::error::{Error, Result};
use crate::gradcheck::{central_difference, compare_with_step, GradCheckReport, DEFAULT_FD_STEP, DEFAULT_REL_FLOOR};
use crate::optimizer::{fit, random_orthonormal, FitConfig, FitReport, IterationRecord};
use crate::Matrix;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "hellinger-align", version, about = "Projected Hellinger subspace alignment")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled synthetic covariate-shift pair.
    Synth(SynthArgs),
    /// Fit an orthonormal projection aligning source and target.
    Fit(FitArgs),
    /// Check the analytic gradient against central differences.
    Gradcheck(GradcheckArgs),
    /// 1-NN transfer accuracy of a projection against baselines.
    Eval(EvalArgs),
    /// Project a CSV through a fitted projection.
    Transform(TransformArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GeneratorArgs {
    /// Ambient dimension.
    #[arg(long, default_value_t = 4)]
    pub d: usize,
    /// Samples per domain.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Number of class-informative dimensions.
    #[arg(long, default_value_t = 1)]
    pub informative: usize,
    /// Target shift along every nuisance dimension.
    #[arg(long, default_value_t = 0.0)]
    pub shift: f64,
    /// Target rotation (radians) in the first nuisance plane.
    #[arg(long, default_value_t = 0.0)]
    pub rotation: f64,
    /// Distance between class means along informative dimensions.
    #[arg(long, default_value_t = 4.0)]
    pub separation: f64,
}

impl GeneratorArgs {
    fn spec(&self, seed: u64) -> ShiftSpec {
        ShiftSpec {
            d: self.d,
            n_per_domain: self.n,
            informative_dims: self.informative,
            shift_magnitude: self.shift,
            rotation_angle: self.rotation,
            class_separation: self.separation,
            seed,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub generator: GeneratorArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct InputArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    /// Input CSVs carry integer labels in their last column.
    #[arg(long)]
    pub labels: bool,
    /// Skip the first line of every input CSV.
    #[arg(long)]
    pub header: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BandwidthArgs {
    #[arg(long = "bandwidth-rule", default_value = "normal-reference")]
    pub bandwidth_rule: String,
    #[arg(long = "bandwidth-floor", default_value_t = DEFAULT_VARIANCE_FLOOR)]
    pub bandwidth_floor: f64,
}

impl BandwidthArgs {
    fn config(&self) -> Result<BandwidthConfig> {
        Ok(BandwidthConfig {
            rule: self.bandwidth_rule.parse::<BandwidthRule>()?,
            floor: self.bandwidth_floor,
        })
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    /// Subspace dimension.
    #[arg(long, default_value_t = 1)]
    pub p: usize,
    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1.0)]
    pub initial_step: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub armijo_c: f64,
    #[arg(long, default_value_t = 0.5)]
    pub backtrack_factor: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub rel_tol: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub grad_tol: f64,
    #[arg(long, default_value_t = 1)]
    pub refresh_bandwidth_every: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub bandwidth: BandwidthArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for w.csv, trace.csv and report.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GradcheckArgs {
    #[arg(long, requires = "target", conflicts_with = "synth")]
    pub source: Option<PathBuf>,
    #[arg(long, requires = "source")]
    pub target: Option<PathBuf>,
    #[arg(long)]
    pub labels: bool,
    #[arg(long)]
    pub header: bool,
    /// Inline generator spec, e.g. `d=6,n=25,informative=1,shift=2`.
    #[arg(long, value_parser = parse_inline_spec)]
    pub synth: Option<InlineSpec>,
    #[arg(long, default_value_t = 2)]
    pub p: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_FD_STEP)]
    pub fd_step: f64,
    #[arg(long, default_value_t = DEFAULT_REL_FLOOR)]
    pub rel_floor: f64,
    /// Maximum accepted relative error.
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    /// Debug: add 1.0 to analytic gradient entry `row,col` before comparing.
    #[arg(long, value_parser = parse_entry)]
    pub corrupt_entry: Option<(usize, usize)>,
    /// Also measure the term omitted by freezing the bandwidth.
    #[arg(long)]
    pub coupling: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub bandwidth: BandwidthArgs,
    /// Report path; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    /// Labeled source CSV.
    #[arg(long)]
    pub source: PathBuf,
    /// Labeled target CSV.
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long)]
    pub w: PathBuf,
    #[arg(long)]
    pub header: bool,
    /// Seed for the PCA baseline's fallback initialization.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report path; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TransformArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub w: PathBuf,
    #[arg(long)]
    pub labels: bool,
    #[arg(long)]
    pub header: bool,
    #[arg(long)]
    pub out: PathBuf,
}

/// Generator parameters given inline to `gradcheck --synth`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InlineSpec {
    pub d: usize,
    pub n: usize,
    pub informative: usize,
    pub shift: f64,
    pub rotation: f64,
    pub separation: f64,
}

impl Default for InlineSpec {
    fn default() -> Self {
        Self {
            d: 6,
            n: 25,
            informative: 1,
            shift: 1.0,
            rotation: 0.3,
            separation: 2.0,
        }
    }
}

fn parse_inline_spec(s: &str) -> std::result::Result<InlineSpec, String> {
    let mut spec = InlineSpec::default();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, got '{part}'"))?;
        let bad = |_| format!("invalid value for {key}: '{value}'");
        match key.trim() {
            "d" => spec.d = value.parse().map_err(bad)?,
            "n" => spec.n = value.parse().map_err(bad)?,
            "informative" => spec.informative = value.parse().map_err(bad)?,
            "shift" => spec.shift = value.parse().map_err(|_| format!("invalid value for shift: '{value}'"))?,
            "rotation" => spec.rotation = value.parse().map_err(|_| format!("invalid value for rotation: '{value}'"))?,
            "separation" => {
                spec.separation = value.parse().map_err(|_| format!("invalid value for separation: '{value}'"))?
            }
            other => return Err(format!("unknown generator key '{other}'")),
        }
    }
    Ok(spec)
}

fn parse_entry(s: &str) -> std::result::Result<(usize, usize), String> {
    let (r, c) = s.split_once(',').ok_or("expected row,col")?;
    let r = r.trim().parse().map_err(|_| format!("invalid row '{r}'"))?;
    let c = c.trim().parse().map_err(|_| format!("invalid column '{c}'"))?;
    Ok((r, c))
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return EXIT_USAGE;
    }
    let outcome = match cli.command {
        Command::Synth(a) => cmd_synth(&a).map(|_| EXIT_OK),
        Command::Fit(a) => cmd_fit(&a).map(|_| EXIT_OK),
        Command::Gradcheck(a) => cmd_gradcheck(&a),
        Command::Eval(a) => cmd_eval(&a).map(|_| EXIT_OK),
        Command::Transform(a) => cmd_transform(&a).map(|_| EXIT_OK),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                EXIT_USAGE
            } else {
                EXIT_CHECK_FAILED
            }
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("HS_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("HS_THREADS must be a positive integer, got '{raw}'")))?;
    if threads == 0 {
        return Err(Error::InvalidConfig("HS_THREADS must be at least 1".into()));
    }
    // a second call in the same process (tests) leaves the first pool in place
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

fn load_pair(input: &InputArgs, manifest: &mut RunManifest) -> Result<(SampleSet, SampleSet)> {
    let opts = CsvOptions {
        has_labels: input.labels,
        header: input.header,
    };
    let source = load_csv_with(&input.source, opts, DomainTag::Source)?;
    let target = load_csv_with(&input.target, opts, DomainTag::Target)?;
    if source.dim() != target.dim() {
        return Err(Error::mismatch("target feature count vs source", source.dim(), target.dim()));
    }
    manifest.record_input(&input.source)?;
    manifest.record_input(&input.target)?;
    Ok((source, target))
}

fn load_projection(path: &Path, header: bool) -> Result<ProjectionMatrix> {
    let set = load_csv_with(
        path,
        CsvOptions {
            has_labels: false,
            header,
        },
        DomainTag::Source,
    )?;
    ProjectionMatrix::new(set.data().clone())
}

fn matrix_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// `synth`: writes `source.csv`, `target.csv` and `manifest.json`.
pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let spec = args.generator.spec(args.seed);
    let (source, target) = make_shift_pair(&spec)?;
    manifest::create_dir(&args.out)?;
    write_atomic(&args.out.join("source.csv"), to_csv_string(&source).as_bytes())?;
    write_atomic(&args.out.join("target.csv"), to_csv_string(&target).as_bytes())?;
    let manifest = RunManifest::new("synth", args, args.seed)?;
    write_json(&args.out.join("manifest.json"), &manifest)
}

#[derive(Serialize)]
struct FitReportJson<'a> {
    converged_reason: &'static str,
    iterations_used: usize,
    initial_objective: f64,
    final_objective: f64,
    objective_trace: &'a [f64],
    grad_norm_trace: &'a [f64],
    final_w: Vec<Vec<f64>>,
    initial_w: Vec<Vec<f64>>,
    final_bandwidth: &'a [f64],
    final_orthonormality_error: f64,
    iterations: &'a [IterationRecord],
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    manifest: &'a RunManifest,
    report: T,
}

fn fit_config(args: &FitArgs) -> Result<FitConfig> {
    Ok(FitConfig {
        subspace_dim: args.p,
        max_iters: args.max_iters,
        initial_step: args.initial_step,
        armijo_c: args.armijo_c,
        backtrack_factor: args.backtrack_factor,
        rel_tol: args.rel_tol,
        grad_tol: args.grad_tol,
        seed: args.seed,
        refresh_bandwidth_every: args.refresh_bandwidth_every,
        bandwidth: args.bandwidth.config()?,
    })
}

fn trace_csv(report: &FitReport) -> String {
    let mut out = String::from("iteration,objective,grad_norm,step,objective_after,bandwidth_segment\n");
    for r in &report.records {
        let after = r.objective_after.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.iteration, r.objective, r.grad_norm, r.step, after, r.bandwidth_segment
        ));
    }
    out
}

/// `fit`: writes `w.csv`, `trace.csv` and `report.json`.
pub fn cmd_fit(args: &FitArgs) -> Result<FitReport> {
    let config = fit_config(args)?;
    let mut manifest = RunManifest::new("fit", args, args.seed)?;
    let (source, target) = load_pair(&args.input, &mut manifest)?;
    let report = fit(&source, &target, &config)?;

    manifest::create_dir(&args.out)?;
    write_atomic(&args.out.join("w.csv"), matrix_to_csv(report.final_w.as_matrix(), None).as_bytes())?;
    write_atomic(&args.out.join("trace.csv"), trace_csv(&report).as_bytes())?;
    let body = FitReportJson {
        converged_reason: report.converged_reason.as_str(),
        iterations_used: report.iterations_used,
        initial_objective: report.objective_trace.first().copied().unwrap_or(f64::NAN),
        final_objective: report.final_objective(),
        objective_trace: &report.objective_trace,
        grad_norm_trace: &report.grad_norm_trace,
        final_w: matrix_rows(report.final_w.as_matrix()),
        initial_w: matrix_rows(report.initial_w.as_matrix()),
        final_bandwidth: report.final_bandwidth.variances(),
        final_orthonormality_error: report.final_w.orthonormality_error(),
        iterations: &report.records,
    };
    write_json(
        &args.out.join("report.json"),
        &Report {
            manifest: &manifest,
            report: body,
        },
    )?;
    Ok(report)
}

#[derive(Serialize)]
struct CouplingJson {
    max_abs_discrepancy: f64,
    relative_discrepancy: f64,
    coupled_gradient: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct GradcheckJson {
    passed: bool,
    tolerance: f64,
    d: usize,
    p: usize,
    objective: f64,
    bandwidth: Vec<f64>,
    check: GradCheckReport,
    analytic_gradient: Vec<Vec<f64>>,
    numeric_gradient: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bandwidth_coupling: Option<CouplingJson>,
}

/// `gradcheck`: exit code 0 iff the relative error is within `--tol`.
pub fn cmd_gradcheck(args: &GradcheckArgs) -> Result<i32> {
    let mut manifest = RunManifest::new("gradcheck", args, args.seed)?;
    let (source, target) = match (&args.source, &args.target) {
        (Some(source), Some(target)) => load_pair(
            &InputArgs {
                source: source.clone(),
                target: target.clone(),
                labels: args.labels,
                header: args.header,
            },
            &mut manifest,
        )?,
        _ => {
            let inline = args.synth.clone().unwrap_or_default();
            let spec = GeneratorArgs {
                d: inline.d,
                n: inline.n,
                informative: inline.informative,
                shift: inline.shift,
                rotation: inline.rotation,
                separation: inline.separation,
            }
            .spec(args.seed);
            make_shift_pair(&spec)?
        }
    };
    let d = source.dim();
    if args.p == 0 || args.p > d {
        return Err(Error::InvalidConfig(format!("--p must be in 1..={d}, got {}", args.p)));
    }
    let bw_config = args.bandwidth.config()?;
    let w = random_orthonormal(d, args.p, args.seed)?;
    let bw: Bandwidth = compute_bandwidth_with(&source, &target, &w, &bw_config)?;
    let obj = objective(&source, &target, &w, &bw)?;

    let mut analytic = gradient(&source, &target, &w, &bw)?.into_inner();
    if let Some((r, c)) = args.corrupt_entry {
        if r >= analytic.nrows() || c >= analytic.ncols() {
            return Err(Error::InvalidInput(format!(
                "--corrupt-entry {r},{c} is outside the {}x{} gradient",
                analytic.nrows(),
                analytic.ncols()
            )));
        }
        analytic[(r, c)] += 1.0;
    }
    let numeric = central_difference(
        |m: &Matrix| {
            objective_with(&source, &target, m, &bw, DivergenceOptions::default()).map_or(f64::NAN, |o| o.d_hat)
        },
        w.as_matrix(),
        args.fd_step,
    )?;
    let check = compare_with_step(&analytic, &numeric, args.rel_floor, args.fd_step)?;
    let passed = check.passes(args.tol);

    let bandwidth_coupling = if args.coupling {
        let r = bandwidth_coupling_discrepancy(&source, &target, &w, &bw_config, args.fd_step)?;
        Some(CouplingJson {
            max_abs_discrepancy: r.max_abs_discrepancy,
            relative_discrepancy: r.relative_discrepancy,
            coupled_gradient: matrix_rows(&r.coupled_gradient),
        })
    } else {
        None
    };

    let body = GradcheckJson {
        passed,
        tolerance: args.tol,
        d,
        p: args.p,
        objective: obj.d_hat,
        bandwidth: bw.variances().to_vec(),
        check,
        analytic_gradient: matrix_rows(&analytic),
        numeric_gradient: matrix_rows(&numeric),
        bandwidth_coupling,
    };
    let report = Report {
        manifest: &manifest,
        report: body,
    };
    emit_json(args.out.as_deref(), &report)?;
    eprintln!(
        "gradcheck: max_rel_error {:e} at {:?} (tol {:e}) -> {}",
        report.report.check.max_rel_error,
        report.report.check.worst_entry,
        args.tol,
        if passed { "pass" } else { "FAIL" }
    );
    Ok(if passed { EXIT_OK } else { EXIT_CHECK_FAILED })
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    match out {
        Some(path) => write_json(path, value),
        None => {
            let text = serde_json::to_string_pretty(value)
                .map_err(|e| Error::Numerical(format!("cannot serialize report: {e}")))?;
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}").map_err(|source| Error::Io {
                path: PathBuf::from("<stdout>"),
                source,
            })
        }
    }
}

/// `eval`: adapted, unadapted and PCA-baseline 1-NN transfer accuracies.
pub fn cmd_eval(args: &EvalArgs) -> Result<EvalReport> {
    let mut manifest = RunManifest::new("eval", args, args.seed)?;
    let input = InputArgs {
        source: args.source.clone(),
        target: args.target.clone(),
        labels: true,
        header: args.header,
    };
    let (source, target) = load_pair(&input, &mut manifest)?;
    let w = load_projection(&args.w, false)?;
    manifest.record_input(&args.w)?;
    if w.dim() != source.dim() {
        return Err(Error::mismatch("projection rows vs sample dimension", source.dim(), w.dim()));
    }
    let report = evaluate_transfer(&source, &target, &w, args.seed)?;
    emit_json(
        args.out.as_deref(),
        &Report {
            manifest: &manifest,
            report: &report,
        },
    )?;
    Ok(report)
}

/// `transform`: writes the projected samples (labels kept as last column).
pub fn cmd_transform(args: &TransformArgs) -> Result<()> {
    let set = load_csv_with(
        &args.input,
        CsvOptions {
            has_labels: args.labels,
            header: args.header,
        },
        DomainTag::Source,
    )?;
    let w = load_projection(&args.w, false)?;
    let projected = w.project(&set)?;
    write_atomic(&args.out, matrix_to_csv(&projected, set.labels()).as_bytes())
}
