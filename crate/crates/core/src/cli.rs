//! Command-line front end: `synth`, `approx`, `select`, `unmix` and `bench`.
//!
//! Exit codes: 0 success, 2 usage or flag error, 3 computation error,
//! 4 benchmark failure or failed `--expect-match` check.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::harness::{self, BenchConfig, Scale, Suite, SweepConfig};
use crate::io::{self, CubeMeta, MatrixFormat};
use crate::linalg::{spectral_norm, DenseMatrix, NORM_TOL};
use crate::lowrank::{bound_report, rand_subspace_approx, spa_rank_approx};
use crate::metrics::{approximation_error, estimate_abundances, recovery_rate, spectral_angle_distance};
use crate::mvee::DEFAULT_EPS;
use crate::report::{ExperimentReport, Parameters, RunRecord, TOOLKIT_VERSION};
use crate::rng::GENERATOR;
use crate::select::{run_selector, Method, SelectOptions, SelectorResult, DEFAULT_BOUNDARY_TOL, DEFAULT_Q};
use crate::spa::IndexSet;
use crate::synth::{generate_instance, SyntheticInstance};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_COMPUTE: i32 = 3;
pub const EXIT_CHECK: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "sepnmf", version, about = "Separable NMF: SPA, preconditioned SPA and SPA-seeded low-rank approximation")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalOpts {
    /// Base seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for batch runs.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub jobs: u64,
    /// Matrix output format.
    #[arg(long, global = true, value_enum, default_value_t = MatrixFormat::Mtx)]
    pub format: MatrixFormat,
    /// MVEE feasibility tolerance.
    #[arg(long, global = true, default_value_t = DEFAULT_EPS)]
    pub eps: f64,
    /// Boundary tolerance `|pᵀLp − 1| ≤ tol` for erspa / merspa candidates.
    #[arg(long, global = true, default_value_t = DEFAULT_BOUNDARY_TOL)]
    pub tol: f64,
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a noisy separable instance A = F[I, H]Π + N.
    Synth(SynthArgs),
    /// Rank-k approximation and its error.
    Approx(ApproxArgs),
    /// Select k columns spanning the data's convex hull.
    Select(SelectArgs),
    /// Endmember extraction and abundance estimation on a bands × pixels cube.
    Unmix(UnmixArgs),
    /// Run benchmark suites.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of bands (rows).
    #[arg(short = 'd', long)]
    pub d: usize,
    /// Number of pixels (columns).
    #[arg(short = 'm', long)]
    pub m: usize,
    /// Number of generating columns.
    #[arg(short = 'k', long)]
    pub k: usize,
    /// Spectral norm of the noise.
    #[arg(long, default_value_t = 0.0)]
    pub delta: f64,
    /// Dirichlet parameters, comma separated (default: drawn per instance).
    #[arg(long, value_delimiter = ',')]
    pub alpha: Option<Vec<f64>>,
    /// Image height; with --width, writes a cube sidecar.
    #[arg(long, requires = "width")]
    pub height: Option<usize>,
    /// Image width; with --height, writes a cube sidecar.
    #[arg(long, requires = "height")]
    pub width: Option<usize>,
    /// Output directory.
    #[arg(short = 'o', long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ApproxMethod {
    /// Subspace iteration seeded by SPA-selected columns.
    Spa,
    /// Subspace iteration seeded by a Gaussian sketch.
    Rand,
    /// Truncated SVD.
    Svd,
}

impl ApproxMethod {
    fn name(self) -> &'static str {
        match self {
            ApproxMethod::Spa => "spa",
            ApproxMethod::Rand => "rand",
            ApproxMethod::Svd => "svd",
        }
    }
}

#[derive(Debug, Args)]
pub struct ApproxArgs {
    /// Input matrix (.mtx, .bin or .csv).
    pub matrix: PathBuf,
    /// Target rank.
    #[arg(short = 'k', long)]
    pub k: usize,
    /// Power count for the subspace iteration.
    #[arg(short = 'q', long, default_value_t = DEFAULT_Q)]
    pub q: usize,
    /// Approximation method.
    #[arg(long, value_enum, default_value_t = ApproxMethod::Spa)]
    pub method: ApproxMethod,
    /// Extra Gaussian columns for the randomized method.
    #[arg(long, default_value_t = 0)]
    pub oversample: usize,
    /// Attach the error-bound diagnostics (spa only).
    #[arg(long)]
    pub bounds: bool,
    /// Report JSON path.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Input matrix; omit in batch mode.
    #[arg(required_unless_present = "instances")]
    pub matrix: Option<PathBuf>,
    /// Number of columns to select.
    #[arg(short = 'k', long)]
    pub k: usize,
    /// Selector; batch mode runs every selector when omitted.
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Power count for mpspa / merspa.
    #[arg(short = 'q', long)]
    pub q: Option<usize>,
    /// Ground truth: an instance meta.json or a JSON array of 1-based indices.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Attach bound diagnostics (mpspa / merspa).
    #[arg(long)]
    pub bounds: bool,
    /// Report JSON path (stdout when omitted in single mode).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Batch mode: synthetic instances per noise level.
    #[arg(long, requires_all = ["d", "m", "out"])]
    pub instances: Option<usize>,
    /// Batch mode: bands per instance.
    #[arg(short = 'd', long)]
    pub d: Option<usize>,
    /// Batch mode: pixels per instance.
    #[arg(short = 'm', long)]
    pub m: Option<usize>,
    /// Batch mode noise levels as multiples of σ_min(F).
    #[arg(long, value_delimiter = ',', default_value = "0,0.5,1,1.5,2")]
    pub delta_scales: Vec<f64>,
    /// Batch mode q values for mpspa / merspa.
    #[arg(long, value_delimiter = ',', default_value = "1,2,5,10,15")]
    pub qs: Vec<usize>,
    /// Batch mode CSV output.
    #[arg(short = 'o', long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct UnmixArgs {
    /// Bands × pixels matrix; a sidecar with the same stem and `.json`
    /// extension supplies the image grid.
    pub matrix: PathBuf,
    /// Number of endmembers.
    #[arg(short = 'k', long)]
    pub k: usize,
    /// Endmember selector.
    #[arg(long, value_enum, default_value_t = Method::Pspa)]
    pub method: Method,
    /// Power count for mpspa / merspa.
    #[arg(short = 'q', long)]
    pub q: Option<usize>,
    /// Reference spectra, bands × entries.
    #[arg(long)]
    pub library: Option<PathBuf>,
    /// 1-based bands to remove, e.g. `1-4,76,101-111`.
    #[arg(long)]
    pub drop_bands: Option<String>,
    /// Require abundance rasters (fails without a grid in the sidecar).
    #[arg(long)]
    pub rasters: bool,
    /// Also run this selector and exit 4 unless both pick the same set.
    #[arg(long, value_enum)]
    pub expect_match: Option<Method>,
    /// Output directory.
    #[arg(short = 'o', long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Suite to run.
    #[arg(value_enum)]
    pub suite: Suite,
    /// Problem sizes.
    #[arg(long, value_enum, default_value_t = Scale::Desk)]
    pub scale: Scale,
    /// Override instances per cell.
    #[arg(long)]
    pub instances: Option<usize>,
    /// Output directory.
    #[arg(short = 'o', long)]
    pub out: PathBuf,
}

/// Failure carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        CliError { code: EXIT_USAGE, message: msg.into() }
    }

    fn check(msg: impl Into<String>) -> Self {
        CliError { code: EXIT_CHECK, message: msg.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError { code: EXIT_COMPUTE, message: e.to_string() }
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

/// Parses `args` and runs the command; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    init_logging(cli.global.verbose);
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

pub fn execute(cli: &Cli) -> CliResult {
    let g = &cli.global;
    if !(g.eps > 0.0 && g.eps.is_finite()) {
        return Err(CliError::usage(format!("--eps must be positive, got {}", g.eps)));
    }
    if !(g.tol >= 0.0 && g.tol.is_finite()) {
        return Err(CliError::usage(format!("--tol must be nonnegative, got {}", g.tol)));
    }
    match &cli.command {
        Command::Synth(a) => cmd_synth(g, a),
        Command::Approx(a) => cmd_approx(g, a),
        Command::Select(a) => cmd_select(g, a),
        Command::Unmix(a) => cmd_unmix(g, a),
        Command::Bench(a) => cmd_bench(g, a),
    }
}

/// Contents of `meta.json` written next to a synthetic matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub toolkit_version: String,
    pub generator: String,
    pub d: usize,
    pub m: usize,
    pub k: usize,
    pub delta: f64,
    pub seed: u64,
    pub dirichlet_alpha: Vec<f64>,
    /// 1-based columns of A holding the columns of F.
    pub true_indices: Vec<usize>,
    pub f: DenseMatrix,
    /// SHA-256 of H (k × (m−k)), row-major little-endian doubles.
    pub h_sha256: String,
    pub sigma_min_f: f64,
    pub kappa_f: f64,
    /// Upper bound on `σ_{k+1}(A)`: the noise norm, zero for exact data.
    pub sigma_k1_upper: f64,
    pub noise_threshold: f64,
    pub matrix_file: String,
}

/// Hex SHA-256 of a matrix's row-major little-endian bytes.
pub fn matrix_digest(a: &DenseMatrix) -> String {
    let mut h = Sha256::new();
    for x in a.to_row_major() {
        h.update(x.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn instance_meta(inst: &SyntheticInstance, matrix_file: &str) -> InstanceMeta {
    InstanceMeta {
        toolkit_version: TOOLKIT_VERSION.to_string(),
        generator: GENERATOR.to_string(),
        d: inst.a.rows(),
        m: inst.a.cols(),
        k: inst.k(),
        delta: inst.delta,
        seed: inst.seed,
        dirichlet_alpha: inst.dirichlet_alpha.clone(),
        true_indices: inst.true_indices.to_one_based(),
        f: inst.f.clone(),
        h_sha256: matrix_digest(&inst.h),
        sigma_min_f: inst.sigma_min_f(),
        kappa_f: inst.kappa_f(),
        sigma_k1_upper: inst.delta,
        noise_threshold: if inst.k() >= 2 { inst.noise_threshold() } else { 0.0 },
        matrix_file: matrix_file.to_string(),
    }
}

/// Reloads a `synth` output directory and checks it against a fresh
/// regeneration from the recorded seed: same A, same H digest, and F found at
/// the recorded columns when the data are noiseless.
pub fn verify_instance(dir: &Path) -> Result<(DenseMatrix, InstanceMeta)> {
    let meta: InstanceMeta = io::read_json(&dir.join("meta.json"))?;
    let a = io::read_matrix(&dir.join(&meta.matrix_file))?;
    let inst = generate_instance(meta.d, meta.m, meta.k, meta.delta, meta.seed, Some(&meta.dirichlet_alpha))?;
    let fail = |what: &str| Error::Invalid(format!("{}: {what} does not match regeneration", dir.display()));
    if inst.a != a {
        return Err(fail("A"));
    }
    if matrix_digest(&inst.h) != meta.h_sha256 {
        return Err(fail("H digest"));
    }
    if inst.f != meta.f || inst.true_indices.to_one_based() != meta.true_indices {
        return Err(fail("F or true indices"));
    }
    if meta.delta == 0.0 {
        let idx = IndexSet::from_one_based(&meta.true_indices)?;
        if idx.extract(&a) != meta.f || meta.sigma_k1_upper != 0.0 {
            return Err(fail("noiseless columns"));
        }
    }
    Ok((a, meta))
}

fn cmd_synth(g: &GlobalOpts, a: &SynthArgs) -> CliResult {
    if let (Some(h), Some(w)) = (a.height, a.width) {
        if h * w != a.m {
            return Err(CliError::usage(format!("--height {h} x --width {w} must equal -m {}", a.m)));
        }
    }
    let inst = generate_instance(a.d, a.m, a.k, a.delta, g.seed, a.alpha.as_deref()).map_err(|e| match e {
        Error::BadShape(_) | Error::Invalid(_) => CliError::usage(e.to_string()),
        other => other.into(),
    })?;
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let name = format!("A.{}", g.format.extension());
    io::write_matrix(&a.out.join(&name), &inst.a, g.format)?;
    io::write_json(&a.out.join("meta.json"), &instance_meta(&inst, &name))?;
    if let (Some(h), Some(w)) = (a.height, a.width) {
        let cube = CubeMeta { bands: a.d, height: Some(h), width: Some(w), wavelengths: None };
        io::write_json(&io::sidecar_path(&a.out.join(&name)), &cube)?;
    }
    println!(
        "wrote {} ({}x{}, k={}, delta={}, seed={}); true columns {:?}",
        a.out.join(&name).display(),
        a.d,
        a.m,
        a.k,
        inst.delta,
        g.seed,
        inst.true_indices.to_one_based()
    );
    Ok(())
}

fn check_rank_flag(a: &DenseMatrix, k: usize) -> CliResult {
    let max = a.rows().min(a.cols());
    if k == 0 || k > max {
        return Err(CliError::usage(format!("-k must be in 1..={max}, got {k}")));
    }
    Ok(())
}

/// Writes the report (if requested) and prints it to stdout when no path is
/// given.
fn emit_report(report: &ExperimentReport, path: Option<&Path>) -> CliResult {
    match path {
        Some(p) => report.save(p)?,
        None => println!("{}", serde_json::to_string_pretty(report).map_err(Error::from)?),
    }
    Ok(())
}

fn cmd_approx(g: &GlobalOpts, a: &ApproxArgs) -> CliResult {
    let mat = io::read_matrix(&a.matrix)?;
    check_rank_flag(&mat, a.k)?;
    if a.bounds && a.method != ApproxMethod::Spa {
        return Err(CliError::usage("--bounds applies to --method spa only"));
    }
    let (d, m) = mat.shape();
    let params = Parameters {
        d,
        m,
        k: a.k,
        q: (a.method != ApproxMethod::Svd).then_some(a.q),
        delta: None,
        eps: None,
        seed: g.seed,
        repetitions: 1,
    };
    let mut report = ExperimentReport::new("approx", a.method.name(), params);
    let outcome = approx_run(g, a, &mat, &mut report);
    if let Err(e) = &outcome {
        report.error = Some(e.to_string());
        report.records.push(RunRecord { seed: g.seed, error: Some(e.to_string()), ..Default::default() });
    }
    report.finalize();
    emit_report(&report, a.report.as_deref())?;
    outcome.map_err(CliError::from)
}

fn approx_run(g: &GlobalOpts, a: &ApproxArgs, mat: &DenseMatrix, report: &mut ExperimentReport) -> Result<()> {
    let a_norm = spectral_norm(mat, NORM_TOL)?;
    let rel = |abs: f64| if a_norm > 0.0 { abs / a_norm } else { 0.0 };
    let record = match a.method {
        ApproxMethod::Svd => {
            let (b, timing) = harness::svd_rank_approx(mat, a.k)?;
            let (abs, rel) = approximation_error(mat, &b)?;
            RunRecord { seed: g.seed, recovery_rate: None, abs_error: Some(abs), rel_error: Some(rel), timing, error: None }
        }
        method => {
            let r = if method == ApproxMethod::Spa {
                spa_rank_approx(mat, a.k, a.q)?
            } else {
                rand_subspace_approx(mat, a.k, a.q, a.oversample, g.seed)?
            };
            if let Some(rank) = r.collapsed_rank {
                report.notes.push(format!("basis collapsed to rank {rank} < k = {}", a.k));
            }
            if let Some(idx) = &r.seed_indices {
                report.indices = Some(idx.to_one_based());
            }
            if a.bounds {
                let b = bound_report(mat, &r)?;
                if b.singular_z1 {
                    report.notes.push("Z1 numerically singular; lemma bound not evaluated".into());
                }
                report.bound_fields = Some(b);
            }
            RunRecord {
                seed: g.seed,
                recovery_rate: None,
                abs_error: Some(r.error2),
                rel_error: Some(rel(r.error2)),
                timing: r.timing,
                error: None,
            }
        }
    };
    report.records.push(record);
    Ok(())
}

/// Reads 1-based truth indices from a meta.json or a bare JSON array.
pub fn read_truth(path: &Path) -> Result<IndexSet> {
    let v: serde_json::Value = io::read_json(path)?;
    let arr = v.get("true_indices").unwrap_or(&v);
    let idx: Vec<usize> = serde_json::from_value(arr.clone())
        .map_err(|e| Error::parse(path, format!("expected 1-based indices: {e}")))?;
    IndexSet::from_one_based(&idx)
}

fn select_options(g: &GlobalOpts, q: Option<usize>, bounds: bool) -> SelectOptions {
    SelectOptions { eps: g.eps, boundary_tol: g.tol, q, diagnostics: bounds }
}

fn selector_report(command: &str, g: &GlobalOpts, mat: &DenseMatrix, k: usize, res: &SelectorResult) -> ExperimentReport {
    let (d, m) = mat.shape();
    let params = Parameters {
        d,
        m,
        k,
        q: res.q,
        delta: None,
        eps: Some(g.eps),
        seed: g.seed,
        repetitions: 1,
    };
    let mut report = ExperimentReport::new(command, res.method.name(), params);
    report.indices = Some(res.indices.to_one_based());
    report.bound_fields = res.diagnostics.clone();
    report.notes = res.notes.clone();
    report
}

fn cmd_select(g: &GlobalOpts, a: &SelectArgs) -> CliResult {
    if let Some(n) = a.instances {
        return select_batch(g, a, n);
    }
    let path = a.matrix.as_ref().ok_or_else(|| CliError::usage("missing input matrix"))?;
    let mat = io::read_matrix(path)?;
    check_rank_flag(&mat, a.k)?;
    let method = a.method.ok_or_else(|| CliError::usage("--method is required outside batch mode"))?;
    let truth = a.truth.as_deref().map(read_truth).transpose()?;
    let res = match run_selector(method, &mat, a.k, &select_options(g, a.q, a.bounds)) {
        Ok(r) => r,
        Err(e) => {
            let (d, m) = mat.shape();
            let params = Parameters { d, m, k: a.k, q: a.q, delta: None, eps: Some(g.eps), seed: g.seed, repetitions: 1 };
            let mut report = ExperimentReport::new("select", method.name(), params);
            report.error = Some(e.to_string());
            report.records.push(RunRecord { seed: g.seed, error: Some(e.to_string()), ..Default::default() });
            report.finalize();
            emit_report(&report, a.report.as_deref())?;
            return Err(e.into());
        }
    };
    for n in &res.notes {
        eprintln!("note: {n}");
    }
    let mut report = selector_report("select", g, &mat, a.k, &res);
    let rate = truth.as_ref().map(|t| recovery_rate(&res.indices, t)).transpose()?;
    report.records.push(RunRecord {
        seed: g.seed,
        recovery_rate: rate,
        abs_error: None,
        rel_error: None,
        timing: res.timing.clone(),
        error: None,
    });
    report.finalize();
    emit_report(&report, a.report.as_deref())?;
    if a.report.is_some() {
        let rate = rate.map(|r| format!(", recovery {r}")).unwrap_or_default();
        println!("{}: columns {:?}{rate}", method, res.indices.to_one_based());
    }
    Ok(())
}

fn select_batch(g: &GlobalOpts, a: &SelectArgs, instances: usize) -> CliResult {
    let (d, m, out) = match (a.d, a.m, &a.out) {
        (Some(d), Some(m), Some(o)) => (d, m, o),
        _ => return Err(CliError::usage("batch mode needs -d, -m and -o")),
    };
    if instances == 0 || a.delta_scales.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(CliError::usage("batch mode needs --instances >= 1 and nonnegative noise scales"));
    }
    let methods: Vec<Method> = a.method.map(|m| vec![m]).unwrap_or_else(|| Method::ALL.to_vec());
    let qs: Vec<usize> = a.q.map(|q| vec![q]).unwrap_or_else(|| a.qs.clone());
    let mut keys = Vec::new();
    for method in methods {
        if method.uses_q() {
            keys.extend(qs.iter().map(|&q| (method, Some(q))));
        } else {
            keys.push((method, None));
        }
    }
    let cfg = SweepConfig { d, m, k: a.k, delta_scales: a.delta_scales.clone(), qs, instances };
    let bench = BenchConfig {
        scale: Scale::Desk,
        seed: g.seed,
        jobs: g.jobs as usize,
        eps: g.eps,
        boundary_tol: g.tol,
        instances: None,
    };
    let res = harness::run_recovery_sweep(&cfg, &bench, &keys).map_err(|e| match e {
        Error::BadShape(_) => CliError::usage(e.to_string()),
        other => other.into(),
    })?;
    io::write_atomic(out, res.csv()?.as_bytes())?;
    if let Some(r) = &a.report {
        io::write_json(r, &res)?;
    }
    print!("{}", res.summary());
    Ok(())
}

/// Spectral angles between selected endmembers (rows) and library entries
/// (columns), with each row's closest entry.
pub fn sad_table(endmembers: &DenseMatrix, library: &DenseMatrix) -> Result<(DenseMatrix, Vec<usize>)> {
    if endmembers.rows() != library.rows() {
        return Err(Error::DimensionMismatch(format!(
            "endmembers have {} bands, library {}",
            endmembers.rows(),
            library.rows()
        )));
    }
    let mut t = DenseMatrix::zeros(endmembers.cols(), library.cols());
    for i in 0..endmembers.cols() {
        for j in 0..library.cols() {
            t[(i, j)] = spectral_angle_distance(library.col(j), endmembers.col(i))?;
        }
    }
    let argmin = (0..t.rows())
        .map(|i| {
            let row = t.row(i);
            (0..row.len()).fold(0, |b, j| if row[j] < row[b] { j } else { b })
        })
        .collect();
    Ok((t, argmin))
}

/// SAD table as CSV: one row per endmember, one column per library entry and
/// a final 1-based `argmin` column marking the row minimum.
pub fn sad_csv(table: &DenseMatrix, argmin: &[usize]) -> String {
    let mut s = String::from("endmember");
    for j in 0..table.cols() {
        s.push_str(&format!(",lib{}", j + 1));
    }
    s.push_str(",argmin\n");
    for i in 0..table.rows() {
        s.push_str(&format!("{}", i + 1));
        for x in table.row(i) {
            s.push_str(&format!(",{x:e}"));
        }
        s.push_str(&format!(",{}\n", argmin[i] + 1));
    }
    s
}

fn cmd_unmix(g: &GlobalOpts, a: &UnmixArgs) -> CliResult {
    let mut mat = io::read_matrix(&a.matrix)?;
    let sidecar = io::sidecar_path(&a.matrix);
    let mut meta = if sidecar.exists() {
        let m: CubeMeta = io::read_json(&sidecar)?;
        m.validate(&mat)?;
        m
    } else {
        CubeMeta { bands: mat.rows(), ..Default::default() }
    };
    let original_bands = mat.rows();
    let mut library = a.library.as_deref().map(io::read_matrix).transpose()?;
    if let Some(list) = &a.drop_bands {
        let drop = io::parse_band_list(list).map_err(|e| CliError::usage(e.to_string()))?;
        mat = io::drop_bands(&mat, &mut meta, &drop).map_err(|e| CliError::usage(e.to_string()))?;
        if let Some(lib) = &library {
            if lib.rows() == original_bands {
                let mut lm = CubeMeta { bands: lib.rows(), ..Default::default() };
                library = Some(io::drop_bands(lib, &mut lm, &drop)?);
            }
        }
    }
    check_rank_flag(&mat, a.k)?;
    let grid = meta.grid();
    if a.rasters && grid.is_none() {
        return Err(Error::MissingShape.into());
    }
    let opts = select_options(g, a.q, false);
    let res = run_selector(a.method, &mat, a.k, &opts)?;
    for n in &res.notes {
        eprintln!("note: {n}");
    }
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let endmembers = res.indices.extract(&mat);
    io::write_matrix(&a.out.join("endmembers.csv"), &endmembers, MatrixFormat::Csv)?;
    let abund = estimate_abundances(&endmembers, &mat)?;
    let wname = format!("abundances.{}", g.format.extension());
    io::write_matrix(&a.out.join(&wname), &abund.w, g.format)?;
    if let Some(lib) = &library {
        let (table, argmin) = sad_table(&endmembers, lib)?;
        io::write_atomic(&a.out.join("sad.csv"), sad_csv(&table, &argmin).as_bytes())?;
    }
    if let Some((h, w)) = grid {
        for i in 0..a.k {
            let path = a.out.join(format!("abundance_{}.pgm", i + 1));
            io::write_pgm(&path, &abund.w.row(i), h, w)?;
        }
    }
    let mut report = selector_report("unmix", g, &mat, a.k, &res);
    report.records.push(RunRecord { seed: g.seed, timing: res.timing.clone(), ..Default::default() });
    let max_kkt = abund.kkt.iter().cloned().fold(0.0, f64::max);
    report.notes.push(format!("abundance max KKT residual {max_kkt:e}"));
    let mut check = Ok(());
    if let Some(other) = a.expect_match {
        let r2 = run_selector(other, &mat, a.k, &opts)?;
        let same = r2.indices.set_eq(&res.indices);
        report.notes.push(format!(
            "expect-match {other}: {:?} vs {:?} -> {}",
            r2.indices.to_one_based(),
            res.indices.to_one_based(),
            if same { "match" } else { "mismatch" }
        ));
        if !same {
            check = Err(CliError::check(format!("{} and {other} selected different columns", a.method)));
        }
    }
    report.finalize();
    report.save(&a.out.join("report.json"))?;
    println!("{}: endmember columns {:?}", a.method, res.indices.to_one_based());
    check
}

fn cmd_bench(g: &GlobalOpts, a: &BenchArgs) -> CliResult {
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let bench = BenchConfig {
        scale: a.scale,
        seed: g.seed,
        jobs: g.jobs as usize,
        eps: g.eps,
        boundary_tol: g.tol,
        instances: a.instances,
    };
    let mut summary = String::new();
    let mut ok_rows = 0;
    for suite in a.suite.expand() {
        log::info!("running {} at {:?} scale, base seed {}", suite.name(), a.scale, g.seed);
        match harness::run_suite(suite, &bench) {
            Ok(out) => {
                ok_rows += out.rows_ok;
                io::write_atomic(&a.out.join(format!("{}.csv", suite.name())), out.csv()?.as_bytes())?;
                io::write_json(&a.out.join(format!("{}.json", suite.name())), &out)?;
                summary.push_str(&out.summary());
            }
            Err(e) => summary.push_str(&format!("{}: failed: {e}\n", suite.name())),
        }
        summary.push('\n');
    }
    io::write_atomic(&a.out.join("summary.txt"), summary.as_bytes())?;
    print!("{summary}");
    if ok_rows == 0 {
        return Err(CliError::check("no benchmark row succeeded"));
    }
    Ok(())
}
