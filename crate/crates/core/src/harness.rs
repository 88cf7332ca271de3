//! Seeded benchmark suites behind the approximation-error, recovery-rate and
//! timing comparisons.
//!
//! Every instance owns a seed derived from `(base seed, instance index)`, so
//! results do not depend on `--jobs` or scheduling. Noise levels are
//! calibrated per instance as `δ = t · σ_min(F)` over a grid of scales `t`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, svd_truncated, NORM_TOL};
use crate::lowrank::{rand_subspace_approx, spa_rank_approx, RankKApprox};
use crate::metrics::{approximation_error, recovery_rate};
use crate::report::{Aggregate, ExperimentReport, Parameters, RunRecord};
use crate::rng::derive_seed;
use crate::select::{run_selector, Method, SelectOptions};
use crate::synth::{generate_instance, SyntheticInstance};
use crate::timing::{Stage, Stopwatch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Fig1,
    Fig2,
    Tab2,
    All,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Fig1 => "fig1",
            Suite::Fig2 => "fig2",
            Suite::Tab2 => "tab2",
            Suite::All => "all",
        }
    }

    /// The concrete suites this selection expands to.
    pub fn expand(self) -> Vec<Suite> {
        match self {
            Suite::All => vec![Suite::Fig1, Suite::Fig2, Suite::Tab2],
            s => vec![s],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// Laptop-sized shapes.
    Desk,
    /// Seconds-long smoke runs.
    Tiny,
}

/// Shapes and grids for the error and recovery sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub d: usize,
    pub m: usize,
    pub k: usize,
    pub delta_scales: Vec<f64>,
    pub qs: Vec<usize>,
    pub instances: usize,
}

/// Shapes for the timing comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingConfig {
    pub shapes: Vec<(usize, usize)>,
    pub k: usize,
    pub q: usize,
    pub delta_scale: f64,
    pub instances: usize,
}

impl SweepConfig {
    pub fn for_scale(scale: Scale) -> Self {
        match scale {
            Scale::Desk => SweepConfig {
                d: 50,
                m: 2000,
                k: 10,
                delta_scales: (0..=20).map(|i| i as f64 / 10.0).collect(),
                qs: vec![1, 2, 5, 10, 15],
                instances: 20,
            },
            Scale::Tiny => SweepConfig {
                d: 12,
                m: 120,
                k: 3,
                delta_scales: vec![0.0, 0.5, 1.0],
                qs: vec![1, 2, 5, 10, 15],
                instances: 3,
            },
        }
    }
}

impl TimingConfig {
    pub fn for_scale(scale: Scale) -> Self {
        match scale {
            Scale::Desk => TimingConfig {
                shapes: vec![(50, 3000), (50, 5000), (100, 1000), (100, 20_000)],
                k: 10,
                q: 10,
                delta_scale: 1.0,
                instances: 5,
            },
            Scale::Tiny => TimingConfig {
                shapes: vec![(12, 200), (20, 150)],
                k: 3,
                q: 10,
                delta_scale: 1.0,
                instances: 2,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub scale: Scale,
    pub seed: u64,
    pub jobs: usize,
    pub eps: f64,
    pub boundary_tol: f64,
    /// Overrides the per-cell instance count.
    pub instances: Option<usize>,
}

/// One suite's results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteOutput {
    pub suite: Suite,
    pub scale: Scale,
    pub base_seed: u64,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Rows with at least one successful run.
    pub rows_ok: usize,
    pub rows_failed: usize,
    pub reports: Vec<ExperimentReport>,
}

impl SuiteOutput {
    pub fn csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Invalid(format!("csv: {e}"));
        w.write_record(&self.header).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Invalid(format!("csv: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::Invalid(e.to_string()))
    }

    /// Column `name` of every row.
    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let c = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[c].as_str()).collect())
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} ({:?} scale, base seed {}): {} rows ok, {} rows failed",
            self.suite.name(),
            self.scale,
            self.base_seed,
            self.rows_ok,
            self.rows_failed
        );
        let widths: Vec<usize> = (0..self.header.len())
            .map(|c| {
                self.rows
                    .iter()
                    .map(|r| r[c].len())
                    .chain([self.header[c].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |cells: &[String]| {
            let mut l: String = cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}  "))
                .collect();
            l.truncate(l.trim_end().len());
            l
        };
        let _ = writeln!(s, "{}", line(&self.header));
        for r in &self.rows {
            let _ = writeln!(s, "{}", line(r));
        }
        s
    }
}

/// Seed of instance `index` in a suite run from `base`.
pub fn instance_seed(base: u64, index: usize) -> u64 {
    derive_seed(base, index as u64)
}

/// Instance with `δ = t · σ_min(F)`. The basis does not depend on `δ`, so a
/// noiseless draw with the same seed supplies `σ_min(F)`.
pub fn calibrated_instance(d: usize, m: usize, k: usize, t: f64, seed: u64) -> Result<SyntheticInstance> {
    if t == 0.0 {
        return generate_instance(d, m, k, 0.0, seed, None);
    }
    let sigma = generate_instance(d, m, k, 0.0, seed, None)?.sigma_min_f();
    generate_instance(d, m, k, t * sigma, seed, None)
}

fn run_parallel<T: Send>(jobs: usize, n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Result<Vec<T>> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
    Ok(pool.install(|| (0..n).into_par_iter().map(f).collect()))
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:e}")).unwrap_or_default()
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    Aggregate::of(&v).map(|a| a.mean)
}

/// Wall time of an approximation run without the error evaluation stage.
fn compute_seconds(stages: &[Stage]) -> f64 {
    stages.iter().filter(|s| s.stage != "error").map(|s| s.seconds).sum()
}

fn error_record(seed: u64, e: &Error) -> RunRecord {
    RunRecord {
        seed,
        error: Some(e.to_string()),
        ..Default::default()
    }
}

fn approx_record(seed: u64, a_norm: f64, r: Result<RankKApprox>) -> RunRecord {
    match r {
        Ok(r) => RunRecord {
            seed,
            recovery_rate: None,
            abs_error: Some(r.error2),
            rel_error: Some(if a_norm > 0.0 { r.error2 / a_norm } else { 0.0 }),
            timing: r.timing,
            error: r.collapsed_rank.map(|rank| format!("basis collapsed to rank {rank}")),
        },
        Err(e) => error_record(seed, &e),
    }
}

struct Cell {
    scale_index: usize,
    method: String,
    q: Option<usize>,
    records: Vec<RunRecord>,
    deltas: Vec<f64>,
}

fn sweep_cells(
    cfg: &SweepConfig,
    bench: &BenchConfig,
    keys: &[(String, Option<usize>)],
    run: impl Fn(&SyntheticInstance, u64) -> Vec<RunRecord> + Sync + Send,
) -> Result<Vec<Cell>> {
    let n = bench.instances.unwrap_or(cfg.instances);
    let total = cfg.delta_scales.len() * n;
    let per_instance = run_parallel(bench.jobs, total, |idx| {
        let t = cfg.delta_scales[idx / n];
        let seed = instance_seed(bench.seed, idx);
        match calibrated_instance(cfg.d, cfg.m, cfg.k, t, seed) {
            Ok(inst) => {
                let recs = run(&inst, seed);
                debug_assert_eq!(recs.len(), keys.len());
                (inst.delta, recs)
            }
            Err(e) => (f64::NAN, keys.iter().map(|_| error_record(seed, &e)).collect()),
        }
    })?;
    let mut cells = Vec::new();
    for (si, _) in cfg.delta_scales.iter().enumerate() {
        let chunk = &per_instance[si * n..(si + 1) * n];
        for (ki, (method, q)) in keys.iter().enumerate() {
            cells.push(Cell {
                scale_index: si,
                method: method.clone(),
                q: *q,
                records: chunk.iter().map(|(_, r)| r[ki].clone()).collect(),
                deltas: chunk.iter().map(|(d, _)| *d).filter(|d| d.is_finite()).collect(),
            });
        }
    }
    Ok(cells)
}

fn cell_report(suite: &str, cfg: &SweepConfig, bench: &BenchConfig, cell: &Cell) -> ExperimentReport {
    let mut rep = ExperimentReport::new(
        suite,
        &cell.method,
        Parameters {
            d: cfg.d,
            m: cfg.m,
            k: cfg.k,
            q: cell.q,
            delta: mean(cell.deltas.iter().copied()),
            eps: Some(bench.eps),
            seed: bench.seed,
            repetitions: cell.records.len(),
        },
    );
    rep.records = cell.records.clone();
    rep.notes.push(format!("delta_scale = {}", cfg.delta_scales[cell.scale_index]));
    rep.finalize();
    rep
}

fn ok_records(records: &[RunRecord]) -> impl Iterator<Item = &RunRecord> {
    records.iter().filter(|r| r.error.is_none())
}

/// Mean approximation error of the SPA-seeded and Gaussian-seeded iterations
/// against the noise level, which bounds the best rank-k error from above.
pub fn run_fig1(cfg: &SweepConfig, bench: &BenchConfig) -> Result<SuiteOutput> {
    let mut keys = Vec::new();
    for method in ["spa", "rand"] {
        for &q in &cfg.qs {
            keys.push((method.to_string(), Some(q)));
        }
    }
    let k = cfg.k;
    let cells = sweep_cells(cfg, bench, &keys, |inst, seed| {
        let a_norm = spectral_norm(&inst.a, NORM_TOL).unwrap_or(0.0);
        keys.iter()
            .map(|(method, q)| {
                let q = q.unwrap();
                let r = if method == "spa" {
                    spa_rank_approx(&inst.a, k, q)
                } else {
                    rand_subspace_approx(&inst.a, k, q, 0, derive_seed(seed, q as u64 + 1))
                };
                approx_record(seed, a_norm, r)
            })
            .collect()
    })?;
    let header = ["delta", "q", "mean_abs_error", "best_error_upper", "method", "delta_scale", "instances", "failed"];
    let mut out = new_output(Suite::Fig1, bench, &header);
    for cell in &cells {
        let delta = mean(cell.deltas.iter().copied());
        let err = mean(ok_records(&cell.records).filter_map(|r| r.abs_error));
        push_row(
            &mut out,
            err.is_some(),
            vec![
                fmt_opt(delta),
                cell.q.unwrap().to_string(),
                fmt_opt(err),
                fmt_opt(delta),
                cell.method.clone(),
                cfg.delta_scales[cell.scale_index].to_string(),
                cell.records.len().to_string(),
                failures(&cell.records).to_string(),
            ],
        );
        out.reports.push(cell_report("fig1", cfg, bench, cell));
    }
    Ok(out)
}

/// Methods and q values compared in the recovery sweep.
pub fn fig2_keys(qs: &[usize]) -> Vec<(Method, Option<usize>)> {
    let mut keys = vec![(Method::Spa, None), (Method::Pspa, None), (Method::Erspa, None)];
    for method in [Method::Mpspa, Method::Merspa] {
        for &q in qs {
            keys.push((method, Some(q)));
        }
    }
    keys
}

/// Mean recovery rate of the selectors against the noise level.
pub fn run_fig2(cfg: &SweepConfig, bench: &BenchConfig) -> Result<SuiteOutput> {
    run_recovery_sweep(cfg, bench, &fig2_keys(&cfg.qs))
}

/// Recovery sweep over an arbitrary list of `(method, q)` pairs; one CSV row
/// per (noise level, method, q).
pub fn run_recovery_sweep(
    cfg: &SweepConfig,
    bench: &BenchConfig,
    methods: &[(Method, Option<usize>)],
) -> Result<SuiteOutput> {
    let keys: Vec<(String, Option<usize>)> = methods.iter().map(|(m, q)| (m.name().to_string(), *q)).collect();
    let k = cfg.k;
    let cells = sweep_cells(cfg, bench, &keys, |inst, seed| {
        methods
            .iter()
            .map(|&(method, q)| {
                let opts = SelectOptions {
                    eps: bench.eps,
                    boundary_tol: bench.boundary_tol,
                    q,
                    ..Default::default()
                };
                match run_selector(method, &inst.a, k, &opts)
                    .and_then(|r| Ok((recovery_rate(&r.indices, &inst.true_indices)?, r.timing)))
                {
                    Ok((rate, timing)) => RunRecord {
                        seed,
                        recovery_rate: Some(rate),
                        timing,
                        ..Default::default()
                    },
                    Err(e) => error_record(seed, &e),
                }
            })
            .collect()
    })?;
    let header = ["delta", "method", "q", "mean_recovery", "delta_scale", "instances", "failed"];
    let mut out = new_output(Suite::Fig2, bench, &header);
    for cell in &cells {
        let rate = mean(ok_records(&cell.records).filter_map(|r| r.recovery_rate));
        push_row(
            &mut out,
            rate.is_some(),
            vec![
                fmt_opt(mean(cell.deltas.iter().copied())),
                cell.method.clone(),
                cell.q.map(|q| q.to_string()).unwrap_or_default(),
                fmt_opt(rate),
                cfg.delta_scales[cell.scale_index].to_string(),
                cell.records.len().to_string(),
                failures(&cell.records).to_string(),
            ],
        );
        out.reports.push(cell_report("fig2", cfg, bench, cell));
    }
    Ok(out)
}

/// Top-k truncated SVD followed by `B = U Σ Vᵀ`, timed as one stage.
pub fn svd_rank_approx(a: &crate::DenseMatrix, k: usize) -> Result<(crate::DenseMatrix, Vec<Stage>)> {
    let mut sw = Stopwatch::new();
    let svd = svd_truncated(a, k)?;
    sw.lap("svd");
    let b = svd.reconstruct();
    sw.lap("projection");
    Ok((b, sw.finish()))
}

/// Wall time and error of the SPA-seeded, Gaussian-seeded and SVD rank-k
/// approximations. Error evaluation is excluded from the times.
pub fn run_tab2(cfg: &TimingConfig, bench: &BenchConfig) -> Result<SuiteOutput> {
    let n = bench.instances.unwrap_or(cfg.instances);
    let header = [
        "d", "m", "k", "delta", "method", "q", "mean_seconds", "mean_abs_error", "mean_rel_error", "instances", "failed",
    ];
    let mut out = new_output(Suite::Tab2, bench, &header);
    let methods = [("spa", Some(cfg.q)), ("rand", Some(cfg.q)), ("svd", None)];
    for (shape_index, &(d, m)) in cfg.shapes.iter().enumerate() {
        // Timing runs go one at a time so they do not compete for cores.
        let per_instance: Vec<(f64, Vec<RunRecord>)> = (0..n)
            .map(|i| {
                let seed = instance_seed(bench.seed, shape_index * n + i);
                match calibrated_instance(d, m, cfg.k, cfg.delta_scale, seed) {
                    Ok(inst) => (inst.delta, tab2_instance(&inst, cfg, seed, &methods)),
                    Err(e) => (f64::NAN, methods.iter().map(|_| error_record(seed, &e)).collect()),
                }
            })
            .collect();
        let deltas: Vec<f64> = per_instance.iter().map(|(d, _)| *d).filter(|d| d.is_finite()).collect();
        for (mi, &(method, q)) in methods.iter().enumerate() {
            let records: Vec<RunRecord> = per_instance.iter().map(|(_, r)| r[mi].clone()).collect();
            let ok: Vec<&RunRecord> = ok_records(&records).collect();
            let secs = mean(ok.iter().map(|r| compute_seconds(&r.timing)));
            push_row(
                &mut out,
                secs.is_some(),
                vec![
                    d.to_string(),
                    m.to_string(),
                    cfg.k.to_string(),
                    fmt_opt(mean(deltas.iter().copied())),
                    method.to_string(),
                    q.map(|q| q.to_string()).unwrap_or_default(),
                    fmt_opt(secs),
                    fmt_opt(mean(ok.iter().filter_map(|r| r.abs_error))),
                    fmt_opt(mean(ok.iter().filter_map(|r| r.rel_error))),
                    records.len().to_string(),
                    failures(&records).to_string(),
                ],
            );
            let mut rep = ExperimentReport::new(
                "tab2",
                method,
                Parameters {
                    d,
                    m,
                    k: cfg.k,
                    q,
                    delta: mean(deltas.iter().copied()),
                    eps: None,
                    seed: bench.seed,
                    repetitions: n,
                },
            );
            rep.records = records;
            rep.finalize();
            out.reports.push(rep);
        }
    }
    Ok(out)
}

fn tab2_instance(inst: &SyntheticInstance, cfg: &TimingConfig, seed: u64, methods: &[(&str, Option<usize>)]) -> Vec<RunRecord> {
    let a_norm = spectral_norm(&inst.a, NORM_TOL).unwrap_or(0.0);
    methods
        .iter()
        .map(|&(method, _)| match method {
            "spa" => approx_record(seed, a_norm, spa_rank_approx(&inst.a, cfg.k, cfg.q)),
            "rand" => approx_record(seed, a_norm, rand_subspace_approx(&inst.a, cfg.k, cfg.q, 0, derive_seed(seed, 1))),
            _ => match svd_rank_approx(&inst.a, cfg.k).and_then(|(b, t)| Ok((approximation_error(&inst.a, &b)?, t))) {
                Ok(((abs, rel), timing)) => RunRecord {
                    seed,
                    recovery_rate: None,
                    abs_error: Some(abs),
                    rel_error: Some(rel),
                    timing,
                    error: None,
                },
                Err(e) => error_record(seed, &e),
            },
        })
        .collect()
}

fn new_output(suite: Suite, bench: &BenchConfig, header: &[&str]) -> SuiteOutput {
    SuiteOutput {
        suite,
        scale: bench.scale,
        base_seed: bench.seed,
        header: header.iter().map(|s| s.to_string()).collect(),
        rows: Vec::new(),
        rows_ok: 0,
        rows_failed: 0,
        reports: Vec::new(),
    }
}

fn push_row(out: &mut SuiteOutput, ok: bool, row: Vec<String>) {
    if ok {
        out.rows_ok += 1;
    } else {
        out.rows_failed += 1;
    }
    out.rows.push(row);
}

fn failures(records: &[RunRecord]) -> usize {
    records.iter().filter(|r| r.error.is_some()).count()
}

/// Runs one concrete suite at the configured scale.
pub fn run_suite(suite: Suite, bench: &BenchConfig) -> Result<SuiteOutput> {
    match suite {
        Suite::Fig1 => run_fig1(&SweepConfig::for_scale(bench.scale), bench),
        Suite::Fig2 => run_fig2(&SweepConfig::for_scale(bench.scale), bench),
        Suite::Tab2 => run_tab2(&TimingConfig::for_scale(bench.scale), bench),
        Suite::All => Err(Error::Invalid("expand `all` before running".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bench(jobs: usize) -> BenchConfig {
        BenchConfig {
            scale: Scale::Tiny,
            seed: 11,
            jobs,
            eps: 1e-6,
            boundary_tol: crate::select::DEFAULT_BOUNDARY_TOL,
            instances: Some(2),
        }
    }

    #[test]
    fn calibrated_noise_matches_scale() {
        let inst = calibrated_instance(10, 60, 3, 0.5, 4).unwrap();
        let base = generate_instance(10, 60, 3, 0.0, 4, None).unwrap();
        assert_eq!(inst.f, base.f);
        assert!((inst.delta - 0.5 * base.sigma_min_f()).abs() < 1e-15);
    }

    #[test]
    fn fig1_schema_and_job_independence() {
        let cfg = SweepConfig::for_scale(Scale::Tiny);
        let a = run_fig1(&cfg, &bench(1)).unwrap();
        let b = run_fig1(&cfg, &bench(3)).unwrap();
        assert_eq!(&a.header[..4], &["delta", "q", "mean_abs_error", "best_error_upper"]);
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.rows.len(), cfg.delta_scales.len() * cfg.qs.len() * 2);
        assert_eq!(a.rows_failed, 0);
        for rep in &a.reports {
            rep.verify().unwrap();
        }
    }

    #[test]
    fn fig2_schema() {
        let cfg = SweepConfig::for_scale(Scale::Tiny);
        let out = run_fig2(&cfg, &bench(2)).unwrap();
        assert_eq!(&out.header[..4], &["delta", "method", "q", "mean_recovery"]);
        assert_eq!(out.rows.len(), cfg.delta_scales.len() * fig2_keys(&cfg.qs).len());
        let zero_rows = out.rows.iter().filter(|r| r[4] == "0");
        for r in zero_rows {
            assert_eq!(r[3], "1e0", "noiseless recovery must be exact: {r:?}");
        }
        assert!(out.csv().unwrap().starts_with("delta,method,q,mean_recovery"));
    }

    #[test]
    fn tab2_rows_per_shape() {
        let cfg = TimingConfig::for_scale(Scale::Tiny);
        let out = run_tab2(&cfg, &bench(1)).unwrap();
        assert_eq!(out.rows.len(), cfg.shapes.len() * 3);
        assert_eq!(out.column("method").unwrap()[..3], ["spa", "rand", "svd"]);
        assert!(out.summary().contains("tab2"));
    }
}
