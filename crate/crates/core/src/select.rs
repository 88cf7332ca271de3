//! Preconditioned and preprocessed SPA selectors.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{psd_sqrt, svd_jacobi, svd_truncated, DenseMatrix};
use crate::lowrank::{bound_report, spa_rank_approx, BoundReport};
use crate::mvee::{quadratic_forms, solve_mvee, DEFAULT_EPS};
use crate::spa::{spa_select, IndexSet};
use crate::timing::{Stage, Stopwatch};

/// Default `|pᵀLp − 1|` tolerance for boundary points.
pub const DEFAULT_BOUNDARY_TOL: f64 = 1e-3;
/// Power exponent used by the subspace-based selectors when none is given.
pub const DEFAULT_Q: usize = 10;
/// Relative singular value floor for whitening.
const WHITEN_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Spa,
    Pspa,
    Mpspa,
    Erspa,
    Merspa,
    Prewhiten,
    Spaspa,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Spa,
        Method::Pspa,
        Method::Mpspa,
        Method::Erspa,
        Method::Merspa,
        Method::Prewhiten,
        Method::Spaspa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Spa => "spa",
            Method::Pspa => "pspa",
            Method::Mpspa => "mpspa",
            Method::Erspa => "erspa",
            Method::Merspa => "merspa",
            Method::Prewhiten => "prewhiten",
            Method::Spaspa => "spaspa",
        }
    }

    /// Whether the method runs SPA-seeded subspace iteration and takes `q`.
    pub fn uses_q(self) -> bool {
        matches!(self, Method::Mpspa | Method::Merspa)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone)]
pub struct SelectorResult {
    pub indices: IndexSet,
    pub method: Method,
    pub q: Option<usize>,
    /// The k×k symmetric positive definite preconditioner, when one was used.
    pub preconditioner: Option<DenseMatrix>,
    pub diagnostics: Option<BoundReport>,
    pub timing: Vec<Stage>,
    /// Fallbacks and defaults taken along the way.
    pub notes: Vec<String>,
}

impl SelectorResult {
    fn new(method: Method, indices: IndexSet, timing: Vec<Stage>) -> Self {
        SelectorResult {
            indices,
            method,
            q: None,
            preconditioner: None,
            diagnostics: None,
            timing,
            notes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SelectOptions {
    pub eps: f64,
    pub boundary_tol: f64,
    /// Power exponent for mpspa / merspa; [`DEFAULT_Q`] when absent.
    pub q: Option<usize>,
    /// Attach a bound report (mpspa / merspa only).
    pub diagnostics: bool,
}

impl Default for SelectOptions {
    fn default() -> Self {
        SelectOptions {
            eps: DEFAULT_EPS,
            boundary_tol: DEFAULT_BOUNDARY_TOL,
            q: None,
            diagnostics: false,
        }
    }
}

/// Runs `method` with the given options.
pub fn run_selector(method: Method, a: &DenseMatrix, k: usize, opts: &SelectOptions) -> Result<SelectorResult> {
    let q = opts.q.unwrap_or(DEFAULT_Q);
    let mut res = match method {
        Method::Spa => spa_selector(a, k),
        Method::Pspa => pspa_select(a, k, opts.eps),
        Method::Mpspa => subspace_selector(a, k, q, opts.eps, None, opts.diagnostics),
        Method::Erspa => erspa_select(a, k, opts.eps, opts.boundary_tol),
        Method::Merspa => {
            subspace_selector(a, k, q, opts.eps, Some(opts.boundary_tol), opts.diagnostics)
        }
        Method::Prewhiten => prewhiten_spa_select(a, k),
        Method::Spaspa => spaspa_select(a, k),
    }?;
    if method.uses_q() && opts.q.is_none() {
        log::info!("{method}: no q given, using q = {DEFAULT_Q}");
        res.notes.push(format!("q defaulted to {DEFAULT_Q}"));
    }
    Ok(res)
}

/// Plain SPA wrapped as a selector result.
pub fn spa_selector(a: &DenseMatrix, k: usize) -> Result<SelectorResult> {
    let mut sw = Stopwatch::new();
    let idx = spa_select(a, k)?;
    sw.lap("spa");
    Ok(SelectorResult::new(Method::Spa, idx, sw.finish()))
}

/// Outcome of the ellipsoid stage on a k×m point matrix.
struct Conditioned {
    c: DenseMatrix,
    cp: DenseMatrix,
    forms: Vec<f64>,
}

fn condition(p: &DenseMatrix, eps: f64, sw: &mut Stopwatch) -> Result<Conditioned> {
    let e = solve_mvee(p, eps)?;
    sw.lap("mvee");
    let c = psd_sqrt(&e.l)?;
    let cp = c.matmul(p)?;
    let forms = quadratic_forms(&e.l, p)?;
    sw.lap("precondition");
    Ok(Conditioned { c, cp, forms })
}

/// Boundary-point selection: the points with `|pᵀLp − 1| ≤ tol`, thinned to
/// k by SPA on their preconditioned images when there are more than k.
fn boundary_pick(cond: &Conditioned, k: usize, tol: f64, notes: &mut Vec<String>) -> Result<IndexSet> {
    let cand: Vec<usize> = (0..cond.forms.len())
        .filter(|&j| (cond.forms[j] - 1.0).abs() <= tol)
        .collect();
    notes.push(format!("{} boundary candidates", cand.len()));
    match cand.len().cmp(&k) {
        std::cmp::Ordering::Equal => IndexSet::new(cand),
        std::cmp::Ordering::Greater => {
            let sub = cond.cp.select_columns(&cand);
            Ok(spa_select(&sub, k)?.remap(&cand))
        }
        std::cmp::Ordering::Less => {
            log::warn!("only {} boundary points for k = {k}; falling back to SPA", cand.len());
            notes.push("fewer than k boundary points: fell back to SPA on CP".into());
            spa_select(&cond.cp, k)
        }
    }
}

fn k1_bypass(method: Method, a: &DenseMatrix) -> Result<SelectorResult> {
    let mut r = spa_selector(a, 1)?;
    r.method = method;
    r.notes.push("k = 1: preconditioning skipped".into());
    Ok(r)
}

/// Ellipsoid-preconditioned SPA on `P = Σ_k V_kᵀ` from the truncated SVD.
pub fn pspa_select(a: &DenseMatrix, k: usize, eps: f64) -> Result<SelectorResult> {
    svd_selector(Method::Pspa, a, k, eps, None)
}

/// Boundary-point selection on the ellipsoid of `P = Σ_k V_kᵀ`.
pub fn erspa_select(a: &DenseMatrix, k: usize, eps: f64, boundary_tol: f64) -> Result<SelectorResult> {
    svd_selector(Method::Erspa, a, k, eps, Some(boundary_tol))
}

fn svd_selector(
    method: Method,
    a: &DenseMatrix,
    k: usize,
    eps: f64,
    boundary_tol: Option<f64>,
) -> Result<SelectorResult> {
    if k == 1 {
        return k1_bypass(method, a);
    }
    let mut sw = Stopwatch::new();
    let svd = svd_truncated(a, k)?;
    let p = svd.v.scale_cols(&svd.s).transpose();
    sw.lap("svd");
    finish_conditioned(method, p, k, eps, boundary_tol, sw, None)
}

fn finish_conditioned(
    method: Method,
    p: DenseMatrix,
    k: usize,
    eps: f64,
    boundary_tol: Option<f64>,
    mut sw: Stopwatch,
    q: Option<usize>,
) -> Result<SelectorResult> {
    let cond = condition(&p, eps, &mut sw)?;
    let mut notes = Vec::new();
    let idx = match boundary_tol {
        Some(tol) => boundary_pick(&cond, k, tol, &mut notes)?,
        None => spa_select(&cond.cp, k)?,
    };
    sw.lap("spa");
    let mut r = SelectorResult::new(method, idx, sw.finish());
    r.preconditioner = Some(cond.c);
    r.q = q;
    r.notes = notes;
    Ok(r)
}

/// Ellipsoid-preconditioned SPA on `P = QᵀA`, `Q` from SPA-seeded subspace
/// iteration with exponent `q`.
pub fn mpspa_select(a: &DenseMatrix, k: usize, q: usize, eps: f64) -> Result<SelectorResult> {
    subspace_selector(a, k, q, eps, None, false)
}

/// Boundary-point selection on the ellipsoid of `P = QᵀA`.
pub fn merspa_select(
    a: &DenseMatrix,
    k: usize,
    q: usize,
    eps: f64,
    boundary_tol: f64,
) -> Result<SelectorResult> {
    subspace_selector(a, k, q, eps, Some(boundary_tol), false)
}

fn subspace_selector(
    a: &DenseMatrix,
    k: usize,
    q: usize,
    eps: f64,
    boundary_tol: Option<f64>,
    diagnostics: bool,
) -> Result<SelectorResult> {
    let method = if boundary_tol.is_some() {
        Method::Merspa
    } else {
        Method::Mpspa
    };
    if k == 1 {
        let mut r = k1_bypass(method, a)?;
        r.q = Some(q);
        return Ok(r);
    }
    let mut sw = Stopwatch::new();
    let approx = spa_rank_approx(a, k, q)?;
    if let Some(rank) = approx.collapsed_rank {
        return Err(Error::RankDeficient { rank, k });
    }
    let p = approx.basis.t_matmul(a)?;
    sw.lap("subspace");
    let mut r = finish_conditioned(method, p, k, eps, boundary_tol, sw, Some(q))?;
    if diagnostics {
        let t = std::time::Instant::now();
        r.diagnostics = Some(bound_report(a, &approx)?);
        r.timing.push(Stage {
            stage: "diagnostics".into(),
            seconds: t.elapsed().as_secs_f64(),
        });
    }
    Ok(r)
}

/// SPA on the whitened data `Σ_k⁻¹U_kᵀA`.
pub fn prewhiten_spa_select(a: &DenseMatrix, k: usize) -> Result<SelectorResult> {
    let mut sw = Stopwatch::new();
    let svd = svd_truncated(a, k)?;
    sw.lap("svd");
    let (c, inv) = whitener(&svd.u, &svd.s, k)?;
    let idx = spa_select(&c.matmul(a)?, k)?;
    sw.lap("spa");
    let mut r = SelectorResult::new(Method::Prewhiten, idx, sw.finish());
    r.preconditioner = Some(DenseMatrix::from_diag(&inv));
    Ok(r)
}

/// `C = Σ⁻¹Uᵀ` (k×d) and the diagonal of `Σ⁻¹`, rejecting a numerically
/// vanishing `σ_k`.
fn whitener(u: &DenseMatrix, s: &[f64], k: usize) -> Result<(DenseMatrix, Vec<f64>)> {
    if !(s[k - 1] > WHITEN_RTOL * s[0]) {
        let rank = s.iter().filter(|&&x| x > WHITEN_RTOL * s[0]).count();
        return Err(Error::BadRank { k, max: rank });
    }
    let inv: Vec<f64> = s[..k].iter().map(|x| 1.0 / x).collect();
    let c = u.leading_columns(k).scale_cols(&inv).transpose();
    Ok((c, inv))
}

/// SPA on `CA` where `C = Σ⁻¹Uᵀ` whitens the columns first picked by SPA.
pub fn spaspa_select(a: &DenseMatrix, k: usize) -> Result<SelectorResult> {
    let mut sw = Stopwatch::new();
    let i0 = spa_select(a, k)?;
    sw.lap("spa");
    let svd = svd_jacobi(&i0.extract(a))?;
    sw.lap("svd");
    let (c, inv) = whitener(&svd.u, &svd.s, k)?;
    let idx = spa_select(&c.matmul(a)?, k)?;
    sw.lap("spa");
    let mut r = SelectorResult::new(Method::Spaspa, idx, sw.finish());
    r.preconditioner = Some(DenseMatrix::from_diag(&inv));
    Ok(r)
}
