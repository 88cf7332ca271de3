//! Minimum-volume origin-centered enclosing ellipsoid `{x : xᵀLx ≤ 1}`.
//!
//! The dual D-optimal design problem `max log det M(u)`, `M(u) = Σ uᵢpᵢpᵢᵀ`
//! over the probability simplex is solved by Wolfe–Atwood coordinate ascent
//! with Todd–Yildirim away steps, inside a cutting-plane loop over the point
//! set. A final Newton solve on the support sharpens the weights. The primal
//! solution is `L = M(u)⁻¹ / k`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, orthonormalize, solve, spd_inverse, sym_eigen, DenseMatrix};
use crate::spa::IndexSet;

pub const DEFAULT_EPS: f64 = 1e-6;
pub const MAX_INNER_ITERATIONS: usize = 100_000;
pub const MAX_ROUNDS: usize = 200;
/// Weights above this count as support.
pub const SUPPORT_THRESHOLD: f64 = 1e-10;
const REFRESH_EVERY: usize = 100;
const POLISH_EVERY: usize = 2_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    /// Shape matrix `L`, k×k symmetric positive definite.
    pub l: DenseMatrix,
    /// Dual weights, one per input point, summing to one.
    pub weights: Vec<f64>,
    pub support: IndexSet,
    /// `max_p pᵀLp − 1`.
    pub max_violation: f64,
    /// Inner ascent iterations over all rounds.
    pub iterations: usize,
    /// Cutting-plane rounds.
    pub rounds: usize,
}

impl Ellipsoid {
    pub fn log_det(&self) -> f64 {
        sym_eigen(&self.l).0.iter().map(|v| v.ln()).sum()
    }
}

/// `pᵢᵀLpᵢ` for every column of `p`.
pub fn quadratic_forms(l: &DenseMatrix, p: &DenseMatrix) -> Result<Vec<f64>> {
    if l.rows() != l.cols() || l.cols() != p.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} ellipsoid against {}-dimensional points",
            l.rows(),
            l.cols(),
            p.rows()
        )));
    }
    let lp = l.matmul(p)?;
    Ok((0..p.cols()).map(|j| dot(lp.col(j), p.col(j))).collect())
}

/// `pᵢᵀLpᵢ` for every column of `p` against a solved ellipsoid.
pub fn ellipsoid_support(e: &Ellipsoid, p: &DenseMatrix) -> Result<Vec<f64>> {
    quadratic_forms(&e.l, p)
}

/// `M(u) = Σ uᵢ pᵢ pᵢᵀ` over the points `idx` with weights `u`.
fn moment(p: &DenseMatrix, idx: &[usize], u: &[f64]) -> DenseMatrix {
    let k = p.rows();
    let mut m = DenseMatrix::zeros(k, k);
    for (&i, &w) in idx.iter().zip(u) {
        if w == 0.0 {
            continue;
        }
        let c = p.col(i);
        for b in 0..k {
            let f = w * c[b];
            for a in 0..k {
                m[(a, b)] += f * c[a];
            }
        }
    }
    m
}

fn inverse_of(m: &DenseMatrix) -> DenseMatrix {
    let tr: f64 = (0..m.rows()).map(|i| m[(i, i)]).sum();
    spd_inverse(m, 1e-14 * tr)
}

fn log_det_moment(m: &DenseMatrix) -> f64 {
    sym_eigen(m).0.iter().map(|&v| if v > 0.0 { v.ln() } else { f64::NEG_INFINITY }).sum()
}

/// Weighted design on a working subset of the columns of `p`.
struct Design<'a> {
    p: &'a DenseMatrix,
    idx: Vec<usize>,
    u: Vec<f64>,
    minv: DenseMatrix,
    kappa: Vec<f64>,
}

impl<'a> Design<'a> {
    fn refresh(&mut self) {
        self.minv = inverse_of(&moment(self.p, &self.idx, &self.u));
        let mp = self.minv.matmul(&self.p.select_columns(&self.idx)).expect("shapes");
        self.kappa = self
            .idx
            .iter()
            .enumerate()
            .map(|(a, &i)| dot(mp.col(a), self.p.col(i)))
            .collect();
    }

    fn dots_with(&self, v: &[f64]) -> Vec<f64> {
        self.idx.iter().map(|&i| dot(self.p.col(i), v)).collect()
    }

    /// Wolfe–Atwood ascent with away steps until the weights certify
    /// `max κ ≤ k(1+eps)` and `min_{support} κ ≥ k(1−eps)`.
    /// Returns the number of iterations, or `None` on hitting the cap.
    fn ascend(&mut self, eps: f64, cap: usize) -> Option<usize> {
        let k = self.p.rows() as f64;
        self.refresh();
        for it in 0..cap {
            if it > 0 && it % POLISH_EVERY == 0 {
                // first-order steps crawl when a spare point sits near the
                // boundary; Newton on the support drops it in a few steps
                self.polish(eps);
            } else if it > 0 && it % REFRESH_EVERY == 0 {
                self.refresh();
            }
            let (jf, kf) = argmax(&self.kappa);
            let (ja, ka) = self
                .kappa
                .iter()
                .enumerate()
                .filter(|(a, _)| self.u[*a] > 0.0)
                .fold((usize::MAX, f64::INFINITY), |best, (a, &v)| {
                    if v < best.1 {
                        (a, v)
                    } else {
                        best
                    }
                });
            if kf <= k * (1.0 + eps) && ka >= k * (1.0 - eps) {
                self.refresh();
                let (_, kf2) = argmax(&self.kappa);
                if kf2 <= k * (1.0 + eps) {
                    return Some(it);
                }
                continue;
            }
            let forward = kf - k >= k - ka;
            if forward {
                let beta = (kf - k) / (k * (kf - 1.0));
                if beta >= 1.0 - 1e-12 {
                    // only possible for k = 1: all mass moves to the longest point
                    self.u.iter_mut().for_each(|w| *w = 0.0);
                    self.u[jf] = 1.0;
                    self.refresh();
                    continue;
                }
                let v =self.minv.matvec(self.p.col(self.idx[jf]));
                let pv = self.dots_with(&v);
                let denom = (1.0 - beta) + beta * kf;
                for (a, kap) in self.kappa.iter_mut().enumerate() {
                    *kap = (*kap - beta * pv[a] * pv[a] / denom) / (1.0 - beta);
                }
                rank_one(&mut self.minv, &v, -beta / denom, 1.0 / (1.0 - beta));
                self.u.iter_mut().for_each(|w| *w *= 1.0 - beta);
                self.u[jf] += beta;
            } else {
                let uj = self.u[ja];
                let bmax = uj / (1.0 - uj);
                let beta = if ka > 1.0 {
                    ((k - ka) / (k * (ka - 1.0))).min(bmax)
                } else {
                    bmax
                };
                let denom = (1.0 + beta) - beta * ka;
                if denom <= 1e-12 {
                    // removing more of this point would make M singular
                    self.refresh();
                    continue;
                }
                let v = self.minv.matvec(self.p.col(self.idx[ja]));
                let pv = self.dots_with(&v);
                for (a, kap) in self.kappa.iter_mut().enumerate() {
                    *kap = (*kap + beta * pv[a] * pv[a] / denom) / (1.0 + beta);
                }
                rank_one(&mut self.minv, &v, beta / denom, 1.0 / (1.0 + beta));
                self.u.iter_mut().for_each(|w| *w *= 1.0 + beta);
                self.u[ja] -= beta;
                if beta == bmax {
                    self.u[ja] = 0.0;
                }
            }
        }
        None
    }

    /// Newton's method for `max log det M(u)` restricted to the current
    /// support with `Σu = 1`. Keeps the result only if it stays feasible to
    /// `k(1+eps)` on the working set and does not lower the objective.
    fn polish(&mut self, eps: f64) {
        let k = self.p.rows() as f64;
        let start_u = self.u.clone();
        let start_obj = log_det_moment(&moment(self.p, &self.idx, &self.u));
        let mut obj = start_obj;
        for _ in 0..30 {
            let sup: Vec<usize> = (0..self.u.len()).filter(|&a| self.u[a] > 0.0).collect();
            let s = sup.len();
            let pts: Vec<usize> = sup.iter().map(|&a| self.idx[a]).collect();
            let mp = self.minv.matmul(&self.p.select_columns(&pts)).expect("shapes");
            let mut kkt = DenseMatrix::zeros(s + 1, s + 1);
            let mut rhs = vec![0.0; s + 1];
            for a in 0..s {
                for b in 0..s {
                    let kab = dot(self.p.col(pts[a]), mp.col(b));
                    kkt[(a, b)] = -kab * kab;
                }
                kkt[(a, s)] = -1.0;
                kkt[(s, a)] = 1.0;
                rhs[a] = -dot(self.p.col(pts[a]), mp.col(a));
            }
            let Ok(sol) = solve(&kkt, &rhs) else {
                break;
            };
            let delta = &sol[..s];
            let step_max = delta
                .iter()
                .zip(&sup)
                .filter(|(d, _)| **d < 0.0)
                .map(|(d, &a)| -self.u[a] / d)
                .fold(f64::INFINITY, f64::min);
            let t = step_max.min(1.0);
            let mut cand = self.u.clone();
            for (d, &a) in delta.iter().zip(&sup) {
                cand[a] += t * d;
            }
            if t < 1.0 {
                // a weight hit zero: drop it from the support
                for &a in &sup {
                    if cand[a] <= 1e-15 {
                        cand[a] = 0.0;
                    }
                }
            }
            let total: f64 = cand.iter().sum();
            cand.iter_mut().for_each(|w| *w /= total);
            let m = moment(self.p, &self.idx, &cand);
            let cand_obj = log_det_moment(&m);
            if !(cand_obj >= obj - 1e-15 * obj.abs().max(1.0)) {
                break;
            }
            let size: f64 = delta.iter().map(|d| d.abs()).fold(0.0, f64::max);
            self.u = cand;
            self.refresh();
            obj = cand_obj;
            if size * t <= 1e-16 {
                break;
            }
        }
        let (_, kmax) = argmax(&self.kappa);
        if kmax > k * (1.0 + eps) || obj < start_obj {
            self.u = start_u;
            self.refresh();
        }
    }
}

/// `minv ← scale · (minv + c · v vᵀ)`.
fn rank_one(minv: &mut DenseMatrix, v: &[f64], c: f64, scale: f64) {
    let k = v.len();
    for b in 0..k {
        for a in 0..k {
            minv[(a, b)] = scale * (minv[(a, b)] + c * v[a] * v[b]);
        }
    }
}

fn argmax(v: &[f64]) -> (usize, f64) {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
}

/// Solves the minimum-volume enclosing ellipsoid problem for the columns of
/// the k×m matrix `p` to feasibility tolerance `eps`.
pub fn solve_mvee(p: &DenseMatrix, eps: f64) -> Result<Ellipsoid> {
    p.ensure_finite()?;
    let (k, m) = p.shape();
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::Invalid(format!("eps must lie in (0, 0.5), got {eps}")));
    }
    if m < k {
        return Err(Error::RankDeficient { rank: m, k });
    }
    let rank = orthonormalize(&p.transpose())?.cols();
    if rank < k {
        return Err(Error::RankDeficient { rank, k });
    }

    // initial working set: the 10k longest points, kept in index order
    let norms = p.column_sq_norms();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
    let mut idx: Vec<usize> = order.into_iter().take((10 * k).min(m)).collect();
    idx.sort_unstable();
    // the longest points may not span R^k; widen until they do
    while orthonormalize(&p.select_columns(&idx).transpose())?.cols() < k {
        let mut in_set = vec![false; m];
        idx.iter().for_each(|&i| in_set[i] = true);
        let extra: Vec<usize> = (0..m).filter(|&i| !in_set[i]).take(10 * k).collect();
        idx.extend(extra);
        idx.sort_unstable();
    }

    let w = idx.len();
    let mut design = Design {
        p,
        idx,
        u: vec![1.0 / w as f64; w],
        minv: DenseMatrix::zeros(k, k),
        kappa: Vec::new(),
    };
    let kf = k as f64;
    let mut iterations = 0;
    for round in 1..=MAX_ROUNDS {
        let cap = MAX_INNER_ITERATIONS;
        let it = design.ascend(eps, cap);
        iterations += it.unwrap_or(cap);
        design.polish(eps);
        let minv = design.minv.clone();
        let all = quadratic_forms(&minv, p)?;
        let mut member = vec![false; m];
        design.idx.iter().for_each(|&i| member[i] = true);
        let mut violators: Vec<usize> = (0..m)
            .filter(|&i| !member[i] && all[i] > kf * (1.0 + eps))
            .collect();
        if it.is_none() || violators.is_empty() {
            let e = finish(p, &design, iterations, round)?;
            if it.is_none() {
                return Err(Error::NoConvergence {
                    violation: e.max_violation,
                    last: Box::new(e),
                });
            }
            return Ok(e);
        }
        violators.sort_by(|&a, &b| all[b].total_cmp(&all[a]).then(a.cmp(&b)));
        violators.truncate(k);
        log::debug!("mvee round {round}: adding {} points", violators.len());
        for v in violators {
            design.idx.push(v);
            design.u.push(0.0);
        }
    }
    let e = finish(p, &design, iterations, MAX_ROUNDS)?;
    Err(Error::NoConvergence {
        violation: e.max_violation,
        last: Box::new(e),
    })
}

fn finish(p: &DenseMatrix, design: &Design<'_>, iterations: usize, rounds: usize) -> Result<Ellipsoid> {
    let k = p.rows();
    let m = p.cols();
    let mut weights = vec![0.0; m];
    for (&i, &w) in design.idx.iter().zip(&design.u) {
        weights[i] = w;
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let all: Vec<usize> = (0..m).collect();
    let l = inverse_of(&moment(p, &all, &weights)).scaled(1.0 / k as f64);
    let forms = quadratic_forms(&l, p)?;
    let max_violation = forms.iter().copied().fold(f64::NEG_INFINITY, f64::max) - 1.0;
    let support = IndexSet::new((0..m).filter(|&i| weights[i] > SUPPORT_THRESHOLD).collect())?;
    Ok(Ellipsoid {
        l,
        weights,
        support,
        max_violation,
        iterations,
        rounds,
    })
}
