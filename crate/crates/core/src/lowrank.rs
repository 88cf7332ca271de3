//! Rank-k approximation by SPA-seeded or Gaussian-seeded subspace iteration,
//! and the diagnostics that evaluate its error bounds on a concrete run.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    complete_orthonormal, inverse, orthonormalize, singular_values, spectral_norm, svd_jacobi,
    svd_truncated, DenseMatrix, NORM_TOL,
};
use crate::rng::Stream;
use crate::spa::{spa_select, IndexSet};
use crate::timing::{Stage, Stopwatch};

/// `1/20164`, the constant of the noise-conditioned error bound.
pub const THEOREM4_C: f64 = 1.0 / 20164.0;

/// Relative threshold for the numerical rank of `B`.
pub const RANK_RTOL: f64 = 1e-10;

/// `(323 − 81√5)/324`, the lower bound factor for `ρ / σ_min(F)`.
pub fn rho_factor() -> f64 {
    (323.0 - 81.0 * 5f64.sqrt()) / 324.0
}

/// Output of a rank-k approximation run.
#[derive(Debug, Clone)]
pub struct RankKApprox {
    /// `Q`, orthonormal basis of the approximation's range.
    pub basis: DenseMatrix,
    /// `B = QQᵀA`.
    pub b: DenseMatrix,
    /// SPA selection that seeded the iteration (SPA-seeded path only).
    pub seed_indices: Option<IndexSet>,
    /// Power exponent count.
    pub q: usize,
    /// `‖A − B‖₂`.
    pub error2: f64,
    /// Requested rank.
    pub k: usize,
    /// Set when `Q` ended with fewer than `k` columns.
    pub collapsed_rank: Option<usize>,
    /// Gaussian seed (randomized path only).
    pub seed: Option<u64>,
    pub oversample: usize,
    pub timing: Vec<Stage>,
}

impl RankKApprox {
    /// Turns a recorded collapse into an error.
    pub fn check_rank(&self) -> Result<()> {
        match self.collapsed_rank {
            Some(rank) => Err(Error::RankCollapse { rank, k: self.k }),
            None => Ok(()),
        }
    }
}

/// `Q` spanning `(AAᵀ)^q Y0`'s range where `Y0` already holds one application
/// of `A`. Every product with `A` or `Aᵀ` is followed by an orthonormalization.
fn stabilized_iteration(a: &DenseMatrix, y0: &DenseMatrix, q: usize) -> Result<DenseMatrix> {
    let mut basis = orthonormalize(y0)?;
    for _ in 0..q {
        if basis.cols() == 0 {
            break;
        }
        let w = orthonormalize(&a.t_matmul(&basis)?)?;
        basis = orthonormalize(&a.matmul(&w)?)?;
    }
    Ok(basis)
}

fn check_k(a: &DenseMatrix, k: usize) -> Result<()> {
    let max = a.rows().min(a.cols());
    if k == 0 || k > max {
        return Err(Error::BadRank { k, max });
    }
    Ok(())
}

fn project(a: &DenseMatrix, basis: &DenseMatrix) -> Result<DenseMatrix> {
    if basis.cols() == 0 {
        return Ok(DenseMatrix::zeros(a.rows(), a.cols()));
    }
    basis.matmul(&basis.t_matmul(a)?)
}

/// SPA-seeded rank-k approximation: `Q = orth((AAᵀ)^q A(I))`, `B = QQᵀA`.
pub fn spa_rank_approx(a: &DenseMatrix, k: usize, q: usize) -> Result<RankKApprox> {
    check_k(a, k)?;
    let mut sw = Stopwatch::new();
    let idx = spa_select(a, k)?;
    sw.lap("spa");
    let basis = stabilized_iteration(a, &idx.extract(a), q)?;
    sw.lap("iteration");
    let b = project(a, &basis)?;
    sw.lap("projection");
    let error2 = spectral_norm(&a.sub(&b)?, NORM_TOL)?;
    sw.lap("error");
    let collapsed_rank = (basis.cols() < k).then_some(basis.cols());
    if let Some(r) = collapsed_rank {
        log::warn!("subspace collapsed to rank {r} < k = {k}");
    }
    Ok(RankKApprox {
        basis,
        b,
        seed_indices: Some(idx),
        q,
        error2,
        k,
        collapsed_rank,
        seed: None,
        oversample: 0,
        timing: sw.finish(),
    })
}

/// Gaussian-seeded randomized subspace iteration with optional oversampling.
///
/// With `oversample > 0` the ℓ = k + oversample dimensional subspace is cut
/// back to rank k through the top-k SVD of `QᵀA`.
pub fn rand_subspace_approx(
    a: &DenseMatrix,
    k: usize,
    q: usize,
    oversample: usize,
    seed: u64,
) -> Result<RankKApprox> {
    check_k(a, k)?;
    let l = k + oversample;
    check_k(a, l)?;
    let mut sw = Stopwatch::new();
    let omega = Stream::new(seed).gaussian_matrix(a.cols(), l);
    let y0 = a.matmul(&omega)?;
    sw.lap("sample");
    let mut basis = stabilized_iteration(a, &y0, q)?;
    sw.lap("iteration");
    if oversample > 0 && basis.cols() > 0 {
        let p = basis.t_matmul(a)?;
        let kk = k.min(p.rows());
        let svd = svd_truncated(&p, kk)?;
        basis = basis.matmul(&svd.u)?;
        sw.lap("truncation");
    }
    let b = project(a, &basis)?;
    sw.lap("projection");
    let error2 = spectral_norm(&a.sub(&b)?, NORM_TOL)?;
    sw.lap("error");
    let collapsed_rank = (basis.cols() < k).then_some(basis.cols());
    Ok(RankKApprox {
        basis,
        b,
        seed_indices: None,
        q,
        error2,
        k,
        collapsed_rank,
        seed: Some(seed),
        oversample,
        timing: sw.finish(),
    })
}

/// Bound quantities evaluated on one SPA-seeded run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub k: usize,
    pub q: usize,
    pub sigma_1: f64,
    pub sigma_k: f64,
    /// `σ_{k+1}(A)`, zero when `k = min(d, m)`.
    pub sigma_k1: f64,
    /// `σ_min(A(I))`.
    pub sigma_min_ai: f64,
    /// `σ_min(A(I)) − σ_{k+1}`.
    pub rho: f64,
    /// `σ_min(G₁)` for `G = UᵀA(I)`.
    pub g1_min: f64,
    /// `σ_max(G₂)`.
    pub g2_max: f64,
    pub theorem4_bound: f64,
    /// Present when `ρ > 0`.
    pub corollary9_bound: Option<f64>,
    /// `‖HS₁‖₂² + σ_{k+1}²`; absent when `Z₁` is numerically singular.
    pub lemma6_rhs: Option<f64>,
    pub singular_z1: bool,
    pub achieved_error: f64,
    pub rank_b: usize,
}

/// `σ_{k+1}·√(1 + c·(σ_{k+1}/σ_k)^{4q−2})` written as
/// `√(σ_{k+1}² + c·σ_k²·(σ_{k+1}/σ_k)^{4q})`, finite for `σ_{k+1} = 0`.
fn tail_bound(sigma_k: f64, sigma_k1: f64, q: usize, c: f64) -> f64 {
    if sigma_k <= 0.0 {
        return f64::INFINITY;
    }
    let r = sigma_k1 / sigma_k;
    (sigma_k1 * sigma_k1 + c * sigma_k * sigma_k * r.powi(4 * q as i32)).sqrt()
}

/// Evaluates the error bounds and their ingredients for an SPA-seeded run,
/// using one-sided Jacobi SVDs throughout.
pub fn bound_report(a: &DenseMatrix, approx: &RankKApprox) -> Result<BoundReport> {
    let idx = approx
        .seed_indices
        .as_ref()
        .ok_or_else(|| Error::Invalid("bound report needs an SPA-seeded approximation".into()))?;
    let k = idx.len();
    let q = approx.q;
    let (d, _) = a.shape();
    let full = svd_jacobi(a)?;
    let s = &full.s;
    let r = s.len();
    let sigma_1 = s[0];
    let sigma_k = s[k - 1];
    let sigma_k1 = if k < r { s[k] } else { 0.0 };

    let ai = idx.extract(a);
    let sigma_min_ai = *singular_values(&ai)?.last().unwrap();
    let rho = sigma_min_ai - sigma_k1;

    // full d×d left factor
    let mut u = DenseMatrix::zeros(d, d);
    let mut valid = vec![false; d];
    for j in 0..r {
        u.col_mut(j).copy_from_slice(full.u.col(j));
        valid[j] = true;
    }
    complete_orthonormal(&mut u, &valid);
    let g = u.t_matmul(&ai)?;
    let g1 = g.row_block(0, k);
    let g1_min = *singular_values(&g1)?.last().unwrap();
    let g2_max = if d > k {
        singular_values(&g.row_block(k, d))?[0]
    } else {
        0.0
    };

    // Z = S^{2q} G, so Z₁ = D₁G₁ with D₁ = diag((σ_i/σ_k)^{2q}) positive and
    // Z₁ is singular exactly when G₁ is. H S₁ = D₂ G₂ G₁⁻¹ D₁⁻¹ S₁ is then
    // formed from factors bounded by one instead of the raw powers.
    let ratio = |i: usize| {
        if i < r && sigma_k > 0.0 {
            (s[i] / sigma_k).powi(2 * q as i32)
        } else {
            0.0
        }
    };
    let g1_s = singular_values(&g1)?;
    let singular_z1 = sigma_k <= 0.0 || g1_s[0] == 0.0 || g1_s[k - 1] < 1e-12 * g1_s[0];
    let lemma6_rhs = if singular_z1 {
        None
    } else if d > k {
        let d2: Vec<f64> = (k..d).map(ratio).collect();
        let right: Vec<f64> = (0..k).map(|i| s[i] / ratio(i)).collect();
        let hs1 = g
            .row_block(k, d)
            .scale_rows(&d2)
            .matmul(&inverse(&g1)?)?
            .scale_cols(&right);
        let n = singular_values(&hs1)?[0];
        Some(n * n + sigma_k1 * sigma_k1)
    } else {
        Some(sigma_k1 * sigma_k1)
    };

    let theorem4_bound = tail_bound(sigma_k, sigma_k1, q, THEOREM4_C);
    let corollary9_bound = (rho > 0.0).then(|| {
        let w = sigma_k1 / rho;
        tail_bound(sigma_k, sigma_k1, q, w * w)
    });

    let achieved_error = singular_values(&a.sub(&approx.b)?)?[0];
    let rank_b = if approx.basis.cols() == 0 {
        0
    } else {
        let sb = singular_values(&approx.basis.t_matmul(a)?)?;
        sb.iter().filter(|&&x| x > RANK_RTOL * sb[0]).count()
    };

    Ok(BoundReport {
        k,
        q,
        sigma_1,
        sigma_k,
        sigma_k1,
        sigma_min_ai,
        rho,
        g1_min,
        g2_max,
        theorem4_bound,
        corollary9_bound,
        lemma6_rhs,
        singular_z1,
        achieved_error,
        rank_b,
    })
}
