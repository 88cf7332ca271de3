//! Noisy separable test matrices `A = F [I, H] Π + N`.

use crate::error::{Error, Result};
use crate::linalg::{singular_values, spectral_norm, DenseMatrix, NORM_TOL};
use crate::rng::Stream;
use crate::spa::IndexSet;

/// Smallest admissible `σ_min(F)` before the basis is redrawn.
const BASIS_FLOOR: f64 = 1e-6;
const BASIS_RETRIES: usize = 10;

#[derive(Debug, Clone)]
pub struct SyntheticInstance {
    pub a: DenseMatrix,
    pub f: DenseMatrix,
    /// k×(m−k) Dirichlet weights.
    pub h: DenseMatrix,
    /// Column `j` of `F [I, H]` lands at column `permutation[j]` of `A`.
    pub permutation: Vec<usize>,
    pub n: DenseMatrix,
    pub delta: f64,
    pub true_indices: IndexSet,
    pub seed: u64,
    pub dirichlet_alpha: Vec<f64>,
}

impl SyntheticInstance {
    pub fn k(&self) -> usize {
        self.f.cols()
    }

    /// The noiseless part `F [I, H] Π`.
    pub fn noiseless(&self) -> DenseMatrix {
        let (d, m) = self.a.shape();
        let k = self.k();
        let mut out = DenseMatrix::zeros(d, m);
        let fh = self.f.matmul(&self.h).expect("shapes");
        for j in 0..m {
            let src = if j < k { self.f.col(j) } else { fh.col(j - k) };
            out.col_mut(self.permutation[j]).copy_from_slice(src);
        }
        out
    }

    /// `σ_min(F)`.
    pub fn sigma_min_f(&self) -> f64 {
        *singular_values(&self.f).expect("finite").last().unwrap()
    }

    /// `κ(F) = σ_max(F) / σ_min(F)`.
    pub fn kappa_f(&self) -> f64 {
        let s = singular_values(&self.f).expect("finite");
        s[0] / s[s.len() - 1]
    }

    /// Noise bound under which the SPA-seeded low-rank guarantees hold:
    /// `min(1/(2√(k−1)), 1/4) · σ_min(F) / (1 + 80 κ(F)²)`.
    pub fn noise_threshold(&self) -> f64 {
        noise_threshold(&self.f)
    }
}

/// `min(1/(2√(k−1)), 1/4) · σ_min(F) / (1 + 80 κ(F)²)` for a basis `F` with
/// `k ≥ 2` columns.
pub fn noise_threshold(f: &DenseMatrix) -> f64 {
    let k = f.cols();
    let s = singular_values(f).expect("finite");
    let smin = s[s.len() - 1];
    let kappa = s[0] / smin;
    let c = if k >= 2 {
        (1.0 / (2.0 * ((k - 1) as f64).sqrt())).min(0.25)
    } else {
        0.25
    };
    c * smin / (1.0 + 80.0 * kappa * kappa)
}

/// Draws a noisy separable instance.
///
/// The draw order is fixed (F, alpha, H, Π, raw noise) and independent of
/// `delta`, so instances that differ only in `delta` share F, H and Π and have
/// proportional noise.
pub fn generate_instance(
    d: usize,
    m: usize,
    k: usize,
    delta: f64,
    seed: u64,
    alpha: Option<&[f64]>,
) -> Result<SyntheticInstance> {
    if k < 2 || k > d.min(m) || m <= k {
        return Err(Error::BadShape(format!(
            "need 2 <= k <= min(d, m) and m > k, got d={d} m={m} k={k}"
        )));
    }
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::Invalid(format!("delta must be finite and >= 0, got {delta}")));
    }
    if let Some(a) = alpha {
        if a.len() != k || a.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::Invalid(format!(
                "dirichlet alpha needs {k} positive entries, got {a:?}"
            )));
        }
    }
    let mut rng = Stream::new(seed);
    let mut f = None;
    for _ in 0..BASIS_RETRIES {
        let cand = rng.uniform_matrix(d, k);
        let s = singular_values(&cand)?;
        if s[k - 1] >= BASIS_FLOOR {
            f = Some(cand);
            break;
        }
    }
    let f = f.ok_or(Error::DegenerateBasis(BASIS_RETRIES))?;
    // drawn even when alpha is given so later draws do not shift
    let drawn: Vec<f64> = (0..k).map(|_| rng.uniform_in(0.05, 1.0)).collect();
    let alpha = alpha.map_or(drawn, <[f64]>::to_vec);
    let mut h = DenseMatrix::zeros(k, m - k);
    for j in 0..m - k {
        let w = rng.dirichlet(&alpha);
        h.col_mut(j).copy_from_slice(&w);
    }
    let permutation = rng.permutation(m);
    let raw = rng.gaussian_matrix(d, m);
    let n = if delta == 0.0 {
        DenseMatrix::zeros(d, m)
    } else {
        let s = spectral_norm(&raw, NORM_TOL)?;
        raw.scaled(delta / s)
    };
    let true_indices = IndexSet::new(permutation[..k].to_vec())?;
    let mut inst = SyntheticInstance {
        a: DenseMatrix::zeros(d, m),
        f,
        h,
        permutation,
        n,
        delta,
        true_indices,
        seed,
        dirichlet_alpha: alpha,
    };
    inst.a = inst.noiseless().add(&inst.n)?;
    Ok(inst)
}
