use crate::error::{Error, Result};

use super::matrix::{axpy, dot, norm2, DenseMatrix};

/// Thin singular value decomposition `A ≈ U diag(s) Vᵀ`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: DenseMatrix,
    /// Singular values, nonincreasing.
    pub s: Vec<f64>,
    pub v: DenseMatrix,
}

impl SvdResult {
    /// `U diag(s) Vᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix {
        self.u.scale_cols(&self.s).matmul_t(&self.v).expect("consistent factors")
    }
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Returns eigenvalues in nonincreasing order and the matching orthonormal
/// eigenvectors as columns. The input is assumed symmetric; only its values are
/// read, no symmetry check is made here.
pub fn sym_eigen(a: &DenseMatrix) -> (Vec<f64>, DenseMatrix) {
    let n = a.rows();
    assert_eq!(n, a.cols(), "sym_eigen needs a square matrix");
    let mut w = a.clone();
    let mut v = DenseMatrix::identity(n);
    let scale = a.frobenius_norm();
    if scale > 0.0 {
        for _ in 0..JACOBI_MAX_SWEEPS {
            let mut off = 0.0;
            for q in 0..n {
                for p in 0..q {
                    off += w[(p, q)] * w[(p, q)];
                }
            }
            if off.sqrt() <= 1e-16 * scale {
                break;
            }
            for q in 1..n {
                for p in 0..q {
                    let apq = w[(p, q)];
                    if apq == 0.0 {
                        continue;
                    }
                    let app = w[(p, p)];
                    let aqq = w[(q, q)];
                    if apq.abs() <= 1e-18 * (app.abs() + aqq.abs()) {
                        w[(p, q)] = 0.0;
                        w[(q, p)] = 0.0;
                        continue;
                    }
                    let theta = (aqq - app) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    rotate_cols(&mut w, p, q, c, s);
                    rotate_rows(&mut w, p, q, c, s);
                    w[(p, q)] = 0.0;
                    w[(q, p)] = 0.0;
                    rotate_cols(&mut v, p, q, c, s);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| w[(j, j)].total_cmp(&w[(i, i)]).then(i.cmp(&j)));
    let vals = order.iter().map(|&i| w[(i, i)]).collect();
    (vals, v.select_columns(&order))
}

fn rotate_cols(m: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64) {
    let rows = m.rows();
    let data = m.as_mut_slice();
    let (lo, hi) = data.split_at_mut(q * rows);
    let cp = &mut lo[p * rows..(p + 1) * rows];
    let cq = &mut hi[..rows];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let a = *x;
        let b = *y;
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

fn rotate_rows(m: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64) {
    for k in 0..m.cols() {
        let a = m[(p, k)];
        let b = m[(q, k)];
        m[(p, k)] = c * a - s * b;
        m[(q, k)] = s * a + c * b;
    }
}

/// One-sided (Hestenes) Jacobi on the columns of `x`.
///
/// Returns `(u, s, v)` with `x = u diag(s) vᵀ`, `s` nonincreasing, `u` with
/// orthonormal columns (completed where `s` is zero) and `v` orthogonal.
fn one_sided_jacobi(x: &DenseMatrix) -> (DenseMatrix, Vec<f64>, DenseMatrix) {
    let p = x.cols();
    let mut w = x.clone();
    let mut v = DenseMatrix::identity(p);
    for _ in 0..60 {
        let mut rotated = false;
        for j in 1..p {
            for i in 0..j {
                let alpha = dot(w.col(i), w.col(i));
                let beta = dot(w.col(j), w.col(j));
                let gamma = dot(w.col(i), w.col(j));
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_cols(&mut w, i, j, c, s);
                rotate_cols(&mut v, i, j, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..p).map(|j| norm2(w.col(j))).collect();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
    let s: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let mut u = w.select_columns(&order);
    let mut valid = vec![true; p];
    for (c, &sv) in s.iter().enumerate() {
        if sv > f64::MIN_POSITIVE * 1e4 {
            u.col_mut(c).iter_mut().for_each(|e| *e /= sv);
        } else {
            valid[c] = false;
        }
    }
    complete_orthonormal(&mut u, &valid);
    (u, s, v.select_columns(&order))
}

/// Replaces the columns flagged invalid with unit vectors orthogonal to all
/// other columns. Valid columns are assumed orthonormal already.
pub(crate) fn complete_orthonormal(u: &mut DenseMatrix, valid: &[bool]) {
    let n = u.rows();
    let mut ok = valid.to_vec();
    let mut next_e = 0;
    for c in 0..u.cols() {
        if ok[c] {
            continue;
        }
        loop {
            assert!(next_e < n, "cannot complete an orthonormal basis");
            let mut cand = vec![0.0; n];
            cand[next_e] = 1.0;
            next_e += 1;
            for _ in 0..2 {
                for o in 0..u.cols() {
                    if ok[o] {
                        let d = dot(u.col(o), &cand);
                        axpy(-d, u.col(o), &mut cand);
                    }
                }
            }
            let nn = norm2(&cand);
            if nn > 0.5 {
                cand.iter_mut().for_each(|e| *e /= nn);
                u.col_mut(c).copy_from_slice(&cand);
                ok[c] = true;
                break;
            }
        }
    }
}

/// Full thin SVD by one-sided Jacobi: `U` is d×r, `V` is m×r, r = min(d, m).
///
/// Slower than [`svd_truncated`] but accurate to high relative precision in
/// small singular values; used for diagnostics.
pub fn svd_jacobi(a: &DenseMatrix) -> Result<SvdResult> {
    a.ensure_finite()?;
    if a.cols() <= a.rows() {
        let (u, s, v) = one_sided_jacobi(a);
        Ok(SvdResult { u, s, v })
    } else {
        let (v, s, u) = one_sided_jacobi(&a.transpose());
        Ok(SvdResult { u, s, v })
    }
}

/// Singular values only, nonincreasing, via one-sided Jacobi.
pub fn singular_values(a: &DenseMatrix) -> Result<Vec<f64>> {
    Ok(svd_jacobi(a)?.s)
}

/// Top-k truncated SVD.
///
/// Eigendecomposes the smaller Gram matrix by Jacobi rotations, then refines the
/// k leading factors with a one-sided Jacobi pass on the projected k columns so
/// that both factor matrices are orthonormal to working precision.
pub fn svd_truncated(a: &DenseMatrix, k: usize) -> Result<SvdResult> {
    a.ensure_finite()?;
    let (d, m) = a.shape();
    let max = d.min(m);
    if k == 0 || k > max {
        return Err(Error::BadRank { k, max });
    }
    let gram = a.small_gram();
    let (_, e) = sym_eigen(&gram);
    let e_k = e.leading_columns(k);
    if d <= m {
        // AᵀU0 = X Σ Rᵀ  =>  U0ᵀA = R Σ Xᵀ
        let w = a.t_matmul(&e_k)?;
        let (x, s, r) = one_sided_jacobi(&w);
        let u = e_k.matmul(&r)?;
        Ok(SvdResult { u, s, v: x })
    } else {
        let w = a.matmul(&e_k)?;
        let (x, s, r) = one_sided_jacobi(&w);
        let v = e_k.matmul(&r)?;
        Ok(SvdResult { u: x, s, v })
    }
}

/// Largest singular value by power iteration on the smaller Gram matrix.
///
/// Stops when successive Rayleigh quotients differ by less than `tol` times the
/// current value, or after 10 000 iterations.
pub fn spectral_norm(a: &DenseMatrix, tol: f64) -> Result<f64> {
    a.ensure_finite()?;
    assert!(tol > 0.0, "tol must be positive");
    let g = a.small_gram();
    let n = g.rows();
    // fixed start: ones perturbed by a golden-ratio ramp, so no symmetric
    // eigenvector can be orthogonal to it by construction
    let mut x: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.5 * ((i as f64) * 0.618_033_988_749_895).fract())
        .collect();
    let nx = norm2(&x);
    x.iter_mut().for_each(|e| *e /= nx);
    let mut lambda = 0.0f64;
    for _ in 0..10_000 {
        let y = g.matvec(&x);
        let next = dot(&x, &y);
        let ny = norm2(&y);
        if ny == 0.0 {
            return Ok(0.0);
        }
        x = y.into_iter().map(|e| e / ny).collect();
        if (next - lambda).abs() < tol * next {
            lambda = next;
            break;
        }
        lambda = next;
    }
    Ok(lambda.max(0.0).sqrt())
}

/// Orthonormal basis of `range(Y)` by Householder QR with column pivoting.
///
/// A column is treated as dependent once its pivot magnitude drops below
/// `1e-12` times the first pivot, so the result has `rank(Y)` columns (possibly
/// zero for `Y = 0`).
pub fn orthonormalize(y: &DenseMatrix) -> Result<DenseMatrix> {
    y.ensure_finite()?;
    let (d, k) = y.shape();
    let mut r = y.clone();
    let steps = d.min(k);
    let mut vs: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let mut first = 0.0;
    let mut rank = 0;
    for j in 0..steps {
        // pivot on the largest remaining trailing column norm
        let mut best = j;
        let mut best_n = -1.0;
        for c in j..k {
            let nn = dot(&r.col(c)[j..], &r.col(c)[j..]);
            if nn > best_n {
                best_n = nn;
                best = c;
            }
        }
        let piv = best_n.sqrt();
        if j == 0 {
            first = piv;
        }
        if piv == 0.0 || piv < 1e-12 * first {
            break;
        }
        if best != j {
            swap_cols(&mut r, j, best);
        }
        let mut v = r.col(j)[j..].to_vec();
        let alpha = if v[0] >= 0.0 { -piv } else { piv };
        v[0] -= alpha;
        let vn = norm2(&v);
        if vn > 0.0 {
            v.iter_mut().for_each(|e| *e /= vn);
            for c in j..k {
                let col = &mut r.col_mut(c)[j..];
                let t = 2.0 * dot(&v, col);
                axpy(-t, &v, col);
            }
        }
        vs.push(v);
        rank += 1;
    }
    let mut q = DenseMatrix::zeros(d, rank);
    for j in 0..rank {
        q[(j, j)] = 1.0;
    }
    for j in (0..rank).rev() {
        let v = &vs[j];
        for c in j..rank {
            let col = &mut q.col_mut(c)[j..];
            let t = 2.0 * dot(v, col);
            axpy(-t, v, col);
        }
    }
    Ok(q)
}

fn swap_cols(m: &mut DenseMatrix, a: usize, b: usize) {
    let rows = m.rows();
    let (lo, hi) = (a.min(b), a.max(b));
    let data = m.as_mut_slice();
    let (x, y) = data.split_at_mut(hi * rows);
    x[lo * rows..(lo + 1) * rows].swap_with_slice(&mut y[..rows]);
}

/// Symmetric PSD square root `C` with `C² = L`.
///
/// Eigenvalues in `[-1e-10‖L‖₂, 0)` are clamped to zero; anything more negative
/// is rejected.
pub fn psd_sqrt(l: &DenseMatrix) -> Result<DenseMatrix> {
    l.ensure_finite()?;
    if l.rows() != l.cols() {
        return Err(Error::DimensionMismatch(format!(
            "psd_sqrt of a {}x{} matrix",
            l.rows(),
            l.cols()
        )));
    }
    let asym = l.asymmetry();
    if asym > 1e-10 * l.max_abs().max(1.0) {
        return Err(Error::NotSymmetric(asym));
    }
    let (vals, vecs) = sym_eigen(l);
    let norm = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut roots = Vec::with_capacity(vals.len());
    for &lam in &vals {
        if lam < -1e-10 * norm {
            return Err(Error::NotPsd(lam));
        }
        roots.push(lam.max(0.0).sqrt());
    }
    let c = vecs.scale_cols(&roots).matmul_t(&vecs)?;
    Ok(symmetrize(&c))
}

/// `(M + Mᵀ)/2`.
pub fn symmetrize(m: &DenseMatrix) -> DenseMatrix {
    DenseMatrix::from_fn(m.rows(), m.cols(), |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
}

/// Inverse of a symmetric positive definite matrix via its eigendecomposition,
/// with eigenvalues floored at `floor`.
pub fn spd_inverse(m: &DenseMatrix, floor: f64) -> DenseMatrix {
    let (vals, vecs) = sym_eigen(m);
    let inv: Vec<f64> = vals.iter().map(|&v| 1.0 / v.max(floor)).collect();
    symmetrize(&vecs.scale_cols(&inv).matmul_t(&vecs).expect("square"))
}

/// `log det` of a symmetric positive definite matrix (eigenvalue based).
pub fn spd_logdet(m: &DenseMatrix) -> f64 {
    sym_eigen(m).0.iter().map(|v| v.ln()).sum()
}

/// Solves the square system `a x = b` by LU with partial pivoting.
pub fn solve(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows();
    if a.cols() != n || b.len() != n {
        return Err(Error::DimensionMismatch("solve".into()));
    }
    let mut m = a.clone();
    let mut x = b.to_vec();
    let scale = m.max_abs();
    for j in 0..n {
        let mut p = j;
        for i in j + 1..n {
            if m[(i, j)].abs() > m[(p, j)].abs() {
                p = i;
            }
        }
        if m[(p, j)].abs() <= 1e-14 * scale || scale == 0.0 {
            return Err(Error::Invalid("singular system".into()));
        }
        if p != j {
            for c in 0..n {
                let t = m[(j, c)];
                m[(j, c)] = m[(p, c)];
                m[(p, c)] = t;
            }
            x.swap(j, p);
        }
        let piv = m[(j, j)];
        for i in j + 1..n {
            let f = m[(i, j)] / piv;
            if f != 0.0 {
                for c in j..n {
                    m[(i, c)] -= f * m[(j, c)];
                }
                x[i] -= f * x[j];
            }
        }
    }
    for j in (0..n).rev() {
        let mut s = x[j];
        for c in j + 1..n {
            s -= m[(j, c)] * x[c];
        }
        x[j] = s / m[(j, j)];
    }
    Ok(x)
}

/// Inverse of a general square matrix (small sizes only).
pub fn inverse(a: &DenseMatrix) -> Result<DenseMatrix> {
    let n = a.rows();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        cols.push(solve(a, &e)?);
    }
    DenseMatrix::from_columns(&cols)
}
