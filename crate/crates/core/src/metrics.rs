//! Recovery rate, spectral angles, approximation errors and abundance estimation.

use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, orthonormalize, spectral_norm, DenseMatrix, NORM_TOL};
use crate::spa::IndexSet;

/// `|found ∩ truth| / k` with set semantics.
pub fn recovery_rate(found: &IndexSet, truth: &IndexSet) -> Result<f64> {
    if found.len() != truth.len() || truth.is_empty() {
        return Err(Error::SizeMismatch {
            found: found.len(),
            truth: truth.len(),
        });
    }
    let hits = found.as_slice().iter().filter(|&&i| truth.contains(i)).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Angle in radians between two spectra.
pub fn spectral_angle_distance(f: &[f64], fhat: &[f64]) -> Result<f64> {
    if f.len() != fhat.len() {
        return Err(Error::DimensionMismatch(format!("{} vs {}", f.len(), fhat.len())));
    }
    let nf = norm2(f);
    let ng = norm2(fhat);
    if nf == 0.0 || ng == 0.0 {
        return Err(Error::ZeroVector);
    }
    // Half-angle form stays accurate near 0 and pi where arccos does not.
    let (mut diff, mut sum) = (0.0, 0.0);
    for (x, y) in f.iter().zip(fhat) {
        let (u, v) = (x / nf, y / ng);
        diff += (u - v) * (u - v);
        sum += (u + v) * (u + v);
    }
    Ok(2.0 * diff.sqrt().atan2(sum.sqrt()))
}

/// `(‖A − B‖₂, ‖A − B‖₂ / ‖A‖₂)`.
pub fn approximation_error(a: &DenseMatrix, b: &DenseMatrix) -> Result<(f64, f64)> {
    let abs = spectral_norm(&a.sub(b)?, NORM_TOL)?;
    let na = spectral_norm(a, NORM_TOL)?;
    let rel = if na > 0.0 { abs / na } else { 0.0 };
    Ok((abs, rel))
}

/// Euclidean projection onto `{w ≥ 0, Σw = 1}` (sort-based).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &x) in s.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (i + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

#[derive(Debug, Clone)]
pub struct AbundanceResult {
    /// k×m, columns on the probability simplex.
    pub w: DenseMatrix,
    /// `‖F wᵢ − aᵢ‖₂` per pixel.
    pub residuals: Vec<f64>,
    /// Final projected-gradient KKT residual per pixel.
    pub kkt: Vec<f64>,
}

pub const ABUNDANCE_KKT_TOL: f64 = 1e-8;
pub const ABUNDANCE_MAX_ITER: usize = 50_000;

/// Per-pixel `argmin_{w ≥ 0, Σw = 1} ‖Fw − a‖₂²`.
///
/// Accelerated projected gradient with step `1/σ_max(F)²`, stopped when the
/// projected-gradient residual `‖w − Π(w − ∇/L)‖∞` falls below `1e-8`, then
/// polished by an equality-constrained solve on the detected support.
pub fn estimate_abundances(f: &DenseMatrix, a: &DenseMatrix) -> Result<AbundanceResult> {
    let (d, k) = f.shape();
    if a.rows() != d {
        return Err(Error::DimensionMismatch(format!(
            "basis has {d} rows, data has {}",
            a.rows()
        )));
    }
    let rank = orthonormalize(f)?.cols();
    if rank < k {
        return Err(Error::RankDeficientBasis { rank, k });
    }
    let g = f.t_matmul(f)?;
    let lip = spectral_norm(&g, NORM_TOL)?;
    let fta = f.t_matmul(a)?;
    let m = a.cols();
    let mut w = DenseMatrix::zeros(k, m);
    let mut kkt = vec![0.0; m];
    let mut residuals = vec![0.0; m];
    for j in 0..m {
        let b = fta.col(j);
        let (sol, r) = solve_pixel(&g, b, lip);
        w.col_mut(j).copy_from_slice(&sol);
        kkt[j] = r;
        let fw = f.matvec(&sol);
        residuals[j] = fw.iter().zip(a.col(j)).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    }
    Ok(AbundanceResult { w, residuals, kkt })
}

/// Gradient of `½wᵀGw − bᵀw`.
fn grad(g: &DenseMatrix, b: &[f64], w: &[f64]) -> Vec<f64> {
    g.matvec(w).iter().zip(b).map(|(x, y)| x - y).collect()
}

fn kkt_residual(g: &DenseMatrix, b: &[f64], w: &[f64], lip: f64) -> f64 {
    let gr = grad(g, b, w);
    let step: Vec<f64> = w.iter().zip(&gr).map(|(x, d)| x - d / lip).collect();
    let p = project_simplex(&step);
    w.iter().zip(&p).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn objective(g: &DenseMatrix, b: &[f64], w: &[f64]) -> f64 {
    0.5 * dot(w, &g.matvec(w)) - dot(b, w)
}

fn solve_pixel(g: &DenseMatrix, b: &[f64], lip: f64) -> (Vec<f64>, f64) {
    let k = b.len();
    let mut w = vec![1.0 / k as f64; k];
    let mut y = w.clone();
    let mut t = 1.0f64;
    let mut res = f64::INFINITY;
    for it in 0..ABUNDANCE_MAX_ITER {
        let gr = grad(g, b, &y);
        let step: Vec<f64> = y.iter().zip(&gr).map(|(x, d)| x - d / lip).collect();
        let next = project_simplex(&step);
        let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let mom = (t - 1.0) / tn;
        // restart momentum when the objective goes up
        if objective(g, b, &next) > objective(g, b, &w) {
            y = w.clone();
            t = 1.0;
            continue;
        }
        y = next.iter().zip(&w).map(|(n, o)| n + mom * (n - o)).collect();
        w = next;
        t = tn;
        if it % 10 == 0 {
            res = kkt_residual(g, b, &w, lip);
            if res <= ABUNDANCE_KKT_TOL {
                break;
            }
        }
    }
    if let Some(p) = polish_support(g, b, &w) {
        let r = kkt_residual(g, b, &p, lip);
        if r <= res.max(ABUNDANCE_KKT_TOL) && objective(g, b, &p) <= objective(g, b, &w) + 1e-15 {
            return (p, r);
        }
    }
    let r = kkt_residual(g, b, &w, lip);
    (w, r)
}

/// Solves the equality-constrained problem on the support of `w` exactly.
fn polish_support(g: &DenseMatrix, b: &[f64], w: &[f64]) -> Option<Vec<f64>> {
    let sup: Vec<usize> = (0..w.len()).filter(|&i| w[i] > 1e-12).collect();
    let s = sup.len();
    let mut kkt = DenseMatrix::zeros(s + 1, s + 1);
    let mut rhs = vec![0.0; s + 1];
    for (a, &i) in sup.iter().enumerate() {
        for (c, &j) in sup.iter().enumerate() {
            kkt[(a, c)] = g[(i, j)];
        }
        kkt[(a, s)] = 1.0;
        kkt[(s, a)] = 1.0;
        rhs[a] = b[i];
    }
    rhs[s] = 1.0;
    let sol = crate::linalg::solve(&kkt, &rhs).ok()?;
    if sol[..s].iter().any(|&x| x < 0.0) {
        return None;
    }
    let mut out = vec![0.0; w.len()];
    for (a, &i) in sup.iter().enumerate() {
        out[i] = sol[a];
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{inverse, svd_jacobi};
    use crate::rng::Stream;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn set(v: &[usize]) -> IndexSet {
        IndexSet::new(v.to_vec()).unwrap()
    }

    #[test]
    fn recovery_examples() {
        assert!((recovery_rate(&set(&[1, 2, 3]), &set(&[1, 2, 4])).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(recovery_rate(&set(&[3, 1]), &set(&[1, 3])).unwrap(), 1.0);
        assert_eq!(recovery_rate(&set(&[0, 1]), &set(&[2, 3])).unwrap(), 0.0);
        assert!(matches!(
            recovery_rate(&set(&[0]), &set(&[2, 3])),
            Err(Error::SizeMismatch { found: 1, truth: 2 })
        ));
    }

    #[test]
    fn sad_examples() {
        assert_eq!(spectral_angle_distance(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((spectral_angle_distance(&[1.0, 0.0], &[1.0, 1.0]).unwrap() - PI / 4.0).abs() < 1e-15);
        assert!((spectral_angle_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - PI / 2.0).abs() < 1e-15);
        assert!(matches!(spectral_angle_distance(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroVector)));
    }

    #[test]
    fn approximation_error_examples() {
        let a = DenseMatrix::from_diag(&[2.0, 1.0]);
        assert_eq!(approximation_error(&a, &a).unwrap(), (0.0, 0.0));
        let (abs, rel) = approximation_error(&a, &DenseMatrix::from_diag(&[2.0, 0.0])).unwrap();
        assert!((abs - 1.0).abs() < 1e-12 && (rel - 0.5).abs() < 1e-12);
        let mut s = Stream::new(6);
        let x = s.gaussian_matrix(7, 9);
        let y = s.gaussian_matrix(7, 9);
        let (abs, _) = approximation_error(&x, &y).unwrap();
        let oracle = svd_jacobi(&x.sub(&y).unwrap()).unwrap().s[0];
        assert!((abs - oracle).abs() <= 1e-8 * oracle);
        assert!(approximation_error(&x, &DenseMatrix::zeros(7, 8)).is_err());
    }

    #[test]
    fn abundance_vertex_and_midpoint() {
        let f = Stream::new(2).uniform_matrix(6, 3);
        let mid: Vec<f64> = f.col(0).iter().zip(f.col(1)).map(|(a, b)| 0.5 * (a + b)).collect();
        let a = DenseMatrix::from_columns(&[f.col(0).to_vec(), mid]).unwrap();
        let r = estimate_abundances(&f, &a).unwrap();
        let expect = [[1.0, 0.0, 0.0], [0.5, 0.5, 0.0]];
        for j in 0..2 {
            for i in 0..3 {
                assert!((r.w[(i, j)] - expect[j][i]).abs() < 1e-8, "{:?}", r.w);
            }
            assert!(r.kkt[j] <= ABUNDANCE_KKT_TOL);
        }
    }

    #[test]
    fn rank_deficient_basis() {
        let f = DenseMatrix::from_row_major(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]).unwrap();
        let a = DenseMatrix::zeros(3, 1);
        assert!(matches!(
            estimate_abundances(&f, &a),
            Err(Error::RankDeficientBasis { rank: 1, k: 2 })
        ));
    }

    /// Exhaustive oracle: the best KKT point over every support pattern.
    pub(crate) fn exhaustive_abundance(f: &DenseMatrix, a: &[f64]) -> Vec<f64> {
        let k = f.cols();
        let g = f.t_matmul(f).unwrap();
        let b = f.t_matvec(a);
        let mut best = (f64::INFINITY, vec![0.0; k]);
        for mask in 1u32..(1 << k) {
            let sup: Vec<usize> = (0..k).filter(|i| mask >> i & 1 == 1).collect();
            let s = sup.len();
            let sub = DenseMatrix::from_fn(s + 1, s + 1, |i, j| match (i < s, j < s) {
                (true, true) => g[(sup[i], sup[j])],
                (true, false) | (false, true) => 1.0,
                _ => 0.0,
            });
            let Ok(inv) = inverse(&sub) else { continue };
            let mut rhs: Vec<f64> = sup.iter().map(|&i| b[i]).collect();
            rhs.push(1.0);
            let sol = inv.matvec(&rhs);
            if sol[..s].iter().any(|&x| x < -1e-14) {
                continue;
            }
            let mut w = vec![0.0; k];
            for (c, &i) in sup.iter().enumerate() {
                w[i] = sol[c].max(0.0);
            }
            let obj = objective(&g, &b, &w);
            if obj < best.0 {
                best = (obj, w);
            }
        }
        best.1
    }

    #[test]
    fn abundance_matches_exhaustive_oracle() {
        let mut s = Stream::new(31);
        for case in 0..20 {
            let k = 2 + case % 5;
            let f = s.uniform_matrix(8, k);
            // gaussian targets mostly fall outside the simplex image
            let a = s.gaussian_matrix(8, 3);
            let r = estimate_abundances(&f, &a).unwrap();
            for j in 0..3 {
                let oracle = exhaustive_abundance(&f, a.col(j));
                for i in 0..k {
                    assert!((r.w[(i, j)] - oracle[i]).abs() <= 1e-6, "case {case}");
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn simplex_projection_idempotent(raw in proptest::collection::vec(0.0f64..1.0, 1..8)) {
            let s: f64 = raw.iter().sum();
            prop_assume!(s > 1e-3);
            let w: Vec<f64> = raw.iter().map(|x| x / s).collect();
            let p = project_simplex(&w);
            for (a, b) in w.iter().zip(&p) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn simplex_projection_feasible(v in proptest::collection::vec(-5.0f64..5.0, 1..8)) {
            let p = project_simplex(&v);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn sad_symmetric_and_scale_invariant(
            f in proptest::collection::vec(0.1f64..2.0, 4),
            g in proptest::collection::vec(0.1f64..2.0, 4),
            c in 0.01f64..100.0,
        ) {
            let a = spectral_angle_distance(&f, &g).unwrap();
            prop_assert!((a - spectral_angle_distance(&g, &f).unwrap()).abs() <= 1e-12);
            let fc: Vec<f64> = f.iter().map(|x| x * c).collect();
            prop_assert!((a - spectral_angle_distance(&fc, &g).unwrap()).abs() <= 1e-12);
        }

        #[test]
        fn abundance_locally_optimal(seed in any::<u64>()) {
            let mut s = Stream::new(seed);
            let f = s.uniform_matrix(6, 3);
            let a = s.gaussian_matrix(6, 1);
            let r = estimate_abundances(&f, &a).unwrap();
            let w: Vec<f64> = r.w.col(0).to_vec();
            let g = f.t_matmul(&f).unwrap();
            let b = f.t_matvec(a.col(0));
            let base = objective(&g, &b, &w);
            for i in 0..3 {
                for j in 0..3 {
                    if i == j { continue; }
                    // move mass from j to i
                    let mut v = w.clone();
                    let t = 1e-4f64.min(v[j]);
                    v[i] += t;
                    v[j] -= t;
                    prop_assert!(objective(&g, &b, &v) >= base - 1e-9);
                }
            }
        }
    }
}
