//! Dense kernels: matrix type, products, eigen/SVD, orthonormalization, PSD root.

mod decomp;
mod matrix;

pub use decomp::{
    inverse, orthonormalize, psd_sqrt, singular_values, solve, spd_inverse, spd_logdet,
    spectral_norm, svd_jacobi, svd_truncated, sym_eigen, symmetrize, SvdResult,
};
pub(crate) use decomp::complete_orthonormal;
pub use matrix::{axpy, dot, norm2, DenseMatrix};

/// Tolerance used for internal spectral-norm evaluations.
pub const NORM_TOL: f64 = 1e-13;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;
    use proptest::prelude::*;

    fn rand_mat(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        Stream::new(seed).gaussian_matrix(rows, cols)
    }

    fn ortho_defect(q: &DenseMatrix) -> f64 {
        let g = q.t_matmul(q).unwrap();
        let e = g.sub(&DenseMatrix::identity(q.cols())).unwrap();
        svd_jacobi(&e).unwrap().s[0]
    }

    // brute-force oracle: largest singular value as sqrt of max eigenvalue of
    // the 2x2 or general Gram via characteristic polynomial is overkill; use
    // the independent one-sided Jacobi path instead
    fn sigma_max_oracle(a: &DenseMatrix) -> f64 {
        svd_jacobi(a).unwrap().s[0]
    }

    #[test]
    fn spectral_norm_examples() {
        let a = DenseMatrix::from_diag(&[3.0, 1.0, 2.0]);
        assert!((spectral_norm(&a, 1e-14).unwrap() - 3.0).abs() < 1e-10);
        let j = DenseMatrix::from_row_major(2, 2, &[0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!((spectral_norm(&j, 1e-14).unwrap() - 1.0).abs() < 1e-12);
        let r = rand_mat(8, 6, 1);
        let s = svd_truncated(&r, 6).unwrap().s[0];
        assert!((spectral_norm(&r, 1e-14).unwrap() - s).abs() < 1e-8);
        assert!((s - sigma_max_oracle(&r)).abs() < 1e-10);
    }

    #[test]
    fn spectral_norm_start_vector_not_orthogonal() {
        // the all-ones vector is an eigenvector of the small eigenvalue here
        let a = DenseMatrix::from_row_major(2, 2, &[1.5, -0.5, -0.5, 1.5]).unwrap();
        assert!((spectral_norm(&a, 1e-14).unwrap() - 2.0).abs() < 1e-8);
    }

    #[test]
    fn svd_truncated_examples() {
        let a = DenseMatrix::from_diag(&[5.0, 3.0, 1.0]);
        let r = svd_truncated(&a, 2).unwrap();
        assert!((r.s[0] - 5.0).abs() < 1e-12 && (r.s[1] - 3.0).abs() < 1e-12);
        let res = a.sub(&r.reconstruct()).unwrap();
        assert!((spectral_norm(&res, 1e-14).unwrap() - 1.0).abs() < 1e-10);

        let u = [1.0, -2.0, 0.5, 3.0];
        let v = [2.0, 1.0, -1.0];
        let rank1 = DenseMatrix::from_fn(4, 3, |i, j| u[i] * v[j]);
        let r = svd_truncated(&rank1, 1).unwrap();
        let res = rank1.sub(&r.reconstruct()).unwrap();
        assert!(spectral_norm(&res, 1e-14).unwrap() <= 1e-10);

        let a = rand_mat(10, 7, 2);
        let oracle = svd_jacobi(&a).unwrap();
        let r = svd_truncated(&a, 3).unwrap();
        let res = a.sub(&r.reconstruct()).unwrap();
        assert!((sigma_max_oracle(&res) - oracle.s[3]).abs() < 1e-8);
        assert!(matches!(svd_truncated(&a, 8), Err(crate::Error::BadRank { .. })));
        assert!(matches!(svd_truncated(&a, 0), Err(crate::Error::BadRank { .. })));
    }

    #[test]
    fn svd_factors_orthonormal_both_orientations() {
        for (d, m) in [(6, 15), (15, 6), (9, 9)] {
            let a = rand_mat(d, m, 7 + d as u64);
            let r = svd_truncated(&a, d.min(m)).unwrap();
            assert!(ortho_defect(&r.u) <= 1e-10);
            assert!(ortho_defect(&r.v) <= 1e-10);
            let res = a.sub(&r.reconstruct()).unwrap();
            assert!(sigma_max_oracle(&res) <= 1e-8 * r.s[0].max(1.0));
            let j = svd_jacobi(&a).unwrap();
            assert!(ortho_defect(&j.u) <= 1e-10 && ortho_defect(&j.v) <= 1e-10);
            assert!(sigma_max_oracle(&a.sub(&j.reconstruct()).unwrap()) <= 1e-10);
        }
    }

    #[test]
    fn svd_of_rank_deficient_completes_basis() {
        let a = DenseMatrix::from_row_major(3, 4, &[1., 2., 3., 4., 2., 4., 6., 8., 0., 0., 0., 0.])
            .unwrap();
        let r = svd_truncated(&a, 3).unwrap();
        assert!(ortho_defect(&r.u) <= 1e-10);
        assert!(ortho_defect(&r.v) <= 1e-10);
        assert!(r.s[1].abs() < 1e-7 && r.s[2].abs() < 1e-7);
    }

    #[test]
    fn orthonormalize_examples() {
        let y = DenseMatrix::from_row_major(3, 2, &[2.0, 0.0, 0.0, 3.0, 0.0, 0.0]).unwrap();
        let q = orthonormalize(&y).unwrap();
        assert_eq!(q.shape(), (3, 2));
        let abs = DenseMatrix::from_fn(3, 2, |i, j| q[(i, j)].abs());
        // pivoting puts the longer column first
        let expect = DenseMatrix::from_row_major(3, 2, &[0.0, 1.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(abs.sub(&expect).unwrap().max_abs() < 1e-14);

        let dup = DenseMatrix::from_row_major(3, 2, &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let q = orthonormalize(&dup).unwrap();
        assert_eq!(q.cols(), 1);
        assert!((q[(0, 0)].abs() - 1.0).abs() < 1e-14);

        let y = rand_mat(9, 4, 3);
        let q = orthonormalize(&y).unwrap();
        assert_eq!(q.cols(), 4);
        assert!(ortho_defect(&q) <= 1e-10);
        let back = q.matmul(&q.t_matmul(&y).unwrap()).unwrap();
        assert!(sigma_max_oracle(&back.sub(&y).unwrap()) <= 1e-8 * sigma_max_oracle(&y));

        assert_eq!(orthonormalize(&DenseMatrix::zeros(4, 2)).unwrap().cols(), 0);
    }

    #[test]
    fn psd_sqrt_examples() {
        let c = psd_sqrt(&DenseMatrix::from_diag(&[4.0, 9.0])).unwrap();
        assert!(c.sub(&DenseMatrix::from_diag(&[2.0, 3.0])).unwrap().max_abs() < 1e-14);
        let c = psd_sqrt(&DenseMatrix::identity(3)).unwrap();
        assert!(c.sub(&DenseMatrix::identity(3)).unwrap().max_abs() < 1e-14);
        let g = rand_mat(4, 4, 4);
        let l = g.t_matmul(&g).unwrap().add(&DenseMatrix::identity(4)).unwrap();
        let c = psd_sqrt(&l).unwrap();
        assert!(c.asymmetry() == 0.0);
        let err = sigma_max_oracle(&c.matmul(&c).unwrap().sub(&l).unwrap());
        assert!(err <= 1e-8 * sigma_max_oracle(&l));
    }

    #[test]
    fn psd_sqrt_errors() {
        let ns = DenseMatrix::from_row_major(2, 2, &[1.0, 0.5, 0.0, 1.0]).unwrap();
        assert!(matches!(psd_sqrt(&ns), Err(crate::Error::NotSymmetric(_))));
        let neg = DenseMatrix::from_diag(&[1.0, -0.1]);
        assert!(matches!(psd_sqrt(&neg), Err(crate::Error::NotPsd(_))));
        let tiny = DenseMatrix::from_diag(&[1.0, -1e-12]);
        let c = psd_sqrt(&tiny).unwrap();
        assert_eq!(c[(1, 1)], 0.0);
    }

    #[test]
    fn sym_eigen_reconstructs() {
        let g = rand_mat(6, 6, 8);
        let s = symmetrize(&g);
        let (vals, vecs) = sym_eigen(&s);
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
        let back = vecs.scale_cols(&vals).matmul_t(&vecs).unwrap();
        assert!(back.sub(&s).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn solve_and_inverse() {
        let a = rand_mat(5, 5, 12);
        let inv = inverse(&a).unwrap();
        let id = a.matmul(&inv).unwrap();
        assert!(id.sub(&DenseMatrix::identity(5)).unwrap().max_abs() < 1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn energy_conservation(d in 2usize..9, m in 2usize..9, seed in any::<u64>()) {
            let a = rand_mat(d, m, seed);
            let r = svd_truncated(&a, d.min(m)).unwrap();
            let e: f64 = r.s.iter().map(|s| s * s).sum();
            let f = a.frobenius_norm().powi(2);
            prop_assert!((e - f).abs() <= 1e-8 * f);
            prop_assert!(r.s.windows(2).all(|w| w[0] >= w[1]) && r.s.iter().all(|&s| s >= 0.0));
        }

        #[test]
        fn truncation_residual_nonincreasing(d in 3usize..8, m in 3usize..8, seed in any::<u64>()) {
            let a = rand_mat(d, m, seed);
            let mut prev = f64::INFINITY;
            for k in 1..d.min(m) {
                let r = svd_truncated(&a, k).unwrap();
                let res = sigma_max_oracle(&a.sub(&r.reconstruct()).unwrap());
                prop_assert!(res <= prev + 1e-10);
                prev = res;
            }
        }

        #[test]
        fn interlacing(d in 3usize..8, m in 3usize..10, seed in any::<u64>()) {
            let a = rand_mat(d, m, seed);
            let sa = singular_values(&a).unwrap();
            for k in 1..=d.min(m) {
                let b = a.leading_columns(k);
                let sb = singular_values(&b).unwrap();
                prop_assert!(sa[k - 1] >= sb[k - 1] - 1e-10);
            }
        }

        #[test]
        fn weyl_perturbation(d in 2usize..7, m in 2usize..7, seed in any::<u64>()) {
            let a = rand_mat(d, m, seed);
            let n = rand_mat(d, m, seed ^ 0xABCD).scaled(0.3);
            let sa = singular_values(&a).unwrap();
            let sb = singular_values(&a.add(&n).unwrap()).unwrap();
            let nn = spectral_norm(&n, 1e-14).unwrap();
            for i in 0..sa.len() {
                prop_assert!((sa[i] - sb[i]).abs() <= nn + 1e-10);
            }
        }

        #[test]
        fn orthonormalize_idempotent(d in 3usize..10, k in 1usize..4, seed in any::<u64>()) {
            let k = k.min(d);
            let q = orthonormalize(&rand_mat(d, k, seed)).unwrap();
            let q2 = orthonormalize(&q).unwrap();
            prop_assert_eq!(q.cols(), q2.cols());
            // sine of the largest principal angle is ‖(I − QQᵀ)Q2‖₂
            let proj = q.matmul(&q.t_matmul(&q2).unwrap()).unwrap();
            let sin = sigma_max_oracle(&q2.sub(&proj).unwrap());
            prop_assert!(sin <= 1e-8);
        }
    }
}
