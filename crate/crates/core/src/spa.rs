//! Successive projection algorithm.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm2, DenseMatrix};

/// Relative slack under which two residual norms count as tied.
pub const TIE_RTOL: f64 = 1e-13;

/// Columns below this fraction of `‖A‖_F` are treated as numerically zero.
pub const DEGENERATE_RTOL: f64 = 1e-12;

/// Ordered list of selected 0-based column indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IndexSet(Vec<usize>);

impl IndexSet {
    /// Wraps indices, rejecting duplicates.
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        let mut s = indices.clone();
        s.sort_unstable();
        if s.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Invalid(format!("duplicate index in {indices:?}")));
        }
        Ok(IndexSet(indices))
    }

    /// 1-based indices as shown to users.
    pub fn from_one_based(indices: &[usize]) -> Result<Self> {
        if indices.contains(&0) {
            return Err(Error::Invalid("1-based index 0".into()));
        }
        Self::new(indices.iter().map(|i| i - 1).collect())
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.contains(&i)
    }

    pub fn sorted(&self) -> Vec<usize> {
        let mut s = self.0.clone();
        s.sort_unstable();
        s
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.0.iter().map(|i| i + 1).collect()
    }

    /// Same elements regardless of order.
    pub fn set_eq(&self, other: &IndexSet) -> bool {
        self.sorted() == other.sorted()
    }

    /// `A(I)`.
    pub fn extract(&self, a: &DenseMatrix) -> DenseMatrix {
        a.select_columns(&self.0)
    }

    /// Maps indices of a column subset back to the parent matrix.
    pub fn remap(&self, parent: &[usize]) -> IndexSet {
        IndexSet(self.0.iter().map(|&i| parent[i]).collect())
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }
}

/// Selection together with the squared residual norm of each pick.
#[derive(Debug, Clone)]
pub struct SpaTrace {
    pub indices: IndexSet,
    pub picked_sq_norms: Vec<f64>,
}

/// Squared residual norms after projecting out a unit pivot direction:
/// `‖a‖² − (aᵀb)²`, clamped at zero.
pub fn residual_update(sq_norms: &[f64], dots: &[f64]) -> Vec<f64> {
    sq_norms
        .iter()
        .zip(dots)
        .map(|(s, d)| (s - d * d).max(0.0))
        .collect()
}

/// Index of the largest value; values within [`TIE_RTOL`] of the maximum tie
/// and the smallest such index wins.
pub fn tie_argmax(values: &[f64]) -> usize {
    let vmax = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let floor = vmax - TIE_RTOL * vmax.abs();
    values.iter().position(|&v| v >= floor).unwrap_or(0)
}

/// Selects `k` columns of `a` by SPA.
pub fn spa_select(a: &DenseMatrix, k: usize) -> Result<IndexSet> {
    Ok(spa_select_traced(a, k)?.indices)
}

/// [`spa_select`] that also reports the squared residual norm of every pick.
pub fn spa_select_traced(a: &DenseMatrix, k: usize) -> Result<SpaTrace> {
    a.ensure_finite()?;
    let (d, m) = a.shape();
    let max = d.min(m);
    if k == 0 || k > max {
        return Err(Error::BadRank { k, max });
    }
    let fro = a.frobenius_norm();
    let floor = DEGENERATE_RTOL * fro;
    let mut sq = a.column_sq_norms();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut picked = Vec::with_capacity(k);
    let mut picked_sq = Vec::with_capacity(k);
    for round in 0..k {
        let j = tie_argmax(&sq);
        if fro == 0.0 || sq[j].sqrt() <= floor {
            return Err(Error::DegenerateInput { k, round });
        }
        // explicit pivot residual, projected twice for stability
        let mut t = a.col(j).to_vec();
        for _ in 0..2 {
            for u in &basis {
                let c = dot(u, &t);
                axpy(-c, u, &mut t);
            }
        }
        let tn = norm2(&t);
        if tn <= floor {
            return Err(Error::DegenerateInput { k, round });
        }
        t.iter_mut().for_each(|v| *v /= tn);
        let dots = a.t_matvec(&t);
        picked_sq.push(sq[j]);
        sq = residual_update(&sq, &dots);
        sq[j] = 0.0;
        picked.push(j);
        basis.push(t);
    }
    Ok(SpaTrace {
        indices: IndexSet(picked),
        picked_sq_norms: picked_sq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;
    use proptest::prelude::*;

    /// Reference SPA that materializes the projector and recomputes every
    /// residual norm from scratch.
    fn naive_spa(a: &DenseMatrix, k: usize) -> Vec<usize> {
        let d = a.rows();
        let mut p = DenseMatrix::identity(d);
        let mut out = Vec::new();
        for _ in 0..k {
            let r = p.matmul(a).unwrap();
            let norms: Vec<f64> = (0..a.cols())
                .map(|j| r.col(j).iter().map(|x| x * x).sum())
                .collect();
            let j = tie_argmax(&norms);
            out.push(j);
            let t = r.col(j).to_vec();
            let tt: f64 = t.iter().map(|x| x * x).sum();
            let proj = DenseMatrix::from_fn(d, d, |i, l| {
                (if i == l { 1.0 } else { 0.0 }) - t[i] * t[l] / tt
            });
            p = proj.matmul(&p).unwrap();
        }
        out
    }

    #[test]
    fn simplex_vertices() {
        let a = DenseMatrix::from_row_major(2, 3, &[1.0, 0.0, 0.5, 0.0, 1.0, 0.5]).unwrap();
        assert_eq!(spa_select(&a, 2).unwrap().as_slice(), &[0, 1]);
    }

    #[test]
    fn identity_in_order() {
        let a = DenseMatrix::identity(3);
        assert_eq!(spa_select(&a, 3).unwrap().as_slice(), &[0, 1, 2]);
    }

    #[test]
    fn recovers_noiseless_vertices() {
        let inst = crate::synth::generate_instance(6, 40, 4, 0.0, 17, None).unwrap();
        let got = spa_select(&inst.a, 4).unwrap();
        assert!(got.set_eq(&inst.true_indices));
        assert_eq!(got.as_slice(), naive_spa(&inst.a, 4).as_slice());
    }

    #[test]
    fn residual_update_examples() {
        // a = (3,4), b = (1,0)
        assert_eq!(residual_update(&[25.0], &[3.0]), vec![16.0]);
        // a parallel to unit b
        assert_eq!(residual_update(&[4.0], &[2.0]), vec![0.0]);
        assert_eq!(residual_update(&[1.0], &[1.0 + 1e-15]), vec![0.0]);
        let mut s = Stream::new(21);
        for _ in 0..20 {
            let a: Vec<f64> = (0..5).map(|_| s.normal()).collect();
            let mut b: Vec<f64> = (0..5).map(|_| s.normal()).collect();
            let nb = norm2(&b);
            b.iter_mut().for_each(|x| *x /= nb);
            let c = dot(&a, &b);
            let explicit: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - c * y).collect();
            let upd = residual_update(&[dot(&a, &a)], &[c])[0];
            assert!((upd - dot(&explicit, &explicit)).abs() < 1e-10);
        }
    }

    #[test]
    fn errors() {
        let a = DenseMatrix::identity(3);
        assert!(matches!(spa_select(&a, 4), Err(Error::BadRank { .. })));
        let rank1 = DenseMatrix::from_fn(3, 5, |i, j| (i + 1) as f64 * (j + 1) as f64);
        assert!(matches!(
            spa_select(&rank1, 2),
            Err(Error::DegenerateInput { k: 2, round: 1 })
        ));
    }

    #[test]
    fn fast_matches_naive_on_random_inputs() {
        for case in 0..100u64 {
            let a = Stream::new(1000 + case).gaussian_matrix(10, 50);
            let k = 1 + (case as usize % 8);
            assert_eq!(spa_select(&a, k).unwrap().into_vec(), naive_spa(&a, k), "case {case}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn picks_distinct_and_monotone(d in 2usize..8, m in 2usize..30, seed in any::<u64>()) {
            let a = Stream::new(seed).uniform_matrix(d, m);
            let k = d.min(m);
            let tr = spa_select_traced(&a, k).unwrap();
            let mut s = tr.indices.sorted();
            s.dedup();
            prop_assert_eq!(s.len(), k);
            prop_assert!(tr.picked_sq_norms.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        }

        #[test]
        fn matches_naive(d in 2usize..7, m in 2usize..25, seed in any::<u64>()) {
            let a = Stream::new(seed).gaussian_matrix(d, m);
            let k = d.min(m);
            prop_assert_eq!(spa_select(&a, k).unwrap().into_vec(), naive_spa(&a, k));
        }
    }
}
