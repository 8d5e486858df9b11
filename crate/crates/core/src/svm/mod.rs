//! Soft-margin SVMs on precomputed kernels.

mod grid;
mod multiclass;
mod smo;

pub use grid::{grid_search, CellResult, GridResult, KernelProblem, ParameterGrid, Selection};
pub use multiclass::{predict, train_multiclass, BinaryEntry, MulticlassModel, Strategy};
pub use smo::{
    KernelSource, SmoSolver, Step, SubKernel, DEFAULT_MAX_ITERATIONS, DEFAULT_TOLERANCE,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvmModel {
    pub alpha: Vec<f64>,
    pub labels: Vec<f64>,
    pub bias: f64,
    pub penalty: f64,
    pub support_ids: Vec<u32>,
    pub converged: bool,
    pub iterations: usize,
}

impl BinarySvmModel {
    /// `Σ αᵢ yᵢ K(xᵢ, x) + b` for a kernel row aligned with training order.
    pub fn decision(&self, kernel_row: &[f64]) -> Result<f64> {
        if kernel_row.len() != self.alpha.len() {
            return Err(Error::DimensionMismatch {
                expected: self.alpha.len(),
                got: kernel_row.len(),
            });
        }
        Ok(self.decision_unchecked(kernel_row.iter().copied()))
    }

    pub(crate) fn decision_unchecked(&self, row: impl Iterator<Item = f64>) -> f64 {
        let mut s = self.bias;
        for ((a, y), k) in self.alpha.iter().zip(&self.labels).zip(row) {
            if *a != 0.0 {
                s += a * y * k;
            }
        }
        s
    }

    /// `Σ αᵢ yᵢ`, which the solver keeps at zero.
    pub fn equality_residual(&self) -> f64 {
        self.alpha
            .iter()
            .zip(&self.labels)
            .map(|(a, y)| a * y)
            .sum()
    }
}

pub fn train_binary<K: KernelSource + ?Sized>(
    gram: &K,
    labels: &[f64],
    penalty: f64,
) -> Result<BinarySvmModel> {
    train_binary_with(gram, labels, penalty, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERATIONS)
}

pub fn train_binary_with<K: KernelSource + ?Sized>(
    gram: &K,
    labels: &[f64],
    penalty: f64,
    tolerance: f64,
    max_iterations: usize,
) -> Result<BinarySvmModel> {
    if gram.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: gram.len(),
            got: labels.len(),
        });
    }
    if !(penalty > 0.0 && penalty.is_finite()) {
        return Err(Error::InvalidParameter(format!("penalty must be positive, got {penalty}")));
    }
    if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
        return Err(Error::InvalidParameter("labels must be +1 or -1".into()));
    }
    if !(labels.contains(&1.0) && labels.contains(&-1.0)) {
        return Err(Error::OneClassOnly);
    }
    let mut solver = SmoSolver::new(gram, labels, penalty, tolerance);
    let converged = solver.solve(max_iterations);
    if !converged {
        log::warn!(
            "SMO stopped after {} iterations without meeting the KKT tolerance",
            solver.iterations()
        );
    }
    let alpha = solver.alpha().to_vec();
    let support_ids = alpha
        .iter()
        .enumerate()
        .filter(|(_, a)| **a > 0.0)
        .map(|(i, _)| gram.id(i))
        .collect();
    Ok(BinarySvmModel {
        bias: solver.bias(),
        alpha,
        labels: labels.to_vec(),
        penalty,
        support_ids,
        converged,
        iterations: solver.iterations(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distances::SymmetricMatrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_point() -> SymmetricMatrix {
        SymmetricMatrix::from_fn(2, |i, j| if i == j { 1.0 } else { 0.1 })
    }

    #[test]
    fn two_point_matches_analytic_dual() {
        // With α₁ = α₂ = a the dual is 2a − a²(K11 − K12), maximized at
        // a = 1/(1 − 0.1), which lies inside the box for C = 10.
        let m = train_binary(&two_point(), &[1.0, -1.0], 10.0).unwrap();
        let a = 1.0 / 0.9;
        assert!((m.alpha[0] - a).abs() < 1e-9, "{:?}", m.alpha);
        assert!((m.alpha[1] - a).abs() < 1e-9);
        assert!(m.bias.abs() < 1e-9);
        let d0 = m.decision(&[1.0, 0.1]).unwrap();
        let d1 = m.decision(&[0.1, 1.0]).unwrap();
        assert!((d0 - 1.0).abs() < 1e-9 && (d1 + 1.0).abs() < 1e-9);
        assert!(m.converged);
        assert_eq!(m.support_ids, vec![0, 1]);
    }

    #[test]
    fn two_point_with_tight_box() {
        // The unconstrained optimum 1/0.9 is clipped to C.
        let m = train_binary(&two_point(), &[1.0, -1.0], 0.5).unwrap();
        assert_eq!(m.alpha, vec![0.5, 0.5]);
    }

    #[test]
    fn rejects_single_class() {
        let r = train_binary(&two_point(), &[1.0, 1.0], 1.0);
        assert!(matches!(r, Err(Error::OneClassOnly)));
    }

    #[test]
    fn rejects_length_mismatch() {
        let r = train_binary(&two_point(), &[1.0, -1.0, 1.0], 1.0);
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
        let m = train_binary(&two_point(), &[1.0, -1.0], 1.0).unwrap();
        assert!(matches!(m.decision(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn zero_alphas_give_bias() {
        let m = BinarySvmModel {
            alpha: vec![0.0; 3],
            labels: vec![1.0, -1.0, 1.0],
            bias: 0.37,
            penalty: 1.0,
            support_ids: vec![],
            converged: true,
            iterations: 0,
        };
        assert_eq!(m.decision(&[5.0, -2.0, 9.0]).unwrap(), 0.37);
    }

    /// Gaussian kernel on points in the plane, classes on either side of x=0.
    pub(crate) fn separable(n: usize, seed: u64) -> (SymmetricMatrix, Vec<f64>, Vec<[f64; 2]>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<[f64; 2]> = (0..n)
            .map(|i| {
                let side = if i % 2 == 0 { 1.0 } else { -1.0 };
                [side * rng.random_range(0.5..2.0), rng.random_range(-1.0..1.0)]
            })
            .collect();
        let y = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let k = SymmetricMatrix::from_fn(n, |i, j| rbf(&pts[i], &pts[j]));
        (k, y, pts)
    }

    fn rbf(a: &[f64; 2], b: &[f64; 2]) -> f64 {
        (-((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)) / 2.0).exp()
    }

    #[test]
    fn separable_toy_is_fit_exactly() {
        let (k, y, _) = separable(20, 7);
        let m = train_binary(&k, &y, 1000.0).unwrap();
        for i in 0..20 {
            let d = m.decision(k.row(i)).unwrap();
            assert_eq!(d.signum(), y[i], "example {i}: {d}");
        }
        assert!(m.equality_residual().abs() <= 1e-8);
    }

    #[test]
    fn free_support_vectors_sit_on_the_margin() {
        let (k, y, _) = separable(30, 11);
        let m = train_binary(&k, &y, 5.0).unwrap();
        assert!(m.converged);
        let mut free = 0;
        for i in 0..30 {
            if m.alpha[i] > 1e-8 && m.alpha[i] < m.penalty - 1e-8 {
                free += 1;
                let d = m.decision(k.row(i)).unwrap();
                assert!((d.abs() - 1.0).abs() < 1e-3, "example {i}: {d}");
            }
        }
        assert!(free > 0);
    }

    #[test]
    fn decision_matches_direct_sum() {
        let (k, y, pts) = separable(16, 3);
        let m = train_binary(&k, &y, 10.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let q = [rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0)];
            let row: Vec<f64> = pts.iter().map(|p| rbf(p, &q)).collect();
            let mut naive = m.bias;
            for i in 0..16 {
                naive += m.alpha[i] * m.labels[i] * row[i];
            }
            assert!((m.decision(&row).unwrap() - naive).abs() < 1e-10);
        }
    }

    #[test]
    fn duplicated_examples_keep_the_decision_function() {
        let (k, y, pts) = separable(12, 5);
        let m = train_binary_with(&k, &y, 10.0, 1e-9, DEFAULT_MAX_ITERATIONS).unwrap();
        let n = pts.len();
        let k2 = SymmetricMatrix::from_fn(2 * n, |i, j| k.get(i % n, j % n));
        let y2: Vec<f64> = (0..2 * n).map(|i| y[i % n]).collect();
        let m2 = train_binary_with(&k2, &y2, 10.0, 1e-9, DEFAULT_MAX_ITERATIONS).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let q = [rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0)];
            let row: Vec<f64> = pts.iter().map(|p| rbf(p, &q)).collect();
            let row2: Vec<f64> = (0..2 * n).map(|i| row[i % n]).collect();
            let a = m.decision(&row).unwrap();
            let b = m2.decision(&row2).unwrap();
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn dual_objective_never_decreases_on_psd_gram() {
        let (k, y, _) = separable(24, 21);
        let mut s = SmoSolver::new(&k, &y, 3.0, 1e-6);
        let mut last = s.dual_objective();
        while s.step() == Step::Updated {
            let now = s.dual_objective();
            assert!(now >= last - 1e-12, "{now} < {last}");
            last = now;
        }
        assert!(last > 0.0);
    }

    #[test]
    fn indefinite_gram_still_terminates() {
        let k = SymmetricMatrix::from_fn(4, |i, j| {
            if i == j {
                1.0
            } else if (i + j) % 2 == 1 {
                0.9
            } else {
                -0.8
            }
        });
        let m = train_binary(&k, &[1.0, -1.0, 1.0, -1.0], 100.0).unwrap();
        assert!(m.alpha.iter().all(|&a| (0.0..=100.0).contains(&a)));
        assert!(m.equality_residual().abs() <= 1e-8);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn box_and_equality_hold(seed in 0u64..10_000, n in 4usize..30, c in 0.1f64..1e4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // Random symmetric matrix with unit diagonal, possibly indefinite.
            let mut k = SymmetricMatrix::zeros(n);
            for i in 0..n {
                k.set(i, i, 1.0);
                for j in i + 1..n {
                    k.set(i, j, rng.random_range(-1.0..1.0));
                }
            }
            let mut y: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
            y[0] = 1.0;
            y[1] = -1.0;
            let m = train_binary(&k, &y, c).unwrap();
            for &a in &m.alpha {
                prop_assert!((0.0..=c).contains(&a));
            }
            prop_assert!(m.equality_residual().abs() <= 1e-8);
        }
    }
}
