//! Sequential minimal optimization for the soft-margin dual
//!
//! ```text
//! min ½ αᵀQα − eᵀα   s.t.  0 ≤ αᵢ ≤ C,  yᵀα = 0,   Q_ij = y_i y_j K_ij
//! ```
//!
//! with maximal-violating-pair working-set selection. The kernel may be
//! indefinite: a non-positive curvature along the pair direction is replaced
//! by a small positive constant, so every step stays bounded.

use crate::distances::SymmetricMatrix;
use crate::kernels::GramMatrix;

/// Curvature floor for indefinite pair directions.
const MIN_CURVATURE: f64 = 1e-12;

pub const DEFAULT_TOLERANCE: f64 = 1e-3;
pub const DEFAULT_MAX_ITERATIONS: usize = 1_000_000;

/// Read access to a square kernel matrix.
pub trait KernelSource {
    fn len(&self) -> usize;
    fn get(&self, i: usize, j: usize) -> f64;
    fn id(&self, i: usize) -> u32 {
        i as u32
    }
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl KernelSource for GramMatrix {
    fn len(&self) -> usize {
        GramMatrix::len(self)
    }
    fn get(&self, i: usize, j: usize) -> f64 {
        GramMatrix::get(self, i, j)
    }
    fn id(&self, i: usize) -> u32 {
        self.model_ids()[i]
    }
}

impl KernelSource for SymmetricMatrix {
    fn len(&self) -> usize {
        SymmetricMatrix::len(self)
    }
    fn get(&self, i: usize, j: usize) -> f64 {
        SymmetricMatrix::get(self, i, j)
    }
}

/// Restriction of a kernel to a subset of its indices.
pub struct SubKernel<'a, K: KernelSource + ?Sized> {
    base: &'a K,
    indices: &'a [usize],
}

impl<'a, K: KernelSource + ?Sized> SubKernel<'a, K> {
    pub fn new(base: &'a K, indices: &'a [usize]) -> Self {
        Self { base, indices }
    }
}

impl<K: KernelSource + ?Sized> KernelSource for SubKernel<'_, K> {
    fn len(&self) -> usize {
        self.indices.len()
    }
    fn get(&self, i: usize, j: usize) -> f64 {
        self.base.get(self.indices[i], self.indices[j])
    }
    fn id(&self, i: usize) -> u32 {
        self.base.id(self.indices[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Converged,
    Updated,
}

pub struct SmoSolver<'a, K: KernelSource + ?Sized> {
    kernel: &'a K,
    y: Vec<f64>,
    penalty: f64,
    tolerance: f64,
    alpha: Vec<f64>,
    grad: Vec<f64>,
    iterations: usize,
}

impl<'a, K: KernelSource + ?Sized> SmoSolver<'a, K> {
    pub fn new(kernel: &'a K, y: &[f64], penalty: f64, tolerance: f64) -> Self {
        let n = y.len();
        Self {
            kernel,
            y: y.to_vec(),
            penalty,
            tolerance,
            alpha: vec![0.0; n],
            grad: vec![-1.0; n],
            iterations: 0,
        }
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    fn in_up(&self, t: usize) -> bool {
        if self.y[t] > 0.0 {
            self.alpha[t] < self.penalty
        } else {
            self.alpha[t] > 0.0
        }
    }

    fn in_low(&self, t: usize) -> bool {
        if self.y[t] > 0.0 {
            self.alpha[t] > 0.0
        } else {
            self.alpha[t] < self.penalty
        }
    }

    /// Maximal violating pair and its KKT gap; lowest index wins ties.
    pub fn working_pair(&self) -> Option<(usize, usize, f64)> {
        let mut best_up: Option<(usize, f64)> = None;
        let mut best_low: Option<(usize, f64)> = None;
        for t in 0..self.y.len() {
            let v = -self.y[t] * self.grad[t];
            if self.in_up(t) && best_up.is_none_or(|(_, m)| v > m) {
                best_up = Some((t, v));
            }
            if self.in_low(t) && best_low.is_none_or(|(_, m)| v < m) {
                best_low = Some((t, v));
            }
        }
        match (best_up, best_low) {
            (Some((i, m)), Some((j, big_m))) => Some((i, j, m - big_m)),
            _ => None,
        }
    }

    /// `Σα − ½αᵀQα`, the maximized dual objective.
    pub fn dual_objective(&self) -> f64 {
        -0.5 * self
            .alpha
            .iter()
            .zip(&self.grad)
            .map(|(a, g)| a * (g - 1.0))
            .sum::<f64>()
    }

    pub fn step(&mut self) -> Step {
        let Some((i, j, gap)) = self.working_pair() else {
            return Step::Converged;
        };
        if gap < self.tolerance {
            return Step::Converged;
        }
        let c = self.penalty;
        let k = self.kernel;
        let (yi, yj) = (self.y[i], self.y[j]);
        let (kii, kjj, kij) = (k.get(i, i), k.get(j, j), k.get(i, j));
        let (old_i, old_j) = (self.alpha[i], self.alpha[j]);
        let mut curvature = kii + kjj - 2.0 * kij;
        if !(curvature > 0.0) {
            curvature = MIN_CURVATURE;
        }
        let (mut ai, mut aj) = (old_i, old_j);
        if yi != yj {
            let delta = (-self.grad[i] - self.grad[j]) / curvature;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let delta = (self.grad[i] - self.grad[j]) / curvature;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        ai = ai.clamp(0.0, c);
        aj = aj.clamp(0.0, c);
        self.alpha[i] = ai;
        self.alpha[j] = aj;
        let (di, dj) = (ai - old_i, aj - old_j);
        for t in 0..self.y.len() {
            let yt = self.y[t];
            let mut g = 0.0;
            if di != 0.0 {
                g += yt * yi * k.get(t, i) * di;
            }
            if dj != 0.0 {
                g += yt * yj * k.get(t, j) * dj;
            }
            self.grad[t] += g;
        }
        self.iterations += 1;
        Step::Updated
    }

    /// Runs until convergence or `max_iterations`; returns whether it
    /// converged.
    pub fn solve(&mut self, max_iterations: usize) -> bool {
        while self.iterations < max_iterations {
            if self.step() == Step::Converged {
                return true;
            }
        }
        self.working_pair()
            .is_none_or(|(_, _, gap)| gap < self.tolerance)
    }

    /// Offset `b` of the decision function `Σ αᵢ yᵢ K(xᵢ, x) + b`.
    pub fn bias(&self) -> f64 {
        let c = self.penalty;
        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut free_sum, mut free) = (0.0, 0usize);
        for t in 0..self.y.len() {
            let yg = self.y[t] * self.grad[t];
            if self.alpha[t] >= c {
                if self.y[t] < 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else if self.alpha[t] <= 0.0 {
                if self.y[t] > 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                free += 1;
                free_sum += yg;
            }
        }
        let rho = if free > 0 {
            free_sum / free as f64
        } else {
            0.5 * (ub + lb)
        };
        -rho
    }
}
