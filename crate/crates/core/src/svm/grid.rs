//! Exhaustive (C, γ) search with the distance matrix computed once.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::multiclass::{predict, train_multiclass, MulticlassModel, Strategy};
use crate::distances::{DistanceKind, SymmetricMatrix};
use crate::error::{Error, Result};
use crate::kernels::{tau_from_distances, GramMatrix, MetricContext};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterGrid {
    pub penalties: Vec<f64>,
    pub gammas: Vec<f64>,
}

impl Default for ParameterGrid {
    /// C ∈ {1, 10, …, 10⁴} and γ ∈ {0.05, 0.10, …, 10.0}.
    fn default() -> Self {
        Self {
            penalties: vec![1.0, 10.0, 100.0, 1000.0, 10000.0],
            gammas: (1..=200).map(|k| k as f64 / 20.0).collect(),
        }
    }
}

impl ParameterGrid {
    pub fn single(penalty: f64, gamma: f64) -> Self {
        Self {
            penalties: vec![penalty],
            gammas: vec![gamma],
        }
    }

    pub fn len(&self) -> usize {
        self.penalties.len() * self.gammas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Training side of a kernel problem: pairwise distances between the
/// training models and their labels.
#[derive(Debug, Clone)]
pub struct KernelProblem {
    pub kind: DistanceKind,
    pub tau: f64,
    pub distances: SymmetricMatrix,
    pub ids: Vec<u32>,
    pub labels: Vec<u32>,
}

impl KernelProblem {
    pub fn new(
        kind: DistanceKind,
        distances: SymmetricMatrix,
        ids: Vec<u32>,
        labels: Vec<u32>,
    ) -> Result<Self> {
        for len in [ids.len(), labels.len()] {
            if len != distances.len() {
                return Err(Error::DimensionMismatch {
                    expected: distances.len(),
                    got: len,
                });
            }
        }
        let tau = tau_from_distances(&distances)?;
        Ok(Self {
            kind,
            tau,
            distances,
            ids,
            labels,
        })
    }

    pub fn context(&self, gamma: f64) -> Result<MetricContext> {
        MetricContext::new(self.kind, self.tau, gamma)
    }

    pub fn gram(&self, gamma: f64) -> Result<GramMatrix> {
        GramMatrix::from_distances(self.context(gamma)?, &self.distances, self.ids.clone())
    }

    /// Kernel row for a query region given its distances to the training
    /// models; `None` if any distance is missing.
    pub fn kernel_row(
        &self,
        ctx: &MetricContext,
        query_id: Option<u32>,
        distances: &[f64],
    ) -> Option<Vec<f64>> {
        if distances.len() != self.ids.len() || distances.iter().any(|d| !d.is_finite()) {
            return None;
        }
        Some(
            distances
                .iter()
                .zip(&self.ids)
                .map(|(&d, &id)| {
                    let m = if Some(id) == query_id {
                        0.0
                    } else {
                        ctx.metricize_clamped(d)
                    };
                    ctx.kernel_value(m)
                })
                .collect(),
        )
    }

    pub fn train(&self, strategy: Strategy, penalty: f64, gamma: f64) -> Result<MulticlassModel> {
        train_multiclass(&self.gram(gamma)?, &self.labels, strategy, penalty)
    }

    /// Predicted class per query; `None` where the query has failed
    /// distances.
    pub fn predict_all(&self, model: &MulticlassModel, queries: &Selection) -> Vec<Option<u32>> {
        queries
            .distances
            .iter()
            .zip(&queries.ids)
            .map(|(d, &id)| {
                self.kernel_row(&model.context, Some(id), d)
                    .and_then(|row| predict(model, &row).ok())
            })
            .collect()
    }
}

/// Regions used to score grid cells: their distances to every training
/// model (NaN where a distance failed) and their true classes.
#[derive(Debug, Clone, Default)]
pub struct Selection {
    pub ids: Vec<u32>,
    pub distances: Vec<Vec<f64>>,
    pub truth: Vec<u32>,
}

impl Selection {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Fraction of queries predicted correctly; missing predictions count
    /// as wrong.
    pub fn accuracy(&self, predicted: &[Option<u32>]) -> f64 {
        let hits = predicted
            .iter()
            .zip(&self.truth)
            .filter(|(p, t)| **p == Some(**t))
            .count();
        hits as f64 / self.truth.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub penalty: f64,
    pub gamma: f64,
    pub score: Option<f64>,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub model: MulticlassModel,
    pub penalty: f64,
    pub gamma: f64,
    pub score: f64,
    pub cells: Vec<CellResult>,
}

/// Trains every cell and keeps the one with the best selection accuracy;
/// ties go to the smaller C, then the smaller γ. Failed cells are recorded
/// and skipped.
pub fn grid_search(
    problem: &KernelProblem,
    selection: &Selection,
    grid: &ParameterGrid,
    strategy: Strategy,
) -> Result<GridResult> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty parameter grid".into()));
    }
    if selection.is_empty() {
        return Err(Error::InvalidParameter("empty selection set".into()));
    }
    let per_gamma: Vec<Vec<(CellResult, Option<MulticlassModel>)>> = grid
        .gammas
        .par_iter()
        .map(|&gamma| {
            let gram = problem.gram(gamma);
            grid.penalties
                .iter()
                .map(|&penalty| {
                    let fitted = gram.as_ref().map_err(|e| e.to_string()).and_then(|g| {
                        train_multiclass(g, &problem.labels, strategy, penalty)
                            .map_err(|e| e.to_string())
                    });
                    match fitted {
                        Ok(model) => {
                            let score = selection.accuracy(&problem.predict_all(&model, selection));
                            let cell = CellResult {
                                penalty,
                                gamma,
                                score: Some(score),
                                converged: model.all_converged(),
                                error: None,
                            };
                            (cell, Some(model))
                        }
                        Err(e) => (
                            CellResult {
                                penalty,
                                gamma,
                                score: None,
                                converged: false,
                                error: Some(e),
                            },
                            None,
                        ),
                    }
                })
                .collect()
        })
        .collect();

    let mut flat: Vec<(CellResult, Option<MulticlassModel>)> =
        per_gamma.into_iter().flatten().collect();
    flat.sort_by(|a, b| {
        a.0.penalty
            .total_cmp(&b.0.penalty)
            .then(a.0.gamma.total_cmp(&b.0.gamma))
    });
    let mut best: Option<usize> = None;
    for (k, (cell, _)) in flat.iter().enumerate() {
        if let Some(s) = cell.score {
            if best.is_none_or(|b| s > flat[b].0.score.expect("scored")) {
                best = Some(k);
            }
        }
    }
    let Some(b) = best else {
        let reason = flat
            .iter()
            .find_map(|(c, _)| c.error.clone())
            .unwrap_or_default();
        return Err(Error::InvalidData(format!("every grid cell failed: {reason}")));
    };
    let (penalty, gamma, score) = (flat[b].0.penalty, flat[b].0.gamma, flat[b].0.score.unwrap());
    let model = flat[b].1.take().expect("scored cell has a model");
    let failed = flat.iter().filter(|(c, _)| c.score.is_none()).count();
    if failed > 0 {
        log::warn!("{failed} of {} grid cells failed", flat.len());
    }
    Ok(GridResult {
        model,
        penalty,
        gamma,
        score,
        cells: flat.into_iter().map(|(c, _)| c).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Distances from 1-D positions, three classes of three training regions
    /// plus queries near each cluster.
    fn toy() -> (KernelProblem, Selection) {
        let xs: [f64; 9] = [0.0, 0.2, 0.4, 3.0, 3.2, 3.4, 6.0, 6.2, 6.4];
        let labels = vec![0, 0, 0, 1, 1, 1, 2, 2, 2];
        let d = SymmetricMatrix::from_fn(9, |i, j| (xs[i] - xs[j]).abs() * 0.5);
        let p = KernelProblem::new(
            DistanceKind::KullbackLeibler,
            d,
            (0..9).collect(),
            labels,
        )
        .unwrap();
        let qs: [f64; 6] = [0.1, 0.5, 2.9, 3.6, 6.1, 5.8];
        let sel = Selection {
            ids: (100..106).collect(),
            distances: qs
                .iter()
                .map(|q| xs.iter().map(|x| (x - q).abs() * 0.5).collect())
                .collect(),
            truth: vec![0, 0, 1, 1, 2, 2],
        };
        (p, sel)
    }

    #[test]
    fn default_grid_shape() {
        let g = ParameterGrid::default();
        assert_eq!(g.len(), 1000);
        assert_eq!(g.gammas[0], 0.05);
        assert_eq!(*g.gammas.last().unwrap(), 10.0);
        assert_eq!(g.gammas[2], 0.15);
    }

    #[test]
    fn single_cell_grid_returns_that_cell() {
        let (p, sel) = toy();
        let r = grid_search(&p, &sel, &ParameterGrid::single(10.0, 0.5), Strategy::Oao).unwrap();
        assert_eq!((r.penalty, r.gamma), (10.0, 0.5));
        assert_eq!(r.cells.len(), 1);
        let direct = p.train(Strategy::Oao, 10.0, 0.5).unwrap();
        assert_eq!(direct, r.model);
    }

    #[test]
    fn returned_cell_dominates() {
        let (p, sel) = toy();
        let grid = ParameterGrid {
            penalties: vec![1.0, 10.0, 100.0],
            gammas: vec![0.05, 0.5, 2.0, 8.0],
        };
        for s in [Strategy::Oaa, Strategy::Oao] {
            let r = grid_search(&p, &sel, &grid, s).unwrap();
            assert_eq!(r.cells.len(), 12);
            for c in &r.cells {
                assert!(c.score.unwrap() <= r.score);
            }
            // Tie-breaking: no earlier (smaller C, then γ) cell reaches the score.
            let first = r
                .cells
                .iter()
                .find(|c| c.score == Some(r.score))
                .unwrap();
            assert_eq!((first.penalty, first.gamma), (r.penalty, r.gamma));
            assert_eq!(r.score, 1.0);
        }
    }

    #[test]
    fn failing_cells_are_marked() {
        let (mut p, sel) = toy();
        // A τ smaller than the largest distance makes every Gram invalid.
        p.tau = 0.1;
        let r = grid_search(&p, &sel, &ParameterGrid::single(1.0, 1.0), Strategy::Oao);
        assert!(matches!(r, Err(Error::InvalidData(_))));
    }

    #[test]
    fn missing_query_distances_count_as_wrong() {
        let (p, mut sel) = toy();
        sel.distances[0][3] = f64::NAN;
        let m = p.train(Strategy::Oaa, 10.0, 0.5).unwrap();
        let pred = p.predict_all(&m, &sel);
        assert_eq!(pred[0], None);
        assert!(sel.accuracy(&pred) < 1.0);
    }
}
