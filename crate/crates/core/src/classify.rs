//! Region-based classification: per-region Wishart models, the minimum
//! stochastic distance classifier and the SVM front-end.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distances::{common_looks, cross_distances, distance, distance_matrix, DistanceKind};
use crate::error::{Error, Result};
use crate::hermitian::MatrixSum;
use crate::raster::{
    ClassificationMap, CovarianceRaster, LabeledDataset, MapEntry, RegionStatus, Role,
    SegmentationMap,
};
use crate::svm::{
    grid_search, predict, CellResult, KernelProblem, MulticlassModel, ParameterGrid, Selection,
    Strategy,
};
use crate::wishart::{model_from_sum, stream, WishartModel};

/// Pixel sums and fitted models per region; `None` marks a degenerate
/// region (fewer than 3 pixels or a singular estimate).
#[derive(Debug, Clone)]
pub struct RegionModels {
    looks: f64,
    sums: Vec<MatrixSum>,
    models: Vec<Option<WishartModel>>,
}

impl RegionModels {
    pub fn looks(&self) -> f64 {
        self.looks
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn model(&self, region_id: u32) -> Option<&WishartModel> {
        self.models.get(region_id as usize).and_then(|m| m.as_ref())
    }

    pub fn models(&self) -> &[Option<WishartModel>] {
        &self.models
    }

    pub fn pixel_count(&self, region_id: u32) -> usize {
        self.sums[region_id as usize].count()
    }

    pub fn degenerate(&self) -> Vec<u32> {
        (0..self.len() as u32).filter(|&r| self.model(r).is_none()).collect()
    }

    fn check_region(&self, region_id: u32) -> Result<()> {
        if region_id as usize >= self.len() {
            return Err(Error::InvalidData(format!(
                "label refers to region {region_id}, but the segmentation has {}",
                self.len()
            )));
        }
        Ok(())
    }
}

pub fn estimate_region_models(
    raster: &CovarianceRaster,
    seg: &SegmentationMap,
) -> Result<RegionModels> {
    if (raster.width(), raster.height()) != (seg.width(), seg.height()) {
        return Err(Error::DimensionMismatch {
            expected: seg.width() * seg.height(),
            got: raster.width() * raster.height(),
        });
    }
    let looks = raster.looks();
    let pixels = raster.pixels();
    let sums: Vec<MatrixSum> = seg
        .region_pixels()
        .par_iter()
        .map(|idx| {
            let mut s = MatrixSum::default();
            idx.iter().for_each(|&p| s.add(&pixels[p]));
            s
        })
        .collect();
    let models = sums
        .iter()
        .enumerate()
        .map(|(r, s)| match model_from_sum(s, looks) {
            Ok(m) => Ok(Some(m)),
            Err(Error::InsufficientPixels(_) | Error::SingularEstimate) => {
                log::info!("region {r} is degenerate ({} pixels)", s.count());
                Ok(None)
            }
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RegionModels {
        looks,
        sums,
        models,
    })
}

#[derive(Debug, Clone)]
pub struct ClassModels {
    pub classes: Vec<u32>,
    pub models: Vec<WishartModel>,
}

/// Each class model pools every pixel of that class's training regions.
pub fn estimate_class_models(regions: &RegionModels, data: &LabeledDataset) -> Result<ClassModels> {
    let classes = data.training_classes();
    if classes.is_empty() {
        return Err(Error::InvalidData("no training regions".into()));
    }
    let mut models = Vec::with_capacity(classes.len());
    for &c in &classes {
        let mut pooled = MatrixSum::default();
        for e in data.with_role(Role::Train).filter(|e| e.class_id == c) {
            regions.check_region(e.region_id)?;
            pooled = pooled.merge(&regions.sums[e.region_id as usize]);
        }
        if pooled.count() == 0 {
            return Err(Error::EmptyClass(c));
        }
        models.push(model_from_sum(&pooled, regions.looks)?);
    }
    Ok(ClassModels { classes, models })
}

/// Assigns each region the class at the smallest distance; ties go to the
/// lowest class index.
pub fn msdc_classify(
    regions: &RegionModels,
    classes: &ClassModels,
    kind: DistanceKind,
) -> Result<ClassificationMap> {
    msdc_with(regions, classes, |r, c| distance(kind, r, c))
}

pub(crate) fn msdc_with(
    regions: &RegionModels,
    classes: &ClassModels,
    dist: impl Fn(&WishartModel, &WishartModel) -> Result<f64> + Sync,
) -> Result<ClassificationMap> {
    let mut all: Vec<WishartModel> = classes.models.clone();
    all.extend(regions.models.iter().flatten().copied());
    common_looks(&all)?;
    let entries = regions
        .models
        .par_iter()
        .enumerate()
        .map(|(r, m)| {
            let region_id = r as u32;
            let Some(m) = m else {
                return MapEntry {
                    region_id,
                    class_id: None,
                    status: RegionStatus::Degenerate,
                };
            };
            let mut best: Option<(usize, f64)> = None;
            for (k, c) in classes.models.iter().enumerate() {
                match dist(m, c) {
                    // A negative value only arises from a divergent Chi-Square
                    // integral; it is as far as a distance can be.
                    Ok(d) if d.is_finite() && d >= 0.0 => match best {
                        Some((_, b)) if d > b => {}
                        Some((bk, b)) if d == b => {
                            log::debug!("region {r}: tie between classes {} and {}", classes.classes[bk], classes.classes[k]);
                        }
                        _ => best = Some((k, d)),
                    },
                    Ok(d) => log::warn!("region {r}: invalid distance {d} to class {}", classes.classes[k]),
                    Err(e) => log::warn!("region {r}: distance to class {} failed: {e}", classes.classes[k]),
                }
            }
            match best {
                Some((k, _)) => MapEntry {
                    region_id,
                    class_id: Some(classes.classes[k]),
                    status: RegionStatus::Ok,
                },
                None => MapEntry {
                    region_id,
                    class_id: None,
                    status: RegionStatus::Unclassifiable,
                },
            }
        })
        .collect();
    ClassificationMap::new(entries)
}

/// Which regions score the (C, γ) grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tuning", rename_all = "kebab-case")]
pub enum Tuning {
    /// Score on every test region, then report accuracy on the same regions.
    TestSet,
    /// Score on a seeded, per-class half of the test regions; those regions
    /// are then left out of the evaluation set.
    Validation { seed: u64 },
}

#[derive(Debug, Clone)]
pub struct SvmConfig {
    pub kind: DistanceKind,
    pub strategy: Strategy,
    pub grid: ParameterGrid,
    pub tuning: Tuning,
}

#[derive(Debug, Clone)]
pub struct SvmOutcome {
    pub map: ClassificationMap,
    pub model: MulticlassModel,
    pub penalty: f64,
    pub gamma: f64,
    pub selection_score: f64,
    pub cells: Vec<CellResult>,
    /// Labels to evaluate the map against: validation regions, if any, are
    /// moved to role `none`.
    pub evaluation: LabeledDataset,
}

/// Ids, classes and models of the usable training regions.
fn training_set(
    regions: &RegionModels,
    data: &LabeledDataset,
) -> Result<(Vec<u32>, Vec<u32>, Vec<WishartModel>)> {
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut models = Vec::new();
    for e in data.with_role(Role::Train) {
        regions.check_region(e.region_id)?;
        if let Some(m) = regions.model(e.region_id) {
            ids.push(e.region_id);
            labels.push(e.class_id);
            models.push(*m);
        }
    }
    Ok((ids, labels, models))
}

/// SVM at a fixed (C, γ) on the training regions of `data`.
pub fn train_svm(
    regions: &RegionModels,
    data: &LabeledDataset,
    kind: DistanceKind,
    strategy: Strategy,
    penalty: f64,
    gamma: f64,
) -> Result<MulticlassModel> {
    data.validate()?;
    let (ids, labels, models) = training_set(regions, data)?;
    let problem = KernelProblem::new(kind, distance_matrix(kind, &models)?, ids, labels)?;
    problem.train(strategy, penalty, gamma)
}

/// Classifies every region with a trained model. The model's training
/// regions are looked up by id, so `regions` must come from the scene the
/// model was trained on.
pub fn apply_svm_model(regions: &RegionModels, model: &MulticlassModel) -> Result<ClassificationMap> {
    let train: Vec<WishartModel> = model
        .training_ids
        .iter()
        .map(|&r| {
            regions.check_region(r)?;
            regions.model(r).copied().ok_or_else(|| {
                Error::InvalidData(format!("training region {r} has no usable model"))
            })
        })
        .collect::<Result<_>>()?;
    let ctx = &model.context;
    let entries = (0..regions.len() as u32)
        .into_par_iter()
        .map(|r| {
            let Some(m) = regions.model(r) else {
                return MapEntry {
                    region_id: r,
                    class_id: None,
                    status: RegionStatus::Degenerate,
                };
            };
            let row: Option<Vec<f64>> = train
                .iter()
                .zip(&model.training_ids)
                .map(|(t, &id)| {
                    if id == r {
                        return Some(ctx.kernel_value(0.0));
                    }
                    distance(ctx.kind, m, t)
                        .ok()
                        .filter(|d| d.is_finite())
                        .map(|d| ctx.kernel_value(ctx.metricize_clamped(d)))
                })
                .collect();
            match row.and_then(|row| predict(model, &row).ok()) {
                Some(c) => MapEntry {
                    region_id: r,
                    class_id: Some(c),
                    status: RegionStatus::Ok,
                },
                None => MapEntry {
                    region_id: r,
                    class_id: None,
                    status: RegionStatus::Unclassifiable,
                },
            }
        })
        .collect();
    ClassificationMap::new(entries)
}

/// Per class, a seeded half (rounded down) of the usable test regions.
pub fn validation_regions(regions: &RegionModels, data: &LabeledDataset, seed: u64) -> Vec<u32> {
    let mut out = Vec::new();
    for (k, c) in data.training_classes().into_iter().enumerate() {
        let mut ids: Vec<u32> = data
            .with_role(Role::Test)
            .filter(|e| e.class_id == c && regions.model(e.region_id).is_some())
            .map(|e| e.region_id)
            .collect();
        let half = ids.len() / 2;
        ids.shuffle(&mut stream(seed, k as u64));
        out.extend(ids.into_iter().take(half));
    }
    out.sort_unstable();
    out
}

pub fn svm_classify(
    regions: &RegionModels,
    data: &LabeledDataset,
    config: &SvmConfig,
) -> Result<SvmOutcome> {
    data.validate()?;
    let (train_ids, train_labels, train_models) = training_set(regions, data)?;
    let dist = distance_matrix(config.kind, &train_models)?;
    let problem = KernelProblem::new(config.kind, dist, train_ids, train_labels)?;

    let query_ids: Vec<u32> = (0..regions.len() as u32)
        .filter(|&r| regions.model(r).is_some())
        .collect();
    let query_models: Vec<WishartModel> = query_ids
        .iter()
        .map(|&r| *regions.model(r).expect("filtered"))
        .collect();
    let flat = cross_distances(config.kind, &query_models, &train_models);
    let n = train_models.len();
    let query_distances: Vec<Vec<f64>> = flat
        .chunks(n.max(1))
        .map(|row| row.iter().map(|d| d.as_ref().copied().unwrap_or(f64::NAN)).collect())
        .collect();
    let row_of = |r: u32| query_ids.binary_search(&r).ok();

    let (selection_ids, evaluation) = match config.tuning {
        Tuning::TestSet => {
            let ids: Vec<u32> = data
                .with_role(Role::Test)
                .map(|e| e.region_id)
                .filter(|&r| regions.model(r).is_some())
                .collect();
            (ids, data.clone())
        }
        Tuning::Validation { seed } => {
            let ids = validation_regions(regions, data, seed);
            let eval = data.reassign(&ids, Role::None);
            (ids, eval)
        }
    };
    let mut selection = Selection::default();
    for &r in &selection_ids {
        let k = row_of(r).expect("usable region");
        selection.ids.push(r);
        selection.distances.push(query_distances[k].clone());
        selection.truth.push(data.get(r).expect("labelled").class_id);
    }
    let result = grid_search(&problem, &selection, &config.grid, config.strategy)?;

    let all = Selection {
        ids: query_ids.clone(),
        distances: query_distances,
        truth: vec![0; query_ids.len()],
    };
    let predicted = problem.predict_all(&result.model, &all);
    let entries = (0..regions.len() as u32)
        .map(|r| match row_of(r) {
            None => MapEntry {
                region_id: r,
                class_id: None,
                status: RegionStatus::Degenerate,
            },
            Some(k) => match predicted[k] {
                Some(c) => MapEntry {
                    region_id: r,
                    class_id: Some(c),
                    status: RegionStatus::Ok,
                },
                None => MapEntry {
                    region_id: r,
                    class_id: None,
                    status: RegionStatus::Unclassifiable,
                },
            },
        })
        .collect();
    Ok(SvmOutcome {
        map: ClassificationMap::new(entries)?,
        model: result.model,
        penalty: result.penalty,
        gamma: result.gamma,
        selection_score: result.score,
        cells: result.cells,
        evaluation,
    })
}
