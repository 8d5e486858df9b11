//! Repeated classification of independently simulated scenes.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{
    estimate_class_models, estimate_region_models, msdc_classify, svm_classify, RegionModels,
    SvmConfig, Tuning,
};
use crate::distances::DistanceKind;
use crate::error::{Error, Result};
use crate::eval::{kappa, region_confusion, region_score, ComparisonReport};
use crate::raster::{ClassificationMap, LabeledDataset};
use crate::reference::ClassManifest;
use crate::simulate::{build_phantom, simulate_scene, PerturbationSpec, PhantomSpec};
use crate::svm::{ParameterGrid, Strategy};
use crate::wishart::stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Msdc,
    SvmOaa,
    SvmOao,
}

impl Method {
    pub fn all() -> [Method; 3] {
        [Method::Msdc, Method::SvmOaa, Method::SvmOao]
    }

    pub fn label(&self) -> &'static str {
        match self {
            Method::Msdc => "MSDC",
            Method::SvmOaa => "OAA",
            Method::SvmOao => "OAO",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Msdc => "msdc",
            Method::SvmOaa => "svm-oaa",
            Method::SvmOao => "svm-oao",
        })
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "msdc" => Ok(Method::Msdc),
            "svm-oaa" | "oaa" => Ok(Method::SvmOaa),
            "svm-oao" | "oao" => Ok(Method::SvmOao),
            _ => Err(Error::InvalidParameter(format!("unknown method {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    SixClass,
    ThreeClass,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::SixClass => "six-class",
            Scenario::ThreeClass => "three-class",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TuningMode {
    /// Tune (C, γ) on the test regions themselves.
    TestSet,
    /// Tune on a seeded half of the test regions and evaluate on the rest.
    Validation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub images: usize,
    pub seed: u64,
    pub phantom: PhantomSpec,
    pub perturbation: PerturbationSpec,
    pub classes: ClassManifest,
    pub methods: Vec<Method>,
    pub kinds: Vec<DistanceKind>,
    pub scenarios: Vec<Scenario>,
    pub grid: ParameterGrid,
    pub tuning: TuningMode,
    /// Paired t tests over images instead of pooled-variance ones.
    #[serde(default)]
    pub paired: bool,
}

impl ExperimentConfig {
    /// Desk-scale profile: every method, the four well-behaved distances,
    /// both scenarios.
    pub fn desk(classes: ClassManifest) -> Self {
        Self {
            images: 10,
            seed: 1,
            phantom: PhantomSpec::desk(),
            perturbation: PerturbationSpec::desk(),
            classes,
            methods: Method::all().to_vec(),
            kinds: vec![
                DistanceKind::Bhattacharyya,
                DistanceKind::KullbackLeibler,
                DistanceKind::Renyi {
                    beta: crate::distances::DEFAULT_RENYI_ORDER,
                },
                DistanceKind::Hellinger,
            ],
            scenarios: vec![Scenario::SixClass, Scenario::ThreeClass],
            grid: ParameterGrid::default(),
            tuning: TuningMode::TestSet,
            paired: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub image: usize,
    pub seed: u64,
    pub scenario: Scenario,
    pub method: Method,
    pub kind: String,
    pub accuracy: Option<f64>,
    pub kappa: Option<f64>,
    pub kappa_variance: Option<f64>,
    pub unclassified: usize,
    pub seconds: f64,
    pub penalty: Option<f64>,
    pub gamma: Option<f64>,
    pub converged: Option<bool>,
    pub failed_cells: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: Scenario,
    pub method: Method,
    pub kind: String,
    pub runs: usize,
    pub failures: usize,
    pub mean_accuracy: Option<f64>,
    pub min_accuracy: Option<f64>,
    pub max_accuracy: Option<f64>,
    pub mean_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioComparison {
    pub scenario: Scenario,
    pub report: ComparisonReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub rows: Vec<ExperimentRow>,
    pub summary: Vec<SummaryRow>,
    pub comparisons: Vec<ScenarioComparison>,
}

impl ExperimentReport {
    /// Accuracies over images for one combination, `None` where a run
    /// failed.
    pub fn accuracies(&self, scenario: Scenario, method: Method, kind: &str) -> Vec<Option<f64>> {
        self.rows
            .iter()
            .filter(|r| r.scenario == scenario && r.method == method && r.kind == kind)
            .map(|r| r.accuracy)
            .collect()
    }

    pub fn summary_for(&self, scenario: Scenario, method: Method, kind: &str) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|r| r.scenario == scenario && r.method == method && r.kind == kind)
    }

    pub fn rows_csv(&self) -> String {
        let mut out = String::from(
            "image,seed,scenario,method,kind,accuracy,kappa,kappa_variance,unclassified,seconds,penalty,gamma,converged,failed_cells,error\n",
        );
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{:.6},{},{},{},{},{}\n",
                r.image,
                r.seed,
                r.scenario,
                r.method,
                r.kind,
                opt(r.accuracy),
                opt(r.kappa),
                opt(r.kappa_variance),
                r.unclassified,
                r.seconds,
                opt(r.penalty),
                opt(r.gamma),
                r.converged.map_or(String::new(), |c| c.to_string()),
                r.failed_cells,
                r.error.as_deref().unwrap_or("").replace([',', '\n'], ";"),
            ));
        }
        out
    }
}

/// Per-image seed derived from the master seed.
pub fn image_seed(master: u64, image: usize) -> u64 {
    stream(master, image as u64).next_u64()
}

struct Outcome {
    map: ClassificationMap,
    evaluation: LabeledDataset,
    penalty: Option<f64>,
    gamma: Option<f64>,
    converged: Option<bool>,
    failed_cells: usize,
}

fn classify_once(
    regions: &RegionModels,
    data: &LabeledDataset,
    method: Method,
    kind: DistanceKind,
    grid: &ParameterGrid,
    tuning: Tuning,
) -> Result<Outcome> {
    let strategy = match method {
        Method::Msdc => {
            let classes = estimate_class_models(regions, data)?;
            return Ok(Outcome {
                map: msdc_classify(regions, &classes, kind)?,
                evaluation: data.clone(),
                penalty: None,
                gamma: None,
                converged: None,
                failed_cells: 0,
            });
        }
        Method::SvmOaa => Strategy::Oaa,
        Method::SvmOao => Strategy::Oao,
    };
    let out = svm_classify(
        regions,
        data,
        &SvmConfig {
            kind,
            strategy,
            grid: grid.clone(),
            tuning,
        },
    )?;
    Ok(Outcome {
        map: out.map,
        evaluation: out.evaluation,
        penalty: Some(out.penalty),
        gamma: Some(out.gamma),
        converged: Some(out.model.all_converged()),
        failed_cells: out.cells.iter().filter(|c| c.score.is_none()).count(),
    })
}

fn run_image(config: &ExperimentConfig, image: usize) -> Result<Vec<ExperimentRow>> {
    let seed = image_seed(config.seed, image);
    let phantom = build_phantom(&config.phantom)?;
    let scene = simulate_scene(&phantom, &config.classes, &config.perturbation, seed)?;
    let regions = estimate_region_models(&scene.raster, &scene.seg)?;
    let tuning = match config.tuning {
        TuningMode::TestSet => Tuning::TestSet,
        TuningMode::Validation => Tuning::Validation { seed },
    };
    let mut rows = Vec::new();
    for &scenario in &config.scenarios {
        let data = match scenario {
            Scenario::SixClass => &scene.six_class,
            Scenario::ThreeClass => &scene.three_class,
        };
        for &kind in &config.kinds {
            for &method in &config.methods {
                let start = Instant::now();
                let result = classify_once(&regions, data, method, kind, &config.grid, tuning);
                let seconds = start.elapsed().as_secs_f64();
                let mut row = ExperimentRow {
                    image,
                    seed,
                    scenario,
                    method,
                    kind: kind.code().to_string(),
                    accuracy: None,
                    kappa: None,
                    kappa_variance: None,
                    unclassified: 0,
                    seconds,
                    penalty: None,
                    gamma: None,
                    converged: None,
                    failed_cells: 0,
                    error: None,
                };
                match result.and_then(|o| {
                    let score = region_score(&o.map, &o.evaluation)?;
                    let k = region_confusion(&o.map, &o.evaluation).and_then(|cm| kappa(&cm)).ok();
                    Ok((o, score, k))
                }) {
                    Ok((o, score, k)) => {
                        row.accuracy = Some(score.accuracy());
                        row.unclassified = score.unclassified;
                        row.kappa = k.map(|k| k.kappa);
                        row.kappa_variance = k.map(|k| k.variance);
                        row.penalty = o.penalty;
                        row.gamma = o.gamma;
                        row.converged = o.converged;
                        row.failed_cells = o.failed_cells;
                    }
                    Err(e) => {
                        log::warn!("image {image} {scenario} {method} {}: {e}", kind.code());
                        row.error = Some(e.to_string());
                    }
                }
                log::info!(
                    "image {image} {scenario} {method} {}: accuracy {:?} in {seconds:.3}s",
                    kind.code(),
                    row.accuracy
                );
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    if config.images < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: config.images,
        });
    }
    let per_image: Vec<Vec<ExperimentRow>> = (0..config.images)
        .into_par_iter()
        .map(|i| run_image(config, i))
        .collect::<Result<_>>()?;
    let rows: Vec<ExperimentRow> = per_image.into_iter().flatten().collect();

    let mut summary = Vec::new();
    let mut comparisons = Vec::new();
    for &scenario in &config.scenarios {
        let mut labels = Vec::new();
        let mut samples = Vec::new();
        for &kind in &config.kinds {
            for &method in &config.methods {
                let code = kind.code();
                let runs: Vec<&ExperimentRow> = rows
                    .iter()
                    .filter(|r| r.scenario == scenario && r.method == method && r.kind == code)
                    .collect();
                let acc: Vec<f64> = runs.iter().filter_map(|r| r.accuracy).collect();
                let n = acc.len();
                summary.push(SummaryRow {
                    scenario,
                    method,
                    kind: code.to_string(),
                    runs: runs.len(),
                    failures: runs.len() - n,
                    mean_accuracy: (n > 0).then(|| acc.iter().sum::<f64>() / n as f64),
                    min_accuracy: acc.iter().copied().reduce(f64::min),
                    max_accuracy: acc.iter().copied().reduce(f64::max),
                    mean_seconds: runs.iter().map(|r| r.seconds).sum::<f64>() / runs.len() as f64,
                });
                if n == runs.len() {
                    labels.push(format!("{}-{}", method.label(), code));
                    samples.push(acc);
                }
            }
        }
        if labels.len() >= 2 {
            comparisons.push(ScenarioComparison {
                scenario,
                report: ComparisonReport::from_accuracies(labels, &samples, config.paired)?,
            });
        }
    }
    Ok(ExperimentReport {
        config: config.clone(),
        rows,
        summary,
        comparisons,
    })
}
