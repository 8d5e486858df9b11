use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

use polsar_core::classify::{
    apply_svm_model, estimate_class_models, estimate_region_models, msdc_classify, svm_classify,
    train_svm, RegionModels, SvmConfig, Tuning,
};
use polsar_core::distances::{closed_form, distance, DistanceKind};
use polsar_core::eval::{kappa, overall_accuracy, pixel_confusion, region_confusion, region_score, ConfusionMatrix};
use polsar_core::experiment::{image_seed, run_experiment, ExperimentConfig, Method, Scenario, TuningMode};
use polsar_core::hermitian::HermitianMatrix;
use polsar_core::io;
use polsar_core::raster::{ClassificationMap, CovarianceRaster, LabeledDataset, SegmentationMap};
use polsar_core::reference::{appendix, calibrate_looks, fit_looks, ClassManifest};
use polsar_core::simulate::{build_phantom, simulate_scene, PerturbationSpec, PhantomSpec};
use polsar_core::svm::{MulticlassModel, ParameterGrid, Strategy};

use crate::grid::parse_values;
use crate::{
    ClassifyArgs, DistanceArgs, DistancesArgs, EvaluateArgs, ExperimentArgs, GridArgs,
    GridSearchArgs, MethodArg, SceneArgs, SceneSpecArgs, SimulateArgs, StrategyArg, TrainArgs,
};

/// The published table leaves the looks unstated; beyond this deviation the
/// grid candidates are treated as not matching it.
const CALIBRATION_TOLERANCE: f64 = 0.05;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

/// Pretty JSON to `path`, or to stdout when no path is given.
fn emit_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match path {
        Some(p) => write_text(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_scene(args: &SceneArgs) -> Result<(CovarianceRaster, SegmentationMap, LabeledDataset)> {
    let raster = io::read_raster(open(&args.raster)?)
        .with_context(|| format!("reading raster {}", args.raster.display()))?;
    let seg = io::read_segmentation(open(&args.seg)?)
        .with_context(|| format!("reading segmentation {}", args.seg.display()))?;
    let labels = io::read_labels(open(&args.labels)?)
        .with_context(|| format!("reading labels {}", args.labels.display()))?;
    Ok((raster, seg, labels))
}

fn region_models(raster: &CovarianceRaster, seg: &SegmentationMap) -> Result<RegionModels> {
    let models = estimate_region_models(raster, seg)?;
    let degenerate = models.degenerate();
    if !degenerate.is_empty() {
        log::warn!("{} degenerate regions", degenerate.len());
    }
    Ok(models)
}

fn distance_kind(args: &DistanceArgs) -> Result<DistanceKind> {
    let kind: DistanceKind = args.kind.parse()?;
    Ok(match args.beta {
        Some(beta) => {
            if !matches!(kind, DistanceKind::Renyi { .. }) {
                bail!("--beta only applies to the Renyi distance");
            }
            kind.with_beta(beta)?
        }
        None => kind,
    })
}

fn strategy(arg: StrategyArg) -> Strategy {
    match arg {
        StrategyArg::Oaa => Strategy::Oaa,
        StrategyArg::Oao => Strategy::Oao,
    }
}

fn parameter_grid(penalties: Option<&str>, gammas: Option<&str>) -> Result<ParameterGrid> {
    let default = ParameterGrid::default();
    Ok(ParameterGrid {
        penalties: penalties.map(parse_values).transpose()?.unwrap_or(default.penalties),
        gammas: gammas.map(parse_values).transpose()?.unwrap_or(default.gammas),
    })
}

fn tuning(args: &GridArgs) -> Tuning {
    if args.paper_protocol {
        Tuning::TestSet
    } else {
        Tuning::Validation { seed: args.seed }
    }
}

fn manifest(path: Option<&PathBuf>) -> Result<ClassManifest> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(ClassManifest::from_json(&text).with_context(|| format!("parsing {}", p.display()))?)
        }
        None => Ok(appendix()),
    }
}

fn scene_specs(args: &SceneSpecArgs) -> (PhantomSpec, PerturbationSpec) {
    let (mut phantom, mut pert) = if args.full_scale {
        (PhantomSpec::full_scale(), PerturbationSpec::full_scale())
    } else {
        (PhantomSpec::desk(), PerturbationSpec::desk())
    };
    if let Some(v) = args.block_size {
        phantom.block_size = v;
    }
    if let Some(v) = args.segments {
        phantom.segments_per_block = v;
    }
    if let Some(v) = args.theta {
        pert.theta = v;
    }
    if let Some(v) = args.looks {
        pert.looks = v;
    }
    if let Some(v) = args.trained_per_block {
        pert.per_block_trained_segments = v;
    }
    (phantom, pert)
}

/// Accuracy and kappa over the test regions, `null` when there are none.
fn score_json(map: &ClassificationMap, data: &LabeledDataset) -> Value {
    let score = match region_score(map, data) {
        Ok(s) if s.evaluated > 0 => s,
        _ => return Value::Null,
    };
    let k = region_confusion(map, data).and_then(|cm| kappa(&cm));
    if let Err(e) = &k {
        log::warn!("kappa unavailable: {e}");
    }
    json!({
        "accuracy": score.accuracy(),
        "correct": score.correct,
        "evaluated": score.evaluated,
        "unclassified": score.unclassified,
        "kappa": k.as_ref().ok().map(|k| k.kappa),
        "kappa_variance": k.as_ref().ok().map(|k| k.variance),
    })
}

fn confusion_json(cm: &ConfusionMatrix) -> Value {
    let k = kappa(cm);
    json!({
        "classes": cm.classes(),
        "counts": cm.counts(),
        "total": cm.total(),
        "overall_accuracy": overall_accuracy(cm),
        "kappa": k.as_ref().ok().map(|k| k.kappa),
        "kappa_variance": k.as_ref().ok().map(|k| k.variance),
    })
}

pub fn simulate(args: SimulateArgs) -> Result<()> {
    if args.images == 0 {
        bail!("--images must be at least 1");
    }
    let classes = manifest(args.spec.classes.as_ref())?;
    let (phantom_spec, pert) = scene_specs(&args.spec);
    let phantom = build_phantom(&phantom_spec)?;
    for i in 0..args.images {
        let dir = if args.images == 1 {
            args.out_dir.clone()
        } else {
            args.out_dir.join(format!("image-{i:03}"))
        };
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let seed = image_seed(args.seed, i);
        let scene = simulate_scene(&phantom, &classes, &pert, seed)?;

        let mut w = create(&dir.join("raster.pcov"))?;
        io::write_raster(&scene.raster, &mut w)?;
        w.flush()?;
        let mut w = create(&dir.join("segmentation.pseg"))?;
        io::write_segmentation(&scene.seg, &mut w)?;
        w.flush()?;
        let mut w = create(&dir.join("labels-six.csv"))?;
        io::write_labels(&scene.six_class, &mut w)?;
        w.flush()?;
        let mut w = create(&dir.join("labels-three.csv"))?;
        io::write_labels(&scene.three_class, &mut w)?;
        w.flush()?;
        let manifest = json!({
            "master_seed": args.seed,
            "image": i,
            "scene": scene.manifest,
            "block_of_region": scene.block_of_region,
        });
        emit_json(Some(&dir.join("manifest.json")), &manifest)?;
        log::info!("image {i}: {} regions written to {}", scene.manifest.regions, dir.display());
    }
    println!(
        "{} scene(s) of {}x{} pixels written to {}",
        args.images,
        phantom_spec.width(),
        phantom_spec.height(),
        args.out_dir.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct DistanceTable {
    kind: String,
    looks: f64,
    names: Vec<String>,
    /// `null` where the distance is undefined.
    matrix: Vec<Vec<Option<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    calibration: Option<Value>,
}

impl DistanceTable {
    fn csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&std::iter::once("").chain(self.names.iter().map(String::as_str)).collect::<Vec<_>>().join(","));
        out.push('\n');
        for (name, row) in self.names.iter().zip(&self.matrix) {
            out.push_str(name);
            for v in row {
                out.push(',');
                if let Some(v) = v {
                    out.push_str(&v.to_string());
                }
            }
            out.push('\n');
        }
        out
    }
}

fn table_from(
    kind: DistanceKind,
    looks: f64,
    names: Vec<String>,
    f: impl Fn(usize, usize) -> polsar_core::Result<f64>,
) -> DistanceTable {
    let n = names.len();
    let matrix = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| match f(i, j) {
                    Ok(d) if d.is_finite() => Some(d),
                    Ok(d) => {
                        log::warn!("{} vs {}: non-finite distance {d}", names[i], names[j]);
                        None
                    }
                    Err(e) => {
                        log::warn!("{} vs {}: {e}", names[i], names[j]);
                        None
                    }
                })
                .collect()
        })
        .collect();
    DistanceTable {
        kind: kind.to_string(),
        looks,
        names,
        matrix,
        calibration: None,
    }
}

fn manifest_table(kind: DistanceKind, names: Vec<String>, sigmas: &[HermitianMatrix], looks: f64) -> DistanceTable {
    table_from(kind, looks, names, |i, j| closed_form(kind, &sigmas[i], &sigmas[j], looks))
}

pub fn distances(args: DistancesArgs) -> Result<()> {
    let kind = distance_kind(&args.distance)?;
    let table = if args.calibrate {
        let candidates = parse_values(&args.candidates)?;
        let best = calibrate_looks(&candidates)?;
        let continuous = fit_looks(2.0, 20.0)?;
        let per_candidate = candidates
            .iter()
            .map(|&n| {
                polsar_core::reference::hellinger_fit(n)
                    .map(|f| json!({"looks": n, "max_deviation": f.max_deviation}))
            })
            .collect::<polsar_core::Result<Vec<_>>>()?;
        let looks = if best.max_deviation <= CALIBRATION_TOLERANCE {
            best.looks
        } else {
            log::warn!(
                "best candidate looks {} deviates by {:.4} from the table; using the fitted looks {:.4} (deviation {:.2e})",
                best.looks,
                best.max_deviation,
                continuous.looks,
                continuous.max_deviation
            );
            continuous.looks
        };
        let m = appendix();
        let mut t = manifest_table(kind, m.names(), &m.matrices(), looks);
        t.calibration = Some(json!({
            "candidates": per_candidate,
            "best_candidate": best,
            "continuous_fit": continuous,
            "selected_looks": looks,
        }));
        t
    } else if let Some(raster_path) = &args.raster {
        let scene = SceneArgs {
            raster: raster_path.clone(),
            seg: args.seg.clone().expect("required by clap"),
            labels: args.labels.clone().expect("required by clap"),
        };
        let (raster, seg, labels) = load_scene(&scene)?;
        let regions = region_models(&raster, &seg)?;
        let classes = estimate_class_models(&regions, &labels)?;
        let names = classes.classes.iter().map(|c| c.to_string()).collect();
        table_from(kind, regions.looks(), names, |i, j| {
            distance(kind, &classes.models[i], &classes.models[j])
        })
    } else {
        let m = manifest(args.classes.as_ref())?;
        let looks = args
            .looks
            .context("--looks is required for manifest classes (or use --calibrate)")?;
        manifest_table(kind, m.names(), &m.matrices(), looks)
    };

    if let Some(p) = &args.out {
        write_text(p, &table.csv())?;
    }
    if let Some(p) = &args.json {
        emit_json(Some(p), &table)?;
    }
    if args.out.is_none() && args.json.is_none() {
        print!("{}", table.csv());
    }
    Ok(())
}

pub fn train(args: TrainArgs) -> Result<()> {
    let kind = distance_kind(&args.distance)?;
    let (raster, seg, labels) = load_scene(&args.scene)?;
    let regions = region_models(&raster, &seg)?;
    let start = Instant::now();
    let model = train_svm(&regions, &labels, kind, strategy(args.strategy), args.penalty, args.gamma)?;
    let seconds = start.elapsed().as_secs_f64();
    write_text(&args.out, &model.to_json()?)?;
    if !model.all_converged() {
        log::warn!("some binary problems hit the iteration limit");
    }
    emit_json(
        None,
        &json!({
            "model": args.out,
            "strategy": model.strategy,
            "classes": model.class_list,
            "binary_models": model.binary_models.len(),
            "training_regions": model.training_len(),
            "converged": model.all_converged(),
            "seconds": seconds,
        }),
    )
}

fn write_map(map: &ClassificationMap, seg: &SegmentationMap, csv: &Path, png: Option<&PathBuf>) -> Result<()> {
    let mut w = create(csv)?;
    io::write_map(map, &mut w)?;
    w.flush()?;
    if let Some(p) = png {
        let mut w = create(p)?;
        io::write_map_png(map, seg, &mut w)?;
        w.flush()?;
    }
    Ok(())
}

pub fn classify(args: ClassifyArgs) -> Result<()> {
    let kind = distance_kind(&args.distance)?;
    let (raster, seg, labels) = load_scene(&args.scene)?;
    let regions = region_models(&raster, &seg)?;
    let start = Instant::now();
    let (map, evaluation, extra) = match (args.method, &args.model) {
        (MethodArg::Msdc, Some(_)) => bail!("--model applies to --method svm"),
        (MethodArg::Msdc, None) => {
            let classes = estimate_class_models(&regions, &labels)?;
            (msdc_classify(&regions, &classes, kind)?, labels.clone(), json!({}))
        }
        (MethodArg::Svm, Some(path)) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let model = MulticlassModel::from_json(&text)?;
            let map = apply_svm_model(&regions, &model)?;
            let extra = json!({
                "model": path,
                "strategy": model.strategy,
                "kind": model.context.kind.to_string(),
                "penalty": model.penalty,
                "gamma": model.context.gamma,
            });
            (map, labels.clone(), extra)
        }
        (MethodArg::Svm, None) => {
            let config = SvmConfig {
                kind,
                strategy: strategy(args.strategy),
                grid: parameter_grid(args.grid.penalty_grid.as_deref(), args.grid.gamma_grid.as_deref())?,
                tuning: tuning(&args.grid),
            };
            let out = svm_classify(&regions, &labels, &config)?;
            let extra = json!({
                "strategy": out.model.strategy,
                "penalty": out.penalty,
                "gamma": out.gamma,
                "selection_score": out.selection_score,
                "tuning": config.tuning,
                "grid_cells": out.cells.len(),
                "failed_cells": out.cells.iter().filter(|c| c.score.is_none()).count(),
                "converged": out.model.all_converged(),
            });
            (out.map, out.evaluation, extra)
        }
    };
    let seconds = start.elapsed().as_secs_f64();
    write_map(&map, &seg, &args.out, args.png.as_ref())?;
    let mut report = json!({
        "method": match args.method { MethodArg::Msdc => "msdc", MethodArg::Svm => "svm" },
        "kind": kind.to_string(),
        "regions": map.len(),
        "seconds": seconds,
        "map": args.out,
        "score": score_json(&map, &evaluation),
    });
    if let (Value::Object(r), Value::Object(e)) = (&mut report, extra) {
        r.extend(e);
    }
    emit_json(args.report.as_deref(), &report)
}

pub fn grid_search(args: GridSearchArgs) -> Result<()> {
    let kind = distance_kind(&args.distance)?;
    let (raster, seg, labels) = load_scene(&args.scene)?;
    let regions = region_models(&raster, &seg)?;
    let config = SvmConfig {
        kind,
        strategy: strategy(args.strategy),
        grid: parameter_grid(args.grid.penalty_grid.as_deref(), args.grid.gamma_grid.as_deref())?,
        tuning: tuning(&args.grid),
    };
    let start = Instant::now();
    let out = svm_classify(&regions, &labels, &config)?;
    let seconds = start.elapsed().as_secs_f64();
    if let Some(p) = &args.out {
        let mut csv = String::from("penalty,gamma,score,converged,error\n");
        for c in &out.cells {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                c.penalty,
                c.gamma,
                c.score.map_or(String::new(), |s| s.to_string()),
                c.converged,
                c.error.as_deref().unwrap_or("").replace([',', '\n'], ";")
            ));
        }
        write_text(p, &csv)?;
    }
    if let Some(p) = &args.model {
        write_text(p, &out.model.to_json()?)?;
    }
    emit_json(
        args.report.as_deref(),
        &json!({
            "kind": kind.to_string(),
            "strategy": out.model.strategy,
            "tuning": config.tuning,
            "penalty": out.penalty,
            "gamma": out.gamma,
            "selection_score": out.selection_score,
            "grid_cells": out.cells.len(),
            "failed_cells": out.cells.iter().filter(|c| c.score.is_none()).count(),
            "seconds": seconds,
            "score": score_json(&out.map, &out.evaluation),
        }),
    )
}

pub fn evaluate(args: EvaluateArgs) -> Result<()> {
    let map = io::read_map(open(&args.map)?).with_context(|| format!("reading map {}", args.map.display()))?;
    let labels = io::read_labels(open(&args.labels)?)
        .with_context(|| format!("reading labels {}", args.labels.display()))?;
    let regions = region_confusion(&map, &labels)?;
    let mut report = json!({
        "score": score_json(&map, &labels),
        "region_confusion": confusion_json(&regions),
    });
    if let Some(seg_path) = &args.seg {
        let seg = io::read_segmentation(open(seg_path)?)?;
        let pixels = pixel_confusion(&map, &seg, &labels, args.pixel_step)?;
        report["pixel_step"] = json!(args.pixel_step);
        report["pixel_confusion"] = confusion_json(&pixels);
    }
    emit_json(args.report.as_deref(), &report)
}

fn parse_list<T>(text: &str, parse: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    let out = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(parse)
        .collect::<Result<Vec<T>>>()?;
    if out.is_empty() {
        bail!("empty list {text:?}");
    }
    Ok(out)
}

pub fn experiment(args: ExperimentArgs) -> Result<()> {
    let classes = manifest(args.spec.classes.as_ref())?;
    let (phantom, perturbation) = scene_specs(&args.spec);
    let beta = args.beta;
    let config = ExperimentConfig {
        images: args.images,
        seed: args.seed,
        phantom,
        perturbation,
        classes,
        methods: parse_list(&args.methods, |s| Ok(s.parse::<Method>()?))?,
        kinds: parse_list(&args.kinds, |s| {
            let k: DistanceKind = s.parse()?;
            Ok(match beta {
                Some(b) => k.with_beta(b)?,
                None => k,
            })
        })?,
        scenarios: parse_list(&args.scenarios, |s| match s {
            "six-class" | "six" | "6" => Ok(Scenario::SixClass),
            "three-class" | "three" | "3" => Ok(Scenario::ThreeClass),
            _ => bail!("unknown scenario {s:?}"),
        })?,
        grid: parameter_grid(args.penalty_grid.as_deref(), args.gamma_grid.as_deref())?,
        tuning: if args.paper_protocol {
            TuningMode::TestSet
        } else {
            TuningMode::Validation
        },
        paired: args.paired,
    };
    let start = Instant::now();
    let report = run_experiment(&config)?;
    let seconds = start.elapsed().as_secs_f64();
    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    write_text(&args.out_dir.join("rows.csv"), &report.rows_csv())?;
    emit_json(Some(&args.out_dir.join("report.json")), &report)?;

    println!("{:<12} {:<8} {:<4} {:>6} {:>6} {:>6} {:>9} {:>5}", "scenario", "method", "kind", "mean", "min", "max", "seconds", "fail");
    for s in &report.summary {
        let f = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3}"));
        println!(
            "{:<12} {:<8} {:<4} {:>6} {:>6} {:>6} {:>9.4} {:>5}",
            s.scenario.to_string(),
            s.method.to_string(),
            s.kind,
            f(s.mean_accuracy),
            f(s.min_accuracy),
            f(s.max_accuracy),
            s.mean_seconds,
            s.failures
        );
    }
    println!("{} classifications in {seconds:.1}s; report in {}", report.rows.len(), args.out_dir.display());
    Ok(())
}
