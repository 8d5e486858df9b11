use polsar_core::classify::{
    estimate_class_models, estimate_region_models, msdc_classify, svm_classify, SvmConfig, Tuning,
};
use polsar_core::distances::DistanceKind;
use polsar_core::eval::{region_score, pixel_confusion, overall_accuracy};
use polsar_core::io;
use polsar_core::reference::appendix;
use polsar_core::simulate::{build_phantom, simulate_scene, PerturbationSpec, PhantomSpec};
use polsar_core::svm::{ParameterGrid, Strategy};

fn spec() -> (PhantomSpec, PerturbationSpec) {
    (
        PhantomSpec {
            block_size: 48,
            segments_per_block: 8,
            seed: 5,
        },
        PerturbationSpec {
            theta: 0.0,
            looks: 4,
            per_block_trained_segments: 3,
        },
    )
}

#[test]
fn scene_files_round_trip_and_classify() {
    let (ps, pert) = spec();
    let phantom = build_phantom(&ps).unwrap();
    let scene = simulate_scene(&phantom, &appendix(), &pert, 21).unwrap();

    let mut raster_bytes = Vec::new();
    io::write_raster(&scene.raster, &mut raster_bytes).unwrap();
    let mut seg_bytes = Vec::new();
    io::write_segmentation(&scene.seg, &mut seg_bytes).unwrap();
    let mut label_bytes = Vec::new();
    io::write_labels(&scene.six_class, &mut label_bytes).unwrap();

    let raster = io::read_raster(raster_bytes.as_slice()).unwrap();
    let seg = io::read_segmentation(seg_bytes.as_slice()).unwrap();
    let labels = io::read_labels(label_bytes.as_slice()).unwrap();
    assert_eq!(raster, scene.raster);
    assert_eq!(seg, scene.seg);
    assert_eq!(labels, scene.six_class);

    let regions = estimate_region_models(&raster, &seg).unwrap();
    let classes = estimate_class_models(&regions, &labels).unwrap();
    let map = msdc_classify(&regions, &classes, DistanceKind::Bhattacharyya).unwrap();
    assert_eq!(region_score(&map, &labels).unwrap().accuracy(), 1.0);
    let pixels = pixel_confusion(&map, &seg, &labels, 3).unwrap();
    assert_eq!(overall_accuracy(&pixels), 1.0);

    let mut map_bytes = Vec::new();
    io::write_map(&map, &mut map_bytes).unwrap();
    assert_eq!(io::read_map(map_bytes.as_slice()).unwrap(), map);
}

#[test]
fn svm_separates_the_merged_scenario() {
    let (ps, pert) = spec();
    let phantom = build_phantom(&ps).unwrap();
    let scene = simulate_scene(&phantom, &appendix(), &pert, 22).unwrap();
    let regions = estimate_region_models(&scene.raster, &scene.seg).unwrap();
    let kind = DistanceKind::Hellinger;

    let classes = estimate_class_models(&regions, &scene.three_class).unwrap();
    let msdc = region_score(&msdc_classify(&regions, &classes, kind).unwrap(), &scene.three_class).unwrap();
    let out = svm_classify(
        &regions,
        &scene.three_class,
        &SvmConfig {
            kind,
            strategy: Strategy::Oao,
            grid: ParameterGrid {
                penalties: vec![10.0, 1000.0],
                gammas: vec![0.5, 1.0, 2.0, 4.0],
            },
            tuning: Tuning::Validation { seed: 1 },
        },
    )
    .unwrap();
    let svm = region_score(&out.map, &out.evaluation).unwrap();
    // Each merged class mixes two blocks, which one Wishart model cannot fit.
    assert!(svm.accuracy() > msdc.accuracy(), "svm {} vs msdc {}", svm.accuracy(), msdc.accuracy());
    assert!(svm.evaluated < msdc.evaluated);
}
