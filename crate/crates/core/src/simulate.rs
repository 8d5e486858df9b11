//! Synthetic scenes: a phantom of six class blocks cut into rectangular
//! segments, a randomly perturbed covariance matrix per segment, and
//! multilook Wishart pixels drawn from it.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermitian::HermitianMatrix;
use crate::raster::{CovarianceRaster, LabelEntry, LabeledDataset, Role, SegmentationMap};
use crate::reference::{ClassManifest, NamedClass};
use crate::wishart::{stream, GaussianSampler};

pub const BLOCK_ROWS: usize = 2;
pub const BLOCK_COLS: usize = 3;
pub const BLOCKS: usize = BLOCK_ROWS * BLOCK_COLS;
/// Smallest segment the phantom must be able to hold.
pub const MIN_SEGMENT_PIXELS: usize = 9;

const SPLIT_RANGE: (f64, f64) = (0.35, 0.65);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub block_size: usize,
    pub segments_per_block: usize,
    pub seed: u64,
}

impl PhantomSpec {
    /// 128-pixel blocks of 16 segments.
    pub fn desk() -> Self {
        Self {
            block_size: 128,
            segments_per_block: 16,
            seed: 0,
        }
    }

    /// 512-pixel blocks of 44 segments.
    pub fn full_scale() -> Self {
        Self {
            block_size: 512,
            segments_per_block: 44,
            seed: 0,
        }
    }

    pub fn width(&self) -> usize {
        BLOCK_COLS * self.block_size
    }

    pub fn height(&self) -> usize {
        BLOCK_ROWS * self.block_size
    }

    pub fn region_count(&self) -> usize {
        BLOCKS * self.segments_per_block
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub theta: f64,
    pub looks: u32,
    pub per_block_trained_segments: usize,
}

impl PerturbationSpec {
    pub fn desk() -> Self {
        Self {
            theta: DEFAULT_THETA,
            looks: DEFAULT_LOOKS,
            per_block_trained_segments: 4,
        }
    }

    pub fn full_scale() -> Self {
        Self {
            per_block_trained_segments: 11,
            ..Self::desk()
        }
    }
}

pub const DEFAULT_THETA: f64 = 0.1;
pub const DEFAULT_LOOKS: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    pub fn area(&self) -> usize {
        self.width * self.height
    }
}

#[derive(Debug, Clone)]
pub struct Phantom {
    pub spec: PhantomSpec,
    pub seg: SegmentationMap,
    /// Block (0..6, row-major over the 2 × 3 layout) of every region.
    pub block_of_region: Vec<usize>,
    pub segments: Vec<Rect>,
}

/// Cuts a `size × size` block into `count` rectangles by repeatedly
/// splitting the largest one across its longer side.
fn split_block<R: Rng>(size: usize, count: usize, rng: &mut R) -> Result<Vec<Rect>> {
    let mut rects = vec![Rect {
        x: 0,
        y: 0,
        width: size,
        height: size,
    }];
    while rects.len() < count {
        let (k, _) = rects
            .iter()
            .enumerate()
            .fold((0, 0), |(bk, ba), (k, r)| if r.area() > ba { (k, r.area()) } else { (bk, ba) });
        let r = rects[k];
        let horizontal = r.width >= r.height;
        let len = if horizontal { r.width } else { r.height };
        if len < 2 {
            return Err(Error::InfeasibleSpec("segments became too small to split".into()));
        }
        let u = rng.random_range(SPLIT_RANGE.0..=SPLIT_RANGE.1);
        let cut = ((len as f64 * u).round() as usize).clamp(1, len - 1);
        let (a, b) = if horizontal {
            (
                Rect { width: cut, ..r },
                Rect {
                    x: r.x + cut,
                    width: r.width - cut,
                    ..r
                },
            )
        } else {
            (
                Rect { height: cut, ..r },
                Rect {
                    y: r.y + cut,
                    height: r.height - cut,
                    ..r
                },
            )
        };
        rects[k] = a;
        rects.push(b);
    }
    Ok(rects)
}

pub fn build_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    if spec.block_size < 32 {
        return Err(Error::InfeasibleSpec(format!(
            "block size {} is below 32",
            spec.block_size
        )));
    }
    if spec.segments_per_block < 4 {
        return Err(Error::InfeasibleSpec(format!(
            "{} segments per block, need at least 4",
            spec.segments_per_block
        )));
    }
    if spec.block_size * spec.block_size < spec.segments_per_block * MIN_SEGMENT_PIXELS {
        return Err(Error::InfeasibleSpec(format!(
            "{} segments of at least {MIN_SEGMENT_PIXELS} pixels do not fit a {}² block",
            spec.segments_per_block, spec.block_size
        )));
    }
    let (w, bs, n) = (spec.width(), spec.block_size, spec.segments_per_block);
    let mut ids = vec![0u32; w * spec.height()];
    let mut segments = Vec::with_capacity(spec.region_count());
    let mut block_of_region = Vec::with_capacity(spec.region_count());
    for block in 0..BLOCKS {
        let (ox, oy) = ((block % BLOCK_COLS) * bs, (block / BLOCK_COLS) * bs);
        let rects = split_block(bs, n, &mut stream(spec.seed, block as u64))?;
        for (k, r) in rects.into_iter().enumerate() {
            let id = (block * n + k) as u32;
            let r = Rect {
                x: r.x + ox,
                y: r.y + oy,
                ..r
            };
            for y in r.y..r.y + r.height {
                ids[y * w + r.x..y * w + r.x + r.width].fill(id);
            }
            segments.push(r);
            block_of_region.push(block);
        }
    }
    Ok(Phantom {
        spec: *spec,
        seg: SegmentationMap::new(w, spec.height(), ids)?,
        block_of_region,
        segments,
    })
}

/// Half-widths `aᵢ = √(θ · Īᵢᵢ · 2√L)` of the uniform perturbation
/// components.
pub fn perturbation_half_widths(base: &HermitianMatrix, theta: f64, looks: u32) -> [f64; 3] {
    let l = (looks as f64).sqrt();
    base.diag().map(|d| (theta * d * 2.0 * l).sqrt())
}

/// `base + s sᵀ` with `sᵢ` uniform on `(−aᵢ, aᵢ)`.
pub fn perturb_covariance<R: Rng + ?Sized>(
    base: &HermitianMatrix,
    spec: &PerturbationSpec,
    rng: &mut R,
) -> HermitianMatrix {
    let a = perturbation_half_widths(base, spec.theta, spec.looks);
    let s = a.map(|a| if a > 0.0 { rng.random_range(-a..a) } else { 0.0 });
    let mut diag = base.diag();
    let mut upper = base.upper();
    for i in 0..3 {
        diag[i] += s[i] * s[i];
    }
    upper[0].re += s[0] * s[1];
    upper[1].re += s[0] * s[2];
    upper[2].re += s[1] * s[2];
    HermitianMatrix::new(diag, upper).expect("finite perturbation")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub seed: u64,
    pub phantom: PhantomSpec,
    pub perturbation: PerturbationSpec,
    pub classes: Vec<NamedClass>,
    pub regions: usize,
}

#[derive(Debug, Clone)]
pub struct SimulatedScene {
    pub raster: CovarianceRaster,
    pub seg: SegmentationMap,
    pub block_of_region: Vec<usize>,
    pub segment_sigmas: Vec<HermitianMatrix>,
    /// Class = block.
    pub six_class: LabeledDataset,
    /// Class = block column, merging blocks 1/4, 2/5 and 3/6.
    pub three_class: LabeledDataset,
    pub manifest: SceneManifest,
}

pub fn simulate_scene(
    phantom: &Phantom,
    classes: &ClassManifest,
    pert: &PerturbationSpec,
    seed: u64,
) -> Result<SimulatedScene> {
    if classes.classes.len() != BLOCKS {
        return Err(Error::DimensionMismatch {
            expected: BLOCKS,
            got: classes.classes.len(),
        });
    }
    if !(pert.theta >= 0.0 && pert.theta.is_finite()) {
        return Err(Error::InvalidParameter(format!("theta must be >= 0, got {}", pert.theta)));
    }
    if pert.looks < 1 {
        return Err(Error::InvalidLooks(pert.looks as f64));
    }
    let n = phantom.spec.segments_per_block;
    if pert.per_block_trained_segments == 0 || pert.per_block_trained_segments > n {
        return Err(Error::InvalidParameter(format!(
            "{} trained segments per block with {n} segments",
            pert.per_block_trained_segments
        )));
    }
    let base = classes.matrices();
    for m in &base {
        if !m.is_positive_definite() {
            return Err(Error::NotPositiveDefinite);
        }
    }

    let mut rng = stream(seed, 0);
    let segment_sigmas: Vec<HermitianMatrix> = phantom
        .block_of_region
        .iter()
        .map(|&b| perturb_covariance(&base[b], pert, &mut rng))
        .collect();

    let mut rng = stream(seed, 1);
    let mut trained = vec![false; phantom.block_of_region.len()];
    for b in 0..BLOCKS {
        for k in sample(&mut rng, n, pert.per_block_trained_segments) {
            trained[b * n + k] = true;
        }
    }

    let region_pixels = phantom.seg.region_pixels();
    let drawn: Vec<Vec<HermitianMatrix>> = region_pixels
        .par_iter()
        .enumerate()
        .map(|(r, idx)| {
            let sampler = GaussianSampler::new(&segment_sigmas[r])?;
            let mut rng = stream(seed, 2 + r as u64);
            Ok(idx
                .iter()
                .map(|_| sampler.sample_multilook(pert.looks, &mut rng))
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut pixels = vec![HermitianMatrix::identity(); phantom.seg.ids().len()];
    for (idx, values) in region_pixels.iter().zip(drawn) {
        for (&p, v) in idx.iter().zip(values) {
            pixels[p] = v;
        }
    }

    let labels = |class: &dyn Fn(usize) -> u32| {
        LabeledDataset::new(
            phantom
                .block_of_region
                .iter()
                .enumerate()
                .map(|(r, &b)| LabelEntry {
                    region_id: r as u32,
                    class_id: class(b),
                    role: if trained[r] { Role::Train } else { Role::Test },
                })
                .collect(),
        )
    };
    let six_class = labels(&|b| b as u32)?;
    let three_class = labels(&|b| (b % BLOCK_COLS) as u32)?;

    Ok(SimulatedScene {
        raster: CovarianceRaster::new(
            phantom.spec.width(),
            phantom.spec.height(),
            pert.looks as f64,
            pixels,
        )?,
        seg: phantom.seg.clone(),
        block_of_region: phantom.block_of_region.clone(),
        segment_sigmas,
        six_class,
        three_class,
        manifest: SceneManifest {
            seed,
            phantom: phantom.spec,
            perturbation: *pert,
            classes: classes.classes.clone(),
            regions: phantom.spec.region_count(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::estimate_region_models;
    use crate::hermitian::MatrixSum;
    use crate::reference::appendix;
    use crate::wishart::seeded;

    fn small(segs: usize) -> PhantomSpec {
        PhantomSpec {
            block_size: 64,
            segments_per_block: segs,
            seed: 3,
        }
    }

    #[test]
    fn phantom_partitions_every_block() {
        for spec in [small(4), small(16), PhantomSpec::desk()] {
            let p = build_phantom(&spec).unwrap();
            assert_eq!(p.seg.region_count(), 6 * spec.segments_per_block);
            assert_eq!((p.seg.width(), p.seg.height()), (3 * spec.block_size, 2 * spec.block_size));
            let sizes = p.seg.region_sizes();
            let mut per_block = [0usize; 6];
            for (r, rect) in p.segments.iter().enumerate() {
                assert_eq!(sizes[r], rect.area(), "region {r} is not its rectangle");
                assert!(rect.area() >= MIN_SEGMENT_PIXELS);
                per_block[p.block_of_region[r]] += rect.area();
                for y in rect.y..rect.y + rect.height {
                    for x in rect.x..rect.x + rect.width {
                        assert_eq!(p.seg.ids()[y * p.seg.width() + x], r as u32);
                    }
                }
            }
            assert!(per_block.iter().all(|&a| a == spec.block_size * spec.block_size));
            let distinct: std::collections::HashSet<usize> = sizes.iter().copied().collect();
            assert!(distinct.len() > 1);
        }
    }

    #[test]
    fn full_scale_geometry() {
        let p = build_phantom(&PhantomSpec::full_scale()).unwrap();
        assert_eq!(p.seg.region_count(), 264);
        assert_eq!((p.seg.height(), p.seg.width()), (1024, 1536));
    }

    #[test]
    fn infeasible_specs() {
        let bad = |block_size, segments_per_block| {
            build_phantom(&PhantomSpec {
                block_size,
                segments_per_block,
                seed: 0,
            })
        };
        assert!(matches!(bad(16, 4), Err(Error::InfeasibleSpec(_))));
        assert!(matches!(bad(64, 3), Err(Error::InfeasibleSpec(_))));
        assert!(matches!(bad(32, 114), Err(Error::InfeasibleSpec(_))));
    }

    #[test]
    fn zero_theta_keeps_the_base() {
        let base = appendix().matrices()[2];
        let spec = PerturbationSpec {
            theta: 0.0,
            ..PerturbationSpec::desk()
        };
        assert_eq!(perturb_covariance(&base, &spec, &mut seeded(1)), base);
    }

    #[test]
    fn perturbation_is_rank_one_psd() {
        let base = appendix().matrices()[0];
        let spec = PerturbationSpec {
            theta: 0.7,
            ..PerturbationSpec::desk()
        };
        let mut rng = seeded(2);
        for _ in 0..200 {
            let p = perturb_covariance(&base, &spec, &mut rng);
            assert!(p.is_positive_definite());
            let d = p.linear_combination(1.0, &base, -1.0);
            // s sᵀ: every 2 × 2 minor vanishes and the diagonal is non-negative.
            let dd = d.diag();
            assert!(dd.iter().all(|&x| x >= 0.0));
            for (i, j) in [(0, 1), (0, 2), (1, 2)] {
                let off = d.get(i, j);
                assert!(off.im == 0.0);
                assert!((dd[i] * dd[j] - off.re * off.re).abs() <= 1e-12 * (1.0 + dd[i] * dd[j]));
            }
        }
    }

    #[test]
    fn diagonal_increase_has_uniform_variance() {
        let base = appendix().matrices()[4];
        let spec = PerturbationSpec {
            theta: 0.3,
            looks: 9,
            per_block_trained_segments: 1,
        };
        let a = perturbation_half_widths(&base, spec.theta, spec.looks);
        let mut rng = seeded(3);
        let mut sum = [0.0; 3];
        let n = 10_000;
        for _ in 0..n {
            let p = perturb_covariance(&base, &spec, &mut rng);
            for i in 0..3 {
                sum[i] += p.diag()[i] - base.diag()[i];
            }
        }
        for i in 0..3 {
            let expected = a[i] * a[i] / 3.0;
            let got = sum[i] / n as f64;
            assert!((got / expected - 1.0).abs() < 0.05, "entry {i}: {got} vs {expected}");
        }
    }

    #[test]
    fn seeded_scenes_are_identical() {
        let p = build_phantom(&small(4)).unwrap();
        let pert = PerturbationSpec {
            theta: 0.2,
            looks: 4,
            per_block_trained_segments: 2,
        };
        let a = simulate_scene(&p, &appendix(), &pert, 11).unwrap();
        let b = simulate_scene(&p, &appendix(), &pert, 11).unwrap();
        assert_eq!(a.raster, b.raster);
        assert_eq!(a.six_class, b.six_class);
        let c = simulate_scene(&p, &appendix(), &pert, 12).unwrap();
        assert_ne!(a.raster, c.raster);
    }

    #[test]
    fn labels_cover_both_scenarios() {
        let p = build_phantom(&small(8)).unwrap();
        let pert = PerturbationSpec {
            theta: 0.1,
            looks: 4,
            per_block_trained_segments: 3,
        };
        let s = simulate_scene(&p, &appendix(), &pert, 5).unwrap();
        assert_eq!(s.six_class.with_role(Role::Train).count(), 18);
        for b in 0..6u32 {
            let trained = s
                .six_class
                .with_role(Role::Train)
                .filter(|e| e.class_id == b)
                .count();
            assert_eq!(trained, 3);
        }
        for (e6, e3) in s.six_class.entries().iter().zip(s.three_class.entries()) {
            assert_eq!(e3.class_id, e6.class_id % 3);
            assert_eq!(e3.role, e6.role);
        }
        // Blocks 0 and 3 (first column) share a class.
        assert_eq!(s.three_class.get(0).unwrap().class_id, s.three_class.get(3 * 8).unwrap().class_id);
    }

    #[test]
    fn homogeneous_blocks_recover_the_class_matrix() {
        let p = build_phantom(&PhantomSpec::desk()).unwrap();
        let pert = PerturbationSpec {
            theta: 0.0,
            ..PerturbationSpec::desk()
        };
        let s = simulate_scene(&p, &appendix(), &pert, 21).unwrap();
        let base = appendix().matrices();
        for b in 0..6 {
            let mut sum = MatrixSum::default();
            for (i, &r) in s.seg.ids().iter().enumerate() {
                if s.block_of_region[r as usize] == b {
                    sum.add(&s.raster.pixels()[i]);
                }
            }
            let rel = sum.mean().unwrap().relative_distance(&base[b]);
            assert!(rel < 0.02, "block {b}: {rel}");
        }
    }

    /// Mean relative Frobenius spread of segment estimates around their
    /// class matrix.
    fn spread(theta: f64, seed: u64) -> f64 {
        let p = build_phantom(&small(8)).unwrap();
        let pert = PerturbationSpec {
            theta,
            looks: 4,
            per_block_trained_segments: 2,
        };
        let s = simulate_scene(&p, &appendix(), &pert, seed).unwrap();
        let rm = estimate_region_models(&s.raster, &s.seg).unwrap();
        let base = appendix().matrices();
        let mut total = 0.0;
        for r in 0..rm.len() as u32 {
            total += rm.model(r).unwrap().sigma().relative_distance(&base[s.block_of_region[r as usize]]);
        }
        total / rm.len() as f64
    }

    #[test]
    fn spread_grows_with_theta() {
        let s: Vec<f64> = [0.0, 0.5, 1.0].iter().map(|&t| spread(t, 8)).collect();
        assert!(s[0] < s[1] && s[1] < s[2], "{s:?}");
    }

    #[test]
    fn mixture_is_wider_than_homogeneous_block() {
        for seed in 0..10 {
            assert!(spread(0.1, 100 + seed) > spread(0.0, 100 + seed), "seed {seed}");
        }
    }
}
