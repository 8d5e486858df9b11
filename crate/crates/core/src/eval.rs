//! Accuracy assessment: confusion matrices, overall accuracy, the kappa
//! coefficient and its large-sample variance, and two-sided tests of
//! equality between classifiers.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::raster::{ClassificationMap, LabeledDataset, Role, SegmentationMap};

pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

/// Rows are reference classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: Vec<u32>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: Vec<u32>, counts: Vec<Vec<u64>>) -> Result<Self> {
        let c = classes.len();
        if counts.len() != c || counts.iter().any(|r| r.len() != c) {
            return Err(Error::DimensionMismatch {
                expected: c,
                got: counts.len(),
            });
        }
        let m = Self { classes, counts };
        if m.total() == 0 {
            return Err(Error::InvalidData("confusion matrix is empty".into()));
        }
        Ok(m)
    }

    /// Tallies `(reference, predicted)` pairs; classes outside `classes`
    /// are rejected.
    pub fn from_pairs(classes: Vec<u32>, pairs: impl IntoIterator<Item = (u32, u32)>) -> Result<Self> {
        let c = classes.len();
        let mut counts = vec![vec![0u64; c]; c];
        let index = |k: u32| {
            classes
                .iter()
                .position(|&x| x == k)
                .ok_or_else(|| Error::InvalidData(format!("class {k} is not in the class list")))
        };
        for (t, p) in pairs {
            counts[index(t)?][index(p)?] += 1;
        }
        Self::new(classes, counts)
    }

    pub fn classes(&self) -> &[u32] {
        &self.classes
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    fn diagonal(&self) -> u64 {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }
}

pub fn overall_accuracy(cm: &ConfusionMatrix) -> f64 {
    cm.diagonal() as f64 / cm.total() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    pub kappa: f64,
    pub variance: f64,
}

/// κ = (p_o − p_e)/(1 − p_e) with the delta-method variance
///
/// ```text
/// var = 1/n [ θ1(1−θ1)/(1−θ2)² + 2(1−θ1)(2θ1θ2 − θ3)/(1−θ2)³
///             + (1−θ1)²(θ4 − 4θ2²)/(1−θ2)⁴ ]
/// θ1 = Σ n_ii / n            θ2 = Σ n_i+ n_+i / n²
/// θ3 = Σ n_ii (n_i+ + n_+i) / n²
/// θ4 = Σ_ij n_ij (n_j+ + n_+i)² / n³
/// ```
///
/// as given by Congalton and Green for accuracy assessment.
pub fn kappa(cm: &ConfusionMatrix) -> Result<Kappa> {
    let c = cm.classes.len();
    let n = cm.total() as f64;
    let row: Vec<f64> = (0..c).map(|i| cm.counts[i].iter().sum::<u64>() as f64).collect();
    let col: Vec<f64> = (0..c)
        .map(|j| (0..c).map(|i| cm.counts[i][j]).sum::<u64>() as f64)
        .collect();
    let nij = |i: usize, j: usize| cm.counts[i][j] as f64;
    let t1 = cm.diagonal() as f64 / n;
    let t2 = (0..c).map(|i| row[i] * col[i]).sum::<f64>() / (n * n);
    if t2 >= 1.0 {
        return Err(Error::DegenerateMarginals);
    }
    let t3 = (0..c).map(|i| nij(i, i) * (row[i] + col[i])).sum::<f64>() / (n * n);
    let mut t4 = 0.0;
    for i in 0..c {
        for j in 0..c {
            t4 += nij(i, j) * (row[j] + col[i]).powi(2);
        }
    }
    t4 /= n * n * n;
    let q = 1.0 - t2;
    let variance = (t1 * (1.0 - t1) / q.powi(2)
        + 2.0 * (1.0 - t1) * (2.0 * t1 * t2 - t3) / q.powi(3)
        + (1.0 - t1).powi(2) * (t4 - 4.0 * t2 * t2) / q.powi(4))
        / n;
    Ok(Kappa {
        kappa: (t1 - t2) / q,
        variance,
    })
}

fn check_samples(a: &[f64], b: &[f64], paired: bool) -> Result<()> {
    for v in [a, b] {
        if v.len() < 2 {
            return Err(Error::InsufficientSamples {
                needed: 2,
                got: v.len(),
            });
        }
    }
    if paired && a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(())
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

fn two_sided_t(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    if !t.is_finite() {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

/// Two-sided pooled-variance two-sample t test.
pub fn compare_accuracies(a: &[f64], b: &[f64]) -> Result<f64> {
    check_samples(a, b, false)?;
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    if ma == mb {
        return Ok(1.0);
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0);
    let se = (pooled * (1.0 / na + 1.0 / nb)).sqrt();
    Ok(two_sided_t((ma - mb) / se, na + nb - 2.0))
}

/// Two-sided paired t test on `a[i] − b[i]`.
pub fn compare_accuracies_paired(a: &[f64], b: &[f64]) -> Result<f64> {
    check_samples(a, b, true)?;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (m, v) = mean_var(&d);
    if m == 0.0 {
        return Ok(1.0);
    }
    let n = d.len() as f64;
    Ok(two_sided_t(m / (v / n).sqrt(), n - 1.0))
}

/// Two-sided normal test on `(κ1 − κ2)/√(v1 + v2)`.
pub fn compare_kappas(k1: f64, v1: f64, k2: f64, v2: f64) -> Result<f64> {
    if !(v1 > 0.0 && v2 > 0.0) {
        return Err(Error::InvalidParameter("kappa variances must be positive".into()));
    }
    if k1 == k2 {
        return Ok(1.0);
    }
    let z = (k1 - k2) / (v1 + v2).sqrt();
    Ok(z_test_p_value(z))
}

pub fn z_test_p_value(z: f64) -> f64 {
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * normal.sf(z.abs())).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestKind {
    PooledT,
    PairedT,
    KappaZ,
}

/// Symmetric matrix of p-values between labelled combinations, with the
/// pairs not distinguishable at the 5% level flagged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub test: TestKind,
    pub significance: f64,
    pub labels: Vec<String>,
    pub p_values: Vec<Vec<f64>>,
    pub equivalent: Vec<Vec<bool>>,
}

impl ComparisonReport {
    fn from_fn(
        test: TestKind,
        labels: Vec<String>,
        p: impl Fn(usize, usize) -> Result<f64>,
    ) -> Result<Self> {
        let n = labels.len();
        let mut p_values = vec![vec![1.0; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                let v = p(i, j)?;
                p_values[i][j] = v;
                p_values[j][i] = v;
            }
        }
        let equivalent = p_values
            .iter()
            .map(|r| r.iter().map(|&v| v > SIGNIFICANCE_LEVEL).collect())
            .collect();
        Ok(Self {
            test,
            significance: SIGNIFICANCE_LEVEL,
            labels,
            p_values,
            equivalent,
        })
    }

    /// t tests between accuracy vectors over the same images.
    pub fn from_accuracies(labels: Vec<String>, samples: &[Vec<f64>], paired: bool) -> Result<Self> {
        if labels.len() != samples.len() {
            return Err(Error::DimensionMismatch {
                expected: labels.len(),
                got: samples.len(),
            });
        }
        type Test = fn(&[f64], &[f64]) -> Result<f64>;
        let (test, f): (TestKind, Test) = if paired {
            (TestKind::PairedT, compare_accuracies_paired)
        } else {
            (TestKind::PooledT, compare_accuracies)
        };
        Self::from_fn(test, labels, |i, j| f(&samples[i], &samples[j]))
    }

    pub fn from_kappas(labels: Vec<String>, kappas: &[Kappa]) -> Result<Self> {
        if labels.len() != kappas.len() {
            return Err(Error::DimensionMismatch {
                expected: labels.len(),
                got: kappas.len(),
            });
        }
        Self::from_fn(TestKind::KappaZ, labels, |i, j| {
            let (a, b) = (kappas[i], kappas[j]);
            compare_kappas(a.kappa, a.variance, b.kappa, b.variance)
        })
    }
}

/// Region-count accuracy over test regions. Regions without a class count
/// as wrong; training regions and regions with another role are skipped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionScore {
    pub correct: usize,
    pub evaluated: usize,
    pub unclassified: usize,
}

impl RegionScore {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.evaluated as f64
    }
}

pub fn region_score(map: &ClassificationMap, data: &LabeledDataset) -> Result<RegionScore> {
    let mut s = RegionScore {
        correct: 0,
        evaluated: 0,
        unclassified: 0,
    };
    for e in data.with_role(Role::Test) {
        let entry = map
            .entries()
            .get(e.region_id as usize)
            .ok_or_else(|| Error::InvalidData(format!("region {} is not in the map", e.region_id)))?;
        if entry.status == crate::raster::RegionStatus::Degenerate {
            continue;
        }
        s.evaluated += 1;
        match entry.class_id {
            Some(c) if c == e.class_id => s.correct += 1,
            Some(_) => {}
            None => s.unclassified += 1,
        }
    }
    if s.evaluated == 0 {
        return Err(Error::InvalidData("no test regions to evaluate".into()));
    }
    Ok(s)
}

/// Confusion matrix over classified test regions.
pub fn region_confusion(map: &ClassificationMap, data: &LabeledDataset) -> Result<ConfusionMatrix> {
    let pairs: Vec<(u32, u32)> = data
        .with_role(Role::Test)
        .filter_map(|e| map.class_of(e.region_id).map(|p| (e.class_id, p)))
        .collect();
    ConfusionMatrix::from_pairs(class_list(data, map), pairs)
}

/// Confusion matrix over the pixels of test regions, keeping one pixel in
/// `step` along each axis.
pub fn pixel_confusion(
    map: &ClassificationMap,
    seg: &SegmentationMap,
    data: &LabeledDataset,
    step: usize,
) -> Result<ConfusionMatrix> {
    if step == 0 {
        return Err(Error::InvalidParameter("subsampling step must be positive".into()));
    }
    let mut pairs = Vec::new();
    for y in (0..seg.height()).step_by(step) {
        for x in (0..seg.width()).step_by(step) {
            let r = seg.ids()[y * seg.width() + x];
            if let (Some(e), Some(p)) = (data.get(r), map.class_of(r)) {
                if e.role == Role::Test {
                    pairs.push((e.class_id, p));
                }
            }
        }
    }
    ConfusionMatrix::from_pairs(class_list(data, map), pairs)
}

fn class_list(data: &LabeledDataset, map: &ClassificationMap) -> Vec<u32> {
    let mut c: Vec<u32> = data
        .entries()
        .iter()
        .map(|e| e.class_id)
        .chain(map.entries().iter().filter_map(|e| e.class_id))
        .collect();
    c.sort_unstable();
    c.dedup();
    c
}
