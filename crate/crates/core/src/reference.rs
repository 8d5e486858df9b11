//! Bundled class covariance matrices estimated from land-cover samples of an
//! L-band scene (A1, A3, PF, PS, RG, BS). Class A2 is not available.

use serde::{Deserialize, Serialize};

use crate::distances::{closed_form, DistanceKind};
use crate::error::{Error, Result};
use crate::hermitian::HermitianMatrix;

const APPENDIX_JSON: &str = include_str!("../data/appendix_classes.json");

pub const CLASS_NAMES: [&str; 6] = ["A1", "A3", "PF", "PS", "RG", "BS"];

/// Published pairwise Hellinger distances, upper triangle in `CLASS_NAMES`
/// order.
pub const HELLINGER_TABLE: [(&str, &str, f64); 15] = [
    ("A1", "A3", 0.961),
    ("A1", "PF", 0.772),
    ("A1", "PS", 0.344),
    ("A1", "RG", 0.410),
    ("A1", "BS", 0.315),
    ("A3", "PF", 0.906),
    ("A3", "PS", 0.933),
    ("A3", "RG", 0.928),
    ("A3", "BS", 0.989),
    ("PF", "PS", 0.443),
    ("PF", "RG", 0.283),
    ("PF", "BS", 0.899),
    ("PS", "RG", 0.062),
    ("PS", "BS", 0.523),
    ("RG", "BS", 0.652),
];

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NamedClass {
    pub name: String,
    pub sigma: HermitianMatrix,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ClassManifest {
    #[serde(default)]
    pub description: String,
    pub classes: Vec<NamedClass>,
}

impl ClassManifest {
    pub fn from_json(text: &str) -> Result<Self> {
        let manifest: ClassManifest = serde_json::from_str(text)?;
        for class in &manifest.classes {
            if !class.sigma.is_positive_definite() {
                return Err(Error::InvalidData(format!(
                    "class {} covariance is not positive definite",
                    class.name
                )));
            }
        }
        Ok(manifest)
    }

    pub fn names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }

    pub fn matrices(&self) -> Vec<HermitianMatrix> {
        self.classes.iter().map(|c| c.sigma).collect()
    }
}

pub fn appendix() -> ClassManifest {
    ClassManifest::from_json(APPENDIX_JSON).expect("bundled class manifest is valid")
}

pub fn class_matrix(name: &str) -> Option<HermitianMatrix> {
    appendix()
        .classes
        .into_iter()
        .find(|c| c.name == name)
        .map(|c| c.sigma)
}

/// Fit of the bundled classes' Hellinger distances to the published table
/// at one looks value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooksFit {
    pub looks: f64,
    pub max_deviation: f64,
    /// Computed minus published, in table order.
    pub deviations: Vec<f64>,
}

pub fn hellinger_fit(looks: f64) -> Result<LooksFit> {
    let deviations = HELLINGER_TABLE
        .iter()
        .map(|&(a, b, v)| {
            let (sa, sb) = (class_matrix(a).expect("table class"), class_matrix(b).expect("table class"));
            Ok(closed_form(DistanceKind::Hellinger, &sa, &sb, looks)? - v)
        })
        .collect::<Result<Vec<f64>>>()?;
    let max_deviation = deviations.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    Ok(LooksFit {
        looks,
        max_deviation,
        deviations,
    })
}

/// Candidate with the smallest maximum absolute deviation; ties keep the
/// earlier candidate.
pub fn calibrate_looks(candidates: &[f64]) -> Result<LooksFit> {
    let mut best: Option<LooksFit> = None;
    for &n in candidates {
        let fit = hellinger_fit(n)?;
        if best.as_ref().is_none_or(|b| fit.max_deviation < b.max_deviation) {
            best = Some(fit);
        }
    }
    best.ok_or_else(|| Error::InvalidParameter("no candidate looks values".into()))
}

/// Real-valued looks in `[lo, hi]` minimizing the maximum deviation: a scan
/// at step 0.01 refined by golden-section search around the best point.
pub fn fit_looks(lo: f64, hi: f64) -> Result<LooksFit> {
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::InvalidParameter(format!("bad looks range [{lo}, {hi}]")));
    }
    let steps = ((hi - lo) / 0.01).ceil() as usize;
    let grid: Vec<f64> = (0..=steps).map(|k| (lo + k as f64 * 0.01).min(hi)).collect();
    let coarse = calibrate_looks(&grid)?;
    let cost = |n: f64| hellinger_fit(n).map(|f| f.max_deviation).unwrap_or(f64::INFINITY);
    let (mut a, mut b) = ((coarse.looks - 0.01).max(lo), (coarse.looks + 0.01).min(hi));
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..60 {
        let (c, d) = (b - r * (b - a), a + r * (b - a));
        if cost(c) < cost(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let refined = hellinger_fit((a + b) / 2.0)?;
    Ok(if refined.max_deviation < coarse.max_deviation {
        refined
    } else {
        coarse
    })
}
