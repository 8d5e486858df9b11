//! Closed-form stochastic distances between scaled complex Wishart models.
//!
//! All five distances are written once against [`CovarianceParameter`], which
//! is implemented for 3×3 Hermitian matrices and for positive scalars (the
//! one-dimensional Wishart, i.e. a Gamma law). The scalar instance is what the
//! quadrature oracle in [`oracle`] checks.

pub mod oracle;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermitian::{HermitianMatrix, SINGULAR_TOLERANCE};
use crate::wishart::WishartModel;

pub const DEFAULT_RENYI_ORDER: f64 = 0.9;

/// Largest exponent accepted before a Chi-Square term is reported as overflow.
const MAX_LOG_TERM: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DistanceKind {
    Bhattacharyya,
    KullbackLeibler,
    Renyi { beta: f64 },
    Hellinger,
    ChiSquare,
}

impl DistanceKind {
    pub fn renyi(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::InvalidOrder(beta));
        }
        Ok(DistanceKind::Renyi { beta })
    }

    /// The five kinds with the default Rényi order.
    pub fn all() -> [DistanceKind; 5] {
        [
            DistanceKind::Bhattacharyya,
            DistanceKind::KullbackLeibler,
            DistanceKind::ChiSquare,
            DistanceKind::Renyi {
                beta: DEFAULT_RENYI_ORDER,
            },
            DistanceKind::Hellinger,
        ]
    }

    /// One-letter code used in report tables.
    pub fn code(&self) -> &'static str {
        match self {
            DistanceKind::Bhattacharyya => "B",
            DistanceKind::KullbackLeibler => "K",
            DistanceKind::Renyi { .. } => "R",
            DistanceKind::Hellinger => "H",
            DistanceKind::ChiSquare => "C",
        }
    }

    pub fn tag(&self) -> u8 {
        match self {
            DistanceKind::Bhattacharyya => 0,
            DistanceKind::KullbackLeibler => 1,
            DistanceKind::Renyi { .. } => 2,
            DistanceKind::Hellinger => 3,
            DistanceKind::ChiSquare => 4,
        }
    }

    pub fn from_tag(tag: u8, beta: Option<f64>) -> Result<Self> {
        Ok(match tag {
            0 => DistanceKind::Bhattacharyya,
            1 => DistanceKind::KullbackLeibler,
            2 => DistanceKind::renyi(beta.unwrap_or(DEFAULT_RENYI_ORDER))?,
            3 => DistanceKind::Hellinger,
            4 => DistanceKind::ChiSquare,
            t => return Err(Error::Format(format!("unknown distance tag {t}"))),
        })
    }

    pub fn with_beta(self, beta: f64) -> Result<Self> {
        match self {
            DistanceKind::Renyi { .. } => DistanceKind::renyi(beta),
            k => Ok(k),
        }
    }
}

impl fmt::Display for DistanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DistanceKind::Bhattacharyya => write!(f, "bhattacharyya"),
            DistanceKind::KullbackLeibler => write!(f, "kullback-leibler"),
            DistanceKind::Renyi { beta } => write!(f, "renyi({beta})"),
            DistanceKind::Hellinger => write!(f, "hellinger"),
            DistanceKind::ChiSquare => write!(f, "chi-square"),
        }
    }
}

impl FromStr for DistanceKind {
    type Err = Error;

    /// Accepts full names or the one-letter codes; `renyi:0.8` sets the order.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let (name, beta) = match lower.split_once(':') {
            Some((n, b)) => {
                let beta = b
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidParameter(format!("bad Renyi order '{b}'")))?;
                (n.to_string(), Some(beta))
            }
            None => (lower, None),
        };
        match name.as_str() {
            "b" | "bhattacharyya" => Ok(DistanceKind::Bhattacharyya),
            "k" | "kl" | "kullback-leibler" => Ok(DistanceKind::KullbackLeibler),
            "r" | "renyi" => DistanceKind::renyi(beta.unwrap_or(DEFAULT_RENYI_ORDER)),
            "h" | "hellinger" => Ok(DistanceKind::Hellinger),
            "c" | "chi-square" | "chisquare" | "chi2" => Ok(DistanceKind::ChiSquare),
            other => Err(Error::InvalidParameter(format!("unknown distance '{other}'"))),
        }
    }
}

/// The operations the closed forms need from a covariance parameter.
pub trait CovarianceParameter: Copy + PartialEq + Send + Sync {
    const DIM: f64;
    fn det(&self) -> f64;
    fn inverse(&self) -> Result<Self>;
    fn trace_product(&self, other: &Self) -> f64;
    fn linear_combination(&self, wa: f64, other: &Self, wb: f64) -> Self;
    /// Magnitude used to scale the singularity threshold.
    fn scale(&self) -> f64;
}

impl CovarianceParameter for HermitianMatrix {
    const DIM: f64 = 3.0;
    fn det(&self) -> f64 {
        self.determinant()
    }
    fn inverse(&self) -> Result<Self> {
        HermitianMatrix::inverse(self)
    }
    fn trace_product(&self, other: &Self) -> f64 {
        HermitianMatrix::trace_product(self, other)
    }
    fn linear_combination(&self, wa: f64, other: &Self, wb: f64) -> Self {
        HermitianMatrix::linear_combination(self, wa, other, wb)
    }
    fn scale(&self) -> f64 {
        self.diag().iter().fold(0.0_f64, |m, d| m.max(d.abs())).powi(3)
    }
}

impl CovarianceParameter for f64 {
    const DIM: f64 = 1.0;
    fn det(&self) -> f64 {
        *self
    }
    fn inverse(&self) -> Result<Self> {
        if *self == 0.0 {
            return Err(Error::SingularMatrix { det: 0.0 });
        }
        Ok(1.0 / self)
    }
    fn trace_product(&self, other: &Self) -> f64 {
        self * other
    }
    fn linear_combination(&self, wa: f64, other: &Self, wb: f64) -> Self {
        wa * self + wb * other
    }
    fn scale(&self) -> f64 {
        self.abs()
    }
}

fn ln_det<P: CovarianceParameter>(p: &P) -> Result<f64> {
    let d = p.det();
    if !(d > 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(d.ln())
}

/// `ln |det|` of a matrix that may be indefinite, failing when it is
/// numerically singular.
fn ln_abs_det<P: CovarianceParameter>(p: &P) -> Result<f64> {
    let d = p.det();
    if !(d.abs() > SINGULAR_TOLERANCE * p.scale()) {
        return Err(Error::SingularMatrix { det: d });
    }
    Ok(d.abs().ln())
}

/// Closed-form distance between `W(Σ₁, N)` and `W(Σ₂, N)`.
///
/// `looks` only needs to be positive here; [`WishartModel`] carries the
/// stricter `N ≥ 3` required by the density.
pub fn closed_form<P: CovarianceParameter>(
    kind: DistanceKind,
    sigma1: &P,
    sigma2: &P,
    looks: f64,
) -> Result<f64> {
    if !(looks.is_finite() && looks > 0.0) {
        return Err(Error::InvalidLooks(looks));
    }
    if sigma1 == sigma2 {
        return Ok(0.0);
    }
    let n = looks;
    let ld1 = ln_det(sigma1)?;
    let ld2 = ln_det(sigma2)?;
    let inv1 = sigma1.inverse()?;
    let inv2 = sigma2.inverse()?;

    // N·[ (ln|Σ₁| + ln|Σ₂|)/2 + ln|(Σ₁⁻¹ + Σ₂⁻¹)/2| ]
    let bhattacharyya = || -> Result<f64> {
        let mid = inv1.linear_combination(0.5, &inv2, 0.5);
        Ok(n * (0.5 * (ld1 + ld2) + ln_det(&mid)?))
    };

    let value = match kind {
        DistanceKind::Bhattacharyya => bhattacharyya()?,
        DistanceKind::KullbackLeibler => {
            let tr = inv1.trace_product(sigma2) + inv2.trace_product(sigma1);
            n * (0.5 * tr - P::DIM)
        }
        DistanceKind::Hellinger => -(-bhattacharyya()?).exp_m1(),
        DistanceKind::Renyi { beta } => {
            if !(beta > 0.0 && beta < 1.0) {
                return Err(Error::InvalidOrder(beta));
            }
            let m12 = inv1.linear_combination(beta, &inv2, 1.0 - beta);
            let m21 = inv2.linear_combination(beta, &inv1, 1.0 - beta);
            let t1 = n * (-beta * ld1 + (beta - 1.0) * ld2 - ln_det(&m12)?);
            let t2 = n * ((beta - 1.0) * ld1 - beta * ld2 - ln_det(&m21)?);
            // ln((e^t1 + e^t2)/2) evaluated without cancellation near zero.
            let mean_log = (0.5 * (t1.exp_m1() + t2.exp_m1())).ln_1p();
            mean_log / (beta - 1.0)
        }
        DistanceKind::ChiSquare => {
            let a = inv2.linear_combination(2.0, &inv1, -1.0);
            let b = inv1.linear_combination(2.0, &inv2, -1.0);
            let e1 = n * (ld1 - 2.0 * ld2 - ln_abs_det(&a)?);
            let e2 = n * (ld2 - 2.0 * ld1 - ln_abs_det(&b)?);
            if e1 > MAX_LOG_TERM || e2 > MAX_LOG_TERM {
                return Err(Error::NonFiniteResult);
            }
            e1.exp_m1() + e2.exp_m1()
        }
    };
    if !value.is_finite() {
        return Err(Error::NonFiniteResult);
    }
    Ok(value)
}

pub fn distance(kind: DistanceKind, a: &WishartModel, b: &WishartModel) -> Result<f64> {
    if a.looks() != b.looks() {
        return Err(Error::LooksMismatch(a.looks(), b.looks()));
    }
    closed_form(kind, a.sigma(), b.sigma(), a.looks())
}

/// Dense symmetric matrix stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetricMatrix {
    n: usize,
    values: Vec<f64>,
}

impl SymmetricMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            values: vec![0.0; n * n],
        }
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.n + j] = v;
        self.values[j * self.n + i] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn max_off_diagonal(&self) -> f64 {
        let mut m = f64::NEG_INFINITY;
        for i in 0..self.n {
            for j in i + 1..self.n {
                m = m.max(self.get(i, j));
            }
        }
        m
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            n: self.n,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `(i, j)` for `i < j` in row-major order.
    pub(crate) fn upper_pairs(n: usize) -> Vec<(usize, usize)> {
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
    }
}

/// Pairwise distances on raw covariance parameters with a shared `looks`.
pub fn pairwise<P: CovarianceParameter>(
    kind: DistanceKind,
    sigmas: &[P],
    looks: f64,
) -> Result<SymmetricMatrix> {
    let n = sigmas.len();
    let pairs = SymmetricMatrix::upper_pairs(n);
    let values: Vec<Result<f64>> = pairs
        .par_iter()
        .map(|&(i, j)| closed_form(kind, &sigmas[i], &sigmas[j], looks).map_err(|e| e.at_pair(i, j)))
        .collect();
    let mut out = SymmetricMatrix::zeros(n);
    for (&(i, j), v) in pairs.iter().zip(values) {
        out.set(i, j, v?);
    }
    Ok(out)
}

pub fn common_looks(models: &[WishartModel]) -> Result<f64> {
    let looks = models.first().map(|m| m.looks()).unwrap_or(3.0);
    for m in models {
        if m.looks() != looks {
            return Err(Error::LooksMismatch(looks, m.looks()));
        }
    }
    Ok(looks)
}

pub fn distance_matrix(kind: DistanceKind, models: &[WishartModel]) -> Result<SymmetricMatrix> {
    let looks = common_looks(models)?;
    let sigmas: Vec<HermitianMatrix> = models.iter().map(|m| *m.sigma()).collect();
    pairwise(kind, &sigmas, looks)
}

/// Distances between every model in `rows` and every model in `cols`,
/// row-major `rows.len() × cols.len()`.
pub fn cross_distances(
    kind: DistanceKind,
    rows: &[WishartModel],
    cols: &[WishartModel],
) -> Vec<Result<f64>> {
    let n = cols.len();
    (0..rows.len() * n)
        .into_par_iter()
        .map(|k| distance(kind, &rows[k / n], &cols[k % n]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermitian::tests::hpd_strategy;
    use crate::reference;
    use proptest::prelude::*;

    fn model(name: &str, looks: f64) -> WishartModel {
        WishartModel::new(reference::class_matrix(name).unwrap(), looks).unwrap()
    }

    #[test]
    fn identical_models_have_zero_distance() {
        for kind in DistanceKind::all() {
            for name in reference::CLASS_NAMES {
                let m = model(name, 9.0);
                assert_eq!(distance(kind, &m, &m).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn looks_mismatch_is_an_error() {
        let r = distance(DistanceKind::Hellinger, &model("A1", 9.0), &model("A1", 4.0));
        assert!(matches!(r, Err(Error::LooksMismatch(_, _))));
    }

    #[test]
    fn scalar_kl_has_closed_form() {
        let (s1, s2, n) = (2.0, 5.0, 4.0);
        let expected = n * (s1 / s2 + s2 / s1) / 2.0 - n;
        let got = closed_form(DistanceKind::KullbackLeibler, &s1, &s2, n).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn hellinger_is_one_minus_bhattacharyya_coefficient() {
        let (a, b) = (model("PS", 3.0), model("BS", 3.0));
        let db = distance(DistanceKind::Bhattacharyya, &a, &b).unwrap();
        let dh = distance(DistanceKind::Hellinger, &a, &b).unwrap();
        assert!((dh - (1.0 - (-db).exp())).abs() < 1e-14);
        assert!((0.0..1.0).contains(&dh));
    }

    #[test]
    fn renyi_is_continuous_towards_one() {
        let (a, b) = (model("PF", 3.0), model("RG", 3.0));
        let vals: Vec<f64> = [0.5, 0.9, 0.99, 0.999]
            .iter()
            .map(|&beta| distance(DistanceKind::renyi(beta).unwrap(), &a, &b).unwrap())
            .collect();
        assert!(vals.iter().all(|v| v.is_finite() && *v > 0.0));
        // Order-β Rényi distances increase with β and approach the KL limit.
        assert!(vals.windows(2).all(|w| w[1] >= w[0]));
        let kl = distance(DistanceKind::KullbackLeibler, &a, &b).unwrap();
        assert!(vals[3] <= kl * 1.0001);
        assert!((vals[3] - vals[2]).abs() < 0.1 * vals[2]);
        assert!(DistanceKind::renyi(1.0).is_err());
        assert!(DistanceKind::renyi(0.0).is_err());
    }

    #[test]
    fn chi_square_reports_singular_inner_matrix() {
        // 2/σ₂ − 1/σ₁ = 0 when σ₁ = σ₂/2.
        let r = closed_form(DistanceKind::ChiSquare, &1.0f64, &2.0f64, 3.0);
        assert!(matches!(r, Err(Error::SingularMatrix { .. })));
    }

    #[test]
    fn chi_square_reports_overflow() {
        // Exponent N·(−2 ln 1.5 − ln(1/3)) ≈ 0.288·N exceeds the limit.
        let r = closed_form(DistanceKind::ChiSquare, &1.0f64, &1.5f64, 5000.0);
        assert!(matches!(r, Err(Error::NonFiniteResult)), "{r:?}");
        // Large but finite values are returned as such.
        let (a, b) = (model("A3", 16.0), model("BS", 16.0));
        assert!(distance(DistanceKind::ChiSquare, &a, &b).unwrap() > 1e30);
    }

    #[test]
    fn monotone_in_looks() {
        let (s1, s2) = (
            reference::class_matrix("PS").unwrap(),
            reference::class_matrix("RG").unwrap(),
        );
        for kind in [
            DistanceKind::Bhattacharyya,
            DistanceKind::KullbackLeibler,
            DistanceKind::Hellinger,
        ] {
            let vals: Vec<f64> = [3.0, 4.0, 9.0, 16.0]
                .iter()
                .map(|&n| closed_form(kind, &s1, &s2, n).unwrap())
                .collect();
            assert!(vals.windows(2).all(|w| w[1] > w[0]), "{kind}: {vals:?}");
        }
    }

    #[test]
    fn distance_matrix_cases() {
        let one = distance_matrix(DistanceKind::Hellinger, &[model("A1", 9.0)]).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one.get(0, 0), 0.0);

        let models: Vec<_> = reference::CLASS_NAMES.iter().map(|n| model(n, 9.0)).collect();
        for kind in DistanceKind::all() {
            let Ok(m) = distance_matrix(kind, &models) else { continue };
            for i in 0..models.len() {
                assert_eq!(m.get(i, i), 0.0);
                for j in 0..models.len() {
                    assert_eq!(m.get(i, j), m.get(j, i));
                    if i != j {
                        assert_eq!(m.get(i, j), distance(kind, &models[i], &models[j]).unwrap());
                    }
                }
            }
        }
    }

    #[test]
    fn distance_matrix_annotates_failing_pair() {
        // Σ₂ = 2Σ₁ makes 2Σ₂⁻¹ − Σ₁⁻¹ vanish.
        let a1 = reference::class_matrix("A1").unwrap();
        let models = vec![
            model("BS", 3.0),
            WishartModel::new(a1, 3.0).unwrap(),
            WishartModel::new(a1.scaled(2.0), 3.0).unwrap(),
        ];
        let err = distance_matrix(DistanceKind::ChiSquare, &models).unwrap_err();
        assert!(matches!(err, Error::Pair { i: 1, j: 2, .. }), "{err}");
        assert!(matches!(err.root(), Error::SingularMatrix { .. }));
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("H".parse::<DistanceKind>().unwrap(), DistanceKind::Hellinger);
        assert_eq!(
            "renyi:0.8".parse::<DistanceKind>().unwrap(),
            DistanceKind::Renyi { beta: 0.8 }
        );
        assert_eq!(
            "renyi".parse::<DistanceKind>().unwrap(),
            DistanceKind::Renyi { beta: 0.9 }
        );
        assert!("renyi:1.5".parse::<DistanceKind>().is_err());
        assert!("euclid".parse::<DistanceKind>().is_err());
        for k in DistanceKind::all() {
            assert_eq!(DistanceKind::from_tag(k.tag(), Some(0.9)).unwrap(), k);
        }
    }

    #[test]
    fn raw_triangle_inequality_fails_somewhere() {
        // The distances are not metrics; search the bundled classes for a
        // violating triple.
        let sigmas = reference::appendix().matrices();
        let mut found = false;
        for kind in DistanceKind::all() {
            let Ok(d) = pairwise(kind, &sigmas, 3.0) else { continue };
            for u in 0..6 {
                for v in 0..6 {
                    for w in 0..6 {
                        if d.get(u, v) + d.get(v, w) < d.get(u, w) - 1e-12 {
                            found = true;
                        }
                    }
                }
            }
        }
        assert!(found);
    }

    proptest! {
        #[test]
        fn basic_distance_properties(a in hpd_strategy(), b in hpd_strategy(), n in 3.0f64..20.0) {
            for kind in DistanceKind::all() {
                let ab = closed_form(kind, &a, &b, n);
                let ba = closed_form(kind, &b, &a, n);
                match (ab, ba) {
                    (Ok(ab), Ok(ba)) => {
                        let inner_pd = {
                            let (ia, ib) = (a.inverse().unwrap(), b.inverse().unwrap());
                            ib.linear_combination(2.0, &ia, -1.0).is_positive_definite()
                                && ia.linear_combination(2.0, &ib, -1.0).is_positive_definite()
                        };
                        if kind != DistanceKind::ChiSquare || inner_pd {
                            prop_assert!(ab >= -1e-10, "{} negative: {}", kind, ab);
                        }
                        prop_assert!((ab - ba).abs() <= 1e-10, "{} asymmetric", kind);
                        if kind == DistanceKind::Hellinger {
                            prop_assert!(ab <= 1.0);
                        }
                    }
                    (Err(_), Err(_)) => prop_assert_eq!(kind, DistanceKind::ChiSquare),
                    _ => prop_assert!(false, "{} failed in one direction only", kind),
                }
            }
        }
    }
}
