//! Numerical evaluation of the symmetrized h-φ divergence for the
//! one-dimensional scaled Wishart law (a Gamma law with shape `N` and mean
//! `σ`). Used only to verify the closed forms.

use statrs::function::gamma::ln_gamma;

use super::DistanceKind;
use crate::error::{Error, Result};
use crate::quadrature::{integrate_half_line, Tolerance};

fn ln_gamma_density(x: f64, mean: f64, shape: f64) -> f64 {
    shape * (shape / mean).ln() + (shape - 1.0) * x.ln() - shape * x / mean - ln_gamma(shape)
}

/// `φ(f_X/f_Y)·f_Y`, written in terms of both densities to avoid
/// overflowing the ratio in the tails.
fn phi_weighted(kind: DistanceKind, lx: f64, ly: f64) -> f64 {
    let (fx, fy) = (lx.exp(), ly.exp());
    match kind {
        // φ(x) = (x − 1) ln x
        DistanceKind::KullbackLeibler => (fx - fy) * (lx - ly),
        // φ(x) = (x + 1)/2 − √x
        DistanceKind::Bhattacharyya => 0.5 * (fx.sqrt() - fy.sqrt()).powi(2),
        // φ(x) = (√x − 1)²/2
        DistanceKind::Hellinger => 0.5 * (fx.sqrt() - fy.sqrt()).powi(2),
        // φ(x) = (x^{1−β} + x^β − β(x − 1) − 2) / (2(β − 1))
        DistanceKind::Renyi { beta } => {
            let a = ((1.0 - beta) * lx + beta * ly).exp();
            let b = (beta * lx + (1.0 - beta) * ly).exp();
            (a + b - beta * (fx - fy) - 2.0 * fy) / (2.0 * (beta - 1.0))
        }
        // φ(x) = (x − 1)²(x + 1)/x
        DistanceKind::ChiSquare => {
            let d = fx - fy;
            d * d * (fx + fy) * (-(lx + ly)).exp()
        }
    }
}

fn h(kind: DistanceKind, y: f64) -> f64 {
    match kind {
        DistanceKind::KullbackLeibler => y / 2.0,
        DistanceKind::Bhattacharyya => -(-y).ln_1p(),
        DistanceKind::Hellinger | DistanceKind::ChiSquare => y,
        DistanceKind::Renyi { beta } => ((beta - 1.0) * y).ln_1p() / (beta - 1.0),
    }
}

fn directed(kind: DistanceKind, sx: f64, sy: f64, looks: f64) -> Result<f64> {
    let tol = Tolerance {
        abs: 1e-9,
        rel: 1e-12,
        max_intervals: 20_000,
    };
    let scale = sx.max(sy);
    let est = integrate_half_line(
        |x| {
            if x <= 0.0 {
                return 0.0;
            }
            phi_weighted(
                kind,
                ln_gamma_density(x, sx, looks),
                ln_gamma_density(x, sy, looks),
            )
        },
        scale,
        tol,
    )?;
    Ok(h(kind, est.value))
}

/// `(d(X,Y) + d(Y,X))/2` by adaptive quadrature over `(0, ∞)`.
pub fn oracle_hphi_1d(kind: DistanceKind, sigma1: f64, sigma2: f64, looks: f64) -> Result<f64> {
    if !(sigma1 > 0.0 && sigma2 > 0.0 && looks > 0.0) {
        return Err(Error::InvalidParameter(
            "oracle needs positive scale and looks".into(),
        ));
    }
    let forward = directed(kind, sigma1, sigma2, looks)?;
    let backward = directed(kind, sigma2, sigma1, looks)?;
    Ok(0.5 * (forward + backward))
}
