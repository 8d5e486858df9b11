//! Scaled complex Wishart model: density, estimation and Goodman sampling.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::hermitian::{HermitianMatrix, MatrixSum};

/// Explicit, seedable random source. One per thread; never shared.
pub type RandomSource = ChaCha8Rng;

pub fn seeded(seed: u64) -> RandomSource {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `index` of the generator seeded with `seed`.
pub fn stream(seed: u64, index: u64) -> RandomSource {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WishartModel {
    sigma: HermitianMatrix,
    looks: f64,
}

impl WishartModel {
    pub fn new(sigma: HermitianMatrix, looks: f64) -> Result<Self> {
        if !(looks.is_finite() && looks >= 3.0) {
            return Err(Error::InvalidLooks(looks));
        }
        if !sigma.is_positive_definite() {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self { sigma, looks })
    }

    pub fn sigma(&self) -> &HermitianMatrix {
        &self.sigma
    }

    pub fn looks(&self) -> f64 {
        self.looks
    }

    /// `ln f(Z; N, Σ)`.
    pub fn log_density(&self, z: &HermitianMatrix) -> Result<f64> {
        let n = self.looks;
        let inv = self.sigma.inverse()?;
        let det_z = z.determinant();
        if !(det_z > 0.0) {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(3.0 * n * n.ln() + (n - 3.0) * det_z.ln()
            - n * inv.trace_product(z)
            - n * self.sigma.determinant().ln()
            - ln_multivariate_gamma3(n))
    }
}

/// `ln Γ₃(N) = 3 ln π + Σ_{i=0}^{2} ln Γ(N − i)`.
pub fn ln_multivariate_gamma3(n: f64) -> f64 {
    3.0 * std::f64::consts::PI.ln() + (0..3).map(|i| ln_gamma(n - i as f64)).sum::<f64>()
}

/// Maximum-likelihood estimate: the entrywise mean of the pixel matrices.
pub fn estimate(pixels: &[HermitianMatrix], looks: f64) -> Result<WishartModel> {
    if pixels.len() < 3 {
        return Err(Error::InsufficientPixels(pixels.len()));
    }
    let mut sum = MatrixSum::default();
    pixels.iter().for_each(|p| sum.add(p));
    model_from_sum(&sum, looks)
}

pub(crate) fn model_from_sum(sum: &MatrixSum, looks: f64) -> Result<WishartModel> {
    if sum.count() < 3 {
        return Err(Error::InsufficientPixels(sum.count()));
    }
    let sigma = sum.mean().expect("nonempty sum");
    if !sigma.is_positive_definite() {
        return Err(Error::SingularEstimate);
    }
    WishartModel::new(sigma, looks)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatteringVector {
    pub s_hh: Complex64,
    pub s_hv: Complex64,
    pub s_vv: Complex64,
}

impl ScatteringVector {
    pub fn as_array(&self) -> [Complex64; 3] {
        [self.s_hh, self.s_hv, self.s_vv]
    }
}

/// Zero-mean circular complex Gaussian sampler with covariance Σ.
///
/// Draws the stacked real vector `(Re z, Im z)` from `N(0, Θ/2)` with
/// `Θ = [[Re Σ, −Im Σ], [Im Σ, Re Σ]]`, which yields `E[z z*ᵀ] = Σ`.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    /// Lower-triangular Cholesky factor of `Θ/2`, row-major.
    chol: [[f64; 6]; 6],
}

impl GaussianSampler {
    pub fn new(sigma: &HermitianMatrix) -> Result<Self> {
        let mut theta = [[0.0; 6]; 6];
        for i in 0..3 {
            for j in 0..3 {
                let s = sigma.get(i, j);
                theta[i][j] = 0.5 * s.re;
                theta[i][j + 3] = -0.5 * s.im;
                theta[i + 3][j] = 0.5 * s.im;
                theta[i + 3][j + 3] = 0.5 * s.re;
            }
        }
        let chol = cholesky6(&theta).ok_or(Error::SingularMatrix { det: 0.0 })?;
        Ok(Self { chol })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ScatteringVector {
        let mut w = [0.0; 6];
        for v in w.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let mut x = [0.0; 6];
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = (0..=i).map(|k| self.chol[i][k] * w[k]).sum();
        }
        ScatteringVector {
            s_hh: Complex64::new(x[0], x[3]),
            s_hv: Complex64::new(x[1], x[4]),
            s_vv: Complex64::new(x[2], x[5]),
        }
    }

    /// `(1/N) Σ z z*ᵀ` over `looks` independent draws.
    pub fn sample_multilook<R: Rng + ?Sized>(&self, looks: u32, rng: &mut R) -> HermitianMatrix {
        let mut sum = MatrixSum::default();
        for _ in 0..looks {
            sum.add(&HermitianMatrix::outer(&self.sample(rng).as_array()));
        }
        sum.mean().expect("looks > 0")
    }
}

fn cholesky6(a: &[[f64; 6]; 6]) -> Option<[[f64; 6]; 6]> {
    let mut l = [[0.0; 6]; 6];
    for i in 0..6 {
        for j in 0..=i {
            let s: f64 = a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

pub fn sample_scattering<R: Rng + ?Sized>(
    sigma: &HermitianMatrix,
    rng: &mut R,
) -> Result<ScatteringVector> {
    Ok(GaussianSampler::new(sigma)?.sample(rng))
}

pub fn sample_multilook<R: Rng + ?Sized>(
    sigma: &HermitianMatrix,
    looks: u32,
    rng: &mut R,
) -> Result<HermitianMatrix> {
    if looks < 3 {
        return Err(Error::InvalidLooks(looks as f64));
    }
    Ok(GaussianSampler::new(sigma)?.sample_multilook(looks, rng))
}
