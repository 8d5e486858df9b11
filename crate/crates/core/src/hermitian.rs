//! Closed-form arithmetic on 3×3 complex Hermitian matrices.
//!
//! Matrices are stored in the same six-entry layout used by the raster file
//! format: the three real diagonal intensities and the three complex entries
//! of the strict upper triangle. The lower triangle is always the conjugate of
//! the upper one, so every stored value is Hermitian by construction.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ComplexScalar = Complex64;

/// Relative Frobenius residual above which a full matrix is rejected as
/// non-Hermitian on ingest.
pub const HERMITIAN_TOLERANCE: f64 = 1e-6;

/// Relative determinant threshold below which a matrix is treated as singular.
pub const SINGULAR_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HermitianMatrix {
    /// `[Z_hh, Z_hv, Z_vv]`
    diag: [f64; 3],
    /// `[Z_hhhv, Z_hhvv, Z_hvvv]`, i.e. entries (0,1), (0,2), (1,2).
    upper: [Complex64; 3],
}

impl HermitianMatrix {
    pub fn new(diag: [f64; 3], upper: [Complex64; 3]) -> Result<Self> {
        let finite = diag.iter().all(|d| d.is_finite())
            && upper.iter().all(|z| z.re.is_finite() && z.im.is_finite());
        if !finite {
            return Err(Error::NonFinite);
        }
        Ok(Self { diag, upper })
    }

    /// Builds a matrix that must also be usable as a model parameter.
    pub fn positive_definite(diag: [f64; 3], upper: [Complex64; 3]) -> Result<Self> {
        let m = Self::new(diag, upper)?;
        if !m.is_positive_definite() {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(m)
    }

    pub fn identity() -> Self {
        Self::diagonal([1.0; 3])
    }

    pub fn diagonal(diag: [f64; 3]) -> Self {
        Self {
            diag,
            upper: [Complex64::new(0.0, 0.0); 3],
        }
    }

    /// Accepts a full matrix, rejecting it when it is not Hermitian.
    pub fn from_full(m: &[[Complex64; 3]; 3]) -> Result<Self> {
        let mut residual = 0.0;
        let mut norm = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                residual += (m[i][j] - m[j][i].conj()).norm_sqr();
                norm += m[i][j].norm_sqr();
            }
        }
        let rel = if norm > 0.0 {
            (residual / norm).sqrt()
        } else {
            0.0
        };
        if !rel.is_finite() {
            return Err(Error::NonFinite);
        }
        if rel > HERMITIAN_TOLERANCE {
            return Err(Error::NotHermitian(rel));
        }
        Self::new(
            [m[0][0].re, m[1][1].re, m[2][2].re],
            [m[0][1], m[0][2], m[1][2]],
        )
    }

    pub fn diag(&self) -> [f64; 3] {
        self.diag
    }

    pub fn upper(&self) -> [Complex64; 3] {
        self.upper
    }

    /// Entry (i, j) of the full matrix.
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        match (i, j) {
            (i, j) if i == j => Complex64::new(self.diag[i], 0.0),
            (0, 1) => self.upper[0],
            (0, 2) => self.upper[1],
            (1, 2) => self.upper[2],
            (i, j) => self.get(j, i).conj(),
        }
    }

    pub fn to_full(&self) -> [[Complex64; 3]; 3] {
        let mut out = [[Complex64::new(0.0, 0.0); 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.get(i, j);
            }
        }
        out
    }

    /// The nine reals of the raster layout.
    pub fn to_packed(&self) -> [f64; 9] {
        let [a, b, c] = self.diag;
        let [x, y, z] = self.upper;
        [a, b, c, x.re, x.im, y.re, y.im, z.re, z.im]
    }

    pub fn from_packed(p: &[f64; 9]) -> Result<Self> {
        Self::new(
            [p[0], p[1], p[2]],
            [
                Complex64::new(p[3], p[4]),
                Complex64::new(p[5], p[6]),
                Complex64::new(p[7], p[8]),
            ],
        )
    }

    fn scale(&self) -> f64 {
        self.diag.iter().fold(0.0_f64, |m, d| m.max(d.abs()))
    }

    /// Leading principal minors all strictly positive.
    pub fn is_positive_definite(&self) -> bool {
        let [a, b, _] = self.diag;
        let x = self.upper[0];
        let minor2 = a * b - x.norm_sqr();
        a > 0.0 && minor2 > 0.0 && self.determinant() > SINGULAR_TOLERANCE * self.scale().powi(3)
    }

    pub fn determinant(&self) -> f64 {
        let [a, b, c] = self.diag.map(|d| Complex64::new(d, 0.0));
        let [x, y, z] = self.upper;
        let det = a * (b * c - z * z.conj()) - x * (x.conj() * c - z * y.conj())
            + y * (x.conj() * z.conj() - b * y.conj());
        debug_assert!(
            det.im.abs() <= 1e-9 * det.re.abs().max(self.scale().powi(3)).max(f64::MIN_POSITIVE),
            "imaginary determinant residual {}",
            det.im
        );
        det.re
    }

    /// Inverse via the adjugate; fails when the determinant is below
    /// `1e-12 · max(diag)³` in magnitude.
    pub fn inverse(&self) -> Result<Self> {
        let det = self.determinant();
        if !(det.abs() > SINGULAR_TOLERANCE * self.scale().powi(3)) {
            return Err(Error::SingularMatrix { det });
        }
        let [a, b, c] = self.diag;
        let [x, y, z] = self.upper;
        let d = 1.0 / det;
        let diag = [
            (b * c - z.norm_sqr()) * d,
            (a * c - y.norm_sqr()) * d,
            (a * b - x.norm_sqr()) * d,
        ];
        let upper = [
            (y * z.conj() - x * c) * d,
            (x * z - y * b) * d,
            (y * x.conj() - z * a) * d,
        ];
        Self::new(diag, upper)
    }

    /// `Re Tr(A·B)`.
    pub fn trace_product(&self, other: &Self) -> f64 {
        let diag: f64 = self
            .diag
            .iter()
            .zip(other.diag.iter())
            .map(|(a, b)| a * b)
            .sum();
        let off: f64 = self
            .upper
            .iter()
            .zip(other.upper.iter())
            .map(|(a, b)| (a * b.conj()).re)
            .sum();
        diag + 2.0 * off
    }

    /// `w·A + (1 − w)·B` for `w ∈ [0, 1]`.
    pub fn convex_combination(&self, other: &Self, w: f64) -> Self {
        debug_assert!((0.0..=1.0).contains(&w));
        self.linear_combination(w, other, 1.0 - w)
    }

    /// `wa·A + wb·B` for arbitrary real weights; the result is Hermitian but
    /// not necessarily positive definite.
    pub fn linear_combination(&self, wa: f64, other: &Self, wb: f64) -> Self {
        let mut diag = [0.0; 3];
        let mut upper = [Complex64::new(0.0, 0.0); 3];
        for k in 0..3 {
            diag[k] = wa * self.diag[k] + wb * other.diag[k];
            upper[k] = self.upper[k] * wa + other.upper[k] * wb;
        }
        Self { diag, upper }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            diag: self.diag.map(|d| d * s),
            upper: self.upper.map(|z| z * s),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        let d: f64 = self.diag.iter().map(|d| d * d).sum();
        let u: f64 = self.upper.iter().map(|z| z.norm_sqr()).sum();
        (d + 2.0 * u).sqrt()
    }

    /// `‖A − B‖_F / ‖B‖_F`.
    pub fn relative_distance(&self, reference: &Self) -> f64 {
        self.linear_combination(1.0, reference, -1.0).frobenius_norm() / reference.frobenius_norm()
    }

    /// Rank-one outer product `v·v*ᵀ`.
    pub fn outer(v: &[Complex64; 3]) -> Self {
        Self {
            diag: [v[0].norm_sqr(), v[1].norm_sqr(), v[2].norm_sqr()],
            upper: [v[0] * v[1].conj(), v[0] * v[2].conj(), v[1] * v[2].conj()],
        }
    }

    /// Entrywise mean; `None` for an empty input.
    pub fn mean<'a, I>(items: I) -> Option<Self>
    where
        I: IntoIterator<Item = &'a HermitianMatrix>,
    {
        let mut acc = MatrixSum::default();
        for m in items {
            acc.add(m);
        }
        acc.mean()
    }
}

/// Running entrywise sum of Hermitian matrices.
#[derive(Debug, Clone, Copy, Default)]
pub struct MatrixSum {
    diag: [f64; 3],
    upper: [Complex64; 3],
    count: usize,
}

impl MatrixSum {
    pub fn add(&mut self, m: &HermitianMatrix) {
        for k in 0..3 {
            self.diag[k] += m.diag[k];
            self.upper[k] += m.upper[k];
        }
        self.count += 1;
    }

    pub fn merge(mut self, other: &MatrixSum) -> MatrixSum {
        for k in 0..3 {
            self.diag[k] += other.diag[k];
            self.upper[k] += other.upper[k];
        }
        self.count += other.count;
        self
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> Option<HermitianMatrix> {
        if self.count == 0 {
            return None;
        }
        let n = self.count as f64;
        Some(HermitianMatrix {
            diag: self.diag.map(|d| d / n),
            upper: self.upper.map(|z| z / n),
        })
    }
}
