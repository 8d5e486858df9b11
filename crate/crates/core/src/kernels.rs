//! τ-shifted metric between region models and the exponential kernel built
//! on it, plus Gram matrices and their binary cache format.
//!
//! For region models `u ≠ v` the metric is `D(u, v) + τ`, and `0` for the
//! same region. With `τ` at least as large as every distance in play, the
//! shifted value satisfies the triangle inequality even though `D` does not.

use std::io::{Read, Write};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::distances::{distance, distance_matrix, DistanceKind, SymmetricMatrix};
use crate::error::{Error, Result};
use crate::wishart::WishartModel;

/// Multiplier applied to the largest training distance when fixing τ.
pub const TAU_SAFETY_FACTOR: f64 = 1.05;

const GRAM_MAGIC: &[u8; 4] = b"WGRM";
const GRAM_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricContext {
    pub kind: DistanceKind,
    pub tau: f64,
    pub gamma: f64,
}

impl MetricContext {
    pub fn new(kind: DistanceKind, tau: f64, gamma: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
        }
        Ok(Self { kind, tau, gamma })
    }

    pub fn with_gamma(self, gamma: f64) -> Result<Self> {
        Self::new(self.kind, self.tau, gamma)
    }

    /// `0` for the same region, `D + τ` otherwise.
    pub fn metricize_value(&self, distance: f64, same_region: bool) -> Result<f64> {
        if same_region {
            return Ok(0.0);
        }
        if distance > self.tau {
            return Err(Error::TauViolation {
                distance,
                tau: self.tau,
                i: 0,
                j: 0,
            });
        }
        Ok(distance + self.tau)
    }

    /// Like [`metricize_value`](Self::metricize_value) but clamps distances
    /// beyond τ, which is how query regions are handled after training.
    pub fn metricize_clamped(&self, distance: f64) -> f64 {
        if distance > self.tau {
            warn!(
                "distance {distance:.6} exceeds tau {:.6}; clamping to tau",
                self.tau
            );
            return 2.0 * self.tau;
        }
        distance + self.tau
    }

    pub fn kernel_value(&self, metric: f64) -> f64 {
        (-self.gamma * metric).exp()
    }
}

pub fn metricize(
    ctx: &MetricContext,
    a: &WishartModel,
    b: &WishartModel,
    same_region: bool,
) -> Result<f64> {
    if same_region {
        return Ok(0.0);
    }
    ctx.metricize_value(distance(ctx.kind, a, b)?, false)
}

pub fn kernel(
    ctx: &MetricContext,
    a: &WishartModel,
    b: &WishartModel,
    same_region: bool,
) -> Result<f64> {
    Ok(ctx.kernel_value(metricize(ctx, a, b, same_region)?))
}

/// τ from a precomputed distance matrix.
pub fn tau_from_distances(distances: &SymmetricMatrix) -> Result<f64> {
    if distances.len() < 2 {
        return Err(Error::InvalidParameter(
            "tau needs at least two models".into(),
        ));
    }
    let max = distances.max_off_diagonal();
    // Identical models everywhere would give τ = 0, which is not a valid shift.
    Ok(if max > 0.0 {
        TAU_SAFETY_FACTOR * max
    } else {
        f64::MIN_POSITIVE
    })
}

pub fn build_context(
    kind: DistanceKind,
    training_models: &[WishartModel],
    gamma: f64,
) -> Result<MetricContext> {
    let d = distance_matrix(kind, training_models)?;
    MetricContext::new(kind, tau_from_distances(&d)?, gamma)
}

/// Symmetric kernel matrix between region models, with the context it was
/// built under.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    values: SymmetricMatrix,
    context: MetricContext,
    model_ids: Vec<u32>,
}

impl GramMatrix {
    /// Builds from a precomputed distance matrix; entry `(i, j)` is treated
    /// as the same region exactly when `model_ids[i] == model_ids[j]`.
    pub fn from_distances(
        ctx: MetricContext,
        distances: &SymmetricMatrix,
        model_ids: Vec<u32>,
    ) -> Result<Self> {
        let n = distances.len();
        if model_ids.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: model_ids.len(),
            });
        }
        let mut values = SymmetricMatrix::zeros(n);
        for i in 0..n {
            for j in i..n {
                let same = model_ids[i] == model_ids[j];
                let m = ctx
                    .metricize_value(distances.get(i, j), same)
                    .map_err(|e| match e {
                        Error::TauViolation { distance, tau, .. } => Error::TauViolation {
                            distance,
                            tau,
                            i,
                            j,
                        },
                        e => e,
                    })?;
                values.set(i, j, ctx.kernel_value(m));
            }
        }
        Ok(Self {
            values,
            context: ctx,
            model_ids,
        })
    }

    pub fn values(&self) -> &SymmetricMatrix {
        &self.values
    }

    pub fn context(&self) -> &MetricContext {
        &self.context
    }

    pub fn model_ids(&self) -> &[u32] {
        &self.model_ids
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values.get(i, j)
    }

    /// Smallest eigenvalue; negative values mean the kernel is indefinite
    /// on this sample.
    pub fn min_eigenvalue(&self) -> f64 {
        let n = self.len();
        if n == 0 {
            return f64::NAN;
        }
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| self.get(i, j));
        nalgebra::SymmetricEigen::new(m)
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(GRAM_MAGIC)?;
        w.write_all(&[GRAM_VERSION, self.context.kind.tag()])?;
        if let DistanceKind::Renyi { beta } = self.context.kind {
            w.write_all(&beta.to_le_bytes())?;
        }
        w.write_all(&self.context.tau.to_le_bytes())?;
        w.write_all(&self.context.gamma.to_le_bytes())?;
        w.write_all(&(self.len() as u32).to_le_bytes())?;
        for id in &self.model_ids {
            w.write_all(&id.to_le_bytes())?;
        }
        for i in 0..self.len() {
            for j in i..self.len() {
                w.write_all(&self.get(i, j).to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != GRAM_MAGIC {
            return Err(Error::Format("not a Gram cache file".into()));
        }
        let mut head = [0u8; 2];
        r.read_exact(&mut head)?;
        if head[0] != GRAM_VERSION {
            return Err(Error::Format(format!("unsupported Gram version {}", head[0])));
        }
        let beta = if head[1] == (DistanceKind::Renyi { beta: 0.5 }).tag() {
            Some(read_f64(&mut r)?)
        } else {
            None
        };
        let kind = DistanceKind::from_tag(head[1], beta)?;
        let tau = read_f64(&mut r)?;
        let gamma = read_f64(&mut r)?;
        let context = MetricContext::new(kind, tau, gamma)?;
        let n = read_u32(&mut r)? as usize;
        let model_ids = (0..n).map(|_| read_u32(&mut r)).collect::<Result<Vec<_>>>()?;
        let mut values = SymmetricMatrix::zeros(n);
        for i in 0..n {
            for j in i..n {
                values.set(i, j, read_f64(&mut r)?);
            }
        }
        Ok(Self {
            values,
            context,
            model_ids,
        })
    }
}

/// Kernel matrix over region models computed from scratch.
pub fn build_gram(
    ctx: MetricContext,
    models: &[WishartModel],
    region_ids: &[u32],
) -> Result<GramMatrix> {
    if models.len() != region_ids.len() {
        return Err(Error::DimensionMismatch {
            expected: models.len(),
            got: region_ids.len(),
        });
    }
    let d = distance_matrix(ctx.kind, models)?;
    GramMatrix::from_distances(ctx, &d, region_ids.to_vec())
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference;

    fn models(looks: f64) -> Vec<WishartModel> {
        reference::appendix()
            .matrices()
            .into_iter()
            .map(|s| WishartModel::new(s, looks).unwrap())
            .collect()
    }

    #[test]
    fn metricize_clauses() {
        let ctx = MetricContext::new(DistanceKind::Hellinger, 2.0, 0.5).unwrap();
        assert_eq!(ctx.metricize_value(1.0, true).unwrap(), 0.0);
        assert_eq!(ctx.metricize_value(1.0, false).unwrap(), 3.0);
        assert!(matches!(
            ctx.metricize_value(2.5, false),
            Err(Error::TauViolation { .. })
        ));
        assert_eq!(ctx.metricize_clamped(2.5), 4.0);
    }

    #[test]
    fn identical_models_in_distinct_regions_are_tau_apart() {
        let m = models(9.0);
        let ctx = MetricContext::new(DistanceKind::Hellinger, 1.0, 1.0).unwrap();
        assert_eq!(metricize(&ctx, &m[0], &m[0], false).unwrap(), 1.0);
        assert_eq!(metricize(&ctx, &m[0], &m[0], true).unwrap(), 0.0);
    }

    #[test]
    fn kernel_values() {
        let ctx = MetricContext::new(DistanceKind::Hellinger, 2.0, 0.5).unwrap();
        assert_eq!(ctx.kernel_value(ctx.metricize_value(0.3, true).unwrap()), 1.0);
        let k = ctx.kernel_value(ctx.metricize_value(1.0, false).unwrap());
        assert!((k - 0.223_130_160_148_429_83).abs() < 1e-12);
        let m = models(9.0);
        let ctx = build_context(DistanceKind::Bhattacharyya, &m, 0.1).unwrap();
        let mut last = f64::INFINITY;
        for g in [0.05, 0.1, 1.0, 5.0] {
            let k = kernel(&ctx.with_gamma(g).unwrap(), &m[1], &m[2], false).unwrap();
            assert!(k < last && k > 0.0);
            last = k;
        }
        let ab = kernel(&ctx, &m[3], &m[4], false).unwrap();
        let ba = kernel(&ctx, &m[4], &m[3], false).unwrap();
        assert_eq!(ab, ba);
    }

    #[test]
    fn context_tau_is_scaled_maximum() {
        let s1 = 1.0f64;
        let s2 = 3.0f64;
        // One pair, KL in dimension one would be easy, but models are 3×3:
        // use a diagonal pair with a known KL value instead.
        let a = WishartModel::new(crate::hermitian::HermitianMatrix::identity().scaled(s1), 3.0).unwrap();
        let b = WishartModel::new(crate::hermitian::HermitianMatrix::identity().scaled(s2), 3.0).unwrap();
        let d = distance(DistanceKind::KullbackLeibler, &a, &b).unwrap();
        let ctx = build_context(DistanceKind::KullbackLeibler, &[a, b], 1.0).unwrap();
        assert_eq!(ctx.tau, 1.05 * d);
        assert!(build_context(DistanceKind::KullbackLeibler, &[a], 1.0).is_err());

        let mut m = models(9.0);
        let t1 = build_context(DistanceKind::Hellinger, &m, 1.0).unwrap().tau;
        m.reverse();
        m.swap(1, 4);
        let t2 = build_context(DistanceKind::Hellinger, &m, 1.0).unwrap().tau;
        assert_eq!(t1, t2);
    }

    #[test]
    fn context_tau_for_two_models_with_distance_four() {
        let mut d = SymmetricMatrix::zeros(2);
        d.set(0, 1, 4.0);
        assert!((tau_from_distances(&d).unwrap() - 4.2).abs() < 1e-12);
    }

    #[test]
    fn gram_properties_and_roundtrip() {
        let m = models(3.0);
        let ids: Vec<u32> = (10..16).collect();
        for kind in [DistanceKind::Hellinger, DistanceKind::renyi(0.7).unwrap()] {
            let ctx = build_context(kind, &m, 0.8).unwrap();
            let g = build_gram(ctx, &m, &ids).unwrap();
            for i in 0..6 {
                assert_eq!(g.get(i, i), 1.0);
                for j in 0..6 {
                    assert_eq!(g.get(i, j), g.get(j, i));
                    assert!(g.get(i, j) > 0.0 && g.get(i, j) <= 1.0);
                    if i != j {
                        let k = kernel(&ctx, &m[i], &m[j], false).unwrap();
                        assert_eq!(g.get(i, j), k);
                    }
                }
            }
            let mut buf = Vec::new();
            g.write_to(&mut buf).unwrap();
            let expected_len = 4 + 2 + if kind.tag() == 2 { 8 } else { 0 } + 16 + 4 + 24 + 21 * 8;
            assert_eq!(buf.len(), expected_len);
            let back = GramMatrix::read_from(&buf[..]).unwrap();
            assert_eq!(back, g);
            assert!(g.min_eigenvalue().is_finite());
        }
        let one = build_gram(
            MetricContext::new(DistanceKind::Hellinger, 1.0, 1.0).unwrap(),
            &m[..1],
            &[0],
        )
        .unwrap();
        assert_eq!(one.get(0, 0), 1.0);
    }

    #[test]
    fn gram_reports_violating_pair() {
        let m = models(3.0);
        let ctx = MetricContext::new(DistanceKind::Hellinger, 0.1, 1.0).unwrap();
        let err = build_gram(ctx, &m, &[0, 1, 2, 3, 4, 5]).unwrap_err();
        assert!(matches!(err, Error::TauViolation { i: 0, j: 1, .. }), "{err}");
    }

    #[test]
    fn bad_gram_file_is_rejected() {
        assert!(GramMatrix::read_from(&b"PCOV\x01\x00"[..]).is_err());
    }
}
