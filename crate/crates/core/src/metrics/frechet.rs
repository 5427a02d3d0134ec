//! Fréchet distance between Gaussians fitted to two feature sets.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result};

/// Ridge added to a covariance fit that is rank-deficient.
pub const COVARIANCE_RIDGE: f64 = 1e-6;
/// Relative eigenvalue floor below which a covariance counts as rank-deficient.
const RANK_TOLERANCE: f64 = 1e-10;

/// Feature vectors of equal dimension, one per layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    vectors: Vec<Vec<f64>>,
}

impl FeatureSet {
    pub fn new(vectors: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(first) = vectors.first() {
            let d = first.len();
            if d == 0 {
                return Err(Error::domain("feature vectors must be non-empty"));
            }
            if let Some(bad) = vectors.iter().find(|v| v.len() != d) {
                return Err(Error::DimensionMismatch {
                    expected: d.to_string(),
                    actual: bad.len().to_string(),
                });
            }
        }
        Ok(FeatureSet { vectors })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }
}

/// Mean and covariance of a feature set.
#[derive(Debug, Clone)]
pub struct Gaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl Gaussian {
    /// Fit with unbiased (n − 1) normalization. A ridge of
    /// [`COVARIANCE_RIDGE`]·I is added when the fit is rank-deficient.
    pub fn fit(set: &FeatureSet) -> Result<Self> {
        let n = set.len();
        if n < 2 {
            return Err(Error::domain(format!(
                "need at least 2 vectors to fit a covariance, got {n}"
            )));
        }
        let d = set.dim();
        let data = DMatrix::from_row_iterator(n, d, set.vectors.iter().flatten().copied());
        let mean = data.row_mean().transpose();
        let mut centered = data;
        for mut row in centered.row_iter_mut() {
            row -= mean.transpose();
        }
        let mut cov = centered.tr_mul(&centered) / (n - 1) as f64;
        cov = (&cov + cov.transpose()) * 0.5;

        let eig = cov.clone().symmetric_eigenvalues();
        let max = eig.max();
        let min = eig.min();
        if n <= d || min <= RANK_TOLERANCE * max.max(f64::MIN_POSITIVE) {
            cov += DMatrix::identity(d, d) * COVARIANCE_RIDGE;
        }
        Ok(Gaussian { mean, cov })
    }
}

/// Symmetric positive semi-definite square root via eigendecomposition;
/// negative eigenvalues (numerical noise) are clipped to zero.
fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// `||μa − μb||² + Tr(Σa + Σb − 2 (Σa Σb)^{1/2})`.
///
/// `Tr (Σa Σb)^{1/2}` equals the sum of singular values of `Σb^{1/2} Σa^{1/2}`.
/// Taking it from an SVD keeps small (ridge-level) eigenvalues accurate;
/// forming `Σa^{1/2} Σb Σa^{1/2}` would square them into solver noise.
pub fn frechet_gaussians(a: &Gaussian, b: &Gaussian) -> Result<f64> {
    if a.mean.len() != b.mean.len() {
        return Err(Error::DimensionMismatch {
            expected: a.mean.len().to_string(),
            actual: b.mean.len().to_string(),
        });
    }
    let diff = &a.mean - &b.mean;
    let product = psd_sqrt(&b.cov) * psd_sqrt(&a.cov);
    let tr_cross: f64 = product.singular_values().iter().sum();
    let fd = diff.norm_squared() + a.cov.trace() + b.cov.trace() - 2.0 * tr_cross;
    Ok(fd.max(0.0))
}

/// Fréchet distance between Gaussians fitted to `a` and `b`.
pub fn frechet_distance(a: &FeatureSet, b: &FeatureSet) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim().to_string(),
            actual: b.dim().to_string(),
        });
    }
    frechet_gaussians(&Gaussian::fit(a)?, &Gaussian::fit(b)?)
}
