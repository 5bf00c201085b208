//! Nearest-class-mean classification in face-space coordinates using
//! Mahalanobis distance with equal priors.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Scale of the ridge added to the pooled covariance diagonal:
/// `ridge = 1e-6 * trace / dim` (with an absolute floor of `1e-6` when the
/// within-class scatter is exactly zero).
pub const RIDGE_SCALE: f64 = 1e-6;

/// Covariance estimator for the Mahalanobis metric.
#[derive(Debug, Clone)]
pub enum CovarianceEstimator {
    /// Pooled within-class covariance over the training projections,
    /// ridge-regularized. The default.
    Pooled,
    /// Diagonal metric from a face-space eigenvalue spectrum (global
    /// eigenvalue whitening); one eigenvalue per coordinate.
    EigenvalueWhitening(Vec<f64>),
}

/// A trained nearest-class-mean model. Class labels are kept sorted so
/// distance ties resolve to the lexicographically smaller label.
#[derive(Debug, Clone)]
pub struct ClassifierModel {
    class_labels: Vec<String>,
    class_means: Vec<DVector<f64>>,
    pooled_cov_inv: DMatrix<f64>,
    regularization: f64,
}

impl ClassifierModel {
    pub fn class_labels(&self) -> &[String] {
        &self.class_labels
    }

    pub fn class_mean(&self, label: &str) -> Result<&DVector<f64>> {
        let idx = self.label_index(label)?;
        Ok(&self.class_means[idx])
    }

    pub fn pooled_covariance_inverse(&self) -> &DMatrix<f64> {
        &self.pooled_cov_inv
    }

    pub fn regularization(&self) -> f64 {
        self.regularization
    }

    pub fn dim(&self) -> usize {
        self.class_means[0].len()
    }

    fn label_index(&self, label: &str) -> Result<usize> {
        self.class_labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    fn check_dim(&self, y: &DVector<f64>) -> Result<()> {
        if y.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "classifier input".into(),
                expected: self.dim(),
                found: y.len(),
            });
        }
        Ok(())
    }

    /// `sqrt((y - mu_c)^T S^-1 (y - mu_c))`.
    pub fn mahalanobis(&self, y: &DVector<f64>, label: &str) -> Result<f64> {
        self.check_dim(y)?;
        let idx = self.label_index(label)?;
        Ok(self.squared_distance(y, idx).max(0.0).sqrt())
    }

    fn squared_distance(&self, y: &DVector<f64>, class_idx: usize) -> f64 {
        let d = y - &self.class_means[class_idx];
        (d.transpose() * &self.pooled_cov_inv * &d)[(0, 0)]
    }

    /// Equal priors and costs: the class minimizing the Mahalanobis
    /// distance, ties broken toward the lexicographically smaller label.
    pub fn predict(&self, y: &DVector<f64>) -> Result<&str> {
        self.check_dim(y)?;
        let mut best = 0;
        let mut best_d = self.squared_distance(y, 0);
        for idx in 1..self.class_labels.len() {
            let d = self.squared_distance(y, idx);
            if d < best_d {
                best_d = d;
                best = idx;
            }
        }
        Ok(&self.class_labels[best])
    }

    /// Fraction of samples whose prediction matches the given label.
    pub fn accuracy(&self, ys: &[DVector<f64>], labels: &[&str]) -> Result<f64> {
        if ys.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                context: "accuracy labels".into(),
                expected: ys.len(),
                found: labels.len(),
            });
        }
        if ys.is_empty() {
            return Err(Error::EmptyInput("test set".into()));
        }
        let mut hits = 0usize;
        for (y, &label) in ys.iter().zip(labels) {
            if self.predict(y)? == label {
                hits += 1;
            }
        }
        Ok(hits as f64 / ys.len() as f64)
    }
}

/// Train a nearest-class-mean model: per-class arithmetic means plus a
/// pooled within-class covariance `sum_c sum_i (y - mu_c)(y - mu_c)^T /
/// (N - C)`, ridge-regularized and inverted.
pub fn train(
    projections: &[DVector<f64>],
    labels: &[&str],
    estimator: &CovarianceEstimator,
) -> Result<ClassifierModel> {
    if projections.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            context: "training labels".into(),
            expected: projections.len(),
            found: labels.len(),
        });
    }
    if projections.is_empty() {
        return Err(Error::EmptyInput("training set".into()));
    }
    let dim = projections[0].len();
    if dim == 0 {
        return Err(Error::EmptyInput("projection coordinates".into()));
    }
    for p in projections {
        if p.len() != dim {
            return Err(Error::DimensionMismatch {
                context: "training projections".into(),
                expected: dim,
                found: p.len(),
            });
        }
    }

    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, &label) in labels.iter().enumerate() {
        groups.entry(label).or_default().push(i);
    }
    if groups.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 classes, got {}",
            groups.len()
        )));
    }
    for (label, members) in &groups {
        if members.len() < 2 {
            return Err(Error::ClassTooSmall {
                label: label.to_string(),
                size: members.len(),
                required: 2,
            });
        }
    }

    let class_labels: Vec<String> = groups.keys().map(|l| l.to_string()).collect();
    let class_means: Vec<DVector<f64>> = groups
        .values()
        .map(|members| {
            let mut mean = DVector::zeros(dim);
            for &i in members {
                mean += &projections[i];
            }
            mean / members.len() as f64
        })
        .collect();

    let (pooled_cov_inv, regularization) = match estimator {
        CovarianceEstimator::Pooled => {
            let mut scatter = DMatrix::zeros(dim, dim);
            for (members, mean) in groups.values().zip(&class_means) {
                for &i in members {
                    let d = &projections[i] - mean;
                    scatter.syger(1.0, &d, &d, 1.0);
                }
            }
            let denom = (projections.len() - groups.len()) as f64;
            let mut cov = scatter / denom;
            // Fill in the upper triangle (syger only touched the lower).
            for i in 0..dim {
                for j in (i + 1)..dim {
                    cov[(i, j)] = cov[(j, i)];
                }
            }
            let trace: f64 = cov.diagonal().sum();
            let base = trace / dim as f64;
            let ridge = if base > 0.0 { RIDGE_SCALE * base } else { RIDGE_SCALE };
            for i in 0..dim {
                cov[(i, i)] += ridge;
            }
            let chol = cov.cholesky().ok_or(Error::SingularCovariance)?;
            let mut inv = chol.inverse();
            let inv_t = inv.transpose();
            inv += &inv_t;
            inv /= 2.0;
            (inv, ridge)
        }
        CovarianceEstimator::EigenvalueWhitening(eigenvalues) => {
            if eigenvalues.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "whitening eigenvalues".into(),
                    expected: dim,
                    found: eigenvalues.len(),
                });
            }
            if eigenvalues.iter().any(|&l| l <= 0.0) {
                return Err(Error::DegenerateData(
                    "whitening requires strictly positive eigenvalues".into(),
                ));
            }
            let inv = DMatrix::from_diagonal(&DVector::from_iterator(
                dim,
                eigenvalues.iter().map(|&l| 1.0 / l),
            ));
            (inv, 0.0)
        }
    };

    Ok(ClassifierModel {
        class_labels,
        class_means,
        pooled_cov_inv,
        regularization,
    })
}
