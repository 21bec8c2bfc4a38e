//! Dense Gaussian helpers. Full covariances are only ever used through their
//! Cholesky factor; no explicit inverse is formed.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Row-major `d × d` matrix to nalgebra.
pub(crate) fn square_from_rows(rows: &[Vec<f64>], d: usize) -> Result<DMatrix<f64>> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: rows.len(),
        });
    }
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

/// `Σ + λ·tr(Σ)/d·I`.
pub(crate) fn with_ridge(sigma: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let d = sigma.nrows();
    let shift = lambda * sigma.trace() / d as f64;
    let mut out = sigma.clone();
    for i in 0..d {
        out[(i, i)] += shift;
    }
    out
}

pub(crate) fn diag_with_ridge(var: &[f64], lambda: f64) -> Vec<f64> {
    let shift = lambda * var.iter().sum::<f64>() / var.len() as f64;
    var.iter().map(|v| v + shift).collect()
}

/// Multivariate normal with a precomputed factorization.
#[derive(Debug, Clone)]
pub(crate) enum Mvn {
    Full {
        mean: DVector<f64>,
        chol_l: DMatrix<f64>,
        log_det: f64,
    },
    Diag {
        mean: Vec<f64>,
        var: Vec<f64>,
        log_det: f64,
    },
}

impl Mvn {
    pub fn full(mean: &[f64], cov: &DMatrix<f64>, what: &str) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: cov.nrows(),
            });
        }
        if cov.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularCovariance(what.to_string()));
        }
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::SingularCovariance(what.to_string()))?;
        let chol_l = chol.l();
        let log_det = 2.0 * chol_l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(Error::SingularCovariance(what.to_string()));
        }
        Ok(Mvn::Full {
            mean: DVector::from_column_slice(mean),
            chol_l,
            log_det,
        })
    }

    pub fn diag(mean: &[f64], var: &[f64], what: &str) -> Result<Self> {
        if var.len() != mean.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                got: var.len(),
            });
        }
        if var.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::SingularCovariance(what.to_string()));
        }
        let log_det = var.iter().map(|v| v.ln()).sum();
        Ok(Mvn::Diag {
            mean: mean.to_vec(),
            var: var.to_vec(),
            log_det,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Mvn::Full { mean, .. } => mean.len(),
            Mvn::Diag { mean, .. } => mean.len(),
        }
    }

    /// Squared Mahalanobis distance of `x` from the mean.
    pub fn mahalanobis_sq(&self, x: &[f64]) -> f64 {
        match self {
            Mvn::Full { mean, chol_l, .. } => {
                let diff =
                    DVector::from_iterator(x.len(), x.iter().zip(mean.iter()).map(|(a, b)| a - b));
                let y = chol_l
                    .solve_lower_triangular(&diff)
                    .expect("cholesky factor has a positive diagonal");
                y.norm_squared()
            }
            Mvn::Diag { mean, var, .. } => x
                .iter()
                .zip(mean)
                .zip(var)
                .map(|((xi, mi), vi)| (xi - mi) * (xi - mi) / vi)
                .sum(),
        }
    }

    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        let log_det = match self {
            Mvn::Full { log_det, .. } | Mvn::Diag { log_det, .. } => *log_det,
        };
        -0.5 * (self.dim() as f64 * LN_2PI + log_det + self.mahalanobis_sq(x))
    }

    /// Draw `x = μ + L z` from a vector of standard normals.
    pub fn transform_standard(&self, z: &[f64]) -> Vec<f64> {
        match self {
            Mvn::Full { mean, chol_l, .. } => {
                let z = DVector::from_column_slice(z);
                (mean + chol_l * z).iter().copied().collect()
            }
            Mvn::Diag { mean, var, .. } => mean
                .iter()
                .zip(var)
                .zip(z)
                .map(|((m, v), zi)| m + v.sqrt() * zi)
                .collect(),
        }
    }
}
