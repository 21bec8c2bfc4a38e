use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::square_from_rows;

use super::GaussianClassConditional;

/// `KL(N(μ, Σ_k) ‖ N(μ, Σ))` for two covariances sharing a mean:
/// `½ (log|Σ|/|Σ_k| + tr(Σ⁻¹Σ_k) − d)`.
pub fn gaussian_kl_same_mean(sigma_k: &[Vec<f64>], sigma: &[Vec<f64>]) -> Result<f64> {
    let d = sigma.len();
    if sigma_k.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: sigma_k.len(),
        });
    }
    let s = square_from_rows(sigma, d)?;
    let sk = square_from_rows(sigma_k, d)?;
    let chol = s
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularCovariance("reference covariance".into()))?;
    let chol_k = sk
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularCovariance("class covariance".into()))?;
    let log_det = |l: &DMatrix<f64>| 2.0 * (0..d).map(|i| l[(i, i)].ln()).sum::<f64>();
    let trace = chol.solve(&sk).trace();
    Ok(0.5 * (log_det(chol.l_dirty()) - log_det(chol_k.l_dirty()) + trace - d as f64))
}

/// Cost of the homoscedastic assumption:
/// `Σ_k π(k) KL(N(μ_k, Σ_k) ‖ N(μ_k, Σ))`, where `Σ_k` are the per-class
/// covariances of `qda` and `Σ` the shared covariance of `lda`.
pub fn homoscedastic_cost(
    qda: &GaussianClassConditional,
    lda: &GaussianClassConditional,
    class_priors: &[f64],
) -> Result<f64> {
    if qda.dim() != lda.dim() {
        return Err(Error::DimensionMismatch {
            expected: lda.dim(),
            got: qda.dim(),
        });
    }
    if class_priors.len() != qda.n_labels() {
        return Err(Error::DimensionMismatch {
            expected: qda.n_labels(),
            got: class_priors.len(),
        });
    }
    let shared = lda
        .shared_covariance()
        .ok_or_else(|| Error::InvalidArgument("LDA model has no shared covariance".into()))?;
    let mut cost = 0.0;
    for (k, &prior) in class_priors.iter().enumerate() {
        if prior == 0.0 {
            continue;
        }
        let sigma_k = qda
            .label_covariance(k)
            .ok_or_else(|| Error::InvalidArgument(format!("class {k} has no covariance")))?;
        cost += prior * gaussian_kl_same_mean(&sigma_k, &shared)?;
    }
    Ok(cost)
}
