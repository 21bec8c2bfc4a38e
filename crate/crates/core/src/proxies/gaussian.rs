use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{diag_with_ridge, square_from_rows, with_ridge, Mvn};
use crate::numkit::{log_softmax, ProbVec};

/// Retain or forget side of a doubled label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum State {
    Retain,
    Forget,
}

/// A class, or a `(class, state)` pair when labels are doubled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LabelKey {
    pub class: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<State>,
}

impl LabelKey {
    pub fn class(class: usize) -> Self {
        Self { class, state: None }
    }

    pub fn doubled(class: usize, state: State) -> Self {
        Self {
            class,
            state: Some(state),
        }
    }
}

/// Covariance payload. Per-label entries are `None` for absent labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Covariance {
    SharedFull(Vec<Vec<f64>>),
    SharedDiag(Vec<f64>),
    PerLabelFull(Vec<Option<Vec<Vec<f64>>>>),
    PerLabelDiag(Vec<Option<Vec<f64>>>),
}

/// Which covariance structure to estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovStructure {
    SharedFull,
    SharedDiag,
    PerLabelFull,
    PerLabelDiag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Repr {
    labels: Vec<LabelKey>,
    means: Vec<Option<Vec<f64>>>,
    covariance: Covariance,
    priors: Vec<f64>,
    ridge: f64,
}

/// Gaussian class-conditional model `X | label ~ N(μ_label, Σ_label)` with
/// label priors. Labels with no fitting sample carry prior 0 and no density.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "Repr", into = "Repr")]
pub struct GaussianClassConditional {
    repr: Repr,
    dim: usize,
    densities: Vec<Option<Mvn>>,
}

impl PartialEq for GaussianClassConditional {
    fn eq(&self, other: &Self) -> bool {
        self.repr == other.repr
    }
}

impl From<GaussianClassConditional> for Repr {
    fn from(g: GaussianClassConditional) -> Self {
        g.repr
    }
}

impl TryFrom<Repr> for GaussianClassConditional {
    type Error = Error;

    fn try_from(repr: Repr) -> Result<Self> {
        let n = repr.labels.len();
        if n == 0 || repr.means.len() != n || repr.priors.len() != n {
            return Err(Error::parse(
                "proxy",
                "label table, means and priors differ in length",
            ));
        }
        if !(repr.ridge >= 0.0) || !repr.ridge.is_finite() {
            return Err(Error::parse(
                "proxy",
                "ridge must be finite and non-negative",
            ));
        }
        if repr.priors.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::parse("proxy", "prior outside [0, 1]"));
        }
        let total: f64 = repr.priors.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::parse("proxy", format!("priors sum to {total}")));
        }
        let dim = repr
            .means
            .iter()
            .flatten()
            .map(Vec::len)
            .next()
            .ok_or(Error::Empty("proxy means"))?;
        for (i, mean) in repr.means.iter().enumerate() {
            match mean {
                Some(m) if m.len() != dim => {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: m.len(),
                    })
                }
                Some(m) if m.iter().any(|v| !v.is_finite()) => {
                    return Err(Error::NonFinite("proxy mean"))
                }
                None if repr.priors[i] > 0.0 => {
                    return Err(Error::parse(
                        "proxy",
                        "label with positive prior has no mean",
                    ))
                }
                _ => {}
            }
        }
        let densities = build_densities(&repr, dim)?;
        Ok(Self {
            repr,
            dim,
            densities,
        })
    }
}

fn build_densities(repr: &Repr, dim: usize) -> Result<Vec<Option<Mvn>>> {
    let shared_full = match &repr.covariance {
        Covariance::SharedFull(rows) => Some(with_ridge(&square_from_rows(rows, dim)?, repr.ridge)),
        _ => None,
    };
    let shared_diag = match &repr.covariance {
        Covariance::SharedDiag(var) => {
            check_len(var.len(), dim)?;
            Some(diag_with_ridge(var, repr.ridge))
        }
        _ => None,
    };
    let per_label_len = match &repr.covariance {
        Covariance::PerLabelFull(v) => Some(v.len()),
        Covariance::PerLabelDiag(v) => Some(v.len()),
        _ => None,
    };
    if let Some(len) = per_label_len {
        check_len(len, repr.labels.len())?;
    }
    let mut out = Vec::with_capacity(repr.labels.len());
    for (i, mean) in repr.means.iter().enumerate() {
        let Some(mean) = mean else {
            out.push(None);
            continue;
        };
        let what = format!("label {i}");
        let mvn = match &repr.covariance {
            Covariance::SharedFull(_) => Mvn::full(mean, shared_full.as_ref().unwrap(), &what)?,
            Covariance::SharedDiag(_) => Mvn::diag(mean, shared_diag.as_ref().unwrap(), &what)?,
            Covariance::PerLabelFull(covs) => {
                let rows = covs[i].as_ref().ok_or_else(|| {
                    Error::parse("proxy", format!("{what} has a mean but no covariance"))
                })?;
                Mvn::full(
                    mean,
                    &with_ridge(&square_from_rows(rows, dim)?, repr.ridge),
                    &what,
                )?
            }
            Covariance::PerLabelDiag(vars) => {
                let var = vars[i].as_ref().ok_or_else(|| {
                    Error::parse("proxy", format!("{what} has a mean but no covariance"))
                })?;
                check_len(var.len(), dim)?;
                Mvn::diag(mean, &diag_with_ridge(var, repr.ridge), &what)?
            }
        };
        out.push(Some(mvn));
    }
    Ok(out)
}

fn check_len(got: usize, expected: usize) -> Result<()> {
    if got == expected {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

/// Where the covariance comes from when fitting.
#[derive(Debug, Clone)]
pub enum CovSource {
    Estimate(CovStructure),
    /// Reuse a covariance fitted elsewhere (only means and priors are estimated).
    Given(Covariance),
}

impl GaussianClassConditional {
    /// Fits means, priors and covariance from `rows`, where `assign[i]` is the
    /// label index of row `i` (or `None` to skip it). A label with exactly one
    /// sample is an error; a label with none is absent.
    pub fn fit<'a>(
        labels: Vec<LabelKey>,
        dim: usize,
        rows: impl IntoIterator<Item = (&'a [f64], usize)>,
        cov: CovSource,
        ridge: f64,
    ) -> Result<Self> {
        if !(ridge > 0.0) {
            return Err(Error::InvalidArgument("ridge must be positive".into()));
        }
        let n_labels = labels.len();
        let mut groups: Vec<Vec<&[f64]>> = vec![Vec::new(); n_labels];
        for (x, label) in rows {
            if x.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: x.len(),
                });
            }
            groups[label].push(x);
        }
        let total: usize = groups.iter().map(Vec::len).sum();
        if total == 0 {
            return Err(Error::InsufficientData("no samples in fitting set".into()));
        }
        if let Some(i) = groups.iter().position(|g| g.len() == 1) {
            return Err(Error::InsufficientData(format!(
                "label {:?} has a single sample",
                labels[i]
            )));
        }
        let means: Vec<Option<Vec<f64>>> = groups
            .iter()
            .map(|g| (!g.is_empty()).then(|| column_mean(g, dim)))
            .collect();
        let priors = groups
            .iter()
            .map(|g| g.len() as f64 / total as f64)
            .collect();
        let covariance = match cov {
            CovSource::Given(c) => c,
            CovSource::Estimate(structure) => estimate_covariance(&groups, &means, dim, structure),
        };
        Self::try_from(Repr {
            labels,
            means,
            covariance,
            priors,
            ridge,
        })
    }

    pub fn labels(&self) -> &[LabelKey] {
        &self.repr.labels
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_labels(&self) -> usize {
        self.repr.labels.len()
    }

    pub fn means(&self) -> &[Option<Vec<f64>>] {
        &self.repr.means
    }

    pub fn covariance(&self) -> &Covariance {
        &self.repr.covariance
    }

    pub fn priors(&self) -> &[f64] {
        &self.repr.priors
    }

    pub fn ridge(&self) -> f64 {
        self.repr.ridge
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("query point"));
        }
        check_len(x.len(), self.dim)
    }

    /// `log P(x | label)`, `-inf` for absent labels.
    pub fn log_density(&self, label: usize, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.densities[label]
            .as_ref()
            .map_or(f64::NEG_INFINITY, |mvn| mvn.log_pdf(x)))
    }

    /// `log P(x | label) + log P(label)` for every label.
    pub fn log_joint(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self
            .densities
            .iter()
            .zip(&self.repr.priors)
            .map(|(mvn, &prior)| match mvn {
                Some(m) if prior > 0.0 => m.log_pdf(x) + prior.ln(),
                _ => f64::NEG_INFINITY,
            })
            .collect())
    }

    pub fn log_posterior(&self, x: &[f64]) -> Result<Vec<f64>> {
        log_softmax(&self.log_joint(x)?)
    }

    pub fn posterior(&self, x: &[f64]) -> Result<ProbVec> {
        crate::numkit::softmax(&self.log_joint(x)?)
    }

    /// Shared covariance as a dense matrix (diagonal structures expanded),
    /// without ridge. `None` for per-label structures.
    pub fn shared_covariance(&self) -> Option<Vec<Vec<f64>>> {
        match &self.repr.covariance {
            Covariance::SharedFull(rows) => Some(rows.clone()),
            Covariance::SharedDiag(var) => Some(diag_rows(var)),
            _ => None,
        }
    }

    /// Covariance of `label` as a dense matrix, without ridge.
    pub fn label_covariance(&self, label: usize) -> Option<Vec<Vec<f64>>> {
        match &self.repr.covariance {
            Covariance::PerLabelFull(c) => c[label].clone(),
            Covariance::PerLabelDiag(v) => v[label].as_deref().map(diag_rows),
            _ => self.shared_covariance(),
        }
    }
}

fn diag_rows(var: &[f64]) -> Vec<Vec<f64>> {
    (0..var.len())
        .map(|i| {
            (0..var.len())
                .map(|j| if i == j { var[i] } else { 0.0 })
                .collect()
        })
        .collect()
}

fn column_mean(rows: &[&[f64]], dim: usize) -> Vec<f64> {
    let mut mean = vec![0.0; dim];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(*r) {
            *m += v;
        }
    }
    let n = rows.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

/// Upper-triangular scatter `Σ (x−μ)(x−μ)ᵀ`, mirrored at the end.
fn scatter_into(acc: &mut [Vec<f64>], rows: &[&[f64]], mean: &[f64]) {
    let dim = mean.len();
    let mut centered = vec![0.0; dim];
    for r in rows {
        for k in 0..dim {
            centered[k] = r[k] - mean[k];
        }
        for i in 0..dim {
            for j in i..dim {
                acc[i][j] += centered[i] * centered[j];
            }
        }
    }
}

fn finish_scatter(mut acc: Vec<Vec<f64>>, divisor: f64) -> Vec<Vec<f64>> {
    let dim = acc.len();
    for i in 0..dim {
        for j in i..dim {
            acc[i][j] /= divisor;
            acc[j][i] = acc[i][j];
        }
    }
    acc
}

fn estimate_covariance(
    groups: &[Vec<&[f64]>],
    means: &[Option<Vec<f64>>],
    dim: usize,
    structure: CovStructure,
) -> Covariance {
    let diag = |m: Vec<Vec<f64>>| -> Vec<f64> { (0..dim).map(|i| m[i][i]).collect() };
    match structure {
        CovStructure::SharedFull | CovStructure::SharedDiag => {
            // Pooled within-label scatter over n − (number of present labels).
            let mut acc = vec![vec![0.0; dim]; dim];
            let mut n = 0;
            let mut present = 0;
            for (g, m) in groups.iter().zip(means) {
                if let Some(m) = m {
                    scatter_into(&mut acc, g, m);
                    n += g.len();
                    present += 1;
                }
            }
            let pooled = finish_scatter(acc, (n - present) as f64);
            if structure == CovStructure::SharedFull {
                Covariance::SharedFull(pooled)
            } else {
                Covariance::SharedDiag(diag(pooled))
            }
        }
        CovStructure::PerLabelFull | CovStructure::PerLabelDiag => {
            let per: Vec<Option<Vec<Vec<f64>>>> = groups
                .iter()
                .zip(means)
                .map(|(g, m)| {
                    m.as_ref().map(|m| {
                        let mut acc = vec![vec![0.0; dim]; dim];
                        scatter_into(&mut acc, g, m);
                        finish_scatter(acc, (g.len() - 1) as f64)
                    })
                })
                .collect();
            if structure == CovStructure::PerLabelFull {
                Covariance::PerLabelFull(per)
            } else {
                Covariance::PerLabelDiag(per.into_iter().map(|c| c.map(diag)).collect())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn class_labels(c: usize) -> Vec<LabelKey> {
        (0..c).map(LabelKey::class).collect()
    }

    fn manual(
        means: Vec<Vec<f64>>,
        covariance: Covariance,
        priors: Vec<f64>,
    ) -> GaussianClassConditional {
        GaussianClassConditional::try_from(Repr {
            labels: class_labels(means.len()),
            means: means.into_iter().map(Some).collect(),
            covariance,
            priors,
            ridge: 0.0,
        })
        .unwrap()
    }

    #[test]
    fn symmetric_lda_posterior() {
        let m = manual(
            vec![vec![-1.0], vec![1.0]],
            Covariance::SharedFull(vec![vec![1.0]]),
            vec![0.5, 0.5],
        );
        let p = m.posterior(&[0.0]).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn priors_dominate_at_midpoint() {
        let m = manual(
            vec![vec![-1.0], vec![1.0]],
            Covariance::SharedFull(vec![vec![1.0]]),
            vec![0.9, 0.1],
        );
        let p = m.posterior(&[0.0]).unwrap();
        assert!((p[0] - 0.9).abs() < 1e-14 && (p[1] - 0.1).abs() < 1e-14);
    }

    #[test]
    fn diagonal_qda_matches_explicit_pdf() {
        let m = manual(
            vec![vec![0.0, 1.0], vec![2.0, -1.0]],
            Covariance::PerLabelDiag(vec![Some(vec![0.5, 2.0]), Some(vec![1.5, 0.3])]),
            vec![0.3, 0.7],
        );
        let x = [0.7, 0.2];
        let pdf = |mu: [f64; 2], var: [f64; 2]| -> f64 {
            let mut v = 1.0;
            for k in 0..2 {
                v *= (-(x[k] - mu[k]).powi(2) / (2.0 * var[k])).exp()
                    / (2.0 * std::f64::consts::PI * var[k]).sqrt();
            }
            v
        };
        let a = 0.3 * pdf([0.0, 1.0], [0.5, 2.0]);
        let b = 0.7 * pdf([2.0, -1.0], [1.5, 0.3]);
        let p = m.posterior(&x).unwrap();
        assert!((p[0] - a / (a + b)).abs() < 1e-12);
        assert!((p[1] - b / (a + b)).abs() < 1e-12);
    }

    #[test]
    fn log_posterior_is_consistent() {
        let m = manual(
            vec![vec![0.0, 1.0], vec![2.0, -1.0], vec![1.0, 1.0]],
            Covariance::SharedFull(vec![vec![1.0, 0.2], vec![0.2, 0.8]]),
            vec![0.2, 0.5, 0.3],
        );
        for x in [[0.0, 0.0], [3.0, -2.0], [-10.0, 12.0]] {
            let lp = m.log_posterior(&x).unwrap();
            let lj = m.log_joint(&x).unwrap();
            let norm = crate::numkit::lse(&lj).unwrap();
            for k in 0..3 {
                assert!((lp[k] - (lj[k] - norm)).abs() < 1e-10);
            }
            let p = m.posterior(&x).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fit_estimates_moments() {
        let pts: Vec<Vec<f64>> = vec![vec![0.0], vec![2.0], vec![10.0], vec![14.0]];
        let rows = pts.iter().map(Vec::as_slice).zip([0, 0, 1, 1]);
        let m = GaussianClassConditional::fit(
            class_labels(2),
            1,
            rows,
            CovSource::Estimate(CovStructure::SharedFull),
            1e-6,
        )
        .unwrap();
        assert_eq!(m.means()[0], Some(vec![1.0]));
        assert_eq!(m.means()[1], Some(vec![12.0]));
        // scatter 2 + 8 over n − C = 2
        assert_eq!(m.shared_covariance().unwrap(), vec![vec![5.0]]);
        assert_eq!(m.priors(), &[0.5, 0.5]);
    }

    #[test]
    fn absent_and_single_labels() {
        let pts: Vec<Vec<f64>> = vec![vec![0.0], vec![2.0], vec![3.0]];
        let absent = GaussianClassConditional::fit(
            class_labels(2),
            1,
            pts[..2].iter().map(Vec::as_slice).zip([0, 0]),
            CovSource::Estimate(CovStructure::PerLabelDiag),
            1e-6,
        )
        .unwrap();
        assert_eq!(absent.priors(), &[1.0, 0.0]);
        assert_eq!(absent.log_posterior(&[1.0]).unwrap()[1], f64::NEG_INFINITY);
        let single = GaussianClassConditional::fit(
            class_labels(2),
            1,
            pts.iter().map(Vec::as_slice).zip([0, 0, 1]),
            CovSource::Estimate(CovStructure::SharedFull),
            1e-6,
        );
        assert!(matches!(single, Err(Error::InsufficientData(_))));
    }

    #[test]
    fn serde_round_trip_rebuilds_densities() {
        let m = manual(
            vec![vec![0.0, 1.0], vec![2.0, -1.0]],
            Covariance::PerLabelFull(vec![
                Some(vec![vec![1.0, 0.3], vec![0.3, 1.0]]),
                Some(vec![vec![2.0, 0.0], vec![0.0, 0.5]]),
            ]),
            vec![0.4, 0.6],
        );
        let text = serde_json::to_string(&m).unwrap();
        let back: GaussianClassConditional = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(
            back.log_joint(&[0.3, 0.3]).unwrap(),
            m.log_joint(&[0.3, 0.3]).unwrap()
        );
    }

    #[test]
    fn rejects_bad_payloads() {
        let bad_priors = r#"{"labels":[{"class":0}],"means":[[0.0]],
            "covariance":{"kind":"shared_full","value":[[1.0]]},"priors":[0.5],"ridge":0.0}"#;
        assert!(serde_json::from_str::<GaussianClassConditional>(bad_priors).is_err());
        let singular = r#"{"labels":[{"class":0}],"means":[[0.0,0.0]],
            "covariance":{"kind":"shared_full","value":[[1.0,1.0],[1.0,1.0]]},"priors":[1.0],"ridge":0.0}"#;
        assert!(serde_json::from_str::<GaussianClassConditional>(singular).is_err());
    }
}
