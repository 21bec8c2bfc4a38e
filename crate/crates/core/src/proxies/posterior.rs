use crate::datagen::TrueDistribution;
use crate::error::{Error, Result};
use crate::numkit::LogitVec;

/// Anything that yields the two posteriors `P(·|x)` and `P_r(·|x)` and the
/// logit shift between them.
pub trait PosteriorPair: Sync {
    fn n_classes(&self) -> usize;

    /// `(log P(·|x), log P_r(·|x))`.
    fn log_posteriors(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)>;

    /// `(log P(x|·), log P_r(x|·))`.
    fn log_class_conditionals(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)>;

    /// Shift to add to `base`, and whether it scales with η. Unscaled shifts
    /// (empirical proxies) are applied as-is for every η > 0.
    fn shift(&self, _base: &[f64], x: &[f64], _sample_id: Option<u64>) -> Result<(Vec<f64>, bool)> {
        let (lp, lpr) = self.log_posteriors(x)?;
        Ok((log_ratio(&lp, &lpr)?, true))
    }
}

pub(crate) fn log_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        m
    } else {
        m + ((a - m).exp() + (b - m).exp()).ln()
    }
}

/// `log P_r − log P` with `−∞ − (−∞) = 0`; mass under P_r where P has none
/// is an error.
pub(crate) fn log_ratio(lp: &[f64], lpr: &[f64]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(lp.len());
    for (i, (a, b)) in lpr.iter().zip(lp).enumerate() {
        out.push(match (*a == f64::NEG_INFINITY, *b == f64::NEG_INFINITY) {
            (true, true) => 0.0,
            (false, true) => {
                return Err(Error::AbsoluteContinuity {
                    index: i,
                    p: a.exp(),
                })
            }
            _ => a - b,
        });
    }
    Ok(out)
}

/// `base + η·ΔM(x)` for any pair; exactly `base` when `η = 0`.
pub fn shifted_logits<P: PosteriorPair + ?Sized>(
    pair: &P,
    base: &[f64],
    x: &[f64],
    sample_id: Option<u64>,
    eta: f64,
) -> Result<LogitVec> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidArgument(format!(
            "eta = {eta} outside [0, 1]"
        )));
    }
    if base.len() != pair.n_classes() {
        return Err(Error::DimensionMismatch {
            expected: pair.n_classes(),
            got: base.len(),
        });
    }
    if eta == 0.0 {
        return LogitVec::new(base.to_vec());
    }
    let (shift, scaled) = pair.shift(base, x, sample_id)?;
    let scale = if scaled { eta } else { 1.0 };
    LogitVec::new(base.iter().zip(shift).map(|(b, d)| b + scale * d).collect())
}

/// The exact distributions `ℙ` and `ℙ_r` used in place of fitted proxies.
#[derive(Debug, Clone)]
pub struct OraclePair {
    pub full: TrueDistribution,
    pub retain: TrueDistribution,
}

impl PosteriorPair for OraclePair {
    fn n_classes(&self) -> usize {
        self.full.n_classes()
    }

    fn log_posteriors(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok((self.full.log_posterior(x)?, self.retain.log_posterior(x)?))
    }

    fn log_class_conditionals(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let c = self.n_classes();
        Ok((
            (0..c)
                .map(|y| self.full.log_class_conditional(y, x))
                .collect(),
            (0..c)
                .map(|y| self.retain.log_class_conditional(y, x))
                .collect(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{Preset, Scenario};

    #[test]
    fn log_ratio_conventions() {
        let ninf = f64::NEG_INFINITY;
        assert_eq!(
            log_ratio(&[ninf, -1.0], &[ninf, -2.0]).unwrap(),
            vec![0.0, -1.0]
        );
        assert_eq!(log_ratio(&[-1.0], &[ninf]).unwrap(), vec![ninf]);
        assert!(log_ratio(&[ninf], &[-1.0]).is_err());
    }

    #[test]
    fn oracle_shift_at_eta_one_recovers_retain_posterior() {
        let truth = Preset::Subclass.spec(0).truth().unwrap();
        let retain = Scenario::Subclass {
            class: 0,
            subclass: 1,
        }
        .retain_truth(&truth)
        .unwrap();
        let pair = OraclePair {
            full: truth.clone(),
            retain: retain.clone(),
        };
        let x = [-1.0, -1.0];
        let base = truth.log_posterior(&x).unwrap();
        let out = shifted_logits(&pair, &base, &x, None, 1.0).unwrap();
        let p = crate::numkit::softmax(&out).unwrap();
        let q = retain.posterior(&x).unwrap();
        assert!((p[0] - q[0]).abs() < 1e-12);
    }
}
