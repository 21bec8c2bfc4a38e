//! Stable simplex arithmetic: log-sum-exp, softmax, categorical KL.
//!
//! `-inf` is a legal logit (empirical proxies produce it) and maps to an
//! exact zero probability. NaN and `+inf` are rejected.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total mass of a [`ProbVec`].
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Unnormalized log-scores over `C` classes, in nats.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVec(Vec<f64>);

impl LogitVec {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("logit vector"));
        }
        if values.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::NonFinite("logit vector"));
        }
        Ok(Self(values))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for LogitVec {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// A point of the probability simplex. Zeros are allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbVec(Vec<f64>);

impl ProbVec {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("probability vector"));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidProbVec(format!("entry {v} outside [0, 1]")));
        }
        let total: f64 = values.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidProbVec(format!("sums to {total}")));
        }
        Ok(Self(values))
    }

    pub fn uniform(len: usize) -> Self {
        Self(vec![1.0 / len as f64; len])
    }

    pub fn one_hot(len: usize, label: usize) -> Self {
        let mut v = vec![0.0; len];
        v[label] = 1.0;
        Self(v)
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ProbVec {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for ProbVec {
    type Error = Error;
    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<ProbVec> for Vec<f64> {
    fn from(p: ProbVec) -> Self {
        p.0
    }
}

fn check_logits(z: &[f64]) -> Result<f64> {
    if z.is_empty() {
        return Err(Error::Empty("logit vector"));
    }
    let mut max = f64::NEG_INFINITY;
    for &v in z {
        if v.is_nan() || v == f64::INFINITY {
            return Err(Error::NonFinite("logit vector"));
        }
        if v > max {
            max = v;
        }
    }
    if max == f64::NEG_INFINITY {
        return Err(Error::DegenerateLogits);
    }
    Ok(max)
}

/// `log Σ exp(z_i)` with max-subtraction.
pub fn lse(z: &[f64]) -> Result<f64> {
    let max = check_logits(z)?;
    let sum: f64 = z.iter().map(|&v| (v - max).exp()).sum();
    Ok(max + sum.ln())
}

pub fn log_softmax(z: &[f64]) -> Result<Vec<f64>> {
    let norm = lse(z)?;
    Ok(z.iter().map(|&v| v - norm).collect())
}

pub fn softmax(z: &[f64]) -> Result<ProbVec> {
    let max = check_logits(z)?;
    let mut out: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    Ok(ProbVec(out))
}

/// `Σ p_i log(p_i / q_i)` in nats, with `0 log 0 = 0`.
pub fn kl_categorical(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    let mut acc = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Err(Error::AbsoluteContinuity { index: i, p: pi });
            }
            acc += pi * (pi.ln() - qi.ln());
        }
    }
    Ok(acc.max(0.0))
}

/// KL from `p` to the distribution whose log-probabilities are `log_q`.
///
/// Same as [`kl_categorical`] but avoids the round trip through `exp` when the
/// right-hand side is only known in log space.
pub fn kl_to_log(p: &[f64], log_q: &[f64]) -> Result<f64> {
    if p.len() != log_q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            got: log_q.len(),
        });
    }
    let mut acc = 0.0;
    for (i, (&pi, &lq)) in p.iter().zip(log_q).enumerate() {
        if pi > 0.0 {
            if lq == f64::NEG_INFINITY {
                return Err(Error::AbsoluteContinuity { index: i, p: pi });
            }
            acc += pi * (pi.ln() - lq);
        }
    }
    Ok(acc.max(0.0))
}

pub fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.ln())
        .sum::<f64>()
}

/// Mean of `f` over `items`, summed in iteration order.
pub fn mean_over<T, F>(items: &[T], mut f: F) -> Result<f64>
where
    F: FnMut(&T) -> Result<f64>,
{
    if items.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let mut acc = 0.0;
    for item in items {
        acc += f(item)?;
    }
    Ok(acc / items.len() as f64)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn lse_examples() {
        assert!((lse(&[0.0, 0.0]).unwrap() - LN2).abs() < 1e-15);
        assert!((lse(&[1000.0, 1000.0]).unwrap() - (1000.0 + LN2)).abs() < 1e-12);
        assert_eq!(lse(&[0.0, f64::NEG_INFINITY]).unwrap(), 0.0);
    }

    #[test]
    fn lse_rejects_degenerate_and_nan() {
        let ninf = f64::NEG_INFINITY;
        assert!(matches!(lse(&[ninf, ninf]), Err(Error::DegenerateLogits)));
        assert!(matches!(lse(&[0.0, f64::NAN]), Err(Error::NonFinite(_))));
        assert!(lse(&[]).is_err());
    }

    #[test]
    fn lse_large_magnitudes() {
        let v = lse(&[1e6, -1e6, 1e6 - 1.0]).unwrap();
        assert!((v - (1e6 + (1.0 + (-1.0f64).exp()).ln())).abs() < 1e-9);
    }

    #[test]
    fn softmax_examples() {
        for c in [-700.0, 0.0, 3.5, 900.0] {
            let p = softmax(&[c, c, c]).unwrap();
            for v in p.iter() {
                assert!((v - 1.0 / 3.0).abs() < 1e-15);
            }
        }
        let p = softmax(&[0.5f64.ln(), 0.3f64.ln(), 0.2f64.ln()]).unwrap();
        for (a, b) in p.iter().zip([0.5, 0.3, 0.2]) {
            assert!((a - b).abs() < 1e-15);
        }
        let p = softmax(&[0.0, f64::NEG_INFINITY]).unwrap();
        assert_eq!(&*p, &[1.0, 0.0]);
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_categorical(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
        assert!((kl_categorical(&[1.0, 0.0], &[0.5, 0.5]).unwrap() - LN2).abs() < 1e-15);

        let p = [0.5, 0.3, 0.2];
        let q = [1.0 / 3.0; 3];
        let oracle = 0.5 * (0.5f64 / (1.0 / 3.0)).ln()
            + 0.3 * (0.3f64 / (1.0 / 3.0)).ln()
            + 0.2 * (0.2f64 / (1.0 / 3.0)).ln();
        assert!((kl_categorical(&p, &q).unwrap() - oracle).abs() < 1e-14);
    }

    #[test]
    fn kl_support_violation() {
        let err = kl_categorical(&[0.5, 0.5], &[1.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::AbsoluteContinuity { index: 1, .. }));
        // zero mass on the left side is fine
        assert!(kl_categorical(&[1.0, 0.0], &[1.0, 0.0]).is_ok());
    }

    #[test]
    fn entropy_and_mean() {
        assert!((entropy(&[0.25; 4]) - 4f64.ln()).abs() < 1e-15);
        assert_eq!(mean_over(&[1, 2, 3], |_| Ok(1.0)).unwrap(), 1.0);
        let empty: [u8; 0] = [];
        assert!(matches!(
            mean_over(&empty, |_| Ok(1.0)),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn mean_of_kl_hand_summed() {
        let reference = [0.2, 0.3, 0.5];
        let samples = [[0.2, 0.3, 0.5], [0.6, 0.2, 0.2], [0.1, 0.1, 0.8]];
        let got = mean_over(&samples, |p| kl_categorical(p, &reference)).unwrap();
        let t0 = 0.0;
        let t1 = 0.6 * (0.6f64 / 0.2).ln() + 0.2 * (0.2f64 / 0.3).ln() + 0.2 * (0.2f64 / 0.5).ln();
        let t2 = 0.1 * (0.1f64 / 0.2).ln() + 0.1 * (0.1f64 / 0.3).ln() + 0.8 * (0.8f64 / 0.5).ln();
        assert!((got - (t0 + t1 + t2) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn prob_vec_validation() {
        assert!(ProbVec::new(vec![0.5, 0.5]).is_ok());
        assert!(ProbVec::new(vec![0.5, 0.6]).is_err());
        assert!(ProbVec::new(vec![-0.1, 1.1]).is_err());
        assert!(ProbVec::new(vec![]).is_err());
    }

    fn logits(len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-50.0..50.0f64, len)
    }

    fn simplex(len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01..1.0f64, len).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn lse_shift_identity(z in logits(5), kappa in -100.0..100.0f64) {
            let shifted: Vec<f64> = z.iter().map(|v| v + kappa).collect();
            let d = lse(&shifted).unwrap() - lse(&z).unwrap() - kappa;
            prop_assert!(d.abs() < 1e-12);
        }

        #[test]
        fn softmax_normalized_and_shift_invariant(z in logits(6), kappa in -100.0..100.0f64) {
            let p = softmax(&z).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let shifted: Vec<f64> = z.iter().map(|v| v + kappa).collect();
            let q = softmax(&shifted).unwrap();
            for (a, b) in p.iter().zip(q.iter()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn log_softmax_identity(z in logits(4)) {
            let p = softmax(&z).unwrap();
            let norm = lse(&z).unwrap();
            for (pi, zi) in p.iter().zip(&z) {
                prop_assert!((pi.ln() - (zi - norm)).abs() < 1e-12);
            }
        }

        #[test]
        fn kl_nonnegative(p in simplex(4), q in simplex(4)) {
            let d = kl_categorical(&p, &q).unwrap();
            prop_assert!(d >= 0.0);
            prop_assert_eq!(kl_categorical(&p, &p).unwrap(), 0.0);
            if p.iter().zip(&q).any(|(a, b)| (a - b).abs() > 1e-3) {
                prop_assert!(d > 0.0);
            }
        }
    }
}
