use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::datagen::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::LogitModel;
use crate::nets::Snapshot;
use crate::numkit::{kl_categorical, log_softmax, ProbVec};

/// Type-I error levels reported by default.
pub const DEFAULT_ALPHAS: [f64; 3] = [0.001, 0.01, 0.05];

/// Mean of `KL(reference(x)‖candidate(x))` over `ds`.
pub fn kl_to_reference(
    reference: &dyn LogitModel,
    candidate: &dyn LogitModel,
    ds: &LabeledDataset,
) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let mut acc = 0.0;
    for (i, x) in ds.rows().enumerate() {
        let lr = log_softmax(&reference.logits(x)?)?;
        let lq = log_softmax(&candidate.logits(x)?)?;
        acc += kl_log_log(&lr, &lq).map_err(|e| support_violation(ds.id(i), e))?;
    }
    Ok(acc / ds.len() as f64)
}

/// KL between two distributions given by log-probabilities; equal inputs
/// give exactly 0.
fn kl_log_log(lp: &[f64], lq: &[f64]) -> Result<f64> {
    let mut acc = 0.0;
    for (i, (&a, &b)) in lp.iter().zip(lq).enumerate() {
        if a == f64::NEG_INFINITY {
            continue;
        }
        if b == f64::NEG_INFINITY {
            return Err(Error::AbsoluteContinuity {
                index: i,
                p: a.exp(),
            });
        }
        acc += a.exp() * (a - b);
    }
    Ok(acc.max(0.0))
}

/// Mean of `KL(p_i‖q_i)` over paired probit rows.
pub fn mean_kl(p: &[ProbVec], q: &[ProbVec]) -> Result<f64> {
    if p.is_empty() {
        return Err(Error::Empty("probit rows"));
    }
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    let mut acc = 0.0;
    for (a, b) in p.iter().zip(q) {
        acc += kl_categorical(a, b)?;
    }
    Ok(acc / p.len() as f64)
}

pub(crate) fn support_violation(sample_id: u64, e: Error) -> Error {
    match e {
        Error::AbsoluteContinuity { index, .. } => Error::Admissibility {
            sample_id,
            reason: format!("candidate has no mass on class {index}"),
        },
        other => other,
    }
}

/// Number of queries an attacker needs to tell two distributions apart at
/// type-I and type-II error `α`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SteinQueries {
    Queries(u64),
    /// Zero divergence: the distributions are indistinguishable.
    Unbounded,
}

impl fmt::Display for SteinQueries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SteinQueries::Queries(n) => write!(f, "{n}"),
            SteinQueries::Unbounded => f.write_str("unbounded"),
        }
    }
}

impl Serialize for SteinQueries {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SteinQueries::Queries(n) => s.serialize_u64(*n),
            SteinQueries::Unbounded => s.serialize_str("unbounded"),
        }
    }
}

impl<'de> Deserialize<'de> for SteinQueries {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            N(u64),
            S(String),
        }
        match Repr::deserialize(d)? {
            Repr::N(n) => Ok(SteinQueries::Queries(n)),
            Repr::S(s) if s == "unbounded" => Ok(SteinQueries::Unbounded),
            Repr::S(s) => Err(serde::de::Error::custom(format!(
                "unexpected query count `{s}`"
            ))),
        }
    }
}

/// `⌈(1 − 2α)·ln((1 − α)/α) / kl⌉`, at least 1.
pub fn stein_queries(alpha: f64, kl: f64) -> Result<SteinQueries> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::InvalidArgument(format!(
            "alpha = {alpha} must be in (0, 0.5)"
        )));
    }
    if !(kl >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "kl = {kl} must be non-negative"
        )));
    }
    if kl == 0.0 {
        return Ok(SteinQueries::Unbounded);
    }
    let n = ((1.0 - 2.0 * alpha) * ((1.0 - alpha) / alpha).ln() / kl).ceil();
    Ok(SteinQueries::Queries((n as u64).max(1)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rte {
    pub seconds: f64,
    /// `seconds` over the same-seed retrain time.
    pub normalized: Option<f64>,
}

/// Query counts derived from `KL_t` and `KL_f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryCounts {
    pub t: SteinQueries,
    pub f: SteinQueries,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub kl_t: f64,
    pub kl_f: f64,
    pub kl_last: Option<f64>,
    pub acc_t: f64,
    pub acc_f: f64,
    pub rte: Option<Rte>,
    /// Keyed by `α` as written, e.g. `"0.001"`.
    pub n_alpha: BTreeMap<String, QueryCounts>,
}

impl MetricsReport {
    pub fn from_snapshot(s: &Snapshot, alphas: &[f64]) -> Result<Self> {
        let need = |v: Option<f64>| v.ok_or(Error::MissingReference);
        let kl_t = need(s.kl_t)?;
        let kl_f = need(s.kl_f)?;
        let mut n_alpha = BTreeMap::new();
        for &a in alphas {
            n_alpha.insert(
                format!("{a}"),
                QueryCounts {
                    t: stein_queries(a, kl_t)?,
                    f: stein_queries(a, kl_f)?,
                },
            );
        }
        Ok(Self {
            kl_t,
            kl_f,
            kl_last: None,
            acc_t: need(s.acc_t)?,
            acc_f: need(s.acc_f)?,
            rte: None,
            n_alpha,
        })
    }

    pub fn with_rte(mut self, seconds: f64, retrain_seconds: Option<f64>) -> Self {
        self.rte = Some(Rte {
            seconds,
            normalized: retrain_seconds.filter(|r| *r > 0.0).map(|r| seconds / r),
        });
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::Preset;
    use crate::numkit::LogitVec;
    use proptest::prelude::*;

    struct Const(Vec<f64>);

    impl LogitModel for Const {
        fn n_classes(&self) -> usize {
            self.0.len()
        }
        fn logits(&self, _: &[f64]) -> Result<LogitVec> {
            LogitVec::new(self.0.clone())
        }
    }

    #[test]
    fn stein_worked_values() {
        assert_eq!(
            stein_queries(0.001, 0.05).unwrap(),
            SteinQueries::Queries(138)
        );
        assert_eq!(
            stein_queries(0.001, 0.1).unwrap(),
            SteinQueries::Queries(69)
        );
        assert_eq!(stein_queries(0.001, 0.0).unwrap(), SteinQueries::Unbounded);
        assert_eq!(
            stein_queries(0.4999999, 10.0).unwrap(),
            SteinQueries::Queries(1)
        );
        assert!(stein_queries(0.5, 1.0).is_err());
    }

    #[test]
    fn stein_serde() {
        let v =
            serde_json::to_string(&[SteinQueries::Queries(3), SteinQueries::Unbounded]).unwrap();
        assert_eq!(v, r#"[3,"unbounded"]"#);
        let back: Vec<SteinQueries> = serde_json::from_str(&v).unwrap();
        assert_eq!(
            back,
            vec![SteinQueries::Queries(3), SteinQueries::Unbounded]
        );
    }

    #[test]
    fn kl_to_self_and_to_uniform() {
        let ds = Preset::Homoscedastic.spec(0).generate(5).unwrap();
        let truth = Preset::Homoscedastic.spec(0).truth().unwrap();
        assert_eq!(kl_to_reference(&truth, &truth, &ds).unwrap(), 0.0);
        let sharp = Const(vec![0.0, -1e4, -1e4]);
        let uniform = Const(vec![0.0; 3]);
        assert!((kl_to_reference(&sharp, &uniform, &ds).unwrap() - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn kl_is_order_independent() {
        let spec = Preset::Subclass.spec(2);
        let ds = spec.generate(50).unwrap();
        let truth = spec.truth().unwrap();
        let other = Const(vec![0.2, -0.3]);
        let forward = kl_to_reference(&truth, &other, &ds).unwrap();
        let mut acc = 0.0;
        for x in ds.rows().collect::<Vec<_>>().into_iter().rev() {
            acc += kl_categorical(&truth.probits(x).unwrap(), &other.probits(x).unwrap()).unwrap();
        }
        assert!((forward - acc / ds.len() as f64).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn stein_is_monotone(kl in 1e-3f64..5.0, bump in 1.0f64..3.0, alpha in 1e-4f64..0.2) {
            let n = |a, k| match stein_queries(a, k).unwrap() { SteinQueries::Queries(n) => n, _ => u64::MAX };
            prop_assert!(n(alpha, kl * bump) <= n(alpha, kl));
            prop_assert!(n(alpha / 2.0, kl) >= n(alpha, kl));
        }
    }
}
