use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::datagen::{ForgetSplit, LabeledDataset};
use crate::error::{Error, Result};
use crate::numkit::ProbVec;

/// Per-class sizes `|D(y)|`, `|D_r(y)|`, `|D_f(y)|` of one label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub full: usize,
    pub retain: usize,
    pub forget: usize,
}

impl ClassCounts {
    pub fn new(retain: usize, forget: usize) -> Self {
        Self {
            full: retain + forget,
            retain,
            forget,
        }
    }
}

/// Truncated probit: zero mass at `y`, the rest renormalized.
pub fn dirac_target(p_base: &ProbVec, y: usize) -> Result<ProbVec> {
    if y >= p_base.len() {
        return Err(Error::InvalidArgument(format!("label {y} out of range")));
    }
    if p_base[y] == 0.0 {
        return Ok(p_base.clone());
    }
    // The complement is summed rather than taken as 1 − p_y so that the
    // result matches a softmax with the y-th logit removed.
    let rest: f64 = p_base
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != y)
        .map(|(_, v)| v)
        .sum();
    if rest <= 0.0 {
        return Err(Error::UndefinedRenormalization { label: y });
    }
    let out = p_base
        .iter()
        .enumerate()
        .map(|(c, &v)| if c == y { 0.0 } else { v / rest })
        .collect();
    ProbVec::new(out)
}

/// `π_r(y)·p + π_f(y)·dirac_target(p, y)` with count-based weights.
pub fn dirac_target_2c(p_base: &ProbVec, y: usize, counts: ClassCounts) -> Result<ProbVec> {
    if counts.full == 0 || counts.retain + counts.forget != counts.full {
        return Err(Error::InvalidArgument(format!(
            "inconsistent class counts {counts:?}"
        )));
    }
    if counts.forget == 0 {
        return Ok(p_base.clone());
    }
    let truncated = dirac_target(p_base, y)?;
    if counts.retain == 0 {
        return Ok(truncated);
    }
    let pi_r = counts.retain as f64 / counts.full as f64;
    let pi_f = counts.forget as f64 / counts.full as f64;
    ProbVec::new(
        p_base
            .iter()
            .zip(truncated.iter())
            .map(|(a, b)| pi_r * a + pi_f * b)
            .collect(),
    )
}

/// Membership table of the empirical proxies, keyed by sample id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiracTable {
    pub labels: BTreeMap<u64, usize>,
    pub forget: BTreeSet<u64>,
    pub counts: Vec<ClassCounts>,
}

impl DiracTable {
    pub fn new(ds: &LabeledDataset, split: &ForgetSplit) -> Self {
        let labels = (0..ds.len()).map(|i| (ds.id(i), ds.label(i))).collect();
        let counts = split
            .retain_counts()
            .into_iter()
            .zip(&split.forget_counts)
            .map(|(r, &f)| ClassCounts::new(r, f))
            .collect();
        Self {
            labels,
            forget: split.forget_ids.clone(),
            counts,
        }
    }

    /// Label of a forget sample, `None` for retain samples and unknown ids.
    pub fn forget_label(&self, id: Option<u64>) -> Option<usize> {
        let id = id?;
        if self.forget.contains(&id) {
            self.labels.get(&id).copied()
        } else {
            None
        }
    }

    /// DIR shift: `-inf` at the true label of forget samples, zero elsewhere.
    pub fn delta_m(&self, n_classes: usize, id: Option<u64>) -> Vec<f64> {
        let mut out = vec![0.0; n_classes];
        if let Some(y) = self.forget_label(id) {
            out[y] = f64::NEG_INFINITY;
        }
        out
    }

    /// Logit shift whose softmax reproduces [`dirac_target_2c`] on top of
    /// `base`. Zero vector for samples outside the forget set.
    pub fn delta_m_2c(&self, base: &[f64], id: Option<u64>) -> Result<Vec<f64>> {
        let Some(y) = self.forget_label(id) else {
            return Ok(vec![0.0; base.len()]);
        };
        let counts = self.counts[y];
        let pi_r = counts.retain as f64 / counts.full as f64;
        let pi_f = counts.forget as f64 / counts.full as f64;
        // Probability of the other labels, computed stably from the logits.
        let rest: Vec<f64> = base
            .iter()
            .enumerate()
            .map(|(c, &v)| if c == y { f64::NEG_INFINITY } else { v })
            .collect();
        let log_rest = crate::numkit::lse(&rest)
            .map_err(|_| Error::UndefinedRenormalization { label: y })?
            - crate::numkit::lse(base)?;
        let other = (pi_r + pi_f * (-log_rest).exp()).ln();
        let at_y = if pi_r == 0.0 {
            f64::NEG_INFINITY
        } else {
            pi_r.ln()
        };
        Ok((0..base.len())
            .map(|c| if c == y { at_y } else { other })
            .collect())
    }
}
