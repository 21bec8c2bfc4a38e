//! A classifier seen through its logits.

use crate::datagen::{LabeledDataset, TrueDistribution};
use crate::error::Result;
use crate::numkit::{softmax, LogitVec, ProbVec};
use crate::proxies::GaussianClassConditional;

pub trait LogitModel: Sync {
    fn n_classes(&self) -> usize;

    fn logits(&self, x: &[f64]) -> Result<LogitVec>;

    fn probits(&self, x: &[f64]) -> Result<ProbVec> {
        softmax(&self.logits(x)?)
    }

    /// Logits of every row of `ds`, in order.
    fn logits_on(&self, ds: &LabeledDataset) -> Result<Vec<LogitVec>> {
        ds.rows().map(|x| self.logits(x)).collect()
    }

    fn probits_on(&self, ds: &LabeledDataset) -> Result<Vec<ProbVec>> {
        ds.rows().map(|x| self.probits(x)).collect()
    }
}

/// Logits are the log posterior, so classes without support get `-inf`.
impl LogitModel for TrueDistribution {
    fn n_classes(&self) -> usize {
        TrueDistribution::n_classes(self)
    }

    fn logits(&self, x: &[f64]) -> Result<LogitVec> {
        LogitVec::new(self.log_posterior(x)?)
    }
}

impl LogitModel for GaussianClassConditional {
    fn n_classes(&self) -> usize {
        self.n_labels()
    }

    fn logits(&self, x: &[f64]) -> Result<LogitVec> {
        LogitVec::new(self.log_posterior(x)?)
    }
}
