use rayon::prelude::*;

use crate::datagen::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::LogitModel;
use crate::numkit::{lse, softmax, LogitVec, ProbVec};
use crate::proxies::{shifted_logits, PosteriorPair};

/// Base logits and the logit shift of every row of a dataset, evaluated once
/// so that `h(η)` and the unlearned probits are cheap for any η.
#[derive(Debug, Clone)]
pub struct SignalTable {
    ids: Vec<u64>,
    base: Vec<Vec<f64>>,
    base_lse: Vec<f64>,
    shift: Vec<Vec<f64>>,
    scaled: bool,
}

impl SignalTable {
    pub fn new<P: PosteriorPair + ?Sized>(
        pair: &P,
        ds: &LabeledDataset,
        base: Vec<LogitVec>,
    ) -> Result<Self> {
        if ds.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        if base.len() != ds.len() {
            return Err(Error::DimensionMismatch {
                expected: ds.len(),
                got: base.len(),
            });
        }
        let rows: Vec<(Vec<f64>, bool)> = (0..ds.len())
            .into_par_iter()
            .map(|i| pair.shift(&base[i], ds.row(i), Some(ds.id(i))))
            .collect::<Result<_>>()?;
        let scaled = rows.first().map_or(true, |r| r.1);
        let base: Vec<Vec<f64>> = base.into_iter().map(LogitVec::into_inner).collect();
        let base_lse = base.iter().map(|b| lse(b)).collect::<Result<_>>()?;
        Ok(Self {
            ids: ds.ids().to_vec(),
            base,
            base_lse,
            shift: rows.into_iter().map(|r| r.0).collect(),
            scaled,
        })
    }

    pub fn from_model<P: PosteriorPair + ?Sized>(
        pair: &P,
        ds: &LabeledDataset,
        model: &dyn LogitModel,
    ) -> Result<Self> {
        Self::new(pair, ds, model.logits_on(ds)?)
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }

    pub fn id(&self, i: usize) -> u64 {
        self.ids[i]
    }

    /// Whether the shift scales with η (false for the empirical proxies).
    pub fn is_scaled(&self) -> bool {
        self.scaled
    }

    pub fn base_logits(&self, i: usize) -> &[f64] {
        &self.base[i]
    }

    pub fn shift(&self, i: usize) -> &[f64] {
        &self.shift[i]
    }

    pub fn base_probits(&self, i: usize) -> Result<ProbVec> {
        softmax(&self.base[i])
    }

    fn factor(&self, eta: f64) -> f64 {
        if self.scaled {
            eta
        } else {
            1.0
        }
    }

    /// `f + η·ΔM` for row `i`; exactly `f` at `η = 0`.
    pub fn shifted(&self, i: usize, eta: f64) -> Result<Vec<f64>> {
        check_eta(eta)?;
        if eta == 0.0 {
            return Ok(self.base[i].clone());
        }
        let s = self.factor(eta);
        Ok(self.base[i]
            .iter()
            .zip(&self.shift[i])
            .map(|(b, d)| b + s * d)
            .collect())
    }

    pub fn probits(&self, i: usize, eta: f64) -> Result<ProbVec> {
        softmax(&self.shifted(i, eta)?)
    }

    /// `LSE(f + η·ΔM) − LSE(f)` for row `i`.
    pub fn delta_gamma(&self, i: usize, eta: f64) -> Result<f64> {
        if eta == 0.0 {
            return Ok(0.0);
        }
        Ok(lse(&self.shifted(i, eta)?)? - self.base_lse[i])
    }

    /// `h(η)`: mean of the per-row normalization shift. Rows are evaluated in
    /// parallel and summed in row order, so the value is bit-stable.
    pub fn h(&self, eta: f64) -> Result<f64> {
        check_eta(eta)?;
        if eta == 0.0 {
            return Ok(0.0);
        }
        let terms: Vec<f64> = (0..self.len())
            .into_par_iter()
            .map(|i| self.delta_gamma(i, eta))
            .collect::<Result<_>>()?;
        Ok(terms.iter().sum::<f64>() / self.len() as f64)
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta >= 0.0) || !eta.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "eta = {eta} must be finite and non-negative"
        )));
    }
    Ok(())
}

/// `h(η)` straight from base logits.
pub fn h_empirical<P: PosteriorPair + ?Sized>(
    base_logits: Vec<LogitVec>,
    pair: &P,
    ds: &LabeledDataset,
    eta: f64,
) -> Result<f64> {
    SignalTable::new(pair, ds, base_logits)?.h(eta)
}

/// The unlearned classifier `softmax(f_θ(x) + η·ΔM(x))`.
pub struct UnlearnedModel<'a, P: PosteriorPair + ?Sized> {
    base: &'a dyn LogitModel,
    pair: &'a P,
    eta: f64,
}

impl<'a, P: PosteriorPair + ?Sized> UnlearnedModel<'a, P> {
    pub fn new(base: &'a dyn LogitModel, pair: &'a P, eta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::InvalidArgument(format!(
                "eta = {eta} outside [0, 1]"
            )));
        }
        if base.n_classes() != pair.n_classes() {
            return Err(Error::DimensionMismatch {
                expected: pair.n_classes(),
                got: base.n_classes(),
            });
        }
        Ok(Self { base, pair, eta })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn logits(&self, x: &[f64], sample_id: Option<u64>) -> Result<LogitVec> {
        let base = self.base.logits(x)?;
        shifted_logits(self.pair, &base, x, sample_id, self.eta)
    }
}

pub fn unlearned_probits<P: PosteriorPair + ?Sized>(
    model: &UnlearnedModel<'_, P>,
    x: &[f64],
    sample_id: Option<u64>,
) -> Result<ProbVec> {
    softmax(&model.logits(x, sample_id)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{build_scenario, ForgetSplit, Preset, Scenario};
    use crate::proxies::{dirac_target, fit, FitOptions, ProxyKind};

    struct Fixed(Vec<f64>);

    impl LogitModel for Fixed {
        fn n_classes(&self) -> usize {
            self.0.len()
        }
        fn logits(&self, _: &[f64]) -> Result<LogitVec> {
            LogitVec::new(self.0.clone())
        }
    }

    #[test]
    fn h_vanishes_at_zero_and_without_forgetting() {
        let ds = Preset::Subclass.spec(0).generate(50).unwrap();
        let split = ForgetSplit::from_forget_ids(&ds, []).unwrap();
        let pair = fit(ProxyKind::Lda, &ds, &split, &FitOptions::default()).unwrap();
        let table = SignalTable::from_model(&pair, &ds, &Fixed(vec![0.3, -0.1])).unwrap();
        assert_eq!(table.h(0.0).unwrap(), 0.0);
        for eta in [0.1, 0.5, 1.0] {
            assert!(table.h(eta).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn dir_probits_are_eta_independent() {
        let ds = Preset::Homoscedastic.spec(0).generate(20).unwrap();
        let split = build_scenario(
            &ds,
            Scenario::Random {
                n_forget: 5,
                seed: 2,
            },
        )
        .unwrap();
        let pair = fit(ProxyKind::Dir, &ds, &split, &FitOptions::default()).unwrap();
        let logits = vec![0.5f64.ln(), 0.3f64.ln(), 0.2f64.ln()];
        let base = Fixed(logits);
        let id = *split.forget_ids.iter().next().unwrap();
        let idx = ds.index_by_id()[&id];
        let y = ds.label(idx);
        let expected = dirac_target(&base.probits(&[]).unwrap(), y).unwrap();
        for eta in [0.1, 0.5, 1.0] {
            let model = UnlearnedModel::new(&base, &pair, eta).unwrap();
            let p = unlearned_probits(&model, ds.row(idx), Some(id)).unwrap();
            assert!(p
                .iter()
                .zip(expected.iter())
                .all(|(a, b)| (a - b).abs() < 1e-12));
        }
        let model = UnlearnedModel::new(&base, &pair, 0.0).unwrap();
        assert_eq!(
            unlearned_probits(&model, ds.row(idx), Some(id)).unwrap(),
            base.probits(&[]).unwrap()
        );
    }
}
