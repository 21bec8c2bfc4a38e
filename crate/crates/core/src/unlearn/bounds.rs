use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{LabeledDataset, TrueDistribution};
use crate::error::{Error, Result};
use crate::numkit::{kl_categorical, kl_to_log, ProbVec};
use crate::proxies::PosteriorPair;

use super::SignalTable;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prop1Terms {
    pub initial_divergence: f64,
    pub modeling_shift: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prop2Terms {
    pub kl_xy_r: f64,
    pub kl_xy_init: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    /// `h(η)`.
    pub delta_gamma_mean: f64,
    /// `E[KL(ref‖P_r)] − E[KL(ref‖P)]`; negative when the pair is
    /// admissible for the reference.
    pub admissible_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub eta: f64,
    pub kl_ref_to_unlearned: f64,
    pub kl_ref_to_initial: f64,
    pub prop1_rhs_terms: Prop1Terms,
    /// `(1 − η)·initial_divergence + η·modeling_shift`.
    pub prop1_rhs: f64,
    /// `kl_ref_to_unlearned − prop1_rhs`, the part not covered by computable terms.
    pub prop1_residual: f64,
    pub prop2_rhs_terms: Option<Prop2Terms>,
    pub decomposition: Decomposition,
}

impl BoundReport {
    /// `η·(kl_xy_r + kl_xy_init)` when the class-conditional terms are known.
    pub fn prop2_rhs(&self) -> Option<f64> {
        self.prop2_rhs_terms
            .map(|t| self.eta * (t.kl_xy_r + t.kl_xy_init))
    }

    /// Right-hand side of the exact decomposition; equals
    /// `kl_ref_to_unlearned` up to rounding.
    pub fn decomposition_total(&self) -> f64 {
        self.kl_ref_to_initial
            + self.decomposition.delta_gamma_mean
            + self.eta * self.decomposition.admissible_gap
    }
}

fn support_error(id: u64, what: &str, e: Error) -> Error {
    match e {
        Error::AbsoluteContinuity { index, .. } => Error::Admissibility {
            sample_id: id,
            reason: format!("{what} has no mass on class {index}"),
        },
        other => other,
    }
}

/// Every computable term around `E[KL(ref‖p̃_η)]` on `ds`.
///
/// `reference` holds the target posteriors per row (true retain posteriors
/// or a retrained model). `initial` stands in for the posteriors of the full
/// distribution and defaults to the base model's probits.
pub fn bound_report<P: PosteriorPair + ?Sized>(
    reference: &[ProbVec],
    initial: Option<&[ProbVec]>,
    table: &SignalTable,
    pair: &P,
    ds: &LabeledDataset,
    eta: f64,
) -> Result<BoundReport> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidArgument(format!(
            "eta = {eta} outside [0, 1]"
        )));
    }
    if !table.is_scaled() {
        return Err(Error::ProbitLevelOnly("empirical"));
    }
    for len in [
        Some(reference.len()),
        Some(table.len()),
        initial.map(<[_]>::len),
    ]
    .into_iter()
    .flatten()
    {
        if len != ds.len() {
            return Err(Error::DimensionMismatch {
                expected: ds.len(),
                got: len,
            });
        }
    }
    if ds.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    // Per row: KL(ref‖p̃), KL(ref‖p_θ), KL(ref‖ℙ), KL(ref‖P_r), KL(ℙ‖P), KL(ref‖P).
    let rows: Vec<[f64; 6]> = (0..ds.len())
        .into_par_iter()
        .map(|i| {
            let id = ds.id(i);
            let r = &reference[i];
            let base = table.base_probits(i)?;
            let unlearned = table.probits(i, eta)?;
            let init: &[f64] = initial.map_or(&base, |v| &v[i]);
            let (lp, lpr) = pair.log_posteriors(ds.row(i))?;
            Ok([
                kl_categorical(r, &unlearned)
                    .map_err(|e| support_error(id, "unlearned model", e))?,
                kl_categorical(r, &base).map_err(|e| support_error(id, "base model", e))?,
                kl_categorical(r, init).map_err(|e| support_error(id, "initial reference", e))?,
                kl_to_log(r, &lpr).map_err(|e| support_error(id, "retain proxy", e))?,
                kl_to_log(init, &lp).map_err(|e| support_error(id, "initial proxy", e))?,
                kl_to_log(r, &lp).map_err(|e| support_error(id, "initial proxy", e))?,
            ])
        })
        .collect::<Result<_>>()?;
    let n = rows.len() as f64;
    let mean = |k: usize| rows.iter().map(|r| r[k]).sum::<f64>() / n;
    let lhs = mean(0);
    let initial_divergence = mean(2);
    let modeling_shift = mean(3) - mean(4);
    let prop1_rhs = (1.0 - eta) * initial_divergence + eta * modeling_shift;
    Ok(BoundReport {
        eta,
        kl_ref_to_unlearned: lhs,
        kl_ref_to_initial: mean(1),
        prop1_rhs_terms: Prop1Terms {
            initial_divergence,
            modeling_shift,
        },
        prop1_rhs,
        prop1_residual: lhs - prop1_rhs,
        prop2_rhs_terms: None,
        decomposition: Decomposition {
            delta_gamma_mean: table.h(eta)?,
            admissible_gap: mean(3) - mean(5),
        },
    })
}

/// Monte-Carlo estimate of `E_Y KL(ℙ(X|Y)‖Q(X|Y))` with `Y` drawn from the
/// class priors of `truth` and `n_per_class` draws per class. `log_q(x)`
/// returns the proxy's log class-conditionals.
fn conditional_kl(
    truth: &TrueDistribution,
    n_per_class: usize,
    rng: &mut ChaCha8Rng,
    log_q: impl Fn(&[f64]) -> Result<Vec<f64>>,
) -> Result<f64> {
    let mut total = 0.0;
    for y in 0..truth.n_classes() {
        let prior = truth.class_prior(y);
        if prior == 0.0 {
            continue;
        }
        let xs = truth.sample_class(y, n_per_class, rng);
        let mut acc = 0.0;
        for x in &xs {
            let lq = log_q(x)?[y];
            if lq == f64::NEG_INFINITY {
                return Err(Error::AbsoluteContinuity { index: y, p: prior });
            }
            acc += truth.log_class_conditional(y, x) - lq;
        }
        total += prior * acc / n_per_class as f64;
    }
    Ok(total.max(0.0))
}

/// Class-conditional KL terms of the looser bound, from `n_per_class`
/// Monte-Carlo draws per class of the two true distributions.
pub fn prop2_terms<P: PosteriorPair + ?Sized>(
    full: &TrueDistribution,
    retain: &TrueDistribution,
    pair: &P,
    n_per_class: usize,
    seed: u64,
) -> Result<Prop2Terms> {
    if n_per_class == 0 {
        return Err(Error::InvalidArgument(
            "need at least one draw per class".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kl_xy_r = conditional_kl(retain, n_per_class, &mut rng, |x| {
        Ok(pair.log_class_conditionals(x)?.1)
    })?;
    let kl_xy_init = conditional_kl(full, n_per_class, &mut rng, |x| {
        Ok(pair.log_class_conditionals(x)?.0)
    })?;
    Ok(Prop2Terms {
        kl_xy_r,
        kl_xy_init,
    })
}
