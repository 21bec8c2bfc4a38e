use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::LabeledDataset;
use crate::error::{Error, Result};
use crate::numkit::{kl_to_log, ProbVec};
use crate::proxies::PosteriorPair;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Admissibility {
    /// `E[KL(q‖P_r)] − E[KL(q‖P)]`.
    pub gap: f64,
    pub holds: bool,
    pub kl_to_full: f64,
    pub kl_to_retain: f64,
    /// Rows where `q` puts mass on a class `P_r` rules out.
    pub retain_support_violations: usize,
}

/// Whether `P` models the distribution behind `probits` at least as well as
/// `P_r` does, in expected KL over `ds`.
///
/// A row where `P` has no mass under `q` aborts the check. A row where only
/// `P_r` lacks support makes the gap `+inf`.
pub fn check_admissibility<P: PosteriorPair + ?Sized>(
    probits: &[ProbVec],
    pair: &P,
    ds: &LabeledDataset,
) -> Result<Admissibility> {
    if ds.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    if probits.len() != ds.len() {
        return Err(Error::DimensionMismatch {
            expected: ds.len(),
            got: probits.len(),
        });
    }
    let rows: Vec<(f64, f64)> = (0..ds.len())
        .into_par_iter()
        .map(|i| {
            let (lp, lpr) = pair.log_posteriors(ds.row(i))?;
            let q = &probits[i];
            let to_full = kl_to_log(q, &lp).map_err(|e| Error::Admissibility {
                sample_id: ds.id(i),
                reason: format!("initial proxy: {e}"),
            })?;
            let to_retain = match kl_to_log(q, &lpr) {
                Ok(v) => v,
                Err(Error::AbsoluteContinuity { .. }) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            Ok((to_full, to_retain))
        })
        .collect::<Result<_>>()?;
    let n = rows.len() as f64;
    let kl_to_full = rows.iter().map(|r| r.0).sum::<f64>() / n;
    let kl_to_retain = rows.iter().map(|r| r.1).sum::<f64>() / n;
    let gap = kl_to_retain - kl_to_full;
    Ok(Admissibility {
        gap,
        holds: gap >= 0.0,
        kl_to_full,
        kl_to_retain,
        retain_support_violations: rows.iter().filter(|r| r.1.is_infinite()).count(),
    })
}
