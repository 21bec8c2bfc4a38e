use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{ForgetSplit, LabeledDataset};
use crate::error::{Error, Result};

use super::loss::LossKind;
use super::train::{Monitor, Run, TrainConfig, TrainTrace};
use super::MlpModel;

const RELABEL_SALT: u64 = 0x7e1a_be15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BaselineKind {
    #[serde(rename = "FT")]
    Ft,
    #[serde(rename = "GA")]
    Ga,
    #[serde(rename = "GA+FT")]
    GaFt,
    #[serde(rename = "RL+FT")]
    RlFt,
    #[serde(rename = "Retrain")]
    Retrain,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 5] = [
        BaselineKind::Ft,
        BaselineKind::Ga,
        BaselineKind::GaFt,
        BaselineKind::RlFt,
        BaselineKind::Retrain,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Ft => "FT",
            BaselineKind::Ga => "GA",
            BaselineKind::GaFt => "GA+FT",
            BaselineKind::RlFt => "RL+FT",
            BaselineKind::Retrain => "Retrain",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BaselineKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown baseline `{s}`")))
    }
}

/// Gradient-ascent settings, relative to the fine-tuning recipe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AscentConfig {
    pub lr_factor: f64,
    pub max_epochs: usize,
}

impl Default for AscentConfig {
    fn default() -> Self {
        Self {
            lr_factor: 0.1,
            max_epochs: 5,
        }
    }
}

/// Forget set with each label replaced by one of the other classes, drawn
/// uniformly.
pub fn relabel_forget(forget: &LabeledDataset, seed: u64) -> Result<LabeledDataset> {
    let c = forget.n_classes();
    if c < 2 {
        return Err(Error::InvalidArgument(
            "relabeling needs at least two classes".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ RELABEL_SALT);
    let labels = forget
        .labels()
        .iter()
        .map(|&y| {
            let k = rng.random_range(0..c - 1);
            if k >= y {
                k + 1
            } else {
                k
            }
        })
        .collect();
    forget.with_labels(labels)
}

/// Runs one baseline starting from `initial` (or from a fresh init for
/// Retrain) and returns the resulting model with its trace.
pub fn baseline(
    kind: BaselineKind,
    initial: &MlpModel,
    ds: &LabeledDataset,
    split: &ForgetSplit,
    cfg: &TrainConfig,
    ascent: &AscentConfig,
    monitor: Option<&Monitor>,
) -> Result<(MlpModel, TrainTrace)> {
    split.check_against(ds)?;
    let retain = split.retain_set(ds);
    let forget = split.forget_set(ds);
    let ce = cfg.with_loss(LossKind::CrossEntropy);
    let ga = TrainConfig {
        learning_rate: cfg.learning_rate * ascent.lr_factor,
        loss: LossKind::NegatedCrossEntropy,
        ..cfg.clone()
    };
    let mut run = Run::new(monitor);
    let mut model = initial.clone();
    match kind {
        BaselineKind::Ft => run.phase(&mut model, &retain, None, &ce)?,
        BaselineKind::Ga => {
            let capped = TrainConfig {
                epochs: cfg.epochs.min(ascent.max_epochs),
                ..ga
            };
            run.phase(&mut model, &forget, None, &capped)?
        }
        BaselineKind::GaFt => {
            if cfg.epochs > 0 {
                run.phase(&mut model, &forget, None, &TrainConfig { epochs: 1, ..ga })?;
            }
            run.phase(&mut model, &retain, None, &ce)?
        }
        BaselineKind::RlFt => {
            let mixed = retain.concat(&relabel_forget(&forget, cfg.seed)?)?;
            run.phase(&mut model, &mixed, None, &ce)?
        }
        BaselineKind::Retrain => {
            model = MlpModel::new(initial.dims(), cfg.seed)?;
            run.phase(&mut model, &retain, None, &ce)?
        }
    }
    Ok((model, run.finish()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{build_scenario, Preset, Scenario};
    use crate::nets::{dataset_loss, train_ce};

    fn setup() -> (LabeledDataset, ForgetSplit, MlpModel) {
        let ds = Preset::Subclass.spec(0).generate(60).unwrap();
        let split = build_scenario(
            &ds,
            Scenario::Subclass {
                class: 0,
                subclass: 1,
            },
        )
        .unwrap();
        let mut m = MlpModel::new(&[2, 8, 2], 0).unwrap();
        train_ce(
            &mut m,
            &ds,
            &TrainConfig {
                epochs: 5,
                ..TrainConfig::default()
            },
            None,
        )
        .unwrap();
        (ds, split, m)
    }

    #[test]
    fn zero_epoch_fine_tuning_is_identity() {
        let (ds, split, m) = setup();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let (out, trace) = baseline(
            BaselineKind::Ft,
            &m,
            &ds,
            &split,
            &cfg,
            &AscentConfig::default(),
            None,
        )
        .unwrap();
        assert_eq!(out, m);
        assert!(trace.is_empty());
    }

    #[test]
    fn ascent_raises_forget_loss() {
        let (ds, split, m) = setup();
        let forget = split.forget_set(&ds);
        let before = dataset_loss(&m, &forget, None, LossKind::CrossEntropy).unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            learning_rate: 1e-3,
            ..TrainConfig::default()
        };
        let (out, _) = baseline(
            BaselineKind::Ga,
            &m,
            &ds,
            &split,
            &cfg,
            &AscentConfig::default(),
            None,
        )
        .unwrap();
        assert!(dataset_loss(&out, &forget, None, LossKind::CrossEntropy).unwrap() > before);
    }

    #[test]
    fn retrain_is_reproducible() {
        let (ds, split, m) = setup();
        let cfg = TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        };
        let a = baseline(
            BaselineKind::Retrain,
            &m,
            &ds,
            &split,
            &cfg,
            &AscentConfig::default(),
            None,
        )
        .unwrap();
        let b = baseline(
            BaselineKind::Retrain,
            &m,
            &ds,
            &split,
            &cfg,
            &AscentConfig::default(),
            None,
        )
        .unwrap();
        assert_eq!(a.0.params(), b.0.params());
    }

    #[test]
    fn ga_ft_has_one_extra_epoch() {
        let (ds, split, m) = setup();
        let cfg = TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        };
        let (_, trace) = baseline(
            BaselineKind::GaFt,
            &m,
            &ds,
            &split,
            &cfg,
            &AscentConfig::default(),
            None,
        )
        .unwrap();
        assert_eq!(trace.len(), 4);
        assert_eq!(trace.epochs[3].epoch, 3);
    }

    #[test]
    fn relabeling_always_changes_the_label() {
        let ds = Preset::Homoscedastic.spec(0).generate(30).unwrap();
        let out = relabel_forget(&ds, 4).unwrap();
        assert!(ds.labels().iter().zip(out.labels()).all(|(a, b)| a != b));
        let used: std::collections::BTreeSet<_> = out.labels().iter().copied().collect();
        assert_eq!(used.len(), 3);
    }

    #[test]
    fn names_round_trip() {
        for k in BaselineKind::ALL {
            assert_eq!(k.name().parse::<BaselineKind>().unwrap(), k);
        }
    }
}
