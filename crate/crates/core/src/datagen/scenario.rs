use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{LabeledDataset, TrueDistribution};

/// Which part of the training set is to be forgotten.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Scenario {
    /// An entire class.
    Class { class: usize },
    /// Every sample carrying `subclass` inside `class`.
    Subclass { class: usize, subclass: usize },
    /// `n_forget` samples drawn uniformly without replacement.
    Random { n_forget: usize, seed: u64 },
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Class { .. } => "class",
            Scenario::Subclass { .. } => "subclass",
            Scenario::Random { .. } => "random",
        }
    }

    /// Key under which results of this scenario are filed.
    pub fn sub_key(&self) -> String {
        match self {
            Scenario::Class { class } => class.to_string(),
            Scenario::Subclass { class, subclass } => format!("{class}-{subclass}"),
            Scenario::Random { n_forget, .. } => n_forget.to_string(),
        }
    }

    /// Ground truth of the retain distribution.
    pub fn retain_truth(&self, truth: &TrueDistribution) -> Result<TrueDistribution> {
        match *self {
            Scenario::Class { class } => truth.without(|c, _| c == class),
            Scenario::Subclass { class, subclass } => {
                truth.without(|c, s| c == class && s == subclass)
            }
            Scenario::Random { .. } => Ok(truth.clone()),
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        match self {
            Scenario::Random { n_forget, .. } => Scenario::Random { n_forget, seed },
            other => other,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scenario::Class { class } => write!(f, "class:{class}"),
            Scenario::Subclass { class, subclass } => write!(f, "subclass:{class}:{subclass}"),
            Scenario::Random { n_forget, seed } => write!(f, "random:{n_forget}:{seed}"),
        }
    }
}

/// `class:Y`, `subclass:Y:S` or `random:N[:SEED]` (seed defaults to 0).
impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |t: &str| -> Result<u64> {
            t.parse().map_err(|_| {
                Error::InvalidScenario(format!("`{t}` is not a non-negative integer in `{s}`"))
            })
        };
        match parts.as_slice() {
            ["class", y] => Ok(Scenario::Class {
                class: num(y)? as usize,
            }),
            ["subclass", y, sub] => Ok(Scenario::Subclass {
                class: num(y)? as usize,
                subclass: num(sub)? as usize,
            }),
            ["random", n] => Ok(Scenario::Random {
                n_forget: num(n)? as usize,
                seed: 0,
            }),
            ["random", n, seed] => Ok(Scenario::Random {
                n_forget: num(n)? as usize,
                seed: num(seed)?,
            }),
            _ => Err(Error::InvalidScenario(format!("cannot parse `{s}`"))),
        }
    }
}

/// Partition of a dataset's ids into retain and forget sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgetSplit {
    pub retain_ids: BTreeSet<u64>,
    pub forget_ids: BTreeSet<u64>,
    /// `|D(y)|`.
    pub class_counts: Vec<usize>,
    /// `|D_f(y)|`.
    pub forget_counts: Vec<usize>,
    /// `|D_f(y)| / |D(y)|`.
    pub pi_f_per_class: Vec<f64>,
    /// `|D_f| / |D|`.
    pub pi_f_global: f64,
}

impl ForgetSplit {
    /// Split with an explicit forget set, which may be empty.
    pub fn from_forget_ids(
        ds: &LabeledDataset,
        forget: impl IntoIterator<Item = u64>,
    ) -> Result<Self> {
        let forget_ids: BTreeSet<u64> = forget.into_iter().collect();
        let index = ds.index_by_id();
        if let Some(bad) = forget_ids.iter().find(|id| !index.contains_key(id)) {
            return Err(Error::InvalidScenario(format!(
                "forget id {bad} not in dataset"
            )));
        }
        let class_counts = ds.class_counts();
        let mut forget_counts = vec![0; ds.n_classes()];
        for id in &forget_ids {
            forget_counts[ds.label(index[id])] += 1;
        }
        let retain_ids = ds
            .ids()
            .iter()
            .copied()
            .filter(|id| !forget_ids.contains(id))
            .collect();
        let pi_f_per_class = forget_counts
            .iter()
            .zip(&class_counts)
            .map(|(&f, &n)| if n == 0 { 0.0 } else { f as f64 / n as f64 })
            .collect();
        Ok(Self {
            retain_ids,
            pi_f_global: forget_ids.len() as f64 / ds.len() as f64,
            forget_ids,
            class_counts,
            forget_counts,
            pi_f_per_class,
        })
    }

    pub fn is_forget(&self, id: u64) -> bool {
        self.forget_ids.contains(&id)
    }

    pub fn retain_counts(&self) -> Vec<usize> {
        self.class_counts
            .iter()
            .zip(&self.forget_counts)
            .map(|(n, f)| n - f)
            .collect()
    }

    pub fn retain_set(&self, ds: &LabeledDataset) -> LabeledDataset {
        ds.filter_ids(|id| !self.forget_ids.contains(&id))
    }

    pub fn forget_set(&self, ds: &LabeledDataset) -> LabeledDataset {
        ds.filter_ids(|id| self.forget_ids.contains(&id))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("split serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let split: Self = serde_json::from_str(text)?;
        if !split.retain_ids.is_disjoint(&split.forget_ids) {
            return Err(Error::InvalidScenario(
                "retain and forget ids overlap".into(),
            ));
        }
        Ok(split)
    }

    /// Checks that this split partitions exactly the ids of `ds`.
    pub fn check_against(&self, ds: &LabeledDataset) -> Result<()> {
        let expected = Self::from_forget_ids(ds, self.forget_ids.iter().copied())?;
        if expected != *self {
            return Err(Error::InvalidScenario(
                "split does not match dataset".into(),
            ));
        }
        Ok(())
    }
}

pub fn build_scenario(ds: &LabeledDataset, scenario: Scenario) -> Result<ForgetSplit> {
    let forget: Vec<u64> = match scenario {
        Scenario::Class { class } => {
            if class >= ds.n_classes() {
                return Err(Error::InvalidScenario(format!(
                    "class {class} does not exist"
                )));
            }
            (0..ds.len())
                .filter(|&i| ds.label(i) == class)
                .map(|i| ds.id(i))
                .collect()
        }
        Scenario::Subclass { class, subclass } => {
            if class >= ds.n_classes() {
                return Err(Error::InvalidScenario(format!(
                    "class {class} does not exist"
                )));
            }
            let ids: Vec<u64> = (0..ds.len())
                .filter(|&i| ds.label(i) == class && ds.subclass(i) == Some(subclass))
                .map(|i| ds.id(i))
                .collect();
            if ids.is_empty() {
                return Err(Error::InvalidScenario(format!(
                    "class {class} has no subclass {subclass}"
                )));
            }
            ids
        }
        Scenario::Random { n_forget, seed } => {
            if n_forget > ds.len() {
                return Err(Error::InvalidScenario(format!(
                    "cannot forget {n_forget} of {} samples",
                    ds.len()
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rand::seq::index::sample(&mut rng, ds.len(), n_forget)
                .into_iter()
                .map(|i| ds.id(i))
                .collect()
        }
    };
    if forget.is_empty() {
        return Err(Error::NothingToForget);
    }
    ForgetSplit::from_forget_ids(ds, forget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::Preset;
    use proptest::prelude::*;

    fn data() -> LabeledDataset {
        Preset::Subclass.spec(2).generate(100).unwrap()
    }

    #[test]
    fn class_scenario() {
        let split = build_scenario(&data(), Scenario::Class { class: 0 }).unwrap();
        assert_eq!(split.forget_ids.len(), 200);
        assert_eq!(split.pi_f_per_class, vec![1.0, 0.0]);
        assert_eq!(split.pi_f_global, 0.5);
    }

    #[test]
    fn subclass_scenario() {
        let split = build_scenario(
            &data(),
            Scenario::Subclass {
                class: 0,
                subclass: 1,
            },
        )
        .unwrap();
        assert_eq!(split.pi_f_per_class, vec![0.5, 0.0]);
        assert!(build_scenario(
            &data(),
            Scenario::Subclass {
                class: 0,
                subclass: 7
            }
        )
        .is_err());
    }

    #[test]
    fn random_scenario_is_deterministic() {
        let ds = data();
        let a = build_scenario(
            &ds,
            Scenario::Random {
                n_forget: 50,
                seed: 4,
            },
        )
        .unwrap();
        let b = build_scenario(
            &ds,
            Scenario::Random {
                n_forget: 50,
                seed: 4,
            },
        )
        .unwrap();
        assert_eq!(a.forget_ids, b.forget_ids);
        assert_eq!(a.forget_ids.len(), 50);
        let c = build_scenario(
            &ds,
            Scenario::Random {
                n_forget: 50,
                seed: 5,
            },
        )
        .unwrap();
        assert_ne!(a.forget_ids, c.forget_ids);
    }

    #[test]
    fn errors() {
        let ds = data();
        assert!(matches!(
            build_scenario(
                &ds,
                Scenario::Random {
                    n_forget: 0,
                    seed: 0
                }
            ),
            Err(Error::NothingToForget)
        ));
        assert!(build_scenario(
            &ds,
            Scenario::Random {
                n_forget: 401,
                seed: 0
            }
        )
        .is_err());
        assert!(build_scenario(&ds, Scenario::Class { class: 2 }).is_err());
    }

    #[test]
    fn parse_display_round_trip() {
        for s in ["class:3", "subclass:1:0", "random:50:7"] {
            assert_eq!(s.parse::<Scenario>().unwrap().to_string(), s);
        }
        assert_eq!(
            "random:5".parse::<Scenario>().unwrap(),
            Scenario::Random {
                n_forget: 5,
                seed: 0
            }
        );
        assert!("class".parse::<Scenario>().is_err());
        assert!("class:-1".parse::<Scenario>().is_err());
    }

    #[test]
    fn json_round_trip() {
        let split = build_scenario(
            &data(),
            Scenario::Random {
                n_forget: 10,
                seed: 1,
            },
        )
        .unwrap();
        assert_eq!(ForgetSplit::from_json(&split.to_json()).unwrap(), split);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn random_split_partitions_ids(n_f in 1usize..400, seed in any::<u64>()) {
            let ds = data();
            let split = build_scenario(&ds, Scenario::Random { n_forget: n_f, seed }).unwrap();
            prop_assert!(split.retain_ids.is_disjoint(&split.forget_ids));
            prop_assert_eq!(split.retain_ids.len() + split.forget_ids.len(), ds.len());
            let weighted: f64 = split
                .pi_f_per_class
                .iter()
                .zip(&split.class_counts)
                .map(|(p, &n)| p * n as f64)
                .sum();
            prop_assert!((weighted - split.forget_ids.len() as f64).abs() < 1e-9);
        }
    }
}
