use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{square_from_rows, Mvn};
use crate::numkit::{lse, softmax, ProbVec};

use super::LabeledDataset;

/// One Gaussian sub-population of a class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    pub class: usize,
    pub subclass: usize,
    pub mean: Vec<f64>,
    /// Row-major `d × d` covariance.
    pub cov: Vec<Vec<f64>>,
    /// Weight inside its class; the weights of a class sum to 1.
    pub weight: f64,
}

/// Ground-truth class-conditional Gaussian mixtures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianMixtureSpec {
    pub dim: usize,
    pub n_classes: usize,
    pub seed: u64,
    #[serde(rename = "component")]
    pub components: Vec<MixtureComponent>,
}

impl GaussianMixtureSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: Self =
            toml::from_str(text).map_err(|e| Error::parse("mixture spec", e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("mixture spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim;
        if d == 0 || self.n_classes == 0 {
            return Err(Error::InvalidSpec(
                "dim and n_classes must be positive".into(),
            ));
        }
        let mut weight_sums = vec![0.0; self.n_classes];
        let mut seen = std::collections::HashSet::new();
        for c in &self.components {
            if c.class >= self.n_classes {
                return Err(Error::InvalidSpec(format!(
                    "class {} out of range",
                    c.class
                )));
            }
            if !seen.insert((c.class, c.subclass)) {
                return Err(Error::InvalidSpec(format!(
                    "duplicate component ({}, {})",
                    c.class, c.subclass
                )));
            }
            if c.mean.len() != d {
                return Err(Error::InvalidSpec(format!(
                    "mean of ({}, {}) has wrong length",
                    c.class, c.subclass
                )));
            }
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                return Err(Error::InvalidSpec(format!(
                    "weight of ({}, {}) must be positive",
                    c.class, c.subclass
                )));
            }
            let cov = square_from_rows(&c.cov, d).map_err(|_| {
                Error::InvalidSpec(format!(
                    "covariance of ({}, {}) is not {d}x{d}",
                    c.class, c.subclass
                ))
            })?;
            if (0..d).any(|i| {
                (0..i)
                    .any(|j| (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 * (1.0 + cov[(i, j)].abs()))
            }) {
                return Err(Error::InvalidSpec(format!(
                    "covariance of ({}, {}) is not symmetric",
                    c.class, c.subclass
                )));
            }
            Mvn::full(&c.mean, &cov, "spec").map_err(|_| {
                Error::InvalidSpec(format!(
                    "covariance of ({}, {}) is not SPD",
                    c.class, c.subclass
                ))
            })?;
            weight_sums[c.class] += c.weight;
        }
        for (y, s) in weight_sums.iter().enumerate() {
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidSpec(format!(
                    "weights of class {y} sum to {s}"
                )));
            }
        }
        Ok(())
    }

    fn subclasses_in(&self, class: usize) -> usize {
        self.components.iter().filter(|c| c.class == class).count()
    }

    /// Number of draws for each component given `n_per_subclass`.
    pub fn component_counts(&self, n_per_subclass: usize) -> Vec<usize> {
        self.components
            .iter()
            .map(|c| {
                (c.weight * (self.subclasses_in(c.class) * n_per_subclass) as f64).round() as usize
            })
            .collect()
    }

    /// Draws the components in listing order; ids start at `first_id`.
    pub fn generate_with_ids(
        &self,
        n_per_subclass: usize,
        seed: u64,
        first_id: u64,
    ) -> Result<LabeledDataset> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let counts = self.component_counts(n_per_subclass);
        let total: usize = counts.iter().sum();
        let mut features = Vec::with_capacity(total * self.dim);
        let mut labels = Vec::with_capacity(total);
        let mut subclasses = Vec::with_capacity(total);
        let mut z = vec![0.0; self.dim];
        for (comp, &count) in self.components.iter().zip(&counts) {
            let cov = square_from_rows(&comp.cov, self.dim)?;
            let mvn = Mvn::full(&comp.mean, &cov, "spec")?;
            for _ in 0..count {
                for zi in z.iter_mut() {
                    *zi = StandardNormal.sample(&mut rng);
                }
                features.extend(mvn.transform_standard(&z));
                labels.push(comp.class);
                subclasses.push(Some(comp.subclass));
            }
        }
        let ids = (first_id..first_id + total as u64).collect();
        LabeledDataset::new(self.dim, self.n_classes, features, labels, subclasses, ids)
    }

    /// Training draw: seeded by the spec seed, ids `0..n`.
    pub fn generate(&self, n_per_subclass: usize) -> Result<LabeledDataset> {
        self.generate_with_ids(n_per_subclass, self.seed, 0)
    }

    /// Ground-truth distribution implied by the spec.
    pub fn truth(&self) -> Result<TrueDistribution> {
        self.validate()?;
        let mut comps = Vec::with_capacity(self.components.len());
        for c in &self.components {
            let cov = square_from_rows(&c.cov, self.dim)?;
            // joint weight of (class, subclass) ∝ weight · (#subclasses in class),
            // matching the expected draw counts
            let joint = c.weight * self.subclasses_in(c.class) as f64;
            comps.push(TrueComponent {
                class: c.class,
                subclass: c.subclass,
                within_class: c.weight,
                joint,
                mvn: Mvn::full(&c.mean, &cov, "spec")?,
            });
        }
        TrueDistribution::from_components(self.dim, self.n_classes, comps)
    }
}

#[derive(Debug, Clone)]
struct TrueComponent {
    class: usize,
    subclass: usize,
    within_class: f64,
    joint: f64,
    mvn: Mvn,
}

/// Exact posterior and class-conditional densities of a Gaussian mixture
/// ground truth, optionally with some components removed.
#[derive(Debug, Clone)]
pub struct TrueDistribution {
    dim: usize,
    n_classes: usize,
    comps: Vec<TrueComponent>,
}

impl TrueDistribution {
    fn from_components(
        dim: usize,
        n_classes: usize,
        mut comps: Vec<TrueComponent>,
    ) -> Result<Self> {
        let total: f64 = comps.iter().map(|c| c.joint).sum();
        if comps.is_empty() || total <= 0.0 {
            return Err(Error::InvalidSpec("no component left".into()));
        }
        for y in 0..n_classes {
            let class_total: f64 = comps
                .iter()
                .filter(|c| c.class == y)
                .map(|c| c.within_class)
                .sum();
            for c in comps.iter_mut().filter(|c| c.class == y) {
                c.within_class /= class_total;
            }
        }
        for c in &mut comps {
            c.joint /= total;
        }
        Ok(Self {
            dim,
            n_classes,
            comps,
        })
    }

    /// Drops every component for which `remove(class, subclass)` holds and
    /// renormalizes the remaining weights.
    pub fn without(&self, remove: impl Fn(usize, usize) -> bool) -> Result<TrueDistribution> {
        let comps = self
            .comps
            .iter()
            .filter(|c| !remove(c.class, c.subclass))
            .cloned()
            .collect();
        Self::from_components(self.dim, self.n_classes, comps)
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn class_prior(&self, class: usize) -> f64 {
        self.comps
            .iter()
            .filter(|c| c.class == class)
            .map(|c| c.joint)
            .sum()
    }

    /// `log ℙ(x, y)` per class; classes with no component get `-inf`.
    pub fn log_joint(&self, x: &[f64]) -> Vec<f64> {
        let mut per_class: Vec<Vec<f64>> = vec![Vec::new(); self.n_classes];
        for c in &self.comps {
            per_class[c.class].push(c.joint.ln() + c.mvn.log_pdf(x));
        }
        per_class
            .iter()
            .map(|terms| {
                if terms.is_empty() {
                    f64::NEG_INFINITY
                } else {
                    lse(terms).unwrap_or(f64::NEG_INFINITY)
                }
            })
            .collect()
    }

    pub fn posterior(&self, x: &[f64]) -> Result<ProbVec> {
        softmax(&self.log_joint(x))
    }

    pub fn log_posterior(&self, x: &[f64]) -> Result<Vec<f64>> {
        crate::numkit::log_softmax(&self.log_joint(x))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `n` draws from `ℙ(X | y = class)`.
    pub fn sample_class<R: rand::Rng>(&self, class: usize, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
        let comps: Vec<&TrueComponent> = self.comps.iter().filter(|c| c.class == class).collect();
        if comps.is_empty() {
            return Vec::new();
        }
        let mut z = vec![0.0; self.dim];
        (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = comps[comps.len() - 1];
                for c in &comps {
                    acc += c.within_class;
                    if u < acc {
                        pick = c;
                        break;
                    }
                }
                for zi in z.iter_mut() {
                    *zi = StandardNormal.sample(rng);
                }
                pick.mvn.transform_standard(&z)
            })
            .collect()
    }

    /// `log ℙ(x | y)`.
    pub fn log_class_conditional(&self, class: usize, x: &[f64]) -> f64 {
        let terms: Vec<f64> = self
            .comps
            .iter()
            .filter(|c| c.class == class)
            .map(|c| c.within_class.ln() + c.mvn.log_pdf(x))
            .collect();
        if terms.is_empty() {
            f64::NEG_INFINITY
        } else {
            lse(&terms).unwrap_or(f64::NEG_INFINITY)
        }
    }
}

/// Named generators used by the CLI and the benchmark plans.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Two well separated isotropic blobs in 2-d.
    Blobs,
    /// 2 classes × 2 heteroscedastic subclasses in 2-d.
    Subclass,
    /// 3 classes sharing one covariance in 8-d.
    Homoscedastic,
    /// 10 classes in 16-d, one component each.
    TenClass,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::Blobs,
        Preset::Subclass,
        Preset::Homoscedastic,
        Preset::TenClass,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Blobs => "blobs",
            Preset::Subclass => "subclass",
            Preset::Homoscedastic => "homoscedastic",
            Preset::TenClass => "ten-class",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown preset `{name}`")))
    }

    pub fn spec(self, seed: u64) -> GaussianMixtureSpec {
        let iso = |d: usize, v: f64| -> Vec<Vec<f64>> {
            (0..d)
                .map(|i| (0..d).map(|j| if i == j { v } else { 0.0 }).collect())
                .collect()
        };
        let comp = |class, subclass, mean: Vec<f64>, cov, weight| MixtureComponent {
            class,
            subclass,
            mean,
            cov,
            weight,
        };
        match self {
            Preset::Blobs => GaussianMixtureSpec {
                dim: 2,
                n_classes: 2,
                seed,
                components: vec![
                    comp(0, 0, vec![-3.0, 0.0], iso(2, 0.5), 1.0),
                    comp(1, 0, vec![3.0, 0.0], iso(2, 0.5), 1.0),
                ],
            },
            Preset::Subclass => GaussianMixtureSpec {
                dim: 2,
                n_classes: 2,
                seed,
                components: vec![
                    comp(
                        0,
                        0,
                        vec![-2.0, 1.2],
                        vec![vec![0.6, 0.15], vec![0.15, 0.4]],
                        0.5,
                    ),
                    comp(
                        0,
                        1,
                        vec![-1.0, -1.6],
                        vec![vec![0.35, 0.0], vec![0.0, 0.7]],
                        0.5,
                    ),
                    comp(
                        1,
                        0,
                        vec![2.0, 1.0],
                        vec![vec![0.5, -0.1], vec![-0.1, 0.5]],
                        0.5,
                    ),
                    comp(
                        1,
                        1,
                        vec![0.8, -1.4],
                        vec![vec![0.8, 0.0], vec![0.0, 0.3]],
                        0.5,
                    ),
                ],
            },
            Preset::Homoscedastic => {
                let d = 8;
                let shared: Vec<Vec<f64>> = (0..d)
                    .map(|i: usize| {
                        (0..d)
                            .map(|j| {
                                if i == j {
                                    1.0
                                } else if i.abs_diff(j) == 1 {
                                    0.3
                                } else {
                                    0.0
                                }
                            })
                            .collect()
                    })
                    .collect();
                let mean = |k: usize| -> Vec<f64> {
                    (0..d).map(|i| if i % 3 == k { 1.5 } else { 0.0 }).collect()
                };
                GaussianMixtureSpec {
                    dim: d,
                    n_classes: 3,
                    seed,
                    components: (0..3)
                        .map(|k| comp(k, 0, mean(k), shared.clone(), 1.0))
                        .collect(),
                }
            }
            Preset::TenClass => {
                let d = 16;
                GaussianMixtureSpec {
                    dim: d,
                    n_classes: 10,
                    seed,
                    components: (0..10)
                        .map(|k| {
                            let mean = (0..d)
                                .map(|i| if i == k || i == k + 6 { 2.5 } else { 0.0 })
                                .collect();
                            comp(k, 0, mean, iso(d, 1.0), 1.0)
                        })
                        .collect(),
                }
            }
        }
    }
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::parse(s)
    }
}
