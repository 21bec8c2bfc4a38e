use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datagen::{make_sketch, ForgetSplit, LabeledDataset, SketchOperator};
use crate::error::{Error, Result};
use crate::numkit::{log_softmax, lse, LogitVec};

use super::dirac::DiracTable;
use super::gaussian::{CovSource, CovStructure, GaussianClassConditional, LabelKey, State};
use super::posterior::{log_add, log_ratio, shifted_logits, PosteriorPair};

pub const DEFAULT_RIDGE: f64 = 1e-6;
const FORMAT_TAG: &str = "logitshift-proxy";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ProxyKind {
    #[serde(rename = "LDA")]
    Lda,
    #[serde(rename = "QDA")]
    Qda,
    #[serde(rename = "LDA-Mix")]
    LdaMix,
    #[serde(rename = "QDA-Mix")]
    QdaMix,
    #[serde(rename = "LDA-2C")]
    Lda2c,
    #[serde(rename = "DIR")]
    Dir,
    #[serde(rename = "DIR-2C")]
    Dir2c,
}

impl ProxyKind {
    pub const ALL: [ProxyKind; 7] = [
        ProxyKind::Lda,
        ProxyKind::Qda,
        ProxyKind::LdaMix,
        ProxyKind::QdaMix,
        ProxyKind::Lda2c,
        ProxyKind::Dir,
        ProxyKind::Dir2c,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProxyKind::Lda => "LDA",
            ProxyKind::Qda => "QDA",
            ProxyKind::LdaMix => "LDA-Mix",
            ProxyKind::QdaMix => "QDA-Mix",
            ProxyKind::Lda2c => "LDA-2C",
            ProxyKind::Dir => "DIR",
            ProxyKind::Dir2c => "DIR-2C",
        }
    }

    /// Empirical proxies: no density, membership by sample id.
    pub fn is_dirac(self) -> bool {
        matches!(self, ProxyKind::Dir | ProxyKind::Dir2c)
    }
}

impl fmt::Display for ProxyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProxyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProxyKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown proxy kind `{s}`")))
    }
}

/// Fitting set of the covariance used by P_r in LDA and QDA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaConvention {
    /// One covariance, fitted on D, shared by P and P_r.
    #[default]
    SharedFromFull,
    /// P uses a covariance fitted on D, P_r one fitted on D_r.
    PerSupport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitOptions {
    pub ridge: f64,
    pub sigma: SigmaConvention,
    pub qda_full_cov: bool,
    /// Fit the proxies on `k`-dimensional sketched features.
    pub sketch_dim: Option<usize>,
    pub sketch_seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            ridge: DEFAULT_RIDGE,
            sigma: SigmaConvention::default(),
            qda_full_cov: false,
            sketch_dim: None,
            sketch_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum PairModel {
    /// Independent P and P_r over C labels.
    Plain {
        p: GaussianClassConditional,
        pr: GaussianClassConditional,
    },
    /// P(x|y) = (1 − π_f(y)) P_r(x|y) + π_f(y) P_f(x|y).
    Mix {
        retain: GaussianClassConditional,
        forget: Option<GaussianClassConditional>,
        pi_f: Vec<f64>,
        priors: Vec<f64>,
    },
    /// One model over 2C labels `(y, s)`, label index `2y + s`.
    Doubled {
        joint: GaussianClassConditional,
    },
    Dirac {
        table: DiracTable,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SketchSpec {
    input_dim: usize,
    k: usize,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Envelope {
    format: String,
    version: u32,
    kind: ProxyKind,
    n_classes: usize,
    fitted_on: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    reversed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sketch: Option<SketchSpec>,
    model: PairModel,
}

/// The pair (P, P_r) and the logit shift ΔM = log P_r(·|x) − log P(·|x).
#[derive(Debug, Clone)]
pub struct ProxyPair {
    kind: ProxyKind,
    n_classes: usize,
    fitted_on: String,
    reversed: bool,
    sketch: Option<(SketchSpec, SketchOperator)>,
    model: PairModel,
}

impl PartialEq for ProxyPair {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.n_classes == other.n_classes
            && self.fitted_on == other.fitted_on
            && self.reversed == other.reversed
            && self.sketch.as_ref().map(|s| &s.0) == other.sketch.as_ref().map(|s| &s.0)
            && self.model == other.model
    }
}

fn class_labels(c: usize) -> Vec<LabelKey> {
    (0..c).map(LabelKey::class).collect()
}

fn fit_classes<'a>(
    c: usize,
    dim: usize,
    rows: impl IntoIterator<Item = (&'a [f64], usize)>,
    cov: CovSource,
    ridge: f64,
) -> Result<GaussianClassConditional> {
    GaussianClassConditional::fit(class_labels(c), dim, rows, cov, ridge)
}

pub fn fit(
    kind: ProxyKind,
    ds: &LabeledDataset,
    split: &ForgetSplit,
    opts: &FitOptions,
) -> Result<ProxyPair> {
    split.check_against(ds)?;
    let c = ds.n_classes();
    let (sketch, data) = match opts.sketch_dim {
        Some(k) => {
            let op = make_sketch(ds.dim(), k, opts.sketch_seed)?;
            let sketched = crate::datagen::apply_sketch(&op, ds)?;
            let spec = SketchSpec {
                input_dim: ds.dim(),
                k,
                seed: opts.sketch_seed,
            };
            (Some((spec, op)), sketched)
        }
        None => (None, ds.clone()),
    };
    let dim = data.dim();
    let all = || (0..data.len()).map(|i| (data.row(i), data.label(i)));
    let retain = || {
        all()
            .enumerate()
            .filter(|(i, _)| !split.is_forget(data.id(*i)))
            .map(|(_, r)| r)
    };
    let forget = || {
        all()
            .enumerate()
            .filter(|(i, _)| split.is_forget(data.id(*i)))
            .map(|(_, r)| r)
    };
    let ridge = opts.ridge;

    let model = match kind {
        ProxyKind::Lda | ProxyKind::Qda => {
            let structure = match kind {
                ProxyKind::Lda => CovStructure::SharedFull,
                _ if opts.qda_full_cov => CovStructure::PerLabelFull,
                _ => CovStructure::PerLabelDiag,
            };
            let p = fit_classes(c, dim, all(), CovSource::Estimate(structure), ridge)?;
            let pr_cov = match opts.sigma {
                SigmaConvention::SharedFromFull => CovSource::Given(p.covariance().clone()),
                SigmaConvention::PerSupport => CovSource::Estimate(structure),
            };
            let pr = fit_classes(c, dim, retain(), pr_cov, ridge)?;
            PairModel::Plain { p, pr }
        }
        ProxyKind::LdaMix | ProxyKind::QdaMix => {
            let structure = if kind == ProxyKind::LdaMix {
                CovStructure::SharedFull
            } else if opts.qda_full_cov {
                CovStructure::PerLabelFull
            } else {
                CovStructure::PerLabelDiag
            };
            let retain_model =
                fit_classes(c, dim, retain(), CovSource::Estimate(structure), ridge)?;
            let forget_model = if split.forget_ids.is_empty() {
                None
            } else {
                Some(fit_classes(
                    c,
                    dim,
                    forget(),
                    CovSource::Estimate(structure),
                    ridge,
                )?)
            };
            let n = data.len() as f64;
            PairModel::Mix {
                retain: retain_model,
                forget: forget_model,
                pi_f: split.pi_f_per_class.clone(),
                priors: split.class_counts.iter().map(|&k| k as f64 / n).collect(),
            }
        }
        ProxyKind::Lda2c => {
            let labels = (0..c)
                .flat_map(|y| {
                    [
                        LabelKey::doubled(y, State::Retain),
                        LabelKey::doubled(y, State::Forget),
                    ]
                })
                .collect();
            let rows = (0..data.len()).map(|i| {
                let s = usize::from(split.is_forget(data.id(i)));
                (data.row(i), 2 * data.label(i) + s)
            });
            let joint = GaussianClassConditional::fit(
                labels,
                dim,
                rows,
                CovSource::Estimate(CovStructure::SharedFull),
                ridge,
            )?;
            PairModel::Doubled { joint }
        }
        ProxyKind::Dir | ProxyKind::Dir2c => PairModel::Dirac {
            table: DiracTable::new(ds, split),
        },
    };
    Ok(ProxyPair {
        kind,
        n_classes: c,
        fitted_on: ds.fingerprint(),
        reversed: false,
        sketch,
        model,
    })
}

impl ProxyPair {
    /// A pair built from two given class-conditional models, e.g. oracle
    /// distributions.
    pub fn from_models(
        kind: ProxyKind,
        p: GaussianClassConditional,
        pr: GaussianClassConditional,
        fitted_on: impl Into<String>,
    ) -> Result<Self> {
        if p.n_labels() != pr.n_labels() || p.dim() != pr.dim() {
            return Err(Error::InvalidArgument("P and P_r disagree in shape".into()));
        }
        Ok(Self {
            kind,
            n_classes: p.n_labels(),
            fitted_on: fitted_on.into(),
            reversed: false,
            sketch: None,
            model: PairModel::Plain { p, pr },
        })
    }

    pub fn kind(&self) -> ProxyKind {
        self.kind
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn fitted_on(&self) -> &str {
        &self.fitted_on
    }

    pub fn is_dirac(&self) -> bool {
        matches!(self.model, PairModel::Dirac { .. })
    }

    /// The pair with P and P_r exchanged.
    pub fn reversed(&self) -> Result<Self> {
        if self.is_dirac() {
            return Err(Error::ProbitLevelOnly("empirical"));
        }
        let mut out = self.clone();
        out.reversed = !out.reversed;
        Ok(out)
    }

    fn project<'a>(&self, x: &'a [f64]) -> Result<std::borrow::Cow<'a, [f64]>> {
        match &self.sketch {
            Some((_, op)) => Ok(std::borrow::Cow::Owned(op.apply(x)?)),
            None => Ok(std::borrow::Cow::Borrowed(x)),
        }
    }

    /// `(log P(·|x), log P_r(·|x))` for Gaussian kinds.
    pub fn log_posteriors(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let x = self.project(x)?;
        let (lp, lpr) = match &self.model {
            PairModel::Plain { p, pr } => (p.log_posterior(&x)?, pr.log_posterior(&x)?),
            PairModel::Mix {
                retain,
                forget,
                pi_f,
                priors,
            } => {
                let mut joint = Vec::with_capacity(self.n_classes);
                for y in 0..self.n_classes {
                    let mut log_px = f64::NEG_INFINITY;
                    if pi_f[y] < 1.0 {
                        log_px = retain.log_density(y, &x)? + (1.0 - pi_f[y]).ln();
                    }
                    if pi_f[y] > 0.0 {
                        let f = forget.as_ref().expect("forget model exists when π_f > 0");
                        log_px = log_add(log_px, f.log_density(y, &x)? + pi_f[y].ln());
                    }
                    joint.push(if priors[y] > 0.0 {
                        log_px + priors[y].ln()
                    } else {
                        f64::NEG_INFINITY
                    });
                }
                (log_softmax(&joint)?, retain.log_posterior(&x)?)
            }
            PairModel::Doubled { joint } => {
                let lj = joint.log_joint(&x)?;
                let by_class: Vec<f64> = (0..self.n_classes)
                    .map(|y| log_add(lj[2 * y], lj[2 * y + 1]))
                    .collect();
                let retain_row: Vec<f64> = (0..self.n_classes).map(|y| lj[2 * y]).collect();
                (log_softmax(&by_class)?, log_softmax(&retain_row)?)
            }
            PairModel::Dirac { .. } => return Err(Error::ProbitLevelOnly(self.kind.name())),
        };
        Ok(if self.reversed { (lpr, lp) } else { (lp, lpr) })
    }

    /// ΔM(x). Dirac kinds are keyed by `sample_id`; DIR-2C has no
    /// base-independent shift and must go through [`shifted_logits`].
    ///
    /// [`shifted_logits`]: ProxyPair::shifted_logits
    pub fn delta_m(&self, x: &[f64], sample_id: Option<u64>) -> Result<LogitVec> {
        match (&self.model, self.kind) {
            (PairModel::Dirac { table }, ProxyKind::Dir) => {
                LogitVec::new(table.delta_m(self.n_classes, sample_id))
            }
            (PairModel::Dirac { .. }, _) => Err(Error::ProbitLevelOnly(self.kind.name())),
            _ => {
                let (lp, lpr) = self.log_posteriors(x)?;
                LogitVec::new(log_ratio(&lp, &lpr)?)
            }
        }
    }

    /// `base + η·ΔM(x)`; exactly `base` when `η = 0`.
    pub fn shifted_logits(
        &self,
        base: &[f64],
        x: &[f64],
        sample_id: Option<u64>,
        eta: f64,
    ) -> Result<LogitVec> {
        shifted_logits(self, base, x, sample_id, eta)
    }

    /// `(log P(x|·), log P_r(x|·))` class-conditional densities, for
    /// Gaussian kinds fitted on raw features.
    pub fn log_class_conditionals(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if self.sketch.is_some() {
            return Err(Error::InvalidArgument(
                "class-conditional densities of a sketched proxy live in the sketch space".into(),
            ));
        }
        let c = self.n_classes;
        let (lp, lpr) = match &self.model {
            PairModel::Plain { p, pr } => {
                let mut a = Vec::with_capacity(c);
                let mut b = Vec::with_capacity(c);
                for y in 0..c {
                    a.push(p.log_density(y, x)?);
                    b.push(pr.log_density(y, x)?);
                }
                (a, b)
            }
            PairModel::Mix {
                retain,
                forget,
                pi_f,
                ..
            } => {
                let mut a = Vec::with_capacity(c);
                let mut b = Vec::with_capacity(c);
                for y in 0..c {
                    let r = retain.log_density(y, x)?;
                    let mut mix = f64::NEG_INFINITY;
                    if pi_f[y] < 1.0 {
                        mix = r + (1.0 - pi_f[y]).ln();
                    }
                    if pi_f[y] > 0.0 {
                        let f = forget.as_ref().expect("forget model exists when π_f > 0");
                        mix = log_add(mix, f.log_density(y, x)? + pi_f[y].ln());
                    }
                    a.push(mix);
                    b.push(r);
                }
                (a, b)
            }
            PairModel::Doubled { joint } => {
                let priors = joint.priors();
                let mut a = Vec::with_capacity(c);
                let mut b = Vec::with_capacity(c);
                for y in 0..c {
                    let (wr, wf) = (priors[2 * y], priors[2 * y + 1]);
                    let total = wr + wf;
                    let dr = joint.log_density(2 * y, x)?;
                    let df = joint.log_density(2 * y + 1, x)?;
                    let mut mix = f64::NEG_INFINITY;
                    if wr > 0.0 {
                        mix = dr + (wr / total).ln();
                    }
                    if wf > 0.0 {
                        mix = log_add(mix, df + (wf / total).ln());
                    }
                    a.push(mix);
                    b.push(if wr > 0.0 { dr } else { f64::NEG_INFINITY });
                }
                (a, b)
            }
            PairModel::Dirac { .. } => return Err(Error::ProbitLevelOnly(self.kind.name())),
        };
        Ok(if self.reversed { (lpr, lp) } else { (lp, lpr) })
    }

    pub fn to_json(&self) -> String {
        let env = Envelope {
            format: FORMAT_TAG.into(),
            version: FORMAT_VERSION,
            kind: self.kind,
            n_classes: self.n_classes,
            fitted_on: self.fitted_on.clone(),
            reversed: self.reversed,
            sketch: self.sketch.as_ref().map(|s| s.0.clone()),
            model: self.model.clone(),
        };
        serde_json::to_string_pretty(&env).expect("proxy serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let env: Envelope = serde_json::from_str(text)?;
        if env.format != FORMAT_TAG {
            return Err(Error::parse(
                "proxy",
                format!("unexpected format tag `{}`", env.format),
            ));
        }
        if env.version != FORMAT_VERSION {
            return Err(Error::parse(
                "proxy",
                format!("unsupported version {}", env.version),
            ));
        }
        let sketch = match env.sketch {
            Some(spec) => {
                let op = make_sketch(spec.input_dim, spec.k, spec.seed)?;
                Some((spec, op))
            }
            None => None,
        };
        Ok(Self {
            kind: env.kind,
            n_classes: env.n_classes,
            fitted_on: env.fitted_on,
            reversed: env.reversed,
            sketch,
            model: env.model,
        })
    }
}

impl PosteriorPair for ProxyPair {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn log_posteriors(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        ProxyPair::log_posteriors(self, x)
    }

    fn log_class_conditionals(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        ProxyPair::log_class_conditionals(self, x)
    }

    fn shift(&self, base: &[f64], x: &[f64], sample_id: Option<u64>) -> Result<(Vec<f64>, bool)> {
        match (&self.model, self.kind) {
            (PairModel::Dirac { table }, ProxyKind::Dir2c) => {
                lse(base)?;
                Ok((table.delta_m_2c(base, sample_id)?, false))
            }
            (PairModel::Dirac { table }, _) => {
                Ok((table.delta_m(self.n_classes, sample_id), false))
            }
            _ => Ok((self.delta_m(x, sample_id)?.into_inner(), true)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{build_scenario, Preset, Scenario};
    use crate::numkit::softmax;

    fn subclass_setup() -> (LabeledDataset, ForgetSplit) {
        let ds = Preset::Subclass.spec(3).generate(150).unwrap();
        let split = build_scenario(
            &ds,
            Scenario::Subclass {
                class: 0,
                subclass: 1,
            },
        )
        .unwrap();
        (ds, split)
    }

    #[test]
    fn kind_names_round_trip() {
        for k in ProxyKind::ALL {
            assert_eq!(k.name().parse::<ProxyKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.name()));
        }
    }

    #[test]
    fn lda_means_near_truth() {
        let spec = crate::datagen::GaussianMixtureSpec {
            dim: 1,
            n_classes: 2,
            seed: 9,
            components: vec![
                crate::datagen::MixtureComponent {
                    class: 0,
                    subclass: 0,
                    mean: vec![-1.0],
                    cov: vec![vec![1.0]],
                    weight: 1.0,
                },
                crate::datagen::MixtureComponent {
                    class: 1,
                    subclass: 0,
                    mean: vec![1.0],
                    cov: vec![vec![1.0]],
                    weight: 1.0,
                },
            ],
        };
        let n = 2000;
        let ds = spec.generate(n).unwrap();
        let split = ForgetSplit::from_forget_ids(&ds, []).unwrap();
        let pair = fit(ProxyKind::Lda, &ds, &split, &FitOptions::default()).unwrap();
        let PairModel::Plain { p, .. } = &pair.model else {
            panic!()
        };
        let bound = 3.0 / (n as f64).sqrt();
        assert!((p.means()[0].as_ref().unwrap()[0] + 1.0).abs() < bound);
        assert!((p.means()[1].as_ref().unwrap()[0] - 1.0).abs() < bound);
    }

    #[test]
    fn empty_forget_set_gives_zero_shift() {
        let (ds, _) = subclass_setup();
        let split = ForgetSplit::from_forget_ids(&ds, []).unwrap();
        for kind in ProxyKind::ALL {
            let pair = fit(kind, &ds, &split, &FitOptions::default()).unwrap();
            let base = [0.4, -0.2];
            for i in [0, 17, 200] {
                let out = pair
                    .shifted_logits(&base, ds.row(i), Some(ds.id(i)), 1.0)
                    .unwrap();
                assert!(
                    out.iter().zip(&base).all(|(a, b)| (a - b).abs() < 1e-12),
                    "{kind} moved logits"
                );
            }
        }
    }

    #[test]
    fn lda_shift_matches_direct_posteriors() {
        let (ds, split) = subclass_setup();
        let pair = fit(ProxyKind::Lda, &ds, &split, &FitOptions::default()).unwrap();
        // Independent oracle: per-class sample means and pooled scatter,
        // posterior from the explicit 2-d pdf.
        let stats = |keep: &dyn Fn(usize) -> bool| {
            let mut sums = vec![[0.0; 2]; 2];
            let mut counts = [0usize; 2];
            for i in (0..ds.len()).filter(|&i| keep(i)) {
                let y = ds.label(i);
                counts[y] += 1;
                sums[y][0] += ds.row(i)[0];
                sums[y][1] += ds.row(i)[1];
            }
            let means: Vec<[f64; 2]> = (0..2)
                .map(|y| [sums[y][0] / counts[y] as f64, sums[y][1] / counts[y] as f64])
                .collect();
            (means, counts)
        };
        let (m_full, n_full) = stats(&|_| true);
        let (m_ret, n_ret) = stats(&|i| !split.is_forget(ds.id(i)));
        let mut s = [[0.0; 2]; 2];
        for i in 0..ds.len() {
            let y = ds.label(i);
            let d = [ds.row(i)[0] - m_full[y][0], ds.row(i)[1] - m_full[y][1]];
            for a in 0..2 {
                for b in 0..2 {
                    s[a][b] += d[a] * d[b];
                }
            }
        }
        let n = ds.len() as f64;
        let ridge = 1e-6 * (s[0][0] + s[1][1]) / (n - 2.0) / 2.0;
        let cov = [
            [s[0][0] / (n - 2.0) + ridge, s[0][1] / (n - 2.0)],
            [s[1][0] / (n - 2.0), s[1][1] / (n - 2.0) + ridge],
        ];
        let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
        let inv = [
            [cov[1][1] / det, -cov[0][1] / det],
            [-cov[1][0] / det, cov[0][0] / det],
        ];
        let post = |means: &[[f64; 2]], counts: [usize; 2], x: [f64; 2]| -> [f64; 2] {
            let total = (counts[0] + counts[1]) as f64;
            let w: Vec<f64> = (0..2)
                .map(|y| {
                    let d = [x[0] - means[y][0], x[1] - means[y][1]];
                    let q = d[0] * (inv[0][0] * d[0] + inv[0][1] * d[1])
                        + d[1] * (inv[1][0] * d[0] + inv[1][1] * d[1]);
                    counts[y] as f64 / total * (-0.5 * q).exp()
                })
                .collect();
            [w[0] / (w[0] + w[1]), w[1] / (w[0] + w[1])]
        };
        let x = [-1.0, -1.6];
        let p = post(&m_full, n_full, x);
        let pr = post(&m_ret, n_ret, x);
        let dm = pair.delta_m(&x, None).unwrap();
        assert!(dm.iter().any(|v| v.abs() > 1e-3));
        for y in 0..2 {
            assert!(
                (dm[y] - (pr[y].ln() - p[y].ln())).abs() < 1e-9,
                "{y}: {} vs oracle",
                dm[y]
            );
        }
    }

    #[test]
    fn mixture_consistency() {
        let (ds, split) = subclass_setup();
        for kind in [ProxyKind::LdaMix, ProxyKind::QdaMix] {
            let pair = fit(kind, &ds, &split, &FitOptions::default()).unwrap();
            let PairModel::Mix {
                retain,
                forget,
                pi_f,
                priors,
            } = &pair.model
            else {
                panic!()
            };
            let forget = forget.as_ref().unwrap();
            for x in [[0.0, 0.0], [-1.0, -1.6], [2.0, 1.0]] {
                let dens: Vec<f64> = (0..2)
                    .map(|y| {
                        (1.0 - pi_f[y]) * retain.log_density(y, &x).unwrap().exp()
                            + pi_f[y] * forget.log_density(y, &x).unwrap().exp()
                    })
                    .collect();
                let z: f64 = (0..2).map(|y| dens[y] * priors[y]).sum();
                let (lp, _) = pair.log_posteriors(&x).unwrap();
                for y in 0..2 {
                    assert!((lp[y].exp() - dens[y] * priors[y] / z).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn doubled_priors_and_marginals() {
        let ds = Preset::Subclass.spec(1).generate(100).unwrap();
        // forget half of class 0
        let forget: Vec<u64> = (0..ds.len())
            .filter(|&i| ds.label(i) == 0)
            .map(|i| ds.id(i))
            .enumerate()
            .filter(|(k, _)| k % 2 == 0)
            .map(|(_, id)| id)
            .collect();
        let split = ForgetSplit::from_forget_ids(&ds, forget).unwrap();
        let pair = fit(ProxyKind::Lda2c, &ds, &split, &FitOptions::default()).unwrap();
        let PairModel::Doubled { joint } = &pair.model else {
            panic!()
        };
        assert_eq!(joint.priors(), &[0.25, 0.25, 0.5, 0.0]);
        let (lp, lpr) = pair.log_posteriors(&[0.1, 0.2]).unwrap();
        let sum = |v: &[f64]| v.iter().map(|a| a.exp()).sum::<f64>();
        assert!((sum(&lp) - 1.0).abs() < 1e-12 && (sum(&lpr) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dirac_shifts() {
        let ds = Preset::Blobs.spec(0).generate(30).unwrap();
        let split = build_scenario(
            &ds,
            Scenario::Random {
                n_forget: 10,
                seed: 1,
            },
        )
        .unwrap();
        let pair = fit(ProxyKind::Dir, &ds, &split, &FitOptions::default()).unwrap();
        let c = ds.n_classes();
        for i in 0..ds.len() {
            let id = ds.id(i);
            let dm = pair.delta_m(ds.row(i), Some(id)).unwrap();
            if split.is_forget(id) {
                assert_eq!(dm[ds.label(i)], f64::NEG_INFINITY);
            } else {
                assert_eq!(&dm[..], &vec![0.0; c][..]);
            }
        }
        assert_eq!(
            &pair.delta_m(ds.row(0), Some(99_999)).unwrap()[..],
            &vec![0.0; c][..]
        );
        let pair2 = fit(ProxyKind::Dir2c, &ds, &split, &FitOptions::default()).unwrap();
        assert!(matches!(
            pair2.delta_m(ds.row(0), Some(0)),
            Err(Error::ProbitLevelOnly(_))
        ));
    }

    #[test]
    fn eta_zero_is_exact() {
        let (ds, split) = subclass_setup();
        let base = [0.123_456_789, -3.3];
        for kind in ProxyKind::ALL {
            let pair = fit(kind, &ds, &split, &FitOptions::default()).unwrap();
            let id = *split.forget_ids.iter().next().unwrap();
            let out = pair
                .shifted_logits(&base, ds.row(0), Some(id), 0.0)
                .unwrap();
            assert_eq!(&out[..], &base[..]);
        }
    }

    #[test]
    fn class_scenario_lda_excludes_forgotten_class() {
        let ds = Preset::Blobs.spec(4).generate(40).unwrap();
        let split = build_scenario(&ds, Scenario::Class { class: 1 }).unwrap();
        let pair = fit(ProxyKind::Lda, &ds, &split, &FitOptions::default()).unwrap();
        let (lp, lpr) = pair.log_posteriors(ds.row(0)).unwrap();
        assert!(lp.iter().all(|v| v.is_finite()));
        assert_eq!(lpr[1], f64::NEG_INFINITY);
        let base = vec![0.0; ds.n_classes()];
        let p = softmax(&pair.shifted_logits(&base, ds.row(0), None, 0.5).unwrap()).unwrap();
        assert_eq!(p[1], 0.0);
    }

    #[test]
    fn single_retain_sample_is_rejected() {
        let ds = Preset::Subclass.spec(3).generate(20).unwrap();
        let class0: Vec<u64> = (0..ds.len())
            .filter(|&i| ds.label(i) == 0)
            .map(|i| ds.id(i))
            .collect();
        let split = ForgetSplit::from_forget_ids(&ds, class0[1..].iter().copied()).unwrap();
        assert!(matches!(
            fit(ProxyKind::Lda, &ds, &split, &FitOptions::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn permutation_invariance() {
        let (ds, split) = subclass_setup();
        let mut order: Vec<usize> = (0..ds.len()).collect();
        order.reverse();
        order.swap(3, 100);
        let shuffled = ds.select(&order);
        let split2 =
            ForgetSplit::from_forget_ids(&shuffled, split.forget_ids.iter().copied()).unwrap();
        for kind in [
            ProxyKind::Lda,
            ProxyKind::Qda,
            ProxyKind::LdaMix,
            ProxyKind::QdaMix,
            ProxyKind::Lda2c,
        ] {
            let a = fit(kind, &ds, &split, &FitOptions::default()).unwrap();
            let b = fit(kind, &shuffled, &split2, &FitOptions::default()).unwrap();
            for x in [[0.0, 0.0], [1.0, -1.0]] {
                let (pa, ra) = a.log_posteriors(&x).unwrap();
                let (pb, rb) = b.log_posteriors(&x).unwrap();
                for k in 0..2 {
                    assert!((pa[k] - pb[k]).abs() < 1e-12 && (ra[k] - rb[k]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn json_round_trip_all_kinds() {
        let (ds, split) = subclass_setup();
        let mut opts = FitOptions::default();
        for kind in ProxyKind::ALL {
            let pair = fit(kind, &ds, &split, &opts).unwrap();
            let back = ProxyPair::from_json(&pair.to_json()).unwrap();
            assert_eq!(back, pair);
            if !kind.is_dirac() {
                assert_eq!(
                    back.delta_m(&[0.2, 0.1], None).unwrap(),
                    pair.delta_m(&[0.2, 0.1], None).unwrap()
                );
            }
        }
        opts.sketch_dim = Some(1);
        let pair = fit(ProxyKind::Lda, &ds, &split, &opts).unwrap();
        let back = ProxyPair::from_json(&pair.to_json()).unwrap();
        assert_eq!(
            back.delta_m(&[0.2, 0.1], None).unwrap(),
            pair.delta_m(&[0.2, 0.1], None).unwrap()
        );
        assert!(
            ProxyPair::from_json(&pair.to_json().replace("\"version\": 1", "\"version\": 9"))
                .is_err()
        );
    }

    #[test]
    fn reversed_swaps_sides() {
        let (ds, split) = subclass_setup();
        let pair = fit(ProxyKind::Lda, &ds, &split, &FitOptions::default()).unwrap();
        let rev = pair.reversed().unwrap();
        let a = pair.delta_m(&[0.5, 0.5], None).unwrap();
        let b = rev.delta_m(&[0.5, 0.5], None).unwrap();
        assert!(a.iter().zip(b.iter()).all(|(x, y)| (x + y).abs() < 1e-15));
    }
}
