use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::LogitModel;
use crate::numkit::{argmax, kl_to_log, log_softmax, ProbVec};

use super::loss::{batch_loss, batch_loss_and_grad, LossKind, Target};
use super::MlpModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Optimizer {
    SgdMomentum { beta: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    /// Multiplicative learning-rate decay per epoch.
    pub lr_decay: f64,
    pub loss: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            epochs: 20,
            batch_size: 64,
            seed: 0,
            optimizer: Optimizer::adam(),
            lr_decay: 0.95,
            loss: LossKind::CrossEntropy,
        }
    }
}

impl TrainConfig {
    /// Checks ranges. Zero epochs is accepted and leaves the model untouched.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad(format!(
                "learning rate {} must be finite and non-negative",
                self.learning_rate
            ));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad(format!("lr decay {} must be in (0, 1]", self.lr_decay));
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        match self.optimizer {
            Optimizer::SgdMomentum { beta } if !(0.0..1.0).contains(&beta) => {
                bad(format!("momentum {beta} must be in [0, 1)"))
            }
            Optimizer::Adam { beta1, beta2, eps }
                if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(eps > 0.0) =>
            {
                bad("adam needs β₁, β₂ in [0, 1) and ε > 0".into())
            }
            _ => Ok(()),
        }
    }

    pub fn with_loss(&self, loss: LossKind) -> Self {
        Self {
            loss,
            ..self.clone()
        }
    }
}

/// Metrics recorded after one epoch. KL fields are present only when a
/// reference model was supplied; the CE fields are always there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub acc_t: Option<f64>,
    pub acc_f: Option<f64>,
    pub kl_t: Option<f64>,
    pub kl_f: Option<f64>,
    pub ce_t: Option<f64>,
    pub ce_f: Option<f64>,
    /// Wall-clock since the start of the run.
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TrainTrace {
    pub epochs: Vec<EpochRecord>,
}

impl TrainTrace {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    pub fn seconds(&self) -> f64 {
        self.last().map_or(0.0, |e| e.seconds)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Held-out sets scored after every epoch.
#[derive(Debug, Clone)]
pub struct Monitor {
    test: LabeledDataset,
    forget: LabeledDataset,
    ref_test: Option<Vec<ProbVec>>,
    ref_forget: Option<Vec<ProbVec>>,
}

/// Scores of a model on the monitor's sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub acc_t: Option<f64>,
    pub acc_f: Option<f64>,
    pub kl_t: Option<f64>,
    pub kl_f: Option<f64>,
    pub ce_t: Option<f64>,
    pub ce_f: Option<f64>,
}

struct SetScore {
    acc: f64,
    ce: f64,
    kl: Option<f64>,
}

impl Monitor {
    pub fn new(
        test: LabeledDataset,
        forget: LabeledDataset,
        reference: Option<&dyn LogitModel>,
    ) -> Result<Self> {
        let (ref_test, ref_forget) = match reference {
            Some(r) => (Some(r.probits_on(&test)?), Some(r.probits_on(&forget)?)),
            None => (None, None),
        };
        Ok(Self {
            test,
            forget,
            ref_test,
            ref_forget,
        })
    }

    /// Monitor with reference probits already computed, one per row.
    pub fn with_reference_probits(
        test: LabeledDataset,
        forget: LabeledDataset,
        ref_test: Vec<ProbVec>,
        ref_forget: Vec<ProbVec>,
    ) -> Result<Self> {
        for (ds, r) in [(&test, &ref_test), (&forget, &ref_forget)] {
            if ds.len() != r.len() {
                return Err(Error::DimensionMismatch {
                    expected: ds.len(),
                    got: r.len(),
                });
            }
        }
        Ok(Self {
            test,
            forget,
            ref_test: Some(ref_test),
            ref_forget: Some(ref_forget),
        })
    }

    pub fn has_reference(&self) -> bool {
        self.ref_test.is_some()
    }

    pub fn test(&self) -> &LabeledDataset {
        &self.test
    }

    pub fn forget(&self) -> &LabeledDataset {
        &self.forget
    }

    pub fn reference_test(&self) -> Option<&[ProbVec]> {
        self.ref_test.as_deref()
    }

    pub fn reference_forget(&self) -> Option<&[ProbVec]> {
        self.ref_forget.as_deref()
    }

    fn score(
        ds: &LabeledDataset,
        reference: Option<&[ProbVec]>,
        logits: &[Vec<f64>],
    ) -> Result<Option<SetScore>> {
        if ds.is_empty() {
            return Ok(None);
        }
        let n = ds.len() as f64;
        let (mut hits, mut ce, mut kl) = (0usize, 0.0, 0.0);
        for (i, z) in logits.iter().enumerate() {
            let lp = log_softmax(z)?;
            hits += usize::from(argmax(z) == ds.label(i));
            ce -= lp[ds.label(i)];
            if let Some(r) = reference {
                kl += match kl_to_log(&r[i], &lp) {
                    Ok(v) => v,
                    Err(Error::AbsoluteContinuity { .. }) => f64::INFINITY,
                    Err(e) => return Err(e),
                };
            }
        }
        Ok(Some(SetScore {
            acc: hits as f64 / n,
            ce: ce / n,
            kl: reference.map(|_| kl / n),
        }))
    }

    /// Scores precomputed logits on the test and forget sets, in row order.
    /// A KL is `+inf` when the candidate rules out a class the reference
    /// allows.
    pub fn snapshot_from_logits(
        &self,
        test_logits: &[Vec<f64>],
        forget_logits: &[Vec<f64>],
    ) -> Result<Snapshot> {
        let t = Self::score(&self.test, self.ref_test.as_deref(), test_logits)?;
        let f = Self::score(&self.forget, self.ref_forget.as_deref(), forget_logits)?;
        Ok(Snapshot {
            acc_t: t.as_ref().map(|s| s.acc),
            acc_f: f.as_ref().map(|s| s.acc),
            kl_t: t.as_ref().and_then(|s| s.kl),
            kl_f: f.as_ref().and_then(|s| s.kl),
            ce_t: t.as_ref().map(|s| s.ce),
            ce_f: f.as_ref().map(|s| s.ce),
        })
    }

    pub fn snapshot(&self, model: &dyn LogitModel) -> Result<Snapshot> {
        let logits = |ds: &LabeledDataset| -> Result<Vec<Vec<f64>>> {
            Ok(model
                .logits_on(ds)?
                .into_iter()
                .map(|z| z.into_inner())
                .collect())
        };
        self.snapshot_from_logits(&logits(&self.test)?, &logits(&self.forget)?)
    }
}

/// Index of the epoch with the smallest `KL_f`; ties go to the earliest.
pub fn select_best_epoch(trace: &TrainTrace) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, e) in trace.epochs.iter().enumerate() {
        let kl = e.kl_f.ok_or(Error::MissingReference)?;
        if best.is_none_or(|(_, b)| kl < b) {
            best = Some((i, kl));
        }
    }
    best.map(|(i, _)| i).ok_or(Error::MissingReference)
}

/// Optimizer state carried across epochs.
struct Stepper {
    opt: Optimizer,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Stepper {
    fn new(opt: Optimizer, n: usize) -> Self {
        Self {
            opt,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        match self.opt {
            Optimizer::SgdMomentum { beta } => {
                for ((p, m), g) in params.iter_mut().zip(&mut self.m).zip(grad) {
                    *m = beta * *m + g;
                    *p -= lr * *m;
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let c1 = 1.0 - beta1.powi(self.t);
                let c2 = 1.0 - beta2.powi(self.t);
                for (((p, m), v), g) in params
                    .iter_mut()
                    .zip(&mut self.m)
                    .zip(&mut self.v)
                    .zip(grad)
                {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                }
            }
        }
    }
}

/// A sequence of training phases sharing one clock and epoch counter.
pub(crate) struct Run<'m> {
    pub(crate) monitor: Option<&'m Monitor>,
    start: Instant,
    trace: TrainTrace,
}

impl<'m> Run<'m> {
    pub(crate) fn new(monitor: Option<&'m Monitor>) -> Self {
        Self {
            monitor,
            start: Instant::now(),
            trace: TrainTrace::default(),
        }
    }

    pub(crate) fn finish(self) -> TrainTrace {
        self.trace
    }

    pub(crate) fn phase(
        &mut self,
        model: &mut MlpModel,
        ds: &LabeledDataset,
        soft: Option<&[ProbVec]>,
        cfg: &TrainConfig,
    ) -> Result<()> {
        cfg.validate()?;
        if cfg.epochs == 0 {
            return Ok(());
        }
        if ds.is_empty() {
            return Err(Error::Empty("training set"));
        }
        if ds.dim() != model.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: model.input_dim(),
                got: ds.dim(),
            });
        }
        let targets: Vec<Target> = match (cfg.loss, soft) {
            (LossKind::KlToTargets, Some(t)) => {
                if t.len() != ds.len() {
                    return Err(Error::DimensionMismatch {
                        expected: ds.len(),
                        got: t.len(),
                    });
                }
                t.iter().map(|p| Target::Probs(p)).collect()
            }
            (LossKind::KlToTargets, None) | (_, None) => {
                ds.labels().iter().map(|&y| Target::Label(y)).collect()
            }
            (_, Some(_)) => {
                return Err(Error::InvalidArgument(
                    "soft targets need the KL loss".into(),
                ))
            }
        };
        let rows: Vec<&[f64]> = ds.rows().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut stepper = Stepper::new(cfg.optimizer, model.n_params());
        let mut order: Vec<usize> = (0..ds.len()).collect();
        let mut lr = cfg.learning_rate;
        for _ in 0..cfg.epochs {
            let epoch = self.trace.len();
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for batch in order.chunks(cfg.batch_size) {
                let xs: Vec<&[f64]> = batch.iter().map(|&i| rows[i]).collect();
                let ts: Vec<Target> = batch.iter().map(|&i| targets[i]).collect();
                let (loss, grad) = batch_loss_and_grad(model, &xs, &ts, cfg.loss)
                    .map_err(|e| diverged(e, epoch))?;
                if !loss.is_finite() {
                    return Err(Error::Diverged { epoch, loss });
                }
                total += loss * batch.len() as f64;
                stepper.step(model.params_mut(), &grad, lr);
            }
            let loss = total / ds.len() as f64;
            if model.params().iter().any(|p| !p.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    loss: f64::NAN,
                });
            }
            let snap = match self.monitor {
                Some(m) => m.snapshot(model).map_err(|e| diverged(e, epoch))?,
                None => Snapshot {
                    acc_t: None,
                    acc_f: None,
                    kl_t: None,
                    kl_f: None,
                    ce_t: None,
                    ce_f: None,
                },
            };
            self.trace.epochs.push(EpochRecord {
                epoch,
                loss,
                acc_t: snap.acc_t,
                acc_f: snap.acc_f,
                kl_t: snap.kl_t,
                kl_f: snap.kl_f,
                ce_t: snap.ce_t,
                ce_f: snap.ce_f,
                seconds: self.start.elapsed().as_secs_f64(),
            });
            lr *= cfg.lr_decay;
        }
        Ok(())
    }
}

fn diverged(e: Error, epoch: usize) -> Error {
    match e {
        Error::NonFinite(_) => Error::Diverged {
            epoch,
            loss: f64::NAN,
        },
        other => other,
    }
}

/// Trains with the loss named in `cfg` against hard labels, or against
/// `soft` targets for the KL loss.
pub fn train(
    model: &mut MlpModel,
    ds: &LabeledDataset,
    soft: Option<&[ProbVec]>,
    cfg: &TrainConfig,
    monitor: Option<&Monitor>,
) -> Result<TrainTrace> {
    let mut run = Run::new(monitor);
    run.phase(model, ds, soft, cfg)?;
    Ok(run.finish())
}

pub fn train_ce(
    model: &mut MlpModel,
    ds: &LabeledDataset,
    cfg: &TrainConfig,
    monitor: Option<&Monitor>,
) -> Result<TrainTrace> {
    train(
        model,
        ds,
        None,
        &cfg.with_loss(LossKind::CrossEntropy),
        monitor,
    )
}

/// Fine-tunes `student` towards per-row `teacher` probits by minimizing
/// `E[KL(teacher‖softmax(student))]`.
pub fn distill(
    student: &mut MlpModel,
    teacher: &[ProbVec],
    ds: &LabeledDataset,
    cfg: &TrainConfig,
    monitor: Option<&Monitor>,
) -> Result<TrainTrace> {
    train(
        student,
        ds,
        Some(teacher),
        &cfg.with_loss(LossKind::KlToTargets),
        monitor,
    )
}

/// Mean loss of `model` over `ds` against its labels or `soft` targets.
pub fn dataset_loss(
    model: &MlpModel,
    ds: &LabeledDataset,
    soft: Option<&[ProbVec]>,
    kind: LossKind,
) -> Result<f64> {
    let xs: Vec<&[f64]> = ds.rows().collect();
    let ts: Vec<Target> = match soft {
        Some(t) => t.iter().map(|p| Target::Probs(p)).collect(),
        None => ds.labels().iter().map(|&y| Target::Label(y)).collect(),
    };
    batch_loss(model, &xs, &ts, kind)
}
