use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{lse, softmax, ProbVec};

use super::MlpModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    KlToTargets,
    NegatedCrossEntropy,
}

/// What a single sample is fitted to.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Label(usize),
    Probs(&'a [f64]),
}

/// Loss of one sample and its gradient with respect to the logits.
pub fn loss_and_dlogits(
    kind: LossKind,
    logits: &[f64],
    target: Target<'_>,
) -> Result<(f64, Vec<f64>)> {
    let norm = lse(logits)?;
    let p = softmax(logits)?;
    match (kind, target) {
        (LossKind::CrossEntropy | LossKind::NegatedCrossEntropy, Target::Label(y)) => {
            if y >= logits.len() {
                return Err(Error::InvalidArgument(format!("label {y} out of range")));
            }
            let sign = if kind == LossKind::CrossEntropy {
                1.0
            } else {
                -1.0
            };
            let mut g = p.into_inner();
            g[y] -= 1.0;
            g.iter_mut().for_each(|v| *v *= sign);
            Ok((sign * (norm - logits[y]), g))
        }
        (LossKind::KlToTargets, Target::Probs(t)) => {
            if t.len() != logits.len() {
                return Err(Error::DimensionMismatch {
                    expected: logits.len(),
                    got: t.len(),
                });
            }
            let mut loss = 0.0;
            for (ti, zi) in t.iter().zip(logits) {
                if *ti > 0.0 {
                    loss += ti * (ti.ln() - (zi - norm));
                }
            }
            Ok((loss, p.iter().zip(t).map(|(pi, ti)| pi - ti).collect()))
        }
        (LossKind::KlToTargets, Target::Label(y)) => {
            if y >= logits.len() {
                return Err(Error::InvalidArgument(format!("label {y} out of range")));
            }
            loss_and_dlogits(
                kind,
                logits,
                Target::Probs(&ProbVec::one_hot(logits.len(), y)),
            )
        }
        (_, Target::Probs(_)) => Err(Error::InvalidArgument(
            "cross-entropy losses need hard labels".into(),
        )),
    }
}

/// Mean loss over a batch and its gradient with respect to the parameters.
pub fn batch_loss_and_grad(
    model: &MlpModel,
    xs: &[&[f64]],
    targets: &[Target<'_>],
    kind: LossKind,
) -> Result<(f64, Vec<f64>)> {
    if xs.is_empty() || xs.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            got: targets.len(),
        });
    }
    let mut grad = vec![0.0; model.n_params()];
    let mut total = 0.0;
    for (x, t) in xs.iter().zip(targets) {
        let tape = model.forward_tape(x)?;
        let (loss, dz) = loss_and_dlogits(kind, &tape.logits, *t)?;
        total += loss;
        model.backward(&tape, &dz, &mut grad);
    }
    let n = xs.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((total / n, grad))
}

/// Mean loss over a batch, without gradients.
pub fn batch_loss(
    model: &MlpModel,
    xs: &[&[f64]],
    targets: &[Target<'_>],
    kind: LossKind,
) -> Result<f64> {
    let mut total = 0.0;
    for (x, t) in xs.iter().zip(targets) {
        total += loss_and_dlogits(kind, &model.forward_tape(x)?.logits, *t)?.0;
    }
    Ok(total / xs.len().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_targets(rng: &mut ChaCha8Rng, n: usize, c: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| {
                let mut t: Vec<f64> = (0..c).map(|_| rng.random::<f64>()).collect();
                if i % 2 == 0 {
                    t[0] = 0.0;
                }
                let s: f64 = t.iter().sum();
                t.iter().map(|v| v / s).collect()
            })
            .collect()
    }

    fn check_gradient(model: &MlpModel, xs: &[&[f64]], targets: &[Target<'_>], kind: LossKind) {
        let (_, grad) = batch_loss_and_grad(model, xs, targets, kind).unwrap();
        let h = 1e-5;
        for k in 0..model.n_params() {
            let mut plus = model.clone();
            plus.params_mut()[k] += h;
            let mut minus = model.clone();
            minus.params_mut()[k] -= h;
            let fd = (batch_loss(&plus, xs, targets, kind).unwrap()
                - batch_loss(&minus, xs, targets, kind).unwrap())
                / (2.0 * h);
            let scale = grad[k].abs().max(fd.abs()).max(1e-6);
            assert!(
                (grad[k] - fd).abs() / scale < 1e-4,
                "param {k}: {} vs {fd}",
                grad[k]
            );
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..5 {
            let model = MlpModel::new(&[2, 8, 3], trial).unwrap();
            let rows: Vec<Vec<f64>> = (0..6)
                .map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
                .collect();
            let xs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
            let labels: Vec<Target> = (0..6).map(|i| Target::Label(i % 3)).collect();
            check_gradient(&model, &xs, &labels, LossKind::CrossEntropy);
            let probs = random_targets(&mut rng, 6, 3);
            let soft: Vec<Target> = probs.iter().map(|p| Target::Probs(p)).collect();
            check_gradient(&model, &xs, &soft, LossKind::KlToTargets);
        }
    }

    #[test]
    fn kl_to_one_hot_is_cross_entropy() {
        let z = [0.3, -1.2, 2.0];
        let ce = loss_and_dlogits(LossKind::CrossEntropy, &z, Target::Label(1)).unwrap();
        let kl = loss_and_dlogits(LossKind::KlToTargets, &z, Target::Label(1)).unwrap();
        assert!((ce.0 - kl.0).abs() < 1e-12);
        assert!(ce.1.iter().zip(&kl.1).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn kl_loss_is_shift_invariant() {
        let t = [0.0, 0.7, 0.3];
        let z = [0.3, -1.2, 2.0];
        let shifted: Vec<f64> = z.iter().map(|v| v + 17.5).collect();
        let a = loss_and_dlogits(LossKind::KlToTargets, &z, Target::Probs(&t))
            .unwrap()
            .0;
        let b = loss_and_dlogits(LossKind::KlToTargets, &shifted, Target::Probs(&t))
            .unwrap()
            .0;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn negated_ce_flips_sign() {
        let z = [0.3, -1.2];
        let a = loss_and_dlogits(LossKind::CrossEntropy, &z, Target::Label(0)).unwrap();
        let b = loss_and_dlogits(LossKind::NegatedCrossEntropy, &z, Target::Label(0)).unwrap();
        assert_eq!(a.0, -b.0);
        assert_eq!(a.1[1], -b.1[1]);
    }
}
