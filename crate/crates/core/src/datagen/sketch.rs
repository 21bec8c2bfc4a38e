use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

use super::LabeledDataset;

/// Semi-orthogonal `k × d` projection: the transposed orthogonal factor of
/// a seeded Gaussian `d × k` matrix, so `Ω Ωᵀ = I_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchOperator {
    omega: DMatrix<f64>,
    seed: u64,
}

pub fn make_sketch(d: usize, k: usize, seed: u64) -> Result<SketchOperator> {
    if k > d {
        return Err(Error::SketchTooWide { k, d });
    }
    if k == 0 {
        return Err(Error::InvalidArgument(
            "sketch dimension must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaussian = DMatrix::from_fn(d, k, |_, _| StandardNormal.sample(&mut rng));
    let q = gaussian.qr().q();
    Ok(SketchOperator {
        omega: q.transpose(),
        seed,
    })
}

impl SketchOperator {
    pub fn input_dim(&self) -> usize {
        self.omega.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.omega.nrows()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.omega
    }

    /// `max |Ω Ωᵀ − I|`.
    pub fn orthogonality_defect(&self) -> f64 {
        let gram = &self.omega * self.omega.transpose();
        let k = gram.nrows();
        (0..k)
            .flat_map(|i| (0..k).map(move |j| (i, j)))
            .map(|(i, j)| (gram[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max)
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok((0..self.output_dim())
            .map(|r| self.omega.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }
}

pub fn apply_sketch(op: &SketchOperator, ds: &LabeledDataset) -> Result<LabeledDataset> {
    let mut features = Vec::with_capacity(ds.len() * op.output_dim());
    for row in ds.rows() {
        features.extend(op.apply(row)?);
    }
    ds.with_features(op.output_dim(), features)
}
