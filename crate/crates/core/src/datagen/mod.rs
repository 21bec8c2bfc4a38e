//! Synthetic class-conditional Gaussian data, forgetting scenarios and the
//! semi-orthogonal feature sketch.

mod dataset;
mod mixture;
mod scenario;
mod sketch;

pub use dataset::LabeledDataset;
pub use mixture::{GaussianMixtureSpec, MixtureComponent, Preset, TrueDistribution};
pub use scenario::{build_scenario, ForgetSplit, Scenario};
pub use sketch::{apply_sketch, make_sketch, SketchOperator};

/// Seed offset separating a held-out draw from the training draw.
pub const TEST_SEED_OFFSET: u64 = 0x5eed_7e57;

/// Training set plus a held-out set from the same spec; test ids continue
/// after the training ids.
pub fn generate_train_test(
    spec: &GaussianMixtureSpec,
    n_per_subclass: usize,
    test_per_subclass: usize,
) -> crate::Result<(LabeledDataset, LabeledDataset)> {
    let train = spec.generate(n_per_subclass)?;
    let test = spec.generate_with_ids(
        test_per_subclass,
        spec.seed.wrapping_add(TEST_SEED_OFFSET),
        train.len() as u64,
    )?;
    Ok((train, test))
}
