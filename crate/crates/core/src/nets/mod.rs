//! Small feed-forward classifiers, their training loops and the
//! gradient-based unlearning baselines.

mod baseline;
mod loss;
mod mlp;
mod train;

pub use baseline::{baseline, relabel_forget, AscentConfig, BaselineKind};
pub use loss::{batch_loss, batch_loss_and_grad, loss_and_dlogits, LossKind, Target};
pub use mlp::{Arch, MlpModel};
pub use train::{
    dataset_loss, distill, select_best_epoch, train, train_ce, EpochRecord, Monitor, Optimizer,
    Snapshot, TrainConfig, TrainTrace,
};
