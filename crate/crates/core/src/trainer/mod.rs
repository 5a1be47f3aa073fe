//! Losses, the optimization loop and the multi-round driver.
//!
//! The preference loss is the usual negated form, `−ln σ(β·margin)`, so that
//! minimizing it raises the policy's preference for the chosen output.

mod config;
mod driver;
mod loss;
mod optim;
mod train;

pub use config::{DqoConfig, OptimizerKind, TrainMode};
pub use driver::{run_dqo, DqoOutcome, RoundEvaluator, RoundRecord, RunOptions};
pub use loss::{dpo_loss, dpo_loss_grad, dpo_margin, sft_loss};
pub use optim::{clip_global_norm, global_norm, learning_rate, Optimizer};
pub use train::{
    apply_update, batch_gradient, pack_batches, reference_log_probs, train_epochs, StepRecord,
    StepSettings, TrainPair, TrainStats,
};
