//! Losses, the optimizer and joint encoder–decoder training.

mod adam;
mod config;
mod joint;
mod loss;
mod model;

pub use adam::{adam_step, AdamState, Projections, BETA1, BETA2, EPSILON};
pub use config::{KvConfig, TrainConfig};
pub use joint::{
    fixed_response, select_response, train_full_uem, train_joint, train_with_response, CandidateResult,
    ResponseSelection, TrainReport,
};
pub use loss::{loss_ergas, loss_mae, loss_mse, loss_on_tape, LossKind};
pub use model::{Model, ModelMeta};
