//! Advantage estimation, loss functions and the rollout store.

mod buffer;
mod gae;
mod loss;

pub use buffer::{RolloutBuffer, Segment, Transition, DSA_FEATURES};
pub use gae::{compute_gae, normalize_advantages, AdvantageEstimate, DEFAULT_GAE_LAMBDA, DEFAULT_GAMMA};
pub use loss::{
    clip_objective, clip_objective_grad, entropy_regularizer, entropy_regularizer_grad,
    erppo_policy_loss, information_quantity, mappo_policy_loss, select_branch, value_loss,
    value_target_from_information, Branch, LossReport, INFO_NORM_FLOOR,
};
