//! Preference learning: DPO and supervised objectives, coin-betting steps,
//! minibatch aggregation and gated reference updates.

pub mod cocob;
pub mod dpo;
pub mod minibatch;
pub mod supervised;

pub use cocob::{CocobState, DEFAULT_ALPHA};
pub use dpo::{dpo_grad, dpo_loss, dpo_loss_grad_feats, dpo_margin, neg_log_sigmoid, sigmoid, DpoConfig};
pub use minibatch::{apply_minibatch, soft_ref_update, RefGate, UpdateReport};
pub use supervised::{gold_action_index, supervised_loss_grad, terminal_example, SupervisedExample};
