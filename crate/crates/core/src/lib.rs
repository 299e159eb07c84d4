//! Joint online fine-tuning of multi-node agent flows.
//!
//! A flow is a fixed wiring of nodes (query generation, retrieval, stop
//! decision, verbose and concise answering, optionally sufficiency) that
//! communicate through a shared scratchpad. Episode-level outcomes are reduced
//! to node-level preferences by re-running the episode with a single node
//! output replaced ([`rollout`]); each node is then updated online with DPO and
//! a coin-betting optimizer ([`optim`]). [`env`] provides the synthetic
//! multi-hop QA simulator the flow runs against, and [`train`] holds the
//! progressive-validation training loop, evaluation, and checkpoints.

pub mod env;
pub mod error;
pub mod flow;
pub mod optim;
pub mod policy;
pub mod rollout;
pub mod train;

pub use error::{FlowError, Result};
