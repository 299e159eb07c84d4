//! Supervised negative log-likelihood for the terminal answer node.

use serde::{Deserialize, Serialize};

use crate::env::metrics::answer_f1;
use crate::env::types::Token;
use crate::error::{FlowError, Result};
use crate::flow::{Action, Observation, Trace, NodeRole};
use crate::policy::{FeatureVec, NodePolicy};

/// A terminal-node training example with a known gold action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupervisedExample {
    pub observation: Observation,
    pub action_set: Vec<Action>,
    pub gold_index: usize,
}

/// Index of the action that exactly reproduces a gold answer, if any.
pub fn gold_action_index(action_set: &[Action], gold_answers: &[Vec<Token>]) -> Option<usize> {
    action_set.iter().position(|a| match a {
        Action::Concise(t) => answer_f1(&[*t], gold_answers) == 1.0,
        _ => false,
    })
}

/// Builds the concise-answer example from a trace, or `None` when the gold
/// answer is not among the node's options and the update must be skipped.
pub fn terminal_example(trace: &Trace, gold_answers: &[Vec<Token>]) -> Option<SupervisedExample> {
    let inv = trace.invocations.iter().find(|i| i.role == NodeRole::ConciseAnswer)?;
    let gold_index = gold_action_index(&inv.action_set, gold_answers)?;
    Some(SupervisedExample { observation: inv.observation.clone(), action_set: inv.action_set.clone(), gold_index })
}

/// NLL of the gold action and its gradient `E[phi] - phi_gold`.
pub fn supervised_loss_grad(policy: &NodePolicy, feats: &[FeatureVec], gold_index: usize) -> Result<(f64, Vec<f64>)> {
    if gold_index >= feats.len() {
        return Err(FlowError::OutOfRange { index: gold_index, len: feats.len() });
    }
    let log_probs = policy.log_probs(feats, false)?;
    let probs: Vec<f64> = log_probs.iter().map(|l| l.exp()).collect();
    let mut grad = policy.expected_features(feats, &probs);
    for &i in &feats[gold_index] {
        grad[i] -= 1.0;
    }
    Ok((-log_probs[gold_index], grad))
}
