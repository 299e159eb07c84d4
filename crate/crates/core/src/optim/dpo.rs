//! DPO loss on node preference pairs and its analytic gradient.

use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::policy::{FeatureMap, FeatureVec, NodePolicy};
use crate::rollout::PreferencePair;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpoConfig {
    pub beta: f64,
    /// Soft reference mixing weight.
    pub tau: f64,
    /// Episodes between soft reference update attempts.
    pub ref_update_period: usize,
    /// Only update the reference when progressive-validation answer F1 improves.
    pub gate_on_pv_answer_f1: bool,
}

impl Default for DpoConfig {
    fn default() -> Self {
        DpoConfig { beta: 1.0, tau: 0.1, ref_update_period: 200, gate_on_pv_answer_f1: true }
    }
}

/// `-ln sigmoid(x)`, stable for large |x|.
pub fn neg_log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_pair(feats: &[FeatureVec], winner: usize, loser: usize) -> Result<()> {
    for i in [winner, loser] {
        if i >= feats.len() {
            return Err(FlowError::OutOfRange { index: i, len: feats.len() });
        }
    }
    if winner == loser {
        return Err(FlowError::Sequencing("winner and loser coincide".into()));
    }
    Ok(())
}

/// Log-ratio margin `(l_w - l_w_ref) - (l_l - l_l_ref)`.
pub fn dpo_margin(policy: &NodePolicy, feats: &[FeatureVec], winner: usize, loser: usize) -> Result<f64> {
    check_pair(feats, winner, loser)?;
    let cur = policy.log_probs(feats, false)?;
    let refp = policy.log_probs(feats, true)?;
    Ok((cur[winner] - refp[winner]) - (cur[loser] - refp[loser]))
}

/// Loss and gradient with respect to `policy.weights` (reference fixed).
pub fn dpo_loss_grad_feats(policy: &NodePolicy, feats: &[FeatureVec], winner: usize, loser: usize, beta: f64) -> Result<(f64, Vec<f64>)> {
    let z = dpo_margin(policy, feats, winner, loser)?;
    let loss = neg_log_sigmoid(beta * z);
    // grad l_i = phi_i - E[phi]; the expectation cancels in grad l_w - grad l_l
    let scale = -beta * sigmoid(-beta * z);
    let mut grad = vec![0.0; policy.dimension()];
    for &i in &feats[winner] {
        grad[i] += scale;
    }
    for &i in &feats[loser] {
        grad[i] -= scale;
    }
    Ok((loss, grad))
}

pub fn dpo_loss(policy: &NodePolicy, fmap: &FeatureMap, pair: &PreferencePair, beta: f64) -> Result<f64> {
    let feats = fmap.featurize(pair.role, &pair.observation, &pair.action_set)?;
    Ok(neg_log_sigmoid(beta * dpo_margin(policy, &feats, pair.winner_index, pair.loser_index)?))
}

pub fn dpo_grad(policy: &NodePolicy, fmap: &FeatureMap, pair: &PreferencePair, beta: f64) -> Result<Vec<f64>> {
    let feats = fmap.featurize(pair.role, &pair.observation, &pair.action_set)?;
    Ok(dpo_loss_grad_feats(policy, &feats, pair.winner_index, pair.loser_index, beta)?.1)
}
