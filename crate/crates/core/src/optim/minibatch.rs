use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::flow::NodeRole;
use crate::optim::dpo::{dpo_loss_grad_feats, DpoConfig};
use crate::optim::supervised::{supervised_loss_grad, SupervisedExample};
use crate::policy::{FeatureVec, FlowPolicies, NodePolicy};
use crate::rollout::PreferencePair;

/// Per-role summary of one minibatch update. Losses are measured at the
/// pre-update weights.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateReport {
    pub pair_counts: BTreeMap<NodeRole, usize>,
    pub dpo_loss_mean: BTreeMap<NodeRole, f64>,
    pub supervised_count: usize,
    pub supervised_loss_mean: Option<f64>,
}

impl UpdateReport {
    pub fn total_pairs(&self) -> usize {
        self.pair_counts.values().sum()
    }

    /// Pair-weighted mean DPO loss over all roles.
    pub fn overall_dpo_loss(&self) -> Option<f64> {
        let n = self.total_pairs();
        if n == 0 {
            return None;
        }
        let s: f64 = self.pair_counts.iter().map(|(r, c)| self.dpo_loss_mean[r] * *c as f64).sum();
        Some(s / n as f64)
    }
}

/// Mean of per-key (loss, grad) with multiplicities, summed in key order so
/// the result depends only on the multiset of examples.
fn multiset_mean<K: Ord>(
    policy: &NodePolicy,
    groups: BTreeMap<K, usize>,
    total: usize,
    f: impl Fn(&K) -> Result<(f64, Vec<f64>)>,
) -> Result<(f64, Vec<f64>)> {
    let mut loss = 0.0;
    let mut grad = vec![0.0; policy.dimension()];
    for (key, count) in &groups {
        let w = *count as f64 / total as f64;
        let (l, g) = f(key)?;
        loss += w * l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += w * b;
        }
    }
    Ok((loss, grad))
}

/// One coin-betting step per role with pairs; ConciseAnswer uses the mean
/// supervised gradient instead.
pub fn apply_minibatch(
    policies: &mut FlowPolicies,
    pairs: &[PreferencePair],
    supervised: &[SupervisedExample],
    config: &DpoConfig,
) -> Result<UpdateReport> {
    let mut by_role: BTreeMap<NodeRole, BTreeMap<(Vec<FeatureVec>, usize, usize), usize>> = BTreeMap::new();
    for p in pairs {
        let feats = policies.featurize(p.role, &p.observation, &p.action_set)?;
        *by_role.entry(p.role).or_default().entry((feats, p.winner_index, p.loser_index)).or_default() += 1;
    }
    let mut sup: BTreeMap<(Vec<FeatureVec>, usize), usize> = BTreeMap::new();
    for ex in supervised {
        let feats = policies.featurize(NodeRole::ConciseAnswer, &ex.observation, &ex.action_set)?;
        *sup.entry((feats, ex.gold_index)).or_default() += 1;
    }

    let mut report = UpdateReport::default();
    for (role, groups) in by_role {
        let total: usize = groups.values().sum();
        let policy = policies.get_mut(role)?;
        let (loss, grad) = multiset_mean(policy, groups, total, |(f, w, l)| dpo_loss_grad_feats(policy, f, *w, *l, config.beta))?;
        let NodePolicy { optimizer, weights, .. } = policy;
        optimizer.step(&grad, weights)?;
        report.pair_counts.insert(role, total);
        report.dpo_loss_mean.insert(role, loss);
    }
    if !sup.is_empty() {
        let total = supervised.len();
        let policy = policies.get_mut(NodeRole::ConciseAnswer)?;
        let (loss, grad) = multiset_mean(policy, sup, total, |(f, g)| supervised_loss_grad(policy, f, *g))?;
        let NodePolicy { optimizer, weights, .. } = policy;
        optimizer.step(&grad, weights)?;
        report.supervised_count = total;
        report.supervised_loss_mean = Some(loss);
    }
    Ok(report)
}

/// `ref <- (1 - tau) ref + tau w` when the gate is open.
pub fn soft_ref_update(policy: &mut NodePolicy, tau: f64, gate_open: bool) {
    if !gate_open {
        return;
    }
    if tau == 1.0 {
        policy.ref_weights.copy_from_slice(&policy.weights);
        return;
    }
    for (r, w) in policy.ref_weights.iter_mut().zip(&policy.weights) {
        *r = (1.0 - tau) * *r + tau * w;
    }
}

/// Opens iff the offered value beats every value offered at earlier
/// opportunities. The first opportunity always opens.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RefGate {
    pub best: Option<f64>,
}

impl RefGate {
    pub fn offer(&mut self, value: f64) -> bool {
        let open = self.best.is_none_or(|b| value > b);
        self.best = Some(self.best.map_or(value, |b| b.max(value)));
        open
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tau_edges_and_closed_gate() {
        let mut p = NodePolicy::new(NodeRole::Retrieve, vec![0.25, -1.0], 100.0);
        p.weights = vec![1.0, 3.0];
        soft_ref_update(&mut p, 0.0, true);
        assert_eq!(p.ref_weights, vec![0.25, -1.0]);
        soft_ref_update(&mut p, 0.7, false);
        assert_eq!(p.ref_weights, vec![0.25, -1.0]);
        soft_ref_update(&mut p, 1.0, true);
        assert_eq!(p.ref_weights, p.weights);
    }

    #[test]
    fn soft_mix() {
        let mut p = NodePolicy::new(NodeRole::Retrieve, vec![0.0], 100.0);
        p.weights = vec![1.0];
        soft_ref_update(&mut p, 0.1, true);
        assert!((p.ref_weights[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn gate_tracks_best_previous() {
        let mut g = RefGate::default();
        assert!(g.offer(0.3));
        assert!(!g.offer(0.3));
        assert!(!g.offer(0.1));
        assert!(g.offer(0.31));
        assert!(!g.offer(0.2));
    }
}
