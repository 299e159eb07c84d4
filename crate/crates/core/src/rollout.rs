//! One-step deviation rollouts: turn an episode into node-level preference
//! pairs by re-running the flow with a single output changed.

use serde::{Deserialize, Serialize};

use crate::env::types::Instance;
use crate::error::{FlowError, Result};
use crate::flow::{Action, EpisodeOutcome, FlowSpec, NodeRole, ObjectiveKind, Observation, Simulator, Trace};
use crate::policy::FlowPolicies;

pub fn objective_of(role: NodeRole) -> ObjectiveKind {
    match role {
        NodeRole::QueryGen | NodeRole::Retrieve | NodeRole::StopRetrieval => ObjectiveKind::Support,
        NodeRole::VerboseAnswer | NodeRole::ConciseAnswer => ObjectiveKind::Answer,
        NodeRole::Sufficiency => ObjectiveKind::Sufficiency,
    }
}

pub fn score_for(outcome: &EpisodeOutcome, kind: ObjectiveKind) -> Result<f64> {
    if !outcome.reached(kind) {
        return Err(FlowError::Sequencing(format!("{kind:?} score requested before it is fixed")));
    }
    Ok(match kind {
        ObjectiveKind::Support => outcome.support_f1,
        ObjectiveKind::Answer => outcome.answer_f1,
        ObjectiveKind::Sufficiency => {
            if outcome.sufficiency_correct == Some(true) {
                1.0
            } else {
                0.0
            }
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub role: NodeRole,
    pub observation: Observation,
    pub action_set: Vec<Action>,
    pub winner_index: usize,
    pub loser_index: usize,
    pub position: usize,
    /// Objective score difference, always positive.
    pub margin: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RolloutStats {
    pub episode_id: u64,
    pub trace_len: usize,
    pub rollouts_launched: usize,
    pub rollout_node_invocations: usize,
    pub pairs_emitted: usize,
    pub max_depth: usize,
}

/// Up to `k` deviations per position, each compared with the realized output
/// on the position's own objective. ConciseAnswer positions are skipped.
pub fn generate_preferences(
    trace: &Trace,
    flow: &FlowSpec,
    policies: &FlowPolicies,
    instance: &Instance,
    k: usize,
) -> Result<(Vec<PreferencePair>, RolloutStats)> {
    if k == 0 {
        return Err(FlowError::Config("k must be at least 1".into()));
    }
    if trace.instance_id != instance.id {
        return Err(FlowError::Config(format!("trace of instance {} replayed on {}", trace.instance_id, instance.id)));
    }
    let sim = Simulator::new(flow, policies, instance)?;
    let mut pairs = Vec::new();
    let mut stats = RolloutStats { episode_id: instance.id, trace_len: trace.len(), ..Default::default() };
    for inv in &trace.invocations {
        if inv.role == NodeRole::ConciseAnswer {
            continue;
        }
        let kind = objective_of(inv.role);
        let realized = score_for(&trace.outcome, kind)?;
        let feats = policies.featurize(inv.role, &inv.observation, &inv.action_set)?;
        let alts = policies.get(inv.role)?.alternatives(&feats, inv.chosen_index, k)?;
        for a in alts {
            let cont = sim.resume_from(trace, inv.position, a, Some(kind))?;
            stats.rollouts_launched += 1;
            stats.rollout_node_invocations += cont.invocations();
            stats.max_depth = stats.max_depth.max(cont.depth);
            let s = score_for(&cont.outcome, kind)?;
            let (winner_index, loser_index) = if s > realized {
                (a, inv.chosen_index)
            } else if s < realized {
                (inv.chosen_index, a)
            } else {
                continue;
            };
            pairs.push(PreferencePair {
                role: inv.role,
                observation: inv.observation.clone(),
                action_set: inv.action_set.clone(),
                winner_index,
                loser_index,
                position: inv.position,
                margin: (s - realized).abs(),
            });
        }
    }
    stats.pairs_emitted = pairs.len();
    Ok((pairs, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn outcome(reached: &[ObjectiveKind]) -> EpisodeOutcome {
        EpisodeOutcome {
            answer_f1: 0.6667,
            support_f1: 1.0,
            sufficiency_correct: Some(false),
            terminal: false,
            objective_horizon_reached: reached.iter().map(|k| (*k, true)).collect::<BTreeMap<_, _>>(),
        }
    }

    #[test]
    fn role_objectives() {
        assert_eq!(objective_of(NodeRole::Retrieve), ObjectiveKind::Support);
        assert_eq!(objective_of(NodeRole::QueryGen), ObjectiveKind::Support);
        assert_eq!(objective_of(NodeRole::StopRetrieval), ObjectiveKind::Support);
        assert_eq!(objective_of(NodeRole::VerboseAnswer), ObjectiveKind::Answer);
        assert_eq!(objective_of(NodeRole::ConciseAnswer), ObjectiveKind::Answer);
        assert_eq!(objective_of(NodeRole::Sufficiency), ObjectiveKind::Sufficiency);
    }

    #[test]
    fn projections() {
        let all = [ObjectiveKind::Support, ObjectiveKind::Answer, ObjectiveKind::Sufficiency];
        let o = outcome(&all);
        assert_eq!(score_for(&o, ObjectiveKind::Support).unwrap(), 1.0);
        assert_eq!(score_for(&o, ObjectiveKind::Answer).unwrap(), 0.6667);
        assert_eq!(score_for(&o, ObjectiveKind::Sufficiency).unwrap(), 0.0);
    }

    #[test]
    fn unreached_horizon_is_an_error() {
        let o = outcome(&[ObjectiveKind::Support]);
        assert!(matches!(score_for(&o, ObjectiveKind::Answer), Err(FlowError::Sequencing(_))));
    }
}
