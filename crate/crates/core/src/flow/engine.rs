use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::env::metrics::{answer_f1, support_f1};
use crate::env::types::{Instance, Token};
use crate::error::{FlowError, Result};
use crate::flow::observe::{action_set_for, observation_for};
use crate::flow::{Action, ConversationState, EpisodeOutcome, FlowSpec, Invocation, NodeRole, ObjectiveKind, Trace, Variant};
use crate::policy::{greedy_index, log_softmax, sample_index, FlowPolicies};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectionMode {
    Greedy,
    /// Categorical draws seeded by the episode seed; diagnostics only.
    SeededSample,
}

/// Result of a one-step deviation continued to (early) termination.
#[derive(Clone, Debug, PartialEq)]
pub struct Continuation {
    pub outcome: EpisodeOutcome,
    /// Roles invoked, starting with the deviated node itself.
    pub visited: Vec<NodeRole>,
    /// Rollout nesting depth the continuation ran at.
    pub depth: usize,
}

impl Continuation {
    pub fn invocations(&self) -> usize {
        self.visited.len()
    }
}

/// Runs the flow on one instance against an immutable policy snapshot.
///
/// Node decisions see only the instance's question and candidates; gold
/// labels are read when scoring an outcome.
#[derive(Clone, Copy)]
pub struct Simulator<'a> {
    flow: &'a FlowSpec,
    policies: &'a FlowPolicies,
    instance: &'a Instance,
    depth: usize,
}

/// Rollouts never launch rollouts of their own.
const MAX_ROLLOUT_DEPTH: usize = 1;

impl<'a> Simulator<'a> {
    pub fn new(flow: &'a FlowSpec, policies: &'a FlowPolicies, instance: &'a Instance) -> Result<Simulator<'a>> {
        policies.check(flow)?;
        Ok(Simulator { flow, policies, instance, depth: 0 })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// A simulator one rollout level deeper, as a rollout would run.
    pub fn nested(&self) -> Simulator<'a> {
        Simulator { depth: self.depth + 1, ..*self }
    }

    /// Applies one node output to `state` outside any episode; returns the
    /// next role, or `None` at termination. Useful for exhaustive search.
    pub fn transition(&self, state: &mut ConversationState, role: NodeRole, action: Action) -> Result<Option<NodeRole>> {
        self.advance(state, role, action)
    }

    /// Outcome of a (possibly partial) state, given the role that would run next.
    pub fn outcome(&self, state: &ConversationState, next: Option<NodeRole>) -> EpisodeOutcome {
        self.score(state, next)
    }

    fn decide(&self, role: NodeRole, state: &ConversationState, position: usize, choice: Choice<'_>) -> Result<Invocation> {
        let observation = observation_for(role, state, self.instance)?;
        let action_set = action_set_for(role, state, self.instance)?;
        let policy = self.policies.get(role)?;
        let feats = self.policies.featurize(role, &observation, &action_set)?;
        let logits = policy.logits(&feats, false)?;
        let chosen_index = match choice {
            Choice::Greedy => greedy_index(&logits),
            Choice::Sample(rng) => sample_index(&logits, rng),
            Choice::Forced(i) => {
                if i >= action_set.len() {
                    return Err(FlowError::OutOfRange { index: i, len: action_set.len() });
                }
                i
            }
        };
        let log_prob_chosen = log_softmax(&logits)[chosen_index];
        Ok(Invocation { position, role, observation, action_set, chosen_index, log_prob_chosen })
    }

    /// Applies `action` for `role` and returns the next role to run.
    fn advance(&self, state: &mut ConversationState, role: NodeRole, action: Action) -> Result<Option<NodeRole>> {
        let next = match (role, action) {
            (NodeRole::QueryGen, Action::Query(q)) => {
                state.query_history.push(q);
                Some(NodeRole::Retrieve)
            }
            (NodeRole::Retrieve, Action::Retrieve(doc)) => {
                state.scratchpad.push(doc.id);
                state.loop_count += 1;
                if state.loop_count >= self.flow.max_retrievals {
                    Some(NodeRole::VerboseAnswer)
                } else {
                    Some(NodeRole::StopRetrieval)
                }
            }
            (NodeRole::StopRetrieval, Action::Stop) => Some(NodeRole::VerboseAnswer),
            (NodeRole::StopRetrieval, Action::Continue) => Some(NodeRole::QueryGen),
            (NodeRole::VerboseAnswer, Action::Verbose { doc, entity }) => {
                let tokens = state
                    .question
                    .tokens()
                    .into_iter()
                    .chain(doc.tokens())
                    .chain(std::iter::once(Token::Entity(entity)))
                    .collect();
                state.verbose_answer = Some(tokens);
                Some(NodeRole::ConciseAnswer)
            }
            (NodeRole::ConciseAnswer, Action::Concise(t)) => {
                state.concise_answer = Some(vec![t]);
                (self.flow.variant == Variant::Full).then_some(NodeRole::Sufficiency)
            }
            (NodeRole::Sufficiency, Action::Sufficient | Action::Insufficient) => {
                state.sufficiency_pred = Some(action == Action::Sufficient);
                None
            }
            (role, action) => {
                return Err(FlowError::Sequencing(format!("{action:?} is not an output of {}", role.name())))
            }
        };
        Ok(next)
    }

    fn horizon(state: &ConversationState, next: Option<NodeRole>, kind: ObjectiveKind) -> bool {
        match kind {
            ObjectiveKind::Support => !next.is_some_and(NodeRole::in_retrieval_loop),
            ObjectiveKind::Answer => state.concise_answer.is_some(),
            ObjectiveKind::Sufficiency => state.sufficiency_pred.is_some(),
        }
    }

    fn score(&self, state: &ConversationState, next: Option<NodeRole>) -> EpisodeOutcome {
        let objective_horizon_reached: BTreeMap<ObjectiveKind, bool> =
            [ObjectiveKind::Support, ObjectiveKind::Answer, ObjectiveKind::Sufficiency]
                .into_iter()
                .map(|k| (k, Self::horizon(state, next, k)))
                .collect();
        EpisodeOutcome {
            answer_f1: state
                .concise_answer
                .as_ref()
                .map_or(0.0, |c| answer_f1(c, &self.instance.gold_answers)),
            support_f1: support_f1(&state.scratchpad, &self.instance.gold_support),
            sufficiency_correct: state.sufficiency_pred.map(|p| p == self.instance.answerable),
            terminal: next.is_none(),
            objective_horizon_reached,
        }
    }

    pub fn run_episode(&self, mode: SelectionMode, seed: u64) -> Result<Trace> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = ConversationState::initial(&self.instance.question);
        let mut next = Some(NodeRole::QueryGen);
        let mut invocations = Vec::new();
        let mut pre_states = Vec::new();
        while let Some(role) = next {
            let choice = match mode {
                SelectionMode::Greedy => Choice::Greedy,
                SelectionMode::SeededSample => Choice::Sample(&mut rng),
            };
            let inv = self.decide(role, &state, invocations.len(), choice)?;
            pre_states.push(state.clone());
            next = self.advance(&mut state, role, inv.chosen())?;
            invocations.push(inv);
        }
        let outcome = self.score(&state, None);
        Ok(Trace { instance_id: self.instance.id, invocations, pre_states, final_state: state, outcome })
    }

    /// Restores the state before `position`, forces `forced_index`, and
    /// continues greedily. With `stop` set, returns as soon as that
    /// objective's score is fixed; otherwise runs to termination.
    pub fn resume_from(&self, trace: &Trace, position: usize, forced_index: usize, stop: Option<ObjectiveKind>) -> Result<Continuation> {
        if self.depth >= MAX_ROLLOUT_DEPTH {
            return Err(FlowError::NestedRollout(self.depth + 1));
        }
        if position >= trace.invocations.len() {
            return Err(FlowError::OutOfRange { index: position, len: trace.invocations.len() });
        }
        let child = self.nested();
        let mut state = trace.pre_states[position].clone();
        let role = trace.invocations[position].role;
        let inv = child.decide(role, &state, position, Choice::Forced(forced_index))?;
        let mut next = child.advance(&mut state, role, inv.chosen())?;
        let mut visited = vec![role];
        let mut pos = position + 1;
        while let Some(role) = next {
            if stop.is_some_and(|k| Self::horizon(&state, next, k)) {
                break;
            }
            let inv = child.decide(role, &state, pos, Choice::Greedy)?;
            next = child.advance(&mut state, role, inv.chosen())?;
            visited.push(role);
            pos += 1;
        }
        Ok(Continuation { outcome: child.score(&state, next), visited, depth: child.depth })
    }
}

enum Choice<'r> {
    Greedy,
    Sample(&'r mut ChaCha8Rng),
    Forced(usize),
}

pub fn run_episode(flow: &FlowSpec, policies: &FlowPolicies, instance: &Instance, mode: SelectionMode, seed: u64) -> Result<Trace> {
    Simulator::new(flow, policies, instance)?.run_episode(mode, seed)
}

#[allow(clippy::too_many_arguments)]
pub fn resume_from(
    trace: &Trace,
    position: usize,
    forced_index: usize,
    policies: &FlowPolicies,
    flow: &FlowSpec,
    instance: &Instance,
    stop: Option<ObjectiveKind>,
) -> Result<Continuation> {
    Simulator::new(flow, policies, instance)?.resume_from(trace, position, forced_index, stop)
}
