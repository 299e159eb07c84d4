//! Flow wiring, conversation state, and the unrolled episode trace.
//!
//! The topology is fixed: a retrieval loop `QueryGen -> Retrieve ->
//! StopRetrieval` repeated up to `max_retrievals` times, then
//! `VerboseAnswer -> ConciseAnswer`, then `Sufficiency` for the full variant.
//! Only the loop exit depends on data.

mod engine;
mod observe;

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::env::types::{Doc, DocId, Entity, Relation, Token};
use crate::error::{FlowError, Result};

pub use engine::{resume_from, run_episode, Continuation, SelectionMode, Simulator};
pub use observe::{action_set_for, follow_chain, observation_for, ChainView, Observation};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRole {
    QueryGen,
    Retrieve,
    StopRetrieval,
    VerboseAnswer,
    ConciseAnswer,
    Sufficiency,
}

impl NodeRole {
    pub const ALL: [NodeRole; 6] = [
        NodeRole::QueryGen,
        NodeRole::Retrieve,
        NodeRole::StopRetrieval,
        NodeRole::VerboseAnswer,
        NodeRole::ConciseAnswer,
        NodeRole::Sufficiency,
    ];

    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Option<NodeRole> {
        NodeRole::ALL.get(tag as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            NodeRole::QueryGen => "query_gen",
            NodeRole::Retrieve => "retrieve",
            NodeRole::StopRetrieval => "stop_retrieval",
            NodeRole::VerboseAnswer => "verbose_answer",
            NodeRole::ConciseAnswer => "concise_answer",
            NodeRole::Sufficiency => "sufficiency",
        }
    }

    pub fn in_retrieval_loop(self) -> bool {
        matches!(self, NodeRole::QueryGen | NodeRole::Retrieve | NodeRole::StopRetrieval)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Answerable,
    Full,
}

impl std::str::FromStr for Variant {
    type Err = FlowError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "answerable" => Ok(Variant::Answerable),
            "full" => Ok(Variant::Full),
            other => Err(FlowError::Config(format!("unknown variant `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub variant: Variant,
    pub max_retrievals: usize,
}

impl FlowSpec {
    pub fn new(variant: Variant, max_retrievals: usize) -> Result<FlowSpec> {
        if max_retrievals == 0 {
            return Err(FlowError::Config("max_retrievals must be at least 1".into()));
        }
        Ok(FlowSpec { variant, max_retrievals })
    }

    /// One node per role; `Sufficiency` only in the full variant.
    pub fn roles(&self) -> Vec<NodeRole> {
        NodeRole::ALL
            .into_iter()
            .filter(|r| *r != NodeRole::Sufficiency || self.variant == Variant::Full)
            .collect()
    }
}

/// Episode objectives, each scored by a different metric.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    Support,
    Answer,
    Sufficiency,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Query {
    pub entity: Entity,
    pub relation: Relation,
}

/// One candidate output of a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Query(Query),
    Retrieve(Doc),
    Stop,
    Continue,
    Verbose { doc: Doc, entity: Entity },
    Concise(Token),
    Sufficient,
    Insufficient,
}

/// The shared scratchpad nodes read and write. A plain value: cloning it is
/// a snapshot.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationState {
    pub question: crate::env::types::Question,
    pub scratchpad: Vec<DocId>,
    pub query_history: Vec<Query>,
    pub verbose_answer: Option<Vec<Token>>,
    pub concise_answer: Option<Vec<Token>>,
    pub sufficiency_pred: Option<bool>,
    pub loop_count: usize,
}

impl ConversationState {
    pub fn initial(question: &crate::env::types::Question) -> ConversationState {
        ConversationState {
            question: question.clone(),
            scratchpad: Vec::new(),
            query_history: Vec::new(),
            verbose_answer: None,
            concise_answer: None,
            sufficiency_pred: None,
            loop_count: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Invocation {
    pub position: usize,
    pub role: NodeRole,
    pub observation: Observation,
    pub action_set: Vec<Action>,
    pub chosen_index: usize,
    pub log_prob_chosen: f64,
}

impl Invocation {
    pub fn chosen(&self) -> Action {
        self.action_set[self.chosen_index]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub answer_f1: f64,
    pub support_f1: f64,
    pub sufficiency_correct: Option<bool>,
    pub terminal: bool,
    pub objective_horizon_reached: BTreeMap<ObjectiveKind, bool>,
}

impl EpisodeOutcome {
    pub fn reached(&self, kind: ObjectiveKind) -> bool {
        self.objective_horizon_reached.get(&kind).copied().unwrap_or(false)
    }
}

/// The realized unrolled computation graph of one episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub instance_id: u64,
    pub invocations: Vec<Invocation>,
    /// `pre_states[p]` is the state right before invocation `p`.
    pub pre_states: Vec<ConversationState>,
    pub final_state: ConversationState,
    pub outcome: EpisodeOutcome,
}

#[derive(Serialize)]
struct TraceLine<'a> {
    position: usize,
    role: &'a str,
    action_set_size: usize,
    chosen_index: usize,
    log_prob: f64,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.invocations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.invocations.is_empty()
    }

    pub fn count(&self, role: NodeRole) -> usize {
        self.invocations.iter().filter(|i| i.role == role).count()
    }

    /// Probability the sufficiency node assigned to "sufficient".
    pub fn sufficiency_score(&self) -> Option<f64> {
        let inv = self.invocations.iter().find(|i| i.role == NodeRole::Sufficiency)?;
        let p = inv.log_prob_chosen.exp();
        Some(if inv.chosen() == Action::Sufficient { p } else { 1.0 - p })
    }

    /// Debug dump: one JSON object per invocation.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for inv in &self.invocations {
            let line = TraceLine {
                position: inv.position,
                role: inv.role.name(),
                action_set_size: inv.action_set.len(),
                chosen_index: inv.chosen_index,
                log_prob: inv.log_prob_chosen,
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}
