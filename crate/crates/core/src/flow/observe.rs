use serde::{Deserialize, Serialize};

use crate::env::types::{Doc, DocId, Entity, Instance, Question, Token};
use crate::error::{FlowError, Result};
use crate::flow::{Action, ConversationState, NodeRole, Query};

/// The node-specific view of the conversation state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observation {
    /// Question plus the scratchpad documents in retrieval order.
    Context { question: Question, scratchpad: Vec<Doc> },
    /// Latest query plus every candidate document.
    Retrieval { query: Query, candidates: Vec<Doc> },
    /// Question plus the verbose answer.
    Answer { question: Question, verbose: Vec<Token> },
}

impl Observation {
    /// All tokens visible to the node, with multiplicity.
    pub fn tokens(&self) -> Vec<Token> {
        match self {
            Observation::Context { question, scratchpad } => question
                .tokens()
                .into_iter()
                .chain(scratchpad.iter().flat_map(|d| d.tokens()))
                .collect(),
            Observation::Retrieval { query, candidates } => [Token::Entity(query.entity), Token::Relation(query.relation)]
                .into_iter()
                .chain(candidates.iter().flat_map(|d| d.tokens()))
                .collect(),
            Observation::Answer { question, verbose } => {
                question.tokens().into_iter().chain(verbose.iter().copied()).collect()
            }
        }
    }

    /// Documents the node can read.
    pub fn docs(&self) -> &[Doc] {
        match self {
            Observation::Context { scratchpad, .. } => scratchpad,
            Observation::Retrieval { candidates, .. } => candidates,
            Observation::Answer { .. } => &[],
        }
    }
}

/// How far the question's relation chain can be followed from the head
/// through a set of documents. Uses only question and documents.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChainView {
    pub depth: usize,
    pub frontier: Entity,
    pub end_doc: Option<DocId>,
}

pub fn follow_chain(question: &Question, docs: &[Doc]) -> ChainView {
    let mut view = ChainView { depth: 0, frontier: question.head, end_doc: None };
    for rel in &question.relations {
        let next = docs.iter().find(|d| d.subject == view.frontier && d.relation == *rel);
        match next {
            Some(d) => {
                view.depth += 1;
                view.frontier = d.object;
                view.end_doc = Some(d.id);
            }
            None => break,
        }
    }
    view
}

fn scratchpad_docs(state: &ConversationState, instance: &Instance) -> Result<Vec<Doc>> {
    state
        .scratchpad
        .iter()
        .map(|id| {
            instance.doc(*id).copied().ok_or_else(|| FlowError::MalformedInstance {
                instance: instance.id,
                reason: format!("scratchpad holds unknown document {id}"),
            })
        })
        .collect()
}

pub fn observation_for(role: NodeRole, state: &ConversationState, instance: &Instance) -> Result<Observation> {
    match role {
        NodeRole::QueryGen | NodeRole::StopRetrieval | NodeRole::VerboseAnswer | NodeRole::Sufficiency => {
            Ok(Observation::Context { question: state.question.clone(), scratchpad: scratchpad_docs(state, instance)? })
        }
        NodeRole::Retrieve => {
            let query = *state
                .query_history
                .last()
                .ok_or_else(|| FlowError::Sequencing("retrieval requested before any query".into()))?;
            Ok(Observation::Retrieval { query, candidates: instance.candidates.clone() })
        }
        NodeRole::ConciseAnswer => {
            let verbose = state
                .verbose_answer
                .clone()
                .ok_or_else(|| FlowError::Sequencing("concise answer requested before the verbose answer".into()))?;
            Ok(Observation::Answer { question: state.question.clone(), verbose })
        }
    }
}

/// Candidate outputs for `role`, in canonical sorted order.
pub fn action_set_for(role: NodeRole, state: &ConversationState, instance: &Instance) -> Result<Vec<Action>> {
    let mut actions: Vec<Action> = match role {
        NodeRole::QueryGen => {
            let mut entities = vec![state.question.head];
            for doc in scratchpad_docs(state, instance)? {
                entities.extend(doc.entities());
            }
            entities
                .iter()
                .flat_map(|&entity| {
                    state.question.relations.iter().map(move |&relation| Action::Query(Query { entity, relation }))
                })
                .collect()
        }
        NodeRole::Retrieve => instance
            .candidates
            .iter()
            .filter(|d| !state.scratchpad.contains(&d.id))
            .map(|d| Action::Retrieve(*d))
            .collect(),
        NodeRole::StopRetrieval => vec![Action::Stop, Action::Continue],
        NodeRole::VerboseAnswer => scratchpad_docs(state, instance)?
            .into_iter()
            .flat_map(|doc| doc.entities().map(|entity| Action::Verbose { doc, entity }))
            .collect(),
        NodeRole::ConciseAnswer => match &observation_for(role, state, instance)? {
            Observation::Answer { verbose, .. } => verbose.iter().map(|&t| Action::Concise(t)).collect(),
            _ => unreachable!("concise observation is an answer view"),
        },
        NodeRole::Sufficiency => vec![Action::Sufficient, Action::Insufficient],
    };
    // stop/continue and sufficient/insufficient keep their fixed order
    if !matches!(role, NodeRole::StopRetrieval | NodeRole::Sufficiency) {
        actions.sort();
        actions.dedup();
    }
    if actions.is_empty() {
        return Err(FlowError::MalformedInstance {
            instance: instance.id,
            reason: format!("empty action set for {}", role.name()),
        });
    }
    Ok(actions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::types::Relation;

    fn doc(id: u32, s: u32, r: u32, o: u32) -> Doc {
        Doc { id: DocId(id), subject: Entity(s), relation: Relation(r), object: Entity(o) }
    }

    fn instance() -> Instance {
        Instance {
            id: 1,
            pair_id: None,
            question: Question { head: Entity(0), relations: vec![Relation(0), Relation(1)] },
            hops: 2,
            candidates: vec![
                doc(0, 9, 0, 0),
                doc(1, 0, 0, 1),
                doc(2, 1, 1, 2),
                doc(3, 0, 5, 7),
                doc(4, 8, 1, 1),
                doc(5, 1, 4, 6),
            ],
            gold_support: vec![DocId(1), DocId(2)],
            gold_answers: vec![vec![Token::Entity(Entity(2))]],
            answerable: true,
        }
    }

    #[test]
    fn empty_scratchpad_query_view() {
        let inst = instance();
        let s = ConversationState::initial(&inst.question);
        let obs = observation_for(NodeRole::QueryGen, &s, &inst).unwrap();
        assert!(obs.docs().is_empty());
        assert_eq!(obs.tokens(), inst.question.tokens());
    }

    #[test]
    fn concise_view_is_question_plus_verbose() {
        let inst = instance();
        let mut s = ConversationState::initial(&inst.question);
        assert!(matches!(
            observation_for(NodeRole::ConciseAnswer, &s, &inst),
            Err(FlowError::Sequencing(_))
        ));
        let verbose: Vec<Token> = inst.question.tokens().into_iter().chain(inst.candidates[2].tokens()).chain([Token::Entity(Entity(2))]).collect();
        s.scratchpad = vec![DocId(2)];
        s.verbose_answer = Some(verbose.clone());
        let mut got = observation_for(NodeRole::ConciseAnswer, &s, &inst).unwrap().tokens();
        let mut want: Vec<Token> = inst.question.tokens().into_iter().chain(verbose).collect();
        got.sort();
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn unprojected_fields_do_not_leak() {
        let inst = instance();
        let a = ConversationState::initial(&inst.question);
        let b = ConversationState { sufficiency_pred: Some(true), ..a.clone() };
        assert_eq!(
            observation_for(NodeRole::QueryGen, &a, &inst).unwrap(),
            observation_for(NodeRole::QueryGen, &b, &inst).unwrap()
        );
    }

    #[test]
    fn action_set_sizes() {
        let inst = instance();
        let mut s = ConversationState::initial(&inst.question);
        assert_eq!(action_set_for(NodeRole::StopRetrieval, &s, &inst).unwrap(), vec![Action::Stop, Action::Continue]);
        assert_eq!(action_set_for(NodeRole::Retrieve, &s, &inst).unwrap().len(), 6);
        assert_eq!(action_set_for(NodeRole::QueryGen, &s, &inst).unwrap().len(), 2);
        s.scratchpad = vec![DocId(1), DocId(2)];
        // two docs, subject and object each
        assert_eq!(action_set_for(NodeRole::VerboseAnswer, &s, &inst).unwrap().len(), 4);
        assert_eq!(action_set_for(NodeRole::Retrieve, &s, &inst).unwrap().len(), 4);
        // entities {0, 1, 2} x relations {0, 1}
        assert_eq!(action_set_for(NodeRole::QueryGen, &s, &inst).unwrap().len(), 6);
    }

    #[test]
    fn action_sets_are_canonically_sorted() {
        let inst = instance();
        let mut s = ConversationState::initial(&inst.question);
        s.scratchpad = vec![DocId(5), DocId(1)];
        let acts = action_set_for(NodeRole::VerboseAnswer, &s, &inst).unwrap();
        let mut sorted = acts.clone();
        sorted.sort();
        assert_eq!(acts, sorted);
    }

    #[test]
    fn chain_following() {
        let inst = instance();
        let v = follow_chain(&inst.question, &[inst.candidates[0], inst.candidates[4]]);
        assert_eq!(v.depth, 0);
        let v = follow_chain(&inst.question, &[inst.candidates[2], inst.candidates[1]]);
        assert_eq!(v, ChainView { depth: 2, frontier: Entity(2), end_doc: Some(DocId(2)) });
    }
}
