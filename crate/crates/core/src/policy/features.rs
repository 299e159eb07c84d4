//! Binary indicator features over (observation, action) pairs.
//!
//! Every role owns a disjoint block of the shared feature space. Features are
//! computed from what the node observes; gold labels never enter.

use crate::env::types::Token;
use crate::error::{FlowError, Result};
use crate::flow::{follow_chain, Action, NodeRole, Observation};

/// Sorted indices of the active features.
pub type FeatureVec = Vec<usize>;

pub mod query {
    pub const BIAS: usize = 0;
    pub const FRONTIER_ENTITY: usize = 1;
    pub const NEXT_RELATION: usize = 2;
    pub const FRONTIER_AND_NEXT: usize = 3;
    pub const HEAD_ENTITY: usize = 4;
    pub const RECENT_OBJECT: usize = 5;
    pub const UNCOVERED_RELATION: usize = 6;
    /// One-hot position of the relation in the question, 4 slots.
    pub const RELATION_POSITION: usize = 7;
    pub const EXPANDED_ENTITY: usize = 11;
    pub const SIZE: usize = 12;
}

pub mod retrieve {
    pub const BIAS: usize = 0;
    pub const SUBJECT_MATCH: usize = 1;
    pub const RELATION_MATCH: usize = 2;
    pub const SUBJECT_AND_RELATION: usize = 3;
    pub const OBJECT_MATCH: usize = 4;
    /// Query/document token overlap bucket: 0, 1 or 2 shared tokens.
    pub const OVERLAP: usize = 5;
    pub const SIZE: usize = 8;
}

/// Stop and sufficiency features are replicated once per action.
pub mod stop {
    pub const BIAS: usize = 0;
    pub const RELATIONS_COVERED: usize = 1;
    pub const CHAIN_COMPLETE: usize = 2;
    /// One-hot chain depth 0..=4.
    pub const DEPTH: usize = 3;
    /// One-hot scratchpad size 1..=4 (clamped).
    pub const SCRATCHPAD_SIZE: usize = 8;
    pub const PER_ACTION: usize = 12;
    pub const STOP: usize = 0;
    pub const CONTINUE: usize = PER_ACTION;
    pub const SIZE: usize = 2 * PER_ACTION;
}

pub mod verbose {
    pub const BIAS: usize = 0;
    pub const OBJECT: usize = 1;
    pub const SUBJECT: usize = 2;
    pub const RECENT_DOC: usize = 3;
    pub const CHAIN_END_DOC: usize = 4;
    pub const FRONTIER_ENTITY: usize = 5;
    pub const HEAD_ENTITY: usize = 6;
    pub const LAST_RELATION: usize = 7;
    pub const SIZE: usize = 8;
}

pub mod concise {
    pub const BIAS: usize = 0;
    pub const IN_QUESTION: usize = 1;
    pub const ENTITY: usize = 2;
    pub const RELATION: usize = 3;
    pub const LAST_TOKEN: usize = 4;
    pub const NEW_ENTITY: usize = 5;
    pub const DOC_OBJECT: usize = 6;
    pub const DOC_SUBJECT: usize = 7;
    pub const SIZE: usize = 8;
}

pub mod sufficiency {
    pub const BIAS: usize = 0;
    pub const CHAIN_COMPLETE: usize = 1;
    pub const RELATIONS_COVERED: usize = 2;
    /// One-hot hops still missing from the followed chain, 0..=4.
    pub const REMAINING: usize = 3;
    pub const PER_ACTION: usize = 8;
    pub const SUFFICIENT: usize = 0;
    pub const INSUFFICIENT: usize = PER_ACTION;
    pub const SIZE: usize = 2 * PER_ACTION;
}

const BLOCKS: [usize; 6] = [query::SIZE, retrieve::SIZE, stop::SIZE, verbose::SIZE, concise::SIZE, sufficiency::SIZE];

/// Width of the role blocks before any padding.
pub const BASE_DIMENSION: usize = query::SIZE + retrieve::SIZE + stop::SIZE + verbose::SIZE + concise::SIZE + sufficiency::SIZE;

/// First feature index of the block owned by `role`.
pub fn block_offset(role: NodeRole) -> usize {
    BLOCKS[..role.tag() as usize].iter().sum()
}

pub fn block_size(role: NodeRole) -> usize {
    BLOCKS[role.tag() as usize]
}

/// The per-(observation, action) featurizer. `padding` appends never-active
/// columns.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FeatureMap {
    pub padding: usize,
}

impl FeatureMap {
    pub fn new() -> FeatureMap {
        FeatureMap { padding: 0 }
    }

    pub fn with_padding(padding: usize) -> FeatureMap {
        FeatureMap { padding }
    }

    pub fn dimension(&self) -> usize {
        BASE_DIMENSION + self.padding
    }

    pub fn features(&self, role: NodeRole, obs: &Observation, action: &Action) -> Result<FeatureVec> {
        let mismatch = || FlowError::Sequencing(format!("{:?} is not a {} output for this view", action, role.name()));
        let local = match (role, obs, action) {
            (NodeRole::QueryGen, Observation::Context { question, scratchpad }, Action::Query(q)) => {
                let chain = follow_chain(question, scratchpad);
                let next = question.relations.get(chain.depth);
                let frontier = q.entity == chain.frontier;
                let next_rel = next == Some(&q.relation);
                let mut f = vec![query::BIAS];
                f.extend(frontier.then_some(query::FRONTIER_ENTITY));
                f.extend(next_rel.then_some(query::NEXT_RELATION));
                f.extend((frontier && next_rel).then_some(query::FRONTIER_AND_NEXT));
                f.extend((q.entity == question.head).then_some(query::HEAD_ENTITY));
                f.extend((scratchpad.last().map(|d| d.object) == Some(q.entity)).then_some(query::RECENT_OBJECT));
                f.extend((!scratchpad.iter().any(|d| d.relation == q.relation)).then_some(query::UNCOVERED_RELATION));
                if let Some(pos) = question.relations.iter().position(|r| *r == q.relation) {
                    f.push(query::RELATION_POSITION + pos.min(3));
                }
                f.extend(scratchpad.iter().any(|d| d.subject == q.entity).then_some(query::EXPANDED_ENTITY));
                f
            }
            (NodeRole::Retrieve, Observation::Retrieval { query: q, .. }, Action::Retrieve(doc)) => {
                let subject = doc.subject == q.entity;
                let relation = doc.relation == q.relation;
                let object = doc.object == q.entity;
                let overlap = usize::from(subject || object) + usize::from(relation);
                let mut f = vec![retrieve::BIAS];
                f.extend(subject.then_some(retrieve::SUBJECT_MATCH));
                f.extend(relation.then_some(retrieve::RELATION_MATCH));
                f.extend((subject && relation).then_some(retrieve::SUBJECT_AND_RELATION));
                f.extend(object.then_some(retrieve::OBJECT_MATCH));
                f.push(retrieve::OVERLAP + overlap);
                f
            }
            (NodeRole::StopRetrieval, Observation::Context { question, scratchpad }, Action::Stop | Action::Continue) => {
                let base = if *action == Action::Stop { stop::STOP } else { stop::CONTINUE };
                let chain = follow_chain(question, scratchpad);
                let covered = question.relations.iter().all(|r| scratchpad.iter().any(|d| d.relation == *r));
                let mut f = vec![stop::BIAS];
                f.extend(covered.then_some(stop::RELATIONS_COVERED));
                f.extend((chain.depth == question.relations.len()).then_some(stop::CHAIN_COMPLETE));
                f.push(stop::DEPTH + chain.depth.min(4));
                f.push(stop::SCRATCHPAD_SIZE + scratchpad.len().clamp(1, 4) - 1);
                f.into_iter().map(|i| base + i).collect()
            }
            (NodeRole::VerboseAnswer, Observation::Context { question, scratchpad }, Action::Verbose { doc, entity }) => {
                let chain = follow_chain(question, scratchpad);
                let mut f = vec![verbose::BIAS];
                f.extend((*entity == doc.object).then_some(verbose::OBJECT));
                f.extend((*entity == doc.subject).then_some(verbose::SUBJECT));
                f.extend((scratchpad.last().map(|d| d.id) == Some(doc.id)).then_some(verbose::RECENT_DOC));
                f.extend((chain.end_doc == Some(doc.id)).then_some(verbose::CHAIN_END_DOC));
                f.extend((chain.depth > 0 && *entity == chain.frontier).then_some(verbose::FRONTIER_ENTITY));
                f.extend((*entity == question.head).then_some(verbose::HEAD_ENTITY));
                f.extend((question.relations.last() == Some(&doc.relation)).then_some(verbose::LAST_RELATION));
                f
            }
            (NodeRole::ConciseAnswer, Observation::Answer { question, verbose }, Action::Concise(t)) => {
                let q_len = question.relations.len() + 1;
                let in_question = question.contains(*t);
                let is_entity = matches!(t, Token::Entity(_));
                let mut f = vec![concise::BIAS];
                f.extend(in_question.then_some(concise::IN_QUESTION));
                f.push(if is_entity { concise::ENTITY } else { concise::RELATION });
                f.extend((verbose.last() == Some(t)).then_some(concise::LAST_TOKEN));
                f.extend((is_entity && !in_question).then_some(concise::NEW_ENTITY));
                f.extend((verbose.get(q_len + 2) == Some(t)).then_some(concise::DOC_OBJECT));
                f.extend((verbose.get(q_len) == Some(t)).then_some(concise::DOC_SUBJECT));
                f
            }
            (NodeRole::Sufficiency, Observation::Context { question, scratchpad }, Action::Sufficient | Action::Insufficient) => {
                let base = if *action == Action::Sufficient { sufficiency::SUFFICIENT } else { sufficiency::INSUFFICIENT };
                let chain = follow_chain(question, scratchpad);
                let remaining = question.relations.len() - chain.depth;
                let covered = question.relations.iter().all(|r| scratchpad.iter().any(|d| d.relation == *r));
                let mut f = vec![sufficiency::BIAS];
                f.extend((remaining == 0).then_some(sufficiency::CHAIN_COMPLETE));
                f.extend(covered.then_some(sufficiency::RELATIONS_COVERED));
                f.push(sufficiency::REMAINING + remaining.min(4));
                f.into_iter().map(|i| base + i).collect()
            }
            _ => return Err(mismatch()),
        };
        let offset = block_offset(role);
        let mut out: FeatureVec = local.into_iter().map(|i| offset + i).collect();
        out.sort_unstable();
        Ok(out)
    }

    pub fn featurize(&self, role: NodeRole, obs: &Observation, actions: &[Action]) -> Result<Vec<FeatureVec>> {
        actions.iter().map(|a| self.features(role, obs, a)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::types::{Doc, DocId, Entity, Question, Relation};
    use crate::flow::Query;

    #[test]
    fn blocks_are_disjoint_and_cover_dimension() {
        let mut end = 0;
        for role in NodeRole::ALL {
            assert_eq!(block_offset(role), end);
            end += block_size(role);
        }
        assert_eq!(end, BASE_DIMENSION);
        assert_eq!(FeatureMap::with_padding(3).dimension(), BASE_DIMENSION + 3);
    }

    #[test]
    fn retrieve_overlap_buckets() {
        let fm = FeatureMap::new();
        let q = Query { entity: Entity(1), relation: Relation(2) };
        let obs = Observation::Retrieval { query: q, candidates: vec![] };
        let off = block_offset(NodeRole::Retrieve);
        let gold = Doc { id: DocId(0), subject: Entity(1), relation: Relation(2), object: Entity(3) };
        let reversed = Doc { id: DocId(1), subject: Entity(3), relation: Relation(2), object: Entity(1) };
        let f = fm.features(NodeRole::Retrieve, &obs, &Action::Retrieve(gold)).unwrap();
        assert!(f.contains(&(off + retrieve::SUBJECT_AND_RELATION)));
        assert!(f.contains(&(off + retrieve::OVERLAP + 2)));
        let f = fm.features(NodeRole::Retrieve, &obs, &Action::Retrieve(reversed)).unwrap();
        assert!(!f.contains(&(off + retrieve::SUBJECT_AND_RELATION)));
        assert!(f.contains(&(off + retrieve::OBJECT_MATCH)));
        assert!(f.contains(&(off + retrieve::OVERLAP + 2)));
    }

    #[test]
    fn stop_features_split_by_action() {
        let fm = FeatureMap::new();
        let obs = Observation::Context { question: Question { head: Entity(0), relations: vec![Relation(0)] }, scratchpad: vec![] };
        let s = fm.features(NodeRole::StopRetrieval, &obs, &Action::Stop).unwrap();
        let c = fm.features(NodeRole::StopRetrieval, &obs, &Action::Continue).unwrap();
        let off = block_offset(NodeRole::StopRetrieval);
        assert!(s.iter().all(|&i| i < off + stop::CONTINUE));
        assert!(c.iter().all(|&i| i >= off + stop::CONTINUE));
    }

    #[test]
    fn wrong_action_kind_is_rejected() {
        let fm = FeatureMap::new();
        let obs = Observation::Context { question: Question { head: Entity(0), relations: vec![] }, scratchpad: vec![] };
        assert!(fm.features(NodeRole::QueryGen, &obs, &Action::Stop).is_err());
    }
}
