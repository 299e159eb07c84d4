#![allow(dead_code)]

use flowdev::env::dataset::{gen_dataset, Dataset, DatasetConfig};
use flowdev::env::types::{Doc, DocId, Entity, Instance, Question, Relation, Token};
use flowdev::flow::{FlowSpec, NodeRole, Variant};
use flowdev::policy::features::block_offset;
use flowdev::policy::FlowPolicies;

pub fn doc(id: u32, s: u32, r: u32, o: u32) -> Doc {
    Doc { id: DocId(id), subject: Entity(s), relation: Relation(r), object: Entity(o) }
}

/// Two hops 10 -r1-> 11 -r2-> 12, with doc 0 a distractor that sorts first.
pub fn two_hop() -> Instance {
    Instance {
        id: 1,
        pair_id: None,
        question: Question { head: Entity(10), relations: vec![Relation(1), Relation(2)] },
        hops: 2,
        candidates: vec![doc(0, 20, 1, 10), doc(1, 10, 1, 11), doc(2, 11, 2, 12), doc(3, 12, 3, 21)],
        gold_support: vec![DocId(1), DocId(2)],
        gold_answers: vec![vec![Token::Entity(Entity(12))]],
        answerable: true,
    }
}

pub fn set_weight(p: &mut FlowPolicies, role: NodeRole, local: usize, value: f64) {
    let node = p.get_mut(role).unwrap();
    let i = block_offset(role) + local;
    node.weights[i] = value;
    node.ref_weights[i] = value;
    node.optimizer.initial_weights[i] = value;
}

pub fn dataset(n: usize, variant: Variant, seed: u64) -> Dataset {
    let cfg = DatasetConfig { n_instances: n, variant, ..DatasetConfig::default() };
    Dataset::new(gen_dataset(&cfg, seed).unwrap()).unwrap()
}

pub fn flow(variant: Variant) -> FlowSpec {
    FlowSpec::new(variant, 4).unwrap()
}
