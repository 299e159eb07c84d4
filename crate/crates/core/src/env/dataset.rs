//! Synthetic multi-hop QA generation and the JSON Lines dataset file.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::types::{Doc, DocId, Entity, Instance, Question, Relation, Token};
use crate::error::{FlowError, Result};
use crate::flow::Variant;

pub const DATASET_FORMAT: &str = "flowdev-dataset";
pub const DATASET_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub n_instances: usize,
    /// Probability of each hop count.
    pub hop_mix: BTreeMap<usize, f64>,
    pub min_candidates: usize,
    pub max_candidates: usize,
    pub n_entities: u32,
    pub n_relations: u32,
    pub variant: Variant,
    pub max_retrievals: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n_instances: 2000,
            hop_mix: [(2, 0.5), (3, 0.3), (4, 0.2)].into_iter().collect(),
            min_candidates: 6,
            max_candidates: 10,
            n_entities: 1000,
            n_relations: 16,
            variant: Variant::Answerable,
            max_retrievals: 4,
        }
    }
}

impl DatasetConfig {
    fn check(&self) -> Result<()> {
        let infeasible = |m: String| Err(FlowError::InfeasibleConfig(m));
        let mass: f64 = self.hop_mix.values().sum();
        if self.hop_mix.is_empty() || (mass - 1.0).abs() > 1e-9 {
            return infeasible(format!("hop mix must sum to 1, got {mass}"));
        }
        let max_hops = *self.hop_mix.keys().max().expect("non-empty");
        if self.hop_mix.contains_key(&0) {
            return infeasible("hop counts must be positive".into());
        }
        if max_hops > self.max_retrievals {
            return infeasible(format!("{max_hops} hops exceed the retrieval cap {}", self.max_retrievals));
        }
        if self.min_candidates > self.max_candidates {
            return infeasible("min_candidates exceeds max_candidates".into());
        }
        if self.min_candidates < self.max_retrievals {
            return infeasible(format!(
                "{} candidates cannot cover {} retrievals",
                self.min_candidates, self.max_retrievals
            ));
        }
        if self.max_candidates <= max_hops {
            return infeasible(format!("{} candidates leave no room for distractors", self.max_candidates));
        }
        if (self.n_relations as usize) < max_hops + 1 {
            return infeasible(format!("{} relations cannot build {max_hops}-hop chains", self.n_relations));
        }
        if (self.n_entities as usize) < max_hops + 1 + 2 * self.max_candidates {
            return infeasible(format!("{} entities too few for collision-free chains", self.n_entities));
        }
        if self.variant == Variant::Full && self.n_instances % 2 != 0 {
            return infeasible("full-variant datasets hold whole pairs; n_instances must be even".into());
        }
        Ok(())
    }
}

/// The entity chain behind an instance: `entities[i] -relations[i]-> entities[i + 1]`.
struct Chain {
    entities: Vec<Entity>,
    relations: Vec<Relation>,
}

impl Chain {
    fn of(inst: &Instance) -> Option<Chain> {
        // answerable instances hold the full chain; rebuild it from gold docs
        let mut entities = vec![inst.question.head];
        for (i, rel) in inst.question.relations.iter().enumerate() {
            let doc = inst.doc(*inst.gold_support.get(i)?)?;
            if doc.subject != entities[i] || doc.relation != *rel {
                return None;
            }
            entities.push(doc.object);
        }
        Some(Chain { entities, relations: inst.question.relations.clone() })
    }

    fn is_chain_pair(&self, subject: Entity, relation: Relation) -> bool {
        self.relations
            .iter()
            .enumerate()
            .any(|(i, r)| self.entities[i] == subject && *r == relation)
    }
}

fn fresh_entity(rng: &mut ChaCha8Rng, n_entities: u32, taken: &BTreeSet<Entity>) -> Entity {
    loop {
        let e = Entity(rng.gen_range(0..n_entities));
        if !taken.contains(&e) {
            return e;
        }
    }
}

/// Draws a distractor that shares an entity with the chain but can never be
/// mistaken for a chain link (its `(subject, relation)` is never a hop).
fn draw_distractor(
    rng: &mut ChaCha8Rng,
    chain: &Chain,
    existing: &[Doc],
    n_entities: u32,
    n_relations: u32,
    id: DocId,
) -> Result<Doc> {
    let chain_entities: BTreeSet<Entity> = chain.entities.iter().copied().collect();
    let hops = chain.relations.len();
    for _ in 0..1000 {
        let i = rng.gen_range(0..hops);
        let j = rng.gen_range(0..=hops);
        let x = fresh_entity(rng, n_entities, &chain_entities);
        let any_rel = Relation(rng.gen_range(0..n_relations));
        let (subject, relation, object) = match rng.gen_range(0..100) {
            // reversed link: matches both query tokens, wrong direction
            0..=34 => (x, chain.relations[i], chain.entities[i]),
            // right subject, wrong relation
            35..=59 => (chain.entities[i], any_rel, x),
            // right relation, dangling into the chain
            60..=79 => (x, chain.relations[i], chain.entities[j]),
            // any chain entity as subject
            _ => (chain.entities[j], any_rel, x),
        };
        if chain.is_chain_pair(subject, relation) {
            continue;
        }
        let duplicate = existing
            .iter()
            .any(|d| (d.subject, d.relation, d.object) == (subject, relation, object));
        if duplicate {
            continue;
        }
        return Ok(Doc { id, subject, relation, object });
    }
    Err(FlowError::InfeasibleConfig("could not place a distinct distractor".into()))
}

fn sample_hops(rng: &mut ChaCha8Rng, mix: &BTreeMap<usize, f64>) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (&hops, &p) in mix {
        acc += p;
        if u < acc {
            return hops;
        }
    }
    *mix.keys().next_back().expect("non-empty hop mix")
}

fn gen_answerable(rng: &mut ChaCha8Rng, config: &DatasetConfig, id: u64) -> Result<Instance> {
    let hops = sample_hops(rng, &config.hop_mix);
    let mut taken = BTreeSet::new();
    let mut entities = Vec::with_capacity(hops + 1);
    for _ in 0..=hops {
        let e = fresh_entity(rng, config.n_entities, &taken);
        taken.insert(e);
        entities.push(e);
    }
    let mut all_relations: Vec<Relation> = (0..config.n_relations).map(Relation).collect();
    all_relations.shuffle(rng);
    let relations: Vec<Relation> = all_relations[..hops].to_vec();
    let chain = Chain { entities, relations };

    let n_candidates = rng.gen_range(config.min_candidates.max(hops + 1)..=config.max_candidates);
    let mut docs: Vec<Doc> = (0..hops)
        .map(|i| Doc {
            id: DocId(0),
            subject: chain.entities[i],
            relation: chain.relations[i],
            object: chain.entities[i + 1],
        })
        .collect();
    while docs.len() < n_candidates {
        let d = draw_distractor(rng, &chain, &docs, config.n_entities, config.n_relations, DocId(0))?;
        docs.push(d);
    }
    // shuffle, then number by position so ids carry no gold signal
    let mut order: Vec<usize> = (0..docs.len()).collect();
    order.shuffle(rng);
    let mut candidates = vec![docs[0]; docs.len()];
    let mut gold_support = vec![DocId(0); hops];
    for (pos, &src) in order.iter().enumerate() {
        candidates[pos] = Doc { id: DocId(pos as u32), ..docs[src] };
        if src < hops {
            gold_support[src] = DocId(pos as u32);
        }
    }
    Ok(Instance {
        id,
        pair_id: None,
        question: Question { head: chain.entities[0], relations: chain.relations.clone() },
        hops,
        candidates,
        gold_support,
        gold_answers: vec![vec![Token::Entity(chain.entities[hops])]],
        answerable: true,
    })
}

/// Copies an answerable instance, swapping one uniformly chosen gold document
/// for a fresh distractor. The removed id is retired so the twin's gold
/// support is no longer contained in its candidates.
pub fn make_unanswerable_twin(instance: &Instance, rng: &mut ChaCha8Rng, n_entities: u32, n_relations: u32) -> Result<Instance> {
    if !instance.answerable {
        return Err(FlowError::Config(format!("instance {} is already unanswerable", instance.id)));
    }
    let chain = Chain::of(instance).ok_or_else(|| FlowError::MalformedInstance {
        instance: instance.id,
        reason: "gold support does not form the question chain".into(),
    })?;
    let removed = instance.gold_support[rng.gen_range(0..instance.gold_support.len())];
    let mut candidates: Vec<Doc> = instance.candidates.iter().copied().filter(|d| d.id != removed).collect();
    let next_id = instance.candidates.iter().map(|d| d.id.0).max().unwrap_or(0) + 1;
    let extra = draw_distractor(rng, &chain, &instance.candidates, n_entities, n_relations, DocId(next_id))?;
    candidates.push(extra);
    Ok(Instance { candidates, answerable: false, ..instance.clone() })
}

/// Generates a deterministic dataset. Full-variant datasets are made of
/// adjacent twin pairs whose order within the pair is random.
pub fn gen_dataset(config: &DatasetConfig, seed: u64) -> Result<Vec<Instance>> {
    config.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(config.n_instances);
    match config.variant {
        Variant::Answerable => {
            for id in 0..config.n_instances as u64 {
                out.push(gen_answerable(&mut rng, config, id)?);
            }
        }
        Variant::Full => {
            for pair in 0..(config.n_instances / 2) as u64 {
                let mut base = gen_answerable(&mut rng, config, 0)?;
                base.pair_id = Some(pair);
                let mut twin = make_unanswerable_twin(&base, &mut rng, config.n_entities, config.n_relations)?;
                let (first, second) = if rng.gen_bool(0.5) { (&mut base, &mut twin) } else { (&mut twin, &mut base) };
                first.id = 2 * pair;
                second.id = 2 * pair + 1;
                out.push(first.clone());
                out.push(second.clone());
            }
        }
    }
    for inst in &out {
        inst.validate(config.max_retrievals)?;
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
}

/// An in-memory dataset plus the variant it was built for.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub variant: Variant,
    pub instances: Vec<Instance>,
}

impl Dataset {
    /// Wraps instances, inferring the variant from twin pairing.
    pub fn new(instances: Vec<Instance>) -> Result<Dataset> {
        let variant = if instances.iter().any(|i| i.pair_id.is_some()) { Variant::Full } else { Variant::Answerable };
        let ds = Dataset { variant, instances };
        if variant == Variant::Full {
            ds.pairs()?;
        }
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Twin pairs as index pairs into `instances`, ordered by pair id.
    pub fn pairs(&self) -> Result<Vec<[usize; 2]>> {
        let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for (i, inst) in self.instances.iter().enumerate() {
            let pid = inst.pair_id.ok_or_else(|| FlowError::PairMismatch(format!("instance {} has no pair id", inst.id)))?;
            groups.entry(pid).or_default().push(i);
        }
        groups
            .into_iter()
            .map(|(pid, members)| {
                let answerable = members.iter().filter(|&&i| self.instances[i].answerable).count();
                match members.as_slice() {
                    [a, b] if answerable == 1 => Ok([*a, *b]),
                    _ => Err(FlowError::PairMismatch(format!(
                        "pair {pid} has {} members with {answerable} answerable",
                        members.len()
                    ))),
                }
            })
            .collect()
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        let header = Header { format: DATASET_FORMAT.into(), version: DATASET_VERSION };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for inst in &self.instances {
            serde_json::to_writer(&mut w, inst)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_jsonl(path: &Path, max_retrievals: usize) -> Result<Dataset> {
        let reader = BufReader::new(File::open(path)?);
        let mut lines = reader.lines();
        let first = lines.next().ok_or_else(|| FlowError::Format("empty dataset file".into()))??;
        let header: Header = serde_json::from_str(&first)
            .map_err(|e| FlowError::Format(format!("bad dataset header: {e}")))?;
        if header.format != DATASET_FORMAT || header.version != DATASET_VERSION {
            return Err(FlowError::Format(format!(
                "unsupported dataset {} v{}",
                header.format, header.version
            )));
        }
        let mut instances = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let inst: Instance = serde_json::from_str(&line)?;
            inst.validate(max_retrievals)?;
            instances.push(inst);
        }
        Dataset::new(instances)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(variant: Variant, n: usize) -> DatasetConfig {
        DatasetConfig { n_instances: n, variant, ..DatasetConfig::default() }
    }

    #[test]
    fn deterministic_per_seed() {
        let c = small(Variant::Answerable, 50);
        assert_eq!(gen_dataset(&c, 7).unwrap(), gen_dataset(&c, 7).unwrap());
        assert_ne!(gen_dataset(&c, 7).unwrap(), gen_dataset(&c, 8).unwrap());
    }

    #[test]
    fn answerable_variant_is_all_answerable() {
        let data = gen_dataset(&small(Variant::Answerable, 100), 1).unwrap();
        assert!(data.iter().all(|i| i.answerable && i.pair_id.is_none()));
        for inst in &data {
            let chain = Chain::of(inst).expect("gold chain present");
            assert_eq!(inst.gold_answers, vec![vec![Token::Entity(*chain.entities.last().unwrap())]]);
            assert!((6..=10).contains(&inst.candidates.len()));
        }
    }

    #[test]
    fn two_hop_mix_gives_two_gold_docs() {
        let c = DatasetConfig { hop_mix: [(2, 1.0)].into_iter().collect(), ..small(Variant::Answerable, 10) };
        let data = gen_dataset(&c, 3).unwrap();
        assert_eq!(data.len(), 10);
        assert!(data.iter().all(|i| i.gold_support.len() == 2 && i.hops == 2));
    }

    #[test]
    fn distractors_touch_the_chain_but_never_extend_it() {
        for inst in gen_dataset(&small(Variant::Answerable, 200), 5).unwrap() {
            let chain = Chain::of(&inst).unwrap();
            for d in inst.candidates.iter().filter(|d| !inst.gold_support.contains(&d.id)) {
                assert!(d.entities().iter().any(|e| chain.entities.contains(e)));
                assert!(!chain.is_chain_pair(d.subject, d.relation));
            }
        }
    }

    #[test]
    fn full_variant_pairs_are_twins() {
        let data = gen_dataset(&small(Variant::Full, 40), 2).unwrap();
        let ds = Dataset::new(data).unwrap();
        assert_eq!(ds.variant, Variant::Full);
        let pairs = ds.pairs().unwrap();
        assert_eq!(pairs.len(), 20);
        let mut twin_first = 0;
        for [a, b] in pairs {
            let (a, b) = (&ds.instances[a], &ds.instances[b]);
            assert_eq!(a.question, b.question);
            assert_eq!(a.candidates.len(), b.candidates.len());
            twin_first += usize::from(!a.answerable);
        }
        // which twin comes first must not be a giveaway
        assert!(twin_first > 0 && twin_first < 20);
    }

    #[test]
    fn twin_swaps_one_gold_doc() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for inst in gen_dataset(&small(Variant::Answerable, 30), 4).unwrap() {
            let twin = make_unanswerable_twin(&inst, &mut rng, 1000, 16).unwrap();
            assert_eq!(twin.candidates.len(), inst.candidates.len());
            assert!(!twin.answerable);
            let ids = twin.candidate_ids();
            assert!(!twin.gold_support.iter().all(|g| ids.contains(g)));
            twin.validate(4).unwrap();
            assert!(make_unanswerable_twin(&twin, &mut rng, 1000, 16).is_err());
        }
    }

    #[test]
    fn infeasible_configs_rejected() {
        let too_many_hops = DatasetConfig { hop_mix: [(5, 1.0)].into_iter().collect(), ..DatasetConfig::default() };
        assert!(matches!(gen_dataset(&too_many_hops, 0), Err(FlowError::InfeasibleConfig(_))));
        let cramped = DatasetConfig { min_candidates: 3, max_candidates: 3, ..DatasetConfig::default() };
        assert!(gen_dataset(&cramped, 0).is_err());
        let odd = small(Variant::Full, 5);
        assert!(gen_dataset(&odd, 0).is_err());
    }

    #[test]
    fn jsonl_round_trip_with_header() {
        let ds = Dataset::new(gen_dataset(&small(Variant::Full, 6), 9).unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        ds.write_jsonl(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), r#"{"format":"flowdev-dataset","version":1}"#);
        assert_eq!(text.lines().count(), 7);
        assert_eq!(Dataset::read_jsonl(&path, 4).unwrap(), ds);
    }
}
