use crate::env::metrics::{answer_f1, support_f1};
use crate::env::types::{DocId, Instance, Token};
use crate::error::{FlowError, Result};
use crate::flow::FlowSpec;

/// Default bound on the number of enumerated retrieval sets and answers.
pub const DEFAULT_ENUMERATION_LIMIT: u64 = 5_000_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleBest {
    pub answer_f1: f64,
    pub support_f1: f64,
}

fn n_choose_k(n: u64, k: u64) -> u64 {
    (0..k).fold(1u64, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Exact best achievable answer and support F1, maximized independently.
///
/// Retrieval may pick any unretrieved candidate regardless of the issued
/// query, so the reachable scratchpads are exactly the non-empty candidate
/// subsets of size at most `max_retrievals`; enumeration runs over those and
/// over every (document, entity, answer token) choice inside each one.
pub fn oracle_best(instance: &Instance, flow: &FlowSpec, limit: u64) -> Result<OracleBest> {
    let n = instance.candidates.len();
    let cap = flow.max_retrievals.min(n);
    let q_tokens = instance.question.tokens();
    let per_doc_answers = 2 * (q_tokens.len() as u64 + 4);
    let total: u64 = (1..=cap as u64)
        .map(|s| n_choose_k(n as u64, s).saturating_mul(1 + s * per_doc_answers))
        .fold(0u64, u64::saturating_add);
    if total > limit {
        return Err(FlowError::EnumerationLimit { limit });
    }

    let mut best = OracleBest { answer_f1: 0.0, support_f1: 0.0 };
    let mut chosen: Vec<usize> = Vec::with_capacity(cap);
    let mut visit = |subset: &[usize]| {
        let ids: Vec<DocId> = subset.iter().map(|&i| instance.candidates[i].id).collect();
        best.support_f1 = best.support_f1.max(support_f1(&ids, &instance.gold_support));
        for &i in subset {
            let doc = &instance.candidates[i];
            for entity in doc.entities() {
                let verbose: Vec<Token> = q_tokens
                    .iter()
                    .copied()
                    .chain(doc.tokens())
                    .chain(std::iter::once(Token::Entity(entity)))
                    .collect();
                for t in verbose {
                    best.answer_f1 = best.answer_f1.max(answer_f1(&[t], &instance.gold_answers));
                }
            }
        }
    };
    fn rec(start: usize, n: usize, cap: usize, chosen: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
        for i in start..n {
            chosen.push(i);
            visit(chosen);
            if chosen.len() < cap {
                rec(i + 1, n, cap, chosen, visit);
            }
            chosen.pop();
        }
    }
    rec(0, n, cap, &mut chosen, &mut visit);
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::dataset::{gen_dataset, make_unanswerable_twin, DatasetConfig};
    use crate::flow::Variant;
    use rand::SeedableRng;

    #[test]
    fn answerable_instances_are_perfectly_solvable() {
        let flow = FlowSpec::new(Variant::Answerable, 4).unwrap();
        let data = gen_dataset(&DatasetConfig { n_instances: 40, ..Default::default() }, 1).unwrap();
        for inst in &data {
            let best = oracle_best(inst, &flow, DEFAULT_ENUMERATION_LIMIT).unwrap();
            assert_eq!(best, OracleBest { answer_f1: 1.0, support_f1: 1.0 });
        }
    }

    #[test]
    fn two_hop_twin_support_bound() {
        // one of two gold docs is missing: best is P = 1, R = 1/2
        let cfg = DatasetConfig { n_instances: 10, hop_mix: [(2, 1.0)].into_iter().collect(), ..Default::default() };
        let flow = FlowSpec::new(Variant::Full, 4).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        for inst in gen_dataset(&cfg, 2).unwrap() {
            let twin = make_unanswerable_twin(&inst, &mut rng, cfg.n_entities, cfg.n_relations).unwrap();
            let best = oracle_best(&twin, &flow, DEFAULT_ENUMERATION_LIMIT).unwrap();
            assert!((best.support_f1 - 2.0 / 3.0).abs() < 1e-12);
            assert!(best.support_f1 < 1.0);
        }
    }

    #[test]
    fn limit_is_enforced() {
        let flow = FlowSpec::new(Variant::Answerable, 4).unwrap();
        let inst = &gen_dataset(&DatasetConfig { n_instances: 1, ..Default::default() }, 1).unwrap()[0];
        assert!(matches!(oracle_best(inst, &flow, 10), Err(FlowError::EnumerationLimit { limit: 10 })));
    }
}
