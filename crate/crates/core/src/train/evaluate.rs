use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::env::dataset::Dataset;
use crate::env::grounding::{enforce_grounded, is_off_document};
use crate::env::metrics::answer_f1;
use crate::env::pairwise::pairwise_infer;
use crate::env::types::{Doc, Instance};
use crate::error::{FlowError, Result};
use crate::flow::{run_episode, FlowSpec, SelectionMode, Trace, Variant};
use crate::policy::FlowPolicies;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalFlags {
    pub enforce_grounded: bool,
    pub pairwise: bool,
}

/// Per-episode scores after post-hoc treatments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeScore {
    pub instance_id: u64,
    pub answer_f1: f64,
    pub support_f1: f64,
    pub off_document: bool,
    pub sufficiency_pred: Option<bool>,
    pub sufficiency_score: Option<f64>,
    pub answerable: bool,
}

impl EpisodeScore {
    pub fn sufficiency_correct(&self) -> Option<bool> {
        self.sufficiency_pred.map(|p| p == self.answerable)
    }
}

fn scratchpad(trace: &Trace, instance: &Instance) -> Vec<Doc> {
    trace.final_state.scratchpad.iter().filter_map(|id| instance.doc(*id).copied()).collect()
}

pub fn score_episode(trace: &Trace, instance: &Instance, enforce: bool) -> EpisodeScore {
    let concise = trace.final_state.concise_answer.clone().unwrap_or_default();
    let docs = scratchpad(trace, instance);
    let answer = if enforce { enforce_grounded(&concise, &docs) } else { concise.clone() };
    EpisodeScore {
        instance_id: instance.id,
        answer_f1: answer_f1(&answer, &instance.gold_answers),
        support_f1: trace.outcome.support_f1,
        off_document: is_off_document(&concise, &docs),
        sufficiency_pred: trace.final_state.sufficiency_pred,
        sufficiency_score: trace.sufficiency_score(),
        answerable: instance.answerable,
    }
}

/// Index pairs of twins that are both present, by pair id.
pub fn twin_indices(instances: &[&Instance]) -> Vec<[usize; 2]> {
    let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, inst) in instances.iter().enumerate() {
        if let Some(pid) = inst.pair_id {
            groups.entry(pid).or_default().push(i);
        }
    }
    groups.into_values().filter_map(|m| <[usize; 2]>::try_from(m).ok()).collect()
}

/// Replaces raw sufficiency predictions of twins found among `scores` with
/// the pairwise decision. Returns how many pairs were rewritten.
pub fn apply_pairwise(scores: &mut [EpisodeScore], instances: &[&Instance]) -> Result<usize> {
    let mut done = 0;
    for [i, j] in twin_indices(instances) {
        let (Some(a), Some(b)) = (scores[i].sufficiency_score, scores[j].sufficiency_score) else {
            return Err(FlowError::Sequencing("pairwise inference needs sufficiency scores".into()));
        };
        let [pa, pb] = pairwise_infer([instances[i], instances[j]], [a, b])?;
        scores[i].sufficiency_pred = Some(pa);
        scores[j].sufficiency_pred = Some(pb);
        done += 1;
    }
    Ok(done)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: usize,
    pub answer_f1: f64,
    pub support_f1: f64,
    pub sufficiency_acc: Option<f64>,
    pub off_document_fraction: f64,
    /// Pairs with exactly one instance predicted answerable, out of all pairs.
    pub pairs_exactly_one: Option<(usize, usize)>,
    pub flags: EvalFlags,
}

pub fn summarize(scores: &[EpisodeScore], instances: &[&Instance], flags: EvalFlags) -> EvalReport {
    let n = scores.len().max(1) as f64;
    let suff: Vec<bool> = scores.iter().filter_map(EpisodeScore::sufficiency_correct).collect();
    let twins = twin_indices(instances);
    let pairs_exactly_one = (!twins.is_empty()).then(|| {
        let yes = |i: usize| scores[i].sufficiency_pred == Some(true);
        (twins.iter().filter(|[i, j]| yes(*i) != yes(*j)).count(), twins.len())
    });
    EvalReport {
        episodes: scores.len(),
        answer_f1: scores.iter().map(|s| s.answer_f1).sum::<f64>() / n,
        support_f1: scores.iter().map(|s| s.support_f1).sum::<f64>() / n,
        sufficiency_acc: (!suff.is_empty()).then(|| suff.iter().filter(|c| **c).count() as f64 / suff.len() as f64),
        off_document_fraction: scores.iter().filter(|s| s.off_document).count() as f64 / n,
        pairs_exactly_one,
        flags,
    }
}

/// Greedy episodes over the dataset with optional post-hoc treatments.
pub fn evaluate_scores(dataset: &Dataset, flow: &FlowSpec, policies: &FlowPolicies, flags: EvalFlags) -> Result<Vec<EpisodeScore>> {
    if dataset.variant != flow.variant {
        return Err(FlowError::Config(format!("dataset is {:?} but the flow is {:?}", dataset.variant, flow.variant)));
    }
    if flags.pairwise {
        if flow.variant != Variant::Full {
            return Err(FlowError::Config("pairwise inference needs the full variant".into()));
        }
        dataset.pairs()?;
    }
    let mut scores = Vec::with_capacity(dataset.len());
    for inst in &dataset.instances {
        let trace = run_episode(flow, policies, inst, SelectionMode::Greedy, inst.id)?;
        scores.push(score_episode(&trace, inst, flags.enforce_grounded));
    }
    if flags.pairwise {
        let refs: Vec<&Instance> = dataset.instances.iter().collect();
        apply_pairwise(&mut scores, &refs)?;
    }
    Ok(scores)
}

pub fn evaluate(dataset: &Dataset, flow: &FlowSpec, policies: &FlowPolicies, flags: EvalFlags) -> Result<EvalReport> {
    let scores = evaluate_scores(dataset, flow, policies, flags)?;
    let refs: Vec<&Instance> = dataset.instances.iter().collect();
    Ok(summarize(&scores, &refs, flags))
}
