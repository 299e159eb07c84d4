//! Per-node linear-softmax policies.

pub mod features;
mod prior;

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{FlowError, Result};
use crate::flow::{Action, FlowSpec, NodeRole, Observation};
use crate::optim::cocob::{CocobState, DEFAULT_ALPHA};

pub use features::{FeatureMap, FeatureVec};
pub use prior::prior_weights;

/// Numerically stable log-softmax.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - log_z).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

/// Index of the largest logit, lowest index on ties.
pub fn greedy_index(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, l) in logits.iter().enumerate().skip(1) {
        if *l > logits[best] {
            best = i;
        }
    }
    best
}

pub fn sample_index<R: Rng + ?Sized>(logits: &[f64], rng: &mut R) -> usize {
    let probs = softmax(logits);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Up to `k` highest-logit indices other than `chosen`, ties by index.
pub fn top_alternatives(logits: &[f64], chosen: usize, k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..logits.len()).filter(|&i| i != chosen).collect();
    order.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selection {
    Greedy,
    Sample,
}

/// Weights (and the DPO reference copy) of one node.
#[derive(Clone, Debug, PartialEq)]
pub struct NodePolicy {
    pub role: NodeRole,
    pub weights: Vec<f64>,
    pub ref_weights: Vec<f64>,
    pub optimizer: CocobState,
}

impl NodePolicy {
    pub fn new(role: NodeRole, initial: Vec<f64>, alpha: f64) -> NodePolicy {
        NodePolicy {
            role,
            optimizer: CocobState::new(&initial, alpha),
            ref_weights: initial.clone(),
            weights: initial,
        }
    }

    pub fn dimension(&self) -> usize {
        self.weights.len()
    }

    pub fn logits(&self, feats: &[FeatureVec], use_ref: bool) -> Result<Vec<f64>> {
        let w = if use_ref { &self.ref_weights } else { &self.weights };
        feats
            .iter()
            .map(|f| {
                f.iter().try_fold(0.0, |acc, &i| {
                    w.get(i)
                        .map(|wi| acc + wi)
                        .ok_or(FlowError::DimensionMismatch { expected: i + 1, actual: w.len() })
                })
            })
            .collect()
    }

    pub fn log_probs(&self, feats: &[FeatureVec], use_ref: bool) -> Result<Vec<f64>> {
        Ok(log_softmax(&self.logits(feats, use_ref)?))
    }

    pub fn log_prob(&self, feats: &[FeatureVec], index: usize, use_ref: bool) -> Result<f64> {
        if index >= feats.len() {
            return Err(FlowError::OutOfRange { index, len: feats.len() });
        }
        Ok(self.log_probs(feats, use_ref)?[index])
    }

    pub fn select<R: Rng + ?Sized>(&self, feats: &[FeatureVec], mode: Selection, rng: &mut R) -> Result<usize> {
        if feats.is_empty() {
            return Err(FlowError::Sequencing("selection over an empty action set".into()));
        }
        let logits = self.logits(feats, false)?;
        Ok(match mode {
            Selection::Greedy => greedy_index(&logits),
            Selection::Sample => sample_index(&logits, rng),
        })
    }

    pub fn alternatives(&self, feats: &[FeatureVec], chosen: usize, k: usize) -> Result<Vec<usize>> {
        Ok(top_alternatives(&self.logits(feats, false)?, chosen, k))
    }

    /// Expected feature vector under the current policy.
    pub fn expected_features(&self, feats: &[FeatureVec], probs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dimension()];
        for (f, p) in feats.iter().zip(probs) {
            for &i in f {
                out[i] += p;
            }
        }
        out
    }
}

/// One policy per flow role over a shared feature map.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowPolicies {
    pub feature_map: FeatureMap,
    pub nodes: BTreeMap<NodeRole, NodePolicy>,
}

impl FlowPolicies {
    /// Hand-set starting weights matching each role's obvious cues.
    pub fn with_prior(flow: &FlowSpec, feature_map: FeatureMap, alpha: f64) -> FlowPolicies {
        let nodes = flow
            .roles()
            .into_iter()
            .map(|role| (role, NodePolicy::new(role, prior_weights(role, feature_map.dimension()), alpha)))
            .collect();
        FlowPolicies { feature_map, nodes }
    }

    /// Tabula-rasa: all weights zero.
    pub fn zeros(flow: &FlowSpec, feature_map: FeatureMap, alpha: f64) -> FlowPolicies {
        let nodes = flow
            .roles()
            .into_iter()
            .map(|role| (role, NodePolicy::new(role, vec![0.0; feature_map.dimension()], alpha)))
            .collect();
        FlowPolicies { feature_map, nodes }
    }

    pub fn default_prior(flow: &FlowSpec) -> FlowPolicies {
        FlowPolicies::with_prior(flow, FeatureMap::new(), DEFAULT_ALPHA)
    }

    pub fn get(&self, role: NodeRole) -> Result<&NodePolicy> {
        self.nodes.get(&role).ok_or_else(|| FlowError::Config(format!("no policy for {}", role.name())))
    }

    pub fn get_mut(&mut self, role: NodeRole) -> Result<&mut NodePolicy> {
        self.nodes.get_mut(&role).ok_or_else(|| FlowError::Config(format!("no policy for {}", role.name())))
    }

    pub fn featurize(&self, role: NodeRole, obs: &Observation, actions: &[Action]) -> Result<Vec<FeatureVec>> {
        self.feature_map.featurize(role, obs, actions)
    }

    /// Checks that every role of `flow` has a policy of the right width.
    pub fn check(&self, flow: &FlowSpec) -> Result<()> {
        for role in flow.roles() {
            let p = self.get(role)?;
            let dim = self.feature_map.dimension();
            if p.weights.len() != dim || p.ref_weights.len() != dim {
                return Err(FlowError::DimensionMismatch { expected: dim, actual: p.weights.len() });
            }
        }
        Ok(())
    }
}
