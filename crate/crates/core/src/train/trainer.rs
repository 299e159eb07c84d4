//! Online training: greedy episodes, progressive validation, deviation
//! rollouts, and one update per minibatch.

use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use crate::env::dataset::Dataset;
use crate::env::types::Instance;
use crate::error::{FlowError, Result};
use crate::flow::{run_episode, FlowSpec, SelectionMode};
use crate::optim::{apply_minibatch, soft_ref_update, terminal_example, UpdateReport};
use crate::policy::{FeatureMap, FlowPolicies};
use crate::rollout::{generate_preferences, RolloutStats};
use crate::train::checkpoint::{Checkpoint, TrainCursor};
use crate::train::config::TrainConfig;
use crate::train::evaluate::{apply_pairwise, score_episode, EpisodeScore};
use crate::train::pv::PvAccumulator;

/// One metrics log line per minibatch. PV fields are running means over all
/// episodes seen so far, recorded before the minibatch's update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub episodes_seen: u64,
    pub pv_answer_f1: f64,
    pub pv_support_f1: f64,
    pub pv_suff_acc: Option<f64>,
    pub pairs: usize,
    pub dpo_loss_mean: Option<f64>,
    pub sup_loss_mean: Option<f64>,
    pub ref_updated: bool,
    pub rollouts_launched: usize,
    pub rollout_invocations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateRecord {
    pub minibatch_idx: u64,
    #[serde(flatten)]
    pub report: UpdateReport,
    pub ref_updated: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    /// Minibatch metrics are in the accumulator; no update has happened.
    Recorded,
    /// The minibatch's update (and any reference update) is applied.
    Updated,
}

pub struct TrainEvent<'a> {
    pub phase: Phase,
    pub minibatch_idx: u64,
    pub policies: &'a FlowPolicies,
    pub pv: &'a PvAccumulator,
    /// Scores of the minibatch's episodes.
    pub scores: &'a [EpisodeScore],
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub flow: FlowSpec,
    pub policies: FlowPolicies,
    pub pv: PvAccumulator,
    pub cursor: TrainCursor,
}

impl TrainState {
    pub fn fresh(dataset: &Dataset, config: &TrainConfig) -> Result<TrainState> {
        let flow = FlowSpec::new(dataset.variant, config.max_retrievals)?;
        let fmap = FeatureMap::new();
        let policies = if config.no_prior {
            FlowPolicies::zeros(&flow, fmap, config.alpha)
        } else {
            FlowPolicies::with_prior(&flow, fmap, config.alpha)
        };
        Ok(TrainState { flow, policies, pv: PvAccumulator::default(), cursor: TrainCursor::default() })
    }

    pub fn from_checkpoint(c: Checkpoint) -> TrainState {
        TrainState { flow: c.flow, policies: c.policies, pv: c.pv, cursor: c.cursor }
    }

    pub fn to_checkpoint(&self, config: &TrainConfig) -> Checkpoint {
        Checkpoint {
            config_hash: config.hash(),
            flow: self.flow,
            policies: self.policies.clone(),
            pv: self.pv.clone(),
            cursor: self.cursor.clone(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub state: TrainState,
    pub metrics: Vec<MetricsRecord>,
    pub rollouts: Vec<RolloutStats>,
    pub updates: Vec<UpdateRecord>,
    pub interrupted: bool,
}

impl TrainOutput {
    /// Writes `metrics.jsonl`, `rollouts.jsonl`, `updates.jsonl` and
    /// `checkpoint.bin` into `dir`.
    pub fn write(&self, dir: &Path, config: &TrainConfig) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_jsonl(&dir.join("metrics.jsonl"), &self.metrics)?;
        write_jsonl(&dir.join("rollouts.jsonl"), &self.rollouts)?;
        write_jsonl(&dir.join("updates.jsonl"), &self.updates)?;
        self.state.to_checkpoint(config).write(&dir.join("checkpoint.bin"))
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn train(dataset: &Dataset, config: &TrainConfig, resume: Option<TrainState>) -> Result<TrainOutput> {
    train_with(dataset, config, resume, &mut |_| {}, None)
}

/// The training loop. `hook` sees each minibatch after its metrics are
/// recorded and again after its update. `interrupt` is polled between
/// minibatches.
pub fn train_with(
    dataset: &Dataset,
    config: &TrainConfig,
    resume: Option<TrainState>,
    hook: &mut dyn FnMut(&TrainEvent),
    interrupt: Option<&AtomicBool>,
) -> Result<TrainOutput> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(FlowError::Config("empty training set".into()));
    }
    let mut state = match resume {
        Some(s) => s,
        None => TrainState::fresh(dataset, config)?,
    };
    if state.flow.variant != dataset.variant {
        return Err(FlowError::Config(format!("dataset is {:?} but the flow is {:?}", dataset.variant, state.flow.variant)));
    }
    let total = dataset.len() * config.passes;
    let end = config.max_episodes.map_or(total, |m| m.min(total));
    let start = state.cursor.episodes_seen as usize;
    let stream: Vec<&Instance> = (start.min(end)..end).map(|i| &dataset.instances[i % dataset.len()]).collect();

    let mut out = TrainOutput { state: state.clone(), metrics: Vec::new(), rollouts: Vec::new(), updates: Vec::new(), interrupted: false };
    for batch in stream.chunks(config.minibatch) {
        if interrupt.is_some_and(|f| f.load(Ordering::SeqCst)) {
            out.interrupted = true;
            break;
        }
        let idx = state.cursor.minibatches;
        let flow = state.flow;

        let mut traces = Vec::with_capacity(batch.len());
        let mut scores = Vec::with_capacity(batch.len());
        for inst in batch {
            let trace = run_episode(&flow, &state.policies, inst, SelectionMode::Greedy, config.seed ^ inst.id)?;
            scores.push(score_episode(&trace, inst, config.enforce_grounded));
            traces.push(trace);
        }
        if config.pairwise_inference {
            apply_pairwise(&mut scores, batch)?;
        }

        let mut pairs = Vec::new();
        let mut supervised = Vec::new();
        let mut stats = Vec::with_capacity(batch.len());
        if !config.frozen {
            for (trace, inst) in traces.iter().zip(batch) {
                let (p, s) = generate_preferences(trace, &flow, &state.policies, inst, config.k)?;
                pairs.extend(p);
                stats.push(s);
                supervised.extend(terminal_example(trace, &inst.gold_answers));
            }
        }

        // progressive validation: record before anything is updated
        for (i, s) in scores.iter().enumerate() {
            state.pv.answer_f1.push(s.answer_f1);
            state.pv.support_f1.push(s.support_f1);
            if let Some(c) = s.sufficiency_correct() {
                state.pv.sufficiency_acc.push(c as u8 as f64);
            }
            state.pv.pairs_per_episode.push(stats.get(i).map_or(0.0, |s| s.pairs_emitted as f64));
            state.cursor.window_sum += s.answer_f1;
            state.cursor.window_count += 1;
        }
        hook(&TrainEvent { phase: Phase::Recorded, minibatch_idx: idx, policies: &state.policies, pv: &state.pv, scores: &scores });

        let mut report = UpdateReport::default();
        let mut ref_updated = false;
        if !config.frozen {
            report = apply_minibatch(&mut state.policies, &pairs, &supervised, &config.dpo)?;
            if let Some(l) = report.overall_dpo_loss() {
                state.pv.dpo_loss.push(l);
            }
            let before = state.cursor.episodes_seen / config.dpo.ref_update_period as u64;
            let after = (state.cursor.episodes_seen + batch.len() as u64) / config.dpo.ref_update_period as u64;
            if after > before && !config.fixed_ref {
                let current = state.cursor.window_sum / state.cursor.window_count.max(1) as f64;
                let open = state.cursor.gate.offer(current) || !config.dpo.gate_on_pv_answer_f1;
                for p in state.policies.nodes.values_mut() {
                    soft_ref_update(p, config.dpo.tau, open);
                }
                ref_updated = open;
                state.cursor.window_sum = 0.0;
                state.cursor.window_count = 0;
            }
        }
        state.cursor.episodes_seen += batch.len() as u64;
        state.cursor.minibatches += 1;
        hook(&TrainEvent { phase: Phase::Updated, minibatch_idx: idx, policies: &state.policies, pv: &state.pv, scores: &scores });

        out.metrics.push(MetricsRecord {
            episodes_seen: state.cursor.episodes_seen,
            pv_answer_f1: state.pv.answer_f1.mean().unwrap_or(0.0),
            pv_support_f1: state.pv.support_f1.mean().unwrap_or(0.0),
            pv_suff_acc: state.pv.sufficiency_acc.mean(),
            pairs: pairs.len(),
            dpo_loss_mean: report.overall_dpo_loss(),
            sup_loss_mean: report.supervised_loss_mean,
            ref_updated,
            rollouts_launched: stats.iter().map(|s| s.rollouts_launched).sum(),
            rollout_invocations: stats.iter().map(|s| s.rollout_node_invocations).sum(),
        });
        out.updates.push(UpdateRecord { minibatch_idx: idx, report, ref_updated });
        out.rollouts.extend(stats);
        log::debug!("minibatch {idx}: {} episodes seen", state.cursor.episodes_seen);
    }
    out.state = state;
    Ok(out)
}
