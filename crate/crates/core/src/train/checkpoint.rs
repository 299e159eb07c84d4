//! Binary checkpoint container, little-endian throughout:
//!
//! ```text
//! "FLOWCKPT" u32:version [u8;32]:config_hash
//! u8:variant u32:max_retrievals u32:feature_padding
//! u32:n_nodes { u8:role u32:dim f64[dim] x 2 f64:alpha f64[dim] x 5 }
//! 5 x { f64:sum u64:n f64[n] }
//! u64:episodes_seen u64:minibatches u8:has_best f64:best f64:window_sum u64:window_n
//! ```

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::flow::{FlowSpec, NodeRole, Variant};
use crate::optim::{CocobState, RefGate};
use crate::policy::{FeatureMap, FlowPolicies, NodePolicy};
use crate::train::pv::{PvAccumulator, Series};

pub const MAGIC: &[u8; 8] = b"FLOWCKPT";
pub const VERSION: u32 = 1;

/// Where a training stream stopped, enough to resume it exactly.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainCursor {
    pub episodes_seen: u64,
    pub minibatches: u64,
    pub gate: RefGate,
    /// PV answer F1 accumulated since the last reference update opportunity.
    pub window_sum: f64,
    pub window_count: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config_hash: [u8; 32],
    pub flow: FlowSpec,
    pub policies: FlowPolicies,
    pub pv: PvAccumulator,
    pub cursor: TrainCursor,
}

struct Enc(Vec<u8>);

impl Enc {
    fn u8(&mut self, x: u8) {
        self.0.push(x);
    }
    fn u32(&mut self, x: usize) {
        self.0.extend_from_slice(&(x as u32).to_le_bytes());
    }
    fn u64(&mut self, x: u64) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }
    fn f64(&mut self, x: f64) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }
    fn f64s(&mut self, xs: &[f64]) {
        for x in xs {
            self.f64(*x);
        }
    }
}

struct Dec<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Dec<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len());
        let end = end.ok_or_else(|| FlowError::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        // bound the allocation by what is actually left
        if n > (self.buf.len() - self.pos) / 8 {
            return Err(FlowError::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        (0..n).map(|_| self.f64()).collect()
    }
}

fn series_of(pv: &PvAccumulator) -> [&Series; 5] {
    [&pv.answer_f1, &pv.support_f1, &pv.sufficiency_acc, &pv.pairs_per_episode, &pv.dpo_loss]
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Enc(Vec::new());
        e.0.extend_from_slice(MAGIC);
        e.u32(VERSION as usize);
        e.0.extend_from_slice(&self.config_hash);
        e.u8(match self.flow.variant {
            Variant::Answerable => 0,
            Variant::Full => 1,
        });
        e.u32(self.flow.max_retrievals);
        e.u32(self.policies.feature_map.padding);
        e.u32(self.policies.nodes.len());
        for (role, p) in &self.policies.nodes {
            e.u8(role.tag());
            e.u32(p.dimension());
            e.f64s(&p.weights);
            e.f64s(&p.ref_weights);
            let o = &p.optimizer;
            e.f64(o.alpha);
            for arr in [&o.initial_weights, &o.grad_sum, &o.abs_grad_sum, &o.max_abs_grad, &o.reward] {
                e.f64s(arr);
            }
        }
        for s in series_of(&self.pv) {
            e.f64(s.sum);
            e.u64(s.values.len() as u64);
            e.f64s(&s.values);
        }
        let c = &self.cursor;
        e.u64(c.episodes_seen);
        e.u64(c.minibatches);
        e.u8(c.gate.best.is_some() as u8);
        e.f64(c.gate.best.unwrap_or(0.0));
        e.f64(c.window_sum);
        e.u64(c.window_count);
        e.0
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Checkpoint> {
        let mut d = Dec { buf, pos: 0 };
        if d.take(MAGIC.len()).ok() != Some(&MAGIC[..]) {
            return Err(FlowError::Checkpoint("bad magic".into()));
        }
        let version = d.u32()?;
        if version != VERSION as usize {
            return Err(FlowError::Checkpoint(format!("format version {version}, expected {VERSION}")));
        }
        let config_hash: [u8; 32] = d.take(32)?.try_into().unwrap();
        let variant = match d.u8()? {
            0 => Variant::Answerable,
            1 => Variant::Full,
            v => return Err(FlowError::Checkpoint(format!("unknown variant tag {v}"))),
        };
        let flow = FlowSpec::new(variant, d.u32()?)?;
        let feature_map = FeatureMap::with_padding(d.u32()?);
        let n_nodes = d.u32()?;
        let mut nodes = BTreeMap::new();
        for _ in 0..n_nodes {
            let tag = d.u8()?;
            let role = NodeRole::from_tag(tag).ok_or_else(|| FlowError::Checkpoint(format!("unknown role tag {tag}")))?;
            let dim = d.u32()?;
            let weights = d.f64s(dim)?;
            let ref_weights = d.f64s(dim)?;
            let alpha = d.f64()?;
            let optimizer = CocobState {
                alpha,
                initial_weights: d.f64s(dim)?,
                grad_sum: d.f64s(dim)?,
                abs_grad_sum: d.f64s(dim)?,
                max_abs_grad: d.f64s(dim)?,
                reward: d.f64s(dim)?,
            };
            if nodes.insert(role, NodePolicy { role, weights, ref_weights, optimizer }).is_some() {
                return Err(FlowError::Checkpoint(format!("duplicate node {}", role.name())));
            }
        }
        let policies = FlowPolicies { feature_map, nodes };
        policies.check(&flow).map_err(|e| FlowError::Checkpoint(e.to_string()))?;
        let read_series = |d: &mut Dec| -> Result<Series> {
            let sum = d.f64()?;
            let n = d.u64()? as usize;
            Ok(Series { sum, values: d.f64s(n)? })
        };
        let pv = PvAccumulator {
            answer_f1: read_series(&mut d)?,
            support_f1: read_series(&mut d)?,
            sufficiency_acc: read_series(&mut d)?,
            pairs_per_episode: read_series(&mut d)?,
            dpo_loss: read_series(&mut d)?,
        };
        let episodes_seen = d.u64()?;
        let minibatches = d.u64()?;
        let has_best = d.u8()? != 0;
        let best = d.f64()?;
        let cursor = TrainCursor {
            episodes_seen,
            minibatches,
            gate: RefGate { best: has_best.then_some(best) },
            window_sum: d.f64()?,
            window_count: d.u64()?,
        };
        if d.pos != buf.len() {
            return Err(FlowError::Checkpoint(format!("{} trailing bytes", buf.len() - d.pos)));
        }
        Ok(Checkpoint { config_hash, flow, policies, pv, cursor })
    }

    /// Writes via a temporary sibling and a rename.
    pub fn write(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Checkpoint> {
        Checkpoint::from_bytes(&std::fs::read(path)?)
    }

    /// Reads and warns when the checkpoint came from different settings.
    pub fn read_for(path: &Path, config_hash: &[u8; 32]) -> Result<Checkpoint> {
        let c = Checkpoint::read(path)?;
        if &c.config_hash != config_hash {
            log::warn!("checkpoint {} was written under a different training config", path.display());
        }
        Ok(c)
    }
}
