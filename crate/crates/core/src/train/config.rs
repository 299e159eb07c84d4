use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::dataset::DatasetConfig;
use crate::error::{FlowError, Result};
use crate::flow::Variant;
use crate::optim::{DpoConfig, DEFAULT_ALPHA};

/// Flat `key = value` settings. `#` starts a comment.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KvConfig(pub BTreeMap<String, String>);

impl KvConfig {
    pub fn parse(text: &str) -> Result<KvConfig> {
        let mut map = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| FlowError::Config(format!("line {}: expected key = value", n + 1)))?;
            let key = k.trim().replace('-', "_");
            if map.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(FlowError::Config(format!("line {}: duplicate key {key}", n + 1)));
            }
        }
        Ok(KvConfig(map))
    }

    pub fn load(path: &Path) -> Result<KvConfig> {
        KvConfig::parse(&std::fs::read_to_string(path)?)
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.0
            .get(key)
            .map(|v| v.parse::<T>().map_err(|_| FlowError::Config(format!("bad value for {key}: {v}"))))
            .transpose()
    }

    /// Fails on keys outside `known`.
    pub fn check_keys(&self, known: &[&str]) -> Result<()> {
        match self.0.keys().find(|k| !known.contains(&k.as_str())) {
            Some(k) => Err(FlowError::Config(format!("unknown config key {k}"))),
            None => Ok(()),
        }
    }
}

/// `2:0.5,3:0.3,4:0.2`
pub fn parse_hop_mix(s: &str) -> Result<BTreeMap<usize, f64>> {
    s.split(',')
        .map(|part| {
            let (h, p) = part
                .split_once(':')
                .ok_or_else(|| FlowError::Config(format!("bad hop mix entry {part}")))?;
            let h = h.trim().parse().map_err(|_| FlowError::Config(format!("bad hop count {h}")))?;
            let p = p.trim().parse().map_err(|_| FlowError::Config(format!("bad hop weight {p}")))?;
            Ok((h, p))
        })
        .collect()
}

pub const DATASET_KEYS: &[&str] =
    &["n_instances", "hop_mix", "min_candidates", "max_candidates", "n_entities", "n_relations", "variant", "max_retrievals", "seed"];

pub fn dataset_config(kv: &KvConfig) -> Result<DatasetConfig> {
    let mut c = DatasetConfig::default();
    if let Some(v) = kv.get("n_instances")? {
        c.n_instances = v;
    }
    if let Some(v) = kv.0.get("hop_mix") {
        c.hop_mix = parse_hop_mix(v)?;
    }
    if let Some(v) = kv.get("min_candidates")? {
        c.min_candidates = v;
    }
    if let Some(v) = kv.get("max_candidates")? {
        c.max_candidates = v;
    }
    if let Some(v) = kv.get("n_entities")? {
        c.n_entities = v;
    }
    if let Some(v) = kv.get("n_relations")? {
        c.n_relations = v;
    }
    if let Some(v) = kv.get::<Variant>("variant")? {
        c.variant = v;
    }
    if let Some(v) = kv.get("max_retrievals")? {
        c.max_retrievals = v;
    }
    Ok(c)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Deviations per position.
    pub k: usize,
    /// Episodes per update.
    pub minibatch: usize,
    pub dpo: DpoConfig,
    pub max_retrievals: usize,
    pub enforce_grounded: bool,
    pub pairwise_inference: bool,
    /// Start every node from zero weights instead of the hand prior.
    pub no_prior: bool,
    /// Never move the reference and use beta = 0.1.
    pub fixed_ref: bool,
    pub alpha: f64,
    pub passes: usize,
    pub max_episodes: Option<usize>,
    /// Run and record episodes without updating anything.
    pub frozen: bool,
    pub seed: u64,
    pub train_path: Option<PathBuf>,
    pub dev_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            k: 1,
            minibatch: 8,
            dpo: DpoConfig::default(),
            max_retrievals: 4,
            enforce_grounded: false,
            pairwise_inference: false,
            no_prior: false,
            fixed_ref: false,
            alpha: DEFAULT_ALPHA,
            passes: 1,
            max_episodes: None,
            frozen: false,
            seed: 0,
            train_path: None,
            dev_path: None,
        }
    }
}

pub const TRAIN_KEYS: &[&str] = &[
    "k", "rollouts_k", "minibatch", "beta", "tau", "ref_update_period", "ref_period", "gate", "max_retrievals",
    "enforce_grounded", "pairwise_inference", "no_prior", "fixed_ref", "alpha", "passes", "max_episodes", "frozen",
    "seed", "train_path", "dev_path",
];

impl TrainConfig {
    pub fn from_kv(kv: &KvConfig) -> Result<TrainConfig> {
        let mut c = TrainConfig::default();
        if let Some(v) = kv.get("k")?.or(kv.get("rollouts_k")?) {
            c.k = v;
        }
        if let Some(v) = kv.get("minibatch")? {
            c.minibatch = v;
        }
        if let Some(v) = kv.get("beta")? {
            c.dpo.beta = v;
        }
        if let Some(v) = kv.get("tau")? {
            c.dpo.tau = v;
        }
        if let Some(v) = kv.get("ref_update_period")?.or(kv.get("ref_period")?) {
            c.dpo.ref_update_period = v;
        }
        if let Some(v) = kv.get("gate")? {
            c.dpo.gate_on_pv_answer_f1 = v;
        }
        if let Some(v) = kv.get("max_retrievals")? {
            c.max_retrievals = v;
        }
        for (key, slot) in [
            ("enforce_grounded", &mut c.enforce_grounded),
            ("pairwise_inference", &mut c.pairwise_inference),
            ("no_prior", &mut c.no_prior),
            ("frozen", &mut c.frozen),
        ] {
            if let Some(v) = kv.get(key)? {
                *slot = v;
            }
        }
        if let Some(true) = kv.get("fixed_ref")? {
            c.set_fixed_ref();
        }
        if let Some(v) = kv.get("alpha")? {
            c.alpha = v;
        }
        if let Some(v) = kv.get("passes")? {
            c.passes = v;
        }
        c.max_episodes = kv.get("max_episodes")?;
        if let Some(v) = kv.get("seed")? {
            c.seed = v;
        }
        c.train_path = kv.get("train_path")?;
        c.dev_path = kv.get("dev_path")?;
        c.validate()?;
        Ok(c)
    }

    pub fn set_fixed_ref(&mut self) {
        self.fixed_ref = true;
        self.dpo.beta = 0.1;
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(FlowError::Config(m.into()));
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if self.minibatch == 0 {
            return bad("minibatch must be at least 1");
        }
        if !(self.dpo.beta.is_finite() && self.dpo.beta > 0.0) {
            return bad("beta must be positive");
        }
        if !(0.0..=1.0).contains(&self.dpo.tau) {
            return bad("tau must lie in [0, 1]");
        }
        if self.dpo.ref_update_period == 0 {
            return bad("ref_update_period must be positive");
        }
        if self.max_retrievals == 0 {
            return bad("max_retrievals must be positive");
        }
        if self.passes == 0 {
            return bad("passes must be at least 1");
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return bad("alpha must be positive");
        }
        Ok(())
    }

    /// SHA-256 over the settings that shape learning. Run-length and path
    /// settings are excluded so a resumed run matches its origin.
    pub fn hash(&self) -> [u8; 32] {
        let c = TrainConfig { max_episodes: None, train_path: None, dev_path: None, ..self.clone() };
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        Sha256::digest(&bytes).into()
    }
}
