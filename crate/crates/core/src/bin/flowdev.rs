use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use flowdev::env::dataset::{gen_dataset, Dataset};
use flowdev::env::oracle::{oracle_best, DEFAULT_ENUMERATION_LIMIT};
use flowdev::env::subsample::subsample_to_hops;
use flowdev::flow::FlowSpec;
use flowdev::train::checkpoint::Checkpoint;
use flowdev::train::config::{dataset_config, parse_hop_mix, KvConfig, DATASET_KEYS, TRAIN_KEYS};
use flowdev::train::report::{load_run, render_csv, render_runs, render_text, treatment_rows};
use flowdev::train::{evaluate, train_with, EvalFlags, TrainConfig, TrainState};
use flowdev::{FlowError, Result};

#[derive(Parser)]
#[command(name = "flowdev", version, about = "Online preference fine-tuning of a multi-node retrieval QA flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Shared {
    /// key = value settings file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-hop dataset
    GenData {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        n_instances: Option<usize>,
        /// answerable or full
        #[arg(long)]
        variant: Option<String>,
        /// e.g. 2:0.5,3:0.3,4:0.2
        #[arg(long)]
        hop_mix: Option<String>,
        /// Subsample the generated pool to this hop distribution
        #[arg(long)]
        match_hops: Option<String>,
    },
    /// Single online pass of training
    Train {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Continue from a checkpoint
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        rollouts_k: Option<usize>,
        #[arg(long)]
        minibatch: Option<usize>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        ref_period: Option<usize>,
        /// Soft reference updates ignore the PV gate
        #[arg(long)]
        no_gate: bool,
        /// Fixed reference policy with beta = 0.1
        #[arg(long)]
        fixed_ref: bool,
        /// Start from zero weights
        #[arg(long)]
        no_prior: bool,
        #[arg(long)]
        max_episodes: Option<usize>,
    },
    /// Evaluate a checkpoint with greedy inference
    Eval {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        enforce_grounded: bool,
        #[arg(long)]
        pairwise: bool,
    },
    /// Best achievable scores per instance by enumeration
    Oracle {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = DEFAULT_ENUMERATION_LIMIT)]
        limit: u64,
    },
    /// Treatment table for a checkpoint and zero-pair summaries for runs
    Report {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Training output directories; the first is the baseline
        #[arg(long = "run")]
        runs: Vec<PathBuf>,
    },
}

fn load_kv(shared: &Shared, known: &[&str]) -> Result<KvConfig> {
    let kv = match &shared.config {
        Some(p) => KvConfig::load(p)?,
        None => KvConfig::default(),
    };
    kv.check_keys(known)?;
    Ok(kv)
}

fn all_keys() -> Vec<&'static str> {
    TRAIN_KEYS.iter().chain(DATASET_KEYS).copied().collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn train_config(shared: &Shared) -> Result<TrainConfig> {
    let kv = load_kv(shared, &all_keys())?;
    let mut c = TrainConfig::from_kv(&kv)?;
    if let Some(s) = shared.seed {
        c.seed = s;
    }
    Ok(c)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { shared, n_instances, variant, hop_mix, match_hops } => {
            let kv = load_kv(&shared, &all_keys())?;
            let mut dc = dataset_config(&kv)?;
            if let Some(n) = n_instances {
                dc.n_instances = n;
            }
            if let Some(v) = variant {
                dc.variant = v.parse()?;
            }
            if let Some(m) = hop_mix {
                dc.hop_mix = parse_hop_mix(&m)?;
            }
            let seed = shared.seed.unwrap_or(0);
            let mut instances = gen_dataset(&dc, seed)?;
            if let Some(m) = match_hops {
                instances = subsample_to_hops(&instances, &parse_hop_mix(&m)?, seed)?;
            }
            std::fs::create_dir_all(&shared.out)?;
            let path = shared.out.join("dataset.jsonl");
            let ds = Dataset::new(instances)?;
            ds.write_jsonl(&path)?;
            println!("wrote {} instances to {}", ds.len(), path.display());
        }
        Command::Train { shared, data, resume, rollouts_k, minibatch, beta, tau, ref_period, no_gate, fixed_ref, no_prior, max_episodes } => {
            let mut c = train_config(&shared)?;
            if let Some(v) = rollouts_k {
                c.k = v;
            }
            if let Some(v) = minibatch {
                c.minibatch = v;
            }
            if let Some(v) = tau {
                c.dpo.tau = v;
            }
            if let Some(v) = ref_period {
                c.dpo.ref_update_period = v;
            }
            if no_gate {
                c.dpo.gate_on_pv_answer_f1 = false;
            }
            if fixed_ref {
                c.set_fixed_ref();
            }
            if let Some(v) = beta {
                c.dpo.beta = v;
            }
            c.no_prior |= no_prior;
            if max_episodes.is_some() {
                c.max_episodes = max_episodes;
            }
            c.validate()?;
            let data = data.or(c.train_path.clone()).ok_or_else(|| FlowError::Config("no training data given".into()))?;
            let ds = Dataset::read_jsonl(&data, c.max_retrievals)?;
            let state = match &resume {
                Some(p) => Some(TrainState::from_checkpoint(Checkpoint::read_for(p, &c.hash())?)),
                None => None,
            };
            let stop = Arc::new(AtomicBool::new(false));
            let flag = stop.clone();
            if let Err(e) = ctrlc::set_handler(move || flag.store(true, Ordering::SeqCst)) {
                log::warn!("no interrupt handler: {e}");
            }
            let out = train_with(&ds, &c, state, &mut |_| {}, Some(&stop))?;
            out.write(&shared.out, &c)?;
            let pv = &out.state.pv;
            println!(
                "episodes {}{}: pv answer f1 {:.3} (tail {:.3}), pv support f1 {:.3} (tail {:.3})",
                out.state.cursor.episodes_seen,
                if out.interrupted { " (interrupted)" } else { "" },
                pv.answer_f1.mean().unwrap_or(0.0),
                pv.answer_f1.tail_mean(0.2).unwrap_or(0.0),
                pv.support_f1.mean().unwrap_or(0.0),
                pv.support_f1.tail_mean(0.2).unwrap_or(0.0),
            );
        }
        Command::Eval { shared, data, checkpoint, enforce_grounded, pairwise } => {
            let ckpt = Checkpoint::read(&checkpoint)?;
            let ds = Dataset::read_jsonl(&data, ckpt.flow.max_retrievals)?;
            let report = evaluate(&ds, &ckpt.flow, &ckpt.policies, EvalFlags { enforce_grounded, pairwise })?;
            std::fs::create_dir_all(&shared.out)?;
            write_json(&shared.out.join("eval.json"), &report)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Oracle { shared, data, limit } => {
            let c = train_config(&shared)?;
            let ds = Dataset::read_jsonl(&data, c.max_retrievals)?;
            let flow = FlowSpec::new(ds.variant, c.max_retrievals)?;
            let (mut a, mut s) = (0.0, 0.0);
            for inst in &ds.instances {
                let best = oracle_best(inst, &flow, limit)?;
                a += best.answer_f1;
                s += best.support_f1;
            }
            let n = ds.len().max(1) as f64;
            #[derive(Serialize)]
            struct OracleReport {
                episodes: usize,
                answer_f1: f64,
                support_f1: f64,
            }
            let report = OracleReport { episodes: ds.len(), answer_f1: a / n, support_f1: s / n };
            std::fs::create_dir_all(&shared.out)?;
            write_json(&shared.out.join("oracle.json"), &report)?;
            println!("oracle over {} instances: answer f1 {:.3}, support f1 {:.3}", report.episodes, report.answer_f1, report.support_f1);
        }
        Command::Report { shared, data, checkpoint, runs } => {
            std::fs::create_dir_all(&shared.out)?;
            let mut text = String::new();
            match (data, checkpoint) {
                (Some(d), Some(c)) => {
                    let ckpt = Checkpoint::read(&c)?;
                    let ds = Dataset::read_jsonl(&d, ckpt.flow.max_retrievals)?;
                    let rows = treatment_rows(&ds, &ckpt.flow, &ckpt.policies)?;
                    text.push_str(&render_text(&rows));
                    std::fs::write(shared.out.join("report.csv"), render_csv(&rows))?;
                }
                (None, None) => {}
                _ => return Err(FlowError::Config("--data and --checkpoint go together".into())),
            }
            if !runs.is_empty() {
                let summaries = runs.iter().map(|r| load_run(r)).collect::<Result<Vec<_>>>()?;
                if !text.is_empty() {
                    text.push('\n');
                }
                text.push_str(&render_runs(&summaries));
            }
            if text.is_empty() {
                return Err(FlowError::Config("nothing to report: give --data/--checkpoint or --run".into()));
            }
            std::fs::write(shared.out.join("report.txt"), &text)?;
            print!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
