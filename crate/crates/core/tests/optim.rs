mod common;

use common::{dataset, flow};
use flowdev::flow::{run_episode, NodeRole, SelectionMode, Variant};
use flowdev::optim::{apply_minibatch, terminal_example, DpoConfig, SupervisedExample};
use flowdev::policy::FlowPolicies;
use flowdev::rollout::{generate_preferences, PreferencePair};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn batch(variant: Variant) -> (FlowPolicies, Vec<PreferencePair>, Vec<SupervisedExample>) {
    let f = flow(variant);
    let p = FlowPolicies::default_prior(&f);
    let mut pairs = Vec::new();
    let mut sup = Vec::new();
    for inst in &dataset(16, variant, 21).instances {
        let t = run_episode(&f, &p, inst, SelectionMode::Greedy, 0).unwrap();
        pairs.extend(generate_preferences(&t, &f, &p, inst, 2).unwrap().0);
        sup.extend(terminal_example(&t, &inst.gold_answers));
    }
    (p, pairs, sup)
}

#[test]
fn empty_minibatch_changes_nothing() {
    let (p, _, _) = batch(Variant::Answerable);
    let mut q = p.clone();
    let r = apply_minibatch(&mut q, &[], &[], &DpoConfig::default()).unwrap();
    assert_eq!(q, p);
    assert_eq!(r.total_pairs(), 0);
    assert_eq!(r.supervised_loss_mean, None);
}

#[test]
fn updates_stay_within_their_role() {
    let (p, pairs, _) = batch(Variant::Answerable);
    let retrieve: Vec<_> = pairs.into_iter().filter(|q| q.role == NodeRole::Retrieve).collect();
    assert!(!retrieve.is_empty());
    let mut q = p.clone();
    apply_minibatch(&mut q, &retrieve, &[], &DpoConfig::default()).unwrap();
    for (role, node) in &q.nodes {
        if *role == NodeRole::Retrieve {
            assert_ne!(node.weights, p.nodes[role].weights);
        } else {
            assert_eq!(node, &p.nodes[role]);
        }
    }
}

#[test]
fn duplication_and_order_do_not_matter() {
    let (p, pairs, sup) = batch(Variant::Full);
    let cfg = DpoConfig::default();
    let mut base = p.clone();
    let rb = apply_minibatch(&mut base, &pairs, &sup, &cfg).unwrap();

    let mut dup = p.clone();
    let doubled: Vec<_> = pairs.iter().chain(&pairs).cloned().collect();
    let sup2: Vec<_> = sup.iter().chain(&sup).cloned().collect();
    apply_minibatch(&mut dup, &doubled, &sup2, &cfg).unwrap();
    assert_eq!(dup, base);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let mut shuffled = pairs.clone();
        shuffled.shuffle(&mut rng);
        let mut s = sup.clone();
        s.shuffle(&mut rng);
        let mut q = p.clone();
        let r = apply_minibatch(&mut q, &shuffled, &s, &cfg).unwrap();
        assert_eq!(q, base);
        assert_eq!(r, rb);
    }
}

#[test]
fn terminal_node_is_trained_by_supervision_only() {
    let (p, pairs, sup) = batch(Variant::Answerable);
    assert!(pairs.iter().all(|q| q.role != NodeRole::ConciseAnswer));
    assert!(!sup.is_empty());
    let mut q = p.clone();
    let r = apply_minibatch(&mut q, &[], &sup, &DpoConfig::default()).unwrap();
    assert_eq!(r.supervised_count, sup.len());
    assert_ne!(q.nodes[&NodeRole::ConciseAnswer].weights, p.nodes[&NodeRole::ConciseAnswer].weights);
    assert_eq!(q.nodes[&NodeRole::Retrieve], p.nodes[&NodeRole::Retrieve]);
}

#[test]
fn first_update_loss_is_ln2() {
    // weights equal the reference before any update
    let (mut p, pairs, _) = batch(Variant::Answerable);
    let r = apply_minibatch(&mut p, &pairs, &[], &DpoConfig::default()).unwrap();
    for l in r.dpo_loss_mean.values() {
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
    }
}
