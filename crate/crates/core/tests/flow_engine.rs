mod common;

use std::collections::BTreeSet;

use common::{dataset, flow, set_weight, two_hop};
use flowdev::env::oracle::{oracle_best, DEFAULT_ENUMERATION_LIMIT};
use flowdev::env::types::{Entity, Token};
use flowdev::flow::{
    action_set_for, resume_from, run_episode, ConversationState, FlowSpec, NodeRole, ObjectiveKind, SelectionMode, Simulator,
    Variant,
};
use flowdev::policy::features::stop;
use flowdev::policy::{FeatureMap, FlowPolicies};
use flowdev::FlowError;

fn always(continue_: bool, f: &FlowSpec) -> FlowPolicies {
    let mut p = FlowPolicies::zeros(f, FeatureMap::new(), 100.0);
    let slot = if continue_ { stop::CONTINUE } else { stop::STOP };
    set_weight(&mut p, NodeRole::StopRetrieval, slot + stop::BIAS, 5.0);
    p
}

#[test]
fn greedy_episodes_are_deterministic() {
    let f = flow(Variant::Full);
    let p = FlowPolicies::default_prior(&f);
    for inst in &dataset(40, Variant::Full, 3).instances {
        let a = run_episode(&f, &p, inst, SelectionMode::Greedy, 1).unwrap();
        let b = run_episode(&f, &p, inst, SelectionMode::Greedy, 99).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn seeded_sampling_repeats_per_seed() {
    let f = flow(Variant::Answerable);
    let p = FlowPolicies::default_prior(&f);
    let inst = &dataset(1, Variant::Answerable, 4).instances[0];
    let a = run_episode(&f, &p, inst, SelectionMode::SeededSample, 5).unwrap();
    let b = run_episode(&f, &p, inst, SelectionMode::SeededSample, 5).unwrap();
    assert_eq!(a, b);
}

#[test]
fn always_stop_gives_five_invocations() {
    let f = flow(Variant::Answerable);
    let t = run_episode(&f, &always(false, &f), &two_hop(), SelectionMode::Greedy, 0).unwrap();
    let roles: Vec<NodeRole> = t.invocations.iter().map(|i| i.role).collect();
    assert_eq!(
        roles,
        [NodeRole::QueryGen, NodeRole::Retrieve, NodeRole::StopRetrieval, NodeRole::VerboseAnswer, NodeRole::ConciseAnswer]
    );
    assert!(t.outcome.terminal);
}

#[test]
fn retrieval_cap_bounds_the_loop() {
    for cap in 1..=4 {
        for variant in [Variant::Answerable, Variant::Full] {
            let f = FlowSpec::new(variant, cap).unwrap();
            let t = run_episode(&f, &always(true, &f), &two_hop(), SelectionMode::Greedy, 0).unwrap();
            assert_eq!(t.count(NodeRole::Retrieve), cap);
            assert_eq!(t.final_state.scratchpad.len(), cap);
            // cap x (query, retrieve), one stop decision fewer, then the answer nodes
            let tail = if variant == Variant::Full { 3 } else { 2 };
            assert_eq!(t.len(), 3 * cap - 1 + tail);
        }
    }
}

#[test]
fn forcing_the_chosen_action_reproduces_the_episode() {
    let f = flow(Variant::Full);
    let p = FlowPolicies::default_prior(&f);
    for inst in &dataset(30, Variant::Full, 5).instances {
        let t = run_episode(&f, &p, inst, SelectionMode::Greedy, 0).unwrap();
        for inv in &t.invocations {
            let c = resume_from(&t, inv.position, inv.chosen_index, &p, &f, inst, None).unwrap();
            assert_eq!(c.outcome, t.outcome);
            let suffix: Vec<NodeRole> = t.invocations[inv.position..].iter().map(|i| i.role).collect();
            assert_eq!(c.visited, suffix);
        }
    }
}

#[test]
fn support_deviations_never_reach_the_answer_nodes() {
    let f = flow(Variant::Full);
    let p = FlowPolicies::default_prior(&f);
    for inst in &dataset(30, Variant::Full, 6).instances {
        let t = run_episode(&f, &p, inst, SelectionMode::Greedy, 0).unwrap();
        for inv in t.invocations.iter().filter(|i| i.role.in_retrieval_loop()) {
            for a in 0..inv.action_set.len() {
                let c = resume_from(&t, inv.position, a, &p, &f, inst, Some(ObjectiveKind::Support)).unwrap();
                assert!(c.outcome.reached(ObjectiveKind::Support));
                assert!(!c.visited.iter().any(|r| matches!(r, NodeRole::VerboseAnswer | NodeRole::ConciseAnswer | NodeRole::Sufficiency)));
                assert_eq!(c.depth, 1);
            }
        }
    }
}

#[test]
fn answer_deviations_stop_after_the_concise_answer() {
    let f = flow(Variant::Full);
    let p = FlowPolicies::default_prior(&f);
    let inst = &dataset(2, Variant::Full, 7).instances[0];
    let t = run_episode(&f, &p, inst, SelectionMode::Greedy, 0).unwrap();
    let v = t.invocations.iter().find(|i| i.role == NodeRole::VerboseAnswer).unwrap();
    let c = resume_from(&t, v.position, 0, &p, &f, inst, Some(ObjectiveKind::Answer)).unwrap();
    assert_eq!(c.visited, [NodeRole::VerboseAnswer, NodeRole::ConciseAnswer]);
    assert!(!c.outcome.terminal);
}

#[test]
fn rollouts_cannot_nest() {
    let f = flow(Variant::Answerable);
    let p = FlowPolicies::default_prior(&f);
    let inst = two_hop();
    let t = run_episode(&f, &p, &inst, SelectionMode::Greedy, 0).unwrap();
    let sim = Simulator::new(&f, &p, &inst).unwrap();
    assert!(matches!(sim.nested().resume_from(&t, 0, 0, None), Err(FlowError::NestedRollout(2))));
    assert!(matches!(sim.resume_from(&t, 0, 99, None), Err(FlowError::OutOfRange { .. })));
}

#[test]
fn gold_labels_do_not_steer_decisions() {
    let f = flow(Variant::Full);
    let p = FlowPolicies::default_prior(&f);
    for inst in &dataset(30, Variant::Full, 8).instances {
        let mut other = inst.clone();
        other.gold_support.reverse();
        other.gold_support.truncate(1);
        other.gold_answers = vec![vec![Token::Entity(Entity(999_999))]];
        other.answerable = !other.answerable;
        let a = run_episode(&f, &p, inst, SelectionMode::Greedy, 0).unwrap();
        let b = run_episode(&f, &p, &other, SelectionMode::Greedy, 0).unwrap();
        assert_eq!(a.invocations, b.invocations);
        assert_eq!(a.final_state, b.final_state);
    }
}

#[test]
fn restored_state_matches_the_original_prefix() {
    let f = flow(Variant::Answerable);
    let p = FlowPolicies::default_prior(&f);
    let inst = &dataset(1, Variant::Answerable, 9).instances[0];
    let t = run_episode(&f, &p, inst, SelectionMode::Greedy, 0).unwrap();
    let sim = Simulator::new(&f, &p, inst).unwrap();
    let mut state = ConversationState::initial(&inst.question);
    for (i, inv) in t.invocations.iter().enumerate() {
        assert_eq!(t.pre_states[i], state);
        assert_eq!(inv.action_set, action_set_for(inv.role, &state, inst).unwrap());
        sim.transition(&mut state, inv.role, inv.chosen()).unwrap();
    }
    assert_eq!(state, t.final_state);
}

/// Best scores over every action sequence the engine admits.
fn brute_force(sim: &Simulator, state: ConversationState, role: Option<NodeRole>, inst: &flowdev::env::Instance, best: &mut (f64, f64)) {
    let Some(r) = role else {
        let o = sim.outcome(&state, None);
        best.0 = best.0.max(o.answer_f1);
        best.1 = best.1.max(o.support_f1);
        return;
    };
    for a in action_set_for(r, &state, inst).unwrap() {
        let mut s = state.clone();
        let next = sim.transition(&mut s, r, a).unwrap();
        brute_force(sim, s, next, inst, best);
    }
}

#[test]
fn oracle_agrees_with_exhaustive_engine_search() {
    let mut instances = vec![two_hop()];
    let mut twin = two_hop();
    twin.candidates.retain(|d| d.id.0 != 2);
    twin.answerable = false;
    instances.push(twin);
    for cap in [2, 3] {
        let f = FlowSpec::new(Variant::Answerable, cap).unwrap();
        let p = FlowPolicies::default_prior(&f);
        for inst in &instances {
            let sim = Simulator::new(&f, &p, inst).unwrap();
            let mut best = (0.0, 0.0);
            brute_force(&sim, ConversationState::initial(&inst.question), Some(NodeRole::QueryGen), inst, &mut best);
            let o = oracle_best(inst, &f, DEFAULT_ENUMERATION_LIMIT).unwrap();
            assert_eq!((o.answer_f1, o.support_f1), best, "cap {cap}, answerable {}", inst.answerable);
        }
    }
}

#[test]
fn trace_log_lines_cover_every_invocation() {
    let f = flow(Variant::Full);
    let p = FlowPolicies::default_prior(&f);
    let inst = &dataset(2, Variant::Full, 10).instances[1];
    let t = run_episode(&f, &p, inst, SelectionMode::Greedy, 0).unwrap();
    let mut buf = Vec::new();
    t.write_jsonl(&mut buf).unwrap();
    let lines: Vec<serde_json::Value> = String::from_utf8(buf).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), t.len());
    let positions: BTreeSet<u64> = lines.iter().map(|v| v["position"].as_u64().unwrap()).collect();
    assert_eq!(positions.len(), t.len());
    assert!(lines.iter().all(|v| v["log_prob"].as_f64().unwrap() <= 0.0));
}
