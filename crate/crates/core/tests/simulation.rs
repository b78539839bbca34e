mod common;

use std::collections::BTreeMap;

use aca::consensus::{Engine, Insertion};
use aca::crypto::verify_event;
use aca::gossip::synchronisation_procedure;
use aca::model::{EventSignature, FrameNumber};
use aca::sim::{self, export_dag, run_simulation, SimConfig, Simulation, StopReason};

fn cfg(n: usize, seed: u64) -> SimConfig {
    let mut c = SimConfig::default();
    c.n_nodes = n;
    c.rng_seed = seed;
    c
}

#[test]
fn two_nodes_hundred_steps_share_a_frame() {
    let mut c = cfg(2, 1);
    c.max_steps = 100;
    c.max_finalised_frames = None;
    c.min_events_per_node = u64::MAX;
    let r = run_simulation(c).unwrap();
    assert_eq!(r.steps, 100);
    assert!(r.finalised_logs.iter().all(|l| !l.is_empty()));
    assert_eq!(r.finalised_logs[0][0], r.finalised_logs[1][0]);
    assert!(r.passed(), "{}", r.render());
}

#[test]
fn same_config_same_report() {
    let mut c = cfg(5, 77);
    c.set("delay_model", "uniform:0:7").unwrap();
    c.set("selector_mode", "random").unwrap();
    let a = run_simulation(c.clone()).unwrap().render();
    let b = run_simulation(c).unwrap().render();
    assert_eq!(a, b);
    assert!(a.contains("\nseed=77\n"));
}

#[test]
fn different_seed_different_schedule() {
    let a = run_simulation(cfg(3, 1)).unwrap();
    let b = run_simulation(cfg(3, 2)).unwrap();
    assert_ne!(a.schedule_digest, b.schedule_digest);
}

#[test]
fn zero_rate_runs_on_unfinalised_events_alone() {
    let mut c = cfg(4, 3);
    c.tx_injection_rate = 0.0;
    c.max_finalised_frames = Some(10);
    let mut idle = Simulation::new(c.clone()).unwrap();
    for _ in 0..300 {
        idle.tick();
    }
    assert!(idle.engines().all(|e| e.state().height == 0), "no work, no events");

    let mut s = Simulation::new(c).unwrap();
    s.schedule_submission(0, 0, b"only one".to_vec());
    let reason = s.run();
    assert_eq!(reason, StopReason::TargetsMet);
    assert_eq!(s.tx_injected(), 1);
    assert!(s.engines().all(|e| e.state().height > 1 && e.finalised_log().len() >= 10));
}

#[test]
fn injection_rate_counter() {
    let mut c = cfg(3, 4);
    c.tx_injection_rate = 0.3;
    let mut s = Simulation::new(c).unwrap();
    for _ in 0..1000 {
        s.tick();
    }
    let injected = s.tx_injected() as f64;
    assert!((injected - 300.0).abs() <= 1.0, "{injected}");
}

#[test]
fn drained_run_delivers_each_transaction_once_everywhere() {
    let mut c = cfg(5, 9);
    c.tx_injection_rate = 0.8;
    c.max_finalised_frames = Some(20);
    c.drain = true;
    c.set("delay_model", "uniform:0:5").unwrap();
    let mut s = Simulation::new(c).unwrap();
    assert_eq!(s.run(), StopReason::Drained);
    let injected = s.tx_injected();
    assert!(injected > 0);
    let first: Vec<Vec<u8>> = s.delivered(0).into_iter().map(|d| d.transaction).collect();
    for i in 0..s.len() {
        let delivered: Vec<Vec<u8>> = s.delivered(i).into_iter().map(|d| d.transaction).collect();
        let mut counts: BTreeMap<&[u8], usize> = BTreeMap::new();
        for tx in &delivered {
            *counts.entry(tx).or_default() += 1;
        }
        assert_eq!(counts.len() as u64, injected, "node {i}");
        assert!(counts.values().all(|&c| c == 1), "node {i} delivered a duplicate");
        let common = first.len().min(delivered.len());
        assert_eq!(first[..common], delivered[..common], "node {i} delivery order");
    }
}

#[test]
fn stripping_is_invisible_to_the_order() {
    let mut on = cfg(4, 12);
    on.set("delay_model", "uniform:0:4").unwrap();
    let mut off = on.clone();
    off.stripping_enabled = false;
    let a = run_simulation(on).unwrap();
    let b = run_simulation(off).unwrap();
    assert_eq!(a.finalised_logs, b.finalised_logs);
    assert_eq!(a.schedule_digest, b.schedule_digest);
}

#[test]
fn alternative_parameters_still_agree() {
    for (key, value) in [
        ("root_majority_override", "3"),
        ("lamport_init_strategy", "id_byte"),
        ("selector_mode", "random"),
        ("delay_model", "fixed:0"),
        ("heartbeat", "3"),
    ] {
        let mut c = cfg(5, 21);
        c.set(key, value).unwrap();
        let r = run_simulation(c).unwrap();
        assert!(r.passed() && r.min_frames_finalised() >= 5, "{key}={value}\n{}", r.render());
    }
}

#[test]
fn fresh_network_exports_isolated_leaves() {
    let s = Simulation::new(cfg(4, 1)).unwrap();
    let dot = export_dag(s.engine(0).store());
    let graph = dot_parser::canonical::Graph::from(dot_parser::ast::Graph::try_from(dot.as_str()).unwrap());
    assert_eq!(graph.nodes.set.len(), 4);
    assert!(graph.edges.set.is_empty());
}

#[test]
fn exported_dag_parses_with_two_edges_per_event() {
    let mut s = Simulation::new(cfg(3, 5)).unwrap();
    s.run();
    let store = s.engine(1).store();
    let dot = export_dag(store);
    let graph = dot_parser::canonical::Graph::from(dot_parser::ast::Graph::try_from(dot.as_str()).unwrap());
    let non_leaf = store.iter().filter(|e| !e.is_leaf()).count();
    assert!(graph.is_digraph);
    assert_eq!(graph.nodes.set.len(), store.len());
    assert_eq!(graph.edges.set.len(), 2 * non_leaf);
    let unquote = |s: &str| s.trim_matches('"').to_string();
    for edge in &graph.edges.set {
        let from = aca::model::Digest::from_hex(&unquote(&edge.from)).unwrap();
        let to = aca::model::Digest::from_hex(&unquote(&edge.to)).unwrap();
        let e = store.get_event(&from).unwrap();
        assert!(e.self_parent.id == to || e.other_parent.id == to);
    }
}

#[test]
fn threaded_network_agrees() {
    let mut c = cfg(4, 31);
    c.set("selector_mode", "mixed").unwrap();
    let r = sim::threaded::run_threaded(&c, 120).unwrap();
    assert!(r.agreement.is_pass(), "{:?}", r.agreement);
    assert!(r.violations.is_empty(), "{:?}", r.violations);
    assert_eq!(r.failed_exchanges, 0);
    assert!(r.finalised_logs.iter().all(|l| l.len() >= 5));
}

fn relay_chain() -> (Vec<Engine>, aca::model::EventId) {
    // Node 0 creates an event, node 1 pulls it from node 0 and node 2 from
    // node 1. Node 3 then receives it with two relay signatures.
    let mut nodes = common::network(4, 40);
    nodes[0].submit_transaction(b"x".to_vec());
    let other = nodes[1].id();
    let (id, _) = nodes[0].create_event(&other).unwrap();
    let (b, a) = common::pair(&mut nodes, 1, 0);
    synchronisation_procedure(b, a).unwrap();
    let (c, b) = common::pair(&mut nodes, 2, 1);
    synchronisation_procedure(c, b).unwrap();
    (nodes, id)
}

#[test]
fn honest_relay_signatures_all_verify() {
    let (mut nodes, id) = relay_chain();
    let req = nodes[3].make_request();
    let reply = nodes[2].handle_request(&req).unwrap();
    let e = reply.bundle.iter().find(|e| e.id() == id).unwrap();
    assert_eq!(e.signatures.len(), 3);
    let report = verify_event(e, &nodes[3].state().peer_list, nodes[3].suite());
    assert!(report.accepted() && !report.has_warnings());
    assert_eq!(report.relayers.len(), 2);
    assert!(report.relayers.iter().all(|(_, ok)| *ok));
    // Relaying does not touch the relayer's stored copy.
    assert_eq!(nodes[2].store().get_event(&id).unwrap().signatures.len(), 2);
}

#[test]
fn corrupt_relay_signature_is_accepted_with_warning() {
    let (mut nodes, id) = relay_chain();
    let req = nodes[3].make_request();
    let mut reply = nodes[2].handle_request(&req).unwrap();
    let e = reply.bundle.iter_mut().find(|e| e.id() == id).unwrap();
    let relayer = e.signatures.iter_mut().find(|s| s.signer != e.creator).unwrap();
    relayer.signature[3] ^= 0x40;
    let report = verify_event(e, &nodes[3].state().peer_list, nodes[3].suite());
    assert!(report.accepted() && report.has_warnings());
    let outcome = nodes[3].apply_reply(reply).unwrap();
    assert!(outcome.rejected.is_empty());
    assert!(nodes[3].store().contains(&id));
}

#[test]
fn forged_creator_signature_is_dropped() {
    let (mut nodes, id) = relay_chain();
    let req = nodes[3].make_request();
    let mut reply = nodes[2].handle_request(&req).unwrap();
    let e = reply.bundle.iter_mut().find(|e| e.id() == id).unwrap();
    let creator = e.creator;
    e.signatures.retain(|s| s.signer != creator);
    e.signatures.push(EventSignature { signer: creator, signature: vec![0; 64] });
    let outcome = nodes[3].apply_reply(reply).unwrap();
    assert_eq!(outcome.rejected.len(), 1);
    assert!(!nodes[3].store().contains(&id));
}

#[test]
fn out_of_order_delivery_is_buffered_then_released() {
    let mut nodes = common::network(3, 50);
    nodes[0].submit_transaction(b"t".to_vec());
    for round in 0..12 {
        let (a, b) = [(0, 1), (1, 2), (2, 0)][round % 3];
        let (x, y) = common::pair(&mut nodes, a, b);
        synchronisation_procedure(x, y).unwrap();
    }
    let mut events: Vec<_> = nodes[0].store().iter().filter(|e| !e.is_leaf()).cloned().collect();
    events.sort_by_key(|e| (e.lamport_timestamp, e.id()));

    let mut fresh = common::network(3, 50).remove(2);
    let mut in_order = common::network(3, 50).remove(2);
    for e in &events {
        in_order.insert_event(e.clone().without_local_state()).unwrap();
    }
    let mut buffered = 0;
    for e in events.iter().rev() {
        if let Insertion::Buffered(_) = fresh.insert_event(e.clone().without_local_state()).unwrap() {
            buffered += 1;
        }
    }
    assert!(buffered > 0);
    assert_eq!(fresh.store().orphan_count(), 0);
    assert_eq!(fresh.store().len(), in_order.store().len());
    assert_eq!(fresh.finalised_log(), in_order.finalised_log());
    for e in &events {
        let (a, b) = (fresh.store().get_event(&e.id()).unwrap(), in_order.store().get_event(&e.id()).unwrap());
        assert_eq!((a.frame, a.is_root), (b.frame, b.is_root));
    }
    assert!(fresh.finalised_log().len() as u64 >= 1);
    assert!(fresh.state().last_finalised_frame >= Some(FrameNumber(0)));
}
