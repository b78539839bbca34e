use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt::Write as _;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest as _, Sha256};

use super::audit::{audit_invariants, check_agreement, Agreement, Violation};
use super::config::{DelayModel, SimConfig};
use crate::codec::{decode_message, encode_request, WireMessage};
use crate::consensus::{Delivery, DeliverySink, Engine, EngineConfig, FinalOrder};
use crate::crypto::{CryptoSuite, KeyHandle, Sha256Ed25519};
use crate::error::{Error, Result};
use crate::gossip::SelectorMode;
use crate::model::{Digest, PeerId, PeerInfo, PeerList};

/// A user transaction as delivered on one node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Delivered {
    pub frame: u64,
    pub transaction: Vec<u8>,
}

#[derive(Clone, Default)]
struct Recorder(Arc<Mutex<Vec<Delivered>>>);

struct TeeSink {
    recorder: Recorder,
    extra: Option<Box<dyn DeliverySink>>,
}

impl DeliverySink for TeeSink {
    fn deliver(&mut self, d: Delivery<'_>) {
        self.recorder.0.lock().unwrap().push(Delivered {
            frame: d.frame.0,
            transaction: d.transaction.to_vec(),
        });
        if let Some(extra) = &mut self.extra {
            extra.deliver(d);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Action {
    Heartbeat { node: usize },
    Request { from: usize, to: usize, bytes: Vec<u8> },
    Reply { from: usize, to: usize, bytes: Vec<u8> },
}

struct SimNode {
    engine: Engine,
    awaiting_reply: bool,
    recorder: Recorder,
}

/// Deterministic keys of simulated node `i`.
pub fn sim_key(suite: &dyn CryptoSuite, seed: u64, i: usize) -> KeyHandle {
    let mut material = b"aca-sim-key".to_vec();
    material.extend_from_slice(&seed.to_be_bytes());
    material.extend_from_slice(&(i as u64).to_be_bytes());
    suite.key_from_seed(suite.digest(&material).0)
}

/// Key handles and the peer list of a simulated network, sorted by peer id.
pub fn sim_network(suite: &dyn CryptoSuite, n: usize, seed: u64) -> Result<(Vec<KeyHandle>, Arc<PeerList>)> {
    let mut keys: Vec<KeyHandle> = (0..n).map(|i| sim_key(suite, seed, i)).collect();
    keys.sort_by_key(|k| k.peer_id());
    let peers = PeerList::new(
        keys.iter()
            .enumerate()
            .map(|(i, k)| PeerInfo {
                id: k.peer_id(),
                public_key: k.public_key().to_vec(),
                net_address: format!("sim://{i}"),
            })
            .collect(),
    )?;
    Ok((keys, Arc::new(peers)))
}

/// Engine configuration for node `i` of a simulated network.
pub fn engine_config(cfg: &SimConfig, i: usize) -> EngineConfig {
    let selector = if cfg.selector_mode.is_random(i) {
        SelectorMode::Random {
            seed: cfg.rng_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64 + 1),
        }
    } else {
        SelectorMode::Deterministic
    };
    EngineConfig {
        root_majority: cfg.root_majority_override,
        lamport_init: cfg.lamport_init_strategy,
        lamport_byte: cfg.lamport_byte,
        strip_flag_tables: cfg.stripping_enabled,
        selector,
        ..EngineConfig::default()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    TargetsMet,
    Drained,
    MaxSteps,
}

impl StopReason {
    fn as_str(self) -> &'static str {
        match self {
            StopReason::TargetsMet => "targets_met",
            StopReason::Drained => "drained",
            StopReason::MaxSteps => "max_steps",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeSummary {
    pub id: PeerId,
    pub events_created: u64,
    pub tx_delivered: u64,
    pub frames_finalised: u64,
    pub log_digest: Digest,
}

#[derive(Clone, Debug)]
pub struct SimReport {
    pub config: SimConfig,
    pub steps: u64,
    pub stop_reason: StopReason,
    pub nodes: Vec<NodeSummary>,
    pub finalised_logs: Vec<Vec<FinalOrder>>,
    pub agreement: Agreement,
    pub violations: Vec<Violation>,
    pub tx_injected: u64,
    pub messages: u64,
    pub schedule_digest: Digest,
}

impl SimReport {
    pub fn min_frames_finalised(&self) -> u64 {
        self.nodes.iter().map(|n| n.frames_finalised).min().unwrap_or(0)
    }

    pub fn min_events_created(&self) -> u64 {
        self.nodes.iter().map(|n| n.events_created).min().unwrap_or(0)
    }

    pub fn passed(&self) -> bool {
        self.agreement.is_pass() && self.violations.is_empty()
    }

    /// Human-readable body followed by a `key=value` trailer.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "ACA simulation report");
        let _ = writeln!(s, "seed {}", self.config.rng_seed);
        let _ = writeln!(s, "\n[config]");
        s.push_str(&self.config.render());
        let _ = writeln!(s, "\n[nodes]");
        for (i, n) in self.nodes.iter().enumerate() {
            let _ = writeln!(
                s,
                "node {i} id={} events_created={} tx_delivered={} frames_finalised={} log_digest={}",
                &n.id.to_hex()[..16],
                n.events_created,
                n.tx_delivered,
                n.frames_finalised,
                n.log_digest.to_hex()
            );
        }
        let _ = writeln!(s, "\n[agreement]");
        let _ = writeln!(s, "{}", self.agreement);
        let _ = writeln!(s, "\n[invariants]");
        if self.violations.is_empty() {
            let _ = writeln!(s, "no violations");
        }
        for v in &self.violations {
            let _ = writeln!(s, "{v}");
        }
        let _ = writeln!(s, "\n[trailer]");
        let _ = writeln!(s, "seed={}", self.config.rng_seed);
        let _ = writeln!(s, "n_nodes={}", self.config.n_nodes);
        let _ = writeln!(s, "steps={}", self.steps);
        let _ = writeln!(s, "stop_reason={}", self.stop_reason.as_str());
        let _ = writeln!(s, "messages={}", self.messages);
        let _ = writeln!(s, "tx_injected={}", self.tx_injected);
        let _ = writeln!(s, "min_events_created={}", self.min_events_created());
        let _ = writeln!(s, "min_frames_finalised={}", self.min_frames_finalised());
        let _ = writeln!(s, "agreement={}", if self.agreement.is_pass() { "pass" } else { "fail" });
        let _ = writeln!(s, "violations={}", self.violations.len());
        let _ = writeln!(s, "schedule_digest={}", self.schedule_digest.to_hex());
        s
    }
}

/// Hashes a finalised log in its export form.
pub fn log_digest(log: &[FinalOrder]) -> Digest {
    let mut h = Sha256::new();
    for order in log {
        h.update(order.frame.0.to_be_bytes());
        h.update((order.ordered_events.len() as u64).to_be_bytes());
        for id in &order.ordered_events {
            h.update(id.as_bytes());
        }
    }
    Digest(h.finalize().into())
}

/// A seeded network of in-process nodes over a virtual network.
pub struct Simulation {
    cfg: SimConfig,
    nodes: Vec<SimNode>,
    queue: BinaryHeap<Reverse<(u64, u64, Action)>>,
    rng: ChaCha8Rng,
    step: u64,
    seq: u64,
    schedule: Sha256,
    injecting: bool,
    inject_credit: f64,
    tx_injected: u64,
    scripted: BTreeMap<u64, Vec<(usize, Vec<u8>)>>,
    messages: u64,
    violations: Vec<Violation>,
}

impl Simulation {
    pub fn new(cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        let suite: Arc<dyn CryptoSuite> = Sha256Ed25519::shared();
        let (keys, peers) = sim_network(suite.as_ref(), cfg.n_nodes, cfg.rng_seed)?;
        let mut nodes = Vec::with_capacity(keys.len());
        for (i, key) in keys.into_iter().enumerate() {
            let mut engine = Engine::new(key, peers.clone(), suite.clone(), engine_config(&cfg, i))?;
            let recorder = Recorder::default();
            engine.set_sink(Box::new(TeeSink {
                recorder: recorder.clone(),
                extra: None,
            }));
            nodes.push(SimNode {
                engine,
                awaiting_reply: false,
                recorder,
            });
        }
        let mut sim = Simulation {
            rng: ChaCha8Rng::seed_from_u64(cfg.rng_seed),
            cfg,
            nodes,
            queue: BinaryHeap::new(),
            step: 0,
            seq: 0,
            schedule: Sha256::new(),
            injecting: true,
            inject_credit: 0.0,
            tx_injected: 0,
            scripted: BTreeMap::new(),
            messages: 0,
            violations: Vec::new(),
        };
        for node in 0..sim.nodes.len() {
            let offset = sim.rng.gen_range(0..sim.cfg.heartbeat);
            sim.push(offset, Action::Heartbeat { node });
        }
        Ok(sim)
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn engine(&self, i: usize) -> &Engine {
        &self.nodes[i].engine
    }

    pub fn engines(&self) -> impl Iterator<Item = &Engine> {
        self.nodes.iter().map(|n| &n.engine)
    }

    /// Adds a sink that sees node `i`'s deliveries after the built-in
    /// recorder.
    pub fn attach_sink(&mut self, i: usize, sink: Box<dyn DeliverySink>) {
        let recorder = self.nodes[i].recorder.clone();
        self.nodes[i].engine.set_sink(Box::new(TeeSink {
            recorder,
            extra: Some(sink),
        }));
    }

    /// Submits `tx` to node `i` at the start of `step`.
    pub fn schedule_submission(&mut self, step: u64, i: usize, tx: Vec<u8>) {
        self.scripted.entry(step).or_default().push((i, tx));
    }

    /// Enables or disables random injection.
    pub fn set_injecting(&mut self, on: bool) {
        self.injecting = on;
    }

    pub fn delivered(&self, i: usize) -> Vec<Delivered> {
        self.nodes[i].recorder.0.lock().unwrap().clone()
    }

    pub fn tx_injected(&self) -> u64 {
        self.tx_injected
    }

    fn push(&mut self, at: u64, action: Action) {
        self.seq += 1;
        self.queue.push(Reverse((at, self.seq, action)));
    }

    fn delay(&mut self) -> u64 {
        match self.cfg.delay_model {
            DelayModel::Fixed(d) => d,
            DelayModel::Uniform { min, max } => self.rng.gen_range(min..=max),
        }
    }

    fn record(&mut self, tag: u8, at: u64, from: usize, to: usize, bytes: &[u8]) {
        self.schedule.update([tag]);
        self.schedule.update(at.to_be_bytes());
        self.schedule.update((from as u64).to_be_bytes());
        self.schedule.update((to as u64).to_be_bytes());
        self.schedule.update((bytes.len() as u64).to_be_bytes());
        self.schedule.update(Sha256::digest(bytes));
    }

    fn violation(&mut self, node: usize, what: String) {
        self.violations.push(Violation {
            node,
            event: None,
            frame: None,
            what,
        });
    }

    /// Enqueues `rate` transactions per step on randomly chosen nodes.
    pub fn inject_transactions(&mut self, rate: f64) {
        self.inject_credit += rate;
        while self.inject_credit >= 1.0 {
            self.inject_credit -= 1.0;
            let node = self.rng.gen_range(0..self.nodes.len());
            let mut tx = b"tx".to_vec();
            tx.extend_from_slice(&self.tx_injected.to_be_bytes());
            self.tx_injected += 1;
            self.record(0x10, self.step, node, node, &tx);
            self.nodes[node].engine.submit_transaction(tx);
        }
    }

    /// Processes every action due at the current step, then advances.
    pub fn tick(&mut self) {
        if let Some(batch) = self.scripted.remove(&self.step) {
            for (node, tx) in batch {
                self.record(0x11, self.step, node, node, &tx);
                self.tx_injected += 1;
                self.nodes[node].engine.submit_transaction(tx);
            }
        }
        if self.injecting {
            self.inject_transactions(self.cfg.tx_injection_rate);
        }
        while let Some(Reverse((at, _, _))) = self.queue.peek() {
            if *at > self.step {
                break;
            }
            let Reverse((at, _, action)) = self.queue.pop().expect("peeked");
            self.handle(at, action);
        }
        self.step += 1;
    }

    fn handle(&mut self, at: u64, action: Action) {
        match action {
            Action::Heartbeat { node } => {
                self.push(at + self.cfg.heartbeat, Action::Heartbeat { node });
                if self.nodes[node].awaiting_reply {
                    return;
                }
                let engine = &mut self.nodes[node].engine;
                let peer = engine.select_peer();
                let to = engine.state().peer_list.index_of(&peer).expect("selected from list");
                let bytes = encode_request(&engine.make_request(), &engine.suite().name());
                self.nodes[node].awaiting_reply = true;
                self.record(0x01, at, node, to, &bytes);
                let d = self.delay();
                self.push(at + d, Action::Request { from: node, to, bytes });
            }
            Action::Request { from, to, bytes } => {
                self.messages += 1;
                let result = self.nodes[to].engine.handle_request_bytes(&bytes);
                match result {
                    Ok(reply) => {
                        self.record(0x02, at, to, from, &reply);
                        let d = self.delay();
                        self.push(at + d, Action::Reply { from: to, to: from, bytes: reply });
                    }
                    Err(err) => {
                        self.nodes[from].awaiting_reply = false;
                        self.violation(to, format!("request from node {from} failed: {err}"));
                    }
                }
            }
            Action::Reply { from, to, bytes } => {
                self.messages += 1;
                self.nodes[to].awaiting_reply = false;
                let engine = &mut self.nodes[to].engine;
                let outcome = decode_message(&bytes, &engine.suite().name())
                    .map_err(Error::from)
                    .and_then(|m| match m {
                        WireMessage::Reply(r) => engine.apply_reply(r),
                        WireMessage::Request(_) => Err(Error::ProtocolViolation("request where reply expected".into())),
                    });
                match outcome {
                    Ok(o) => {
                        for (id, reason) in o.rejected {
                            self.violation(to, format!("event {id} from node {from} rejected: {reason}"));
                        }
                    }
                    Err(err) => self.violation(to, format!("reply from node {from} failed: {err}")),
                }
            }
        }
    }

    fn targets_met(&self) -> bool {
        self.nodes.iter().all(|n| {
            let e = &n.engine;
            let frames = e.finalised_log().len() as u64;
            e.state().height >= self.cfg.min_events_per_node
                && self.cfg.max_finalised_frames.is_none_or(|f| frames >= f)
        })
    }

    fn drained(&self) -> bool {
        self.scripted.is_empty()
            && self
                .nodes
                .iter()
                .all(|n| n.recorder.0.lock().unwrap().len() as u64 >= self.tx_injected)
    }

    /// Runs to the configured stopping point.
    pub fn run(&mut self) -> StopReason {
        let mut draining = false;
        while self.step < self.cfg.max_steps {
            self.tick();
            if draining {
                if self.drained() {
                    return StopReason::Drained;
                }
            } else if self.targets_met() {
                if !self.cfg.drain {
                    return StopReason::TargetsMet;
                }
                draining = true;
                self.injecting = false;
                if self.drained() {
                    return StopReason::Drained;
                }
            }
        }
        StopReason::MaxSteps
    }

    /// Audits the current state and builds the report.
    pub fn report(&self, stop_reason: StopReason) -> SimReport {
        let finalised_logs: Vec<Vec<FinalOrder>> =
            self.nodes.iter().map(|n| n.engine.finalised_log().to_vec()).collect();
        let agreement = check_agreement(&finalised_logs);
        let mut violations = self.violations.clone();
        let engines: Vec<&Engine> = self.engines().collect();
        violations.extend(audit_invariants(&engines));
        let nodes = self
            .nodes
            .iter()
            .zip(&finalised_logs)
            .map(|(n, log)| NodeSummary {
                id: n.engine.id(),
                events_created: n.engine.state().height,
                tx_delivered: n.recorder.0.lock().unwrap().len() as u64,
                frames_finalised: log.len() as u64,
                log_digest: log_digest(log),
            })
            .collect();
        SimReport {
            config: self.cfg.clone(),
            steps: self.step,
            stop_reason,
            nodes,
            finalised_logs,
            agreement,
            violations,
            tx_injected: self.tx_injected,
            messages: self.messages,
            schedule_digest: Digest(self.schedule.clone().finalize().into()),
        }
    }
}

/// Builds, runs and reports one simulation.
pub fn run_simulation(cfg: SimConfig) -> Result<SimReport> {
    let mut sim = Simulation::new(cfg)?;
    let reason = sim.run();
    Ok(sim.report(reason))
}
