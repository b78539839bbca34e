//! Peer selection, bundle selection and the two-way synchronisation
//! exchange.

use std::collections::BTreeSet;
use std::sync::Mutex;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::codec::{decode_message, encode_reply, encode_request, WireMessage};
use crate::consensus::{Engine, Insertion};
use crate::crypto::{sign_event, verify_event};
use crate::error::{Error, Result};
use crate::model::{
    Event, EventId, EventSignature, FrameNumber, GossipEntry, GossipList, LamportTime, PeerId,
};
use crate::store::EventStore;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SelectorMode {
    /// Halving-stride walk around the peer ring.
    #[default]
    Deterministic,
    /// Uniform over peers other than self and the last one contacted.
    Random { seed: u64 },
}

/// One step of the deterministic walk: returns `(current + r) % n` and
/// advances `r` (halve while above 1, then reset to `n / 2`).
pub fn next_peer(current: usize, n: usize, r: &mut usize) -> usize {
    let next = (current + *r) % n;
    *r = if *r > 1 { *r >> 1 } else { n >> 1 };
    next
}

/// Random choice excluding `current` and, when another choice exists,
/// `last`.
pub fn random_next_peer(current: usize, n: usize, last: Option<usize>, rng: &mut impl Rng) -> usize {
    let candidates: Vec<usize> = (0..n)
        .filter(|&i| i != current && (Some(i) != last || n <= 2))
        .collect();
    candidates[rng.gen_range(0..candidates.len())]
}

#[derive(Debug)]
pub struct PeerSelector {
    index: usize,
    n: usize,
    r: usize,
    last: Option<usize>,
    mode: SelectorMode,
    rng: Option<ChaCha8Rng>,
}

impl PeerSelector {
    pub fn new(index: usize, n: usize, mode: SelectorMode) -> Result<Self> {
        if n < 2 || index >= n {
            return Err(Error::Config(format!("peer selector needs index < n and n >= 2 (index {index}, n {n})")));
        }
        let rng = match mode {
            SelectorMode::Deterministic => None,
            SelectorMode::Random { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        };
        Ok(PeerSelector {
            index,
            n,
            r: n >> 1,
            last: None,
            mode,
            rng,
        })
    }

    pub fn mode(&self) -> SelectorMode {
        self.mode
    }

    /// Index into the sorted peer list.
    pub fn next(&mut self) -> usize {
        let chosen = match &mut self.rng {
            None => next_peer(self.index, self.n, &mut self.r),
            Some(rng) => random_next_peer(self.index, self.n, self.last, rng),
        };
        self.last = Some(chosen);
        chosen
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SyncRequest {
    pub sender: PeerId,
    pub lamport_time: LamportTime,
    pub gossip_list: GossipList,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SyncReply {
    pub sender: PeerId,
    pub lamport_time: LamportTime,
    pub gossip_list: GossipList,
    /// Topologically ordered, without local state.
    pub bundle: Vec<Event>,
}

/// Events the remote lacks according to its gossip list, in `(ts, id)`
/// order. Leaves are never sent; every node devises them itself.
pub fn select_bundle<'a>(store: &'a EventStore, remote: &GossipList) -> Vec<&'a Event> {
    let mut out: Vec<&Event> = Vec::new();
    for creator in store.creators() {
        let known = remote.get(creator);
        for id in store.chain(creator) {
            let e = store.get_event(id).expect("chain entries are stored");
            if e.is_leaf() {
                continue;
            }
            let wanted = match known {
                None => true,
                Some(entry) => {
                    e.lamport_timestamp >= entry.lamport_timestamp && e.id() != entry.last_event_id
                }
            };
            if wanted {
                out.push(e);
            }
        }
    }
    out.sort_by(|a, b| (a.lamport_timestamp, a.id()).cmp(&(b.lamport_timestamp, b.id())));
    out
}

/// What one applied reply did to the local node.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SyncOutcome {
    pub received: usize,
    pub inserted: usize,
    pub already_known: usize,
    pub buffered: usize,
    pub rejected: Vec<(EventId, String)>,
    pub created: Option<EventId>,
    pub frames_finalised: Vec<FrameNumber>,
}

impl Engine {
    pub fn make_request(&self) -> SyncRequest {
        SyncRequest {
            sender: self.id(),
            lamport_time: self.state.lamport,
            gossip_list: self.state.gossip_list.clone(),
        }
    }

    /// Chooses the next sync partner.
    pub fn select_peer(&mut self) -> PeerId {
        let i = self.state.selector.next();
        self.state.peer_list.by_index(i).id
    }

    /// Answers a sync request with every event the requester is missing,
    /// each relay-signed by this node.
    pub fn handle_request(&mut self, req: &SyncRequest) -> Result<SyncReply> {
        if !self.state.peer_list.contains(&req.sender) || req.sender == self.id() {
            return Err(Error::UnknownPeer(req.sender));
        }
        self.state.lamport = self.state.lamport.max(req.lamport_time);
        let me = self.id();
        let mut bundle = Vec::new();
        for e in select_bundle(&self.store, &req.gossip_list) {
            let mut out = e.clone().without_local_state();
            if !out.is_signed_by(&me) {
                let signature = sign_event(&out, &self.key, self.suite.as_ref())?;
                out.signatures.push(EventSignature { signer: me, signature });
            }
            bundle.push(out);
        }
        Ok(SyncReply {
            sender: me,
            lamport_time: self.state.lamport,
            gossip_list: self.state.gossip_list.clone(),
            bundle,
        })
    }

    /// Verifies and inserts a reply's bundle, merges its gossip list and
    /// runs the creation guard.
    pub fn apply_reply(&mut self, reply: SyncReply) -> Result<SyncOutcome> {
        let sender = reply.sender;
        if !self.state.peer_list.contains(&sender) || sender == self.id() {
            return Err(Error::UnknownPeer(sender));
        }
        let mut outcome = SyncOutcome {
            received: reply.bundle.len(),
            ..Default::default()
        };
        let mut seen = BTreeSet::new();
        for e in reply.bundle {
            let id = e.id();
            if !seen.insert(id) || self.store.contains(&id) {
                outcome.already_known += 1;
                continue;
            }
            let report = verify_event(&e, &self.state.peer_list, self.suite.as_ref());
            if let Some(reason) = report.rejection_reason() {
                tracing::warn!(event = %id, reason, "event dropped");
                outcome.rejected.push((id, reason.to_string()));
                continue;
            }
            if report.has_warnings() {
                tracing::warn!(event = %id, ?report, "relay signature problems");
            }
            match self.insert_event(e) {
                Ok(Insertion::Inserted(o)) => {
                    outcome.inserted += 1 + o.released_orphans;
                    outcome.frames_finalised.extend(o.frames_finalised);
                }
                Ok(Insertion::AlreadyKnown) => outcome.already_known += 1,
                Ok(Insertion::Buffered(_)) => outcome.buffered += 1,
                Err(err @ (Error::Backpressure(_) | Error::ProtocolViolation(_))) => return Err(err),
                Err(err) => {
                    tracing::warn!(event = %id, %err, "event rejected");
                    outcome.rejected.push((id, err.to_string()));
                }
            }
        }

        self.merge_remote_gossip(&reply.gossip_list);
        self.state.lamport = self.state.lamport.max(reply.lamport_time);

        if self.has_pending_work() {
            let (id, o) = self.create_event(&sender)?;
            outcome.created = Some(id);
            outcome.frames_finalised.extend(o.frames_finalised);
        }
        Ok(outcome)
    }

    /// Max-merges a remote gossip list, then points every entry naming an
    /// event this node does not hold back at the newest held event.
    fn merge_remote_gossip(&mut self, remote: &GossipList) {
        for conflict in self.state.gossip_list.merge_from(remote) {
            tracing::warn!(?conflict, "gossip list tie");
        }
        let stale: Vec<PeerId> = self
            .state
            .gossip_list
            .0
            .iter()
            .filter(|(_, entry)| !self.store.contains(&entry.last_event_id))
            .map(|(p, _)| *p)
            .collect();
        for creator in stale {
            if let Ok(last) = self.store.last_event_of(&creator) {
                self.state.gossip_list.0.insert(
                    creator,
                    GossipEntry {
                        lamport_timestamp: last.lamport_timestamp,
                        last_event_id: last.id(),
                    },
                );
            }
        }
    }

    /// Wire-level request handler.
    pub fn handle_request_bytes(&mut self, bytes: &[u8]) -> Result<Vec<u8>> {
        let suite = self.suite.name();
        match decode_message(bytes, &suite)? {
            WireMessage::Request(req) => {
                let reply = self.handle_request(&req)?;
                Ok(encode_reply(&reply, &suite))
            }
            WireMessage::Reply(_) => Err(Error::ProtocolViolation("expected a sync request".into())),
        }
    }
}

/// One full exchange where `a` initiates towards `b`, in memory.
pub fn synchronisation_procedure(a: &mut Engine, b: &mut Engine) -> Result<SyncOutcome> {
    let req = a.make_request();
    let reply = b.handle_request(&req)?;
    a.apply_reply(reply)
}

/// Request/response carrier between nodes.
pub trait Transport: Send + Sync {
    fn exchange(&self, to: &PeerId, request: Vec<u8>) -> Result<Vec<u8>>;
}

/// One heartbeat of a node shared between threads. The lock is released
/// while the request is in flight so the node keeps serving its peers.
pub fn heartbeat_step(engine: &Mutex<Engine>, transport: &dyn Transport) -> Result<SyncOutcome> {
    let (peer, bytes, suite) = {
        let mut node = engine.lock().unwrap();
        let peer = node.select_peer();
        let suite = node.suite().name();
        (peer, encode_request(&node.make_request(), &suite), suite)
    };
    let answer = transport.exchange(&peer, bytes)?;
    let reply = match decode_message(&answer, &suite)? {
        WireMessage::Reply(reply) if reply.sender == peer => reply,
        WireMessage::Reply(reply) => {
            return Err(Error::ProtocolViolation(format!("reply from {} instead of {peer}", reply.sender)))
        }
        WireMessage::Request(_) => return Err(Error::ProtocolViolation("expected a sync reply".into())),
    };
    engine.lock().unwrap().apply_reply(reply)
}
