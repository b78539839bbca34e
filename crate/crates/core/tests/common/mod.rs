#![allow(dead_code)]

use std::cmp::Ordering;
use std::sync::Arc;

use aca::consensus::{Engine, EngineConfig};
use aca::crypto::{hash_event, CryptoSuite, Sha256Ed25519};
use aca::model::{
    Digest, Event, EventId, InternalTag, InternalTx, LamportTime, ParentLink, PeerId, TransactionPayload,
};
use aca::sim::sim_network;
use aca::store::EventStore;
use rand::Rng;

/// Engines of an `n`-node network in peer-list order.
pub fn network(n: usize, seed: u64) -> Vec<Engine> {
    let suite: Arc<dyn CryptoSuite> = Sha256Ed25519::shared();
    let (keys, peers) = sim_network(suite.as_ref(), n, seed).unwrap();
    keys.into_iter()
        .map(|k| Engine::new(k, peers.clone(), suite.clone(), EngineConfig::default()).unwrap())
        .collect()
}

pub fn pair(nodes: &mut [Engine], a: usize, b: usize) -> (&mut Engine, &mut Engine) {
    assert_ne!(a, b);
    if a < b {
        let (x, y) = nodes.split_at_mut(b);
        (&mut x[a], &mut y[0])
    } else {
        let (x, y) = nodes.split_at_mut(a);
        (&mut y[0], &mut x[b])
    }
}

pub fn random_event(rng: &mut impl Rng) -> Event {
    let mut d = || {
        let mut b = [0u8; 32];
        rng.fill(&mut b);
        b
    };
    let (creator, sp, op) = (PeerId(d()), Digest(d()), Digest(d()));
    let height = rng.gen::<u64>() >> rng.gen_range(0..64);
    let lamport = LamportTime(rng.gen::<u64>() >> rng.gen_range(0..64));
    let user = (0..rng.gen_range(0..5))
        .map(|_| (0..rng.gen_range(0..40)).map(|_| rng.gen()).collect())
        .collect();
    let internal = (0..rng.gen_range(0..3))
        .map(|_| InternalTx {
            tag: InternalTag(rng.gen()),
            body: (0..rng.gen_range(0..20)).map(|_| rng.gen()).collect(),
        })
        .collect();
    Event::unsigned(
        creator,
        height,
        ParentLink { id: sp, hash: sp },
        ParentLink { id: op, hash: op },
        lamport,
        TransactionPayload {
            user_transactions: user,
            internal_transactions: internal,
        },
    )
}

/// A store of short per-creator chains with colliding timestamps, and a
/// random subset of at most 50 of its events to be ordered as one frame.
pub fn synthetic_frame(rng: &mut impl Rng) -> (EventStore, Vec<EventId>) {
    let suite = Sha256Ed25519::new();
    let mut store = EventStore::default();
    let creators: Vec<PeerId> = (0..rng.gen_range(2..=6u8)).map(|i| PeerId([i + 1; 32])).collect();
    let mut last: Vec<Event> = Vec::new();
    let mut all: Vec<EventId> = Vec::new();
    for c in &creators {
        let mut leaf = Event::unsigned(
            *c,
            0,
            ParentLink::NONE,
            ParentLink::NONE,
            LamportTime(rng.gen_range(0..3)),
            TransactionPayload::default(),
        );
        leaf.hash = hash_event(&leaf, &suite);
        store.put_event(leaf.clone()).unwrap();
        all.push(leaf.id());
        last.push(leaf);
    }
    for _ in 0..rng.gen_range(1..60) {
        let ci = rng.gen_range(0..creators.len());
        let oi = (ci + rng.gen_range(1..creators.len())) % creators.len();
        let sp = &last[ci];
        let op = &last[oi];
        let mut e = Event::unsigned(
            creators[ci],
            sp.height + 1,
            ParentLink { id: sp.id(), hash: sp.hash },
            ParentLink { id: op.id(), hash: op.hash },
            LamportTime(sp.lamport_timestamp.0 + rng.gen_range(1..=3)),
            TransactionPayload::default(),
        );
        e.hash = hash_event(&e, &suite);
        store.put_event(e.clone()).unwrap();
        all.push(e.id());
        last[ci] = e;
    }
    for i in (1..all.len()).rev() {
        all.swap(i, rng.gen_range(0..=i));
    }
    all.truncate(rng.gen_range(1..=50));
    (store, all)
}

/// Naive comparator: key = (timestamp, self-ancestor timestamps from the
/// self-parent down, hash, id), compared lexicographically.
pub fn naive_sort(store: &EventStore, ids: &[EventId]) -> Vec<EventId> {
    let key = |id: &EventId| {
        let e = store.get_event(id).unwrap();
        let mut chain = Vec::new();
        let mut cur = e;
        while let Some(p) = store.get_event(&cur.self_parent.id) {
            chain.push(p.lamport_timestamp.0);
            cur = p;
        }
        (e.lamport_timestamp.0, chain, e.hash.0, e.id().0)
    };
    let mut keyed: Vec<_> = ids.iter().map(|id| (key(id), *id)).collect();
    // Insertion sort: independent of the library's sort.
    for i in 1..keyed.len() {
        let mut j = i;
        while j > 0 && keyed[j - 1].0.cmp(&keyed[j].0) == Ordering::Greater {
            keyed.swap(j - 1, j);
            j -= 1;
        }
    }
    keyed.into_iter().map(|(_, id)| id).collect()
}
