//! Initial Lamport times and the leaf events every node devises for every
//! peer without talking to anyone.

use aca::crypto::{CryptoSuite, Sha256Ed25519};
use aca::model::{lamport_init, make_leaf_event, FrameNumber, LamportInit, DEFAULT_LAMPORT_BYTE};
use aca::sim::sim_network;

fn main() -> aca::Result<()> {
    let suite = Sha256Ed25519::new();
    let (keys, peers) = sim_network(&suite, 4, 2024)?;

    for key in &keys {
        let id = key.peer_id();
        let zero = lamport_init(LamportInit::AllZero, &id, DEFAULT_LAMPORT_BYTE)?;
        let byte = lamport_init(LamportInit::IdByte, &id, DEFAULT_LAMPORT_BYTE)?;
        println!("peer {}  all_zero={zero}  id_byte[{DEFAULT_LAMPORT_BYTE}]={byte}", &id.to_hex()[..16]);
    }

    // Node 0 and node 1 devise peer 2's leaf independently: same id, and
    // neither copy is signed since neither node is its creator.
    let target = keys[2].peer_id();
    let by_0 = make_leaf_event(target, &peers, FrameNumber(0), aca::LamportTime(0), &suite, Some((&keys[0].peer_id(), &keys[0])))?;
    let by_1 = make_leaf_event(target, &peers, FrameNumber(0), aca::LamportTime(0), &suite, Some((&keys[1].peer_id(), &keys[1])))?;
    println!("\nleaf of peer 2 as seen by node 0: {}", by_0.id().to_hex());
    println!("leaf of peer 2 as seen by node 1: {}", by_1.id().to_hex());
    println!("same id: {}, signatures: {} / {}", by_0.id() == by_1.id(), by_0.signatures.len(), by_1.signatures.len());

    let own = make_leaf_event(target, &peers, FrameNumber(0), aca::LamportTime(0), &suite, Some((&target, &keys[2])))?;
    println!("creator's own copy carries {} signature; frame {}, root {}", own.signatures.len(), own.frame, own.is_root);
    println!("suite: {}", suite.name());
    Ok(())
}
