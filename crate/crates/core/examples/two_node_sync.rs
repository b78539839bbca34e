//! Two nodes gossiping by hand: requests, bundles, event creation and the
//! first finalised frames.

use aca::gossip::synchronisation_procedure;
use aca::{Engine, EngineConfig, Sha256Ed25519};

fn main() -> aca::Result<()> {
    let suite = Sha256Ed25519::shared();
    let (keys, peers) = aca::sim::sim_network(suite.as_ref(), 2, 11)?;
    let mut a = Engine::new(keys[0].clone(), peers.clone(), suite.clone(), EngineConfig::default())?;
    let mut b = Engine::new(keys[1].clone(), peers, suite, EngineConfig::default())?;
    a.submit_transaction(b"hello from a".to_vec());
    b.submit_transaction(b"hello from b".to_vec());

    for round in 0..6 {
        let (x, y) = if round % 2 == 0 { (&mut a, &mut b) } else { (&mut b, &mut a) };
        let o = synchronisation_procedure(x, y)?;
        println!(
            "round {round}: {} pulled {} events, created {}, finalised {:?}",
            &x.id().to_hex()[..8],
            o.inserted,
            o.created.map_or("nothing".into(), |id| id.to_hex()[..8].to_string()),
            o.frames_finalised.iter().map(|f| f.0).collect::<Vec<_>>()
        );
    }
    for node in [&a, &b] {
        println!(
            "{}: lamport {}, height {}, frame {}, finalised frames {}",
            &node.id().to_hex()[..8],
            node.state().lamport,
            node.state().height,
            node.state().current_frame,
            node.finalised_log().len()
        );
    }
    assert_eq!(a.finalised_log()[0], b.finalised_log()[0]);
    Ok(())
}
