//! Four nodes where one stays silent: nothing finalises until the silent
//! node speaks, then every frame below the lowest "highest visible root"
//! finalises at once. Prints the finalised order with delivered payloads.

use aca::consensus::{export_finalised, visibilis_bound, Delivery, DeliverySink};
use aca::gossip::synchronisation_procedure;
use aca::{Engine, EngineConfig, FrameNumber, Sha256Ed25519};

struct Print;

impl DeliverySink for Print {
    fn deliver(&mut self, d: Delivery<'_>) {
        println!("  deliver frame {} event {} tx {:?}", d.frame, &d.event.to_hex()[..8], String::from_utf8_lossy(d.transaction));
    }
}

fn main() -> aca::Result<()> {
    let suite = Sha256Ed25519::shared();
    let (keys, peers) = aca::sim::sim_network(suite.as_ref(), 4, 8)?;
    let mut nodes: Vec<Engine> = keys
        .into_iter()
        .map(|k| Engine::new(k, peers.clone(), suite.clone(), EngineConfig::default()))
        .collect::<aca::Result<_>>()?;
    nodes[3].set_sink(Box::new(Print));
    for (i, n) in nodes.iter_mut().take(3).enumerate() {
        n.submit_transaction(format!("tx from node {i}").into_bytes());
    }

    let pairs = [(0, 1), (1, 2), (2, 0), (1, 0), (2, 1), (0, 2)];
    let mut k = 0;
    while nodes[0].state().current_frame < FrameNumber(2) {
        let (a, b) = pairs[k % pairs.len()];
        let (x, y) = two(&mut nodes, a, b);
        synchronisation_procedure(x, y)?;
        k += 1;
    }
    println!("after {k} syncs without node 3: node 0 at frame {}, finalised {}", nodes[0].state().current_frame, nodes[0].finalised_log().len());

    println!("node 3 syncs with node 0:");
    let (d, a) = two(&mut nodes, 3, 0);
    let outcome = synchronisation_procedure(d, a)?;
    let created = outcome.created.expect("pending work");
    let d = &nodes[3];
    let ft = &d.store().get_event(&created).expect("stored").flag_table;
    let bound = visibilis_bound(ft, 4, d.store())?.expect("all creators visible");
    println!("creator table {:?}", bound.creator_table.0.values().map(|f| f.0).collect::<Vec<_>>());
    println!("finalised frames {:?} (bound {})", outcome.frames_finalised.iter().map(|f| f.0).collect::<Vec<_>>(), bound.upto);
    print!("{}", export_finalised(d.finalised_log(), d.store()));
    Ok(())
}

fn two(nodes: &mut [Engine], a: usize, b: usize) -> (&mut Engine, &mut Engine) {
    if a < b {
        let (x, y) = nodes.split_at_mut(b);
        (&mut x[a], &mut y[0])
    } else {
        let (x, y) = nodes.split_at_mut(a);
        (&mut y[0], &mut x[b])
    }
}
