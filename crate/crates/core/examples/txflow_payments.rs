//! Payments over the finalised order: 100 transfers, 10 of them paired
//! double spends submitted to different nodes at once. Every node ends with
//! the same ledger and exactly one half of each pair applied.

use aca::ledger::{run_txflow, TxFlowScenario};

fn main() -> aca::Result<()> {
    let seed = std::env::args().nth(1).map_or(1, |s| s.parse().expect("seed"));
    let report = run_txflow(&TxFlowScenario { seed, ..TxFlowScenario::default() })?;

    println!("seed {seed}, stopped: {:?}", report.stop_reason);
    for (i, (digest, state)) in report.digests.iter().zip(&report.states).enumerate() {
        println!(
            "node {i}: applied={} rejected={} total={} ledger={}",
            state.applied,
            state.rejected,
            state.total(),
            &digest.to_hex()[..16]
        );
    }
    for (k, winners) in report.pair_winners.iter().enumerate() {
        println!("pair {k}: winning half per node {winners:?}");
    }
    println!("ledgers agree: {}", report.digests_agree());
    println!("pairs exclusive: {}", report.pairs_exclusive());
    println!("conservation breaks: {}", report.conservation_breaks);
    Ok(())
}
