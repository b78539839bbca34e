//! Nodes on real threads exchanging encoded messages over channels.

use aca::sim::threaded::run_threaded;
use aca::sim::{log_digest, SimConfig};

fn main() -> aca::Result<()> {
    let mut cfg = SimConfig::default();
    cfg.n_nodes = 5;
    cfg.set("selector_mode", "mixed")?;
    let report = run_threaded(&cfg, 200)?;
    for (i, log) in report.finalised_logs.iter().enumerate() {
        println!("node {i}: {} frames, log digest {}", log.len(), &log_digest(log).to_hex()[..16]);
    }
    println!("agreement on common frames: {}", report.agreement);
    println!("violations: {}, failed exchanges: {}", report.violations.len(), report.failed_exchanges);
    Ok(())
}
