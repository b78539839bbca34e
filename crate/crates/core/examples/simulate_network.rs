//! Runs a seeded simulated network and prints its report.
//!
//! cargo run --example simulate_network -- [n_nodes] [seed]

use aca::sim::{run_simulation, SimConfig};

fn main() -> aca::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut cfg = SimConfig::default();
    cfg.n_nodes = args.next().map_or(Ok(4), |v| v.parse()).expect("n_nodes");
    cfg.rng_seed = args.next().map_or(Ok(7), |v| v.parse()).expect("seed");
    cfg.set("selector_mode", "mixed")?;
    cfg.set("delay_model", "uniform:0:5")?;
    cfg.min_events_per_node = 200;
    cfg.drain = true;

    let report = run_simulation(cfg)?;
    print!("{}", report.render());
    Ok(())
}
