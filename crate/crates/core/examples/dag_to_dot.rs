//! Writes one node's event DAG as DOT. Render with `dot -Tsvg`.
//!
//! cargo run --example dag_to_dot > dag.dot

use aca::sim::{export_dag, SimConfig, Simulation};

fn main() -> aca::Result<()> {
    let mut cfg = SimConfig::default();
    cfg.n_nodes = 3;
    cfg.max_finalised_frames = Some(3);
    let mut sim = Simulation::new(cfg)?;
    sim.run();
    print!("{}", export_dag(sim.engine(0).store()));
    Ok(())
}
