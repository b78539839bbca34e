//! Many seeded runs over several network sizes; prints one line per run
//! and stops with an error if any pair of nodes disagrees.
//!
//! cargo run --release --example agreement_sweep -- [seeds]

use aca::sim::{sweep, SimConfig};

fn main() -> aca::Result<()> {
    let seeds: u64 = std::env::args().nth(1).map_or(5, |s| s.parse().expect("seed count"));
    let mut cfg = SimConfig::default();
    cfg.min_events_per_node = 100;
    cfg.set("selector_mode", "mixed")?;
    cfg.set("delay_model", "uniform:0:5")?;

    let reports = sweep(&cfg, &[3, 4, 5, 7], &(1..=seeds).collect::<Vec<_>>())?;
    for r in &reports {
        println!(
            "n={} seed={:<3} steps={:<5} frames>={:<4} {} violations={}",
            r.config.n_nodes,
            r.config.rng_seed,
            r.steps,
            r.min_frames_finalised(),
            r.agreement,
            r.violations.len()
        );
    }
    let bad = reports.iter().filter(|r| !r.passed()).count();
    println!("{} runs, {bad} failed", reports.len());
    if bad > 0 {
        return Err(aca::Error::Integrity(format!("{bad} runs failed")));
    }
    Ok(())
}
