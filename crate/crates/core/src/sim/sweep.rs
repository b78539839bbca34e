use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use super::config::SimConfig;
use super::run::{run_simulation, SimReport};
use crate::error::{Error, Result};
use crate::model::Digest;

/// Runs `base` once per (n, seed) pair, on all available cores. Reports
/// come back in input order.
pub fn sweep(base: &SimConfig, sizes: &[usize], seeds: &[u64]) -> Result<Vec<SimReport>> {
    let jobs: Vec<SimConfig> = sizes
        .iter()
        .flat_map(|&n| {
            seeds.iter().map(move |&seed| {
                let mut cfg = base.clone();
                cfg.n_nodes = n;
                cfg.rng_seed = seed;
                cfg
            })
        })
        .collect();
    let workers = thread::available_parallelism().map_or(1, |p| p.get()).min(jobs.len().max(1));
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<SimReport>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cfg) = jobs.get(i) else { break };
                let report = run_simulation(cfg.clone());
                results.lock().unwrap()[i] = Some(report);
            });
        }
    });
    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

/// Writes the config of a failed run as a replayable fixture named after
/// its schedule digest.
pub fn archive_counterexample(dir: &Path, report: &SimReport) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("counterexample-{}.cfg", report.schedule_digest.to_hex()));
    let mut text = format!(
        "# agreement: {}\n# violations: {}\n",
        report.agreement,
        report.violations.len()
    );
    text.push_str(&report.config.render());
    std::fs::write(&path, text)?;
    Ok(path)
}

/// Re-runs `cfg` and checks the schedule digest reproduces.
pub fn replay(cfg: SimConfig, expected: &Digest) -> Result<SimReport> {
    let report = run_simulation(cfg)?;
    if &report.schedule_digest != expected {
        return Err(Error::Integrity(format!(
            "replay produced schedule digest {} instead of {}",
            report.schedule_digest.to_hex(),
            expected.to_hex()
        )));
    }
    Ok(report)
}
