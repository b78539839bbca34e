use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use aca::model::Digest;
use aca::sim::{self, SimConfig, Simulation};

#[derive(Parser)]
#[command(name = "aca", version, about = "Gossip consensus simulator and tooling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulated networks.
    #[command(subcommand)]
    Sim(SimCommand),
    /// Event DAG tools.
    #[command(subcommand)]
    Dag(DagCommand),
    /// Structural checks.
    #[command(subcommand)]
    Audit(AuditCommand),
}

#[derive(Subcommand)]
enum SimCommand {
    /// Run one simulation and print its report.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Also write the report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run the config over several network sizes and seeds.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Comma-separated network sizes.
        #[arg(long, default_value = "3,4,5,7")]
        sizes: String,
        /// Seeds: `A..B` (inclusive) or a comma-separated list.
        #[arg(long, default_value = "1..20")]
        seeds: String,
        /// Where failing configs are written for replay.
        #[arg(long)]
        archive: Option<PathBuf>,
    },
    /// Re-run a config and check it reproduces a schedule digest.
    Replay {
        /// Hex schedule digest from an earlier report.
        digest: String,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

#[derive(Subcommand)]
enum DagCommand {
    /// Run a simulation and print one node's DAG in DOT syntax.
    Export {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Node index in peer-list order.
        #[arg(long, default_value_t = 0)]
        node: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum AuditCommand {
    /// Run a simulation and check every stored event.
    Invariants {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat key=value config file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set n_nodes=7`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Shorthand for `--set rng_seed=N`.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> aca::Result<SimConfig> {
        let mut cfg = match &self.config {
            Some(path) => SimConfig::parse(&std::fs::read_to_string(path)?)?,
            None => SimConfig::default(),
        };
        for o in &self.overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| aca::Error::Config(format!("override {o:?} is not key=value")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(seed) = self.seed {
            cfg.rng_seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> aca::Result<Vec<T>> {
    s.split(',')
        .map(|p| p.trim().parse().map_err(|_| aca::Error::Config(format!("bad {what} {p:?}"))))
        .collect()
}

fn parse_seeds(s: &str) -> aca::Result<Vec<u64>> {
    match s.split_once("..") {
        Some((a, b)) => {
            let a: u64 = a.trim().parse().map_err(|_| aca::Error::Config(format!("bad seed range {s:?}")))?;
            let b: u64 = b.trim().parse().map_err(|_| aca::Error::Config(format!("bad seed range {s:?}")))?;
            Ok((a..=b).collect())
        }
        None => parse_list(s, "seed"),
    }
}

fn run(cli: Cli) -> aca::Result<bool> {
    match cli.command {
        Command::Sim(SimCommand::Run { cfg, report }) => {
            let cfg = cfg.load()?;
            println!("seed={}", cfg.rng_seed);
            let r = sim::run_simulation(cfg)?;
            let text = r.render();
            print!("{text}");
            if let Some(path) = report {
                std::fs::write(path, &text)?;
            }
            Ok(r.passed())
        }
        Command::Sim(SimCommand::Sweep { cfg, sizes, seeds, archive }) => {
            let base = cfg.load()?;
            let sizes: Vec<usize> = parse_list(&sizes, "size")?;
            let seeds = parse_seeds(&seeds)?;
            let reports = sim::sweep(&base, &sizes, &seeds)?;
            let mut failures = 0;
            for r in &reports {
                println!(
                    "n={} seed={} steps={} min_frames={} agreement={} violations={} digest={}",
                    r.config.n_nodes,
                    r.config.rng_seed,
                    r.steps,
                    r.min_frames_finalised(),
                    r.agreement,
                    r.violations.len(),
                    r.schedule_digest.to_hex()
                );
                if !r.passed() {
                    failures += 1;
                    if let Some(dir) = &archive {
                        println!("  archived {}", sim::archive_counterexample(dir, r)?.display());
                    }
                }
            }
            println!("runs={} failures={failures}", reports.len());
            Ok(failures == 0)
        }
        Command::Sim(SimCommand::Replay { digest, cfg }) => {
            let expected = Digest::from_hex(&digest)
                .ok_or_else(|| aca::Error::Config(format!("{digest:?} is not a hex digest")))?;
            let cfg = cfg.load()?;
            println!("seed={}", cfg.rng_seed);
            let r = sim::replay(cfg, &expected)?;
            print!("{}", r.render());
            println!("replay reproduced schedule {}", expected.to_hex());
            Ok(r.passed())
        }
        Command::Dag(DagCommand::Export { cfg, node, out }) => {
            let cfg = cfg.load()?;
            eprintln!("seed={}", cfg.rng_seed);
            let mut s = Simulation::new(cfg)?;
            if node >= s.len() {
                return Err(aca::Error::Config(format!("node {node} out of range for {} nodes", s.len())));
            }
            s.run();
            let dot = sim::export_dag(s.engine(node).store());
            match out {
                Some(path) => std::fs::write(path, dot)?,
                None => print!("{dot}"),
            }
            Ok(true)
        }
        Command::Audit(AuditCommand::Invariants { cfg }) => {
            let cfg = cfg.load()?;
            println!("seed={}", cfg.rng_seed);
            let mut s = Simulation::new(cfg)?;
            let reason = s.run();
            let r = s.report(reason);
            let events: usize = s.engines().map(|e| e.store().len()).sum();
            println!("events_audited={events}");
            for v in &r.violations {
                println!("{v}");
            }
            println!("agreement={}", r.agreement);
            println!("violations={}", r.violations.len());
            println!("schedule_digest={}", r.schedule_digest.to_hex());
            Ok(r.passed())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}
