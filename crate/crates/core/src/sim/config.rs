use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{LamportInit, DEFAULT_LAMPORT_BYTE};

/// Peer selection per node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SelectorPlan {
    Deterministic,
    Random,
    /// Even indices deterministic, odd indices random.
    Mixed,
    /// One entry per node; cycles if shorter than the network.
    PerNode(Vec<bool>),
}

impl SelectorPlan {
    /// True when node `i` selects at random.
    pub fn is_random(&self, i: usize) -> bool {
        match self {
            SelectorPlan::Deterministic => false,
            SelectorPlan::Random => true,
            SelectorPlan::Mixed => i % 2 == 1,
            SelectorPlan::PerNode(v) => v[i % v.len()],
        }
    }
}

impl fmt::Display for SelectorPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectorPlan::Deterministic => f.write_str("deterministic"),
            SelectorPlan::Random => f.write_str("random"),
            SelectorPlan::Mixed => f.write_str("mixed"),
            SelectorPlan::PerNode(v) => {
                let parts: Vec<&str> = v.iter().map(|&r| if r { "random" } else { "deterministic" }).collect();
                f.write_str(&parts.join(","))
            }
        }
    }
}

impl FromStr for SelectorPlan {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "deterministic" => Ok(SelectorPlan::Deterministic),
            "random" => Ok(SelectorPlan::Random),
            "mixed" => Ok(SelectorPlan::Mixed),
            list if list.contains(',') => list
                .split(',')
                .map(|p| match p.trim() {
                    "deterministic" | "d" => Ok(false),
                    "random" | "r" => Ok(true),
                    other => Err(Error::Config(format!("unknown selector mode {other:?}"))),
                })
                .collect::<Result<Vec<_>>>()
                .map(SelectorPlan::PerNode),
            other => Err(Error::Config(format!("unknown selector mode {other:?}"))),
        }
    }
}

/// Message delay in steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DelayModel {
    Fixed(u64),
    Uniform { min: u64, max: u64 },
}

impl fmt::Display for DelayModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DelayModel::Fixed(d) => write!(f, "fixed:{d}"),
            DelayModel::Uniform { min, max } => write!(f, "uniform:{min}:{max}"),
        }
    }
}

impl FromStr for DelayModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |p: &str| {
            p.trim()
                .parse::<u64>()
                .map_err(|_| Error::Config(format!("bad delay bound {p:?}")))
        };
        match parts.as_slice() {
            ["fixed", d] => Ok(DelayModel::Fixed(num(d)?)),
            ["uniform", a, b] => {
                let (min, max) = (num(a)?, num(b)?);
                if min > max {
                    return Err(Error::Config(format!("uniform delay {min} > {max}")));
                }
                Ok(DelayModel::Uniform { min, max })
            }
            _ => Err(Error::Config(format!("delay model {s:?}; expected fixed:D or uniform:MIN:MAX"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub n_nodes: usize,
    pub rng_seed: u64,
    /// Hard bound on simulated steps.
    pub max_steps: u64,
    /// Stop once every node has finalised this many frames (and the other
    /// targets hold).
    pub max_finalised_frames: Option<u64>,
    /// Stop only after every node created at least this many events.
    pub min_events_per_node: u64,
    /// Steps between two sync attempts of one node.
    pub heartbeat: u64,
    pub selector_mode: SelectorPlan,
    pub delay_model: DelayModel,
    /// User transactions per step, network-wide.
    pub tx_injection_rate: f64,
    pub root_majority_override: Option<usize>,
    pub lamport_init_strategy: LamportInit,
    pub lamport_byte: usize,
    pub stripping_enabled: bool,
    /// After the targets are met, stop injecting and run until every node
    /// delivered every injected transaction.
    pub drain: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_nodes: 4,
            rng_seed: 1,
            max_steps: 10_000,
            max_finalised_frames: Some(5),
            min_events_per_node: 0,
            heartbeat: 10,
            selector_mode: SelectorPlan::Deterministic,
            delay_model: DelayModel::Fixed(1),
            tx_injection_rate: 0.5,
            root_majority_override: None,
            lamport_init_strategy: LamportInit::AllZero,
            lamport_byte: DEFAULT_LAMPORT_BYTE,
            stripping_enabled: true,
            drain: false,
        }
    }
}

fn parse_bool(v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("expected a boolean, got {v:?}"))),
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("bad value {v:?} for {key}")))
}

fn parse_optional<T: FromStr>(key: &str, v: &str) -> Result<Option<T>> {
    match v {
        "none" | "" => Ok(None),
        v => parse_num(key, v).map(Some),
    }
}

impl SimConfig {
    /// Parses flat `key = value` lines; `#` starts a comment. Keys not
    /// present keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = SimConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", lineno + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one override.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "n_nodes" => self.n_nodes = parse_num(key, v)?,
            "rng_seed" => self.rng_seed = parse_num(key, v)?,
            "max_steps" => self.max_steps = parse_num(key, v)?,
            "max_finalised_frames" => self.max_finalised_frames = parse_optional(key, v)?,
            "min_events_per_node" => self.min_events_per_node = parse_num(key, v)?,
            "heartbeat" => self.heartbeat = parse_num(key, v)?,
            "selector_mode" => self.selector_mode = v.parse()?,
            "delay_model" => self.delay_model = v.parse()?,
            "tx_injection_rate" => self.tx_injection_rate = parse_num(key, v)?,
            "root_majority_override" => self.root_majority_override = parse_optional(key, v)?,
            "lamport_init_strategy" => {
                self.lamport_init_strategy = match v {
                    "all_zero" => LamportInit::AllZero,
                    "id_byte" => LamportInit::IdByte,
                    _ => return Err(Error::Config(format!("unknown lamport_init_strategy {v:?}"))),
                }
            }
            "lamport_byte" => self.lamport_byte = parse_num(key, v)?,
            "stripping_enabled" => self.stripping_enabled = parse_bool(v)?,
            "drain" => self.drain = parse_bool(v)?,
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_nodes < 2 {
            return Err(Error::Config("n_nodes must be at least 2".into()));
        }
        if self.heartbeat == 0 {
            return Err(Error::Config("heartbeat must be at least 1 step".into()));
        }
        if !(self.tx_injection_rate.is_finite() && self.tx_injection_rate >= 0.0) {
            return Err(Error::Config("tx_injection_rate must be a non-negative number".into()));
        }
        Ok(())
    }

    /// Renders every key, in a form [`SimConfig::parse`] reads back.
    pub fn render(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
        let mut s = String::new();
        let _ = writeln!(s, "n_nodes={}", self.n_nodes);
        let _ = writeln!(s, "rng_seed={}", self.rng_seed);
        let _ = writeln!(s, "max_steps={}", self.max_steps);
        let _ = writeln!(s, "max_finalised_frames={}", opt(self.max_finalised_frames.map(|v| v.to_string())));
        let _ = writeln!(s, "min_events_per_node={}", self.min_events_per_node);
        let _ = writeln!(s, "heartbeat={}", self.heartbeat);
        let _ = writeln!(s, "selector_mode={}", self.selector_mode);
        let _ = writeln!(s, "delay_model={}", self.delay_model);
        let _ = writeln!(s, "tx_injection_rate={}", self.tx_injection_rate);
        let _ = writeln!(s, "root_majority_override={}", opt(self.root_majority_override.map(|v| v.to_string())));
        let strategy = match self.lamport_init_strategy {
            LamportInit::AllZero => "all_zero",
            LamportInit::IdByte => "id_byte",
        };
        let _ = writeln!(s, "lamport_init_strategy={strategy}");
        let _ = writeln!(s, "lamport_byte={}", self.lamport_byte);
        let _ = writeln!(s, "stripping_enabled={}", self.stripping_enabled);
        let _ = writeln!(s, "drain={}", self.drain);
        s
    }
}
