//! Deterministic discrete-event network simulator, agreement checking,
//! invariant audits and DAG export.

mod audit;
mod config;
mod dot;
mod run;
mod sweep;
pub mod threaded;

pub use audit::{audit_event, audit_invariants, check_agreement, Agreement, Violation};
pub use config::{DelayModel, SelectorPlan, SimConfig};
pub use dot::export_dag;
pub use run::{
    engine_config, log_digest, run_simulation, sim_key, sim_network, Delivered, NodeSummary, SimReport,
    Simulation, StopReason,
};
pub use sweep::{archive_counterexample, replay, sweep};
