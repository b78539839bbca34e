//! Frame assignment, root detection and finalisation.

mod engine;
pub mod flags;
pub mod order;

pub use engine::{
    Delivery, DeliverySink, Engine, EngineConfig, FinalOrder, Insertion, InsertionOutcome,
    InternalHandler, NodeState, NullSink,
};
pub use flags::{
    derive_creator_table, open_merge_flag_tables, root_majority, strict_merge_flag_tables,
    visibilis_bound, CreatorLookup, RootMajority, VisibilisBound,
};
pub use order::{finalisation_compare, sort_for_finalisation, CompareDepth};

use crate::store::EventStore;

/// Renders a finalised log one event per line:
/// `frame_number, position, event_id_hex, creator_id_hex, lamport_ts`.
pub fn export_finalised(log: &[FinalOrder], store: &EventStore) -> String {
    let mut out = String::new();
    for order in log {
        for (position, id) in order.ordered_events.iter().enumerate() {
            let (creator, ts) = match store.get_event(id) {
                Some(e) => (e.creator.to_hex(), e.lamport_timestamp.0),
                None => ("?".to_string(), 0),
            };
            out.push_str(&format!("{}, {}, {}, {}, {}\n", order.frame.0, position, id.to_hex(), creator, ts));
        }
    }
    out
}
