use std::cmp::Ordering;

use crate::model::{Event, EventId};
use crate::store::EventStore;

/// How far the self-ancestor tie-break walks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CompareDepth {
    /// Up to the leaf events.
    #[default]
    Unlimited,
    /// Self-parent's timestamp only.
    SelfParentOnly,
}

/// Total order used to finalise the events of one frame:
/// 1. smaller Lamport timestamp;
/// 2. smaller self-ancestor timestamps, level by level; a chain that ends
///    first is smaller;
/// 3. smaller hash;
/// 4. smaller id.
pub fn finalisation_compare(a: &Event, b: &Event, store: &EventStore, depth: CompareDepth) -> Ordering {
    a.lamport_timestamp
        .cmp(&b.lamport_timestamp)
        .then_with(|| compare_self_ancestry(a, b, store, depth))
        .then_with(|| a.hash.cmp(&b.hash))
        .then_with(|| a.id().cmp(&b.id()))
}

fn compare_self_ancestry(a: &Event, b: &Event, store: &EventStore, depth: CompareDepth) -> Ordering {
    let limit = match depth {
        CompareDepth::Unlimited => usize::MAX,
        CompareDepth::SelfParentOnly => 1,
    };
    let (mut x, mut y) = (a, b);
    for _ in 0..limit {
        let px = store.get_event(&x.self_parent.id);
        let py = store.get_event(&y.self_parent.id);
        match (px, py) {
            (None, None) => return Ordering::Equal,
            (None, Some(_)) => return Ordering::Less,
            (Some(_), None) => return Ordering::Greater,
            (Some(px), Some(py)) => {
                if px.id() == py.id() {
                    return Ordering::Equal;
                }
                match px.lamport_timestamp.cmp(&py.lamport_timestamp) {
                    Ordering::Equal => {
                        x = px;
                        y = py;
                    }
                    other => return other,
                }
            }
        }
    }
    Ordering::Equal
}

/// Sorts `ids` (all stored) into finalisation order.
pub fn sort_for_finalisation(ids: &mut [EventId], store: &EventStore, depth: CompareDepth) {
    ids.sort_by(|a, b| {
        let ea = store.get_event(a).expect("sorted events are stored");
        let eb = store.get_event(b).expect("sorted events are stored");
        finalisation_compare(ea, eb, store, depth)
    });
}
