use std::fmt::Write as _;

use crate::store::EventStore;

fn node_name(id: &crate::model::EventId) -> String {
    format!("\"{}\"", id.to_hex())
}

/// Renders the event DAG in DOT syntax: one vertex per event annotated
/// with creator, height, frame, root flag and Lamport timestamp, and edges
/// from each event to its self-parent and other-parent.
pub fn export_dag(store: &EventStore) -> String {
    let mut events: Vec<_> = store.iter().collect();
    events.sort_by_key(|e| (e.lamport_timestamp, e.id()));
    let mut s = String::from("digraph aca {\n  rankdir=BT;\n");
    for e in &events {
        let creator = e.creator.to_hex();
        let _ = writeln!(
            s,
            "  {} [label=\"{}/{} f{}{}\", creator=\"{}\", height={}, frame={}, root={}, lamport={}];",
            node_name(&e.id()),
            &creator[..8],
            e.height,
            e.frame,
            if e.is_root { " R" } else { "" },
            creator,
            e.height,
            e.frame,
            e.is_root,
            e.lamport_timestamp
        );
    }
    for e in &events {
        if e.is_leaf() {
            continue;
        }
        let _ = writeln!(s, "  {} -> {} [kind=self];", node_name(&e.id()), node_name(&e.self_parent.id));
        let _ = writeln!(s, "  {} -> {} [kind=other, style=dashed];", node_name(&e.id()), node_name(&e.other_parent.id));
    }
    s.push_str("}\n");
    s
}
