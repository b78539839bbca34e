use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use crate::consensus::{Engine, FinalOrder};
use crate::model::{Event, EventId, FrameNumber, PeerId};
use crate::store::EventStore;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Agreement {
    Pass,
    /// First divergence: lowest frame, then position within it.
    Fail {
        frame: FrameNumber,
        position: usize,
        nodes: (usize, usize),
    },
}

impl Agreement {
    pub fn is_pass(&self) -> bool {
        matches!(self, Agreement::Pass)
    }
}

impl fmt::Display for Agreement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Agreement::Pass => f.write_str("pass"),
            Agreement::Fail { frame, position, nodes } => write!(
                f,
                "fail frame={frame} position={position} nodes={},{}",
                nodes.0, nodes.1
            ),
        }
    }
}

/// Passes iff every frame finalised by two or more nodes has the same
/// order on all of them.
pub fn check_agreement(logs: &[Vec<FinalOrder>]) -> Agreement {
    let mut by_frame: BTreeMap<FrameNumber, Vec<(usize, &[EventId])>> = BTreeMap::new();
    for (node, log) in logs.iter().enumerate() {
        for order in log {
            by_frame
                .entry(order.frame)
                .or_default()
                .push((node, &order.ordered_events));
        }
    }
    for (frame, orders) in by_frame {
        let (first_node, first) = orders[0];
        let mut worst: Option<(usize, usize)> = None;
        for &(node, other) in &orders[1..] {
            if other == first {
                continue;
            }
            let position = first
                .iter()
                .zip(other)
                .position(|(a, b)| a != b)
                .unwrap_or_else(|| first.len().min(other.len()));
            if worst.is_none_or(|(p, _)| position < p) {
                worst = Some((position, node));
            }
        }
        if let Some((position, node)) = worst {
            return Agreement::Fail {
                frame,
                position,
                nodes: (first_node, node),
            };
        }
    }
    Agreement::Pass
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub node: usize,
    pub event: Option<EventId>,
    pub frame: Option<FrameNumber>,
    pub what: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node {}", self.node)?;
        if let Some(e) = &self.event {
            write!(f, " event {}", e.to_hex())?;
        }
        if let Some(fr) = self.frame {
            write!(f, " frame {fr}")?;
        }
        write!(f, ": {}", self.what)
    }
}

/// Creators of frame-`f` roots among the ancestors of `starts`
/// (inclusive), found by walking parent links. Events below frame `f`
/// are not entered: frames never decrease along parent links.
fn visible_root_creators(store: &EventStore, starts: [&EventId; 2], f: FrameNumber) -> BTreeSet<PeerId> {
    let mut creators = BTreeSet::new();
    let mut seen: HashSet<EventId> = HashSet::new();
    let mut stack: Vec<EventId> = starts.into_iter().copied().collect();
    while let Some(id) = stack.pop() {
        if !seen.insert(id) {
            continue;
        }
        let Some(e) = store.get_event(&id) else { continue };
        if e.frame < f {
            continue;
        }
        if e.is_root && e.frame == f {
            creators.insert(e.creator);
        }
        if !e.is_leaf() {
            stack.push(e.self_parent.id);
            stack.push(e.other_parent.id);
        }
    }
    creators
}

/// Checks one stored non-leaf event against its parents.
pub fn audit_event(store: &EventStore, e: &Event, majority: usize) -> Vec<String> {
    let mut problems = Vec::new();
    let (Some(sp), Some(op)) = (store.get_event(&e.self_parent.id), store.get_event(&e.other_parent.id)) else {
        problems.push("parent missing from store".to_string());
        return problems;
    };
    if e.lamport_timestamp <= sp.lamport_timestamp || e.lamport_timestamp <= op.lamport_timestamp {
        problems.push("lamport timestamp not above both parents".into());
    }
    if e.height != sp.height + 1 {
        problems.push(format!("height {} after self-parent height {}", e.height, sp.height));
    }
    if e.frame < sp.frame.max(op.frame) {
        problems.push(format!("frame {} below a parent frame", e.frame));
    }
    let (root, frame) = if sp.frame == op.frame {
        let seen = visible_root_creators(store, [&sp.id(), &op.id()], sp.frame);
        if seen.len() >= majority {
            (true, sp.frame.next())
        } else {
            (false, sp.frame)
        }
    } else if sp.frame > op.frame {
        (false, sp.frame)
    } else {
        (true, op.frame)
    };
    if (root, frame) != (e.is_root, e.frame) {
        problems.push(format!(
            "root condition: stored (root={}, frame={}) expected (root={root}, frame={frame})",
            e.is_root, e.frame
        ));
    }
    problems
}

/// Structural audit of every node's store, plus cross-node consistency of
/// the local annotations of shared events.
pub fn audit_invariants(engines: &[&Engine]) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut annotations: BTreeMap<EventId, (usize, FrameNumber, bool)> = BTreeMap::new();
    for (node, engine) in engines.iter().enumerate() {
        let store = engine.store();
        let majority = engine.root_majority().0;
        let mut ids: Vec<EventId> = store.iter().map(|e| e.id()).collect();
        ids.sort();
        for id in ids {
            let e = store.get_event(&id).expect("listed");
            let problems = if e.is_leaf() {
                if e.is_root && e.frame == FrameNumber(0) {
                    vec![]
                } else {
                    vec!["leaf is not a frame-0 root".to_string()]
                }
            } else {
                audit_event(store, e, majority)
            };
            for what in problems {
                out.push(Violation {
                    node,
                    event: Some(id),
                    frame: Some(e.frame),
                    what,
                });
            }
            match annotations.get(&id) {
                None => {
                    annotations.insert(id, (node, e.frame, e.is_root));
                }
                Some(&(other, frame, root)) if (frame, root) != (e.frame, e.is_root) => out.push(Violation {
                    node,
                    event: Some(id),
                    frame: Some(e.frame),
                    what: format!("annotation differs from node {other} (frame {frame}, root {root})"),
                }),
                Some(_) => {}
            }
        }
    }
    out
}
