//! Per-node consensus state machine: event insertion, event creation and
//! frame finalisation.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use crate::consensus::flags::{
    derive_creator_table, open_merge_flag_tables, root_majority, strict_merge_flag_tables,
    visibilis_bound, RootMajority,
};
use crate::consensus::order::{sort_for_finalisation, CompareDepth};
use crate::crypto::{hash_event, sign_event, CryptoSuite, KeyHandle};
use crate::error::{Error, Result};
use crate::gossip::{PeerSelector, SelectorMode};
use crate::model::{
    first_unfinalised, lamport_init, make_leaf_event, Event, EventId, EventSignature, FrameNumber,
    GossipEntry, GossipList, InternalTag, InternalTx, LamportInit, LamportTime, ParentLink,
    PeerId, PeerInfo, PeerList, TransactionPayload, DEFAULT_LAMPORT_BYTE,
};
use crate::store::{EventStore, PutOutcome, DEFAULT_ORPHAN_CAPACITY};

/// The finalised order of one frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FinalOrder {
    pub frame: FrameNumber,
    pub ordered_events: Vec<EventId>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InsertionOutcome {
    pub event_frame: FrameNumber,
    pub became_root: bool,
    /// Contiguous, ascending; includes frames finalised while inserting
    /// orphans released by this event.
    pub frames_finalised: Vec<FrameNumber>,
    pub released_orphans: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Insertion {
    Inserted(InsertionOutcome),
    AlreadyKnown,
    /// Waiting for these parents.
    Buffered(BTreeSet<EventId>),
}

impl Insertion {
    pub fn frames_finalised(&self) -> &[FrameNumber] {
        match self {
            Insertion::Inserted(o) => &o.frames_finalised,
            _ => &[],
        }
    }
}

/// A user transaction handed out in finalised order.
#[derive(Clone, Copy, Debug)]
pub struct Delivery<'a> {
    pub frame: FrameNumber,
    pub event: EventId,
    pub creator: PeerId,
    pub position: usize,
    pub transaction: &'a [u8],
}

/// Receives user transactions in finalised order. Retrying failed
/// downstream work is the sink's business; finalisation never rolls back.
pub trait DeliverySink: Send {
    fn deliver(&mut self, delivery: Delivery<'_>);
}

/// Discards everything.
pub struct NullSink;

impl DeliverySink for NullSink {
    fn deliver(&mut self, _delivery: Delivery<'_>) {}
}

impl DeliverySink for Vec<Vec<u8>> {
    fn deliver(&mut self, delivery: Delivery<'_>) {
        self.push(delivery.transaction.to_vec());
    }
}

pub type InternalHandler = Box<dyn FnMut(&InternalTx, &Event) + Send>;

#[derive(Clone, Debug)]
pub struct EngineConfig {
    pub root_majority: Option<usize>,
    pub lamport_init: LamportInit,
    pub lamport_byte: usize,
    pub strip_flag_tables: bool,
    pub compare_depth: CompareDepth,
    pub orphan_capacity: usize,
    pub selector: SelectorMode,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            root_majority: None,
            lamport_init: LamportInit::AllZero,
            lamport_byte: DEFAULT_LAMPORT_BYTE,
            strip_flag_tables: true,
            compare_depth: CompareDepth::Unlimited,
            orphan_capacity: DEFAULT_ORPHAN_CAPACITY,
            selector: SelectorMode::Deterministic,
        }
    }
}

/// Mutable per-node protocol state.
#[derive(Debug)]
pub struct NodeState {
    pub me: PeerInfo,
    pub peer_list: Arc<PeerList>,
    pub lamport: LamportTime,
    pub height: u64,
    pub current_frame: FrameNumber,
    pub last_finalised_frame: Option<FrameNumber>,
    pub gossip_list: GossipList,
    pub pending_user_tx: VecDeque<Vec<u8>>,
    pub pending_internal_tx: VecDeque<InternalTx>,
    pub selector: PeerSelector,
}

pub struct Engine {
    pub(crate) state: NodeState,
    pub(crate) store: EventStore,
    pub(crate) suite: Arc<dyn CryptoSuite>,
    pub(crate) key: KeyHandle,
    config: EngineConfig,
    majority: RootMajority,
    sink: Box<dyn DeliverySink>,
    handlers: BTreeMap<InternalTag, InternalHandler>,
    skipped_internal: u64,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("me", &self.state.me.id)
            .field("lamport", &self.state.lamport)
            .field("height", &self.state.height)
            .field("last_finalised", &self.state.last_finalised_frame)
            .field("events", &self.store.len())
            .finish()
    }
}

impl Engine {
    /// Builds a node and devises the leaf events of every peer.
    pub fn new(
        key: KeyHandle,
        peer_list: Arc<PeerList>,
        suite: Arc<dyn CryptoSuite>,
        config: EngineConfig,
    ) -> Result<Self> {
        let me_id = key.peer_id();
        let me = peer_list.get(&me_id).cloned().ok_or(Error::UnknownPeer(me_id))?;
        let majority = root_majority(peer_list.len(), config.root_majority)?;
        let index = peer_list.index_of(&me_id).expect("checked above");
        let selector = PeerSelector::new(index, peer_list.len(), config.selector)?;
        let own_lamport = lamport_init(config.lamport_init, &me_id, config.lamport_byte)?;

        let mut store = EventStore::new(config.orphan_capacity);
        let mut gossip_list = GossipList::new();
        for peer in peer_list.iter() {
            let initial = lamport_init(config.lamport_init, &peer.id, config.lamport_byte)?;
            let leaf = make_leaf_event(
                peer.id,
                &peer_list,
                FrameNumber(0),
                initial,
                suite.as_ref(),
                Some((&me_id, &key)),
            )?;
            gossip_list.observe(
                peer.id,
                GossipEntry {
                    lamport_timestamp: leaf.lamport_timestamp,
                    last_event_id: leaf.id(),
                },
            );
            store.put_event(leaf)?;
        }

        Ok(Engine {
            state: NodeState {
                me,
                peer_list,
                lamport: own_lamport,
                height: 0,
                current_frame: FrameNumber(0),
                last_finalised_frame: None,
                gossip_list,
                pending_user_tx: VecDeque::new(),
                pending_internal_tx: VecDeque::new(),
                selector,
            },
            store,
            suite,
            key,
            config,
            majority,
            sink: Box::new(NullSink),
            handlers: BTreeMap::new(),
            skipped_internal: 0,
        })
    }

    pub fn id(&self) -> PeerId {
        self.state.me.id
    }

    pub fn state(&self) -> &NodeState {
        &self.state
    }

    pub fn store(&self) -> &EventStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut EventStore {
        &mut self.store
    }

    pub fn suite(&self) -> &dyn CryptoSuite {
        self.suite.as_ref()
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn root_majority(&self) -> RootMajority {
        self.majority
    }

    pub fn peer_count(&self) -> usize {
        self.state.peer_list.len()
    }

    pub fn set_sink(&mut self, sink: Box<dyn DeliverySink>) {
        self.sink = sink;
    }

    pub fn register_internal_handler(&mut self, tag: InternalTag, handler: InternalHandler) {
        self.handlers.insert(tag, handler);
    }

    /// Internal transactions skipped because no handler knew their tag.
    pub fn skipped_internal_transactions(&self) -> u64 {
        self.skipped_internal
    }

    pub fn submit_transaction(&mut self, tx: Vec<u8>) {
        self.state.pending_user_tx.push_back(tx);
    }

    pub fn submit_internal(&mut self, tx: InternalTx) {
        self.state.pending_internal_tx.push_back(tx);
    }

    pub fn has_pending_transactions(&self) -> bool {
        !self.state.pending_user_tx.is_empty() || !self.state.pending_internal_tx.is_empty()
    }

    /// The creation guard after a sync: pending transactions, or some
    /// non-leaf event still awaiting finalisation.
    pub fn has_pending_work(&self) -> bool {
        self.has_pending_transactions()
            || self
                .store
                .has_unfinalised_non_leaf(self.state.last_finalised_frame)
    }

    pub fn finalised_log(&self) -> &[FinalOrder] {
        self.store.finalised_log()
    }

    /// Inserts a received or locally created event, computing its frame and
    /// flag table, and finalises every frame the insertion unlocks.
    pub fn insert_event(&mut self, e: Event) -> Result<Insertion> {
        let mut outcome = match self.insert_one(e)? {
            Step::Done(insertion) => return Ok(insertion),
            Step::Stored(outcome, released) => {
                let mut queue: VecDeque<Event> = released.into();
                let mut outcome = outcome;
                while let Some(next) = queue.pop_front() {
                    outcome.released_orphans += 1;
                    match self.insert_one(next) {
                        Ok(Step::Stored(o, more)) => {
                            outcome.frames_finalised.extend(o.frames_finalised);
                            queue.extend(more);
                        }
                        Ok(Step::Done(_)) => {}
                        Err(err) => tracing::warn!(%err, "released orphan rejected"),
                    }
                }
                outcome
            }
        };
        outcome.frames_finalised.dedup();
        Ok(Insertion::Inserted(outcome))
    }

    fn insert_one(&mut self, mut e: Event) -> Result<Step> {
        let id = e.id();
        if self.store.contains(&id) {
            return Ok(Step::Done(Insertion::AlreadyKnown));
        }
        if e.is_leaf() {
            // Leaves are devised locally; an unknown one is not ours to add.
            return Err(Error::Rejected(id, "unknown leaf event".into()));
        }
        if !self.state.peer_list.contains(&e.creator) {
            return Err(Error::UnknownPeer(e.creator));
        }
        for link in [&e.self_parent, &e.other_parent] {
            if link.id != link.hash || link.is_none() {
                return Err(Error::Rejected(id, "malformed parent link".into()));
            }
        }
        let missing: BTreeSet<EventId> = [e.self_parent.id, e.other_parent.id]
            .into_iter()
            .filter(|p| !self.store.contains(p))
            .collect();
        if !missing.is_empty() {
            self.store.buffer_orphan(e, missing.clone())?;
            return Ok(Step::Done(Insertion::Buffered(missing)));
        }

        let sp = self.store.get_event(&e.self_parent.id).expect("present");
        let op = self.store.get_event(&e.other_parent.id).expect("present");
        if sp.creator != e.creator {
            return Err(Error::Rejected(id, "self-parent created by another peer".into()));
        }
        if e.height != sp.height + 1 {
            return Err(Error::Rejected(
                id,
                format!("height {} does not follow self-parent height {}", e.height, sp.height),
            ));
        }
        if e.lamport_timestamp <= sp.lamport_timestamp || e.lamport_timestamp <= op.lamport_timestamp {
            return Err(Error::Rejected(id, "Lamport timestamp not above both parents".into()));
        }

        let (is_root, frame) = if sp.frame == op.frame {
            let root_table = strict_merge_flag_tables(sp.frame, &sp.flag_table, &op.flag_table)?;
            let creators = derive_creator_table(&root_table, sp.frame, &self.store)?;
            if creators.len() >= self.majority.0 {
                (true, sp.frame.next())
            } else {
                (false, sp.frame)
            }
        } else if sp.frame > op.frame {
            (false, sp.frame)
        } else {
            (true, op.frame)
        };

        let floor = first_unfinalised(self.state.last_finalised_frame);
        if frame < floor {
            return Err(Error::ProtocolViolation(format!(
                "event {id} computes frame {frame} but frames up to {} are finalised",
                floor.0.saturating_sub(1)
            )));
        }
        let mut visibilis = open_merge_flag_tables(floor, &sp.flag_table, &op.flag_table)?;
        if is_root {
            visibilis.insert(id, frame);
        }
        e.frame = frame;
        e.is_root = is_root;
        e.flag_table = visibilis;

        let creator = e.creator;
        let ts = e.lamport_timestamp;
        let bound = visibilis_bound(&e.flag_table, self.peer_count(), &RootsPlus(&self.store, &e))?;

        let released = match self.store.put_event(e)? {
            PutOutcome::Stored { released } => released,
            PutOutcome::AlreadyKnown => return Ok(Step::Done(Insertion::AlreadyKnown)),
        };
        if let Some(conflict) = self.state.gossip_list.observe(
            creator,
            GossipEntry {
                lamport_timestamp: ts,
                last_event_id: id,
            },
        ) {
            tracing::warn!(?conflict, "equal Lamport timestamps from one creator");
        }
        if frame > self.state.current_frame {
            self.state.current_frame = frame;
        }

        let mut frames_finalised = Vec::new();
        if let Some(bound) = bound {
            let mut next = first_unfinalised(self.state.last_finalised_frame);
            while next < bound.upto {
                self.finalise_frame(next)?;
                frames_finalised.push(next);
                next = next.next();
            }
        }
        Ok(Step::Stored(
            InsertionOutcome {
                event_frame: frame,
                became_root: is_root,
                frames_finalised,
                released_orphans: 0,
            },
            released,
        ))
    }

    /// Creates, signs and inserts a new event whose other-parent is the last
    /// known event of `other`.
    pub fn create_event(&mut self, other: &PeerId) -> Result<(EventId, InsertionOutcome)> {
        let me = self.id();
        if other == &me {
            return Err(Error::ProtocolViolation("other-parent must be another peer".into()));
        }
        if !self.state.peer_list.contains(other) {
            return Err(Error::UnknownPeer(*other));
        }
        let last_self = self.store.last_event_of(&me)?;
        let last_other = self.store.last_event_of(other)?;
        let height = self.state.height + 1;
        let lamport = self
            .state
            .lamport
            .max(last_self.lamport_timestamp)
            .max(last_other.lamport_timestamp)
            .next();
        let mut event = Event::unsigned(
            me,
            height,
            ParentLink {
                id: last_self.id(),
                hash: last_self.hash,
            },
            ParentLink {
                id: last_other.id(),
                hash: last_other.hash,
            },
            lamport,
            TransactionPayload {
                user_transactions: self.state.pending_user_tx.iter().cloned().collect(),
                internal_transactions: self.state.pending_internal_tx.iter().cloned().collect(),
            },
        );
        event.hash = hash_event(&event, self.suite.as_ref());
        let signature = sign_event(&event, &self.key, self.suite.as_ref())?;
        event.signatures.push(EventSignature {
            signer: me,
            signature,
        });

        self.state.height = height;
        self.state.lamport = lamport;
        self.state.pending_user_tx.clear();
        self.state.pending_internal_tx.clear();
        let id = event.id();
        match self.insert_event(event)? {
            Insertion::Inserted(outcome) => Ok((id, outcome)),
            other => Err(Error::Integrity(format!("own event {id} not inserted: {other:?}"))),
        }
    }

    /// Sorts frame `f` and finalises its events in order. Frames finalise
    /// consecutively.
    pub fn finalise_frame(&mut self, f: FrameNumber) -> Result<FinalOrder> {
        let expected = first_unfinalised(self.state.last_finalised_frame);
        if f != expected {
            return Err(Error::Ordering {
                requested: f,
                expected,
            });
        }
        let mut ids: Vec<EventId> = self.store.events_in_frame(f).iter().map(|e| e.id()).collect();
        sort_for_finalisation(&mut ids, &self.store, self.config.compare_depth);
        let order = FinalOrder {
            frame: f,
            ordered_events: ids,
        };
        self.store.record_finalised(order.clone())?;
        self.state.last_finalised_frame = Some(f);
        for id in &order.ordered_events {
            self.finalise_event(id)?;
        }
        tracing::debug!(node = %self.id(), frame = f.0, events = order.ordered_events.len(), "frame finalised");
        Ok(order)
    }

    /// User transactions first, then internal ones, then the flag table is
    /// dropped. User transactions cannot depend on internal effects of the
    /// same event.
    fn finalise_event(&mut self, id: &EventId) -> Result<()> {
        let event = self
            .store
            .get_event(id)
            .cloned()
            .ok_or_else(|| Error::Integrity(format!("finalising unknown event {id}")))?;
        for (position, tx) in event.payload.user_transactions.iter().enumerate() {
            self.sink.deliver(Delivery {
                frame: event.frame,
                event: *id,
                creator: event.creator,
                position,
                transaction: tx,
            });
        }
        for tx in &event.payload.internal_transactions {
            match self.handlers.get_mut(&tx.tag) {
                Some(handler) => handler(tx, &event),
                None if tx.tag.is_reserved() => {}
                None => {
                    self.skipped_internal += 1;
                    tracing::warn!(tag = tx.tag.0, event = %id, "unknown internal transaction tag skipped");
                }
            }
        }
        if self.config.strip_flag_tables {
            self.store.strip_flag_table(id)?;
        }
        Ok(())
    }
}

enum Step {
    Done(Insertion),
    Stored(InsertionOutcome, Vec<Event>),
}

/// Creator lookup over the store plus the event being inserted, which may
/// reference itself in its own flag table.
struct RootsPlus<'a>(&'a EventStore, &'a Event);

impl crate::consensus::flags::CreatorLookup for RootsPlus<'_> {
    fn creator_of(&self, id: &EventId) -> Option<PeerId> {
        if id == &self.1.id() {
            Some(self.1.creator)
        } else {
            self.0.get_event(id).map(|e| e.creator)
        }
    }
}
