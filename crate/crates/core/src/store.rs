//! Per-node event storage.
//!
//! Lookups by id, per-creator chains (indexed by height), per-frame buckets,
//! an orphan buffer for events whose parents have not arrived yet, and the
//! finalised log.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};

use crate::codec::{self, Decoder, Encoder};
use crate::consensus::FinalOrder;
use crate::error::{DecodeError, Error, Result};
use crate::model::{Digest, Event, EventId, FlagTable, FrameNumber, PeerId};

pub const DEFAULT_ORPHAN_CAPACITY: usize = 10_000;

#[derive(Debug, PartialEq, Eq)]
pub enum PutOutcome {
    /// Stored; `released` are orphans whose parents are now all present,
    /// ordered parents-first.
    Stored { released: Vec<Event> },
    AlreadyKnown,
}

#[derive(Debug)]
struct Orphan {
    event: Event,
    missing: BTreeSet<EventId>,
    since: u64,
}

pub struct EventStore {
    events: HashMap<EventId, Event>,
    chains: BTreeMap<PeerId, Vec<EventId>>,
    by_frame: BTreeMap<FrameNumber, BTreeSet<EventId>>,
    non_leaf_by_frame: BTreeMap<FrameNumber, usize>,
    orphans: BTreeMap<EventId, Orphan>,
    waiting_on: BTreeMap<EventId, BTreeSet<EventId>>,
    finalised: Vec<FinalOrder>,
    orphan_capacity: usize,
    tick: u64,
    journal: Option<JournalWriter>,
}

impl Default for EventStore {
    fn default() -> Self {
        Self::new(DEFAULT_ORPHAN_CAPACITY)
    }
}

impl EventStore {
    pub fn new(orphan_capacity: usize) -> Self {
        EventStore {
            events: HashMap::new(),
            chains: BTreeMap::new(),
            by_frame: BTreeMap::new(),
            non_leaf_by_frame: BTreeMap::new(),
            orphans: BTreeMap::new(),
            waiting_on: BTreeMap::new(),
            finalised: Vec::new(),
            orphan_capacity,
            tick: 0,
            journal: None,
        }
    }

    /// Appends every subsequently stored event to `journal`.
    pub fn attach_journal(&mut self, journal: JournalWriter) {
        self.journal = Some(journal);
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn contains(&self, id: &EventId) -> bool {
        self.events.contains_key(id)
    }

    pub fn is_orphaned(&self, id: &EventId) -> bool {
        self.orphans.contains_key(id)
    }

    pub fn orphan_count(&self) -> usize {
        self.orphans.len()
    }

    pub fn put_event(&mut self, e: Event) -> Result<PutOutcome> {
        let id = e.id();
        if let Some(existing) = self.events.get(&id) {
            if codec::canonical_encode(existing) != codec::canonical_encode(&e) {
                return Err(Error::Integrity(format!(
                    "event id {id} already stored with different content"
                )));
            }
            return Ok(PutOutcome::AlreadyKnown);
        }
        if !e.is_leaf() {
            for parent in [e.self_parent.id, e.other_parent.id] {
                if !self.events.contains_key(&parent) {
                    return Err(Error::Integrity(format!(
                        "parent {parent} of {id} not stored; buffer the event instead"
                    )));
                }
            }
        }
        let chain = self.chains.entry(e.creator).or_default();
        let height = e.height as usize;
        if height < chain.len() {
            return Err(Error::Integrity(format!(
                "creator {} already has event {} at height {}",
                e.creator, chain[height], e.height
            )));
        }
        if height > chain.len() {
            return Err(Error::Integrity(format!(
                "height gap for creator {}: have {}, got {}",
                e.creator,
                chain.len(),
                e.height
            )));
        }
        chain.push(id);
        self.by_frame.entry(e.frame).or_default().insert(id);
        if !e.is_leaf() {
            *self.non_leaf_by_frame.entry(e.frame).or_default() += 1;
        }
        if let Some(journal) = self.journal.as_mut() {
            journal.append(&e)?;
        }
        self.events.insert(id, e);
        self.tick += 1;
        Ok(PutOutcome::Stored {
            released: self.release_waiting_on(&id),
        })
    }

    fn release_waiting_on(&mut self, id: &EventId) -> Vec<Event> {
        let Some(waiters) = self.waiting_on.remove(id) else {
            return Vec::new();
        };
        let mut released = Vec::new();
        for w in waiters {
            let ready = match self.orphans.get_mut(&w) {
                Some(o) => {
                    o.missing.remove(id);
                    o.missing.is_empty()
                }
                None => false,
            };
            if ready {
                released.push(self.orphans.remove(&w).unwrap().event);
            }
        }
        released.sort_by(|a, b| {
            a.lamport_timestamp
                .cmp(&b.lamport_timestamp)
                .then(a.height.cmp(&b.height))
                .then(a.id().cmp(&b.id()))
        });
        released
    }

    /// Holds `e` until every id in `missing` is stored.
    pub fn buffer_orphan(&mut self, e: Event, missing: BTreeSet<EventId>) -> Result<()> {
        let id = e.id();
        if missing.is_empty() || missing.iter().all(|m| self.events.contains_key(m)) {
            return Err(Error::ProtocolViolation(format!(
                "event {id} has all parents stored; insert it directly"
            )));
        }
        if self.events.contains_key(&id) || self.orphans.contains_key(&id) {
            return Ok(());
        }
        if self.orphans.len() >= self.orphan_capacity {
            return Err(Error::Backpressure(self.orphan_capacity));
        }
        let missing: BTreeSet<_> = missing
            .into_iter()
            .filter(|m| !self.events.contains_key(m))
            .collect();
        for m in &missing {
            self.waiting_on.entry(*m).or_default().insert(id);
        }
        self.orphans.insert(
            id,
            Orphan {
                event: e,
                missing,
                since: self.tick,
            },
        );
        Ok(())
    }

    /// Orphans that have waited more than `timeout` insertions.
    pub fn stale_orphans(&self, timeout: u64) -> Vec<EventId> {
        self.orphans
            .iter()
            .filter(|(_, o)| self.tick.saturating_sub(o.since) > timeout)
            .map(|(id, _)| *id)
            .collect()
    }

    pub fn get_event(&self, id: &EventId) -> Option<&Event> {
        if id.is_zero() {
            return None;
        }
        self.events.get(id)
    }

    pub fn last_event_of(&self, creator: &PeerId) -> Result<&Event> {
        self.chains
            .get(creator)
            .and_then(|c| c.last())
            .and_then(|id| self.events.get(id))
            .ok_or(Error::UnknownPeer(*creator))
    }

    /// Event of `creator` at `height`, if stored.
    pub fn event_at(&self, creator: &PeerId, height: u64) -> Option<&Event> {
        let id = self.chains.get(creator)?.get(height as usize)?;
        self.events.get(id)
    }

    /// Ids of `creator`'s events, ordered by height.
    pub fn chain(&self, creator: &PeerId) -> &[EventId] {
        self.chains.get(creator).map_or(&[], Vec::as_slice)
    }

    pub fn creators(&self) -> impl Iterator<Item = &PeerId> {
        self.chains.keys()
    }

    pub fn events_in_frame(&self, f: FrameNumber) -> Vec<&Event> {
        self.by_frame
            .get(&f)
            .into_iter()
            .flatten()
            .map(|id| &self.events[id])
            .collect()
    }

    pub fn frames(&self) -> impl Iterator<Item = FrameNumber> + '_ {
        self.by_frame.keys().copied()
    }

    /// All stored events in an unspecified but deterministic order.
    pub fn iter(&self) -> impl Iterator<Item = &Event> {
        self.by_frame.values().flatten().map(|id| &self.events[id])
    }

    /// True when some non-leaf event lies in a frame after `last_finalised`.
    pub fn has_unfinalised_non_leaf(&self, last_finalised: Option<FrameNumber>) -> bool {
        let from = crate::model::first_unfinalised(last_finalised);
        self.non_leaf_by_frame.range(from..).any(|(_, &n)| n > 0)
    }

    pub fn last_finalised(&self) -> Option<FrameNumber> {
        self.finalised.last().map(|o| o.frame)
    }

    pub fn finalised_log(&self) -> &[FinalOrder] {
        &self.finalised
    }

    pub fn record_finalised(&mut self, order: FinalOrder) -> Result<()> {
        let expected = crate::model::first_unfinalised(self.last_finalised());
        if order.frame != expected {
            return Err(Error::Ordering {
                requested: order.frame,
                expected,
            });
        }
        self.finalised.push(order);
        Ok(())
    }

    /// Drops the flag table of an event in a finalised frame. Hash-domain
    /// data is untouched.
    pub fn strip_flag_table(&mut self, id: &EventId) -> Result<()> {
        let last = self.last_finalised();
        let e = self
            .events
            .get_mut(id)
            .ok_or_else(|| Error::Integrity(format!("strip: event {id} not stored")))?;
        if last.is_none_or(|l| e.frame > l) {
            return Err(Error::ProtocolViolation(format!(
                "event {id} in frame {} is not finalised",
                e.frame
            )));
        }
        e.flag_table = FlagTable::new();
        Ok(())
    }
}

const JOURNAL_MAGIC: &[u8; 4] = b"ACAJ";
const JOURNAL_VERSION: u8 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JournalHeader {
    pub suite: String,
    pub peer_list_digest: Digest,
}

/// Append-only journal: a header, then length-prefixed event records.
pub struct JournalWriter {
    out: Box<dyn Write + Send>,
}

impl JournalWriter {
    pub fn new(mut out: Box<dyn Write + Send>, header: &JournalHeader) -> Result<Self> {
        let mut enc = Encoder::new();
        enc.put_raw(JOURNAL_MAGIC);
        enc.put_u8(JOURNAL_VERSION);
        enc.put_bytes(header.suite.as_bytes());
        enc.put_bytes(header.peer_list_digest.as_bytes());
        out.write_all(&enc.finish())?;
        Ok(JournalWriter { out })
    }

    pub fn append(&mut self, e: &Event) -> Result<()> {
        let record = codec::encode_event_record(e);
        self.out.write_all(&(record.len() as u32).to_be_bytes())?;
        self.out.write_all(&record)?;
        self.out.flush()?;
        Ok(())
    }
}

pub fn read_journal(mut input: impl Read) -> Result<(JournalHeader, Vec<Event>)> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf)?;
    let mut dec = Decoder::new(&buf);
    let magic = [dec.u8()?, dec.u8()?, dec.u8()?, dec.u8()?];
    if &magic != JOURNAL_MAGIC || dec.u8()? != JOURNAL_VERSION {
        return Err(DecodeError::BadJournalHeader.into());
    }
    let suite = dec.string("suite")?;
    let peer_list_digest = Digest(dec.fixed("peer_list_digest")?);
    let mut events = Vec::new();
    while dec.remaining() > 0 {
        let record = dec.bytes()?;
        events.push(codec::decode_event_record(record)?);
    }
    Ok((
        JournalHeader {
            suite,
            peer_list_digest,
        },
        events,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LamportTime, ParentLink, TransactionPayload};

    fn leaf(creator: u8) -> Event {
        let mut e = Event::unsigned(
            PeerId([creator; 32]),
            0,
            ParentLink::NONE,
            ParentLink::NONE,
            LamportTime(0),
            TransactionPayload::default(),
        );
        e.hash = Digest([creator; 32]);
        e.is_root = true;
        e.flag_table = FlagTable::single(e.hash, FrameNumber(0));
        e
    }

    fn child(sp: &Event, op: &Event, tag: u8, frame: u64) -> Event {
        let mut e = Event::unsigned(
            sp.creator,
            sp.height + 1,
            ParentLink { id: sp.id(), hash: sp.hash },
            ParentLink { id: op.id(), hash: op.hash },
            LamportTime(sp.lamport_timestamp.0.max(op.lamport_timestamp.0) + 1),
            TransactionPayload::default(),
        );
        e.hash = Digest([tag; 32]);
        e.frame = FrameNumber(frame);
        e
    }

    #[test]
    fn put_get_and_indexes() {
        let mut s = EventStore::default();
        let a = leaf(1);
        let b = leaf(2);
        assert!(matches!(s.put_event(a.clone()).unwrap(), PutOutcome::Stored { .. }));
        s.put_event(b.clone()).unwrap();
        assert_eq!(s.get_event(&a.id()), Some(&a));
        assert_eq!(s.get_event(&Digest([9; 32])), None);
        assert_eq!(s.get_event(&Digest::ZERO), None);
        assert_eq!(s.last_event_of(&a.creator).unwrap().height, 0);
        assert_eq!(s.events_in_frame(FrameNumber(0)).len(), 2);
        assert!(s.events_in_frame(FrameNumber(1)).is_empty());

        let mut prev = a.clone();
        for h in 1..=5u8 {
            let c = child(&prev, &b, 100 + h, 0);
            s.put_event(c.clone()).unwrap();
            prev = c;
        }
        assert_eq!(s.last_event_of(&a.creator).unwrap().height, 5);
        assert!(matches!(s.last_event_of(&PeerId([7; 32])), Err(Error::UnknownPeer(_))));
    }

    #[test]
    fn duplicate_put_is_idempotent_and_conflict_is_fatal() {
        let mut s = EventStore::default();
        let a = leaf(1);
        s.put_event(a.clone()).unwrap();
        assert_eq!(s.put_event(a.clone()).unwrap(), PutOutcome::AlreadyKnown);
        assert_eq!(s.len(), 1);
        let mut forged = a.clone();
        forged.lamport_timestamp = LamportTime(99);
        assert!(matches!(s.put_event(forged), Err(Error::Integrity(_))));
    }

    #[test]
    fn missing_parent_must_be_buffered() {
        let mut s = EventStore::default();
        let a = leaf(1);
        let b = leaf(2);
        s.put_event(a.clone()).unwrap();
        let c = child(&a, &b, 50, 0);
        assert!(matches!(s.put_event(c), Err(Error::Integrity(_))));
    }

    #[test]
    fn orphans_released_parent_first() {
        let mut s = EventStore::default();
        let a = leaf(1);
        let b = leaf(2);
        s.put_event(a.clone()).unwrap();
        let p = child(&b, &a, 60, 0);
        let c = child(&a, &p, 61, 0);
        s.buffer_orphan(c.clone(), [p.id()].into()).unwrap();
        assert!(s.is_orphaned(&c.id()));
        // Parent of the parent is still missing.
        s.buffer_orphan(p.clone(), [b.id()].into()).unwrap();

        let PutOutcome::Stored { released } = s.put_event(b.clone()).unwrap() else {
            panic!()
        };
        assert_eq!(released, vec![p.clone()]);
        let PutOutcome::Stored { released } = s.put_event(p.clone()).unwrap() else {
            panic!()
        };
        assert_eq!(released, vec![c.clone()]);
        s.put_event(c.clone()).unwrap();
        assert_eq!(s.orphan_count(), 0);
    }

    #[test]
    fn orphan_without_missing_parent_rejected() {
        let mut s = EventStore::default();
        let a = leaf(1);
        let b = leaf(2);
        s.put_event(a.clone()).unwrap();
        s.put_event(b.clone()).unwrap();
        let c = child(&a, &b, 70, 0);
        assert!(s.buffer_orphan(c.clone(), [b.id()].into()).is_err());
    }

    #[test]
    fn stale_orphans_flagged_and_capacity_enforced() {
        let mut s = EventStore::new(1);
        let a = leaf(1);
        let ghost = leaf(9);
        let c = child(&a, &ghost, 80, 0);
        s.buffer_orphan(c.clone(), [a.id(), ghost.id()].into()).unwrap();
        assert!(s.stale_orphans(0).is_empty());
        s.put_event(a.clone()).unwrap();
        s.put_event(leaf(2)).unwrap();
        assert_eq!(s.stale_orphans(1), vec![c.id()]);
        let d = child(&leaf(3), &ghost, 81, 0);
        assert!(matches!(
            s.buffer_orphan(d, [ghost.id()].into()),
            Err(Error::Backpressure(1))
        ));
    }

    #[test]
    fn strip_requires_finalised_frame() {
        let mut s = EventStore::default();
        let a = leaf(1);
        s.put_event(a.clone()).unwrap();
        assert!(s.strip_flag_table(&a.id()).is_err());
        s.record_finalised(FinalOrder {
            frame: FrameNumber(0),
            ordered_events: vec![a.id()],
        })
        .unwrap();
        s.strip_flag_table(&a.id()).unwrap();
        s.strip_flag_table(&a.id()).unwrap();
        let stored = s.get_event(&a.id()).unwrap();
        assert!(stored.flag_table.is_empty());
        assert_eq!(stored.hash, a.hash);
    }

    #[test]
    fn finalised_log_is_consecutive() {
        let mut s = EventStore::default();
        let err = s.record_finalised(FinalOrder {
            frame: FrameNumber(1),
            ordered_events: vec![],
        });
        assert!(matches!(err, Err(Error::Ordering { .. })));
    }

    #[test]
    fn journal_roundtrip() {
        let header = JournalHeader {
            suite: "sha256+ed25519".into(),
            peer_list_digest: Digest([4; 32]),
        };
        let file = tempfile::NamedTempFile::new().unwrap();
        let writer = JournalWriter::new(Box::new(file.reopen().unwrap()), &header).unwrap();
        let mut s = EventStore::default();
        s.attach_journal(writer);
        let a = leaf(1);
        let b = leaf(2);
        s.put_event(a.clone()).unwrap();
        s.put_event(b.clone()).unwrap();
        let (h, events) = read_journal(file.reopen().unwrap()).unwrap();
        assert_eq!(h, header);
        assert_eq!(events.len(), 2);
        assert_eq!(events[0].hash, a.hash);
        assert!(read_journal(&b"nope"[..]).is_err());
    }
}
