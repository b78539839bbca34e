//! Protocol data types and the value-level operations every other module
//! shares: identities, events, flag tables, gossip lists and the Lamport
//! clock rules.

use std::collections::BTreeMap;
use std::fmt;

use crate::crypto::{hash_event, sign_event, CryptoSuite, KeyHandle};
use crate::error::{Error, Result};

/// Length in bytes of every digest, event identifier and peer identifier.
pub const DIGEST_LEN: usize = 32;

/// Output of the configured hash function.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; DIGEST_LEN]);

/// Events are identified by their hash.
pub type EventId = Digest;

impl Digest {
    /// The all-zero value used for "no parent".
    pub const ZERO: Digest = Digest([0; DIGEST_LEN]);

    pub fn is_zero(&self) -> bool {
        self.0 == [0; DIGEST_LEN]
    }

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let bytes = hex::decode(s).ok()?;
        Some(Digest(bytes.try_into().ok()?))
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", &self.to_hex()[..12])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// A peer's unique identifier. Ordered lexicographically by bytes.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PeerId(pub [u8; DIGEST_LEN]);

impl PeerId {
    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let bytes = hex::decode(s).ok()?;
        Some(PeerId(bytes.try_into().ok()?))
    }
}

impl fmt::Debug for PeerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "peer:{}", &self.to_hex()[..8])
    }
}

impl fmt::Display for PeerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PeerInfo {
    pub id: PeerId,
    pub public_key: Vec<u8>,
    pub net_address: String,
}

/// The static roster shared by every node of one network, sorted by public
/// key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PeerList {
    peers: Vec<PeerInfo>,
}

impl PeerList {
    pub fn new(mut peers: Vec<PeerInfo>) -> Result<Self> {
        peers.sort_by(|a, b| a.public_key.cmp(&b.public_key).then(a.id.cmp(&b.id)));
        for pair in peers.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(Error::Config(format!("duplicate peer {}", pair[0].id)));
            }
        }
        let mut ids: Vec<_> = peers.iter().map(|p| p.id).collect();
        ids.sort();
        ids.dedup();
        if ids.len() != peers.len() {
            return Err(Error::Config("duplicate peer id in peer list".into()));
        }
        Ok(PeerList { peers })
    }

    pub fn len(&self) -> usize {
        self.peers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peers.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &PeerInfo> {
        self.peers.iter()
    }

    pub fn get(&self, id: &PeerId) -> Option<&PeerInfo> {
        self.peers.iter().find(|p| &p.id == id)
    }

    pub fn contains(&self, id: &PeerId) -> bool {
        self.get(id).is_some()
    }

    /// Position of `id` in the public-key order.
    pub fn index_of(&self, id: &PeerId) -> Option<usize> {
        self.peers.iter().position(|p| &p.id == id)
    }

    pub fn by_index(&self, index: usize) -> &PeerInfo {
        &self.peers[index]
    }

    /// Digest over the sorted (id, public key) records. Used in journal
    /// headers so fixtures cannot be replayed against the wrong network.
    pub fn digest(&self, suite: &dyn CryptoSuite) -> Digest {
        let mut enc = crate::codec::Encoder::new();
        enc.put_u32(self.peers.len() as u32);
        for p in &self.peers {
            enc.put_bytes(&p.id.0);
            enc.put_bytes(&p.public_key);
        }
        suite.digest(&enc.finish())
    }
}

/// Logical clock value.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LamportTime(pub u64);

impl LamportTime {
    pub fn next(self) -> Self {
        LamportTime(self.0 + 1)
    }
}

impl fmt::Display for LamportTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FrameNumber(pub u64);

impl FrameNumber {
    pub fn next(self) -> Self {
        FrameNumber(self.0 + 1)
    }
}

impl fmt::Display for FrameNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// First frame that is not yet finalised; `None` means nothing is.
pub fn first_unfinalised(last_finalised: Option<FrameNumber>) -> FrameNumber {
    last_finalised.map_or(FrameNumber(0), FrameNumber::next)
}

/// Tag of an internal (protocol-level) transaction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InternalTag(pub u16);

impl InternalTag {
    pub const PEER_ADD: InternalTag = InternalTag(1);
    pub const PEER_REMOVE: InternalTag = InternalTag(2);
    pub const KEY_CHANGE: InternalTag = InternalTag(3);
    pub const FAILED_EVENT: InternalTag = InternalTag(4);

    /// Tags 1..=255 are reserved for protocol operations.
    pub fn is_reserved(self) -> bool {
        (1..=255).contains(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InternalTx {
    pub tag: InternalTag,
    pub body: Vec<u8>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TransactionPayload {
    pub user_transactions: Vec<Vec<u8>>,
    pub internal_transactions: Vec<InternalTx>,
}

impl TransactionPayload {
    pub fn is_empty(&self) -> bool {
        self.user_transactions.is_empty() && self.internal_transactions.is_empty()
    }
}

/// Reference to a parent event by identifier and hash.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct ParentLink {
    pub id: EventId,
    pub hash: Digest,
}

impl ParentLink {
    pub const NONE: ParentLink = ParentLink {
        id: Digest::ZERO,
        hash: Digest::ZERO,
    };

    pub fn is_none(&self) -> bool {
        self.id.is_zero() && self.hash.is_zero()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventSignature {
    pub signer: PeerId,
    pub signature: Vec<u8>,
}

/// Map from visible root id to that root's frame.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FlagTable(pub BTreeMap<EventId, FrameNumber>);

impl FlagTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn single(id: EventId, frame: FrameNumber) -> Self {
        let mut t = Self::new();
        t.0.insert(id, frame);
        t
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, id: &EventId) -> Option<FrameNumber> {
        self.0.get(id).copied()
    }

    pub fn insert(&mut self, id: EventId, frame: FrameNumber) {
        self.0.insert(id, frame);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&EventId, &FrameNumber)> {
        self.0.iter()
    }
}

impl FromIterator<(EventId, FrameNumber)> for FlagTable {
    fn from_iter<I: IntoIterator<Item = (EventId, FrameNumber)>>(iter: I) -> Self {
        FlagTable(iter.into_iter().collect())
    }
}

/// Map from creator to a frame number derived from that creator's roots.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CreatorFlagTable(pub BTreeMap<PeerId, FrameNumber>);

impl CreatorFlagTable {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, creator: &PeerId) -> Option<FrameNumber> {
        self.0.get(creator).copied()
    }

    pub fn min_frame(&self) -> Option<FrameNumber> {
        self.0.values().min().copied()
    }
}

/// The atomic unit of exchange between peers.
///
/// `frame`, `flag_table` and `is_root` are computed by each node on
/// insertion and never leave it; they are outside the hash domain together
/// with `signatures`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Event {
    pub creator: PeerId,
    pub height: u64,
    pub self_parent: ParentLink,
    pub other_parent: ParentLink,
    pub lamport_timestamp: LamportTime,
    pub payload: TransactionPayload,
    pub hash: Digest,
    pub signatures: Vec<EventSignature>,
    pub frame: FrameNumber,
    pub flag_table: FlagTable,
    pub is_root: bool,
}

impl Event {
    /// A fresh unhashed, unsigned event with the given hash-domain fields.
    pub fn unsigned(
        creator: PeerId,
        height: u64,
        self_parent: ParentLink,
        other_parent: ParentLink,
        lamport_timestamp: LamportTime,
        payload: TransactionPayload,
    ) -> Self {
        Event {
            creator,
            height,
            self_parent,
            other_parent,
            lamport_timestamp,
            payload,
            hash: Digest::ZERO,
            signatures: Vec::new(),
            frame: FrameNumber(0),
            flag_table: FlagTable::new(),
            is_root: false,
        }
    }

    pub fn id(&self) -> EventId {
        self.hash
    }

    pub fn is_leaf(&self) -> bool {
        self.height == 0 && self.self_parent.is_none() && self.other_parent.is_none()
    }

    pub fn is_signed_by(&self, peer: &PeerId) -> bool {
        self.signatures.iter().any(|s| &s.signer == peer)
    }

    /// Clears the locally computed attributes, as when sending an event.
    pub fn without_local_state(mut self) -> Self {
        self.frame = FrameNumber(0);
        self.flag_table = FlagTable::new();
        self.is_root = false;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GossipEntry {
    pub lamport_timestamp: LamportTime,
    pub last_event_id: EventId,
}

/// Per-creator latest known (Lamport timestamp, event id).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GossipList(pub BTreeMap<PeerId, GossipEntry>);

/// Equal timestamps with different event ids for the same creator. Honest
/// creators never produce this.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GossipConflict {
    pub creator: PeerId,
    pub lamport_timestamp: LamportTime,
    pub kept: EventId,
    pub discarded: EventId,
}

impl GossipList {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, creator: &PeerId) -> Option<&GossipEntry> {
        self.0.get(creator)
    }

    /// Records `entry` for `creator` if it is newer than what is known.
    pub fn observe(&mut self, creator: PeerId, entry: GossipEntry) -> Option<GossipConflict> {
        match self.0.get_mut(&creator) {
            None => {
                self.0.insert(creator, entry);
                None
            }
            Some(cur) => {
                if entry.lamport_timestamp > cur.lamport_timestamp {
                    *cur = entry;
                    None
                } else if entry.lamport_timestamp == cur.lamport_timestamp
                    && entry.last_event_id != cur.last_event_id
                {
                    let (kept, discarded) = if entry.last_event_id < cur.last_event_id {
                        (entry.last_event_id, cur.last_event_id)
                    } else {
                        (cur.last_event_id, entry.last_event_id)
                    };
                    cur.last_event_id = kept;
                    Some(GossipConflict {
                        creator,
                        lamport_timestamp: entry.lamport_timestamp,
                        kept,
                        discarded,
                    })
                } else {
                    None
                }
            }
        }
    }

    /// Merges `other` into `self` and reports any timestamp ties.
    pub fn merge_from(&mut self, other: &GossipList) -> Vec<GossipConflict> {
        other
            .0
            .iter()
            .filter_map(|(creator, entry)| self.observe(*creator, *entry))
            .collect()
    }
}

/// Pointwise maximum by Lamport timestamp; ties on different ids keep the
/// smaller id.
pub fn merge_gossip_lists(a: &GossipList, b: &GossipList) -> GossipList {
    let mut out = a.clone();
    for conflict in out.merge_from(b) {
        tracing::warn!(
            creator = %conflict.creator,
            ts = conflict.lamport_timestamp.0,
            "gossip list tie with different event ids"
        );
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LamportInit {
    AllZero,
    IdByte,
}

/// Byte of the identifier used by [`LamportInit::IdByte`] by default.
pub const DEFAULT_LAMPORT_BYTE: usize = 13;

pub fn lamport_init(strategy: LamportInit, me: &PeerId, byte_index: usize) -> Result<LamportTime> {
    match strategy {
        LamportInit::AllZero => Ok(LamportTime(0)),
        LamportInit::IdByte => me
            .0
            .get(byte_index)
            .map(|b| LamportTime(u64::from(*b)))
            .ok_or_else(|| {
                Error::Config(format!(
                    "lamport byte index {byte_index} out of range for {DIGEST_LEN}-byte id"
                ))
            }),
    }
}

/// Devises the leaf event of `creator`. Every node computes the same leaf
/// without communication; only the creator itself signs it.
pub fn make_leaf_event(
    creator: PeerId,
    peers: &PeerList,
    current_frame: FrameNumber,
    initial_lamport: LamportTime,
    suite: &dyn CryptoSuite,
    local_key: Option<(&PeerId, &KeyHandle)>,
) -> Result<Event> {
    if !peers.contains(&creator) {
        return Err(Error::UnknownPeer(creator));
    }
    let mut leaf = Event::unsigned(
        creator,
        0,
        ParentLink::NONE,
        ParentLink::NONE,
        initial_lamport,
        TransactionPayload::default(),
    );
    leaf.hash = hash_event(&leaf, suite);
    if let Some((me, key)) = local_key {
        if me == &creator {
            let signature = sign_event(&leaf, key, suite)?;
            leaf.signatures.push(EventSignature {
                signer: creator,
                signature,
            });
        }
    }
    leaf.is_root = true;
    leaf.frame = current_frame;
    leaf.flag_table = FlagTable::single(leaf.id(), current_frame);
    Ok(leaf)
}
