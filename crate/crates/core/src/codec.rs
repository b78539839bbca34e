//! Canonical byte encodings.
//!
//! Layout rules shared by hashing, the wire and the journal:
//! fixed-width big-endian unsigned integers, byte strings prefixed by a
//! 32-bit big-endian length, sequences prefixed by a 32-bit big-endian
//! count. The hash-domain encoding of an event lists, in order: creator,
//! height, self-parent id, self-parent hash, other-parent id, other-parent
//! hash, Lamport timestamp, user transactions, internal transactions.

use crate::error::DecodeError;
use crate::gossip::{SyncRequest, SyncReply};
use crate::model::{
    Digest, Event, EventSignature, GossipEntry, GossipList, InternalTag, InternalTx, LamportTime,
    ParentLink, PeerId, TransactionPayload, DIGEST_LEN,
};

pub const MSG_SYNC_REQUEST: u8 = 0x01;
pub const MSG_SYNC_REPLY: u8 = 0x02;
pub const PROTOCOL_VERSION: u8 = 0x01;

#[derive(Default)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put_u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn put_u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn put_u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn put_u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn put_bytes(&mut self, bytes: &[u8]) {
        self.put_u32(bytes.len() as u32);
        self.buf.extend_from_slice(bytes);
    }

    pub fn put_raw(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Decoder { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let end = self.pos.checked_add(n).ok_or(DecodeError::Truncated(self.pos))?;
        if end > self.buf.len() {
            return Err(DecodeError::Truncated(self.pos));
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16, DecodeError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], DecodeError> {
        let len = self.u32()? as usize;
        self.take(len)
    }

    pub fn fixed(&mut self, field: &'static str) -> Result<[u8; DIGEST_LEN], DecodeError> {
        let b = self.bytes()?;
        b.try_into().map_err(|_| DecodeError::BadLength {
            field,
            got: b.len(),
            expected: DIGEST_LEN,
        })
    }

    pub fn string(&mut self, field: &'static str) -> Result<String, DecodeError> {
        let b = self.bytes()?;
        String::from_utf8(b.to_vec()).map_err(|_| DecodeError::Utf8(field))
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn finish(self) -> Result<(), DecodeError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(DecodeError::TrailingBytes(n)),
        }
    }
}

fn put_hash_domain(enc: &mut Encoder, e: &Event) {
    enc.put_bytes(e.creator.as_bytes());
    enc.put_u64(e.height);
    enc.put_bytes(e.self_parent.id.as_bytes());
    enc.put_bytes(e.self_parent.hash.as_bytes());
    enc.put_bytes(e.other_parent.id.as_bytes());
    enc.put_bytes(e.other_parent.hash.as_bytes());
    enc.put_u64(e.lamport_timestamp.0);
    enc.put_u32(e.payload.user_transactions.len() as u32);
    for tx in &e.payload.user_transactions {
        enc.put_bytes(tx);
    }
    enc.put_u32(e.payload.internal_transactions.len() as u32);
    for tx in &e.payload.internal_transactions {
        enc.put_u16(tx.tag.0);
        enc.put_bytes(&tx.body);
    }
}

/// Hash-domain encoding: excludes hash, signatures and local attributes.
pub fn canonical_encode(e: &Event) -> Vec<u8> {
    let mut enc = Encoder::new();
    put_hash_domain(&mut enc, e);
    enc.finish()
}

fn get_hash_domain(dec: &mut Decoder<'_>) -> Result<Event, DecodeError> {
    let creator = PeerId(dec.fixed("creator")?);
    let height = dec.u64()?;
    let self_parent = ParentLink {
        id: Digest(dec.fixed("self_parent.id")?),
        hash: Digest(dec.fixed("self_parent.hash")?),
    };
    let other_parent = ParentLink {
        id: Digest(dec.fixed("other_parent.id")?),
        hash: Digest(dec.fixed("other_parent.hash")?),
    };
    let lamport = LamportTime(dec.u64()?);
    let n_user = dec.u32()? as usize;
    let mut user = Vec::with_capacity(n_user.min(1024));
    for _ in 0..n_user {
        user.push(dec.bytes()?.to_vec());
    }
    let n_internal = dec.u32()? as usize;
    let mut internal = Vec::with_capacity(n_internal.min(1024));
    for _ in 0..n_internal {
        let tag = InternalTag(dec.u16()?);
        internal.push(InternalTx {
            tag,
            body: dec.bytes()?.to_vec(),
        });
    }
    Ok(Event::unsigned(
        creator,
        height,
        self_parent,
        other_parent,
        lamport,
        TransactionPayload {
            user_transactions: user,
            internal_transactions: internal,
        },
    ))
}

/// Decodes a hash-domain encoding. The hash field is left zero.
pub fn decode_canonical(bytes: &[u8]) -> Result<Event, DecodeError> {
    let mut dec = Decoder::new(bytes);
    let e = get_hash_domain(&mut dec)?;
    dec.finish()?;
    Ok(e)
}

/// Event as transmitted: hash-domain encoding, the hash, then the
/// count-prefixed (signer, signature) list.
pub fn put_event_record(enc: &mut Encoder, e: &Event) {
    put_hash_domain(enc, e);
    enc.put_bytes(e.hash.as_bytes());
    enc.put_u32(e.signatures.len() as u32);
    for s in &e.signatures {
        enc.put_bytes(s.signer.as_bytes());
        enc.put_bytes(&s.signature);
    }
}

pub fn get_event_record(dec: &mut Decoder<'_>) -> Result<Event, DecodeError> {
    let mut e = get_hash_domain(dec)?;
    e.hash = Digest(dec.fixed("hash")?);
    let n = dec.u32()? as usize;
    for _ in 0..n {
        let signer = PeerId(dec.fixed("signer")?);
        let signature = dec.bytes()?.to_vec();
        e.signatures.push(EventSignature { signer, signature });
    }
    Ok(e)
}

pub fn encode_event_record(e: &Event) -> Vec<u8> {
    let mut enc = Encoder::new();
    put_event_record(&mut enc, e);
    enc.finish()
}

pub fn decode_event_record(bytes: &[u8]) -> Result<Event, DecodeError> {
    let mut dec = Decoder::new(bytes);
    let e = get_event_record(&mut dec)?;
    dec.finish()?;
    Ok(e)
}

pub fn put_gossip_list(enc: &mut Encoder, list: &GossipList) {
    enc.put_u32(list.len() as u32);
    for (peer, entry) in &list.0 {
        enc.put_bytes(peer.as_bytes());
        enc.put_u64(entry.lamport_timestamp.0);
        enc.put_bytes(entry.last_event_id.as_bytes());
    }
}

pub fn get_gossip_list(dec: &mut Decoder<'_>) -> Result<GossipList, DecodeError> {
    let n = dec.u32()? as usize;
    let mut list = GossipList::new();
    for _ in 0..n {
        let peer = PeerId(dec.fixed("gossip.peer")?);
        let ts = LamportTime(dec.u64()?);
        let id = Digest(dec.fixed("gossip.event")?);
        list.0.insert(
            peer,
            GossipEntry {
                lamport_timestamp: ts,
                last_event_id: id,
            },
        );
    }
    Ok(list)
}

/// A decoded wire message.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WireMessage {
    Request(SyncRequest),
    Reply(SyncReply),
}

fn put_header(enc: &mut Encoder, kind: u8, suite: &str) {
    enc.put_u8(kind);
    enc.put_u8(PROTOCOL_VERSION);
    enc.put_bytes(suite.as_bytes());
}

pub fn encode_request(req: &SyncRequest, suite: &str) -> Vec<u8> {
    let mut enc = Encoder::new();
    put_header(&mut enc, MSG_SYNC_REQUEST, suite);
    enc.put_bytes(req.sender.as_bytes());
    enc.put_u64(req.lamport_time.0);
    put_gossip_list(&mut enc, &req.gossip_list);
    enc.finish()
}

pub fn encode_reply(reply: &SyncReply, suite: &str) -> Vec<u8> {
    let mut enc = Encoder::new();
    put_header(&mut enc, MSG_SYNC_REPLY, suite);
    enc.put_bytes(reply.sender.as_bytes());
    enc.put_u64(reply.lamport_time.0);
    put_gossip_list(&mut enc, &reply.gossip_list);
    enc.put_u32(reply.bundle.len() as u32);
    for e in &reply.bundle {
        put_event_record(&mut enc, e);
    }
    enc.finish()
}

/// Decodes a request or reply, failing fast when the remote runs a
/// different crypto suite.
pub fn decode_message(bytes: &[u8], local_suite: &str) -> Result<WireMessage, DecodeError> {
    let mut dec = Decoder::new(bytes);
    let kind = dec.u8()?;
    if kind != MSG_SYNC_REQUEST && kind != MSG_SYNC_REPLY {
        return Err(DecodeError::UnknownMessageType(kind));
    }
    let version = dec.u8()?;
    if version != PROTOCOL_VERSION {
        return Err(DecodeError::UnsupportedVersion(version));
    }
    let suite = dec.string("suite")?;
    if suite != local_suite {
        return Err(DecodeError::SuiteMismatch {
            local: local_suite.to_string(),
            remote: suite,
        });
    }
    let sender = PeerId(dec.fixed("sender")?);
    let lamport_time = LamportTime(dec.u64()?);
    let gossip_list = get_gossip_list(&mut dec)?;
    let msg = if kind == MSG_SYNC_REQUEST {
        WireMessage::Request(SyncRequest {
            sender,
            gossip_list,
            lamport_time,
        })
    } else {
        let n = dec.u32()? as usize;
        let mut bundle = Vec::with_capacity(n.min(4096));
        for _ in 0..n {
            bundle.push(get_event_record(&mut dec)?);
        }
        WireMessage::Reply(SyncReply {
            sender,
            gossip_list,
            lamport_time,
            bundle,
        })
    };
    dec.finish()?;
    Ok(msg)
}
