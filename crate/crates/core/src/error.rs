use thiserror::Error;

use crate::model::{EventId, FrameNumber, PeerId};

/// Errors raised while decoding canonical or wire bytes.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("unexpected end of input at offset {0}")]
    Truncated(usize),
    #[error("field `{field}` has length {got}, expected {expected}")]
    BadLength {
        field: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("unknown message type 0x{0:02x}")]
    UnknownMessageType(u8),
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(u8),
    #[error("crypto suite mismatch: local `{local}`, remote `{remote}`")]
    SuiteMismatch { local: String, remote: String },
    #[error("{0} trailing bytes after message")]
    TrailingBytes(usize),
    #[error("bad journal header")]
    BadJournalHeader,
    #[error("invalid utf-8 in `{0}`")]
    Utf8(&'static str),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unknown peer {0}")]
    UnknownPeer(PeerId),
    /// Two different pieces of data claim the same identity, or a
    /// referenced event cannot be resolved. Fatal for the node.
    #[error("integrity fault: {0}")]
    Integrity(String),
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("frame {requested} cannot be finalised; next expected frame is {expected}")]
    Ordering {
        requested: FrameNumber,
        expected: FrameNumber,
    },
    #[error("event {0} rejected: {1}")]
    Rejected(EventId, String),
    #[error("signing failed: {0}")]
    Signing(String),
    #[error("orphan buffer full ({0} events)")]
    Backpressure(usize),
    #[error("transport: {0}")]
    Transport(String),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
