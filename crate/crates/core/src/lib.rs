//! Asynchronous gossip-based consensus over an event DAG.
//!
//! Nodes exchange signed events in pairwise syncs, assign each event a
//! frame, and finalise frames once every creator has a root above them.
//! [`sim`] runs whole networks deterministically from a seed and [`ledger`]
//! applies finalised payments.

pub mod codec;
pub mod consensus;
pub mod crypto;
pub mod error;
pub mod gossip;
pub mod ledger;
pub mod model;
pub mod sim;
pub mod store;

pub use consensus::{Engine, EngineConfig, FinalOrder};
pub use crypto::{CryptoSuite, KeyHandle, Sha256Ed25519};
pub use error::{Error, Result};
pub use model::{Event, EventId, FrameNumber, LamportTime, PeerId, PeerInfo, PeerList};
