//! Hashing and signature services.
//!
//! The protocol does not prescribe algorithms; every peer of one network
//! must run the same [`CryptoSuite`]. The suite name travels in each wire
//! message so mismatched networks fail on the first exchange.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use ed25519_dalek::{Signature, Signer as _, SigningKey, Verifier as _, VerifyingKey};
use sha2::{Digest as _, Sha256};

use crate::codec::canonical_encode;
use crate::error::{Error, Result};
use crate::model::{Digest, Event, PeerId, PeerList, DIGEST_LEN};

pub trait CryptoSuite: Send + Sync + fmt::Debug {
    fn hash_name(&self) -> &str;
    fn sign_name(&self) -> &str;

    fn digest_len(&self) -> usize {
        DIGEST_LEN
    }

    /// Combined name carried in wire handshakes, e.g. `sha256+ed25519`.
    fn name(&self) -> String {
        format!("{}+{}", self.hash_name(), self.sign_name())
    }

    fn digest(&self, bytes: &[u8]) -> Digest;

    fn verify(&self, public_key: &[u8], message: &[u8], signature: &[u8]) -> bool;

    /// Deterministic key derivation, used by simulations and fixtures.
    fn key_from_seed(&self, seed: [u8; 32]) -> KeyHandle;
}

/// Private key material behind an opaque handle.
pub trait SigningBackend: Send + Sync {
    fn public_key(&self) -> &[u8];
    fn sign(&self, message: &[u8]) -> Result<Vec<u8>>;
}

#[derive(Clone)]
pub struct KeyHandle {
    backend: Arc<dyn SigningBackend>,
}

impl KeyHandle {
    pub fn new(backend: Arc<dyn SigningBackend>) -> Self {
        KeyHandle { backend }
    }

    /// A handle that knows its public key but cannot sign.
    pub fn detached(public_key: Vec<u8>) -> Self {
        KeyHandle::new(Arc::new(Detached(public_key)))
    }

    pub fn public_key(&self) -> &[u8] {
        self.backend.public_key()
    }

    /// Peers are identified by their (first) public key.
    pub fn peer_id(&self) -> PeerId {
        let mut id = [0u8; DIGEST_LEN];
        let pk = self.public_key();
        let n = pk.len().min(DIGEST_LEN);
        id[..n].copy_from_slice(&pk[..n]);
        PeerId(id)
    }

    pub fn sign(&self, message: &[u8]) -> Result<Vec<u8>> {
        self.backend.sign(message)
    }
}

impl fmt::Debug for KeyHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KeyHandle({})", hex::encode(&self.public_key()[..4.min(self.public_key().len())]))
    }
}

struct Detached(Vec<u8>);

impl SigningBackend for Detached {
    fn public_key(&self) -> &[u8] {
        &self.0
    }

    fn sign(&self, _message: &[u8]) -> Result<Vec<u8>> {
        Err(Error::Signing("private key unavailable".into()))
    }
}

struct Ed25519Key {
    signing: SigningKey,
    public: [u8; 32],
}

impl SigningBackend for Ed25519Key {
    fn public_key(&self) -> &[u8] {
        &self.public
    }

    fn sign(&self, message: &[u8]) -> Result<Vec<u8>> {
        Ok(self.signing.sign(message).to_bytes().to_vec())
    }
}

/// SHA-256 digests with Ed25519 signatures.
#[derive(Default)]
pub struct Sha256Ed25519 {
    verifying_keys: Mutex<HashMap<[u8; 32], Option<VerifyingKey>>>,
}

impl Sha256Ed25519 {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn shared() -> Arc<dyn CryptoSuite> {
        Arc::new(Self::new())
    }

    fn verifying_key(&self, public_key: &[u8]) -> Option<VerifyingKey> {
        let pk: [u8; 32] = public_key.try_into().ok()?;
        let mut cache = self.verifying_keys.lock().unwrap();
        *cache
            .entry(pk)
            .or_insert_with(|| VerifyingKey::from_bytes(&pk).ok())
    }
}

impl fmt::Debug for Sha256Ed25519 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Sha256Ed25519")
    }
}

impl CryptoSuite for Sha256Ed25519 {
    fn hash_name(&self) -> &str {
        "sha256"
    }

    fn sign_name(&self) -> &str {
        "ed25519"
    }

    fn digest(&self, bytes: &[u8]) -> Digest {
        Digest(Sha256::digest(bytes).into())
    }

    fn verify(&self, public_key: &[u8], message: &[u8], signature: &[u8]) -> bool {
        let Some(vk) = self.verifying_key(public_key) else {
            return false;
        };
        let Ok(sig) = Signature::from_slice(signature) else {
            return false;
        };
        vk.verify(message, &sig).is_ok()
    }

    fn key_from_seed(&self, seed: [u8; 32]) -> KeyHandle {
        let signing = SigningKey::from_bytes(&seed);
        let public = signing.verifying_key().to_bytes();
        KeyHandle::new(Arc::new(Ed25519Key { signing, public }))
    }
}

pub fn hash_event(event: &Event, suite: &dyn CryptoSuite) -> Digest {
    suite.digest(&canonical_encode(event))
}

/// Signs the event hash (not the full hash-domain encoding).
pub fn sign_event(event: &Event, key: &KeyHandle, _suite: &dyn CryptoSuite) -> Result<Vec<u8>> {
    key.sign(event.hash.as_bytes())
}

/// Outcome of checking an event's hash and every attached signature.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VerificationReport {
    pub hash_matches: bool,
    pub creator_known: bool,
    pub creator_signature_valid: bool,
    /// Relayer signatures other than the creator's, with validity.
    pub relayers: Vec<(PeerId, bool)>,
    pub unknown_signers: Vec<PeerId>,
    pub duplicate_signers: Vec<PeerId>,
}

impl VerificationReport {
    /// Hash integrity and a valid creator signature are required; relayer
    /// problems are only warnings.
    pub fn accepted(&self) -> bool {
        self.hash_matches && self.creator_known && self.creator_signature_valid
    }

    pub fn has_warnings(&self) -> bool {
        self.relayers.iter().any(|(_, ok)| !ok)
            || !self.unknown_signers.is_empty()
            || !self.duplicate_signers.is_empty()
    }

    pub fn rejection_reason(&self) -> Option<&'static str> {
        if !self.hash_matches {
            Some("hash mismatch")
        } else if !self.creator_known {
            Some("creator not in peer list")
        } else if !self.creator_signature_valid {
            Some("missing or invalid creator signature")
        } else {
            None
        }
    }
}

pub fn verify_event(event: &Event, peers: &PeerList, suite: &dyn CryptoSuite) -> VerificationReport {
    let mut report = VerificationReport {
        hash_matches: hash_event(event, suite) == event.hash,
        ..Default::default()
    };
    let creator = peers.get(&event.creator);
    report.creator_known = creator.is_some();
    let mut seen: Vec<PeerId> = Vec::with_capacity(event.signatures.len());
    for sig in &event.signatures {
        if seen.contains(&sig.signer) {
            report.duplicate_signers.push(sig.signer);
            continue;
        }
        seen.push(sig.signer);
        let Some(info) = peers.get(&sig.signer) else {
            report.unknown_signers.push(sig.signer);
            continue;
        };
        let ok = suite.verify(&info.public_key, event.hash.as_bytes(), &sig.signature);
        if sig.signer == event.creator {
            report.creator_signature_valid = ok;
        } else {
            report.relayers.push((sig.signer, ok));
        }
    }
    report
}
