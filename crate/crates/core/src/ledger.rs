//! TxFlow: account balances driven by the finalised transaction order.
//!
//! Every node applies the same transfers in the same order, so every node
//! accepts and rejects the same ones. Of two transfers spending the same
//! nonce only the first finalised is applied.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::{Decoder, Encoder};
use crate::consensus::{Delivery, DeliverySink};
use crate::crypto::{CryptoSuite, KeyHandle, Sha256Ed25519};
use crate::error::{Error, Result};
use crate::model::{Digest, PeerId, PeerList};
use crate::sim::{sim_network, SimConfig, Simulation, StopReason};

/// Starting balance of every simulated account.
pub const DEFAULT_GENESIS_BALANCE: u64 = 1000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transfer {
    pub from: PeerId,
    pub to: PeerId,
    pub amount: u64,
    pub nonce: u64,
    pub signature: Vec<u8>,
}

impl Transfer {
    /// Builds and signs a transfer from the key's account.
    pub fn signed(key: &KeyHandle, to: PeerId, amount: u64, nonce: u64) -> Result<Self> {
        let mut t = Transfer {
            from: key.peer_id(),
            to,
            amount,
            nonce,
            signature: Vec::new(),
        };
        t.signature = key.sign(&t.signing_bytes())?;
        Ok(t)
    }

    /// The signed part: from, to, amount, nonce.
    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.put_bytes(self.from.as_bytes());
        enc.put_bytes(self.to.as_bytes());
        enc.put_u64(self.amount);
        enc.put_u64(self.nonce);
        enc.finish()
    }

    /// Signed part followed by the length-prefixed signature; this is the
    /// user transaction carried in events.
    pub fn encode(&self) -> Vec<u8> {
        let mut bytes = self.signing_bytes();
        let mut enc = Encoder::new();
        enc.put_bytes(&self.signature);
        bytes.extend(enc.finish());
        bytes
    }

    pub fn decode(bytes: &[u8]) -> Option<Self> {
        let mut dec = Decoder::new(bytes);
        let from = PeerId(dec.fixed("from").ok()?);
        let to = PeerId(dec.fixed("to").ok()?);
        let amount = dec.u64().ok()?;
        let nonce = dec.u64().ok()?;
        let signature = dec.bytes().ok()?.to_vec();
        dec.finish().ok()?;
        Some(Transfer {
            from,
            to,
            amount,
            nonce,
            signature,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Rejection {
    Malformed,
    Signature,
    Nonce,
    Funds,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ApplyOutcome {
    Applied,
    Rejected(Rejection),
}

impl fmt::Display for ApplyOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ApplyOutcome::Applied => f.write_str("applied"),
            ApplyOutcome::Rejected(r) => write!(f, "rejected({})", format!("{r:?}").to_lowercase()),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Account {
    pub balance: u64,
    /// Nonce the next applied transfer must carry; starts at 1.
    pub next_nonce: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LedgerState {
    pub accounts: BTreeMap<PeerId, Account>,
    pub applied: u64,
    pub rejected: u64,
    /// Rolling hash over every transfer seen and its outcome.
    pub history: Digest,
}

impl LedgerState {
    pub fn from_genesis(balances: &BTreeMap<PeerId, u64>) -> Self {
        LedgerState {
            accounts: balances
                .iter()
                .map(|(&id, &balance)| (id, Account { balance, next_nonce: 1 }))
                .collect(),
            applied: 0,
            rejected: 0,
            history: Digest::ZERO,
        }
    }

    pub fn total(&self) -> u128 {
        self.accounts.values().map(|a| a.balance as u128).sum()
    }

    pub fn balance(&self, id: &PeerId) -> u64 {
        self.accounts.get(id).map_or(0, |a| a.balance)
    }
}

/// Applies one finalised user transaction. Checks run in a fixed order:
/// signature, nonce, funds. A transfer to an account outside the genesis
/// opens it.
pub fn apply_finalised_transfer(
    tx: &[u8],
    state: &mut LedgerState,
    peers: &PeerList,
    suite: &dyn CryptoSuite,
) -> ApplyOutcome {
    let outcome = match Transfer::decode(tx) {
        None => ApplyOutcome::Rejected(Rejection::Malformed),
        Some(t) => check_and_apply(&t, state, peers, suite),
    };
    match outcome {
        ApplyOutcome::Applied => state.applied += 1,
        ApplyOutcome::Rejected(_) => state.rejected += 1,
    }
    let mut rolled = state.history.as_bytes().to_vec();
    rolled.push(match outcome {
        ApplyOutcome::Applied => 0,
        ApplyOutcome::Rejected(r) => 1 + r as u8,
    });
    rolled.extend_from_slice(tx);
    state.history = suite.digest(&rolled);
    outcome
}

fn check_and_apply(t: &Transfer, state: &mut LedgerState, peers: &PeerList, suite: &dyn CryptoSuite) -> ApplyOutcome {
    let signed = peers
        .get(&t.from)
        .is_some_and(|p| suite.verify(&p.public_key, &t.signing_bytes(), &t.signature));
    if !signed {
        return ApplyOutcome::Rejected(Rejection::Signature);
    }
    let sender = state.accounts.get(&t.from).copied().unwrap_or(Account { balance: 0, next_nonce: 1 });
    if t.nonce != sender.next_nonce {
        return ApplyOutcome::Rejected(Rejection::Nonce);
    }
    if sender.balance < t.amount {
        return ApplyOutcome::Rejected(Rejection::Funds);
    }
    let from = state.accounts.entry(t.from).or_insert(sender);
    from.balance -= t.amount;
    from.next_nonce += 1;
    let to = state.accounts.entry(t.to).or_insert(Account { balance: 0, next_nonce: 1 });
    to.balance += t.amount;
    ApplyOutcome::Applied
}

/// Digest of the sorted (account, balance, next nonce) records and the
/// applied/rejected counters.
pub fn ledger_digest(state: &LedgerState, suite: &dyn CryptoSuite) -> Digest {
    let mut enc = Encoder::new();
    enc.put_u32(state.accounts.len() as u32);
    for (id, a) in &state.accounts {
        enc.put_bytes(id.as_bytes());
        enc.put_u64(a.balance);
        enc.put_u64(a.next_nonce);
    }
    enc.put_u64(state.applied);
    enc.put_u64(state.rejected);
    suite.digest(&enc.finish())
}

/// Parses genesis lines `peer_id_hex balance`; `#` starts a comment.
pub fn parse_genesis(text: &str) -> Result<BTreeMap<PeerId, u64>> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = || Error::Config(format!("genesis line {}: expected `peer_id_hex balance`", lineno + 1));
        let mut parts = line.split_whitespace();
        let id = parts.next().and_then(PeerId::from_hex).ok_or_else(bad)?;
        let balance: u64 = parts.next().and_then(|b| b.parse().ok()).ok_or_else(bad)?;
        if parts.next().is_some() || out.insert(id, balance).is_some() {
            return Err(bad());
        }
    }
    Ok(out)
}

pub fn render_genesis(balances: &BTreeMap<PeerId, u64>) -> String {
    balances.iter().map(|(id, b)| format!("{} {b}\n", id.to_hex())).collect()
}

/// The genesis every simulated network starts from.
pub fn default_genesis(peers: &PeerList) -> BTreeMap<PeerId, u64> {
    peers.iter().map(|p| (p.id, DEFAULT_GENESIS_BALANCE)).collect()
}

/// One node's ledger plus the outcome of every transfer it applied.
#[derive(Debug)]
pub struct Ledger {
    pub state: LedgerState,
    pub outcomes: Vec<(Digest, ApplyOutcome)>,
    /// Steps at which the balance total moved; must stay empty.
    pub conservation_breaks: Vec<u64>,
    peers: Arc<PeerList>,
    suite: Arc<dyn CryptoSuite>,
    initial_total: u128,
}

impl Ledger {
    pub fn new(genesis: &BTreeMap<PeerId, u64>, peers: Arc<PeerList>, suite: Arc<dyn CryptoSuite>) -> Self {
        let state = LedgerState::from_genesis(genesis);
        Ledger {
            initial_total: state.total(),
            state,
            outcomes: Vec::new(),
            conservation_breaks: Vec::new(),
            peers,
            suite,
        }
    }

    pub fn apply(&mut self, tx: &[u8]) -> ApplyOutcome {
        let outcome = apply_finalised_transfer(tx, &mut self.state, &self.peers, self.suite.as_ref());
        self.outcomes.push((self.suite.digest(tx), outcome));
        if self.state.total() != self.initial_total {
            self.conservation_breaks.push(self.outcomes.len() as u64);
        }
        outcome
    }

    pub fn digest(&self) -> Digest {
        ledger_digest(&self.state, self.suite.as_ref())
    }
}

/// Feeds a node's finalised user transactions into a shared ledger.
#[derive(Clone)]
pub struct LedgerSink(pub Arc<Mutex<Ledger>>);

impl DeliverySink for LedgerSink {
    fn deliver(&mut self, d: Delivery<'_>) {
        self.0.lock().unwrap().apply(d.transaction);
    }
}

#[derive(Clone, Debug)]
pub struct TxFlowScenario {
    pub seed: u64,
    pub n_nodes: usize,
    /// Total transfers, counting both halves of each double-spend pair.
    pub transfers: usize,
    pub double_spend_pairs: usize,
}

impl Default for TxFlowScenario {
    fn default() -> Self {
        TxFlowScenario {
            seed: 1,
            n_nodes: 4,
            transfers: 100,
            double_spend_pairs: 10,
        }
    }
}

#[derive(Debug)]
pub struct TxFlowReport {
    pub stop_reason: StopReason,
    pub digests: Vec<Digest>,
    pub states: Vec<LedgerState>,
    /// Per pair, per node: which half was applied (`Some(0)`, `Some(1)`),
    /// `None` when not exactly one was.
    pub pair_winners: Vec<Vec<Option<usize>>>,
    pub conservation_breaks: usize,
    pub agreement: bool,
}

impl TxFlowReport {
    pub fn digests_agree(&self) -> bool {
        self.digests.windows(2).all(|w| w[0] == w[1])
    }

    /// Each pair has exactly one applied half, the same on every node.
    pub fn pairs_exclusive(&self) -> bool {
        self.pair_winners
            .iter()
            .all(|nodes| nodes[0].is_some() && nodes.iter().all(|w| w == &nodes[0]))
    }
}

/// Submits transfers, including double-spend pairs whose halves go to
/// different nodes at the same step, runs the network until every node
/// finalised all of them, and compares the ledgers.
pub fn run_txflow(scenario: &TxFlowScenario) -> Result<TxFlowReport> {
    if scenario.transfers < 2 * scenario.double_spend_pairs {
        return Err(Error::Config("more double-spend transfers than transfers".into()));
    }
    let mut cfg = SimConfig::default();
    cfg.n_nodes = scenario.n_nodes;
    cfg.rng_seed = scenario.seed;
    cfg.tx_injection_rate = 0.0;
    cfg.max_finalised_frames = Some(1);
    cfg.drain = true;
    cfg.max_steps = 50_000;
    cfg.set("delay_model", "uniform:0:5")?;
    cfg.set("selector_mode", "mixed")?;
    let mut sim = Simulation::new(cfg)?;

    let suite: Arc<dyn CryptoSuite> = Sha256Ed25519::shared();
    let (keys, peers) = sim_network(suite.as_ref(), scenario.n_nodes, scenario.seed)?;
    let genesis = default_genesis(&peers);
    let ledgers: Vec<Arc<Mutex<Ledger>>> = (0..scenario.n_nodes)
        .map(|_| Arc::new(Mutex::new(Ledger::new(&genesis, peers.clone(), suite.clone()))))
        .collect();
    for (i, l) in ledgers.iter().enumerate() {
        sim.attach_sink(i, Box::new(LedgerSink(l.clone())));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed ^ 0x7478_666c_6f77);
    let n = scenario.n_nodes;
    let mut next_nonce = vec![1u64; n];
    let singles = scenario.transfers - 2 * scenario.double_spend_pairs;
    // Pairs are spread through the run, among ordinary traffic.
    let mut kinds: Vec<bool> = std::iter::repeat_n(false, singles)
        .chain(std::iter::repeat_n(true, scenario.double_spend_pairs))
        .collect();
    for i in (1..kinds.len()).rev() {
        kinds.swap(i, rng.gen_range(0..=i));
    }
    let mut pairs: Vec<[Digest; 2]> = Vec::new();
    for (k, is_pair) in kinds.into_iter().enumerate() {
        let step = 5 + 4 * k as u64;
        let sender = rng.gen_range(0..n);
        let nonce = next_nonce[sender];
        next_nonce[sender] += 1;
        let pick_other = |rng: &mut ChaCha8Rng| (sender + rng.gen_range(1..n)) % n;
        let a = Transfer::signed(&keys[sender], keys[pick_other(&mut rng)].peer_id(), rng.gen_range(1..=50), nonce)?;
        sim.schedule_submission(step, sender, a.encode());
        if is_pair {
            let b = Transfer::signed(&keys[sender], keys[pick_other(&mut rng)].peer_id(), rng.gen_range(51..=99), nonce)?;
            sim.schedule_submission(step, pick_other(&mut rng), b.encode());
            pairs.push([suite.digest(&a.encode()), suite.digest(&b.encode())]);
        }
    }

    let stop_reason = sim.run();
    let report = sim.report(stop_reason);
    let ledgers: Vec<_> = ledgers.iter().map(|l| l.lock().unwrap()).collect();
    let pair_winners = pairs
        .iter()
        .map(|halves| {
            ledgers
                .iter()
                .map(|l| {
                    let applied: Vec<usize> = (0..2)
                        .filter(|&h| l.outcomes.iter().any(|(d, o)| d == &halves[h] && *o == ApplyOutcome::Applied))
                        .collect();
                    (applied.len() == 1).then(|| applied[0])
                })
                .collect()
        })
        .collect();
    Ok(TxFlowReport {
        stop_reason,
        digests: ledgers.iter().map(|l| l.digest()).collect(),
        states: ledgers.iter().map(|l| l.state.clone()).collect(),
        pair_winners,
        conservation_breaks: ledgers.iter().map(|l| l.conservation_breaks.len()).sum(),
        agreement: report.agreement.is_pass() && report.violations.is_empty(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PeerInfo;

    fn setup() -> (Sha256Ed25519, Vec<KeyHandle>, PeerList) {
        let suite = Sha256Ed25519::new();
        let keys: Vec<_> = (0..3u8).map(|i| suite.key_from_seed([i + 40; 32])).collect();
        let peers = PeerList::new(
            keys.iter()
                .map(|k| PeerInfo { id: k.peer_id(), public_key: k.public_key().to_vec(), net_address: String::new() })
                .collect(),
        )
        .unwrap();
        (suite, keys, peers)
    }

    fn state_with(keys: &[KeyHandle], balance: u64) -> LedgerState {
        LedgerState::from_genesis(&keys.iter().map(|k| (k.peer_id(), balance)).collect())
    }

    #[test]
    fn exact_spend() {
        let (suite, keys, peers) = setup();
        let mut s = state_with(&keys, 10);
        let t = Transfer::signed(&keys[0], keys[1].peer_id(), 10, 1).unwrap();
        assert_eq!(apply_finalised_transfer(&t.encode(), &mut s, &peers, &suite), ApplyOutcome::Applied);
        assert_eq!(s.balance(&keys[0].peer_id()), 0);
        assert_eq!(s.balance(&keys[1].peer_id()), 20);
    }

    #[test]
    fn double_spend_second_rejected_for_funds() {
        let (suite, keys, peers) = setup();
        let mut s = state_with(&keys, 10);
        let a = Transfer::signed(&keys[0], keys[1].peer_id(), 10, 1).unwrap();
        let b = Transfer::signed(&keys[0], keys[2].peer_id(), 10, 2).unwrap();
        assert_eq!(apply_finalised_transfer(&a.encode(), &mut s, &peers, &suite), ApplyOutcome::Applied);
        assert_eq!(
            apply_finalised_transfer(&b.encode(), &mut s, &peers, &suite),
            ApplyOutcome::Rejected(Rejection::Funds)
        );
        assert_eq!((s.applied, s.rejected), (1, 1));
    }

    #[test]
    fn bad_signature_changes_nothing_but_history() {
        let (suite, keys, peers) = setup();
        let mut s = state_with(&keys, 10);
        let mut t = Transfer::signed(&keys[0], keys[1].peer_id(), 5, 1).unwrap();
        t.signature[0] ^= 1;
        let before = s.accounts.clone();
        assert_eq!(
            apply_finalised_transfer(&t.encode(), &mut s, &peers, &suite),
            ApplyOutcome::Rejected(Rejection::Signature)
        );
        assert_eq!(s.accounts, before);
        assert_ne!(s.history, Digest::ZERO);
    }

    #[test]
    fn check_order_is_signature_nonce_funds() {
        let (suite, keys, peers) = setup();
        let mut s = state_with(&keys, 10);
        // Wrong nonce and too large: nonce reported first.
        let t = Transfer::signed(&keys[0], keys[1].peer_id(), 500, 7).unwrap();
        assert_eq!(
            apply_finalised_transfer(&t.encode(), &mut s, &peers, &suite),
            ApplyOutcome::Rejected(Rejection::Nonce)
        );
        // Forged and wrong nonce: signature reported first.
        let mut f = t.clone();
        f.amount = 1;
        assert_eq!(
            apply_finalised_transfer(&f.encode(), &mut s, &peers, &suite),
            ApplyOutcome::Rejected(Rejection::Signature)
        );
        assert_eq!(
            apply_finalised_transfer(b"tx\0\0", &mut s, &peers, &suite),
            ApplyOutcome::Rejected(Rejection::Malformed)
        );
    }

    #[test]
    fn digest_tracks_state() {
        let (suite, keys, _) = setup();
        let a = state_with(&keys, 10);
        let mut b = a.clone();
        assert_eq!(ledger_digest(&a, &suite), ledger_digest(&b, &suite));
        b.accounts.get_mut(&keys[2].peer_id()).unwrap().balance = 11;
        assert_ne!(ledger_digest(&a, &suite), ledger_digest(&b, &suite));
    }

    #[test]
    fn genesis_roundtrip() {
        let (_, keys, _) = setup();
        let g: BTreeMap<_, _> = keys.iter().enumerate().map(|(i, k)| (k.peer_id(), i as u64 * 7)).collect();
        assert_eq!(parse_genesis(&render_genesis(&g)).unwrap(), g);
        assert!(parse_genesis("zz 5").is_err());
        assert!(parse_genesis(&format!("{} 1 2", keys[0].peer_id().to_hex())).is_err());
    }
}
