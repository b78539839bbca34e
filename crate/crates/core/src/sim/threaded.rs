//! One thread pair per node (heartbeat and server) exchanging wire bytes
//! over channels. Interleavings depend on the OS scheduler, so runs are not
//! replayable; the agreement check still applies.

use std::collections::HashMap;
use std::sync::mpsc::{channel, Sender};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use crate::consensus::{Engine, FinalOrder};
use crate::crypto::{CryptoSuite, Sha256Ed25519};
use crate::error::{Error, Result};
use crate::gossip::{heartbeat_step, Transport};
use crate::model::PeerId;

use super::audit::{audit_invariants, check_agreement, Agreement, Violation};
use super::config::SimConfig;
use super::run::{engine_config, sim_network};

type Envelope = (Vec<u8>, Sender<Result<Vec<u8>>>);

/// In-process request/reply channels keyed by peer.
pub struct ChannelTransport {
    inboxes: HashMap<PeerId, Sender<Envelope>>,
}

impl Transport for ChannelTransport {
    fn exchange(&self, to: &PeerId, request: Vec<u8>) -> Result<Vec<u8>> {
        let inbox = self.inboxes.get(to).ok_or(Error::UnknownPeer(*to))?;
        let (reply_tx, reply_rx) = channel();
        inbox
            .send((request, reply_tx))
            .map_err(|_| Error::Transport(format!("peer {to} is not serving")))?;
        reply_rx
            .recv()
            .map_err(|_| Error::Transport(format!("peer {to} dropped the exchange")))?
    }
}

#[derive(Debug)]
pub struct ThreadedReport {
    pub finalised_logs: Vec<Vec<FinalOrder>>,
    pub agreement: Agreement,
    pub violations: Vec<Violation>,
    pub failed_exchanges: u64,
}

/// Runs `rounds` heartbeats per node on real threads. Uses the network
/// shape, selectors and injection rate of `cfg`; delays come from the OS.
pub fn run_threaded(cfg: &SimConfig, rounds: u64) -> Result<ThreadedReport> {
    cfg.validate()?;
    let suite: Arc<dyn CryptoSuite> = Sha256Ed25519::shared();
    let (keys, peers) = sim_network(suite.as_ref(), cfg.n_nodes, cfg.rng_seed)?;
    let engines: Vec<Arc<Mutex<Engine>>> = keys
        .into_iter()
        .enumerate()
        .map(|(i, k)| {
            Engine::new(k, peers.clone(), suite.clone(), engine_config(cfg, i)).map(|e| Arc::new(Mutex::new(e)))
        })
        .collect::<Result<_>>()?;

    let mut inboxes = HashMap::new();
    let mut servers = Vec::new();
    for engine in &engines {
        let (tx, rx) = channel::<Envelope>();
        inboxes.insert(engine.lock().unwrap().id(), tx);
        let engine = engine.clone();
        servers.push(thread::spawn(move || {
            while let Ok((request, reply)) = rx.recv() {
                let answer = engine.lock().unwrap().handle_request_bytes(&request);
                let _ = reply.send(answer);
            }
        }));
    }
    let transport = Arc::new(ChannelTransport { inboxes });

    let tx_every = if cfg.tx_injection_rate > 0.0 {
        ((cfg.heartbeat as f64) / (cfg.tx_injection_rate * cfg.n_nodes as f64)).max(1.0) as u64
    } else {
        0
    };
    let workers: Vec<_> = engines
        .iter()
        .enumerate()
        .map(|(i, engine)| {
            let engine = engine.clone();
            let transport = transport.clone();
            thread::spawn(move || {
                let mut failed = 0u64;
                for round in 0..rounds {
                    if tx_every > 0 && round % tx_every == 0 {
                        let mut tx = format!("thr{i}:").into_bytes();
                        tx.extend_from_slice(&round.to_be_bytes());
                        engine.lock().unwrap().submit_transaction(tx);
                    }
                    if let Err(err) = heartbeat_step(&engine, transport.as_ref()) {
                        tracing::warn!(node = i, %err, "exchange failed");
                        failed += 1;
                    }
                    if round % 8 == 0 {
                        thread::sleep(Duration::from_micros(50));
                    }
                }
                failed
            })
        })
        .collect();

    let mut failed_exchanges = 0;
    for w in workers {
        failed_exchanges += w.join().map_err(|_| Error::Transport("heartbeat thread panicked".into()))?;
    }
    drop(transport);
    for s in servers {
        s.join().map_err(|_| Error::Transport("server thread panicked".into()))?;
    }

    let guards: Vec<_> = engines.iter().map(|e| e.lock().unwrap()).collect();
    let finalised_logs: Vec<Vec<FinalOrder>> = guards.iter().map(|g| g.finalised_log().to_vec()).collect();
    let refs: Vec<&Engine> = guards.iter().map(|g| &**g).collect();
    Ok(ThreadedReport {
        agreement: check_agreement(&finalised_logs),
        violations: audit_invariants(&refs),
        finalised_logs,
        failed_exchanges,
    })
}
