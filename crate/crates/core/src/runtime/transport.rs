//! In-process transport with declared per-link latency on a logical
//! millisecond clock.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{Endpoint, Message, MessageKind, RuntimeError};
use crate::catalog::LatencyMatrix;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    #[serde(flatten)]
    pub message: Message,
    pub sent_at: u64,
    pub delivered_at: u64,
}

#[derive(Clone, Debug)]
struct Envelope {
    deliver_at: u64,
    seq: u64,
    sent_at: u64,
    message: Message,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransportConfig {
    /// Node-to-node delays; position i is node i+1.
    pub latency: LatencyMatrix,
    /// Delay on any link touching an off-cluster party.
    pub party_latency_ms: u32,
    /// Simulated time after which an unfinished session times out.
    pub time_budget_ms: u64,
}

impl TransportConfig {
    pub fn uniform(n: usize, ms: u32) -> Self {
        TransportConfig { latency: LatencyMatrix::uniform(n, ms), party_latency_ms: ms, time_budget_ms: 60_000 }
    }
}

#[derive(Clone, Debug)]
pub struct SimTransport {
    config: TransportConfig,
    clock: u64,
    seq: u64,
    queue: Vec<Envelope>,
    transcript: Vec<TranscriptRecord>,
    sent_keys: BTreeSet<(alloc::string::String, u32, Endpoint, Endpoint, MessageKind)>,
    /// Nodes that crash: they stop sending from the given round on.
    crashed: BTreeMap<u16, u32>,
}

impl SimTransport {
    pub fn new(config: TransportConfig) -> Self {
        SimTransport {
            config,
            clock: 0,
            seq: 0,
            queue: Vec::new(),
            transcript: Vec::new(),
            sent_keys: BTreeSet::new(),
            crashed: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &TransportConfig {
        &self.config
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn time_budget(&self) -> u64 {
        self.config.time_budget_ms
    }

    /// Makes `node` silently drop everything it sends from `round` on.
    pub fn crash_node(&mut self, node: u16, round: u32) {
        self.crashed.insert(node, round);
    }

    pub fn latency(&self, from: &Endpoint, to: &Endpoint) -> u64 {
        match (from, to) {
            (Endpoint::Node(a), Endpoint::Node(b)) => {
                self.config.latency.get(*a as usize - 1, *b as usize - 1).unwrap_or(self.config.party_latency_ms) as u64
            }
            _ if from == to => 0,
            _ => self.config.party_latency_ms as u64,
        }
    }

    /// Queues `message`, sent at logical time `sent_at`.
    pub fn send(&mut self, message: Message, sent_at: u64) -> Result<(), RuntimeError> {
        if let Endpoint::Node(i) = message.from {
            if self.crashed.get(&i).is_some_and(|&r| message.round >= r) {
                return Ok(());
            }
        }
        if !self.sent_keys.insert(message.key()) {
            return Err(RuntimeError::Protocol("duplicate transmission"));
        }
        let deliver_at = sent_at + self.latency(&message.from, &message.to);
        self.seq += 1;
        self.queue.push(Envelope { deliver_at, seq: self.seq, sent_at, message });
        Ok(())
    }

    /// Removes and returns the next message by delivery time, advancing the
    /// clock. Ties are broken by send order, which keeps each link FIFO.
    pub fn next_delivery(&mut self) -> Option<(Message, u64)> {
        let (pos, _) = self.queue.iter().enumerate().min_by_key(|(_, e)| (e.deliver_at, e.seq))?;
        let env = self.queue.swap_remove(pos);
        self.clock = self.clock.max(env.deliver_at);
        self.transcript.push(TranscriptRecord { message: env.message.clone(), sent_at: env.sent_at, delivered_at: env.deliver_at });
        Some((env.message, env.deliver_at))
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Advances the clock to the end of the time budget.
    pub fn expire(&mut self) {
        self.clock = self.clock.max(self.config.time_budget_ms);
    }

    pub fn transcript(&self) -> &[TranscriptRecord] {
        &self.transcript
    }

    pub fn into_transcript(self) -> Vec<TranscriptRecord> {
        self.transcript
    }
}

/// Checks delivery timing and per-link FIFO order of a transcript.
pub fn check_transcript_timing(transport_cfg: &TransportConfig, transcript: &[TranscriptRecord]) -> bool {
    let probe = SimTransport::new(transport_cfg.clone());
    let mut last: BTreeMap<(Endpoint, Endpoint), (u64, u64)> = BTreeMap::new();
    for r in transcript {
        let m = &r.message;
        if r.delivered_at != r.sent_at + probe.latency(&m.from, &m.to) {
            return false;
        }
        let link = (m.from.clone(), m.to.clone());
        if let Some(&(sent, delivered)) = last.get(&link) {
            if r.sent_at < sent || r.delivered_at < delivered {
                return false;
            }
        }
        last.insert(link, (r.sent_at, r.delivered_at));
    }
    true
}
