//! Compute-node state machine for round-synchronous Beaver evaluation.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::seal::EncryptionKeyPair;
use super::{Endpoint, InputPart, Message, MessageKind, Opening, OutputShare, PartValue, Payload, RuntimeError};
use crate::mpc::{beaver_combine, opening_fragments, reconstruct, Circuit, Fe, Field, Gate, MpcParams, Share, TripleShare, WireId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    Idle,
    Provisioned,
    /// Waiting for the openings of this MUL round.
    Executing(u32),
    OutputReady,
    Done,
}

#[derive(Clone)]
pub struct NodeConfig {
    pub node_index: u16,
    pub params: MpcParams,
    /// Key for opening sealed shares from a custodian.
    pub encryption: Option<EncryptionKeyPair>,
}

#[derive(Clone, Copy, Debug)]
struct PendingInput {
    expected: Option<u32>,
    received: u32,
    acc: Fe,
}

pub struct ComputeNode {
    index: u16,
    params: MpcParams,
    field: Field,
    encryption: Option<EncryptionKeyPair>,
    session_id: String,
    phase: Phase,
    circuit: Option<Circuit>,
    layers: Vec<u32>,
    depth: u32,
    pending_inputs: BTreeMap<WireId, PendingInput>,
    wire_shares: BTreeMap<WireId, Share>,
    triple_pool: VecDeque<TripleShare>,
    assigned: BTreeMap<WireId, TripleShare>,
    own_openings: BTreeMap<WireId, (Fe, Fe)>,
    inbox: BTreeMap<u32, BTreeMap<u16, Vec<Opening>>>,
    completed_rounds: Vec<u32>,
    local_time: u64,
}

impl ComputeNode {
    pub fn new(config: NodeConfig) -> Result<Self, RuntimeError> {
        let field = config.params.validate()?;
        if config.node_index == 0 || config.node_index as usize > config.params.n {
            return Err(RuntimeError::UnknownNode(config.node_index));
        }
        Ok(ComputeNode {
            index: config.node_index,
            params: config.params,
            field,
            encryption: config.encryption,
            session_id: String::new(),
            phase: Phase::Idle,
            circuit: None,
            layers: Vec::new(),
            depth: 0,
            pending_inputs: BTreeMap::new(),
            wire_shares: BTreeMap::new(),
            triple_pool: VecDeque::new(),
            assigned: BTreeMap::new(),
            own_openings: BTreeMap::new(),
            inbox: BTreeMap::new(),
            completed_rounds: Vec::new(),
            local_time: 0,
        })
    }

    pub fn index(&self) -> u16 {
        self.index
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn local_time(&self) -> u64 {
        self.local_time
    }

    /// MUL rounds completed, in processing order.
    pub fn completed_rounds(&self) -> &[u32] {
        &self.completed_rounds
    }

    pub fn wire_share(&self, wire: WireId) -> Option<Share> {
        self.wire_shares.get(&wire).copied()
    }

    pub fn triples_available(&self) -> usize {
        self.triple_pool.len()
    }

    fn advance(&mut self, to: Phase) -> Result<(), RuntimeError> {
        if to <= self.phase {
            return Err(RuntimeError::Protocol("phase transitions only move forward"));
        }
        self.phase = to;
        Ok(())
    }

    /// Binds the node to a session and declares which input wires it waits for.
    pub fn declare_inputs(&mut self, session_id: &str, circuit: &Circuit) -> Result<(), RuntimeError> {
        if self.phase != Phase::Idle || self.circuit.is_some() {
            return Err(RuntimeError::Protocol("inputs can only be declared once, before provisioning"));
        }
        circuit.validate()?;
        self.session_id = session_id.into();
        self.layers = circuit.mul_layers();
        self.depth = circuit.mul_depth();
        for (i, g) in circuit.gates.iter().enumerate() {
            if matches!(g, Gate::Input { .. }) {
                self.pending_inputs.insert(i as WireId, PendingInput { expected: None, received: 0, acc: Fe::ZERO });
            }
        }
        self.circuit = Some(circuit.clone());
        Ok(())
    }

    pub fn load_triples(&mut self, triples: Vec<TripleShare>) -> Result<(), RuntimeError> {
        if triples.iter().any(|t| t.node_index != self.index) {
            return Err(RuntimeError::Protocol("triple share addressed to another node"));
        }
        self.triple_pool.extend(triples);
        Ok(())
    }

    /// Processes one delivered message and returns the messages it triggers.
    pub fn handle(&mut self, msg: &Message, now: u64) -> Result<Vec<Message>, RuntimeError> {
        if msg.to != Endpoint::Node(self.index) || msg.session_id != self.session_id {
            return Err(RuntimeError::Protocol("misaddressed message"));
        }
        self.local_time = self.local_time.max(now);
        match (msg.kind, msg.decode()?) {
            (MessageKind::InputShare | MessageKind::Control, Payload::Inputs(parts)) => {
                self.accept_inputs(&parts)?;
                Ok(Vec::new())
            }
            (MessageKind::BeaverOpen, Payload::Openings(openings)) => {
                let Endpoint::Node(from) = msg.from else {
                    return Err(RuntimeError::Protocol("openings must come from a node"));
                };
                if !matches!(self.phase, Phase::Executing(r) if msg.round >= r) {
                    return Err(RuntimeError::Protocol("opening outside the current execution"));
                }
                // Later rounds wait in the inbox until this round completes.
                self.inbox.entry(msg.round).or_default().insert(from, openings);
                self.progress()
            }
            _ => Err(RuntimeError::Protocol("unexpected message kind")),
        }
    }

    fn accept_inputs(&mut self, parts: &[InputPart]) -> Result<(), RuntimeError> {
        if self.phase != Phase::Idle {
            return Err(RuntimeError::Protocol("inputs after provisioning completed"));
        }
        for part in parts {
            let value = match &part.part {
                PartValue::Share(s) if s.node_index == self.index => s.value,
                PartValue::Public(v) => *v,
                PartValue::Sealed { sender_key, blob } => {
                    let key = self.encryption.as_ref().ok_or(RuntimeError::Seal)?;
                    let plain = key.open(sender_key, blob).ok_or(RuntimeError::Seal)?;
                    let share: Share = serde_json::from_slice(&plain).map_err(|_| RuntimeError::Seal)?;
                    if share.node_index != self.index {
                        return Err(RuntimeError::Seal);
                    }
                    share.value
                }
                _ => return Err(RuntimeError::Protocol("input part not usable by this node")),
            };
            if value.value() >= self.field.modulus() {
                return Err(RuntimeError::Protocol("input part outside the field"));
            }
            let slot = self.pending_inputs.get_mut(&part.wire).ok_or(RuntimeError::Protocol("part for an undeclared wire"))?;
            match slot.expected {
                None => slot.expected = Some(part.parts_expected),
                Some(e) if e != part.parts_expected => return Err(RuntimeError::Protocol("inconsistent part count")),
                Some(_) => {}
            }
            slot.received += 1;
            slot.acc = self.field.add(slot.acc, value);
            if slot.received > part.parts_expected {
                return Err(RuntimeError::Protocol("too many parts for a wire"));
            }
        }
        if self.pending_inputs.values().all(|p| p.expected == Some(p.received)) {
            let index = self.index;
            for (&w, p) in &self.pending_inputs {
                self.wire_shares.insert(w, Share { node_index: index, value: p.acc });
            }
            self.advance(Phase::Provisioned)?;
        }
        Ok(())
    }

    /// Starts execution: assigns triples, evaluates the linear prefix and
    /// emits the first round of openings.
    pub fn start(&mut self) -> Result<Vec<Message>, RuntimeError> {
        if self.phase != Phase::Provisioned {
            return Err(RuntimeError::MissingInput { node: self.index });
        }
        let circuit = self.circuit.as_ref().expect("declared before provisioning");
        let muls: Vec<WireId> =
            circuit.gates.iter().enumerate().filter(|(_, g)| matches!(g, Gate::Mul { .. })).map(|(i, _)| i as WireId).collect();
        if self.triple_pool.len() < muls.len() {
            return Err(RuntimeError::TripleExhausted { node: self.index, needed: muls.len(), available: self.triple_pool.len() });
        }
        for w in muls {
            let t = self.triple_pool.pop_front().expect("checked above");
            self.assigned.insert(w, t);
        }
        self.evaluate_linear(0)?;
        if self.depth == 0 {
            self.advance(Phase::OutputReady)?;
            return Ok(Vec::new());
        }
        self.advance(Phase::Executing(1))?;
        self.emit_openings(1)
    }

    fn evaluate_linear(&mut self, layer: u32) -> Result<(), RuntimeError> {
        let circuit = self.circuit.as_ref().expect("declared");
        let f = self.field;
        for (i, gate) in circuit.gates.iter().enumerate() {
            if self.layers[i] != layer || matches!(gate, Gate::Mul { .. } | Gate::Input { .. }) {
                continue;
            }
            let get = |w: WireId| self.wire_shares.get(&w).map(|s| s.value).ok_or(RuntimeError::Protocol("wire read before write"));
            let value = match *gate {
                Gate::Const { value } => f.elem(value.value()),
                Gate::Add { a, b } => f.add(get(a)?, get(b)?),
                Gate::Sub { a, b } => f.sub(get(a)?, get(b)?),
                Gate::CMul { a, k } => f.mul(get(a)?, f.elem(k.value())),
                Gate::Output { a, .. } => get(a)?,
                Gate::Mul { .. } | Gate::Input { .. } => unreachable!(),
            };
            self.wire_shares.insert(i as WireId, Share { node_index: self.index, value });
        }
        Ok(())
    }

    fn emit_openings(&mut self, round: u32) -> Result<Vec<Message>, RuntimeError> {
        let circuit = self.circuit.as_ref().expect("declared");
        let mut openings = Vec::new();
        for (i, gate) in circuit.gates.iter().enumerate() {
            let Gate::Mul { a, b } = *gate else { continue };
            if self.layers[i] != round {
                continue;
            }
            let x = self.wire_shares[&a];
            let y = self.wire_shares[&b];
            let (d, e) = opening_fragments(&x, &y, &self.assigned[&(i as WireId)], &self.params)?;
            self.own_openings.insert(i as WireId, (d, e));
            openings.push(Opening { gate: i as WireId, d, e });
        }
        let payload = Payload::Openings(openings);
        (1..=self.params.n as u16)
            .filter(|&j| j != self.index)
            .map(|j| Message::new(&self.session_id, round, Endpoint::Node(self.index), Endpoint::Node(j), MessageKind::BeaverOpen, &payload))
            .collect()
    }

    fn progress(&mut self) -> Result<Vec<Message>, RuntimeError> {
        let mut out = Vec::new();
        while let Phase::Executing(round) = self.phase {
            let ready = self.inbox.get(&round).is_some_and(|m| m.len() == self.params.n - 1);
            if !ready {
                break;
            }
            let received = self.inbox.remove(&round).expect("checked");
            self.complete_round(round, &received)?;
            if round == self.depth {
                self.advance(Phase::OutputReady)?;
            } else {
                self.advance(Phase::Executing(round + 1))?;
                out.extend(self.emit_openings(round + 1)?);
            }
        }
        Ok(out)
    }

    fn complete_round(&mut self, round: u32, received: &BTreeMap<u16, Vec<Opening>>) -> Result<(), RuntimeError> {
        let gates: Vec<WireId> = self.own_openings.keys().copied().collect();
        // Fragments from the t+1 lowest node indices, this node's own included.
        let mut contributors: Vec<u16> = received.keys().copied().chain(core::iter::once(self.index)).collect();
        contributors.sort_unstable();
        contributors.truncate(self.params.t + 1);
        for gate in gates {
            let mut d_frags = Vec::with_capacity(contributors.len());
            let mut e_frags = Vec::with_capacity(contributors.len());
            for &c in &contributors {
                let (d, e) = if c == self.index {
                    self.own_openings[&gate]
                } else {
                    let o = received[&c].iter().find(|o| o.gate == gate).ok_or(RuntimeError::Protocol("missing opening"))?;
                    (o.d, o.e)
                };
                d_frags.push(Share { node_index: c, value: d });
                e_frags.push(Share { node_index: c, value: e });
            }
            let d = reconstruct(&d_frags, &self.params)?;
            let e = reconstruct(&e_frags, &self.params)?;
            let circuit = self.circuit.as_ref().expect("declared");
            let Gate::Mul { a, b } = circuit.gates[gate as usize] else { unreachable!() };
            let z = beaver_combine(&self.wire_shares[&a], &self.wire_shares[&b], &self.assigned[&gate], d, e, self.index, &self.params)?;
            self.wire_shares.insert(gate, z);
        }
        self.own_openings.clear();
        self.completed_rounds.push(round);
        self.evaluate_linear(round)
    }

    /// Hands out this node's output-wire shares and finishes the session.
    pub fn take_outputs(&mut self) -> Result<Vec<OutputShare>, RuntimeError> {
        if self.phase != Phase::OutputReady {
            return Err(RuntimeError::Protocol("outputs requested before they are ready"));
        }
        let circuit = self.circuit.as_ref().expect("declared");
        let shares = circuit.output_wires().into_iter().map(|w| OutputShare { wire: w, share: self.wire_shares[&w] }).collect();
        self.advance(Phase::Done)?;
        Ok(shares)
    }
}
