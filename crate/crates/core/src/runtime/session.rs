//! Session driver: runs node actors over the simulated transport until every
//! node holds its output shares.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use super::node::{ComputeNode, NodeConfig, Phase};
use super::transport::SimTransport;
use super::{Endpoint, Message, MessageKind, Payload, RuntimeError};
use crate::mpc::{reconstruct, Circuit, Fe, MpcError, MpcParams, Share, TripleShare};

/// Name of the result party endpoint.
pub const CONSUMER: &str = "consumer";

/// The compute nodes of one session plus the transport connecting them.
pub struct Cluster {
    session_id: String,
    params: MpcParams,
    nodes: BTreeMap<u16, ComputeNode>,
    transport: SimTransport,
    party_inbox: BTreeMap<String, Vec<Message>>,
}

impl Cluster {
    pub fn new(session_id: &str, params: MpcParams, transport: SimTransport) -> Result<Self, RuntimeError> {
        params.validate()?;
        Ok(Cluster { session_id: session_id.into(), params, nodes: BTreeMap::new(), transport, party_inbox: BTreeMap::new() })
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn params(&self) -> &MpcParams {
        &self.params
    }

    pub fn start_node(&mut self, config: NodeConfig) -> Result<u16, RuntimeError> {
        let index = config.node_index;
        if self.nodes.contains_key(&index) {
            return Err(RuntimeError::DuplicateIndex(index));
        }
        if config.params != self.params {
            return Err(RuntimeError::Protocol("node parameters differ from the session"));
        }
        self.nodes.insert(index, ComputeNode::new(config)?);
        Ok(index)
    }

    pub fn node(&self, index: u16) -> Option<&ComputeNode> {
        self.nodes.get(&index)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &ComputeNode> {
        self.nodes.values()
    }

    pub fn transport(&self) -> &SimTransport {
        &self.transport
    }

    pub fn transport_mut(&mut self) -> &mut SimTransport {
        &mut self.transport
    }

    pub fn into_transport(self) -> SimTransport {
        self.transport
    }

    pub fn declare_inputs(&mut self, circuit: &Circuit) -> Result<(), RuntimeError> {
        let session_id = self.session_id.clone();
        self.nodes.values_mut().try_for_each(|n| n.declare_inputs(&session_id, circuit))
    }

    pub fn send(&mut self, msg: Message, at: u64) -> Result<(), RuntimeError> {
        self.transport.send(msg, at)
    }

    /// Messages delivered to an off-cluster party, in delivery order.
    pub fn take_party_messages(&mut self, party: &str) -> Vec<Message> {
        self.party_inbox.remove(party).unwrap_or_default()
    }

    /// Delivers queued messages until the transport is idle.
    pub fn pump(&mut self) -> Result<(), RuntimeError> {
        while let Some((msg, at)) = self.transport.next_delivery() {
            if at > self.transport.time_budget() {
                return Err(RuntimeError::Timeout { round: msg.round });
            }
            match &msg.to {
                Endpoint::Node(i) => {
                    let node = self.nodes.get_mut(i).ok_or(RuntimeError::UnknownNode(*i))?;
                    for out in node.handle(&msg, at)? {
                        self.transport.send(out, at)?;
                    }
                }
                Endpoint::Party(p) => self.party_inbox.entry(p.clone()).or_default().push(msg),
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Session {
    pub session_id: String,
    pub circuit: Circuit,
    pub params: MpcParams,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SessionOutput {
    /// Output-wire shares received by the result party, keyed by node.
    pub fragments: BTreeMap<u16, Vec<Share>>,
    pub rounds: u32,
    pub finished_at: u64,
}

/// Runs the circuit on provisioned nodes. `triples[i]` goes to node i+1.
pub fn execute_session(cluster: &mut Cluster, session: &Session, triples: Vec<Vec<TripleShare>>) -> Result<SessionOutput, RuntimeError> {
    if session.params != cluster.params || session.session_id != cluster.session_id {
        return Err(RuntimeError::Protocol("session does not match the cluster"));
    }
    if cluster.nodes.len() != session.params.n {
        return Err(RuntimeError::Protocol("cluster is missing nodes"));
    }
    if let Some(n) = cluster.nodes.values().find(|n| n.phase() != Phase::Provisioned) {
        return Err(RuntimeError::MissingInput { node: n.index() });
    }
    let needed = session.circuit.mul_count();
    if triples.len() != session.params.n {
        return Err(RuntimeError::TripleExhausted { node: 1, needed, available: 0 });
    }
    for (i, t) in triples.iter().enumerate() {
        if t.len() < needed {
            return Err(RuntimeError::TripleExhausted { node: i as u16 + 1, needed, available: t.len() });
        }
    }
    for (node, t) in cluster.nodes.values_mut().zip(triples) {
        node.load_triples(t)?;
    }
    let mut outgoing = Vec::new();
    for node in cluster.nodes.values_mut() {
        let at = node.local_time();
        outgoing.extend(node.start()?.into_iter().map(|m| (m, at)));
    }
    for (m, at) in outgoing {
        cluster.transport.send(m, at)?;
    }
    cluster.pump()?;
    let depth = session.circuit.mul_depth();
    if let Some(stuck) = cluster.nodes.values().find(|n| n.phase() != Phase::OutputReady) {
        cluster.transport.expire();
        let round = match stuck.phase() {
            Phase::Executing(r) => r,
            _ => 0,
        };
        return Err(RuntimeError::Timeout { round });
    }
    let output_round = depth + 1;
    let mut outgoing = Vec::new();
    for node in cluster.nodes.values_mut() {
        let at = node.local_time();
        let payload = Payload::Outputs(node.take_outputs()?);
        let msg = Message::new(&session.session_id, output_round, Endpoint::Node(node.index()), Endpoint::Party(CONSUMER.into()), MessageKind::OutputFragment, &payload)?;
        outgoing.push((msg, at));
    }
    for (m, at) in outgoing {
        cluster.transport.send(m, at)?;
    }
    cluster.pump()?;
    let mut fragments = BTreeMap::new();
    for msg in cluster.take_party_messages(CONSUMER) {
        let (Endpoint::Node(i), Payload::Outputs(shares)) = (&msg.from, msg.decode()?) else {
            return Err(RuntimeError::Protocol("unexpected message for the result party"));
        };
        if shares.iter().any(|s| s.share.node_index != *i) {
            return Err(RuntimeError::Protocol("output share from the wrong node"));
        }
        fragments.insert(*i, shares.into_iter().map(|s| s.share).collect());
    }
    Ok(SessionOutput { fragments, rounds: depth, finished_at: cluster.transport.clock() })
}

/// Reconstructs every output wire from the fragments of at least t+1 nodes.
pub fn open_outputs(fragments: &BTreeMap<u16, Vec<Share>>, params: &MpcParams) -> Result<Vec<Fe>, RuntimeError> {
    if fragments.len() < params.t + 1 {
        return Err(MpcError::InsufficientShares { needed: params.t + 1, got: fragments.len() }.into());
    }
    let width = fragments.values().next().map_or(0, Vec::len);
    if fragments.values().any(|f| f.len() != width) {
        return Err(RuntimeError::Protocol("nodes returned different output counts"));
    }
    (0..width)
        .map(|j| {
            let shares: Vec<Share> = fragments.values().map(|f| f[j]).collect();
            reconstruct(&shares, params).map_err(RuntimeError::from)
        })
        .collect()
}
