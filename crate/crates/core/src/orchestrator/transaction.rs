//! Running a signed contract: provisioning, execution and output delivery.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::contract::{contract_circuit, release_check, ContractStatus, ExecutionParams, SignedContract};
use super::{AuditKind, DataSpace, OrchestratorError};
use crate::canonical::digest_of;
use crate::catalog::{EncodingMode, LatencyMatrix};
use crate::mpc::{deal_triples, Circuit, Fe, Field, MpcParams, WireId};
use crate::provisioning::{
    dispatches_to_messages, provision_synchronous, release_immediate, release_late, Dispatch, ReleaseOrder,
    ReleaseValidator,
};
use crate::runtime::{
    execute_session, he_encrypt, he_eval, he_threshold_decrypt, open_outputs, partial_decrypt, Cluster, Endpoint,
    HeKeyMaterial, InputPart, Message, MessageKind, NodeConfig, PartValue, Payload, Phase, RuntimeError, Session,
    SimTransport, TranscriptRecord, TransportConfig, CONSUMER,
};

/// What the consumer receives from a successful transaction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransactionResult {
    pub contract_id: String,
    pub outputs: Vec<u64>,
    /// Indices of the audit entries this transaction appended.
    pub audit_indices: Vec<u64>,
    pub transcript_digest: String,
    pub transcript: Vec<TranscriptRecord>,
    pub rounds: u32,
    pub message_count: usize,
}

/// Contract-backed release authorization, evaluated once per transaction.
struct ContractValidator {
    check: Result<(), Vec<String>>,
    session_id: String,
    params: MpcParams,
    node_keys: Vec<String>,
    wires: BTreeMap<String, Vec<WireId>>,
}

impl ContractValidator {
    fn order(&self, wires: Vec<WireId>) -> Result<ReleaseOrder, Vec<String>> {
        self.check.clone()?;
        Ok(ReleaseOrder { session_id: self.session_id.clone(), params: self.params, node_keys: self.node_keys.clone(), wires })
    }
}

impl ReleaseValidator for ContractValidator {
    fn authorize(&self, handle_id: &str) -> Result<ReleaseOrder, Vec<String>> {
        let wires = self.wires.get(handle_id).ok_or_else(|| alloc::vec![String::from("HANDLE_NOT_IN_CONTRACT")])?;
        self.order(wires.clone())
    }
}

struct Executed {
    outputs: Vec<u64>,
    transcript: Vec<TranscriptRecord>,
    rounds: u32,
}

impl DataSpace {
    /// Runs a signed contract to completion. Success appends
    /// INPUTS_PROVISIONED, EXECUTION_STARTED and OUTPUT_DELIVERED; any
    /// failure after the start appends TRANSACTION_FAILED and marks the
    /// contract failed.
    pub fn run_transaction(&mut self, contract_id: &str) -> Result<TransactionResult, OrchestratorError> {
        let contract = self.contracts.get(contract_id).cloned().ok_or_else(|| OrchestratorError::UnknownContract(contract_id.into()))?;
        if contract.status != ContractStatus::Signed {
            return Err(OrchestratorError::ContractNotSigned);
        }
        let first = self.audit.len() as u64;
        let mut rng = self.rng();
        let run = match contract.params {
            ExecutionParams::Mpc(params) => self.execute_mpc(&contract, params, &mut rng),
            ExecutionParams::HeMode => self.execute_he(&contract, &mut rng),
        };
        let status;
        let result = match run {
            Ok(done) => {
                let transcript_digest = digest_of(&done.transcript);
                let payload = json!({
                    "contract_id": contract_id,
                    "output_digest": digest_of(&done.outputs),
                    "transcript_digest": transcript_digest,
                    "price": null,
                });
                self.record(AuditKind::OutputDelivered, &payload);
                status = ContractStatus::Executed;
                Ok(TransactionResult {
                    contract_id: contract_id.into(),
                    outputs: done.outputs,
                    audit_indices: Vec::new(),
                    transcript_digest,
                    message_count: done.transcript.len(),
                    transcript: done.transcript,
                    rounds: done.rounds,
                })
            }
            Err(e) => {
                let payload = Self::fail_payload(contract_id, &e);
                self.record(AuditKind::TransactionFailed, &payload);
                status = ContractStatus::Failed;
                Err(OrchestratorError::TransactionFailed { code: e.code().to_string(), detail: format!("{e}") })
            }
        };
        if let Some(c) = self.contracts.get_mut(contract_id) {
            c.status = status;
        }
        let indices = (first..self.audit.len() as u64).collect();
        result.map(|mut r| {
            r.audit_indices = indices;
            r
        })
    }

    fn input_value(&self, offer_id: &str) -> Result<u64, OrchestratorError> {
        self.private_inputs.get(offer_id).copied().ok_or_else(|| OrchestratorError::MissingInput(offer_id.into()))
    }

    fn execute_mpc(&mut self, contract: &SignedContract, params: MpcParams, rng: &mut ChaCha20Rng) -> Result<Executed, OrchestratorError> {
        let circuit = contract_circuit(&self.catalog, &contract.proposal, &self.fingerprint)?;
        let mut node_keys = Vec::with_capacity(params.n);
        for id in &contract.resolved_nodes {
            let node = self.catalog.get(id).and_then(|o| o.node()).ok_or_else(|| OrchestratorError::UnknownOffer(id.clone()))?;
            node_keys.push(node.encryption_key.clone());
        }
        let check = release_check(contract, &self.negotiation_context(), &self.orchestrator_key());
        let mut validator = ContractValidator {
            check,
            session_id: contract.contract_id.clone(),
            params,
            node_keys: node_keys.clone(),
            wires: BTreeMap::new(),
        };

        let config = TransportConfig {
            latency: self.latency.matrix(&contract.resolved_nodes),
            party_latency_ms: self.party_latency_ms,
            time_budget_ms: self.time_budget_ms,
        };
        let mut cluster = Cluster::new(&contract.contract_id, params, SimTransport::new(config))?;
        for (&node, &round) in &self.faults.crash {
            cluster.transport_mut().crash_node(node, round);
        }
        for (i, key) in node_keys.iter().enumerate() {
            let encryption = self.encryption_keys.get(key).cloned();
            cluster.start_node(NodeConfig { node_index: i as u16 + 1, params, encryption })?;
        }
        cluster.declare_inputs(&circuit)?;

        let mut dispatches: Vec<Dispatch> = Vec::new();
        let mut provisioned = Vec::new();
        for (j, offer_id) in contract.proposal.dataset_offer_ids.iter().enumerate() {
            let dataset = self.catalog.get(offer_id).and_then(|o| o.dataset()).ok_or_else(|| OrchestratorError::UnknownOffer(offer_id.clone()))?;
            let wires = circuit.input_wires(j);
            provisioned.push(json!({"offer_id": offer_id, "mode": dataset.encoding_mode}));
            match dataset.encoding_mode {
                EncodingMode::Synchronous => {
                    let value = self.input_value(offer_id)?;
                    let party = Endpoint::Party(format!("input:{}", dataset.owner.short()));
                    dispatches.extend(provision_synchronous(party, value, circuit.input_kind, validator.order(wires), rng)?);
                }
                mode => {
                    let handle = dataset.handle_id.clone().ok_or_else(|| OrchestratorError::MissingInput(offer_id.clone()))?;
                    validator.wires.insert(handle.clone(), wires);
                    let custodian = self.custodian.as_mut().ok_or(OrchestratorError::NoCustodian)?;
                    if mode == EncodingMode::Immediate {
                        dispatches.extend(release_immediate(custodian, &handle, &validator)?);
                    } else {
                        let committee = self.committee.as_ref().ok_or(crate::provisioning::ProvisioningError::NoCommittee)?;
                        dispatches.extend(release_late(custodian, &handle, &validator, committee, rng)?);
                    }
                }
            }
        }
        let messages = dispatches_to_messages(&contract.contract_id, dispatches)?;
        let message_count = messages.len();
        for m in messages {
            cluster.send(m, 0)?;
        }
        cluster.pump()?;
        if let Some(node) = cluster.nodes().find(|n| n.phase() != Phase::Provisioned) {
            return Err(RuntimeError::MissingInput { node: node.index() }.into());
        }
        let payload = json!({"contract_id": contract.contract_id, "datasets": provisioned, "messages": message_count});
        self.record(AuditKind::InputsProvisioned, &payload);

        let triples = deal_triples(circuit.mul_count(), &params, rng)?;
        let payload = json!({
            "contract_id": contract.contract_id,
            "template": circuit.template,
            "nodes": contract.resolved_nodes,
            "mul_gates": circuit.mul_count(),
            "mul_rounds": circuit.mul_depth(),
            "dealer": self.orchestrator_id(),
        });
        self.record(AuditKind::ExecutionStarted, &payload);

        let session = Session { session_id: contract.contract_id.clone(), circuit, params };
        let out = execute_session(&mut cluster, &session, triples)?;
        let outputs = open_outputs(&out.fragments, &params)?;
        Ok(Executed {
            outputs: outputs.iter().map(|f| f.value()).collect(),
            transcript: cluster.into_transport().into_transcript(),
            rounds: out.rounds,
        })
    }

    fn execute_he(&mut self, contract: &SignedContract, rng: &mut ChaCha20Rng) -> Result<Executed, OrchestratorError> {
        let circuit: Circuit = contract_circuit(&self.catalog, &contract.proposal, &self.fingerprint)?;
        let field = Field::new(self.fingerprint.modulus)?;
        let committee = self.committee.clone().ok_or(crate::provisioning::ProvisioningError::NoCommittee)?;
        let release = release_check(contract, &self.negotiation_context(), &self.orchestrator_key());
        release.map_err(crate::provisioning::ProvisioningError::ContractInvalid)?;

        let mut key = HeKeyMaterial::generate(&field, Some(committee.members.len()), rng)?;
        let fragments = key.fragments()?;
        let sid = contract.contract_id.as_str();
        let config = TransportConfig {
            latency: LatencyMatrix::uniform(1, 0),
            party_latency_ms: self.party_latency_ms,
            time_budget_ms: self.time_budget_ms,
        };
        let mut transport = SimTransport::new(config);

        let mut provisioned = Vec::new();
        for (j, offer_id) in contract.proposal.dataset_offer_ids.iter().enumerate() {
            let dataset = self.catalog.get(offer_id).and_then(|o| o.dataset()).ok_or_else(|| OrchestratorError::UnknownOffer(offer_id.clone()))?;
            let value = self.input_value(offer_id)?;
            let m = field.try_elem(value).ok_or(crate::mpc::MpcError::OutOfRange { value, limit: field.modulus() - 1 })?;
            let ct = he_encrypt(m, &mut key, j as u64)?;
            let wire = circuit.input_wires(j)[0];
            let payload = Payload::Inputs(alloc::vec![InputPart { wire, parts_expected: 1, part: PartValue::Cipher(ct) }]);
            let from = Endpoint::Party(format!("input:{}:{j}", dataset.owner.short()));
            transport.send(Message::new(sid, 0, from, Endpoint::Node(1), MessageKind::InputShare, &payload)?, 0)?;
            provisioned.push(json!({"offer_id": offer_id, "mode": dataset.encoding_mode}));
        }

        let mut cts: Vec<Option<crate::runtime::HeCiphertext>> = alloc::vec![None; circuit.arity];
        let mut now = 0;
        while let Some((msg, at)) = transport.next_delivery() {
            now = at;
            if let Payload::Inputs(parts) = msg.decode()? {
                for part in parts {
                    let party = circuit.gates.iter().enumerate().find_map(|(w, g)| match g {
                        crate::mpc::Gate::Input { party, .. } if w as WireId == part.wire => Some(*party),
                        _ => None,
                    });
                    match (party, part.part) {
                        (Some(j), PartValue::Cipher(ct)) => cts[j] = Some(ct),
                        _ => return Err(RuntimeError::Protocol("unexpected input part").into()),
                    }
                }
            }
        }
        let cts: Vec<_> = cts.into_iter().collect::<Option<_>>().ok_or(RuntimeError::MissingInput { node: 1 })?;
        let payload = json!({"contract_id": sid, "datasets": provisioned, "messages": transport.transcript().len()});
        self.record(AuditKind::InputsProvisioned, &payload);
        let payload = json!({
            "contract_id": sid,
            "template": circuit.template,
            "nodes": contract.resolved_nodes,
            "backend": "mock-he",
            "committee": committee.ids(),
        });
        self.record(AuditKind::ExecutionStarted, &payload);

        let outputs = he_eval(&circuit, &cts, &field)?;
        for member in &committee.members {
            let msg = Message::new(sid, 1, Endpoint::Node(1), member.endpoint(), MessageKind::OutputFragment, &Payload::CipherOutputs(outputs.clone()))?;
            transport.send(msg, now)?;
        }
        let mut partials: Vec<Vec<Option<Fe>>> = alloc::vec![alloc::vec![None; committee.members.len()]; outputs.len()];
        while let Some((msg, at)) = transport.next_delivery() {
            if at > transport.time_budget() {
                return Err(RuntimeError::Timeout { round: msg.round }.into());
            }
            match (&msg.to, msg.decode()?) {
                (Endpoint::Party(p), Payload::CipherOutputs(cs)) => {
                    let pos = committee.members.iter().position(|m| m.endpoint() == msg.to).ok_or(RuntimeError::Protocol("unknown committee member"))?;
                    if !committee.members[pos].online {
                        continue;
                    }
                    let ps: Vec<Fe> = cs.iter().map(|c| partial_decrypt(c, fragments[pos], &field)).collect();
                    let reply = Message::new(sid, 2, Endpoint::Party(p.clone()), Endpoint::Party(CONSUMER.into()), MessageKind::OutputFragment, &Payload::Partials(ps))?;
                    transport.send(reply, at)?;
                }
                (_, Payload::Partials(ps)) => {
                    let pos = committee.members.iter().position(|m| m.endpoint() == msg.from).ok_or(RuntimeError::Protocol("unknown committee member"))?;
                    for (slot, p) in partials.iter_mut().zip(ps) {
                        slot[pos] = Some(p);
                    }
                }
                _ => return Err(RuntimeError::Protocol("unexpected message").into()),
            }
        }
        let values = outputs
            .iter()
            .zip(&partials)
            .map(|(ct, ps)| he_threshold_decrypt(ct, ps, &field).map(|v| v.value()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Executed { outputs: values, transcript: transport.into_transcript(), rounds: 0 })
    }
}
