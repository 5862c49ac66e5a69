//! Contract proposals, node resolution, automatic negotiation and contract
//! verification.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::selection::select_nodes;
use super::{LatencyTable, OrchestratorError, ParameterFingerprint};
use crate::canonical::{b64, digest_of};
use crate::catalog::{
    check_node_constraints, evaluate_policy, AssetKind, AssetOffer, Catalog, ConstraintCheck, DenyReason, MaxUses,
    NodeConstraint, NodeDescriptor, PolicyDecision, Protocol, RequestContext, UsagePolicy,
};
use crate::identity::{AttributeSet, KeyPair, ParticipantId, ParticipantRegistry, VerifyKey};
use crate::mpc::{compile_function, Circuit, FunctionSpec, MpcParams};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NodeSelection {
    /// Let the orchestrator pick, subject to extra constraints.
    Auto { constraints: Vec<NodeConstraint> },
    Explicit(Vec<String>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ExecutionParams {
    Mpc(MpcParams),
    /// Single-node evaluation on the additive mock-HE backend.
    HeMode,
}

impl ExecutionParams {
    pub fn node_count(&self) -> usize {
        match self {
            ExecutionParams::Mpc(p) => p.n,
            ExecutionParams::HeMode => 1,
        }
    }

    /// Privacy threshold, `None` for single-node HE.
    pub fn threshold(&self) -> Option<usize> {
        match self {
            ExecutionParams::Mpc(p) => Some(p.t),
            ExecutionParams::HeMode => None,
        }
    }

    pub fn protocol(&self) -> Protocol {
        match self {
            ExecutionParams::Mpc(_) => Protocol::ShamirMpcV1,
            ExecutionParams::HeMode => Protocol::MockHeV1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractProposal {
    pub consumer: ParticipantId,
    pub dataset_offer_ids: Vec<String>,
    pub function_offer_id: String,
    pub node_offer_ids: NodeSelection,
    pub requested_params: ExecutionParams,
    pub created_at: u64,
}

/// A proposal whose offers exist and whose node list is fixed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedProposal {
    pub proposal: ContractProposal,
    pub resolved_nodes: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ContractStatus {
    Signed,
    Executed,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Signature(#[serde(with = "b64")] pub Vec<u8>);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignedContract {
    pub contract_id: String,
    pub proposal: ContractProposal,
    pub resolved_nodes: Vec<String>,
    /// Digest of each involved offer's policy at signing time.
    pub policy_snapshot_digests: BTreeMap<String, String>,
    pub params: ExecutionParams,
    pub signed_at: u64,
    /// Position among the contracts of the data space; keeps ids of
    /// repeated identical proposals distinct.
    pub sequence: u64,
    pub signatures: BTreeMap<ParticipantId, Signature>,
    pub status: ContractStatus,
}

#[derive(Serialize)]
struct ContractBody<'a> {
    proposal: &'a ContractProposal,
    resolved_nodes: &'a [String],
    policy_snapshot_digests: &'a BTreeMap<String, String>,
    params: &'a ExecutionParams,
    signed_at: u64,
    sequence: u64,
}

impl SignedContract {
    /// Digest of everything except signatures and status.
    pub fn compute_id(&self) -> String {
        digest_of(&ContractBody {
            proposal: &self.proposal,
            resolved_nodes: &self.resolved_nodes,
            policy_snapshot_digests: &self.policy_snapshot_digests,
            params: &self.params,
            signed_at: self.signed_at,
            sequence: self.sequence,
        })
    }

    /// Every offer the contract touches: datasets, function, nodes.
    pub fn offer_ids(&self) -> Vec<String> {
        involved_offers(&self.proposal, &self.resolved_nodes)
    }
}

fn involved_offers(p: &ContractProposal, nodes: &[String]) -> Vec<String> {
    let mut ids: Vec<String> = p.dataset_offer_ids.clone();
    ids.push(p.function_offer_id.clone());
    ids.extend(nodes.iter().cloned());
    ids
}

/// Offer id to reason codes; nothing was signed or consumed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub reasons: BTreeMap<String, Vec<DenyReason>>,
}

impl Rejection {
    /// All distinct reason codes.
    pub fn codes(&self) -> BTreeSet<DenyReason> {
        self.reasons.values().flatten().copied().collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Negotiation {
    Signed(SignedContract),
    Rejected(Rejection),
}

/// Signing keys of simulated participants.
pub trait Keyring {
    fn key(&self, id: &ParticipantId) -> Option<&KeyPair>;
}

impl Keyring for BTreeMap<ParticipantId, KeyPair> {
    fn key(&self, id: &ParticipantId) -> Option<&KeyPair> {
        self.get(id)
    }
}

/// Read-only view of the data space used during negotiation.
pub struct NegotiationContext<'a> {
    pub catalog: &'a Catalog,
    pub registry: &'a ParticipantRegistry,
    pub latency: &'a LatencyTable,
    pub fingerprint: &'a ParameterFingerprint,
    pub now: u64,
    /// When set, AUTO selection only considers nodes with these encryption keys.
    pub allowed_node_keys: Option<BTreeSet<String>>,
    /// Sequence number given to the next signed contract.
    pub sequence: u64,
}

fn live_of_kind<'a>(catalog: &'a Catalog, id: &str, kind: AssetKind) -> Result<&'a AssetOffer, OrchestratorError> {
    catalog.live(id).filter(|o| o.kind() == kind).ok_or_else(|| OrchestratorError::UnknownOffer(id.to_string()))
}

fn param_invalid(msg: &str) -> OrchestratorError {
    OrchestratorError::ParamInvalid(msg.into())
}

fn request_ctx(consumer: &AttributeSet, circuit_template: crate::mpc::Template, inputs: usize, now: u64, used: u32) -> RequestContext {
    RequestContext { consumer_attributes: consumer.clone(), function_template: circuit_template, input_count: inputs, now, uses_consumed: used }
}

/// Compiles the contract's function for its datasets.
pub fn contract_circuit(
    catalog: &Catalog,
    proposal: &ContractProposal,
    fingerprint: &ParameterFingerprint,
) -> Result<Circuit, OrchestratorError> {
    let function = catalog
        .get(&proposal.function_offer_id)
        .and_then(AssetOffer::function)
        .ok_or_else(|| OrchestratorError::UnknownOffer(proposal.function_offer_id.clone()))?;
    let arity = proposal.dataset_offer_ids.len();
    if arity < function.arity_min {
        return Err(OrchestratorError::ParamInvalid(format!("function needs at least {} inputs", function.arity_min)));
    }
    let params = match proposal.requested_params {
        ExecutionParams::Mpc(p) => p,
        // Compiled against the data-space field with a nominal (1,2) layout.
        ExecutionParams::HeMode => MpcParams::new(1, 2).with_modulus(fingerprint.modulus).with_bit_width(fingerprint.bit_width),
    };
    let spec = FunctionSpec { template: function.template, arity, public_params: function.public_params.clone() };
    Ok(compile_function(&spec, &params)?)
}

/// Checks offers and parameters and fixes the node list; AUTO lists are
/// resolved by random selection among permitting, protocol-capable nodes.
pub fn request_contract<R: Rng + ?Sized>(
    proposal: &ContractProposal,
    ctx: &NegotiationContext<'_>,
    rng: &mut R,
) -> Result<ResolvedProposal, OrchestratorError> {
    let consumer = ctx.registry.active_attributes(&proposal.consumer).ok_or(OrchestratorError::NotOnboarded)?;
    if proposal.dataset_offer_ids.is_empty() {
        return Err(param_invalid("a proposal needs at least one dataset"));
    }
    if proposal.dataset_offer_ids.iter().collect::<BTreeSet<_>>().len() != proposal.dataset_offer_ids.len() {
        return Err(param_invalid("datasets listed twice"));
    }
    let datasets: Vec<&AssetOffer> = proposal
        .dataset_offer_ids
        .iter()
        .map(|id| live_of_kind(ctx.catalog, id, AssetKind::Dataset))
        .collect::<Result<_, _>>()?;
    let function = live_of_kind(ctx.catalog, &proposal.function_offer_id, AssetKind::Function)?;
    let template = function.function().expect("function offer").template;
    let fp = ctx.fingerprint;
    match proposal.requested_params {
        ExecutionParams::Mpc(p) => {
            p.validate()?;
            if p.p != fp.modulus || p.bit_width != fp.bit_width {
                return Err(param_invalid("parameters differ from the data-space fingerprint"));
            }
        }
        ExecutionParams::HeMode => {
            if datasets.iter().any(|d| d.dataset().is_some_and(|d| d.encoding_mode != crate::catalog::EncodingMode::Synchronous)) {
                return Err(param_invalid("HE mode takes synchronous inputs only"));
            }
        }
    }
    let circuit = contract_circuit(ctx.catalog, proposal, fp)?;
    if datasets.iter().any(|d| d.dataset().is_some_and(|d| d.value_kind != circuit.input_kind)) {
        return Err(param_invalid("dataset value kind does not match the function"));
    }
    let n = proposal.requested_params.node_count();
    let protocol = proposal.requested_params.protocol();
    let threshold = proposal.requested_params.threshold();
    let resolved_nodes = match &proposal.node_offer_ids {
        NodeSelection::Explicit(ids) => {
            if ids.len() != n {
                return Err(OrchestratorError::ParamInvalid(format!("{} nodes listed, {} required", ids.len(), n)));
            }
            if ids.iter().collect::<BTreeSet<_>>().len() != ids.len() {
                return Err(param_invalid("node listed twice"));
            }
            for id in ids {
                let node = live_of_kind(ctx.catalog, id, AssetKind::Node)?;
                if !node.node().expect("node offer").supported_protocols.contains(&protocol) {
                    return Err(OrchestratorError::ParamInvalid(format!("node {id} lacks {protocol:?}")));
                }
            }
            ids.clone()
        }
        NodeSelection::Auto { constraints } => {
            let inputs = datasets.len();
            let candidates: Vec<&AssetOffer> = ctx
                .catalog
                .entries
                .values()
                .filter(|e| !e.withdrawn)
                .map(|e| &e.offer)
                .filter(|o| o.node().is_some_and(|d| d.supported_protocols.contains(&protocol)))
                .filter(|o| {
                    let key = &o.node().expect("node offer").encryption_key;
                    ctx.allowed_node_keys.as_ref().is_none_or(|k| k.contains(key))
                })
                .filter(|o| {
                    let c = request_ctx(consumer, template, inputs, ctx.now, o.uses_consumed);
                    evaluate_policy(&o.policy, &c).is_permit()
                })
                .collect();
            let mut merged = constraints.clone();
            for offer in datasets.iter().chain(core::iter::once(&function)) {
                merged.extend(offer.policy.node_constraints.iter().cloned());
            }
            let ids: Vec<String> = candidates.iter().map(|o| o.offer_id.clone()).collect();
            let descriptors: Vec<&NodeDescriptor> = candidates.iter().map(|o| o.node().expect("node offer")).collect();
            let latency = ctx.latency.matrix(&ids);
            let picked = select_nodes(&descriptors, &merged, n, &latency, threshold, rng)?;
            picked.into_iter().map(|i| ids[i].clone()).collect()
        }
    };
    Ok(ResolvedProposal { proposal: proposal.clone(), resolved_nodes })
}

/// Evaluates one policy for the contract, including its node constraints.
fn evaluate_offer(
    policy: &UsagePolicy,
    ctx: &RequestContext,
    nodes: &[&NodeDescriptor],
    latency: &crate::catalog::LatencyMatrix,
    threshold: Option<usize>,
) -> PolicyDecision {
    let mut reasons = evaluate_policy(policy, ctx).reasons().to_vec();
    if check_node_constraints(&policy.node_constraints, nodes, latency, threshold) != ConstraintCheck::Satisfied {
        reasons.push(DenyReason::NodeConstraint);
    }
    if reasons.is_empty() {
        PolicyDecision::Permit
    } else {
        PolicyDecision::Deny(reasons)
    }
}

/// Evaluates every involved policy. Returns the per-offer decisions.
fn decisions(
    proposal: &ContractProposal,
    nodes: &[String],
    ctx: &NegotiationContext<'_>,
    now: u64,
    ignore_uses: bool,
) -> Result<BTreeMap<String, PolicyDecision>, OrchestratorError> {
    let consumer = ctx.registry.active_attributes(&proposal.consumer).ok_or(OrchestratorError::NotOnboarded)?;
    let template = ctx
        .catalog
        .get(&proposal.function_offer_id)
        .and_then(AssetOffer::function)
        .ok_or_else(|| OrchestratorError::UnknownOffer(proposal.function_offer_id.clone()))?
        .template;
    let descriptors: Vec<&NodeDescriptor> = nodes
        .iter()
        .map(|id| ctx.catalog.get(id).and_then(AssetOffer::node).ok_or_else(|| OrchestratorError::UnknownOffer(id.clone())))
        .collect::<Result<_, _>>()?;
    let latency = ctx.latency.matrix(nodes);
    let threshold = proposal.requested_params.threshold();
    let mut out = BTreeMap::new();
    for id in involved_offers(proposal, nodes) {
        let offer = ctx.catalog.get(&id).ok_or_else(|| OrchestratorError::UnknownOffer(id.clone()))?;
        let used = if ignore_uses { 0 } else { offer.uses_consumed };
        let rctx = request_ctx(consumer, template, proposal.dataset_offer_ids.len(), now, used);
        let mut policy = offer.policy.clone();
        if ignore_uses {
            policy.max_uses = MaxUses::Unlimited;
        }
        out.insert(id, evaluate_offer(&policy, &rctx, &descriptors, &latency, threshold));
    }
    Ok(out)
}

/// Participants whose signatures a contract needs: consumer, asset owners,
/// node owners and the orchestrator.
pub fn required_signers(contract: &SignedContract, catalog: &Catalog, orchestrator: &ParticipantId) -> BTreeSet<ParticipantId> {
    let mut ids: BTreeSet<ParticipantId> = contract.offer_ids().iter().filter_map(|id| catalog.get(id)).map(|o| o.owner().clone()).collect();
    ids.insert(contract.proposal.consumer.clone());
    ids.insert(orchestrator.clone());
    ids
}

/// Runs every policy under the request; on all-PERMIT builds the contract
/// and collects signatures. The caller applies use consumption and audit.
pub fn negotiate(
    resolved: &ResolvedProposal,
    ctx: &NegotiationContext<'_>,
    keyring: &dyn Keyring,
    orchestrator: &KeyPair,
) -> Result<Negotiation, OrchestratorError> {
    let proposal = &resolved.proposal;
    let decided = decisions(proposal, &resolved.resolved_nodes, ctx, ctx.now, false)?;
    let reasons: BTreeMap<String, Vec<DenyReason>> =
        decided.iter().filter(|(_, d)| !d.is_permit()).map(|(k, d)| (k.clone(), d.reasons().to_vec())).collect();
    if !reasons.is_empty() {
        return Ok(Negotiation::Rejected(Rejection { reasons }));
    }
    let policy_snapshot_digests = involved_offers(proposal, &resolved.resolved_nodes)
        .into_iter()
        .map(|id| {
            let digest = digest_of(&ctx.catalog.get(&id).expect("evaluated above").policy);
            (id, digest)
        })
        .collect();
    let mut contract = SignedContract {
        contract_id: String::new(),
        proposal: proposal.clone(),
        resolved_nodes: resolved.resolved_nodes.clone(),
        policy_snapshot_digests,
        params: proposal.requested_params,
        signed_at: ctx.now,
        sequence: ctx.sequence,
        signatures: BTreeMap::new(),
        status: ContractStatus::Signed,
    };
    contract.contract_id = contract.compute_id();
    let orchestrator_id = orchestrator.participant_id();
    for id in required_signers(&contract, ctx.catalog, &orchestrator_id) {
        let key = if id == orchestrator_id { Some(orchestrator) } else { keyring.key(&id) };
        let key = key.ok_or_else(|| OrchestratorError::MissingSigner(id.clone()))?;
        contract.signatures.insert(id, Signature(key.sign(contract.contract_id.as_bytes())));
    }
    Ok(Negotiation::Signed(contract))
}

/// Checks the id, the signer census and every signature.
pub fn verify_contract(
    contract: &SignedContract,
    catalog: &Catalog,
    registry: &ParticipantRegistry,
    orchestrator: &VerifyKey,
) -> Result<(), Vec<String>> {
    let mut problems = Vec::new();
    if contract.compute_id() != contract.contract_id {
        problems.push(String::from("CONTRACT_ID_MISMATCH"));
    }
    let orchestrator_id = orchestrator.participant_id();
    let required = required_signers(contract, catalog, &orchestrator_id);
    if contract.signatures.keys().cloned().collect::<BTreeSet<_>>() != required {
        problems.push(String::from("SIGNATURES_INCOMPLETE"));
    }
    for (id, sig) in &contract.signatures {
        let key = if *id == orchestrator_id { Some(*orchestrator) } else { registry.verify_key(id) };
        if !key.is_some_and(|k| k.verify(contract.contract_id.as_bytes(), &sig.0)) {
            problems.push(format!("BAD_SIGNATURE:{}", id.short()));
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(problems)
    }
}

/// Re-evaluates the contract's policies as of its signing time against the
/// stored snapshots. Use counts are not replayed.
pub fn replay_contract(contract: &SignedContract, ctx: &NegotiationContext<'_>) -> Result<(), Vec<String>> {
    let mut problems = Vec::new();
    for (id, digest) in &contract.policy_snapshot_digests {
        match ctx.catalog.get(id) {
            Some(o) if digest_of(&o.policy) == *digest => {}
            _ => problems.push(format!("POLICY_CHANGED:{id}")),
        }
    }
    match decisions(&contract.proposal, &contract.resolved_nodes, ctx, contract.signed_at, true) {
        Ok(d) => {
            for (id, decision) in d {
                for r in decision.reasons() {
                    problems.push(format!("{r}:{id}"));
                }
            }
        }
        Err(e) => problems.push(e.code().into()),
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(problems)
    }
}

/// Release-time check: the contract is signed, verifies, and its policies
/// still permit at `ctx.now` (use counts were settled at signing).
pub fn release_check(
    contract: &SignedContract,
    ctx: &NegotiationContext<'_>,
    orchestrator: &VerifyKey,
) -> Result<(), Vec<String>> {
    if contract.status != ContractStatus::Signed {
        return Err(alloc::vec![format!("STATUS_{:?}", contract.status).to_uppercase()]);
    }
    verify_contract(contract, ctx.catalog, ctx.registry, orchestrator)?;
    let d = decisions(&contract.proposal, &contract.resolved_nodes, ctx, ctx.now, true).map_err(|e| alloc::vec![e.code().to_string()])?;
    let reasons: Vec<String> = d.values().flat_map(|x| x.reasons().iter().map(|r| r.to_string())).collect::<BTreeSet<_>>().into_iter().collect();
    if reasons.is_empty() {
        Ok(())
    } else {
        Err(reasons)
    }
}
