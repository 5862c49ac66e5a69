//! The data-space authority: node selection, contract negotiation, the
//! transaction lifecycle and the audit log.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::canonical::digest_of;
use crate::catalog::{
    publish_offer, withdraw_offer, Asset, AssetOffer, Catalog, CatalogError, EncodingMode, LatencyMatrix,
    OfferDocument, UsagePolicy,
};
use crate::identity::{
    issue_credential, onboard, AttributeSet, Credential, IdentityError, KeyPair, ParticipantId, ParticipantRegistry,
    Role, VerifyKey,
};
use crate::mpc::{MpcError, MpcParams, ValueKind, MERSENNE_61};
use crate::provisioning::{store_immediate, store_late, Committee, Custodian, ProvisioningError};
use crate::runtime::{EncryptionKeyPair, RuntimeError};

mod audit;
mod contract;
mod selection;
mod transaction;

pub use audit::{
    append_audit, audit_to_jsonl, strip_signatures, verify_audit_chain, verify_audit_jsonl, AuditEntry, AuditKind,
    AuditVerdict, ParameterFingerprint,
};
pub use contract::{
    contract_circuit, negotiate, release_check, replay_contract, request_contract, required_signers, verify_contract,
    ContractProposal, ContractStatus, ExecutionParams, Keyring, Negotiation, NegotiationContext, NodeSelection,
    Rejection, ResolvedProposal, Signature, SignedContract,
};
pub use selection::{select_nodes, valid_subsets, ENUMERATION_LIMIT, MAX_SAMPLING_ATTEMPTS};
pub use transaction::TransactionResult;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OrchestratorError {
    #[error("unknown or withdrawn offer {0}")]
    UnknownOffer(String),
    #[error("participant is not an active member")]
    NotOnboarded,
    #[error("no node set satisfies the constraints")]
    SelectionInfeasible,
    #[error("invalid parameters: {0}")]
    ParamInvalid(String),
    #[error("no signing key for {0}")]
    MissingSigner(ParticipantId),
    #[error("unknown contract {0}")]
    UnknownContract(String),
    #[error("contract is not in SIGNED state")]
    ContractNotSigned,
    #[error("no input value held for dataset {0}")]
    MissingInput(String),
    #[error("no custodian registered")]
    NoCustodian,
    #[error("participant lacks the {0:?} role")]
    RoleMismatch(Role),
    #[error("transaction failed: {code}: {detail}")]
    TransactionFailed { code: String, detail: String },
    #[error(transparent)]
    Mpc(#[from] MpcError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Identity(#[from] IdentityError),
    #[error(transparent)]
    Provisioning(#[from] ProvisioningError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
}

impl OrchestratorError {
    pub fn code(&self) -> &'static str {
        match self {
            OrchestratorError::UnknownOffer(_) => "UNKNOWN_OFFER",
            OrchestratorError::NotOnboarded => "NOT_ONBOARDED",
            OrchestratorError::SelectionInfeasible => "SELECTION_INFEASIBLE",
            OrchestratorError::ParamInvalid(_) | OrchestratorError::Mpc(MpcError::ParamInvalid(_)) => "PARAM_INVALID",
            OrchestratorError::MissingSigner(_) => "MISSING_SIGNER",
            OrchestratorError::UnknownContract(_) => "UNKNOWN_CONTRACT",
            OrchestratorError::ContractNotSigned => "CONTRACT_NOT_SIGNED",
            OrchestratorError::MissingInput(_) => "MISSING_INPUT",
            OrchestratorError::NoCustodian => "NO_CUSTODIAN",
            OrchestratorError::RoleMismatch(_) => "ROLE_MISMATCH",
            OrchestratorError::TransactionFailed { .. } => "TRANSACTION_FAILED",
            OrchestratorError::Mpc(MpcError::OutOfRange { .. }) => "OUT_OF_RANGE",
            OrchestratorError::Mpc(_) => "MPC",
            OrchestratorError::Catalog(_) => "CATALOG",
            OrchestratorError::Identity(_) => "IDENTITY",
            OrchestratorError::Provisioning(e) => e.code(),
            OrchestratorError::Runtime(e) => e.code(),
        }
    }
}

/// Declared one-way delay between two node offers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub a: String,
    pub b: String,
    pub ms: u32,
}

/// Node-to-node latencies keyed by offer id, with a default for undeclared
/// links.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyTable {
    pub default_ms: u32,
    pub links: Vec<Link>,
}

impl LatencyTable {
    pub fn uniform(default_ms: u32) -> Self {
        LatencyTable { default_ms, links: Vec::new() }
    }

    pub fn set(&mut self, a: &str, b: &str, ms: u32) {
        self.links.retain(|l| !((l.a == a && l.b == b) || (l.a == b && l.b == a)));
        self.links.push(Link { a: a.into(), b: b.into(), ms });
    }

    pub fn get(&self, a: &str, b: &str) -> u32 {
        if a == b {
            return 0;
        }
        self.links
            .iter()
            .find(|l| (l.a == a && l.b == b) || (l.a == b && l.b == a))
            .map_or(self.default_ms, |l| l.ms)
    }

    /// Matrix over the given offers, in order.
    pub fn matrix(&self, ids: &[String]) -> LatencyMatrix {
        LatencyMatrix { ms: ids.iter().map(|a| ids.iter().map(|b| self.get(a, b)).collect()).collect() }
    }
}

/// Injected faults for simulation runs.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Faults {
    /// Node index to the round from which it stops sending.
    pub crash: BTreeMap<u16, u32>,
}

/// Protocol identifiers recorded in the genesis fingerprint.
pub const PROTOCOL_VERSIONS: [&str; 3] = ["shamir-beaver-v1", "mock-he-v1", "ds-seal-v1"];

impl ParameterFingerprint {
    pub fn standard(bit_width: u32) -> Self {
        ParameterFingerprint {
            modulus: MERSENNE_61,
            protocol_versions: PROTOCOL_VERSIONS.iter().map(|s| s.to_string()).collect(),
            bit_width,
            dealer_trust_notice: true,
        }
    }
}

/// The whole state of one data-space instance.
#[derive(Clone, Serialize, Deserialize)]
pub struct DataSpace {
    pub seed: u64,
    /// Logical time, advanced by `tick`.
    pub clock: u64,
    /// Operations performed; each one draws from its own RNG stream.
    pub ops: u64,
    pub fingerprint: ParameterFingerprint,
    orchestrator: KeyPair,
    pub registry: ParticipantRegistry,
    pub catalog: Catalog,
    pub audit: Vec<AuditEntry>,
    pub contracts: BTreeMap<String, SignedContract>,
    /// Signing keys of simulated participants (and trust anchors).
    pub keyring: BTreeMap<ParticipantId, KeyPair>,
    /// Encryption key pairs by public key.
    pub encryption_keys: BTreeMap<String, EncryptionKeyPair>,
    pub custodian: Option<Custodian>,
    pub committee: Option<Committee>,
    /// Values held by simulated input parties for synchronous datasets.
    pub private_inputs: BTreeMap<String, u64>,
    pub latency: LatencyTable,
    pub party_latency_ms: u32,
    pub time_budget_ms: u64,
    #[serde(default)]
    pub faults: Faults,
}

impl DataSpace {
    pub fn new(seed: u64, fingerprint: ParameterFingerprint) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let orchestrator = KeyPair::from_rng(&mut rng);
        let mut space = DataSpace {
            seed,
            clock: 0,
            ops: 0,
            fingerprint,
            orchestrator,
            registry: ParticipantRegistry::new(),
            catalog: Catalog::new(),
            audit: Vec::new(),
            contracts: BTreeMap::new(),
            keyring: BTreeMap::new(),
            encryption_keys: BTreeMap::new(),
            custodian: None,
            committee: None,
            private_inputs: BTreeMap::new(),
            latency: LatencyTable::uniform(10),
            party_latency_ms: 10,
            time_budget_ms: 60_000,
            faults: Faults::default(),
        };
        let payload = json!({
            "fingerprint": space.fingerprint,
            "orchestrator": space.orchestrator.participant_id(),
            "orchestrator_key": space.orchestrator.verify_key(),
        });
        append_audit(&mut space.audit, AuditKind::Genesis, &payload, &space.orchestrator);
        space
    }

    /// A fresh RNG stream for the next operation.
    pub fn rng(&mut self) -> ChaCha20Rng {
        self.ops += 1;
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(self.ops);
        rng
    }

    pub fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    pub fn orchestrator_key(&self) -> VerifyKey {
        self.orchestrator.verify_key()
    }

    pub fn orchestrator_id(&self) -> ParticipantId {
        self.orchestrator.participant_id()
    }

    fn record<P: Serialize + ?Sized>(&mut self, kind: AuditKind, payload: &P) -> u64 {
        append_audit(&mut self.audit, kind, payload, &self.orchestrator).index
    }

    /// Creates a trust anchor whose key the data space keeps for issuing.
    pub fn create_anchor(&mut self, anchor_id: &str) -> VerifyKey {
        let mut rng = self.rng();
        let key = KeyPair::from_rng(&mut rng);
        let vk = key.verify_key();
        self.registry.register_anchor(anchor_id, vk);
        self.keyring.insert(vk.participant_id(), key);
        vk
    }

    pub fn anchor_key(&self, anchor_id: &str) -> Option<&KeyPair> {
        let vk = self.registry.anchors.get(anchor_id)?;
        self.keyring.get(&vk.participant_id())
    }

    /// A new simulated participant signing key, kept in the keyring.
    pub fn new_participant_key(&mut self) -> KeyPair {
        let mut rng = self.rng();
        let key = KeyPair::from_rng(&mut rng);
        self.keyring.insert(key.participant_id(), key.clone());
        key
    }

    pub fn new_encryption_key(&mut self) -> String {
        let mut rng = self.rng();
        let key = EncryptionKeyPair::from_rng(&mut rng);
        let public = key.public_hex();
        self.encryption_keys.insert(public.clone(), key);
        public
    }

    /// Issues a credential from a local anchor to a new simulated
    /// participant and onboards it.
    pub fn enroll(&mut self, anchor_id: &str, attributes: AttributeSet) -> Result<ParticipantId, OrchestratorError> {
        let anchor = self.anchor_key(anchor_id).cloned().ok_or(IdentityError::Rejected(crate::identity::CredentialStatus::UnknownAnchor))?;
        let key = self.new_participant_key();
        let credential = issue_credential(&anchor, anchor_id, key.verify_key(), attributes, self.clock)?;
        self.onboard(&credential)
    }

    /// Signs an offer with the owner's key from the keyring and publishes it.
    pub fn offer(&mut self, asset: Asset, policy: UsagePolicy) -> Result<String, OrchestratorError> {
        let owner = asset.owner().clone();
        let key = self.keyring.get(&owner).cloned().ok_or(OrchestratorError::MissingSigner(owner))?;
        self.publish(OfferDocument::signed(asset, policy, &key))
    }

    pub fn onboard(&mut self, credential: &Credential) -> Result<ParticipantId, OrchestratorError> {
        let known = self.registry.member(&credential.participant_id()).is_some();
        let id = onboard(&mut self.registry, credential)?;
        if !known {
            let roles: Vec<&str> = credential.attributes.roles.iter().map(|r| r.name()).collect();
            let payload = json!({"participant": id, "anchor_id": credential.anchor_id, "roles": roles});
            self.record(AuditKind::Onboarded, &payload);
        }
        Ok(id)
    }

    pub fn publish(&mut self, offer: OfferDocument) -> Result<String, OrchestratorError> {
        let live_before = offer.offer_id();
        let was_live = self.catalog.live(&live_before).is_some();
        let kind = offer.asset.kind();
        let owner = offer.asset.owner().clone();
        let policy_digest = digest_of(&offer.policy);
        let id = publish_offer(&self.registry, &mut self.catalog, offer)?;
        if !was_live {
            let payload = json!({"offer_id": id, "owner": owner, "kind": kind, "policy_digest": policy_digest});
            self.record(AuditKind::OfferPublished, &payload);
        }
        Ok(id)
    }

    pub fn withdraw(&mut self, owner: &ParticipantId, offer_id: &str) -> Result<(), OrchestratorError> {
        withdraw_offer(&mut self.catalog, owner, offer_id)?;
        self.record(AuditKind::OfferWithdrawn, &json!({"offer_id": offer_id, "owner": owner}));
        Ok(())
    }

    fn require_role(&self, id: &ParticipantId, role: Role) -> Result<(), OrchestratorError> {
        let attrs = self.registry.active_attributes(id).ok_or(OrchestratorError::NotOnboarded)?;
        if attrs.has_role(role) {
            Ok(())
        } else {
            Err(OrchestratorError::RoleMismatch(role))
        }
    }

    /// Installs the data custodian; it needs the CUSTODIAN role.
    pub fn set_custodian(&mut self, id: ParticipantId) -> Result<(), OrchestratorError> {
        self.require_role(&id, Role::Custodian)?;
        let mut rng = self.rng();
        self.custodian = Some(Custodian::new(id, EncryptionKeyPair::from_rng(&mut rng)));
        Ok(())
    }

    /// Installs the key-holding committee; every member needs the COMMITTEE role.
    pub fn set_committee(&mut self, ids: Vec<ParticipantId>) -> Result<(), OrchestratorError> {
        for id in &ids {
            self.require_role(id, Role::Committee)?;
        }
        self.committee = Some(Committee::new(ids)?);
        Ok(())
    }

    /// Stores an input at the custodian. IMMEDIATE encoding needs the node
    /// offers it is encoded for (their order fixes node indices).
    pub fn store(
        &mut self,
        owner: &ParticipantId,
        value: u64,
        value_kind: ValueKind,
        mode: EncodingMode,
        immediate: Option<(MpcParams, Vec<String>)>,
    ) -> Result<String, OrchestratorError> {
        self.require_role(owner, Role::DataProvider)?;
        let mut rng = self.rng();
        let base = MpcParams::new(1, 2).with_modulus(self.fingerprint.modulus).with_bit_width(self.fingerprint.bit_width);
        match mode {
            EncodingMode::Immediate => {
                let (params, nodes) = immediate.ok_or_else(|| OrchestratorError::ParamInvalid("immediate encoding needs a node set".into()))?;
                if params.p != self.fingerprint.modulus || params.bit_width != self.fingerprint.bit_width {
                    return Err(OrchestratorError::ParamInvalid("parameters differ from the data-space fingerprint".into()));
                }
                let keys = nodes
                    .iter()
                    .map(|id| {
                        self.catalog.live(id).and_then(AssetOffer::node).map(|n| n.encryption_key.clone()).ok_or_else(|| OrchestratorError::UnknownOffer(id.clone()))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let custodian = self.custodian.as_mut().ok_or(OrchestratorError::NoCustodian)?;
                Ok(store_immediate(custodian, owner.clone(), value, value_kind, &params, &keys, &mut rng)?)
            }
            EncodingMode::Late => {
                let custodian = self.custodian.as_mut().ok_or(OrchestratorError::NoCustodian)?;
                let committee = self.committee.as_mut().ok_or(ProvisioningError::NoCommittee)?;
                Ok(store_late(custodian, owner.clone(), value, value_kind, &base, committee, &mut rng)?)
            }
            EncodingMode::Synchronous => Err(OrchestratorError::ParamInvalid("synchronous inputs are not stored".into())),
        }
    }

    /// Registers the value a simulated input party will contribute for a
    /// synchronous dataset offer.
    pub fn hold_input(&mut self, offer_id: &str, value: u64) {
        self.private_inputs.insert(offer_id.into(), value);
    }

    pub fn negotiation_context(&self) -> NegotiationContext<'_> {
        NegotiationContext {
            catalog: &self.catalog,
            registry: &self.registry,
            latency: &self.latency,
            fingerprint: &self.fingerprint,
            now: self.clock,
            allowed_node_keys: None,
            sequence: self.contracts.len() as u64,
        }
    }

    /// Encryption keys an IMMEDIATE dataset was encoded for, if any.
    fn bound_node_keys(&self, proposal: &ContractProposal) -> Option<Vec<String>> {
        let custodian = self.custodian.as_ref()?;
        proposal.dataset_offer_ids.iter().find_map(|id| {
            let d = self.catalog.live(id)?.dataset()?;
            if d.encoding_mode != EncodingMode::Immediate {
                return None;
            }
            custodian.handle(d.handle_id.as_deref()?)?.bound_params.as_ref().map(|b| b.node_keys.clone())
        })
    }

    /// Validates a proposal and resolves AUTO node lists. With an IMMEDIATE
    /// dataset, AUTO selection is limited to the nodes it was encoded for,
    /// in the encoded order.
    pub fn request(&mut self, proposal: &ContractProposal) -> Result<ResolvedProposal, OrchestratorError> {
        let mut rng = self.rng();
        let bound = self.bound_node_keys(proposal);
        let mut ctx = self.negotiation_context();
        ctx.allowed_node_keys = bound.as_ref().map(|k| k.iter().cloned().collect::<BTreeSet<_>>());
        let mut resolved = request_contract(proposal, &ctx, &mut rng)?;
        if let (Some(keys), NodeSelection::Auto { .. }) = (&bound, &proposal.node_offer_ids) {
            let pos = |id: &String| {
                let key = self.catalog.live(id).and_then(AssetOffer::node).map(|n| n.encryption_key.clone());
                key.and_then(|k| keys.iter().position(|x| *x == k)).unwrap_or(usize::MAX)
            };
            resolved.resolved_nodes.sort_by_key(pos);
        }
        Ok(resolved)
    }

    /// Negotiates a resolved proposal. A signed contract consumes one use of
    /// every involved offer and is recorded in the audit log.
    pub fn negotiate(&mut self, resolved: &ResolvedProposal) -> Result<Negotiation, OrchestratorError> {
        let outcome = negotiate(resolved, &self.negotiation_context(), &self.keyring, &self.orchestrator)?;
        if let Negotiation::Signed(contract) = &outcome {
            for id in contract.offer_ids() {
                self.catalog.consume(&id);
            }
            let payload = json!({
                "contract_id": contract.contract_id,
                "consumer": contract.proposal.consumer,
                "offers": contract.offer_ids(),
                "params": contract.params,
                "policy_snapshot_digests": contract.policy_snapshot_digests,
            });
            self.record(AuditKind::ContractSigned, &payload);
            self.contracts.insert(contract.contract_id.clone(), contract.clone());
        }
        Ok(outcome)
    }

    /// `request` followed by `negotiate`.
    pub fn propose(&mut self, proposal: &ContractProposal) -> Result<Negotiation, OrchestratorError> {
        let resolved = self.request(proposal)?;
        self.negotiate(&resolved)
    }

    pub fn contract(&self, id: &str) -> Option<&SignedContract> {
        self.contracts.get(id)
    }

    pub fn verify_audit(&self) -> AuditVerdict {
        verify_audit_chain(&self.audit, &self.orchestrator_key())
    }

    fn fail_payload(contract_id: &str, err: &OrchestratorError) -> serde_json::Value {
        json!({"contract_id": contract_id, "error": err.code(), "detail": format!("{err}")})
    }
}
