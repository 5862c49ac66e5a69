//! The data custodian and the three input provisioning modes: synchronous
//! sharing by the input party, immediate encoding for a fixed node set, and
//! late encoding released through a key-holding committee.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{CryptoRng, Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::canonical::{digest_hex, digest_of, to_canonical_bytes};
use crate::catalog::EncodingMode;
use crate::identity::ParticipantId;
use crate::mpc::{share, share_bits, Fe, Field, MpcError, MpcParams, Share, ValueKind, WireId};
use crate::runtime::{EncryptionKeyPair, Endpoint, InputPart, Message, MessageKind, PartValue, Payload, RuntimeError, SealedBlob};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProvisioningError {
    #[error(transparent)]
    Mpc(#[from] MpcError),
    #[error("a committee needs at least two members")]
    NoCommittee,
    #[error("contract does not authorize this release: {}", .0.join(", "))]
    ContractInvalid(Vec<String>),
    #[error("release targets a node set other than the one bound at storage time")]
    NodesetMismatch,
    #[error("committee member {0} is unavailable")]
    CommitteeUnavailable(ParticipantId),
    #[error("unknown handle {0}")]
    UnknownHandle(String),
    #[error("operation does not apply to a {0:?} handle")]
    WrongMode(EncodingMode),
    #[error("release expects {expected} input wires, got {got}")]
    WireMismatch { expected: usize, got: usize },
    #[error("node encryption key is malformed")]
    BadNodeKey,
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
}

impl ProvisioningError {
    pub fn code(&self) -> &'static str {
        match self {
            ProvisioningError::Mpc(MpcError::ParamInvalid(_)) => "PARAM_INVALID",
            ProvisioningError::Mpc(MpcError::OutOfRange { .. }) => "OUT_OF_RANGE",
            ProvisioningError::Mpc(_) => "MPC",
            ProvisioningError::NoCommittee => "NO_COMMITTEE",
            ProvisioningError::ContractInvalid(_) => "CONTRACT_INVALID",
            ProvisioningError::NodesetMismatch => "NODESET_MISMATCH",
            ProvisioningError::CommitteeUnavailable(_) => "COMMITTEE_UNAVAILABLE",
            ProvisioningError::UnknownHandle(_) => "UNKNOWN_HANDLE",
            ProvisioningError::WrongMode(_) => "WRONG_MODE",
            ProvisioningError::WireMismatch { .. } => "WIRE_MISMATCH",
            ProvisioningError::BadNodeKey => "BAD_NODE_KEY",
            ProvisioningError::Runtime(e) => e.code(),
        }
    }
}

/// MPC parameters and node keys an IMMEDIATE handle is encoded for.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundParams {
    pub t: usize,
    pub n: usize,
    pub p: u64,
    pub bit_width: u32,
    /// Encryption key of node i+1 at position i.
    pub node_keys: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum HandlePayload {
    /// Sealed share blobs; `blobs[i][j]` is element j for node i+1.
    Immediate { custodian_key: String, blobs: Vec<Vec<SealedBlob>> },
    /// Masked elements c = m + sum of committee fragments.
    Late { masked: Vec<Fe>, committee: Vec<ParticipantId> },
    Synchronous,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataHandle {
    pub handle_id: String,
    pub owner: ParticipantId,
    pub mode: EncodingMode,
    pub value_kind: ValueKind,
    pub payload: HandlePayload,
    pub bound_params: Option<BoundParams>,
}

/// Public description of a stored handle.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandleManifest {
    pub handle_id: String,
    pub owner: ParticipantId,
    pub mode: EncodingMode,
    pub value_kind: ValueKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bound_params: Option<BoundParams>,
    pub blob_digests: Vec<String>,
}

impl DataHandle {
    /// Number of stored encrypted or masked elements.
    pub fn element_count(&self) -> usize {
        match &self.payload {
            HandlePayload::Immediate { blobs, .. } => blobs.iter().map(Vec::len).sum(),
            HandlePayload::Late { masked, .. } => masked.len(),
            HandlePayload::Synchronous => 0,
        }
    }

    /// Bytes the custodian keeps for this handle.
    pub fn stored_bytes(&self) -> usize {
        match &self.payload {
            HandlePayload::Immediate { blobs, .. } => blobs.iter().flatten().map(SealedBlob::len).sum(),
            HandlePayload::Late { masked, .. } => masked.len() * 8,
            HandlePayload::Synchronous => 0,
        }
    }

    pub fn manifest(&self) -> HandleManifest {
        let blob_digests = match &self.payload {
            HandlePayload::Immediate { blobs, .. } => blobs.iter().flatten().map(digest_of).collect(),
            HandlePayload::Late { masked, .. } => masked.iter().map(digest_of).collect(),
            HandlePayload::Synchronous => Vec::new(),
        };
        HandleManifest {
            handle_id: self.handle_id.clone(),
            owner: self.owner.clone(),
            mode: self.mode,
            value_kind: self.value_kind,
            bound_params: self.bound_params.clone(),
            blob_digests,
        }
    }
}

/// What an authorized release must deliver: the session parameters, the
/// keys of the selected nodes and the circuit input wires fed by the handle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReleaseOrder {
    pub session_id: String,
    pub params: MpcParams,
    pub node_keys: Vec<String>,
    pub wires: Vec<WireId>,
}

/// Decides whether a contract authorizes releasing a dataset. An `Err`
/// carries the reason codes.
pub trait ReleaseValidator {
    fn authorize(&self, handle_id: &str) -> Result<ReleaseOrder, Vec<String>>;
}

/// One input part bound for one node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dispatch {
    pub from: Endpoint,
    pub to: u16,
    pub part: InputPart,
}

/// Packs dispatches into one message per (sender, recipient, kind). Public
/// constants travel as CONTROL, everything else as INPUT_SHARE.
pub fn dispatches_to_messages(session_id: &str, dispatches: Vec<Dispatch>) -> Result<Vec<Message>, RuntimeError> {
    let mut grouped: BTreeMap<(Endpoint, u16, MessageKind), Vec<InputPart>> = BTreeMap::new();
    for d in dispatches {
        let kind = match d.part.part {
            PartValue::Public(_) => MessageKind::Control,
            _ => MessageKind::InputShare,
        };
        grouped.entry((d.from, d.to, kind)).or_default().push(d.part);
    }
    grouped
        .into_iter()
        .map(|((from, to, kind), parts)| Message::new(session_id, 0, from, Endpoint::Node(to), kind, &Payload::Inputs(parts)))
        .collect()
}

fn encode_elements(value: u64, kind: ValueKind, params: &MpcParams, field: &Field) -> Result<Vec<Fe>, MpcError> {
    match kind {
        ValueKind::FieldElement => {
            let v = field.try_elem(value).ok_or(MpcError::OutOfRange { value, limit: field.modulus() })?;
            Ok(alloc::vec![v])
        }
        ValueKind::Bits16 => {
            let limit = params.bit_limit();
            if value >= limit {
                return Err(MpcError::OutOfRange { value, limit });
            }
            Ok((0..params.bit_width).rev().map(|pos| Fe::from((value >> pos) & 1)).collect())
        }
    }
}

/// Shares a value per its kind. `result[j][i]` is element j's share for node i+1.
fn share_elements<R: Rng + ?Sized>(value: u64, kind: ValueKind, params: &MpcParams, rng: &mut R) -> Result<Vec<Vec<Share>>, MpcError> {
    let field = params.validate()?;
    match kind {
        ValueKind::FieldElement => {
            let v = field.try_elem(value).ok_or(MpcError::OutOfRange { value, limit: field.modulus() })?;
            Ok(alloc::vec![share(v, params, rng)?])
        }
        ValueKind::Bits16 => Ok(share_bits(value, params, rng)?.bits),
    }
}

fn check_wires(order: &ReleaseOrder, expected: usize) -> Result<(), ProvisioningError> {
    if order.wires.len() != expected {
        return Err(ProvisioningError::WireMismatch { expected, got: order.wires.len() });
    }
    if order.node_keys.len() != order.params.n {
        return Err(ProvisioningError::Mpc(MpcError::ParamInvalid(format!(
            "{} node keys for n = {}",
            order.node_keys.len(),
            order.params.n
        ))));
    }
    Ok(())
}

fn expected_elements(kind: ValueKind, params: &MpcParams) -> usize {
    match kind {
        ValueKind::FieldElement => 1,
        ValueKind::Bits16 => params.bit_width as usize,
    }
}

/// A key-holding committee for late-encoded data.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitteeMember {
    pub id: ParticipantId,
    pub online: bool,
    /// Mask fragments K_i per handle.
    fragments: BTreeMap<String, Vec<Fe>>,
}

impl CommitteeMember {
    pub fn fragments(&self, handle_id: &str) -> Option<&[Fe]> {
        self.fragments.get(handle_id).map(Vec::as_slice)
    }

    pub fn endpoint(&self) -> Endpoint {
        Endpoint::Party(format!("committee:{}", self.id.short()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Committee {
    pub members: Vec<CommitteeMember>,
}

impl Committee {
    pub fn new(ids: Vec<ParticipantId>) -> Result<Self, ProvisioningError> {
        if ids.len() < 2 {
            return Err(ProvisioningError::NoCommittee);
        }
        Ok(Committee { members: ids.into_iter().map(|id| CommitteeMember { id, online: true, fragments: BTreeMap::new() }).collect() })
    }

    pub fn ids(&self) -> Vec<ParticipantId> {
        self.members.iter().map(|m| m.id.clone()).collect()
    }

    pub fn set_online(&mut self, id: &ParticipantId, online: bool) {
        for m in self.members.iter_mut().filter(|m| &m.id == id) {
            m.online = online;
        }
    }
}

/// A record of one release, kept by the custodian.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReleaseRecord {
    pub handle_id: String,
    pub session_id: String,
    pub nodes: usize,
}

/// Single-writer store for IMMEDIATE and LATE handles.
#[derive(Clone, Serialize, Deserialize)]
pub struct Custodian {
    pub id: ParticipantId,
    key: EncryptionKeyPair,
    handles: BTreeMap<String, DataHandle>,
    releases: Vec<ReleaseRecord>,
    stored: u64,
}

impl Custodian {
    pub fn new(id: ParticipantId, key: EncryptionKeyPair) -> Self {
        Custodian { id, key, handles: BTreeMap::new(), releases: Vec::new(), stored: 0 }
    }

    pub fn public_key(&self) -> String {
        self.key.public_hex()
    }

    pub fn endpoint(&self) -> Endpoint {
        Endpoint::Party(String::from("custodian"))
    }

    pub fn handle(&self, handle_id: &str) -> Option<&DataHandle> {
        self.handles.get(handle_id)
    }

    pub fn handles(&self) -> impl Iterator<Item = &DataHandle> {
        self.handles.values()
    }

    pub fn releases(&self) -> &[ReleaseRecord] {
        &self.releases
    }

    fn insert(&mut self, owner: ParticipantId, value_kind: ValueKind, mode: EncodingMode, payload: HandlePayload, bound: Option<BoundParams>) -> String {
        self.stored += 1;
        let mut seed = to_canonical_bytes(&(&owner, mode, value_kind, &payload, &bound));
        seed.extend_from_slice(&self.stored.to_be_bytes());
        let handle_id = digest_hex(&seed);
        let handle = DataHandle { handle_id: handle_id.clone(), owner, mode, value_kind, payload, bound_params: bound };
        self.handles.insert(handle_id.clone(), handle);
        handle_id
    }

    fn get(&self, handle_id: &str, mode: EncodingMode) -> Result<&DataHandle, ProvisioningError> {
        let h = self.handles.get(handle_id).ok_or_else(|| ProvisioningError::UnknownHandle(handle_id.into()))?;
        if h.mode != mode {
            return Err(ProvisioningError::WrongMode(h.mode));
        }
        Ok(h)
    }
}

/// Shares `value` now and seals share i for node i. Returns the handle id.
pub fn store_immediate<R: RngCore + CryptoRng + ?Sized>(
    custodian: &mut Custodian,
    owner: ParticipantId,
    value: u64,
    value_kind: ValueKind,
    params: &MpcParams,
    node_keys: &[String],
    rng: &mut R,
) -> Result<String, ProvisioningError> {
    params.validate()?;
    if node_keys.len() != params.n {
        return Err(MpcError::ParamInvalid(format!("{} node keys for n = {}", node_keys.len(), params.n)).into());
    }
    let elements = share_elements(value, value_kind, params, rng)?;
    let mut blobs = Vec::with_capacity(params.n);
    for (i, key) in node_keys.iter().enumerate() {
        let mut per_node = Vec::with_capacity(elements.len());
        for shares in &elements {
            let plain = to_canonical_bytes(&shares[i]);
            per_node.push(custodian.key.seal(key, &plain, rng).ok_or(ProvisioningError::BadNodeKey)?);
        }
        blobs.push(per_node);
    }
    let bound = BoundParams { t: params.t, n: params.n, p: params.p, bit_width: params.bit_width, node_keys: node_keys.to_vec() };
    let payload = HandlePayload::Immediate { custodian_key: custodian.public_key(), blobs };
    Ok(custodian.insert(owner, value_kind, EncodingMode::Immediate, payload, Some(bound)))
}

/// Masks `value` with fresh fragments drawn by each committee member and
/// stores only the masked elements. `params` supplies p and the bit width.
pub fn store_late<R: Rng + ?Sized>(
    custodian: &mut Custodian,
    owner: ParticipantId,
    value: u64,
    value_kind: ValueKind,
    params: &MpcParams,
    committee: &mut Committee,
    rng: &mut R,
) -> Result<String, ProvisioningError> {
    if committee.members.len() < 2 {
        return Err(ProvisioningError::NoCommittee);
    }
    let field = params.validate()?;
    let plain = encode_elements(value, value_kind, params, &field)?;
    let fragments: Vec<Vec<Fe>> =
        committee.members.iter().map(|_| plain.iter().map(|_| field.random(rng)).collect()).collect();
    let masked: Vec<Fe> = plain
        .iter()
        .enumerate()
        .map(|(j, &m)| field.add(m, field.sum(fragments.iter().map(|k| k[j]))))
        .collect();
    let payload = HandlePayload::Late { masked, committee: committee.ids() };
    let handle_id = custodian.insert(owner, value_kind, EncodingMode::Late, payload, None);
    for (member, k) in committee.members.iter_mut().zip(fragments) {
        member.fragments.insert(handle_id.clone(), k);
    }
    Ok(handle_id)
}

fn authorize(validator: &dyn ReleaseValidator, handle_id: &str) -> Result<ReleaseOrder, ProvisioningError> {
    let order = validator.authorize(handle_id).map_err(ProvisioningError::ContractInvalid)?;
    order.params.validate()?;
    Ok(order)
}

/// Forwards the sealed blobs of an IMMEDIATE handle to its bound nodes.
pub fn release_immediate(
    custodian: &mut Custodian,
    handle_id: &str,
    validator: &dyn ReleaseValidator,
) -> Result<Vec<Dispatch>, ProvisioningError> {
    let handle = custodian.get(handle_id, EncodingMode::Immediate)?;
    let order = authorize(validator, handle_id)?;
    let bound = handle.bound_params.as_ref().expect("immediate handles are bound");
    let p = &order.params;
    if (bound.t, bound.n, bound.p, bound.bit_width) != (p.t, p.n, p.p, p.bit_width) || bound.node_keys != order.node_keys {
        return Err(ProvisioningError::NodesetMismatch);
    }
    check_wires(&order, expected_elements(handle.value_kind, p))?;
    let HandlePayload::Immediate { custodian_key, blobs } = &handle.payload else {
        unreachable!("mode checked above")
    };
    let mut out = Vec::new();
    for (i, per_node) in blobs.iter().enumerate() {
        for (&wire, blob) in order.wires.iter().zip(per_node) {
            let part = PartValue::Sealed { sender_key: custodian_key.clone(), blob: blob.clone() };
            out.push(Dispatch { from: custodian.endpoint(), to: i as u16 + 1, part: InputPart { wire, parts_expected: 1, part } });
        }
    }
    custodian.releases.push(ReleaseRecord { handle_id: handle_id.into(), session_id: order.session_id, nodes: p.n });
    Ok(out)
}

/// Releases a LATE handle to the contract's node set: the custodian sends the
/// public masked value and every committee member shares the negated
/// fragment with a fresh polynomial. Nothing is dispatched unless every
/// member is online.
pub fn release_late<R: Rng + ?Sized>(
    custodian: &mut Custodian,
    handle_id: &str,
    validator: &dyn ReleaseValidator,
    committee: &Committee,
    rng: &mut R,
) -> Result<Vec<Dispatch>, ProvisioningError> {
    let handle = custodian.get(handle_id, EncodingMode::Late)?;
    let order = authorize(validator, handle_id)?;
    let field = order.params.validate()?;
    let HandlePayload::Late { masked, committee: holders } = &handle.payload else {
        unreachable!("mode checked above")
    };
    check_wires(&order, masked.len())?;
    if field.modulus() != order.params.p || masked.iter().any(|c| c.value() >= field.modulus()) {
        return Err(MpcError::ParamInvalid(String::from("release modulus differs from the storage modulus")).into());
    }
    let mut members = Vec::with_capacity(holders.len());
    for id in holders {
        let member = committee.members.iter().find(|m| &m.id == id).ok_or_else(|| ProvisioningError::CommitteeUnavailable(id.clone()))?;
        if !member.online {
            return Err(ProvisioningError::CommitteeUnavailable(id.clone()));
        }
        let fragments = member.fragments(handle_id).ok_or_else(|| ProvisioningError::CommitteeUnavailable(id.clone()))?;
        members.push((member.endpoint(), fragments));
    }
    let parts_expected = 1 + members.len() as u32;
    let mut out = Vec::new();
    for (j, (&wire, &c)) in order.wires.iter().zip(masked).enumerate() {
        for node in 1..=order.params.n as u16 {
            out.push(Dispatch { from: custodian.endpoint(), to: node, part: InputPart { wire, parts_expected, part: PartValue::Public(c) } });
        }
        for (endpoint, fragments) in &members {
            for s in share(field.neg(fragments[j]), &order.params, rng)? {
                out.push(Dispatch {
                    from: endpoint.clone(),
                    to: s.node_index,
                    part: InputPart { wire, parts_expected, part: PartValue::Share(s) },
                });
            }
        }
    }
    custodian.releases.push(ReleaseRecord { handle_id: handle_id.into(), session_id: order.session_id, nodes: order.params.n });
    Ok(out)
}

/// The input party shares its own value and sends share i to node i.
/// `authorization` is the handle-free form of the contract check.
pub fn provision_synchronous<R: Rng + ?Sized>(
    input_party: Endpoint,
    value: u64,
    value_kind: ValueKind,
    order: Result<ReleaseOrder, Vec<String>>,
    rng: &mut R,
) -> Result<Vec<Dispatch>, ProvisioningError> {
    let order = order.map_err(ProvisioningError::ContractInvalid)?;
    order.params.validate()?;
    check_wires(&order, expected_elements(value_kind, &order.params))?;
    let elements = share_elements(value, value_kind, &order.params, rng)?;
    let mut out = Vec::new();
    for (&wire, shares) in order.wires.iter().zip(&elements) {
        for &s in shares {
            out.push(Dispatch { from: input_party.clone(), to: s.node_index, part: InputPart { wire, parts_expected: 1, part: PartValue::Share(s) } });
        }
    }
    Ok(out)
}
