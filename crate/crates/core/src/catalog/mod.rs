//! Asset offers (datasets, compute nodes, functions) and the catalog that
//! publishes, filters and withdraws them.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::canonical::{b64, digest_hex, to_canonical_bytes};
use crate::identity::{KeyPair, ParticipantId, ParticipantRegistry, Role};
use crate::mpc::{Fe, Template, ValueKind};

mod policy;

pub use policy::{
    check_node_constraints, combine_decisions, evaluate_policy, AllowedFunctions, AttributePredicate, ConstraintCheck,
    ConsumerAttr, DenyReason, LatencyMatrix, MaxUses, NodeAttr, NodeConstraint, PolicyDecision, PredicateOp,
    PredicateValue, RequestContext, UsagePolicy,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CatalogError {
    #[error("owner is not an active member")]
    NotOnboarded,
    #[error("owner lacks the {0:?} role")]
    RoleMismatch(Role),
    #[error("owner signature does not verify")]
    BadOfferSignature,
    #[error("node descriptor contradicts the owner's credential ({0})")]
    AttributeMismatch(&'static str),
    #[error("invalid offer: {0}")]
    InvalidOffer(&'static str),
    #[error("invalid policy: {0}")]
    InvalidPolicy(&'static str),
    #[error("only the owner may withdraw an offer")]
    NotOwner,
    #[error("unknown or withdrawn offer {0}")]
    UnknownOffer(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Protocol {
    ShamirMpcV1,
    MockHeV1,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EncodingMode {
    Immediate,
    Late,
    Synchronous,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AssetKind {
    Dataset,
    Node,
    Function,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDescriptor {
    pub owner: ParticipantId,
    pub entity: String,
    pub country: String,
    pub trust_zone: String,
    pub supported_protocols: BTreeSet<Protocol>,
    pub compute_class: String,
    /// Hex X25519 public key used to seal input shares for this node.
    pub encryption_key: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetDescriptor {
    pub owner: ParticipantId,
    pub encoding_mode: EncodingMode,
    pub value_kind: ValueKind,
    pub record_count: u64,
    pub custodian: Option<ParticipantId>,
    /// Custodian handle holding the stored input (IMMEDIATE and LATE only).
    #[serde(default)]
    pub handle_id: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionDescriptor {
    pub owner: ParticipantId,
    pub template: Template,
    pub arity_min: usize,
    #[serde(default)]
    pub public_params: BTreeMap<String, Fe>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "descriptor", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Asset {
    Dataset(DatasetDescriptor),
    Node(NodeDescriptor),
    Function(FunctionDescriptor),
}

impl Asset {
    pub fn kind(&self) -> AssetKind {
        match self {
            Asset::Dataset(_) => AssetKind::Dataset,
            Asset::Node(_) => AssetKind::Node,
            Asset::Function(_) => AssetKind::Function,
        }
    }

    pub fn owner(&self) -> &ParticipantId {
        match self {
            Asset::Dataset(d) => &d.owner,
            Asset::Node(d) => &d.owner,
            Asset::Function(d) => &d.owner,
        }
    }

    fn required_role(&self) -> Role {
        match self {
            Asset::Dataset(_) => Role::DataProvider,
            Asset::Node(_) => Role::ComputeProvider,
            Asset::Function(_) => Role::FunctionProvider,
        }
    }

    fn validate(&self) -> Result<(), CatalogError> {
        match self {
            Asset::Dataset(d) => match (d.encoding_mode, &d.custodian, &d.handle_id) {
                (EncodingMode::Synchronous, None, None) => Ok(()),
                (EncodingMode::Synchronous, _, _) => Err(CatalogError::InvalidOffer("synchronous datasets have no custodian")),
                (_, Some(_), Some(_)) => Ok(()),
                _ => Err(CatalogError::InvalidOffer("stored datasets need a custodian and a handle")),
            },
            Asset::Function(f) => {
                if f.arity_min < f.template.arity_min() {
                    Err(CatalogError::InvalidOffer("arity_min below the template minimum"))
                } else {
                    Ok(())
                }
            }
            Asset::Node(n) => {
                if n.supported_protocols.is_empty() {
                    Err(CatalogError::InvalidOffer("node supports no protocol"))
                } else {
                    Ok(())
                }
            }
        }
    }
}

#[derive(Serialize)]
struct OfferBody<'a> {
    #[serde(flatten)]
    asset: &'a Asset,
    policy: &'a UsagePolicy,
}

/// Canonical bytes of (kind, descriptor, policy): signed by the owner and
/// digested into the offer id.
pub fn offer_signing_bytes(asset: &Asset, policy: &UsagePolicy) -> Vec<u8> {
    to_canonical_bytes(&OfferBody { asset, policy })
}

/// Offer file: `{kind, descriptor, policy, owner_signature}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OfferDocument {
    #[serde(flatten)]
    pub asset: Asset,
    pub policy: UsagePolicy,
    #[serde(with = "b64")]
    pub owner_signature: Vec<u8>,
}

impl OfferDocument {
    pub fn signed(asset: Asset, policy: UsagePolicy, owner: &KeyPair) -> Self {
        let owner_signature = owner.sign(&offer_signing_bytes(&asset, &policy));
        OfferDocument { asset, policy, owner_signature }
    }

    pub fn offer_id(&self) -> String {
        digest_hex(&offer_signing_bytes(&self.asset, &self.policy))
    }

    pub fn into_offer(self) -> AssetOffer {
        AssetOffer { offer_id: self.offer_id(), asset: self.asset, policy: self.policy, owner_signature: self.owner_signature, uses_consumed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssetOffer {
    pub offer_id: String,
    #[serde(flatten)]
    pub asset: Asset,
    pub policy: UsagePolicy,
    #[serde(with = "b64")]
    pub owner_signature: Vec<u8>,
    /// Signed contracts that used this offer.
    pub uses_consumed: u32,
}

fn enum_name<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        _ => String::new(),
    }
}

impl AssetOffer {
    pub fn kind(&self) -> AssetKind {
        self.asset.kind()
    }

    pub fn owner(&self) -> &ParticipantId {
        self.asset.owner()
    }

    pub fn node(&self) -> Option<&NodeDescriptor> {
        match &self.asset {
            Asset::Node(n) => Some(n),
            _ => None,
        }
    }

    pub fn dataset(&self) -> Option<&DatasetDescriptor> {
        match &self.asset {
            Asset::Dataset(d) => Some(d),
            _ => None,
        }
    }

    pub fn function(&self) -> Option<&FunctionDescriptor> {
        match &self.asset {
            Asset::Function(f) => Some(f),
            _ => None,
        }
    }

    pub fn document(&self) -> OfferDocument {
        OfferDocument { asset: self.asset.clone(), policy: self.policy.clone(), owner_signature: self.owner_signature.clone() }
    }

    /// Values of a browsable attribute, or `None` if the offer has no such
    /// attribute.
    pub fn attribute_values(&self, name: &str) -> Option<Vec<String>> {
        let common = match name {
            "kind" => Some(enum_name(&self.kind())),
            "offer_id" => Some(self.offer_id.clone()),
            "owner" => Some(self.owner().to_string()),
            "policy_id" => Some(self.policy.policy_id.clone()),
            "asset_id" => Some(self.policy.asset_id.clone()),
            _ => None,
        };
        if let Some(v) = common {
            return Some(vec![v]);
        }
        match (&self.asset, name) {
            (Asset::Node(n), "entity") => Some(vec![n.entity.clone()]),
            (Asset::Node(n), "country") => Some(vec![n.country.clone()]),
            (Asset::Node(n), "trust_zone") => Some(vec![n.trust_zone.clone()]),
            (Asset::Node(n), "compute_class") => Some(vec![n.compute_class.clone()]),
            (Asset::Node(n), "protocol") => Some(n.supported_protocols.iter().map(enum_name).collect()),
            (Asset::Dataset(d), "encoding_mode") => Some(vec![enum_name(&d.encoding_mode)]),
            (Asset::Dataset(d), "value_kind") => Some(vec![enum_name(&d.value_kind)]),
            (Asset::Dataset(d), "custodian") => d.custodian.as_ref().map(|c| vec![c.to_string()]),
            (Asset::Function(f), "template") => Some(vec![f.template.name().to_string()]),
            _ => None,
        }
    }

    pub fn matches(&self, filter: &BTreeMap<String, String>) -> bool {
        filter.iter().all(|(k, v)| self.attribute_values(k).is_some_and(|vals| vals.iter().any(|x| x == v)))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub offer: AssetOffer,
    pub withdrawn: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Catalog {
    pub entries: BTreeMap<String, CatalogEntry>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Live (published, not withdrawn) offer by id.
    pub fn live(&self, offer_id: &str) -> Option<&AssetOffer> {
        self.entries.get(offer_id).filter(|e| !e.withdrawn).map(|e| &e.offer)
    }

    /// Any offer ever published, withdrawn or not.
    pub fn get(&self, offer_id: &str) -> Option<&AssetOffer> {
        self.entries.get(offer_id).map(|e| &e.offer)
    }

    pub fn live_count(&self) -> usize {
        self.entries.values().filter(|e| !e.withdrawn).count()
    }

    pub fn consume(&mut self, offer_id: &str) {
        if let Some(e) = self.entries.get_mut(offer_id) {
            e.offer.uses_consumed += 1;
        }
    }
}

pub fn publish_offer(registry: &ParticipantRegistry, catalog: &mut Catalog, offer: OfferDocument) -> Result<String, CatalogError> {
    let owner = offer.asset.owner();
    let attrs = registry.active_attributes(owner).ok_or(CatalogError::NotOnboarded)?;
    let role = offer.asset.required_role();
    if !attrs.has_role(role) {
        return Err(CatalogError::RoleMismatch(role));
    }
    let key = registry.verify_key(owner).ok_or(CatalogError::NotOnboarded)?;
    if !key.verify(&offer_signing_bytes(&offer.asset, &offer.policy), &offer.owner_signature) {
        return Err(CatalogError::BadOfferSignature);
    }
    offer.asset.validate()?;
    offer.policy.validate().map_err(CatalogError::InvalidPolicy)?;
    match &offer.asset {
        Asset::Node(n) => {
            if n.entity != attrs.entity {
                return Err(CatalogError::AttributeMismatch("entity"));
            }
            if n.country != attrs.country {
                return Err(CatalogError::AttributeMismatch("country"));
            }
            if n.trust_zone != attrs.trust_zone {
                return Err(CatalogError::AttributeMismatch("trust_zone"));
            }
        }
        Asset::Dataset(d) => {
            if let Some(c) = &d.custodian {
                if !registry.active_attributes(c).is_some_and(|a| a.has_role(Role::Custodian)) {
                    return Err(CatalogError::RoleMismatch(Role::Custodian));
                }
            }
        }
        Asset::Function(_) => {}
    }
    let offer_id = offer.offer_id();
    match catalog.entries.get_mut(&offer_id) {
        Some(entry) => entry.withdrawn = false,
        None => {
            catalog.entries.insert(offer_id.clone(), CatalogEntry { offer: offer.into_offer(), withdrawn: false });
        }
    }
    Ok(offer_id)
}

/// Live, unexpired offers matching every filter entry, sorted by offer id.
pub fn browse<'a>(catalog: &'a Catalog, filter: &BTreeMap<String, String>, kind: Option<AssetKind>, now: u64) -> Vec<&'a AssetOffer> {
    catalog
        .entries
        .values()
        .filter(|e| !e.withdrawn && now < e.offer.policy.expiry)
        .map(|e| &e.offer)
        .filter(|o| kind.is_none_or(|k| o.kind() == k) && o.matches(filter))
        .collect()
}

pub fn withdraw_offer(catalog: &mut Catalog, owner: &ParticipantId, offer_id: &str) -> Result<(), CatalogError> {
    let entry = catalog
        .entries
        .get_mut(offer_id)
        .filter(|e| !e.withdrawn)
        .ok_or_else(|| CatalogError::UnknownOffer(offer_id.into()))?;
    if entry.offer.owner() != owner {
        return Err(CatalogError::NotOwner);
    }
    entry.withdrawn = true;
    Ok(())
}
