//! Onboarding: trust-anchor-signed attribute credentials and the participant
//! registry.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::canonical::{b64, digest_hex, to_canonical_bytes};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IdentityError {
    #[error("invalid attributes: {0}")]
    InvalidAttributes(&'static str),
    #[error("credential rejected: {0}")]
    Rejected(CredentialStatus),
    #[error("a different credential is already registered for this key")]
    DuplicateKey,
    #[error("unknown participant {0}")]
    UnknownParticipant(ParticipantId),
}

/// Public ed25519 verification key, 32 bytes, base64 on the wire.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VerifyKey([u8; 32]);

impl VerifyKey {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        let arr: [u8; 32] = bytes.try_into().ok()?;
        VerifyingKey::from_bytes(&arr).ok()?;
        Some(VerifyKey(arr))
    }

    pub fn verify(&self, message: &[u8], signature: &[u8]) -> bool {
        let Ok(key) = VerifyingKey::from_bytes(&self.0) else { return false };
        let Ok(sig) = ed25519_dalek::Signature::from_slice(signature) else { return false };
        key.verify(message, &sig).is_ok()
    }

    /// Participant id: hex SHA-256 of the key bytes.
    pub fn participant_id(&self) -> ParticipantId {
        ParticipantId(digest_hex(&self.0))
    }
}

impl fmt::Debug for VerifyKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VerifyKey({})", b64::encode(&self.0))
    }
}

impl Serialize for VerifyKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        b64::serialize(&self.0, s)
    }
}

impl<'de> Deserialize<'de> for VerifyKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let bytes = b64::deserialize(d)?;
        VerifyKey::from_bytes(&bytes).ok_or_else(|| serde::de::Error::custom("not a valid ed25519 key"))
    }
}

#[derive(Clone)]
pub struct KeyPair {
    signing: SigningKey,
}

impl KeyPair {
    pub fn from_rng<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut secret = [0u8; 32];
        rng.fill_bytes(&mut secret);
        KeyPair { signing: SigningKey::from_bytes(&secret) }
    }

    pub fn from_secret_bytes(secret: &[u8; 32]) -> Self {
        KeyPair { signing: SigningKey::from_bytes(secret) }
    }

    pub fn secret_bytes(&self) -> [u8; 32] {
        self.signing.to_bytes()
    }

    pub fn verify_key(&self) -> VerifyKey {
        VerifyKey(self.signing.verifying_key().to_bytes())
    }

    pub fn participant_id(&self) -> ParticipantId {
        self.verify_key().participant_id()
    }

    /// Deterministic ed25519 signature (64 bytes).
    pub fn sign(&self, message: &[u8]) -> Vec<u8> {
        self.signing.sign(message).to_bytes().to_vec()
    }
}

/// Serialized as the hex secret key.
impl Serialize for KeyPair {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.secret_bytes()))
    }
}

impl<'de> Deserialize<'de> for KeyPair {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        let bytes: [u8; 32] = hex::decode(&text)
            .ok()
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| serde::de::Error::custom("expected 32 hex-encoded bytes"))?;
        Ok(KeyPair::from_secret_bytes(&bytes))
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair").field("verify_key", &self.verify_key()).finish_non_exhaustive()
    }
}

pub fn generate_keypair(seed: u64) -> KeyPair {
    KeyPair::from_rng(&mut ChaCha20Rng::seed_from_u64(seed))
}

/// Hex digest of a participant's verification key.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParticipantId(pub String);

impl From<&str> for ParticipantId {
    fn from(s: &str) -> Self {
        ParticipantId(s.into())
    }
}

impl ParticipantId {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// First 12 hex digits, for reports.
    pub fn short(&self) -> &str {
        &self.0[..self.0.len().min(12)]
    }
}

impl fmt::Display for ParticipantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Role {
    DataProvider,
    ComputeProvider,
    FunctionProvider,
    Consumer,
    Custodian,
    Committee,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::DataProvider => "DATA_PROVIDER",
            Role::ComputeProvider => "COMPUTE_PROVIDER",
            Role::FunctionProvider => "FUNCTION_PROVIDER",
            Role::Consumer => "CONSUMER",
            Role::Custodian => "CUSTODIAN",
            Role::Committee => "COMMITTEE",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeSet {
    pub entity: String,
    /// ISO-3166 alpha-2.
    pub country: String,
    pub trust_zone: String,
    pub roles: BTreeSet<Role>,
    #[serde(default)]
    pub display_name: String,
}

impl AttributeSet {
    pub fn new(entity: &str, country: &str, trust_zone: &str, roles: &[Role]) -> Self {
        AttributeSet {
            entity: entity.into(),
            country: country.into(),
            trust_zone: trust_zone.into(),
            roles: roles.iter().copied().collect(),
            display_name: entity.into(),
        }
    }

    pub fn validate(&self) -> Result<(), IdentityError> {
        if self.entity.is_empty() {
            return Err(IdentityError::InvalidAttributes("entity must be non-empty"));
        }
        if self.country.len() != 2 || !self.country.bytes().all(|b| b.is_ascii_uppercase()) {
            return Err(IdentityError::InvalidAttributes("country must be two uppercase letters"));
        }
        if self.roles.is_empty() {
            return Err(IdentityError::InvalidAttributes("at least one role is required"));
        }
        Ok(())
    }

    pub fn has_role(&self, role: Role) -> bool {
        self.roles.contains(&role)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Credential {
    pub subject_key: VerifyKey,
    pub attributes: AttributeSet,
    pub anchor_id: String,
    pub issued_at: u64,
    #[serde(with = "b64")]
    pub signature: Vec<u8>,
}

#[derive(Serialize)]
struct CredentialBody<'a> {
    subject_key: &'a VerifyKey,
    attributes: &'a AttributeSet,
    anchor_id: &'a str,
    issued_at: u64,
}

impl Credential {
    /// Canonical bytes covered by the anchor signature.
    pub fn signed_bytes(&self) -> Vec<u8> {
        signed_bytes(&self.subject_key, &self.attributes, &self.anchor_id, self.issued_at)
    }

    pub fn participant_id(&self) -> ParticipantId {
        self.subject_key.participant_id()
    }
}

fn signed_bytes(subject: &VerifyKey, attributes: &AttributeSet, anchor_id: &str, issued_at: u64) -> Vec<u8> {
    to_canonical_bytes(&CredentialBody { subject_key: subject, attributes, anchor_id, issued_at })
}

pub fn issue_credential(
    anchor: &KeyPair,
    anchor_id: &str,
    subject: VerifyKey,
    attributes: AttributeSet,
    issued_at: u64,
) -> Result<Credential, IdentityError> {
    attributes.validate()?;
    let signature = anchor.sign(&signed_bytes(&subject, &attributes, anchor_id, issued_at));
    Ok(Credential { subject_key: subject, attributes, anchor_id: anchor_id.into(), issued_at, signature })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CredentialStatus {
    Valid,
    UnknownAnchor,
    BadSignature,
}

impl fmt::Display for CredentialStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CredentialStatus::Valid => "VALID",
            CredentialStatus::UnknownAnchor => "UNKNOWN_ANCHOR",
            CredentialStatus::BadSignature => "BAD_SIGNATURE",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MemberStatus {
    Active,
    Revoked,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Member {
    pub credential: Credential,
    pub status: MemberStatus,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantRegistry {
    pub anchors: BTreeMap<String, VerifyKey>,
    pub members: BTreeMap<ParticipantId, Member>,
}

impl ParticipantRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_anchor(&mut self, anchor_id: &str, key: VerifyKey) {
        self.anchors.insert(anchor_id.into(), key);
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn member(&self, id: &ParticipantId) -> Option<&Member> {
        self.members.get(id)
    }

    /// Attributes of an ACTIVE member.
    pub fn active_attributes(&self, id: &ParticipantId) -> Option<&AttributeSet> {
        self.members.get(id).filter(|m| m.status == MemberStatus::Active).map(|m| &m.credential.attributes)
    }

    pub fn is_active(&self, id: &ParticipantId) -> bool {
        self.active_attributes(id).is_some()
    }

    pub fn verify_key(&self, id: &ParticipantId) -> Option<VerifyKey> {
        self.members.get(id).map(|m| m.credential.subject_key)
    }

    pub fn revoke(&mut self, id: &ParticipantId) -> Result<(), IdentityError> {
        let member = self.members.get_mut(id).ok_or_else(|| IdentityError::UnknownParticipant(id.clone()))?;
        member.status = MemberStatus::Revoked;
        Ok(())
    }

    /// Every member's credential still verifies against a registered anchor.
    pub fn check_invariants(&self) -> bool {
        self.members.iter().all(|(id, m)| {
            *id == m.credential.participant_id() && verify_credential(&m.credential, self) == CredentialStatus::Valid
        })
    }
}

pub fn verify_credential(c: &Credential, registry: &ParticipantRegistry) -> CredentialStatus {
    let Some(anchor) = registry.anchors.get(&c.anchor_id) else {
        return CredentialStatus::UnknownAnchor;
    };
    if anchor.verify(&c.signed_bytes(), &c.signature) {
        CredentialStatus::Valid
    } else {
        CredentialStatus::BadSignature
    }
}

/// Registers the credential's subject as an ACTIVE member. Re-onboarding the
/// identical credential is a no-op returning the same id.
pub fn onboard(registry: &mut ParticipantRegistry, c: &Credential) -> Result<ParticipantId, IdentityError> {
    match verify_credential(c, registry) {
        CredentialStatus::Valid => {}
        failed => return Err(IdentityError::Rejected(failed)),
    }
    let id = c.participant_id();
    if let Some(existing) = registry.members.get(&id) {
        return if existing.credential == *c { Ok(id) } else { Err(IdentityError::DuplicateKey) };
    }
    registry.members.insert(id.clone(), Member { credential: c.clone(), status: MemberStatus::Active });
    Ok(id)
}
