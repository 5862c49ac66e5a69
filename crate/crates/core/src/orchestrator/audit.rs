//! Hash-chained, orchestrator-signed audit log.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::canonical::{b64, digest_of, to_canonical_bytes, ZERO_DIGEST};
use crate::identity::{KeyPair, VerifyKey};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AuditKind {
    Genesis,
    Onboarded,
    OfferPublished,
    OfferWithdrawn,
    ContractSigned,
    InputsProvisioned,
    ExecutionStarted,
    OutputDelivered,
    TransactionFailed,
}

/// Security parameters fixed for the lifetime of a data space.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterFingerprint {
    pub modulus: u64,
    pub protocol_versions: Vec<String>,
    pub bit_width: u32,
    /// The orchestrator deals the Beaver triples and must be trusted for it.
    pub dealer_trust_notice: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditEntry {
    pub index: u64,
    pub kind: AuditKind,
    pub payload: serde_json::Value,
    pub payload_digest: String,
    pub prev_hash: String,
    pub entry_hash: String,
    #[serde(with = "b64")]
    pub orchestrator_signature: Vec<u8>,
}

#[derive(Serialize)]
struct HashedFields<'a> {
    index: u64,
    kind: AuditKind,
    payload_digest: &'a str,
    prev_hash: &'a str,
}

fn entry_hash(index: u64, kind: AuditKind, payload_digest: &str, prev_hash: &str) -> String {
    digest_of(&HashedFields { index, kind, payload_digest, prev_hash })
}

/// Appends a signed entry and returns a reference to it.
pub fn append_audit<'a, P: Serialize + ?Sized>(
    log: &'a mut Vec<AuditEntry>,
    kind: AuditKind,
    payload: &P,
    orchestrator: &KeyPair,
) -> &'a AuditEntry {
    let index = log.len() as u64;
    let prev_hash = log.last().map_or_else(|| String::from(ZERO_DIGEST), |e| e.entry_hash.clone());
    let payload = crate::canonical::to_canonical_value(payload);
    let payload_digest = digest_of(&payload);
    let hash = entry_hash(index, kind, &payload_digest, &prev_hash);
    let orchestrator_signature = orchestrator.sign(hash.as_bytes());
    log.push(AuditEntry { index, kind, payload, payload_digest, prev_hash, entry_hash: hash, orchestrator_signature });
    log.last().expect("just pushed")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AuditVerdict {
    Ok,
    /// Index of the first entry that fails verification.
    Broken(u64),
}

fn entry_ok(i: u64, e: &AuditEntry, prev: Option<&AuditEntry>, key: &VerifyKey) -> bool {
    let expected_prev = prev.map_or(ZERO_DIGEST, |p| p.entry_hash.as_str());
    e.index == i
        && (e.kind == AuditKind::Genesis) == (i == 0)
        && e.prev_hash == expected_prev
        && e.payload_digest == digest_of(&e.payload)
        && e.entry_hash == entry_hash(e.index, e.kind, &e.payload_digest, &e.prev_hash)
        && key.verify(e.entry_hash.as_bytes(), &e.orchestrator_signature)
}

/// Recomputes every hash, link and signature.
pub fn verify_audit_chain(log: &[AuditEntry], key: &VerifyKey) -> AuditVerdict {
    if log.is_empty() {
        return AuditVerdict::Broken(0);
    }
    for (i, e) in log.iter().enumerate() {
        let prev = if i == 0 { None } else { Some(&log[i - 1]) };
        if !entry_ok(i as u64, e, prev, key) {
            return AuditVerdict::Broken(i as u64);
        }
    }
    AuditVerdict::Ok
}

/// One canonical JSON entry per line, each terminated by a newline.
pub fn audit_to_jsonl(log: &[AuditEntry]) -> Vec<u8> {
    let mut out = Vec::new();
    for e in log {
        out.extend_from_slice(&to_canonical_bytes(e));
        out.push(b'\n');
    }
    out
}

/// Verifies a JSON Lines audit file. A line that does not parse, or that is
/// not the canonical encoding of its entry, breaks the chain at that line.
pub fn verify_audit_jsonl(bytes: &[u8], key: &VerifyKey) -> AuditVerdict {
    if bytes.last() != Some(&b'\n') {
        let lines = bytes.split(|&b| b == b'\n').count() as u64;
        return AuditVerdict::Broken(lines.saturating_sub(1));
    }
    let mut prev: Option<AuditEntry> = None;
    for (i, line) in bytes[..bytes.len() - 1].split(|&b| b == b'\n').enumerate() {
        let i = i as u64;
        let Ok(entry) = serde_json::from_slice::<AuditEntry>(line) else {
            return AuditVerdict::Broken(i);
        };
        if to_canonical_bytes(&entry) != line || !entry_ok(i, &entry, prev.as_ref(), key) {
            return AuditVerdict::Broken(i);
        }
        prev = Some(entry);
    }
    if prev.is_none() {
        return AuditVerdict::Broken(0);
    }
    AuditVerdict::Ok
}

/// Removes signatures, for comparing logs signed with different keys.
pub fn strip_signatures(log: &[AuditEntry]) -> Vec<AuditEntry> {
    log.iter().cloned().map(|mut e| {
        e.orchestrator_signature.clear();
        e
    }).collect()
}
