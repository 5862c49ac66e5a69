//! Canonical JSON encoding and SHA-256 digests.
//!
//! Canonical form is compact JSON with object keys in lexicographic order.
//! Signatures and digests are always computed over this form.

use alloc::string::String;
use alloc::vec::Vec;

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Hex digest used as the `prev_hash` of a genesis entry.
pub const ZERO_DIGEST: &str = "0000000000000000000000000000000000000000000000000000000000000000";

pub fn to_canonical_value<T: Serialize + ?Sized>(value: &T) -> serde_json::Value {
    // serde_json::Map is BTreeMap-backed, so re-serialising through Value sorts keys.
    serde_json::to_value(value).expect("domain types serialise to JSON")
}

pub fn to_canonical_bytes<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    serde_json::to_vec(&to_canonical_value(value)).expect("JSON values serialise")
}

pub fn to_canonical_string<T: Serialize + ?Sized>(value: &T) -> String {
    String::from_utf8(to_canonical_bytes(value)).expect("serde_json emits UTF-8")
}

pub fn sha256(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

pub fn digest_hex(bytes: &[u8]) -> String {
    hex::encode(sha256(bytes))
}

/// Hex SHA-256 of the canonical encoding of `value`.
pub fn digest_of<T: Serialize + ?Sized>(value: &T) -> String {
    digest_hex(&to_canonical_bytes(value))
}

/// Serde helpers for byte strings carried as standard base64.
pub mod b64 {
    use alloc::string::String;
    use alloc::vec::Vec;

    use base64::Engine;
    use base64::engine::general_purpose::STANDARD;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn encode(bytes: &[u8]) -> String {
        STANDARD.encode(bytes)
    }

    pub fn decode(text: &str) -> Option<Vec<u8>> {
        STANDARD.decode(text).ok()
    }

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        decode(&text).ok_or_else(|| serde::de::Error::custom("invalid base64"))
    }
}
