use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use super::seal::SealedBlob;
use super::{HeCiphertext, RuntimeError};
use crate::canonical::{b64, to_canonical_bytes};
use crate::mpc::{Fe, Share, WireId};

/// Upper bound on a single message payload.
pub const MAX_PAYLOAD: usize = 1 << 20;

/// A compute node (by 1-based index) or a named off-cluster role such as
/// `consumer`, `custodian` or `committee:2`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Endpoint {
    Node(u16),
    Party(String),
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Node(i) => write!(f, "node{i}"),
            Endpoint::Party(p) => f.write_str(p),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MessageKind {
    InputShare,
    BeaverOpen,
    OutputFragment,
    Control,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Message {
    pub session_id: String,
    pub round: u32,
    pub from: Endpoint,
    pub to: Endpoint,
    pub kind: MessageKind,
    #[serde(with = "b64")]
    pub payload: Vec<u8>,
}

impl Message {
    pub fn new(session_id: &str, round: u32, from: Endpoint, to: Endpoint, kind: MessageKind, payload: &Payload) -> Result<Self, RuntimeError> {
        let payload = to_canonical_bytes(payload);
        if payload.len() > MAX_PAYLOAD {
            return Err(RuntimeError::PayloadTooLarge(payload.len()));
        }
        Ok(Message { session_id: session_id.into(), round, from, to, kind, payload })
    }

    pub fn decode(&self) -> Result<Payload, RuntimeError> {
        if self.payload.len() > MAX_PAYLOAD {
            return Err(RuntimeError::PayloadTooLarge(self.payload.len()));
        }
        serde_json::from_slice(&self.payload).map_err(|_| RuntimeError::Protocol("undecodable payload"))
    }

    /// The (session, round, from, to, kind) tuple that must be unique per
    /// transmission.
    pub fn key(&self) -> (String, u32, Endpoint, Endpoint, MessageKind) {
        (self.session_id.clone(), self.round, self.from.clone(), self.to.clone(), self.kind)
    }
}

/// One contribution to a node's input wire. A wire is complete once
/// `parts_expected` parts have arrived; its share is the sum of the parts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputPart {
    pub wire: WireId,
    pub parts_expected: u32,
    pub part: PartValue,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartValue {
    /// A plain Shamir share addressed to this node.
    Share(Share),
    /// A public constant every node adds as-is.
    Public(Fe),
    /// A share sealed for this node by the custodian.
    Sealed { sender_key: String, blob: SealedBlob },
    /// A mock-HE ciphertext for the single-node path.
    Cipher(HeCiphertext),
}

/// A node's fragments of the masked differences for one MUL gate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Opening {
    pub gate: WireId,
    pub d: Fe,
    pub e: Fe,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputShare {
    pub wire: WireId,
    pub share: Share,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    Inputs(Vec<InputPart>),
    Openings(Vec<Opening>),
    Outputs(Vec<OutputShare>),
    CipherOutputs(Vec<HeCiphertext>),
    /// Partial decryptions from one committee member, one per output.
    Partials(Vec<Fe>),
}
