//! Compute-node actors, the simulated transport, round-synchronous session
//! execution and the single-node mock-HE path.

use crate::mpc::MpcError;

mod he;
mod message;
mod node;
mod seal;
mod session;
mod transport;

pub use he::{
    he_decrypt, he_encrypt, he_eval, he_threshold_decrypt, nonce_point, partial_decrypt, prf, HeCiphertext,
    HeKeyMaterial,
};
pub use message::{Endpoint, InputPart, Message, MessageKind, Opening, OutputShare, PartValue, Payload, MAX_PAYLOAD};
pub use node::{ComputeNode, NodeConfig, Phase};
pub use seal::{EncryptionKeyPair, SealedBlob};
pub use session::{execute_session, open_outputs, Cluster, Session, SessionOutput, CONSUMER};
pub use transport::{check_transcript_timing, SimTransport, TranscriptRecord, TransportConfig};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RuntimeError {
    #[error("node index {0} already started")]
    DuplicateIndex(u16),
    #[error("unknown node {0}")]
    UnknownNode(u16),
    #[error("node {node} is missing input shares")]
    MissingInput { node: u16 },
    #[error("node {node} needs {needed} triples, has {available}")]
    TripleExhausted { node: u16, needed: usize, available: usize },
    #[error("round {round} did not complete within the time budget")]
    Timeout { round: u32 },
    #[error("payload of {0} bytes exceeds the limit")]
    PayloadTooLarge(usize),
    #[error("protocol violation: {0}")]
    Protocol(&'static str),
    #[error("sealed share could not be opened")]
    Seal,
    #[error(transparent)]
    Mpc(#[from] MpcError),
    #[error("nonce {0} already used under this key")]
    NonceReuse(u64),
    #[error("gate {0} not supported by the additive backend")]
    UnsupportedGate(&'static str),
    #[error("need {needed} partial decryptions, got {got}")]
    MissingPartial { needed: usize, got: usize },
}

impl RuntimeError {
    pub fn code(&self) -> &'static str {
        match self {
            RuntimeError::DuplicateIndex(_) => "DUPLICATE_INDEX",
            RuntimeError::UnknownNode(_) => "UNKNOWN_NODE",
            RuntimeError::MissingInput { .. } => "MISSING_INPUT",
            RuntimeError::TripleExhausted { .. } => "TRIPLE_EXHAUSTED",
            RuntimeError::Timeout { .. } => "TIMEOUT",
            RuntimeError::PayloadTooLarge(_) => "PAYLOAD_TOO_LARGE",
            RuntimeError::Protocol(_) => "PROTOCOL",
            RuntimeError::Seal => "SEAL",
            RuntimeError::Mpc(MpcError::InsufficientShares { .. }) => "INSUFFICIENT_SHARES",
            RuntimeError::Mpc(MpcError::InconsistentShares) => "INCONSISTENT_SHARES",
            RuntimeError::Mpc(_) => "MPC",
            RuntimeError::NonceReuse(_) => "NONCE_REUSE",
            RuntimeError::UnsupportedGate(_) => "UNSUPPORTED_GATE",
            RuntimeError::MissingPartial { .. } => "MISSING_PARTIAL",
        }
    }
}
