//! Secure-computation mathematics: prime fields, (t,n)-Shamir sharing,
//! Beaver multiplication, and arithmetic circuits compiled from function
//! templates.

use alloc::string::String;

use serde::{Deserialize, Serialize};

mod beaver;
mod circuit;
mod compile;
mod field;
mod shamir;

pub use beaver::{beaver_combine, deal_triples, opening_fragments, TripleShare};
pub use circuit::{eval_plain, eval_plain_wires, Circuit, Gate, ValueKind, WireId};
pub use compile::{compile_comparator, compile_function, FunctionSpec, Template};
pub use field::{is_prime, Fe, Field, MERSENNE_61};
pub use shamir::{
    interpolate_at, reconstruct, reconstruct_bits, share, share_bits, share_with_coefficients, BitShares, Share,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MpcError {
    #[error("invalid parameters: {0}")]
    ParamInvalid(String),
    #[error("need at least {needed} shares, got {got}")]
    InsufficientShares { needed: usize, got: usize },
    #[error("shares do not lie on a single polynomial of the agreed degree")]
    InconsistentShares,
    #[error("share index {0} is outside 1..=n or repeated")]
    BadShareIndex(u16),
    #[error("value {value} does not fit the encoding (limit {limit})")]
    OutOfRange { value: u64, limit: u64 },
    #[error("unsupported template {0}")]
    UnsupportedTemplate(String),
    #[error("arity {got} below the template minimum {min}")]
    ArityTooSmall { got: usize, min: usize },
    #[error("circuit expects {expected} inputs, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("malformed circuit: {0}")]
    MalformedCircuit(String),
}

/// Threshold, party count, modulus and bit width of one MPC instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MpcParams {
    /// Privacy threshold: polynomial degree. Any t+1 shares reconstruct.
    pub t: usize,
    pub n: usize,
    pub p: u64,
    /// Width of bit-decomposed inputs.
    pub bit_width: u32,
}

impl MpcParams {
    pub const DEFAULT_BIT_WIDTH: u32 = 16;

    pub fn new(t: usize, n: usize) -> Self {
        MpcParams { t, n, p: MERSENNE_61, bit_width: Self::DEFAULT_BIT_WIDTH }
    }

    pub fn with_modulus(mut self, p: u64) -> Self {
        self.p = p;
        self
    }

    pub fn with_bit_width(mut self, k: u32) -> Self {
        self.bit_width = k;
        self
    }

    /// Checks every invariant and returns the field.
    pub fn validate(&self) -> Result<Field, MpcError> {
        let field = Field::new(self.p)?;
        if self.t < 1 {
            return Err(MpcError::ParamInvalid("threshold t must be at least 1".into()));
        }
        if self.n < 2 || self.t >= self.n {
            return Err(MpcError::ParamInvalid("need n >= 2 and t < n".into()));
        }
        if self.n as u64 >= self.p || self.n > u16::MAX as usize {
            return Err(MpcError::ParamInvalid("n must be below the modulus".into()));
        }
        if self.bit_width == 0 || self.bit_width >= 63 || (1u64 << self.bit_width) >= self.p {
            return Err(MpcError::ParamInvalid("2^k must be below the modulus".into()));
        }
        Ok(field)
    }

    pub fn bit_limit(&self) -> u64 {
        1u64 << self.bit_width
    }
}
