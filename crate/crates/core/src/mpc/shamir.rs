use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Fe, Field, MpcError, MpcParams};

/// One party's evaluation of a sharing polynomial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Share {
    pub node_index: u16,
    pub value: Fe,
}

/// Independent sharings of each bit of a value, most significant bit first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitShares {
    pub bits: Vec<Vec<Share>>,
}

impl BitShares {
    /// The shares held by `node_index` (1-based), MSB first.
    pub fn for_node(&self, node_index: u16) -> Vec<Share> {
        self.bits.iter().map(|s| s[node_index as usize - 1]).collect()
    }
}

/// Shares `secret` with a fresh degree-t polynomial.
pub fn share<R: Rng + ?Sized>(secret: Fe, params: &MpcParams, rng: &mut R) -> Result<Vec<Share>, MpcError> {
    let field = params.validate()?;
    let coeffs: Vec<Fe> = (0..params.t).map(|_| field.random(rng)).collect();
    Ok(evaluate(&field, secret, &coeffs, params.n))
}

/// Shares `secret` with the polynomial `secret + c1 x + ... + ct x^t`.
pub fn share_with_coefficients(secret: Fe, coeffs: &[Fe], params: &MpcParams) -> Result<Vec<Share>, MpcError> {
    let field = params.validate()?;
    if coeffs.len() != params.t {
        return Err(MpcError::ParamInvalid("expected exactly t coefficients".into()));
    }
    Ok(evaluate(&field, field.elem(secret.value()), coeffs, params.n))
}

fn evaluate(field: &Field, secret: Fe, coeffs: &[Fe], n: usize) -> Vec<Share> {
    (1..=n as u16)
        .map(|i| {
            let x = field.elem(i as u64);
            // Horner, highest coefficient first.
            let tail = coeffs.iter().rev().fold(Fe::ZERO, |acc, &c| field.add(field.mul(acc, x), c));
            Share { node_index: i, value: field.add(field.mul(tail, x), secret) }
        })
        .collect()
}

/// Lagrange interpolation of `points` evaluated at `x`.
pub fn interpolate_at(field: &Field, points: &[Share], x: Fe) -> Fe {
    let mut acc = Fe::ZERO;
    for (i, pi) in points.iter().enumerate() {
        let xi = field.elem(pi.node_index as u64);
        let mut num = Fe::ONE;
        let mut den = Fe::ONE;
        for (j, pj) in points.iter().enumerate() {
            if i == j {
                continue;
            }
            let xj = field.elem(pj.node_index as u64);
            num = field.mul(num, field.sub(x, xj));
            den = field.mul(den, field.sub(xi, xj));
        }
        let basis = field.mul(num, field.inv(den).expect("distinct nodes give non-zero denominators"));
        acc = field.add(acc, field.mul(pi.value, basis));
    }
    acc
}

/// Interpolates the secret from at least t+1 shares. When more than t+1 are
/// given, every extra share must lie on the polynomial fixed by the first t+1.
pub fn reconstruct(shares: &[Share], params: &MpcParams) -> Result<Fe, MpcError> {
    let field = params.validate()?;
    let needed = params.t + 1;
    if shares.len() < needed {
        return Err(MpcError::InsufficientShares { needed, got: shares.len() });
    }
    let mut seen = alloc::collections::BTreeSet::new();
    for s in shares {
        if s.node_index == 0 || s.node_index as usize > params.n || !seen.insert(s.node_index) {
            return Err(MpcError::BadShareIndex(s.node_index));
        }
        if s.value.value() >= field.modulus() {
            return Err(MpcError::InconsistentShares);
        }
    }
    let (basis, extra) = shares.split_at(needed);
    for s in extra {
        if interpolate_at(&field, basis, field.elem(s.node_index as u64)) != s.value {
            return Err(MpcError::InconsistentShares);
        }
    }
    Ok(interpolate_at(&field, basis, Fe::ZERO))
}

/// Shares the k-bit binary expansion of `value`, MSB first.
pub fn share_bits<R: Rng + ?Sized>(value: u64, params: &MpcParams, rng: &mut R) -> Result<BitShares, MpcError> {
    params.validate()?;
    let limit = params.bit_limit();
    if value >= limit {
        return Err(MpcError::OutOfRange { value, limit });
    }
    let bits = (0..params.bit_width)
        .rev()
        .map(|pos| share(if (value >> pos) & 1 == 1 { Fe::ONE } else { Fe::ZERO }, params, rng))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(BitShares { bits })
}

/// Reconstructs each bit sharing, MSB first.
pub fn reconstruct_bits(bits: &BitShares, params: &MpcParams) -> Result<Vec<Fe>, MpcError> {
    bits.bits.iter().map(|s| reconstruct(s, params)).collect()
}
