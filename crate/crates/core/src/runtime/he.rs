//! Additive masking stand-in for FHE. It keeps the deployment shape of a
//! single evaluating node with public, private and threshold keys, but it is
//! a simulation and offers no cryptographic security.
//!
//! The mask of nonce `i` under key `s` is `s * H(i)`, where `H` hashes the
//! nonce into the non-zero field elements. Because the mask is linear in `s`,
//! additive fragments of `s` yield additive partial decryptions.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::RuntimeError;
use crate::canonical::digest_hex;
use crate::mpc::{Circuit, Fe, Field, Gate};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeKeyMaterial {
    pub modulus: u64,
    /// Private key: big-endian field element.
    pub secret_seed: Vec<u8>,
    /// Public key analog. Names the key; cannot decrypt.
    pub public_handle: String,
    /// Additive fragments of the private key held by a decryption committee.
    pub committee_splits: Option<Vec<Vec<u8>>>,
    #[serde(default)]
    used_nonces: BTreeSet<u64>,
}

fn fe_bytes(v: Fe) -> Vec<u8> {
    v.value().to_be_bytes().to_vec()
}

fn bytes_fe(field: &Field, bytes: &[u8]) -> Result<Fe, RuntimeError> {
    let arr: [u8; 8] = bytes.try_into().map_err(|_| RuntimeError::Protocol("key material must be 8 bytes"))?;
    field.try_elem(u64::from_be_bytes(arr)).ok_or(RuntimeError::Protocol("key material outside the field"))
}

impl HeKeyMaterial {
    /// Fresh key; with `committee = Some(d)` the key is also split into d
    /// additive fragments.
    pub fn generate<R: Rng + ?Sized>(field: &Field, committee: Option<usize>, rng: &mut R) -> Result<Self, RuntimeError> {
        let secret = field.random(rng);
        let committee_splits = match committee {
            None => None,
            Some(d) if d < 2 => return Err(RuntimeError::Protocol("a decryption committee needs at least two members")),
            Some(d) => {
                let mut parts: Vec<Fe> = (0..d - 1).map(|_| field.random(rng)).collect();
                let last = field.sub(secret, field.sum(parts.iter().copied()));
                parts.push(last);
                Some(parts.into_iter().map(fe_bytes).collect())
            }
        };
        Ok(Self::from_parts(field, secret, committee_splits))
    }

    fn from_parts(field: &Field, secret: Fe, committee_splits: Option<Vec<Vec<u8>>>) -> Self {
        let secret_seed = fe_bytes(secret);
        let mut tagged = b"ds-mock-he-public".to_vec();
        tagged.extend_from_slice(&secret_seed);
        HeKeyMaterial {
            modulus: field.modulus(),
            public_handle: digest_hex(&tagged),
            secret_seed,
            committee_splits,
            used_nonces: BTreeSet::new(),
        }
    }

    pub fn field(&self) -> Result<Field, RuntimeError> {
        Ok(Field::new(self.modulus)?)
    }

    pub fn secret(&self) -> Result<Fe, RuntimeError> {
        bytes_fe(&self.field()?, &self.secret_seed)
    }

    pub fn fragments(&self) -> Result<Vec<Fe>, RuntimeError> {
        let field = self.field()?;
        match &self.committee_splits {
            Some(parts) => parts.iter().map(|p| bytes_fe(&field, p)).collect(),
            None => Ok(Vec::new()),
        }
    }

    /// True when the committee fragments add up to the private key.
    pub fn splits_consistent(&self) -> bool {
        match (self.field(), self.secret(), self.fragments()) {
            (Ok(f), Ok(s), Ok(parts)) => self.committee_splits.is_none() || f.sum(parts) == s,
            _ => false,
        }
    }
}

/// Public nonce hash into the non-zero field elements.
pub fn nonce_point(field: &Field, nonce_index: u64) -> Fe {
    let mut input = b"ds-mock-he-nonce".to_vec();
    input.extend_from_slice(&nonce_index.to_be_bytes());
    let digest = crate::canonical::sha256(&input);
    let raw = u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"));
    let v = field.elem(raw);
    if v == Fe::ZERO {
        Fe::ONE
    } else {
        v
    }
}

/// Keyed pseudo-random mask for one nonce.
pub fn prf(field: &Field, key: Fe, nonce_index: u64) -> Fe {
    field.mul(key, nonce_point(field, nonce_index))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeCiphertext {
    pub c: Fe,
    /// (nonce_index, weight) pairs; weights of equal nonces are merged.
    pub mask_terms: Vec<(u64, Fe)>,
}

impl HeCiphertext {
    pub fn constant(v: Fe) -> Self {
        HeCiphertext { c: v, mask_terms: Vec::new() }
    }

    fn combine(field: &Field, a: &HeCiphertext, b: &HeCiphertext, scale_b: Fe) -> HeCiphertext {
        let mut terms: BTreeMap<u64, Fe> = a.mask_terms.iter().copied().collect();
        for &(nonce, w) in &b.mask_terms {
            let e = terms.entry(nonce).or_insert(Fe::ZERO);
            *e = field.add(*e, field.mul(w, scale_b));
        }
        HeCiphertext { c: field.add(a.c, field.mul(b.c, scale_b)), mask_terms: terms.into_iter().filter(|(_, w)| *w != Fe::ZERO).collect() }
    }

    fn scale(&self, field: &Field, k: Fe) -> HeCiphertext {
        HeCiphertext {
            c: field.mul(self.c, k),
            mask_terms: self.mask_terms.iter().map(|&(n, w)| (n, field.mul(w, k))).filter(|(_, w)| *w != Fe::ZERO).collect(),
        }
    }

    fn mask_under(&self, field: &Field, key: Fe) -> Fe {
        field.sum(self.mask_terms.iter().map(|&(n, w)| field.mul(w, prf(field, key, n))))
    }
}

/// c = m + PRF(key, nonce). Each nonce may be used once per key.
pub fn he_encrypt(m: Fe, key: &mut HeKeyMaterial, nonce_index: u64) -> Result<HeCiphertext, RuntimeError> {
    let field = key.field()?;
    if !key.used_nonces.insert(nonce_index) {
        return Err(RuntimeError::NonceReuse(nonce_index));
    }
    let secret = key.secret()?;
    let m = field.elem(m.value());
    Ok(HeCiphertext { c: field.add(m, prf(&field, secret, nonce_index)), mask_terms: alloc::vec![(nonce_index, Fe::ONE)] })
}

pub fn he_decrypt(ct: &HeCiphertext, key: &HeKeyMaterial) -> Result<Fe, RuntimeError> {
    let field = key.field()?;
    Ok(field.sub(ct.c, ct.mask_under(&field, key.secret()?)))
}

/// Homomorphic evaluation of an additive circuit on a single node.
pub fn he_eval(circuit: &Circuit, ciphertexts: &[HeCiphertext], field: &Field) -> Result<Vec<HeCiphertext>, RuntimeError> {
    circuit.validate()?;
    if ciphertexts.len() != circuit.arity {
        return Err(crate::mpc::MpcError::ArityMismatch { expected: circuit.arity, got: ciphertexts.len() }.into());
    }
    let mut wires: Vec<HeCiphertext> = Vec::with_capacity(circuit.gates.len());
    for gate in &circuit.gates {
        let w = |i: u32| &wires[i as usize];
        let ct = match *gate {
            Gate::Input { party, bit: None } => ciphertexts[party].clone(),
            Gate::Input { .. } => return Err(RuntimeError::UnsupportedGate("INPUT(bit)")),
            Gate::Const { value } => HeCiphertext::constant(field.elem(value.value())),
            Gate::Add { a, b } => HeCiphertext::combine(field, w(a), w(b), Fe::ONE),
            Gate::Sub { a, b } => HeCiphertext::combine(field, w(a), w(b), field.neg(Fe::ONE)),
            Gate::CMul { a, k } => w(a).scale(field, field.elem(k.value())),
            Gate::Mul { .. } => return Err(RuntimeError::UnsupportedGate("MUL")),
            Gate::Output { a, .. } => w(a).clone(),
        };
        wires.push(ct);
    }
    Ok(circuit.output_wires().into_iter().map(|w| wires[w as usize].clone()).collect())
}

/// Committee member's share of the mask: its fragment applied to the
/// ciphertext's mask terms.
pub fn partial_decrypt(ct: &HeCiphertext, fragment: Fe, field: &Field) -> Fe {
    ct.mask_under(field, fragment)
}

/// m = c - sum of partials; requires one partial from each of the d members.
pub fn he_threshold_decrypt(ct: &HeCiphertext, partials: &[Option<Fe>], field: &Field) -> Result<Fe, RuntimeError> {
    let got = partials.iter().flatten().count();
    if got < partials.len() || partials.is_empty() {
        return Err(RuntimeError::MissingPartial { needed: partials.len(), got });
    }
    Ok(field.sub(ct.c, field.sum(partials.iter().flatten().copied())))
}
