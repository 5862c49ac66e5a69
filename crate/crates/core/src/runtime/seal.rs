//! Per-node authenticated encryption of stored shares: X25519 agreement
//! between custodian and node, ChaCha20-Poly1305 over the share bytes.

use alloc::string::String;
use alloc::vec::Vec;

use chacha20poly1305::aead::AeadInPlace;
use chacha20poly1305::{ChaCha20Poly1305, Key, KeyInit, Nonce, Tag};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use x25519_dalek::{PublicKey, StaticSecret};

use crate::canonical::b64;

/// (nonce, ciphertext, tag) triple.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SealedBlob {
    #[serde(with = "b64")]
    pub nonce: Vec<u8>,
    #[serde(with = "b64")]
    pub ciphertext: Vec<u8>,
    #[serde(with = "b64")]
    pub tag: Vec<u8>,
}

impl SealedBlob {
    pub fn len(&self) -> usize {
        self.nonce.len() + self.ciphertext.len() + self.tag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// X25519 key pair; serialized as the hex secret.
#[derive(Clone)]
pub struct EncryptionKeyPair {
    secret: StaticSecret,
}

impl Serialize for EncryptionKeyPair {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.secret.to_bytes()))
    }
}

impl<'de> Deserialize<'de> for EncryptionKeyPair {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        let bytes: [u8; 32] = hex::decode(&text)
            .ok()
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| serde::de::Error::custom("expected 32 hex-encoded bytes"))?;
        Ok(EncryptionKeyPair::from_secret_bytes(bytes))
    }
}

impl EncryptionKeyPair {
    pub fn from_rng<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut bytes = [0u8; 32];
        rng.fill_bytes(&mut bytes);
        EncryptionKeyPair { secret: StaticSecret::from(bytes) }
    }

    pub fn from_secret_bytes(bytes: [u8; 32]) -> Self {
        EncryptionKeyPair { secret: StaticSecret::from(bytes) }
    }

    pub fn secret_bytes(&self) -> [u8; 32] {
        self.secret.to_bytes()
    }

    pub fn public_hex(&self) -> String {
        hex::encode(PublicKey::from(&self.secret).as_bytes())
    }

    fn cipher(&self, peer_hex: &str) -> Option<ChaCha20Poly1305> {
        let bytes: [u8; 32] = hex::decode(peer_hex).ok()?.try_into().ok()?;
        let shared = self.secret.diffie_hellman(&PublicKey::from(bytes));
        let mut h = Sha256::new();
        h.update(b"ds-seal-v1");
        h.update(shared.as_bytes());
        let key: [u8; 32] = h.finalize().into();
        Some(ChaCha20Poly1305::new(Key::from_slice(&key)))
    }

    /// Seals `plaintext` for the holder of `recipient_hex`.
    pub fn seal<R: RngCore + ?Sized>(&self, recipient_hex: &str, plaintext: &[u8], rng: &mut R) -> Option<SealedBlob> {
        let cipher = self.cipher(recipient_hex)?;
        let mut nonce = [0u8; 12];
        rng.fill_bytes(&mut nonce);
        let mut buf = plaintext.to_vec();
        let tag = cipher.encrypt_in_place_detached(Nonce::from_slice(&nonce), b"", &mut buf).ok()?;
        Some(SealedBlob { nonce: nonce.to_vec(), ciphertext: buf, tag: tag.to_vec() })
    }

    /// Opens a blob sealed by the holder of `sender_hex`.
    pub fn open(&self, sender_hex: &str, blob: &SealedBlob) -> Option<Vec<u8>> {
        if blob.nonce.len() != 12 || blob.tag.len() != 16 {
            return None;
        }
        let cipher = self.cipher(sender_hex)?;
        let mut buf = blob.ciphertext.clone();
        cipher
            .decrypt_in_place_detached(Nonce::from_slice(&blob.nonce), b"", &mut buf, Tag::from_slice(&blob.tag))
            .ok()?;
        Some(buf)
    }
}
