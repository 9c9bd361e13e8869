//! ECIES-style IND-CCA encryption: ephemeral `g^r`, key derived from the
//! shared point, ChaCha20-Poly1305 with the kem as associated data.

use chacha20poly1305::aead::{AeadInPlace, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce, Tag};
use rand_core::CryptoRngCore;
use sha3::{Digest as _, Sha3_256};

use super::group::{GroupElement, Scalar, ELEMENT_LEN};
use super::CryptoError;

pub const TAG_LEN: usize = 16;
const LEN_PREFIX: usize = 4;
const KEY_DOMAIN: &[u8] = b"ctrace/cca-key/v1";

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CcaCiphertext {
    pub kem: GroupElement,
    pub body: Vec<u8>,
    pub tag: [u8; TAG_LEN],
}

impl CcaCiphertext {
    /// `kem(32) || u32be(len body) || body || tag(16)`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(self.kem.as_bytes());
        out.extend_from_slice(&(self.body.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.body);
        out.extend_from_slice(&self.tag);
        out
    }

    pub fn encoded_len(&self) -> usize {
        ELEMENT_LEN + LEN_PREFIX + self.body.len() + TAG_LEN
    }

    /// Strict parse: the length field must account for every byte.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() < ELEMENT_LEN + LEN_PREFIX + TAG_LEN {
            return Err(CryptoError::Malformed("inner ciphertext too short"));
        }
        let kem = GroupElement::from_bytes(&bytes[..ELEMENT_LEN])?;
        let len_bytes: [u8; 4] = bytes[ELEMENT_LEN..ELEMENT_LEN + LEN_PREFIX]
            .try_into()
            .expect("slice of length 4");
        let body_len = u32::from_be_bytes(len_bytes) as usize;
        let body_start = ELEMENT_LEN + LEN_PREFIX;
        if bytes.len() - body_start - TAG_LEN != body_len {
            return Err(CryptoError::Malformed("inner length field mismatch"));
        }
        let body = bytes[body_start..body_start + body_len].to_vec();
        let tag = bytes[body_start + body_len..]
            .try_into()
            .expect("remaining bytes are the tag");
        Ok(CcaCiphertext { kem, body, tag })
    }
}

fn cipher(kem: &GroupElement, shared: &curve25519_dalek::ristretto::RistrettoPoint) -> ChaCha20Poly1305 {
    let mut h = Sha3_256::new();
    h.update(KEY_DOMAIN);
    h.update(kem.as_bytes());
    h.update(shared.compress().as_bytes());
    let key: [u8; 32] = h.finalize().into();
    ChaCha20Poly1305::new(Key::from_slice(&key))
}

// Every key is derived from a fresh ephemeral scalar, so a fixed nonce is never reused
// under the same key.
fn nonce() -> Nonce {
    Nonce::default()
}

pub fn xenc<R: CryptoRngCore + ?Sized>(pk: &GroupElement, m: &[u8], rng: &mut R) -> CcaCiphertext {
    let r = Scalar::random(rng);
    let kem = r.public();
    let shared = pk.point() * r.0;
    let mut body = m.to_vec();
    let tag = cipher(&kem, &shared)
        .encrypt_in_place_detached(&nonce(), kem.as_bytes(), &mut body)
        .expect("chacha20poly1305 accepts any in-memory length");
    CcaCiphertext {
        kem,
        body,
        tag: tag.into(),
    }
}

pub fn xdec(sk: &Scalar, c: &CcaCiphertext) -> Result<Vec<u8>, CryptoError> {
    let shared = c.kem.point() * sk.0;
    let mut body = c.body.clone();
    cipher(&c.kem, &shared)
        .decrypt_in_place_detached(&nonce(), c.kem.as_bytes(), &mut body, Tag::from_slice(&c.tag))
        .map_err(|_| CryptoError::AuthFailed)?;
    Ok(body)
}
