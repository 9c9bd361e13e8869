//! Schnorr signatures over ristretto255 on 8-byte big-endian timestamps.
//!
//! Nonces are derived deterministically from the secret and the message, so
//! signing needs no randomness source.

use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoPoint};
use curve25519_dalek::scalar::Scalar as RawScalar;

use super::group::{GroupElement, KeyPair};
use super::hash::hash_to_scalar;
use super::CryptoError;

pub const SIGNATURE_LEN: usize = 64;
const NONCE_DOMAIN: &[u8] = b"ctrace/schnorr-nonce/v1";
const CHALLENGE_DOMAIN: &[u8] = b"ctrace/schnorr-challenge/v1";

/// `R(32) || s(32)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Signature(pub [u8; SIGNATURE_LEN]);

impl Signature {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        bytes
            .try_into()
            .map(Signature)
            .map_err(|_| CryptoError::Malformed("signature length"))
    }

    pub fn as_bytes(&self) -> &[u8; SIGNATURE_LEN] {
        &self.0
    }
}

pub fn encode_timestamp(t: i64) -> [u8; 8] {
    t.to_be_bytes()
}

fn challenge(r: &[u8; 32], pk: &GroupElement, msg: &[u8]) -> RawScalar {
    hash_to_scalar(CHALLENGE_DOMAIN, &[r, pk.as_bytes(), msg])
}

pub fn sign(keys: &KeyPair, t: i64) -> Signature {
    let msg = encode_timestamp(t);
    let k = hash_to_scalar(NONCE_DOMAIN, &[&keys.sk.to_bytes(), &msg]);
    let r = RistrettoPoint::mul_base(&k).compress().to_bytes();
    let s = k + challenge(&r, &keys.pk, &msg) * keys.sk.0;
    let mut out = [0u8; SIGNATURE_LEN];
    out[..32].copy_from_slice(&r);
    out[32..].copy_from_slice(&s.to_bytes());
    Signature(out)
}

pub fn verify(pk: &GroupElement, t: i64, sig: &Signature) -> bool {
    let msg = encode_timestamp(t);
    let r_bytes: [u8; 32] = sig.0[..32].try_into().expect("32-byte half");
    let s_bytes: [u8; 32] = sig.0[32..].try_into().expect("32-byte half");
    let Some(r) = CompressedRistretto(r_bytes).decompress() else {
        return false;
    };
    let Some(s) = Option::<RawScalar>::from(RawScalar::from_canonical_bytes(s_bytes)) else {
        return false;
    };
    let e = challenge(&r_bytes, pk, &msg);
    RistrettoPoint::vartime_double_scalar_mul_basepoint(&(-e), pk.point(), &s) == r
}
