//! Replay-resistant encryption.
//!
//! A sender `S` encrypts `m` for the authority `A` so that it is only accepted
//! when it reached `A` through the relay `R` it was addressed to:
//!
//! ```text
//! inner    = XEnc_A(m || h(pk_R))
//! envelope = Enc_R(u32be(len inner) || inner || m')
//! ```
//!
//! The relay opens the outer layer, learns `m'` and the opaque `inner`, and
//! forwards `inner` together with its own public key. The authority accepts
//! only if the embedded digest matches `h(pk_R)`, so an adversary that opens an
//! envelope addressed to its own key and re-wraps the inner ciphertext for
//! somebody else gets rejected.

use rand_core::CryptoRngCore;
use thiserror::Error;

use super::cca::{xdec, xenc, CcaCiphertext};
use super::group::{GroupElement, Scalar};
use super::hash::{hash, DIGEST_LEN};
use super::outer::{dec, enc, SemSecCiphertext};
use super::CryptoError;

const FRAME_PREFIX: usize = 4;

/// Why the authority refused an inner ciphertext.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AuthorityReject {
    /// Decryption failed: modified ciphertext or not addressed to the authority.
    #[error("inner ciphertext failed authentication")]
    Tamper,
    /// Authentic, but bound to a different relay key.
    #[error("inner ciphertext bound to a different relay key")]
    Replay,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RreEnvelope {
    pub outer: SemSecCiphertext,
}

impl RreEnvelope {
    pub fn to_bytes(&self) -> Vec<u8> {
        self.outer.to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        SemSecCiphertext::from_bytes(bytes).map(|outer| RreEnvelope { outer })
    }
}

/// `u32be(len inner) || inner || trailer`.
pub fn frame_inner(inner: &CcaCiphertext, trailer: &[u8]) -> Vec<u8> {
    let encoded = inner.to_bytes();
    let mut out = Vec::with_capacity(FRAME_PREFIX + encoded.len() + trailer.len());
    out.extend_from_slice(&(encoded.len() as u32).to_be_bytes());
    out.extend_from_slice(&encoded);
    out.extend_from_slice(trailer);
    out
}

/// Inverse of [`frame_inner`].
pub fn split_framed(bytes: &[u8]) -> Result<(CcaCiphertext, &[u8]), CryptoError> {
    if bytes.len() < FRAME_PREFIX {
        return Err(CryptoError::Malformed("frame shorter than length prefix"));
    }
    let len = u32::from_be_bytes(bytes[..FRAME_PREFIX].try_into().expect("4 bytes")) as usize;
    let rest = &bytes[FRAME_PREFIX..];
    if len > rest.len() {
        return Err(CryptoError::Malformed("frame length exceeds payload"));
    }
    let inner = CcaCiphertext::from_bytes(&rest[..len])?;
    Ok((inner, &rest[len..]))
}

/// The `1^sigma` redundancy string: `ceil(sigma/8)` bytes whose low `sigma`
/// bits are set.
pub fn redundancy(sigma: u32) -> Vec<u8> {
    let nbytes = sigma.div_ceil(8) as usize;
    let mut out = vec![0xffu8; nbytes];
    let spare = nbytes as u32 * 8 - sigma;
    if spare > 0 {
        out[0] = 0xff >> spare;
    }
    out
}

/// True when `bytes` has the redundancy length and ends in `sigma` one bits.
pub fn has_redundancy(bytes: &[u8], sigma: u32) -> bool {
    let nbytes = sigma.div_ceil(8) as usize;
    if bytes.len() != nbytes {
        return false;
    }
    let spare = nbytes as u32 * 8 - sigma;
    let mask0 = 0xffu8 >> spare;
    bytes
        .iter()
        .enumerate()
        .all(|(i, b)| if i == 0 { b & mask0 == mask0 } else { *b == 0xff })
}

/// `XEnc_A(m || h(pk_R))`.
pub fn rre_inner<R: CryptoRngCore + ?Sized>(
    pk_r: &GroupElement,
    pk_a: &GroupElement,
    m: &[u8],
    rng: &mut R,
) -> CcaCiphertext {
    let mut plain = Vec::with_capacity(m.len() + DIGEST_LEN);
    plain.extend_from_slice(m);
    plain.extend_from_slice(hash(pk_r.as_bytes()).as_bytes());
    xenc(pk_a, &plain, rng)
}

/// Wraps an existing inner ciphertext with fresh outer randomness.
pub fn rre_wrap<R: CryptoRngCore + ?Sized>(
    pk_r: &GroupElement,
    inner: &CcaCiphertext,
    m_prime: &[u8],
    rng: &mut R,
) -> RreEnvelope {
    RreEnvelope {
        outer: enc(pk_r, &frame_inner(inner, m_prime), rng),
    }
}

pub fn rre_encrypt<R: CryptoRngCore + ?Sized>(
    pk_r: &GroupElement,
    pk_a: &GroupElement,
    m: &[u8],
    m_prime: &[u8],
    rng: &mut R,
) -> RreEnvelope {
    let inner = rre_inner(pk_r, pk_a, m, rng);
    rre_wrap(pk_r, &inner, m_prime, rng)
}

/// Relay side: strips the outer layer and splits it into `(inner, m')`.
///
/// A wrong key produces random bytes, which nearly always fail the structural
/// parse; callers still check `m'` for redundancy.
pub fn rre_relay_open(
    sk_r: &Scalar,
    env: &RreEnvelope,
) -> Result<(CcaCiphertext, Vec<u8>), CryptoError> {
    let plain = dec(sk_r, &env.outer);
    let (inner, trailer) = split_framed(&plain)?;
    Ok((inner, trailer.to_vec()))
}

/// Authority side: returns `m` iff `inner` authenticates and embeds `h(pk_R)`.
pub fn rre_authority_open(
    sk_a: &Scalar,
    inner: &CcaCiphertext,
    pk_r: &GroupElement,
) -> Result<Vec<u8>, AuthorityReject> {
    let plain = xdec(sk_a, inner).map_err(|_| AuthorityReject::Tamper)?;
    if plain.len() < DIGEST_LEN {
        return Err(AuthorityReject::Tamper);
    }
    let (m, digest) = plain.split_at(plain.len() - DIGEST_LEN);
    if digest != hash(pk_r.as_bytes()).as_bytes() {
        return Err(AuthorityReject::Replay);
    }
    Ok(m.to_vec())
}
