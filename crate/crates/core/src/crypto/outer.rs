//! Hashed ElGamal: `(g^r, m XOR SHAKE256(g^r || pk^r))`.
//!
//! Semantically secure under DDH, malleable, and without any integrity
//! check: decrypting under the wrong key yields garbage of the right length.

use curve25519_dalek::ristretto::RistrettoPoint;
use rand_core::CryptoRngCore;
use sha3::digest::{ExtendableOutput, Update, XofReader};
use sha3::Shake256;

use super::group::{GroupElement, Scalar, ELEMENT_LEN};
use super::CryptoError;

const KEYSTREAM_DOMAIN: &[u8] = b"ctrace/outer-keystream/v1";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SemSecCiphertext {
    pub kem: GroupElement,
    pub body: Vec<u8>,
}

impl SemSecCiphertext {
    /// `kem || body`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(ELEMENT_LEN + self.body.len());
        out.extend_from_slice(self.kem.as_bytes());
        out.extend_from_slice(&self.body);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() < ELEMENT_LEN {
            return Err(CryptoError::Malformed("outer ciphertext shorter than kem"));
        }
        let kem = GroupElement::from_bytes(&bytes[..ELEMENT_LEN])?;
        Ok(SemSecCiphertext {
            kem,
            body: bytes[ELEMENT_LEN..].to_vec(),
        })
    }
}

fn apply_keystream(kem: &GroupElement, shared: &RistrettoPoint, buf: &mut [u8]) {
    let mut xof = Shake256::default();
    xof.update(KEYSTREAM_DOMAIN);
    xof.update(kem.as_bytes());
    xof.update(shared.compress().as_bytes());
    let mut reader = xof.finalize_xof();
    let mut stream = vec![0u8; buf.len()];
    reader.read(&mut stream);
    for (b, k) in buf.iter_mut().zip(stream) {
        *b ^= k;
    }
}

pub fn enc<R: CryptoRngCore + ?Sized>(pk: &GroupElement, m: &[u8], rng: &mut R) -> SemSecCiphertext {
    let r = Scalar::random(rng);
    let kem = r.public();
    let shared = pk.point() * r.0;
    let mut body = m.to_vec();
    apply_keystream(&kem, &shared, &mut body);
    SemSecCiphertext { kem, body }
}

pub fn dec(sk: &Scalar, c: &SemSecCiphertext) -> Vec<u8> {
    let shared = c.kem.point() * sk.0;
    let mut body = c.body.clone();
    apply_keystream(&c.kem, &shared, &mut body);
    body
}
