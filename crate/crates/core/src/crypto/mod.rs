//! Cryptographic building blocks.
//!
//! Everything lives in the ristretto255 prime-order group:
//!
//! * [`enc`]/[`dec`]: hashed ElGamal. Semantically secure, malleable, no
//!   integrity. Used for everything sent over the short-range radio.
//! * [`xenc`]/[`xdec`]: KEM + ChaCha20-Poly1305, IND-CCA. Used for identities
//!   encrypted to the authority.
//! * [`hash`] is SHA3-256.
//! * [`sign`]/[`verify`]: Schnorr over timestamps.
//! * [`rre_encrypt`] and friends: the replay-resistant envelope.

mod cca;
mod group;
mod hash;
mod outer;
mod rre;
mod sign;

use thiserror::Error;

pub use cca::{xdec, xenc, CcaCiphertext, TAG_LEN};
pub use group::{keygen, GroupElement, KeyPair, Scalar, ELEMENT_LEN, SCALAR_LEN};
pub use hash::{hash, Digest, DIGEST_LEN};
pub use outer::{dec, enc, SemSecCiphertext};
pub use rre::{
    frame_inner, has_redundancy, redundancy, rre_authority_open, rre_encrypt, rre_inner,
    rre_relay_open, rre_wrap, split_framed, AuthorityReject, RreEnvelope,
};
pub use sign::{encode_timestamp, sign, verify, Signature, SIGNATURE_LEN};

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum CryptoError {
    #[error("invalid group element encoding")]
    InvalidPoint,
    #[error("invalid scalar encoding")]
    InvalidScalar,
    #[error("malformed input: {0}")]
    Malformed(&'static str),
    #[error("authentication failed")]
    AuthFailed,
}
