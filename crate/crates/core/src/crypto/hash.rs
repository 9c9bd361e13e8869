use std::fmt;

use curve25519_dalek::scalar::Scalar as RawScalar;
use sha3::{Digest as _, Sha3_256, Sha3_512};

use super::CryptoError;

pub const DIGEST_LEN: usize = 32;

/// SHA3-256 output.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest(pub [u8; DIGEST_LEN]);

impl Digest {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        bytes
            .try_into()
            .map(Digest)
            .map_err(|_| CryptoError::Malformed("digest length"))
    }

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

pub fn hash(m: &[u8]) -> Digest {
    Digest(Sha3_256::digest(m).into())
}

/// Domain-separated SHA3-512 reduced to a scalar.
pub(crate) fn hash_to_scalar(domain: &[u8], parts: &[&[u8]]) -> RawScalar {
    let mut h = Sha3_512::new();
    h.update(domain);
    for p in parts {
        h.update(p);
    }
    RawScalar::from_bytes_mod_order_wide(&h.finalize().into())
}
