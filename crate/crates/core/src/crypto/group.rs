use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use curve25519_dalek::constants::RISTRETTO_BASEPOINT_TABLE;
use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoPoint};
use curve25519_dalek::scalar::Scalar as RawScalar;
use curve25519_dalek::traits::Identity;
use rand_core::CryptoRngCore;

use super::CryptoError;

/// Length of a canonical group element encoding.
pub const ELEMENT_LEN: usize = 32;
/// Length of a canonical scalar encoding.
pub const SCALAR_LEN: usize = 32;

/// A non-zero integer modulo the ristretto255 group order.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Scalar(pub(crate) RawScalar);

impl Scalar {
    pub fn random<R: CryptoRngCore + ?Sized>(rng: &mut R) -> Self {
        loop {
            let s = RawScalar::random(rng);
            if s != RawScalar::ZERO {
                return Scalar(s);
            }
        }
    }

    /// Decodes a canonical, non-zero little-endian scalar.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; SCALAR_LEN] = bytes.try_into().map_err(|_| CryptoError::InvalidScalar)?;
        let s = Option::<RawScalar>::from(RawScalar::from_canonical_bytes(arr))
            .ok_or(CryptoError::InvalidScalar)?;
        if s == RawScalar::ZERO {
            return Err(CryptoError::InvalidScalar);
        }
        Ok(Scalar(s))
    }

    pub fn to_bytes(&self) -> [u8; SCALAR_LEN] {
        self.0.to_bytes()
    }

    /// `g^self` for the fixed generator.
    pub fn public(&self) -> GroupElement {
        GroupElement::from_point(RISTRETTO_BASEPOINT_TABLE * &self.0)
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Scalar(..)")
    }
}

/// A non-identity ristretto255 element together with its canonical encoding.
///
/// Equality, ordering and hashing are defined on the 32-byte encoding, which
/// is what every index and duplicate check in the protocols keys on.
#[derive(Clone, Copy)]
pub struct GroupElement {
    point: RistrettoPoint,
    bytes: [u8; ELEMENT_LEN],
}

impl GroupElement {
    pub(crate) fn from_point(point: RistrettoPoint) -> Self {
        let bytes = point.compress().to_bytes();
        GroupElement { point, bytes }
    }

    /// Decodes a canonical encoding; the identity element is rejected.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; ELEMENT_LEN] = bytes.try_into().map_err(|_| CryptoError::InvalidPoint)?;
        let point = CompressedRistretto(arr)
            .decompress()
            .ok_or(CryptoError::InvalidPoint)?;
        if point == RistrettoPoint::identity() {
            return Err(CryptoError::InvalidPoint);
        }
        Ok(GroupElement { point, bytes: arr })
    }

    pub fn to_bytes(&self) -> [u8; ELEMENT_LEN] {
        self.bytes
    }

    pub fn as_bytes(&self) -> &[u8; ELEMENT_LEN] {
        &self.bytes
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.bytes)
    }

    pub(crate) fn point(&self) -> &RistrettoPoint {
        &self.point
    }
}

impl PartialEq for GroupElement {
    fn eq(&self, other: &Self) -> bool {
        self.bytes == other.bytes
    }
}

impl Eq for GroupElement {}

impl PartialOrd for GroupElement {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for GroupElement {
    fn cmp(&self, other: &Self) -> Ordering {
        self.bytes.cmp(&other.bytes)
    }
}

impl Hash for GroupElement {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.bytes.hash(state);
    }
}

impl fmt::Debug for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GroupElement({}..)", &self.to_hex()[..12])
    }
}

/// A private scalar and its public element `g^sk`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KeyPair {
    pub sk: Scalar,
    pub pk: GroupElement,
}

impl KeyPair {
    pub fn generate<R: CryptoRngCore + ?Sized>(rng: &mut R) -> Self {
        Self::from_secret(Scalar::random(rng))
    }

    pub fn from_secret(sk: Scalar) -> Self {
        KeyPair { pk: sk.public(), sk }
    }
}

/// Generates a fresh key pair.
pub fn keygen<R: CryptoRngCore + ?Sized>(rng: &mut R) -> KeyPair {
    KeyPair::generate(rng)
}
