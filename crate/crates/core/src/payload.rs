use serde::{Deserialize, Serialize};

use crate::crypto::{GroupElement, Signature, ELEMENT_LEN, SIGNATURE_LEN};

/// Which radio message a payload carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadKind {
    /// `key(pk)` from the peer-to-peer protocol.
    KeyBeacon,
    /// `iam(E)`: a replay-resistant envelope.
    Iam,
    /// `key(pk), t, sign(t)` from the central-server protocol.
    CsBeacon,
}

/// A tagged byte string as it travels over the short-range radio.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Payload {
    pub kind: PayloadKind,
    pub bytes: Vec<u8>,
}

pub const CS_BEACON_LEN: usize = ELEMENT_LEN + 8 + SIGNATURE_LEN;

impl Payload {
    pub fn key_beacon(pk: &GroupElement) -> Self {
        Payload {
            kind: PayloadKind::KeyBeacon,
            bytes: pk.to_bytes().to_vec(),
        }
    }

    pub fn iam(envelope: Vec<u8>) -> Self {
        Payload {
            kind: PayloadKind::Iam,
            bytes: envelope,
        }
    }

    /// `pk(32) || t(8, big-endian) || sig(64)`.
    pub fn cs_beacon(pk: &GroupElement, t: i64, sig: &Signature) -> Self {
        let mut bytes = Vec::with_capacity(CS_BEACON_LEN);
        bytes.extend_from_slice(pk.as_bytes());
        bytes.extend_from_slice(&t.to_be_bytes());
        bytes.extend_from_slice(sig.as_bytes());
        Payload {
            kind: PayloadKind::CsBeacon,
            bytes,
        }
    }

    /// Splits a CS beacon into its fields; `None` for anything malformed.
    pub fn parse_cs_beacon(bytes: &[u8]) -> Option<(GroupElement, i64, Signature)> {
        if bytes.len() != CS_BEACON_LEN {
            return None;
        }
        let pk = GroupElement::from_bytes(&bytes[..ELEMENT_LEN]).ok()?;
        let t = i64::from_be_bytes(bytes[ELEMENT_LEN..ELEMENT_LEN + 8].try_into().ok()?);
        let sig = Signature::from_bytes(&bytes[ELEMENT_LEN + 8..]).ok()?;
        Some((pk, t, sig))
    }

    /// The leading 32 bytes, or the whole payload if shorter.
    pub fn prefix(&self) -> &[u8] {
        &self.bytes[..self.bytes.len().min(32)]
    }
}
