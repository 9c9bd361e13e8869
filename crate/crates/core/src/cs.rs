//! Device state machine for the central-server protocol.
//!
//! Every device broadcasts its current key with a signed local timestamp. A
//! receiver in range that accepts the timestamp submits, through the
//! authority, its identity (encrypted to the authority) together with its
//! current epoch random and the hash of the previous one, all encrypted to the
//! beacon key. An infected device later decrypts what was stored under its
//! keys and reports entries whose epoch randoms chain.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::crypto::{
    dec, enc, frame_inner, hash, sign, split_framed, verify, xenc, CcaCiphertext, Digest,
    GroupElement, KeyPair, SemSecCiphertext, DIGEST_LEN,
};
use crate::daylog::DayLog;
use crate::identity::DeviceIdentity;
use crate::params::{CsConfig, ProtocolParams};
use crate::payload::Payload;
use crate::DeviceError;

pub const EPOCH_RANDOM_LEN: usize = 32;
const TRAILER_LEN: usize = EPOCH_RANDOM_LEN + DIGEST_LEN;

/// Epoch `i` covers local time `[i*T, (i+1)*T)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EpochState {
    pub index: i64,
    pub r_curr: [u8; EPOCH_RANDOM_LEN],
    pub r_prev: [u8; EPOCH_RANDOM_LEN],
}

/// What a receiver hands to the authority: the beacon key and the blob
/// encrypted to it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Submission {
    pub pk: GroupElement,
    pub blob: SemSecCiphertext,
}

/// A blob opened by the infected device.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecryptedEntry {
    pub inner: CcaCiphertext,
    pub r: [u8; EPOCH_RANDOM_LEN],
    pub hprev: Digest,
    pub day: usize,
}

/// Public keys used on one day; `age` 0 is the disclosure day.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DayKeys {
    pub age: usize,
    pub keys: Vec<GroupElement>,
}

#[derive(Clone, Debug)]
pub struct CsDisclosure {
    pub id: DeviceIdentity,
    pub day_keys: Vec<DayKeys>,
}

impl CsDisclosure {
    pub fn all_keys(&self) -> Vec<GroupElement> {
        self.day_keys.iter().flat_map(|d| d.keys.iter().copied()).collect()
    }
}

/// Why a beacon produced no submission.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BeaconDrop {
    Locked,
    OutOfRange,
    Malformed,
    BadSignature,
    StaleTimestamp,
    OwnKey,
}

#[derive(Clone, Debug)]
pub struct CsDevice {
    id: DeviceIdentity,
    params: ProtocolParams,
    config: CsConfig,
    authority_pk: GroupElement,
    rng: ChaCha20Rng,
    epoch: Option<EpochState>,
    current: Option<(KeyPair, i64)>,
    key_period: u64,
    key_log: DayLog<Vec<KeyPair>>,
    next_beacon_at: Option<i64>,
    locked: bool,
}

impl CsDevice {
    pub fn new(
        id: DeviceIdentity,
        params: ProtocolParams,
        config: CsConfig,
        authority_pk: GroupElement,
        seed: [u8; 32],
    ) -> Self {
        CsDevice {
            id,
            params,
            config,
            authority_pk,
            rng: ChaCha20Rng::from_seed(seed),
            epoch: None,
            current: None,
            key_period: 0,
            key_log: DayLog::new(params.retention_days),
            next_beacon_at: None,
            locked: false,
        }
    }

    pub fn id(&self) -> DeviceIdentity {
        self.id
    }

    pub fn is_locked(&self) -> bool {
        self.locked
    }

    pub fn key_period(&self) -> u64 {
        self.key_period
    }

    pub fn current_pk(&self) -> Option<GroupElement> {
        self.current.as_ref().map(|(k, _)| k.pk)
    }

    pub fn epoch(&self) -> Option<&EpochState> {
        self.epoch.as_ref()
    }

    pub fn key_log(&self) -> &DayLog<Vec<KeyPair>> {
        &self.key_log
    }

    fn random32(&mut self) -> [u8; EPOCH_RANDOM_LEN] {
        let mut r = [0u8; EPOCH_RANDOM_LEN];
        self.rng.fill_bytes(&mut r);
        r
    }

    fn advance_epoch(&mut self, now: i64) {
        let index = now.div_euclid(self.params.min_contact);
        match self.epoch.as_ref().map(|e| e.index) {
            Some(i) if i == index => {}
            Some(i) if i + 1 == index => {
                let fresh = self.random32();
                let e = self.epoch.as_mut().expect("checked above");
                e.r_prev = std::mem::replace(&mut e.r_curr, fresh);
                e.index = index;
            }
            // First epoch, or a gap: the previous random must not link to anything.
            _ => {
                let r_curr = self.random32();
                let r_prev = self.random32();
                self.epoch = Some(EpochState {
                    index,
                    r_curr,
                    r_prev,
                });
            }
        }
    }

    fn remember_key(&mut self, keys: KeyPair) {
        let today = self.key_log.today_mut();
        if !today.iter().any(|k| k.pk == keys.pk) {
            today.push(keys);
        }
    }

    pub fn on_tick(&mut self, now: i64) -> Vec<Payload> {
        if self.locked {
            return Vec::new();
        }
        self.advance_epoch(now);
        let due = match &self.current {
            None => true,
            Some((_, created)) => now - created >= self.params.rotation_period,
        };
        if due {
            let keys = KeyPair::generate(&mut self.rng);
            self.current = Some((keys, now));
            self.key_period += 1;
            self.remember_key(keys);
        }
        if self.next_beacon_at.is_some_and(|at| now < at) {
            return Vec::new();
        }
        self.next_beacon_at = Some(now + self.params.beacon_period);
        let (keys, _) = self.current.as_ref().expect("key created above");
        vec![Payload::cs_beacon(&keys.pk, now, &sign(keys, now))]
    }

    /// Checks a beacon and, if it passes, builds the submission for it.
    pub fn on_receive_beacon(
        &mut self,
        bytes: &[u8],
        dist: f64,
        now: i64,
    ) -> Result<Submission, BeaconDrop> {
        if self.locked {
            return Err(BeaconDrop::Locked);
        }
        if dist > self.params.unsafe_distance {
            return Err(BeaconDrop::OutOfRange);
        }
        let (pk, t, sig) = Payload::parse_cs_beacon(bytes).ok_or(BeaconDrop::Malformed)?;
        if self.current_pk() == Some(pk) {
            return Err(BeaconDrop::OwnKey);
        }
        if self.config.replay_protection {
            if !verify(&pk, t, &sig) {
                return Err(BeaconDrop::BadSignature);
            }
            if (t - now).abs() > self.config.epsilon {
                return Err(BeaconDrop::StaleTimestamp);
            }
        }
        self.advance_epoch(now);
        let epoch = self.epoch.as_ref().expect("epoch initialised");
        let mut trailer = [0u8; TRAILER_LEN];
        trailer[..EPOCH_RANDOM_LEN].copy_from_slice(&epoch.r_curr);
        trailer[EPOCH_RANDOM_LEN..].copy_from_slice(hash(&epoch.r_prev).as_bytes());
        let inner = xenc(&self.authority_pk, self.id.as_bytes(), &mut self.rng);
        let blob = enc(&pk, &frame_inner(&inner, &trailer), &mut self.rng);
        Ok(Submission { pk, blob })
    }

    /// Shifts the key log and records the current key as also used today.
    pub fn rotate_day(&mut self) {
        self.key_log.rotate();
        if let Some((keys, _)) = self.current {
            if !self.locked {
                self.remember_key(keys);
            }
        }
    }

    /// Releases the identity and the public keys per day, then locks.
    pub fn disclose_infection(&mut self) -> Result<CsDisclosure, DeviceError> {
        if self.locked {
            return Err(DeviceError::AlreadyDisclosed);
        }
        self.locked = true;
        let day_keys = self
            .key_log
            .iter()
            .enumerate()
            .filter(|(_, keys)| !keys.is_empty())
            .map(|(age, keys)| DayKeys {
                age,
                keys: keys.iter().map(|k| k.pk).collect(),
            })
            .collect();
        Ok(CsDisclosure {
            id: self.id,
            day_keys,
        })
    }

    /// Opens every blob under the key it was stored for and returns the inner
    /// ciphertexts that close an epoch chain within one day.
    pub fn match_entries(
        &self,
        blobs: &[(GroupElement, SemSecCiphertext)],
    ) -> Result<Vec<CcaCiphertext>, DeviceError> {
        if !self.locked {
            return Err(DeviceError::NotDisclosed);
        }
        let mut opened: BTreeMap<usize, Option<DecryptedEntry>> = BTreeMap::new();
        let mut out = BTreeSet::new();
        for (day, keys) in self.key_log.iter().enumerate() {
            let mut group = Vec::new();
            for (i, (pk, blob)) in blobs.iter().enumerate() {
                let Some(kp) = keys.iter().find(|k| k.pk == *pk) else {
                    continue;
                };
                let entry = opened.entry(i).or_insert_with(|| open_blob(kp, blob));
                if let Some(e) = entry {
                    group.push(DecryptedEntry { day, ..e.clone() });
                }
            }
            out.extend(chain_links(&group, self.config.epoch_chain_min_links));
        }
        Ok(out.into_iter().collect())
    }
}

fn open_blob(keys: &KeyPair, blob: &SemSecCiphertext) -> Option<DecryptedEntry> {
    let plain = dec(&keys.sk, blob);
    let (inner, trailer) = split_framed(&plain).ok()?;
    if trailer.len() != TRAILER_LEN {
        return None;
    }
    Some(DecryptedEntry {
        inner,
        r: trailer[..EPOCH_RANDOM_LEN].try_into().expect("fixed width"),
        hprev: Digest::from_bytes(&trailer[EPOCH_RANDOM_LEN..]).expect("fixed width"),
        day: 0,
    })
}

/// Inners of entries reachable by a chain of `min_links` hash links
/// `hash(e.r) == e'.hprev` inside `entries`. With one link this is every `e'`
/// that has a predecessor.
pub fn chain_links(entries: &[DecryptedEntry], min_links: u32) -> BTreeSet<CcaCiphertext> {
    let mut level: Vec<&DecryptedEntry> = entries.iter().collect();
    for _ in 0..min_links {
        let reach: HashSet<Digest> = level.iter().map(|e| hash(&e.r)).collect();
        level = entries.iter().filter(|e| reach.contains(&e.hprev)).collect();
        if level.is_empty() {
            break;
        }
    }
    level.into_iter().map(|e| e.inner.clone()).collect()
}
