//! Device state machine for the peer-to-peer handshake protocol.
//!
//! Each device broadcasts its current public key every `δ`. A device that
//! hears a key within the unsafe distance pools it and, every `δ`, broadcasts
//! its identity (encrypted once to the authority, re-wrapped freshly each time)
//! to the key's owner. The owner logs the inner ciphertext only after seeing
//! the same decrypted payload twice at least `T` apart.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::crypto::{
    frame_inner, has_redundancy, hash, redundancy, rre_inner, rre_relay_open, rre_wrap,
    CcaCiphertext, Digest, GroupElement, KeyPair, RreEnvelope, Scalar,
};
use crate::daylog::DayLog;
use crate::identity::DeviceIdentity;
use crate::params::ProtocolParams;
use crate::payload::{Payload, PayloadKind};
use crate::DeviceError;

#[derive(Clone, Debug)]
struct OwnKey {
    keys: KeyPair,
    created_at: i64,
}

#[derive(Clone, Debug)]
struct RetiredKey {
    keys: KeyPair,
    retired_at: i64,
}

/// A foreign key heard within range, with this device's identity already
/// encrypted for it.
#[derive(Clone, Debug)]
pub struct PoolEntry {
    pub first_seen: i64,
    /// Latest in-range reception. The entry expires `T + delta` after this, so
    /// a key heard throughout a contact keeps one inner ciphertext for all of it.
    pub last_seen: i64,
    pub cached_inner: CcaCiphertext,
}

/// What gets logged: the inner ciphertext and the own public key that
/// decrypted the envelope carrying it.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct P2pLogEntry {
    pub inner: CcaCiphertext,
    pub own_pk: GroupElement,
}

impl P2pLogEntry {
    /// Stable fingerprint used by the trace.
    pub fn digest(&self) -> Digest {
        let mut bytes = self.inner.to_bytes();
        bytes.extend_from_slice(self.own_pk.as_bytes());
        hash(&bytes)
    }
}

/// Result of handing an `iam` payload to the device.
#[allow(clippy::large_enum_variant)]
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum IamOutcome {
    /// Out of range, locked, or no held key yields valid redundancy.
    Dropped,
    /// First copy of this decrypted payload.
    FirstCopy,
    /// Seen before, but less than `T` ago.
    Waiting,
    /// Inserted into today's log (`fresh` is false if it was already there).
    Logged { entry: P2pLogEntry, fresh: bool },
}

#[derive(Clone, Debug)]
pub struct P2pDisclosure {
    pub id: DeviceIdentity,
    pub entries: BTreeSet<P2pLogEntry>,
}

#[derive(Clone, Debug)]
pub struct P2pDevice {
    id: DeviceIdentity,
    params: ProtocolParams,
    authority_pk: GroupElement,
    rng: ChaCha20Rng,
    current: Option<OwnKey>,
    retired: Vec<RetiredKey>,
    key_period: u64,
    pool: BTreeMap<GroupElement, PoolEntry>,
    pending: BTreeMap<(GroupElement, Vec<u8>), i64>,
    log: DayLog<BTreeSet<P2pLogEntry>>,
    next_beacon_at: Option<i64>,
    locked: bool,
}

impl P2pDevice {
    pub fn new(
        id: DeviceIdentity,
        params: ProtocolParams,
        authority_pk: GroupElement,
        seed: [u8; 32],
    ) -> Self {
        P2pDevice {
            id,
            params,
            authority_pk,
            rng: ChaCha20Rng::from_seed(seed),
            current: None,
            retired: Vec::new(),
            key_period: 0,
            pool: BTreeMap::new(),
            pending: BTreeMap::new(),
            log: DayLog::new(params.retention_days),
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

    /// Number of own keys created so far; the current key belongs to this period.
    pub fn key_period(&self) -> u64 {
        self.key_period
    }

    pub fn current_pk(&self) -> Option<GroupElement> {
        self.current.as_ref().map(|k| k.keys.pk)
    }

    pub fn pool(&self) -> &BTreeMap<GroupElement, PoolEntry> {
        &self.pool
    }

    pub fn log(&self) -> &DayLog<BTreeSet<P2pLogEntry>> {
        &self.log
    }

    /// Public keys of every private key still usable for decryption.
    pub fn held_keys(&self) -> Vec<GroupElement> {
        self.current
            .iter()
            .map(|k| k.keys.pk)
            .chain(self.retired.iter().map(|r| r.keys.pk))
            .collect()
    }

    fn rotate_key(&mut self, now: i64) {
        if let Some(old) = self.current.take() {
            self.retired.push(RetiredKey {
                keys: old.keys,
                retired_at: now,
            });
        }
        self.current = Some(OwnKey {
            keys: KeyPair::generate(&mut self.rng),
            created_at: now,
        });
        self.key_period += 1;
    }

    fn prune(&mut self, now: i64) {
        let lifetime = self.params.key_lifetime();
        self.retired.retain(|r| now - r.retired_at <= lifetime);
        self.pool.retain(|_, e| now - e.last_seen <= lifetime);
        let held: BTreeSet<GroupElement> = self.held_keys().into_iter().collect();
        self.pending.retain(|(pk, _), _| held.contains(pk));
    }

    pub fn on_tick(&mut self, now: i64) -> Vec<Payload> {
        if self.locked {
            return Vec::new();
        }
        let due = match &self.current {
            None => true,
            Some(k) => now - k.created_at >= self.params.rotation_period,
        };
        if due {
            self.rotate_key(now);
        }
        self.prune(now);

        if self.next_beacon_at.is_some_and(|at| now < at) {
            return Vec::new();
        }
        self.next_beacon_at = Some(now + self.params.beacon_period);

        let pk = self.current.as_ref().expect("key created above").keys.pk;
        let mut out = Vec::with_capacity(1 + self.pool.len());
        out.push(Payload::key_beacon(&pk));
        let tail = redundancy(self.params.sigma);
        for (peer, entry) in &self.pool {
            let env = rre_wrap(peer, &entry.cached_inner, &tail, &mut self.rng);
            out.push(Payload::iam(env.to_bytes()));
        }
        out
    }

    fn owns(&self, pk: &GroupElement) -> bool {
        self.current.as_ref().is_some_and(|k| k.keys.pk == *pk)
            || self.retired.iter().any(|r| r.keys.pk == *pk)
    }

    /// Pools a key heard within range. Re-deliveries only refresh `last_seen`.
    pub fn on_receive_key(&mut self, pk_bytes: &[u8], dist: f64, now: i64) {
        if self.locked || dist > self.params.unsafe_distance {
            return;
        }
        let Ok(pk) = GroupElement::from_bytes(pk_bytes) else {
            return;
        };
        if self.owns(&pk) {
            return;
        }
        if let Some(entry) = self.pool.get_mut(&pk) {
            entry.last_seen = now;
            return;
        }
        let inner = rre_inner(&pk, &self.authority_pk, self.id.as_bytes(), &mut self.rng);
        self.pool.insert(
            pk,
            PoolEntry {
                first_seen: now,
                last_seen: now,
                cached_inner: inner,
            },
        );
    }

    fn live_keys(&self, now: i64) -> Vec<(GroupElement, Scalar)> {
        let lifetime = self.params.key_lifetime();
        self.current
            .iter()
            .map(|k| (k.keys.pk, k.keys.sk))
            .chain(
                self.retired
                    .iter()
                    .filter(|r| now - r.retired_at <= lifetime)
                    .map(|r| (r.keys.pk, r.keys.sk)),
            )
            .collect()
    }

    pub fn on_receive_iam(&mut self, bytes: &[u8], dist: f64, now: i64) -> IamOutcome {
        if self.locked || dist > self.params.unsafe_distance {
            return IamOutcome::Dropped;
        }
        let Ok(env) = RreEnvelope::from_bytes(bytes) else {
            return IamOutcome::Dropped;
        };
        let sigma = self.params.sigma;
        let opened = self.live_keys(now).into_iter().find_map(|(pk, sk)| {
            match rre_relay_open(&sk, &env) {
                Ok((inner, tail)) if has_redundancy(&tail, sigma) => Some((pk, inner, tail)),
                _ => None,
            }
        });
        let Some((own_pk, inner, tail)) = opened else {
            return IamOutcome::Dropped;
        };
        let key = (own_pk, frame_inner(&inner, &tail));
        match self.pending.get(&key) {
            None => {
                self.pending.insert(key, now);
                IamOutcome::FirstCopy
            }
            Some(&first) if now - first >= self.params.min_contact => {
                let entry = P2pLogEntry { inner, own_pk };
                let fresh = self.log.today_mut().insert(entry.clone());
                IamOutcome::Logged { entry, fresh }
            }
            Some(_) => IamOutcome::Waiting,
        }
    }

    /// Dispatches a radio payload to the matching handler.
    pub fn on_receive(&mut self, payload: &Payload, dist: f64, now: i64) -> IamOutcome {
        match payload.kind {
            PayloadKind::KeyBeacon => {
                self.on_receive_key(&payload.bytes, dist, now);
                IamOutcome::Dropped
            }
            PayloadKind::Iam => self.on_receive_iam(&payload.bytes, dist, now),
            PayloadKind::CsBeacon => IamOutcome::Dropped,
        }
    }

    pub fn rotate_day(&mut self) {
        self.log.rotate();
    }

    /// Releases the identity and the whole log, then locks the device for good.
    pub fn disclose_infection(&mut self) -> Result<P2pDisclosure, DeviceError> {
        if self.locked {
            return Err(DeviceError::AlreadyDisclosed);
        }
        self.locked = true;
        let entries = self.log.iter().flatten().cloned().collect();
        Ok(P2pDisclosure {
            id: self.id,
            entries,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{keygen, rre_authority_open, rre_encrypt};
    use proptest::prelude::*;

    fn params() -> ProtocolParams {
        ProtocolParams::default()
    }

    fn device(seed: u8, auth: &KeyPair) -> P2pDevice {
        let mut id = [0u8; 16];
        id[0] = seed;
        P2pDevice::new(DeviceIdentity(id), params(), auth.pk, [seed; 32])
    }

    fn auth() -> KeyPair {
        keygen(&mut ChaCha20Rng::seed_from_u64(99))
    }

    fn kinds(out: &[Payload]) -> (usize, usize) {
        let k = out.iter().filter(|p| p.kind == PayloadKind::KeyBeacon).count();
        (k, out.len() - k)
    }

    #[test]
    fn empty_pool_emits_one_beacon() {
        let a = auth();
        let mut dev = device(1, &a);
        assert_eq!(kinds(&dev.on_tick(0)), (1, 0));
        for t in 1..60 {
            assert!(dev.on_tick(t).is_empty());
        }
        assert_eq!(kinds(&dev.on_tick(60)), (1, 0));
    }

    #[test]
    fn three_pooled_keys_give_three_iams() {
        let a = auth();
        let mut dev = device(1, &a);
        dev.on_tick(0);
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..3 {
            dev.on_receive_key(&keygen(&mut rng).pk.to_bytes(), 1.0, 10);
        }
        assert_eq!(kinds(&dev.on_tick(60)), (1, 3));
    }

    #[test]
    fn stale_pool_entry_is_pruned_before_broadcast() {
        let a = auth();
        let p = params();
        let mut dev = device(1, &a);
        dev.on_tick(0);
        let peer = keygen(&mut ChaCha20Rng::seed_from_u64(5)).pk;
        dev.on_receive_key(&peer.to_bytes(), 1.0, 0);
        let now = p.key_lifetime() + 1;
        let out = dev.on_tick(now);
        assert!(dev.pool().is_empty());
        assert_eq!(kinds(&out).1, 0);
    }

    #[test]
    fn distance_gate_and_redelivery() {
        let a = auth();
        let mut dev = device(1, &a);
        dev.on_tick(0);
        let peer = keygen(&mut ChaCha20Rng::seed_from_u64(5)).pk;
        dev.on_receive_key(&peer.to_bytes(), 2.1, 1);
        assert!(dev.pool().is_empty());
        dev.on_receive_key(&peer.to_bytes(), 1.0, 1);
        let inner = dev.pool()[&peer].cached_inner.clone();
        dev.on_receive_key(&peer.to_bytes(), 1.0, 6);
        assert_eq!(dev.pool().len(), 1);
        assert_eq!(dev.pool()[&peer].first_seen, 1);
        assert_eq!(dev.pool()[&peer].last_seen, 6);
        assert_eq!(dev.pool()[&peer].cached_inner, inner);
    }

    #[test]
    fn key_heard_throughout_keeps_one_entry() {
        let a = auth();
        let mut dev = device(1, &a);
        let lifetime = dev.params.key_lifetime();
        let peer = keygen(&mut ChaCha20Rng::seed_from_u64(5)).pk;
        dev.on_tick(0);
        dev.on_receive_key(&peer.to_bytes(), 1.0, 0);
        let inner = dev.pool()[&peer].cached_inner.clone();
        for now in (60..=3 * lifetime).step_by(60) {
            dev.on_tick(now);
            dev.on_receive_key(&peer.to_bytes(), 1.0, now);
        }
        assert_eq!(dev.pool()[&peer].cached_inner, inner);
        assert_eq!(dev.pool()[&peer].first_seen, 0);
        dev.on_tick(4 * lifetime + 1);
        assert!(dev.pool().is_empty());
    }

    #[test]
    fn own_key_is_not_pooled() {
        let a = auth();
        let mut dev = device(1, &a);
        dev.on_tick(0);
        let own = dev.current_pk().unwrap();
        dev.on_receive_key(&own.to_bytes(), 0.0, 1);
        assert!(dev.pool().is_empty());
    }

    /// Two devices in range: `b` pools `c`'s key and sends iams back.
    fn handshake(a: &KeyPair) -> (P2pDevice, P2pDevice, GroupElement) {
        let mut b = device(2, a);
        let mut c = device(3, a);
        b.on_tick(0);
        let beacon = c.on_tick(0);
        b.on_receive(&beacon[0], 1.0, 0);
        let c_pk = c.current_pk().unwrap();
        (b, c, c_pk)
    }

    fn iams(out: Vec<Payload>) -> Vec<Payload> {
        out.into_iter().filter(|p| p.kind == PayloadKind::Iam).collect()
    }

    #[test]
    fn logs_only_after_second_copy_t_later() {
        let a = auth();
        let p = params();
        let (mut b, mut c, _) = handshake(&a);
        let first = iams(b.on_tick(p.beacon_period)).remove(0);
        assert_eq!(c.on_receive(&first, 1.0, 60), IamOutcome::FirstCopy);
        let later = iams(b.on_tick(120)).remove(0);
        assert_ne!(later.bytes, first.bytes, "outer layer is re-randomised");
        assert_eq!(c.on_receive(&later, 1.0, 120), IamOutcome::Waiting);
        assert_eq!(c.on_receive(&later, 1.0, 60 + p.min_contact - 1), IamOutcome::Waiting);
        assert!(c.log().iter().all(|d| d.is_empty()));
        match c.on_receive(&later, 1.0, 60 + p.min_contact) {
            IamOutcome::Logged { entry, fresh } => {
                assert!(fresh);
                assert_eq!(rre_authority_open(&a.sk, &entry.inner, &entry.own_pk).unwrap(), b.id().0);
            }
            other => panic!("expected log insert, got {other:?}"),
        }
        assert_eq!(c.log().day(0).unwrap().len(), 1);
        let again = iams(b.on_tick(660)).remove(0);
        assert!(matches!(c.on_receive(&again, 1.0, 660), IamOutcome::Logged { fresh: false, .. }));
        assert_eq!(c.log().day(0).unwrap().len(), 1);
    }

    #[test]
    fn cached_inner_is_identical_across_iams() {
        let a = auth();
        let (mut b, c, _) = handshake(&a);
        let sk = c.live_keys(0)[0].1;
        let inners: BTreeSet<Vec<u8>> = (1..=5)
            .flat_map(|k| iams(b.on_tick(60 * k)))
            .map(|p| rre_relay_open(&sk, &RreEnvelope::from_bytes(&p.bytes).unwrap()).unwrap().0.to_bytes())
            .collect();
        assert_eq!(inners.len(), 1);
    }

    #[test]
    fn single_replayed_copy_never_logs() {
        let a = auth();
        let (mut b, mut c, _) = handshake(&a);
        let captured = iams(b.on_tick(60)).remove(0);
        // `c` never heard the original; the one replayed copy stays pending.
        assert_eq!(c.on_receive(&captured, 1.0, 700), IamOutcome::FirstCopy);
        assert!(c.log().iter().all(|d| d.is_empty()));
        // Once the decrypting key is gone the bytes are useless.
        let later = params().rotation_period + params().key_lifetime() + 1;
        c.on_tick(params().rotation_period);
        c.on_tick(later);
        assert_eq!(c.on_receive(&captured, 1.0, later), IamOutcome::Dropped);
    }

    #[test]
    fn envelope_for_another_key_is_dropped() {
        let a = auth();
        let mut c = device(3, &a);
        c.on_tick(0);
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let stranger = keygen(&mut rng);
        let env = rre_encrypt(&stranger.pk, &a.pk, &[0u8; 16], &redundancy(16), &mut rng);
        assert_eq!(c.on_receive_iam(&env.to_bytes(), 1.0, 1), IamOutcome::Dropped);
        assert_eq!(c.on_receive_iam(&[1, 2, 3], 1.0, 1), IamOutcome::Dropped);
    }

    #[test]
    fn retired_key_usable_until_lifetime_then_gone() {
        let a = auth();
        let p = params();
        let mut b = device(2, &a);
        let mut c = device(3, &a);
        let beacon = c.on_tick(0).remove(0);
        let c_pk = c.current_pk().unwrap();
        let heard = p.rotation_period - 20;
        b.on_tick(heard);
        b.on_receive(&beacon, 1.0, heard);
        c.on_tick(p.rotation_period);
        assert_ne!(c.current_pk().unwrap(), c_pk);
        let msg = iams(b.on_tick(heard + p.beacon_period)).remove(0);
        let retired_at = p.rotation_period;
        assert_eq!(c.on_receive(&msg, 1.0, retired_at + p.key_lifetime()), IamOutcome::FirstCopy);
        c.on_tick(retired_at + p.key_lifetime() + 1);
        assert!(!c.held_keys().contains(&c_pk));
        assert!(c.pending.is_empty(), "pending purged with its key");
        assert_eq!(c.on_receive(&msg, 1.0, retired_at + p.key_lifetime() + 1), IamOutcome::Dropped);
    }

    #[test]
    fn rotation_and_day_shift() {
        let a = auth();
        let mut dev = device(1, &a);
        dev.log.today_mut().insert(P2pLogEntry {
            inner: rre_inner(&a.pk, &a.pk, b"x", &mut ChaCha20Rng::seed_from_u64(1)),
            own_pk: a.pk,
        });
        dev.rotate_day();
        assert_eq!(dev.log().day(1).unwrap().len(), 1);
        for _ in 0..params().retention_days {
            dev.rotate_day();
        }
        assert!(dev.log().iter().all(|d| d.is_empty()));
    }

    #[test]
    fn disclosure_locks() {
        let a = auth();
        let mut dev = device(1, &a);
        dev.on_tick(0);
        let d = dev.disclose_infection().unwrap();
        assert!(d.entries.is_empty());
        assert_eq!(d.id, dev.id());
        assert_eq!(dev.disclose_infection().unwrap_err(), DeviceError::AlreadyDisclosed);
        for t in 1..200 {
            assert!(dev.on_tick(t).is_empty());
        }
        dev.on_receive_key(&a.pk.to_bytes(), 0.5, 5);
        assert!(dev.pool().is_empty());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn pool_and_keys_respect_lifetime(arrivals in proptest::collection::vec((0i64..4000, any::<u8>()), 1..30)) {
            let a = auth();
            let p = params();
            let mut dev = device(7, &a);
            let mut rng = ChaCha20Rng::seed_from_u64(11);
            let peers: Vec<GroupElement> = (0..8).map(|_| keygen(&mut rng).pk).collect();
            let mut arrivals = arrivals;
            arrivals.sort();
            let mut seen_pks = BTreeSet::new();
            let mut it = arrivals.into_iter().peekable();
            for now in 0..4000 {
                dev.on_tick(now);
                while let Some((t, who)) = it.peek().copied() {
                    if t != now { break; }
                    dev.on_receive_key(&peers[who as usize % peers.len()].to_bytes(), 1.0, now);
                    it.next();
                }
                for e in dev.pool().values() {
                    prop_assert!(now - e.last_seen <= p.key_lifetime());
                    prop_assert!(e.first_seen <= e.last_seen);
                }
                for r in &dev.retired {
                    prop_assert!(now - r.retired_at <= p.key_lifetime());
                }
                seen_pks.insert(dev.current_pk().unwrap());
            }
            prop_assert_eq!(seen_pks.len() as u64, dev.key_period());
        }
    }
}
