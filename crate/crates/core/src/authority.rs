//! The health authority: verifies disclosed peer-to-peer logs, keeps the
//! central-server submission database, and turns matched ciphertexts back into
//! identities.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::RwLock;

use serde::Serialize;
use thiserror::Error;

use crate::crypto::{
    rre_authority_open, xdec, AuthorityReject, CcaCiphertext, GroupElement, KeyPair,
    SemSecCiphertext, ELEMENT_LEN,
};
use crate::identity::DeviceIdentity;
use crate::p2p::P2pLogEntry;
use crate::params::day_of;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum AuthorityError {
    #[error("identity already reported as infected")]
    AlreadyInfected,
    #[error("public key is not a valid group element")]
    InvalidKey,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StoredBlob {
    pub blob: SemSecCiphertext,
    pub received_day: i64,
}

/// Submissions indexed by the canonical encoding of the key they were
/// encrypted to. Safe to share between threads.
#[derive(Debug)]
pub struct SubmissionDb {
    retention_days: u32,
    entries: RwLock<BTreeMap<[u8; ELEMENT_LEN], Vec<StoredBlob>>>,
}

impl SubmissionDb {
    pub fn new(retention_days: u32) -> Self {
        SubmissionDb {
            retention_days,
            entries: RwLock::new(BTreeMap::new()),
        }
    }

    pub fn retention_days(&self) -> u32 {
        self.retention_days
    }

    pub fn store(&self, pk: &[u8], blob: SemSecCiphertext, now: i64) -> Result<(), AuthorityError> {
        let pk = GroupElement::from_bytes(pk).map_err(|_| AuthorityError::InvalidKey)?;
        let mut entries = self.entries.write().expect("db lock poisoned");
        entries.entry(pk.to_bytes()).or_default().push(StoredBlob {
            blob,
            received_day: day_of(now),
        });
        Ok(())
    }

    /// Drops every blob more than `Δ` days old and returns how many went.
    pub fn prune(&self, now: i64) -> usize {
        let today = day_of(now);
        let keep_from = today - i64::from(self.retention_days);
        let mut entries = self.entries.write().expect("db lock poisoned");
        let mut removed = 0;
        entries.retain(|_, blobs| {
            let before = blobs.len();
            blobs.retain(|b| b.received_day >= keep_from);
            removed += before - blobs.len();
            !blobs.is_empty()
        });
        removed
    }

    /// Every stored blob under any of the given keys, paired with that key.
    pub fn lookup(&self, keys: &[GroupElement]) -> Vec<(GroupElement, SemSecCiphertext)> {
        let entries = self.entries.read().expect("db lock poisoned");
        let distinct: BTreeSet<&GroupElement> = keys.iter().collect();
        distinct
            .into_iter()
            .flat_map(|pk| {
                entries
                    .get(pk.as_bytes())
                    .into_iter()
                    .flatten()
                    .map(move |s| (*pk, s.blob.clone()))
            })
            .collect()
    }

    /// Snapshot of `(key, received_day)` for every stored blob.
    pub fn ages(&self) -> Vec<([u8; ELEMENT_LEN], i64)> {
        let entries = self.entries.read().expect("db lock poisoned");
        entries
            .iter()
            .flat_map(|(k, v)| v.iter().map(move |b| (*k, b.received_day)))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.entries
            .read()
            .expect("db lock poisoned")
            .values()
            .map(Vec::len)
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Outcome of one disclosed entry.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryDecision {
    Accepted,
    RejectedReplay,
    RejectedTamper,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TracingReport {
    pub infected_id: DeviceIdentity,
    pub contact_ids: BTreeSet<DeviceIdentity>,
    pub accepted: usize,
    pub rejected_replay: usize,
    pub rejected_tamper: usize,
    #[serde(skip)]
    pub decisions: Vec<EntryDecision>,
}

impl TracingReport {
    fn new(infected_id: DeviceIdentity) -> Self {
        TracingReport {
            infected_id,
            contact_ids: BTreeSet::new(),
            accepted: 0,
            rejected_replay: 0,
            rejected_tamper: 0,
            decisions: Vec::new(),
        }
    }

    fn accept(&mut self, plain: &[u8]) {
        match DeviceIdentity::from_bytes(plain) {
            Some(id) => {
                self.accepted += 1;
                if id != self.infected_id {
                    self.contact_ids.insert(id);
                }
                self.decisions.push(EntryDecision::Accepted);
            }
            None => self.reject(AuthorityReject::Tamper),
        }
    }

    fn reject(&mut self, why: AuthorityReject) {
        match why {
            AuthorityReject::Replay => {
                self.rejected_replay += 1;
                self.decisions.push(EntryDecision::RejectedReplay);
            }
            AuthorityReject::Tamper => {
                self.rejected_tamper += 1;
                self.decisions.push(EntryDecision::RejectedTamper);
            }
        }
    }
}

#[derive(Debug)]
pub struct Authority {
    keys: KeyPair,
    infected: BTreeSet<DeviceIdentity>,
    db: SubmissionDb,
}

impl Authority {
    pub fn new(keys: KeyPair, retention_days: u32) -> Self {
        Authority {
            keys,
            infected: BTreeSet::new(),
            db: SubmissionDb::new(retention_days),
        }
    }

    pub fn public_key(&self) -> GroupElement {
        self.keys.pk
    }

    pub fn db(&self) -> &SubmissionDb {
        &self.db
    }

    pub fn infected(&self) -> &BTreeSet<DeviceIdentity> {
        &self.infected
    }

    fn mark_infected(&mut self, id: DeviceIdentity) -> Result<(), AuthorityError> {
        if !self.infected.insert(id) {
            return Err(AuthorityError::AlreadyInfected);
        }
        Ok(())
    }

    /// Identities already reported as infected are never handed out again.
    fn redact(&self, mut report: TracingReport) -> TracingReport {
        report.contact_ids.retain(|id| !self.infected.contains(id));
        report
    }

    /// Verifies each log entry against the own key it was logged with.
    pub fn ingest_p2p_disclosure<'a>(
        &mut self,
        id: DeviceIdentity,
        entries: impl IntoIterator<Item = &'a P2pLogEntry>,
    ) -> Result<TracingReport, AuthorityError> {
        self.mark_infected(id)?;
        let mut report = TracingReport::new(id);
        for e in entries {
            match rre_authority_open(&self.keys.sk, &e.inner, &e.own_pk) {
                Ok(plain) => report.accept(&plain),
                Err(why) => report.reject(why),
            }
        }
        Ok(self.redact(report))
    }

    /// Decrypts the ciphertexts an infected device returned from matching.
    pub fn finalize_cs<'a>(
        &mut self,
        id: DeviceIdentity,
        returned: impl IntoIterator<Item = &'a CcaCiphertext>,
    ) -> Result<TracingReport, AuthorityError> {
        self.mark_infected(id)?;
        let mut report = TracingReport::new(id);
        for c in returned {
            match xdec(&self.keys.sk, c) {
                Ok(plain) => report.accept(&plain),
                Err(_) => report.reject(AuthorityReject::Tamper),
            }
        }
        Ok(self.redact(report))
    }
}
