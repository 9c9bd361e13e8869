//! Deterministic radio world. Time advances in one-second steps; within a
//! step the order is: midnight housekeeping, device ticks in scenario order,
//! deliveries, adversaries, infections.

pub mod adversary;
pub mod mobility;
pub mod radio;
pub mod scenario;
pub mod trace;

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::authority::{Authority, TracingReport};
use crate::crypto::{hash, GroupElement, KeyPair};
use crate::cs::CsDevice;
use crate::identity::DeviceIdentity;
use crate::p2p::{IamOutcome, P2pDevice};
use crate::params::{day_of, SECONDS_PER_DAY};
use crate::payload::{Payload, PayloadKind};

use adversary::{AdversaryAgent, AirPacket, Emission};
use mobility::{distance, position_at};
use radio::Radio;
pub use scenario::{Protocol, Scenario, ScenarioError};
use trace::{TraceEvent, TraceRecord};

/// 32-byte seed for a labelled sub-component of a run.
pub fn derive_seed(seed: u64, label: &str, index: u64) -> [u8; 32] {
    let mut m = Vec::with_capacity(16 + label.len());
    m.extend_from_slice(&seed.to_be_bytes());
    m.extend_from_slice(label.as_bytes());
    m.extend_from_slice(&index.to_be_bytes());
    hash(&m).0
}

#[derive(Debug)]
enum Node {
    P2p(P2pDevice),
    Cs(CsDevice),
}

impl Node {
    fn key_period(&self) -> u64 {
        match self {
            Node::P2p(d) => d.key_period(),
            Node::Cs(d) => d.key_period(),
        }
    }
}

/// Result of one infection event.
#[derive(Clone, Debug)]
pub struct InfectionOutcome {
    pub device: String,
    pub t: i64,
    pub report: TracingReport,
    /// Names of the devices whose identities are in the report.
    pub contacts: BTreeSet<String>,
}

#[derive(Debug)]
pub struct SimOutput {
    pub outcomes: Vec<InfectionOutcome>,
    pub trace: TraceRecord,
    pub identities: Vec<(String, DeviceIdentity)>,
    pub authority_pk: GroupElement,
}

struct World<'a> {
    scenario: &'a Scenario,
    names: Vec<String>,
    nodes: Vec<Node>,
    radio: Radio,
    authority: Authority,
    trace: TraceRecord,
}

impl World<'_> {
    fn local(&self, i: usize, t: i64) -> i64 {
        t + self.scenario.devices[i].clock_skew
    }

    fn emit(&mut self, t: i64, source: &str, key_period: u64, p: &Payload) {
        self.trace.push(TraceEvent::Emit {
            t,
            source: source.to_string(),
            kind: p.kind,
            key_period,
            prefix: hex::encode(p.prefix()),
            len: p.bytes.len(),
        });
    }

    /// Hands a payload to every device in range except its source.
    fn deliver(
        &mut self,
        t: i64,
        source: &str,
        skip: Option<usize>,
        p: &Payload,
        origin: (f64, f64),
        positions: &[(f64, f64)],
    ) {
        for (j, &pos) in positions.iter().enumerate().take(self.nodes.len()) {
            if Some(j) == skip {
                continue;
            }
            let dist = distance(origin, pos);
            if !self.radio.delivers(dist) {
                continue;
            }
            self.trace.push(TraceEvent::Deliver {
                t,
                source: source.to_string(),
                target: self.names[j].clone(),
                kind: p.kind,
                dist,
            });
            let now = self.local(j, t);
            match &mut self.nodes[j] {
                Node::P2p(dev) => {
                    if let IamOutcome::Logged { entry, fresh: true } = dev.on_receive(p, dist, now) {
                        self.trace.push(TraceEvent::LogInsert {
                            t,
                            device: self.names[j].clone(),
                            day: day_of(t),
                            entry: entry.digest().to_hex(),
                        });
                    }
                }
                Node::Cs(dev) => {
                    if p.kind != PayloadKind::CsBeacon {
                        continue;
                    }
                    if let Ok(sub) = dev.on_receive_beacon(&p.bytes, dist, now) {
                        self.trace.push(TraceEvent::Submit {
                            t,
                            device: self.names[j].clone(),
                            beacon_from: source.to_string(),
                            pk: sub.pk.to_hex(),
                        });
                        self.authority
                            .db()
                            .store(sub.pk.as_bytes(), sub.blob, t)
                            .expect("submission keys are valid elements");
                        self.trace.push(TraceEvent::Store {
                            t,
                            pk: sub.pk.to_hex(),
                            day: day_of(t),
                        });
                    }
                }
            }
        }
    }

    fn midnight(&mut self, t: i64) {
        for node in &mut self.nodes {
            match node {
                Node::P2p(d) => d.rotate_day(),
                Node::Cs(d) => d.rotate_day(),
            }
        }
        let removed = self.authority.db().prune(t);
        let oldest_day = self.authority.db().ages().iter().map(|(_, d)| *d).min();
        self.trace.push(TraceEvent::Prune {
            t,
            removed,
            oldest_day,
        });
    }

    fn infect(&mut self, i: usize, t: i64) -> TracingReport {
        let name = self.names[i].clone();
        let report = match &mut self.nodes[i] {
            Node::P2p(dev) => {
                let disclosure = dev.disclose_infection().expect("each device is infected once");
                self.trace.push(TraceEvent::Disclose {
                    t,
                    device: name.clone(),
                    day: day_of(t),
                    items: disclosure.entries.iter().map(|e| e.digest().to_hex()).collect(),
                });
                self.authority
                    .ingest_p2p_disclosure(disclosure.id, &disclosure.entries)
                    .expect("identity reported once")
            }
            Node::Cs(dev) => {
                let disclosure = dev.disclose_infection().expect("each device is infected once");
                let keys = disclosure.all_keys();
                self.trace.push(TraceEvent::Disclose {
                    t,
                    device: name.clone(),
                    day: day_of(t),
                    items: keys.iter().map(GroupElement::to_hex).collect(),
                });
                let blobs = self.authority.db().lookup(&keys);
                let ages = self.authority.db().ages();
                let key_set: BTreeSet<[u8; 32]> = keys.iter().map(|k| k.to_bytes()).collect();
                self.trace.push(TraceEvent::Lookup {
                    t,
                    device: name.clone(),
                    keys: keys.len(),
                    blobs: blobs.len(),
                    oldest_day: ages.iter().filter(|(k, _)| key_set.contains(k)).map(|(_, d)| *d).min(),
                });
                let returned = dev.match_entries(&blobs).expect("device just disclosed");
                self.trace.push(TraceEvent::Match {
                    t,
                    device: name.clone(),
                    returned: returned.len(),
                });
                self.authority
                    .finalize_cs(disclosure.id, &returned)
                    .expect("identity reported once")
            }
        };
        report
    }
}

/// Runs a validated scenario to completion.
pub fn run(scenario: &Scenario) -> Result<SimOutput, ScenarioError> {
    scenario.validate()?;
    let params = scenario.params.protocol_params();
    let cs_config = scenario.params.cs_config();
    let protocol = scenario.params.protocol;
    let seed = scenario.seed;

    let authority_keys = KeyPair::generate(&mut ChaCha20Rng::from_seed(derive_seed(seed, "authority", 0)));
    let authority = Authority::new(authority_keys, params.retention_days);
    let names: Vec<String> = scenario.devices.iter().map(|d| d.name.clone()).collect();
    let mut identities = Vec::new();
    let mut nodes = Vec::new();
    for (i, name) in names.iter().enumerate() {
        let id = DeviceIdentity::random(&mut ChaCha20Rng::from_seed(derive_seed(seed, "identity", i as u64)));
        let dev_seed = derive_seed(seed, "device", i as u64);
        nodes.push(match protocol {
            Protocol::P2p => Node::P2p(P2pDevice::new(id, params, authority_keys.pk, dev_seed)),
            Protocol::Cs => Node::Cs(CsDevice::new(id, params, cs_config, authority_keys.pk, dev_seed)),
        });
        identities.push((name.clone(), id));
    }
    let by_id: BTreeMap<DeviceIdentity, String> = identities.iter().map(|(n, id)| (*id, n.clone())).collect();
    let mut adversaries: Vec<AdversaryAgent> = scenario
        .adversaries
        .iter()
        .enumerate()
        .map(|(k, spec)| AdversaryAgent::new(spec, params, protocol, derive_seed(seed, "adversary", k as u64)))
        .collect();
    let mut infections: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for inf in &scenario.infections {
        let i = scenario.device_index(&inf.device).expect("validated");
        infections.entry(inf.t).or_default().push(i);
    }

    let mut world = World {
        scenario,
        names,
        nodes,
        radio: Radio::new(params.unsafe_distance, scenario.params.p_drop, derive_seed(seed, "radio", 0)),
        authority,
        trace: TraceRecord::default(),
    };
    let mut outcomes = Vec::new();

    for t in 0..=scenario.duration {
        if t > 0 && t % SECONDS_PER_DAY == 0 {
            world.midnight(t);
        }
        let positions: Vec<(f64, f64)> = scenario
            .devices
            .iter()
            .map(|d| position_at(&d.waypoints, t))
            .collect();

        let mut air = Vec::new();
        for i in 0..world.nodes.len() {
            let now = world.local(i, t);
            let out = match &mut world.nodes[i] {
                Node::P2p(d) => d.on_tick(now),
                Node::Cs(d) => d.on_tick(now),
            };
            let period = world.nodes[i].key_period();
            for p in out {
                let name = world.names[i].clone();
                world.emit(t, &name, period, &p);
                air.push((i, p));
            }
        }
        for (i, p) in &air {
            let name = world.names[*i].clone();
            world.deliver(t, &name, Some(*i), p, positions[*i], &positions);
        }

        let heard: Vec<AirPacket> = air
            .iter()
            .map(|(i, p)| AirPacket {
                payload: p.clone(),
                origin: positions[*i],
            })
            .collect();
        for adv in &mut adversaries {
            let emissions: Vec<Emission> = adv.step(t, &heard, &mut world.trace);
            let name = adv.name().to_string();
            for e in emissions {
                world.emit(t, &name, e.key_period, &e.payload);
                world.deliver(t, &name, None, &e.payload, e.origin, &positions);
            }
        }

        if let Some(list) = infections.get(&t) {
            for &i in list {
                let report = world.infect(i, t);
                let contacts: BTreeSet<String> =
                    report.contact_ids.iter().filter_map(|id| by_id.get(id).cloned()).collect();
                world.trace.push(TraceEvent::AuthorityDecision {
                    t,
                    infected: world.names[i].clone(),
                    accepted: report.accepted,
                    rejected_replay: report.rejected_replay,
                    rejected_tamper: report.rejected_tamper,
                    contacts: contacts.iter().cloned().collect(),
                });
                outcomes.push(InfectionOutcome {
                    device: world.names[i].clone(),
                    t,
                    report,
                    contacts,
                });
            }
        }
    }

    Ok(SimOutput {
        outcomes,
        trace: world.trace,
        identities,
        authority_pk: authority_keys.pk,
    })
}
