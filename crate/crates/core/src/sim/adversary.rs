//! Adversary agents. They hear everything honest devices emit within range of
//! their position and answer with their own emissions.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::crypto::{
    has_redundancy, redundancy, rre_relay_open, rre_wrap, sign, CcaCiphertext, GroupElement,
    KeyPair, RreEnvelope,
};
use crate::p2p::P2pLogEntry;
use crate::params::ProtocolParams;
use crate::payload::{Payload, PayloadKind};

use super::mobility::{distance, position_at};
use super::scenario::{AdversarySpec, Protocol, Waypoint};
use super::trace::{TraceEvent, TraceRecord};

/// A payload on the air during the current step.
#[derive(Clone, Debug)]
pub struct AirPacket {
    pub payload: Payload,
    pub origin: (f64, f64),
}

#[derive(Clone, Debug)]
pub struct Emission {
    pub payload: Payload,
    pub origin: (f64, f64),
    pub key_period: u64,
}

#[derive(Debug)]
struct FakeKeyState {
    rng: ChaCha20Rng,
    keys: Vec<KeyPair>,
    current_since: i64,
    next_beacon_at: i64,
    harvest: BTreeSet<CcaCiphertext>,
    targets: BTreeMap<GroupElement, i64>,
}

#[derive(Debug)]
enum Behaviour {
    Eavesdropper,
    Replayer {
        capture: (i64, i64),
        offset: i64,
        queue: VecDeque<(i64, Payload)>,
    },
    Relayer {
        ends: [Vec<Waypoint>; 2],
        latency: i64,
        queue: VecDeque<(i64, usize, Payload)>,
    },
    FakeKey {
        period: i64,
        state: Box<FakeKeyState>,
    },
}

#[derive(Debug)]
pub struct AdversaryAgent {
    name: String,
    waypoints: Vec<Waypoint>,
    params: ProtocolParams,
    protocol: Protocol,
    behaviour: Behaviour,
}

fn heard(air: &[AirPacket], at: (f64, f64), range: f64) -> impl Iterator<Item = &AirPacket> {
    air.iter().filter(move |p| distance(p.origin, at) <= range)
}

impl AdversaryAgent {
    pub fn new(spec: &AdversarySpec, params: ProtocolParams, protocol: Protocol, seed: [u8; 32]) -> Self {
        let (waypoints, behaviour) = match spec {
            AdversarySpec::Eavesdropper { waypoints, .. } => (waypoints.clone(), Behaviour::Eavesdropper),
            AdversarySpec::Replayer {
                waypoints,
                capture_start,
                capture_end,
                offset,
                ..
            } => (
                waypoints.clone(),
                Behaviour::Replayer {
                    capture: (*capture_start, *capture_end),
                    offset: *offset,
                    queue: VecDeque::new(),
                },
            ),
            AdversarySpec::Relayer {
                endpoints, latency, ..
            } => (
                endpoints[0].waypoints.clone(),
                Behaviour::Relayer {
                    ends: [endpoints[0].waypoints.clone(), endpoints[1].waypoints.clone()],
                    latency: *latency,
                    queue: VecDeque::new(),
                },
            ),
            AdversarySpec::FakeKey {
                waypoints, period, ..
            } => (
                waypoints.clone(),
                Behaviour::FakeKey {
                    period: *period,
                    state: Box::new(FakeKeyState {
                        rng: ChaCha20Rng::from_seed(seed),
                        keys: Vec::new(),
                        current_since: 0,
                        next_beacon_at: i64::MIN,
                        harvest: BTreeSet::new(),
                        targets: BTreeMap::new(),
                    }),
                },
            ),
        };
        AdversaryAgent {
            name: spec.name().to_string(),
            waypoints,
            params,
            protocol,
            behaviour,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Inner ciphertexts a fake-key adversary has decrypted so far.
    pub fn harvested(&self) -> Vec<CcaCiphertext> {
        match &self.behaviour {
            Behaviour::FakeKey { state, .. } => state.harvest.iter().cloned().collect(),
            _ => Vec::new(),
        }
    }

    pub fn step(&mut self, t: i64, air: &[AirPacket], trace: &mut TraceRecord) -> Vec<Emission> {
        let range = self.params.unsafe_distance;
        let here = position_at(&self.waypoints, t);
        let name = self.name.clone();
        match &mut self.behaviour {
            Behaviour::Eavesdropper => {
                for p in heard(air, here, range) {
                    trace.push(TraceEvent::Harvest {
                        t,
                        adversary: name.clone(),
                        bytes: hex::encode(&p.payload.bytes),
                    });
                }
                Vec::new()
            }
            Behaviour::Replayer {
                capture,
                offset,
                queue,
            } => {
                if (capture.0..=capture.1).contains(&t) {
                    for p in heard(air, here, range) {
                        queue.push_back((t + *offset, p.payload.clone()));
                    }
                }
                let mut out = Vec::new();
                while queue.front().is_some_and(|(at, _)| *at <= t) {
                    let (_, payload) = queue.pop_front().expect("front checked");
                    out.push(Emission {
                        payload,
                        origin: here,
                        key_period: 0,
                    });
                }
                out
            }
            Behaviour::Relayer {
                ends,
                latency,
                queue,
            } => {
                let pos = [position_at(&ends[0], t), position_at(&ends[1], t)];
                for (side, at) in pos.iter().enumerate() {
                    for p in heard(air, *at, range) {
                        queue.push_back((t + *latency, 1 - side, p.payload.clone()));
                    }
                }
                let mut out = Vec::new();
                while queue.front().is_some_and(|(at, _, _)| *at <= t) {
                    let (_, side, payload) = queue.pop_front().expect("front checked");
                    out.push(Emission {
                        payload,
                        origin: pos[side],
                        key_period: 0,
                    });
                }
                out
            }
            Behaviour::FakeKey { period, state } => {
                fake_key_step(&name, &self.params, self.protocol, *period, state, t, here, air, trace)
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn fake_key_step(
    name: &str,
    params: &ProtocolParams,
    protocol: Protocol,
    period: i64,
    st: &mut FakeKeyState,
    t: i64,
    here: (f64, f64),
    air: &[AirPacket],
    trace: &mut TraceRecord,
) -> Vec<Emission> {
    if st.keys.is_empty() || t - st.current_since >= period {
        st.keys.push(KeyPair::generate(&mut st.rng));
        st.current_since = t;
    }
    let sigma = params.sigma;
    for p in heard(air, here, params.unsafe_distance) {
        match p.payload.kind {
            PayloadKind::KeyBeacon => {
                if let Ok(pk) = GroupElement::from_bytes(&p.payload.bytes) {
                    st.targets.insert(pk, t);
                }
            }
            PayloadKind::Iam => {
                let Ok(env) = RreEnvelope::from_bytes(&p.payload.bytes) else {
                    continue;
                };
                for k in &st.keys {
                    if let Ok((inner, tail)) = rre_relay_open(&k.sk, &env) {
                        if has_redundancy(&tail, sigma) {
                            if st.harvest.insert(inner.clone()) {
                                trace.push(TraceEvent::Harvest {
                                    t,
                                    adversary: name.to_string(),
                                    bytes: hex::encode(inner.to_bytes()),
                                });
                            }
                            break;
                        }
                    }
                }
            }
            PayloadKind::CsBeacon => {}
        }
    }
    let lifetime = params.key_lifetime();
    st.targets.retain(|_, last| t - *last <= lifetime);

    if t < st.next_beacon_at {
        return Vec::new();
    }
    st.next_beacon_at = t + params.beacon_period;
    let current = *st.keys.last().expect("key created above");
    let key_period = st.keys.len() as u64;
    let mut out = vec![Emission {
        payload: match protocol {
            Protocol::P2p => Payload::key_beacon(&current.pk),
            Protocol::Cs => Payload::cs_beacon(&current.pk, t, &sign(&current, t)),
        },
        origin: here,
        key_period,
    }];
    if protocol == Protocol::P2p {
        let tail = redundancy(sigma);
        for target in st.targets.keys() {
            for inner in &st.harvest {
                let env = rre_wrap(target, inner, &tail, &mut st.rng);
                let entry = P2pLogEntry {
                    inner: inner.clone(),
                    own_pk: *target,
                };
                trace.push(TraceEvent::Inject {
                    t,
                    adversary: name.to_string(),
                    target_pk: target.to_hex(),
                    entry: entry.digest().to_hex(),
                });
                out.push(Emission {
                    payload: Payload::iam(env.to_bytes()),
                    origin: here,
                    key_period,
                });
            }
        }
    }
    out
}
