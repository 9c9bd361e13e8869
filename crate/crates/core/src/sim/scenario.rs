//! The simulator's input: parameters, device traces, adversaries, infections.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::{CsConfig, ProtocolParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    P2p,
    Cs,
}

impl std::str::FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "p2p" => Ok(Protocol::P2p),
            "cs" => Ok(Protocol::Cs),
            other => Err(format!("unknown protocol {other:?}, expected p2p or cs")),
        }
    }
}

fn default_d() -> f64 {
    2.0
}
fn default_t() -> i64 {
    600
}
fn default_retention() -> u32 {
    14
}
fn default_sigma() -> u32 {
    16
}
fn default_rho() -> i64 {
    900
}
fn default_epsilon() -> i64 {
    5
}
fn default_true() -> bool {
    true
}
fn default_protocol() -> Protocol {
    Protocol::P2p
}
fn default_links() -> u32 {
    1
}

/// Scenario parameters as written in the file. `delta` defaults to `T/10`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimParams {
    #[serde(default = "default_d")]
    pub d: f64,
    #[serde(rename = "T", default = "default_t")]
    pub t_min: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<i64>,
    #[serde(rename = "Delta", default = "default_retention")]
    pub retention_days: u32,
    #[serde(default = "default_sigma")]
    pub sigma: u32,
    #[serde(default = "default_rho")]
    pub rho: i64,
    #[serde(default = "default_epsilon")]
    pub epsilon: i64,
    #[serde(default)]
    pub p_drop: f64,
    #[serde(default = "default_true")]
    pub replay_protection: bool,
    #[serde(default = "default_protocol")]
    pub protocol: Protocol,
    #[serde(default = "default_links")]
    pub epoch_chain_min_links: u32,
}

impl Default for SimParams {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl SimParams {
    pub fn beacon_period(&self) -> i64 {
        self.delta.unwrap_or(self.t_min / 10)
    }

    pub fn protocol_params(&self) -> ProtocolParams {
        ProtocolParams {
            unsafe_distance: self.d,
            min_contact: self.t_min,
            beacon_period: self.beacon_period(),
            retention_days: self.retention_days,
            sigma: self.sigma,
            rotation_period: self.rho,
        }
    }

    pub fn cs_config(&self) -> CsConfig {
        CsConfig {
            epsilon: self.epsilon,
            replay_protection: self.replay_protection,
            epoch_chain_min_links: self.epoch_chain_min_links,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub t: i64,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSpec {
    pub name: String,
    #[serde(default)]
    pub clock_skew: i64,
    pub waypoints: Vec<Waypoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Endpoint {
    pub waypoints: Vec<Waypoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AdversarySpec {
    /// Records everything it hears.
    Eavesdropper { name: String, waypoints: Vec<Waypoint> },
    /// Re-emits what it heard in `[capture_start, capture_end]`, `offset` seconds later.
    Replayer {
        name: String,
        waypoints: Vec<Waypoint>,
        capture_start: i64,
        capture_end: i64,
        offset: i64,
    },
    /// Forwards traffic between two endpoints.
    Relayer {
        name: String,
        endpoints: Vec<Endpoint>,
        #[serde(default)]
        latency: i64,
    },
    /// Broadcasts its own keys, harvests what it can decrypt and re-wraps it
    /// toward honest keys it hears.
    FakeKey {
        name: String,
        waypoints: Vec<Waypoint>,
        period: i64,
    },
}

impl AdversarySpec {
    pub fn name(&self) -> &str {
        match self {
            AdversarySpec::Eavesdropper { name, .. }
            | AdversarySpec::Replayer { name, .. }
            | AdversarySpec::Relayer { name, .. }
            | AdversarySpec::FakeKey { name, .. } => name,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            AdversarySpec::Eavesdropper { .. } => "eavesdropper",
            AdversarySpec::Replayer { .. } => "replayer",
            AdversarySpec::Relayer { .. } => "relayer",
            AdversarySpec::FakeKey { .. } => "fake_key",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Infection {
    pub device: String,
    pub t: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub params: SimParams,
    pub duration: i64,
    pub seed: u64,
    pub devices: Vec<DeviceSpec>,
    #[serde(default)]
    pub adversaries: Vec<AdversarySpec>,
    #[serde(default)]
    pub infections: Vec<Infection>,
    /// The scenario scripts an attack whose false positive is the expected outcome.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub expect_false_positive: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{path}: {reason}")]
pub struct ScenarioError {
    pub path: String,
    pub reason: String,
}

fn err(path: impl Into<String>, reason: impl Into<String>) -> ScenarioError {
    ScenarioError {
        path: path.into(),
        reason: reason.into(),
    }
}

fn check_waypoints(path: &str, wps: &[Waypoint]) -> Result<(), ScenarioError> {
    if wps.is_empty() {
        return Err(err(path, "at least one waypoint is required"));
    }
    for (i, w) in wps.iter().enumerate() {
        if !(w.x.is_finite() && w.y.is_finite()) {
            return Err(err(format!("{path}[{i}]"), "coordinates must be finite"));
        }
        if i > 0 && w.t <= wps[i - 1].t {
            return Err(err(format!("{path}[{i}].t"), "waypoint times must be strictly increasing"));
        }
    }
    Ok(())
}

impl Scenario {
    /// Parses and validates; errors name the offending field.
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            err(if path == "." { "<root>".to_string() } else { path }, e.into_inner().to_string())
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.params
            .protocol_params()
            .validate()
            .map_err(|e| err(format!("params.{}", e.field), e.reason))?;
        self.params
            .cs_config()
            .validate()
            .map_err(|e| err(format!("params.{}", e.field), e.reason))?;
        if !(0.0..=1.0).contains(&self.params.p_drop) {
            return Err(err("params.p_drop", "must lie in [0, 1]"));
        }
        if self.duration <= 0 {
            return Err(err("duration", "must be positive"));
        }
        if self.devices.is_empty() {
            return Err(err("devices", "at least one device is required"));
        }
        let mut names = BTreeSet::new();
        for (i, d) in self.devices.iter().enumerate() {
            if !names.insert(d.name.as_str()) {
                return Err(err(format!("devices[{i}].name"), format!("duplicate name {:?}", d.name)));
            }
            check_waypoints(&format!("devices[{i}].waypoints"), &d.waypoints)?;
        }
        for (i, a) in self.adversaries.iter().enumerate() {
            let base = format!("adversaries[{i}]");
            if !names.insert(a.name()) {
                return Err(err(format!("{base}.name"), format!("duplicate name {:?}", a.name())));
            }
            match a {
                AdversarySpec::Eavesdropper { waypoints, .. } => {
                    check_waypoints(&format!("{base}.waypoints"), waypoints)?
                }
                AdversarySpec::Replayer {
                    waypoints,
                    capture_start,
                    capture_end,
                    offset,
                    ..
                } => {
                    check_waypoints(&format!("{base}.waypoints"), waypoints)?;
                    if capture_end < capture_start {
                        return Err(err(format!("{base}.capture_end"), "must not precede capture_start"));
                    }
                    if *offset < 0 {
                        return Err(err(format!("{base}.offset"), "must be non-negative"));
                    }
                }
                AdversarySpec::Relayer {
                    endpoints, latency, ..
                } => {
                    if endpoints.len() != 2 {
                        return Err(err(format!("{base}.endpoints"), "a relayer needs exactly two endpoints"));
                    }
                    for (j, e) in endpoints.iter().enumerate() {
                        check_waypoints(&format!("{base}.endpoints[{j}].waypoints"), &e.waypoints)?;
                    }
                    if *latency < 0 {
                        return Err(err(format!("{base}.latency"), "must be non-negative"));
                    }
                }
                AdversarySpec::FakeKey {
                    waypoints, period, ..
                } => {
                    check_waypoints(&format!("{base}.waypoints"), waypoints)?;
                    if *period <= 0 {
                        return Err(err(format!("{base}.period"), "must be positive"));
                    }
                }
            }
        }
        let mut infected = BTreeSet::new();
        for (i, inf) in self.infections.iter().enumerate() {
            if !self.devices.iter().any(|d| d.name == inf.device) {
                return Err(err(format!("infections[{i}].device"), format!("unknown device {:?}", inf.device)));
            }
            if !infected.insert(inf.device.as_str()) {
                return Err(err(format!("infections[{i}].device"), "a device can be infected only once"));
            }
            if inf.t < 0 || inf.t > self.duration {
                return Err(err(format!("infections[{i}].t"), "must lie within [0, duration]"));
            }
        }
        Ok(())
    }

    pub fn device_index(&self, name: &str) -> Option<usize> {
        self.devices.iter().position(|d| d.name == name)
    }
}
