//! The run report written by `simulate`.

use std::collections::{BTreeMap, BTreeSet};

use ctrace::authority::TracingReport;
use ctrace::crypto::hash;
use ctrace::oracle::{check, classify, ContactBand, Verdict};
use ctrace::sim::trace::TraceEvent;
use ctrace::sim::{Protocol, Scenario, SimOutput};
use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InfectionReport {
    pub device: String,
    pub t: i64,
    /// Device names behind `report.contact_ids`.
    pub contacts: BTreeSet<String>,
    pub report: TracingReport,
    pub bands: BTreeMap<String, ContactBand>,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct AdversarySummary {
    pub name: String,
    pub kind: String,
    pub emitted: usize,
    pub delivered: usize,
    pub harvested: usize,
    pub injected: usize,
    /// Submissions honest devices built from beacons this adversary delivered.
    pub submissions_caused: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Counters {
    pub accepted: usize,
    pub rejected_replay: usize,
    pub rejected_tamper: usize,
    pub log_inserts: usize,
    pub submissions: usize,
    pub pruned: usize,
}

/// Everything a run produced, in a fixed field order so that equal runs
/// serialize to equal bytes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub scenario_digest: String,
    pub protocol: Protocol,
    pub seed: u64,
    pub expect_false_positive: bool,
    pub pass: bool,
    pub infections: Vec<InfectionReport>,
    pub adversaries: Vec<AdversarySummary>,
    pub counters: Counters,
}

/// Hash of the compact JSON form of the scenario actually run.
pub fn scenario_digest(scenario: &Scenario) -> String {
    let canonical = serde_json::to_vec(scenario).expect("scenario serializes");
    hash(&canonical).to_hex()
}

fn summarize_adversaries(scenario: &Scenario, events: &[TraceEvent]) -> Vec<AdversarySummary> {
    let mut out: Vec<AdversarySummary> = scenario
        .adversaries
        .iter()
        .map(|a| AdversarySummary {
            name: a.name().to_string(),
            kind: a.kind().to_string(),
            ..AdversarySummary::default()
        })
        .collect();
    let index: BTreeMap<String, usize> = out.iter().enumerate().map(|(i, a)| (a.name.clone(), i)).collect();
    let slot = |name: &str| index.get(name).copied();
    for e in events {
        let hit = match e {
            TraceEvent::Emit { source, .. } => slot(source).map(|i| (i, 0)),
            TraceEvent::Deliver { source, .. } => slot(source).map(|i| (i, 1)),
            TraceEvent::Harvest { adversary, .. } => slot(adversary).map(|i| (i, 2)),
            TraceEvent::Inject { adversary, .. } => slot(adversary).map(|i| (i, 3)),
            TraceEvent::Submit { beacon_from, .. } => slot(beacon_from).map(|i| (i, 4)),
            _ => None,
        };
        if let Some((i, field)) = hit {
            let a = &mut out[i];
            match field {
                0 => a.emitted += 1,
                1 => a.delivered += 1,
                2 => a.harvested += 1,
                3 => a.injected += 1,
                _ => a.submissions_caused += 1,
            }
        }
    }
    out
}

fn count(events: &[TraceEvent]) -> Counters {
    let mut c = Counters::default();
    for e in events {
        match e {
            TraceEvent::AuthorityDecision { accepted, rejected_replay, rejected_tamper, .. } => {
                c.accepted += accepted;
                c.rejected_replay += rejected_replay;
                c.rejected_tamper += rejected_tamper;
            }
            TraceEvent::LogInsert { .. } => c.log_inserts += 1,
            TraceEvent::Submit { .. } => c.submissions += 1,
            TraceEvent::Prune { removed, .. } => c.pruned += removed,
            _ => {}
        }
    }
    c
}

impl RunReport {
    pub fn build(scenario: &Scenario, output: &SimOutput) -> Self {
        let infections: Vec<InfectionReport> = output
            .outcomes
            .iter()
            .map(|o| {
                let bands = classify(scenario, &o.device, o.t);
                let verdict = check(&o.contacts, &bands, &o.device);
                InfectionReport {
                    device: o.device.clone(),
                    t: o.t,
                    contacts: o.contacts.clone(),
                    report: o.report.clone(),
                    bands,
                    verdict,
                }
            })
            .collect();

        let pass = if scenario.expect_false_positive {
            let complete = infections.iter().all(|i| i.verdict.completeness_violations.is_empty());
            let attacked = infections.iter().any(|i| !i.verdict.soundness_violations.is_empty());
            complete && attacked
        } else {
            infections.iter().all(|i| i.verdict.pass)
        };

        RunReport {
            scenario_digest: scenario_digest(scenario),
            protocol: scenario.params.protocol,
            seed: scenario.seed,
            expect_false_positive: scenario.expect_false_positive,
            pass,
            infections,
            adversaries: summarize_adversaries(scenario, &output.trace.events),
            counters: count(&output.trace.events),
        }
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
