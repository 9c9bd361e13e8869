use serde::Serialize;

use crate::payload::PayloadKind;

/// One observable step of a run. Events are appended in execution order,
/// which is the total order `(t, position within the step)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Emit {
        t: i64,
        source: String,
        kind: PayloadKind,
        key_period: u64,
        prefix: String,
        len: usize,
    },
    Deliver {
        t: i64,
        source: String,
        target: String,
        kind: PayloadKind,
        dist: f64,
    },
    LogInsert {
        t: i64,
        device: String,
        day: i64,
        entry: String,
    },
    Submit {
        t: i64,
        device: String,
        beacon_from: String,
        pk: String,
    },
    Store {
        t: i64,
        pk: String,
        day: i64,
    },
    Prune {
        t: i64,
        removed: usize,
        oldest_day: Option<i64>,
    },
    Disclose {
        t: i64,
        device: String,
        day: i64,
        /// Log entry digests (peer-to-peer) or public keys (central server).
        items: Vec<String>,
    },
    Lookup {
        t: i64,
        device: String,
        keys: usize,
        blobs: usize,
        oldest_day: Option<i64>,
    },
    Match {
        t: i64,
        device: String,
        returned: usize,
    },
    AuthorityDecision {
        t: i64,
        infected: String,
        accepted: usize,
        rejected_replay: usize,
        rejected_tamper: usize,
        contacts: Vec<String>,
    },
    Harvest {
        t: i64,
        adversary: String,
        bytes: String,
    },
    Inject {
        t: i64,
        adversary: String,
        target_pk: String,
        /// Digest of the log entry the target would hold if it logged this.
        entry: String,
    },
}

impl TraceEvent {
    pub fn time(&self) -> i64 {
        match self {
            TraceEvent::Emit { t, .. }
            | TraceEvent::Deliver { t, .. }
            | TraceEvent::LogInsert { t, .. }
            | TraceEvent::Submit { t, .. }
            | TraceEvent::Store { t, .. }
            | TraceEvent::Prune { t, .. }
            | TraceEvent::Disclose { t, .. }
            | TraceEvent::Lookup { t, .. }
            | TraceEvent::Match { t, .. }
            | TraceEvent::AuthorityDecision { t, .. }
            | TraceEvent::Harvest { t, .. }
            | TraceEvent::Inject { t, .. } => *t,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TraceRecord {
    pub events: Vec<TraceEvent>,
}

impl TraceRecord {
    pub fn push(&mut self, e: TraceEvent) {
        self.events.push(e);
    }

    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("trace events serialize"));
            out.push('\n');
        }
        out
    }
}
