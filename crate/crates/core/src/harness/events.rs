//! Append-only event log: one JSON record per line, strictly increasing
//! sequence numbers, replayable.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::costmodel::CostDimensions;
use crate::executor::ExecutionRecord;
use crate::feedback::FeedbackWeights;
use crate::harness::config::RunConfig;
use crate::lifecycle::LifecycleEvent;
use crate::operators::{OperatorId, OperatorRegistry};
use crate::supernet::{Architecture, SupernetState};
use crate::error::{Error, Result};

/// Everything needed to resume or evaluate a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineSnapshot {
    pub supernet: SupernetState,
    pub registry: OperatorRegistry,
    pub rewards: BTreeMap<OperatorId, f64>,
    pub weights: FeedbackWeights,
    pub queries: u64,
    pub clock: f64,
}

/// One log record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLogEntry {
    /// Strictly increasing from 0, no gaps.
    pub seq: u64,
    /// Engine clock (seconds since run start) at emission.
    pub t: f64,
    pub event: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    RunStart {
        config: Box<RunConfig>,
    },
    Query {
        query_id: String,
        task: crate::executor::Task,
        features: Vec<f64>,
        arch: Architecture,
        arch_seed: u64,
    },
    Execution {
        query_id: String,
        record: ExecutionRecord,
        dims: CostDimensions,
        cost: f64,
        lambda: f64,
        objective: Option<f64>,
    },
    Feedback {
        query_id: String,
        fe: f64,
        fi: f64,
        fs: f64,
        reward: f64,
        rewards_after: BTreeMap<OperatorId, f64>,
        omega_after: [f64; 3],
    },
    Lifecycle {
        cycle: u64,
        events: Vec<LifecycleEvent>,
    },
    Snapshot {
        state: Box<EngineSnapshot>,
    },
    Warning {
        message: String,
    },
}

/// Serialize entries to newline-delimited JSON.
pub fn to_ndjson(entries: &[EventLogEntry]) -> String {
    let mut out = String::new();
    for entry in entries {
        out.push_str(&serde_json::to_string(entry).expect("event serializes"));
        out.push('\n');
    }
    out
}

/// Parse newline-delimited JSON back into entries, verifying the sequence
/// numbers are gapless from 0.
pub fn from_ndjson(text: &str) -> Result<Vec<EventLogEntry>> {
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: EventLogEntry =
            serde_json::from_str(line).map_err(|e| Error::LogCorrupt(format!("line {}: {e}", i + 1)))?;
        let expected = entries.len() as u64;
        if entry.seq != expected {
            return Err(Error::LogSequenceGap {
                expected,
                found: entry.seq,
            });
        }
        entries.push(entry);
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(seq: u64) -> EventLogEntry {
        EventLogEntry {
            seq,
            t: seq as f64,
            event: EventKind::Warning {
                message: format!("w{seq}"),
            },
        }
    }

    #[test]
    fn ndjson_roundtrip() {
        let entries = vec![entry(0), entry(1), entry(2)];
        let text = to_ndjson(&entries);
        assert_eq!(text.lines().count(), 3);
        let back = from_ndjson(&text).unwrap();
        assert_eq!(entries, back);
    }

    #[test]
    fn sequence_gap_is_detected() {
        let entries = vec![entry(0), entry(2)];
        let text = to_ndjson(&entries);
        match from_ndjson(&text) {
            Err(Error::LogSequenceGap { expected: 1, found: 2 }) => {}
            other => panic!("expected gap error, got {other:?}"),
        }
    }

    #[test]
    fn garbage_line_is_corruption() {
        assert!(matches!(from_ndjson("not json\n"), Err(Error::LogCorrupt(_))));
    }
}
