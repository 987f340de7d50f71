//! Append-only session logs, one JSON record per line.
//!
//! The first record is a versioned header carrying the full session
//! settings, so a log can be replayed without the config file that produced
//! it. Timestamps are wall-clock milliseconds; [`SessionLog::normalized`]
//! zeroes them for determinism checks.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{Answer, BoundsError, ConflictEvent, UtilityInterval, UtilityState};
use crate::outcome::{Outcome, Prob};
use crate::protocol::ProtocolKind;
use crate::query::{Arm, ArmOrder, Delivery};
use crate::respondent::Family;
use crate::session::SessionSettings;
use crate::task::{CompletionRecord, TaskSpec};

pub const LOG_FORMAT: &str = "elicit-session-log";
pub const LOG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("log has no header")]
    MissingHeader,
    #[error("unsupported log format {format} v{version}")]
    UnsupportedVersion { format: String, version: u32 },
    #[error("log is incomplete: no final record")]
    Incomplete,
    #[error("replay mismatch: {0}")]
    ReplayMismatch(String),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
}

pub fn now_millis() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum LogRecord {
    Header {
        format: String,
        version: u32,
        session_id: String,
        protocol: ProtocolKind,
        settings: Box<SessionSettings>,
        at: u64,
    },
    /// Ground truth of a simulated respondent, for later diagnostics.
    SimulatedTruth { family: Family, values: BTreeMap<Outcome, f64> },
    Training { index: usize, task: Box<TaskSpec>, completion: CompletionRecord, at: u64 },
    Query {
        ordinal: u32,
        outcome: Outcome,
        p: Prob,
        delivery: Delivery,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        arm_order: Option<ArmOrder>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamble_layout: Option<Vec<bool>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        headline: Option<String>,
        at: u64,
    },
    Task { ordinal: u32, arm: Arm, position: usize, task: Box<TaskSpec>, completion: CompletionRecord, at: u64 },
    Response {
        ordinal: u32,
        outcome: Outcome,
        p: Prob,
        answer: Answer,
        before: UtilityInterval,
        after: UtilityInterval,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        conflict: Option<ConflictEvent>,
        at: u64,
    },
    Suspended { at: u64 },
    Resumed { at: u64 },
    Final {
        queries: u32,
        conflicts: usize,
        intervals: BTreeMap<Outcome, UtilityInterval>,
        midpoints: BTreeMap<Outcome, f64>,
        at: u64,
    },
}

impl LogRecord {
    fn timestamp_mut(&mut self) -> Option<&mut u64> {
        match self {
            LogRecord::Header { at, .. }
            | LogRecord::Training { at, .. }
            | LogRecord::Query { at, .. }
            | LogRecord::Task { at, .. }
            | LogRecord::Response { at, .. }
            | LogRecord::Suspended { at }
            | LogRecord::Resumed { at }
            | LogRecord::Final { at, .. } => Some(at),
            LogRecord::SimulatedTruth { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    records: Vec<LogRecord>,
}

/// What a successful replay recomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub state: UtilityState,
    pub responses: usize,
}

impl SessionLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: LogRecord) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Copy with every timestamp set to zero.
    pub fn normalized(&self) -> SessionLog {
        let mut out = self.clone();
        for r in &mut out.records {
            if let Some(at) = r.timestamp_mut() {
                *at = 0;
            }
        }
        out
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("log records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, LogError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record = serde_json::from_str(line)
                .map_err(|e| LogError::Parse { line: i + 1, message: e.to_string() })?;
            records.push(record);
        }
        let log = Self { records };
        log.header()?;
        Ok(log)
    }

    pub fn write(&self, path: &Path) -> Result<(), LogError> {
        std::fs::write(path, self.to_jsonl())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, LogError> {
        Self::from_jsonl(&std::fs::read_to_string(path)?)
    }

    pub fn header(&self) -> Result<(&str, ProtocolKind, &SessionSettings), LogError> {
        match self.records.first() {
            Some(LogRecord::Header { format, version, session_id, protocol, settings, .. }) => {
                if format != LOG_FORMAT || *version != LOG_VERSION {
                    return Err(LogError::UnsupportedVersion { format: format.clone(), version: *version });
                }
                Ok((session_id, *protocol, settings))
            }
            _ => Err(LogError::MissingHeader),
        }
    }

    pub fn final_record(&self) -> Option<(&BTreeMap<Outcome, UtilityInterval>, &BTreeMap<Outcome, f64>)> {
        self.records.iter().rev().find_map(|r| match r {
            LogRecord::Final { intervals, midpoints, .. } => Some((intervals, midpoints)),
            _ => None,
        })
    }

    pub fn truth(&self) -> Option<(Family, &BTreeMap<Outcome, f64>)> {
        self.records.iter().find_map(|r| match r {
            LogRecord::SimulatedTruth { family, values } => Some((*family, values)),
            _ => None,
        })
    }

    pub fn queries(&self) -> impl Iterator<Item = &LogRecord> {
        self.records.iter().filter(|r| matches!(r, LogRecord::Query { .. }))
    }

    /// Re-applies every logged response to a fresh state, checking each
    /// recorded bound update and, when present, the final intervals.
    pub fn replay(&self) -> Result<Replay, LogError> {
        let (_, _, settings) = self.header()?;
        let mut state = UtilityState::init(&settings.space, settings.conflict_policy);
        let mut responses = 0;
        for r in &self.records {
            if let LogRecord::Response { ordinal, outcome, p, answer, before, after, .. } = r {
                let update = state.apply_response(outcome, *p, *answer)?;
                if update.before != *before || update.after != *after {
                    return Err(LogError::ReplayMismatch(format!(
                        "query {ordinal} on {outcome}: logged {before} -> {after}, replayed {} -> {}",
                        update.before, update.after
                    )));
                }
                responses += 1;
            }
        }
        if let Some((intervals, _)) = self.final_record() {
            let stored = serde_json::to_string(intervals).expect("intervals serialize");
            let replayed = serde_json::to_string(state.intervals()).expect("intervals serialize");
            if stored != replayed {
                return Err(LogError::ReplayMismatch("final intervals differ from replayed ones".into()));
            }
        }
        Ok(Replay { state, responses })
    }
}
