//! Deterministic simulated transport with a clock, an append-only event
//! log, adversary actions and a line-oriented scenario runner.

use std::fmt::Write as _;

use thiserror::Error;

use crate::kdf::Timestamp;
use crate::protocol::{Channel, Envelope, MsgType};

mod scanner;
mod scenario;
mod world;

pub use scanner::{scan, Finding, SecretSet};
pub use scenario::{
    bundled, parse_scenario, run_scenario, Action, Assertion, Expectation, Scenario,
    ScenarioReport, ScriptLine, Selector, StepReport, UidRef,
};
pub use world::{ActionOutcome, World};

/// 2020-01-01T00:00:00Z; the simulation's fixed starting point.
pub const START_EPOCH_MS: u64 = 1_577_836_800_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("unknown actor {0:?}")]
    UnknownActor(String),
    #[error("actor {0:?} already exists")]
    DuplicateActor(String),
    #[error("no log entry matches {0}")]
    NoSuchEntry(String),
    #[error("index {index} outside a {len}-byte payload")]
    IndexOutOfRange { index: i64, len: usize },
    #[error("nothing is held for delayed delivery")]
    NothingHeld,
    #[error("actor {0:?} has no uid yet")]
    NoUid(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: {reason}")]
    Script { line: usize, reason: String },
}

/// The simulation's only time source.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimClock {
    now_ms: u64,
}

impl Default for SimClock {
    fn default() -> Self {
        Self {
            now_ms: START_EPOCH_MS,
        }
    }
}

impl SimClock {
    pub fn now(&self) -> Timestamp {
        Timestamp(self.now_ms)
    }

    pub fn advance(&mut self, ms: u64) {
        self.now_ms += ms;
    }

    pub fn elapsed_ms(&self) -> u64 {
        self.now_ms - START_EPOCH_MS
    }
}

/// What happened to one delivery.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DeliveryOutcome {
    Accepted,
    Rejected(String),
    Undeliverable,
}

impl std::fmt::Display for DeliveryOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DeliveryOutcome::Accepted => f.write_str("ok"),
            DeliveryOutcome::Rejected(code) => write!(f, "rejected:{code}"),
            DeliveryOutcome::Undeliverable => f.write_str("undeliverable"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEntry {
    pub seq: u64,
    pub clock: Timestamp,
    pub envelope: Envelope,
    /// Set on adversary deliveries.
    pub tag: Option<String>,
    pub outcome: DeliveryOutcome,
}

impl LogEntry {
    pub fn channel(&self) -> Channel {
        self.envelope.channel
    }

    pub fn msg_type(&self) -> MsgType {
        self.envelope.msg_type
    }

    pub fn payload(&self) -> &[u8] {
        &self.envelope.payload
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventLog {
    entries: Vec<LogEntry>,
}

impl EventLog {
    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, seq: u64) -> Option<&LogEntry> {
        self.entries.get(seq.checked_sub(1)? as usize)
    }

    /// The most recent genuine (untagged) entry of this type.
    pub fn last_of(&self, msg_type: MsgType) -> Option<&LogEntry> {
        self.entries
            .iter()
            .rev()
            .find(|e| e.msg_type() == msg_type && e.tag.is_none())
    }

    pub(crate) fn append(
        &mut self,
        clock: Timestamp,
        envelope: Envelope,
        tag: Option<String>,
        outcome: DeliveryOutcome,
    ) -> u64 {
        let seq = self.entries.len() as u64 + 1;
        self.entries.push(LogEntry {
            seq,
            clock,
            envelope,
            tag,
            outcome,
        });
        seq
    }

    /// One line per entry; stable across runs for the same seed and script.
    pub fn export_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let env = &e.envelope;
            writeln!(
                out,
                "#{:04} t+{}ms {} {} -> {} {} tag={} outcome={} payload={}",
                e.seq,
                e.clock.0 - START_EPOCH_MS,
                env.channel,
                env.sender,
                env.recipient,
                env.msg_type,
                e.tag.as_deref().unwrap_or("-"),
                e.outcome,
                hex::encode(&env.payload)
            )
            .expect("write to String");
        }
        out
    }
}
