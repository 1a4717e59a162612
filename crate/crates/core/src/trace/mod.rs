//! Canonical trace event format (CTEF): types, parsing, validation and the
//! Magentic-One conversation-log adapter.
//!
//! A trace is an ordered list of [`TraceEvent`]s produced by one activity of a
//! centralized orchestrator/worker system. Everything downstream (layering,
//! storage, the HTTP API) consumes traces in this shape.

mod ctef;
mod magentic;
mod validate;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use ctef::{parse_ctef, ParseError};
pub use magentic::{adapt_magentic, extract_links, AdaptError};
pub use validate::{validate, Rule, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    Orchestrator,
    Worker,
}

impl AgentRole {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentRole::Orchestrator => "orchestrator",
            AgentRole::Worker => "worker",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AgentRef {
    pub name: String,
    pub role: AgentRole,
}

impl AgentRef {
    pub fn orchestrator(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            role: AgentRole::Orchestrator,
        }
    }

    pub fn worker(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            role: AgentRole::Worker,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventType {
    TaskReceived,
    PlanCreated,
    PlanRevised,
    ActionStarted,
    OperationAssigned,
    OperationResult,
    ProgressLedger,
    ActivityCompleted,
    FinalAnswer,
    RawMessage,
}

impl EventType {
    pub const ALL: [EventType; 10] = [
        EventType::TaskReceived,
        EventType::PlanCreated,
        EventType::PlanRevised,
        EventType::ActionStarted,
        EventType::OperationAssigned,
        EventType::OperationResult,
        EventType::ProgressLedger,
        EventType::ActivityCompleted,
        EventType::FinalAnswer,
        EventType::RawMessage,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventType::TaskReceived => "task_received",
            EventType::PlanCreated => "plan_created",
            EventType::PlanRevised => "plan_revised",
            EventType::ActionStarted => "action_started",
            EventType::OperationAssigned => "operation_assigned",
            EventType::OperationResult => "operation_result",
            EventType::ProgressLedger => "progress_ledger",
            EventType::ActivityCompleted => "activity_completed",
            EventType::FinalAnswer => "final_answer",
            EventType::RawMessage => "raw_message",
        }
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventType {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventType::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    pub index: usize,
    pub description: String,
}

/// The orchestrator's self-evaluation after a turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerSnapshot {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub op_id: Option<String>,
    pub is_request_satisfied: bool,
    pub is_progress_being_made: bool,
    pub is_in_loop: bool,
    pub next_agent: String,
    pub instruction: String,
    pub reason: String,
}

/// Event-type-specific payload. The variant determines the CTEF `type` key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    TaskReceived {
        query: String,
    },
    PlanCreated {
        actions: Vec<PlanStep>,
    },
    PlanRevised {
        reason: String,
        actions: Vec<PlanStep>,
    },
    ActionStarted {
        plan_index: usize,
        action_index: usize,
    },
    OperationAssigned {
        plan_index: usize,
        action_index: usize,
        op_id: String,
        instruction: String,
    },
    OperationResult {
        op_id: String,
        success: bool,
        content: String,
        links: Vec<String>,
    },
    ProgressLedger(LedgerSnapshot),
    ActivityCompleted,
    FinalAnswer {
        answer: String,
    },
    RawMessage {
        content: String,
    },
}

impl Payload {
    pub fn event_type(&self) -> EventType {
        match self {
            Payload::TaskReceived { .. } => EventType::TaskReceived,
            Payload::PlanCreated { .. } => EventType::PlanCreated,
            Payload::PlanRevised { .. } => EventType::PlanRevised,
            Payload::ActionStarted { .. } => EventType::ActionStarted,
            Payload::OperationAssigned { .. } => EventType::OperationAssigned,
            Payload::OperationResult { .. } => EventType::OperationResult,
            Payload::ProgressLedger(_) => EventType::ProgressLedger,
            Payload::ActivityCompleted => EventType::ActivityCompleted,
            Payload::FinalAnswer { .. } => EventType::FinalAnswer,
            Payload::RawMessage { .. } => EventType::RawMessage,
        }
    }

    pub fn to_value(&self) -> Value {
        use serde_json::json;
        match self {
            Payload::TaskReceived { query } => json!({ "query": query }),
            Payload::PlanCreated { actions } => json!({ "actions": actions }),
            Payload::PlanRevised { reason, actions } => {
                json!({ "reason": reason, "actions": actions })
            }
            Payload::ActionStarted {
                plan_index,
                action_index,
            } => json!({ "plan_index": plan_index, "action_index": action_index }),
            Payload::OperationAssigned {
                plan_index,
                action_index,
                op_id,
                instruction,
            } => json!({
                "plan_index": plan_index,
                "action_index": action_index,
                "op_id": op_id,
                "instruction": instruction,
            }),
            Payload::OperationResult {
                op_id,
                success,
                content,
                links,
            } => json!({
                "op_id": op_id,
                "success": success,
                "content": content,
                "links": links,
            }),
            Payload::ProgressLedger(ledger) => {
                serde_json::to_value(ledger).expect("ledger serializes")
            }
            Payload::ActivityCompleted => json!({}),
            Payload::FinalAnswer { answer } => json!({ "answer": answer }),
            Payload::RawMessage { content } => json!({ "content": content }),
        }
    }
}

/// One CTEF record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub seq: u64,
    pub ts: DateTime<Utc>,
    pub agent: AgentRef,
    pub payload: Payload,
}

impl TraceEvent {
    pub fn event_type(&self) -> EventType {
        self.payload.event_type()
    }

    pub fn to_value(&self) -> Value {
        serde_json::json!({
            "seq": self.seq,
            "ts": format_ts(&self.ts),
            "type": self.event_type().as_str(),
            "agent": {"name": self.agent.name, "role": self.agent.role.as_str()},
            "payload": self.payload.to_value(),
        })
    }

    /// Serializes the record as one CTEF line (no trailing newline).
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&self.to_value()).expect("event serializes")
    }

    pub fn op_id(&self) -> Option<&str> {
        match &self.payload {
            Payload::OperationAssigned { op_id, .. } | Payload::OperationResult { op_id, .. } => {
                Some(op_id)
            }
            Payload::ProgressLedger(l) => l.op_id.as_deref(),
            _ => None,
        }
    }
}

pub fn format_ts(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceFormat {
    Ctef,
    Magentic,
}

impl SourceFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceFormat::Ctef => "ctef",
            SourceFormat::Magentic => "magentic",
        }
    }
}

impl FromStr for SourceFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ctef" => Ok(SourceFormat::Ctef),
            "magentic" => Ok(SourceFormat::Magentic),
            other => Err(format!(
                "unknown trace format `{other}` (expected ctef or magentic)"
            )),
        }
    }
}

/// An ordered event list plus the set of agents appearing in it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTrace {
    pub events: Vec<TraceEvent>,
    pub agents: BTreeSet<AgentRef>,
    pub source_format: SourceFormat,
}

impl RawTrace {
    pub fn new(events: Vec<TraceEvent>, source_format: SourceFormat) -> Self {
        let agents = events.iter().map(|e| e.agent.clone()).collect();
        Self {
            events,
            agents,
            source_format,
        }
    }

    /// The orchestrator, when exactly one agent carries that role.
    pub fn orchestrator(&self) -> Option<&AgentRef> {
        let mut it = self
            .agents
            .iter()
            .filter(|a| a.role == AgentRole::Orchestrator);
        match (it.next(), it.next()) {
            (Some(a), None) => Some(a),
            _ => None,
        }
    }

    pub fn event_by_seq(&self, seq: u64) -> Option<&TraceEvent> {
        self.events
            .binary_search_by_key(&seq, |e| e.seq)
            .ok()
            .map(|i| &self.events[i])
    }

    /// CTEF JSONL, one record per line, LF terminated.
    pub fn to_ctef(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&e.to_json_line());
            out.push('\n');
        }
        out
    }
}
