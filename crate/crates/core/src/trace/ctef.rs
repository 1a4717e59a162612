use chrono::{DateTime, Utc};
use serde_json::{Map, Value};
use thiserror::Error;

use super::{
    validate, AgentRef, AgentRole, EventType, LedgerSnapshot, Payload, PlanStep, RawTrace,
    SourceFormat, TraceEvent, Violation,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("empty trace")]
    EmptyTrace,
    #[error("line {line}: malformed record: {detail}")]
    MalformedRecord { line: usize, detail: String },
    #[error("line {line}: unknown event type `{event_type}`")]
    UnknownEventType { line: usize, event_type: String },
    #[error("line {line}: schema violation in `{field}`: {detail}")]
    SchemaViolation {
        line: usize,
        field: String,
        detail: String,
    },
    #[error("line {line}: seq {seq} does not increase")]
    OrderViolation { line: usize, seq: u64 },
    #[error("first event is not task_received")]
    MissingTaskReceived,
    #[error("trace violates {} invariant(s): {}", .0.len(), summarize_violations(.0))]
    Violations(Vec<Violation>),
}

impl ParseError {
    /// Line number the error points at, when it is line-specific.
    pub fn line(&self) -> Option<usize> {
        match self {
            ParseError::MalformedRecord { line, .. }
            | ParseError::UnknownEventType { line, .. }
            | ParseError::SchemaViolation { line, .. }
            | ParseError::OrderViolation { line, .. } => Some(*line),
            _ => None,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            ParseError::EmptyTrace => "empty_trace",
            ParseError::MalformedRecord { .. } => "malformed_record",
            ParseError::UnknownEventType { .. } => "unknown_event_type",
            ParseError::SchemaViolation { .. } => "schema_violation",
            ParseError::OrderViolation { .. } => "order_violation",
            ParseError::MissingTaskReceived => "missing_task_received",
            ParseError::Violations(_) => "validation_failed",
        }
    }
}

fn summarize_violations(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

/// Parses CTEF JSONL. Blank lines are skipped but still counted for line
/// numbers. The returned trace always passes [`validate`].
pub fn parse_ctef(input: &[u8]) -> Result<RawTrace, ParseError> {
    let mut events: Vec<TraceEvent> = Vec::new();
    let mut lines: Vec<usize> = Vec::new();
    for (idx, raw_line) in input.split(|b| *b == b'\n').enumerate() {
        let line = idx + 1;
        let raw_line = raw_line.strip_suffix(b"\r").unwrap_or(raw_line);
        let text = std::str::from_utf8(raw_line).map_err(|e| ParseError::MalformedRecord {
            line,
            detail: format!("invalid UTF-8: {e}"),
        })?;
        if text.trim().is_empty() {
            continue;
        }
        let event = parse_record(line, text)?;
        if let Some(prev) = events.last() {
            if event.seq <= prev.seq {
                return Err(ParseError::OrderViolation {
                    line,
                    seq: event.seq,
                });
            }
        }
        events.push(event);
        lines.push(line);
    }
    let first = events.first().ok_or(ParseError::EmptyTrace)?;
    if first.event_type() != EventType::TaskReceived {
        return Err(ParseError::MissingTaskReceived);
    }
    let trace = RawTrace::new(events, SourceFormat::Ctef);
    let violations = validate(&trace);
    if violations.is_empty() {
        return Ok(trace);
    }
    let line_of = |seq: u64| {
        trace
            .events
            .binary_search_by_key(&seq, |e| e.seq)
            .ok()
            .map(|i| lines[i])
    };
    Err(ParseError::Violations(
        violations.into_iter().map(|v| v.locate(line_of)).collect(),
    ))
}

fn parse_record(line: usize, text: &str) -> Result<TraceEvent, ParseError> {
    let value: Value = serde_json::from_str(text).map_err(|e| ParseError::MalformedRecord {
        line,
        detail: e.to_string(),
    })?;
    let Value::Object(obj) = value else {
        return Err(ParseError::MalformedRecord {
            line,
            detail: "record is not a JSON object".into(),
        });
    };
    let schema = |field: &str, detail: &str| ParseError::SchemaViolation {
        line,
        field: field.to_string(),
        detail: detail.to_string(),
    };

    let type_str = obj
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| schema("type", "expected a string"))?;
    let event_type: EventType = type_str.parse().map_err(|_| ParseError::UnknownEventType {
        line,
        event_type: type_str.to_string(),
    })?;
    let seq = obj
        .get("seq")
        .and_then(Value::as_u64)
        .ok_or_else(|| schema("seq", "expected a non-negative integer"))?;
    let ts_str = obj
        .get("ts")
        .and_then(Value::as_str)
        .ok_or_else(|| schema("ts", "expected an ISO-8601 string"))?;
    let ts = DateTime::parse_from_rfc3339(ts_str)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| schema("ts", &e.to_string()))?;
    let agent = parse_agent(obj.get("agent")).map_err(|(field, detail)| schema(field, detail))?;
    let payload = match obj.get("payload") {
        Some(Value::Object(p)) => parse_payload(event_type, p)
            .map_err(|(field, detail)| schema(&format!("payload.{field}"), &detail))?,
        _ => return Err(schema("payload", "expected an object")),
    };
    Ok(TraceEvent {
        seq,
        ts,
        agent,
        payload,
    })
}

fn parse_agent(value: Option<&Value>) -> Result<AgentRef, (&'static str, &'static str)> {
    let Some(Value::Object(agent)) = value else {
        return Err(("agent", "expected an object"));
    };
    let name = agent
        .get("name")
        .and_then(Value::as_str)
        .filter(|n| !n.trim().is_empty())
        .ok_or(("agent.name", "expected a non-empty string"))?;
    let role = match agent.get("role").and_then(Value::as_str) {
        Some("orchestrator") => AgentRole::Orchestrator,
        Some("worker") => AgentRole::Worker,
        _ => return Err(("agent.role", "expected `orchestrator` or `worker`")),
    };
    Ok(AgentRef {
        name: name.to_string(),
        role,
    })
}

type FieldError = (String, String);

struct Fields<'a> {
    obj: &'a Map<String, Value>,
}

impl<'a> Fields<'a> {
    fn str(&self, key: &str) -> Result<String, FieldError> {
        self.obj
            .get(key)
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| (key.to_string(), "expected a string".to_string()))
    }

    fn opt_str(&self, key: &str) -> Result<Option<String>, FieldError> {
        match self.obj.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err((key.to_string(), "expected a string".to_string())),
        }
    }

    fn index(&self, key: &str) -> Result<usize, FieldError> {
        self.obj
            .get(key)
            .and_then(Value::as_u64)
            .and_then(|v| usize::try_from(v).ok())
            .ok_or_else(|| {
                (
                    key.to_string(),
                    "expected a non-negative integer".to_string(),
                )
            })
    }

    fn bool(&self, key: &str) -> Result<bool, FieldError> {
        self.obj
            .get(key)
            .and_then(Value::as_bool)
            .ok_or_else(|| (key.to_string(), "expected a boolean".to_string()))
    }

    fn array(&self, key: &str) -> Result<&'a Vec<Value>, FieldError> {
        self.obj
            .get(key)
            .and_then(Value::as_array)
            .ok_or_else(|| (key.to_string(), "expected an array".to_string()))
    }

    fn steps(&self, key: &str) -> Result<Vec<PlanStep>, FieldError> {
        self.array(key)?
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let bad = || {
                    (
                        format!("{key}[{i}]"),
                        "expected {index, description}".to_string(),
                    )
                };
                let step = v.as_object().ok_or_else(bad)?;
                let index = step
                    .get("index")
                    .and_then(Value::as_u64)
                    .and_then(|v| usize::try_from(v).ok())
                    .ok_or_else(bad)?;
                let description = step
                    .get("description")
                    .and_then(Value::as_str)
                    .ok_or_else(bad)?;
                Ok(PlanStep {
                    index,
                    description: description.to_string(),
                })
            })
            .collect()
    }

    fn strings(&self, key: &str) -> Result<Vec<String>, FieldError> {
        self.array(key)?
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| (format!("{key}[{i}]"), "expected a string".to_string()))
            })
            .collect()
    }
}

fn parse_payload(ty: EventType, obj: &Map<String, Value>) -> Result<Payload, FieldError> {
    let f = Fields { obj };
    Ok(match ty {
        EventType::TaskReceived => Payload::TaskReceived {
            query: f.str("query")?,
        },
        EventType::PlanCreated => Payload::PlanCreated {
            actions: f.steps("actions")?,
        },
        EventType::PlanRevised => Payload::PlanRevised {
            reason: f.str("reason")?,
            actions: f.steps("actions")?,
        },
        EventType::ActionStarted => Payload::ActionStarted {
            plan_index: f.index("plan_index")?,
            action_index: f.index("action_index")?,
        },
        EventType::OperationAssigned => Payload::OperationAssigned {
            plan_index: f.index("plan_index")?,
            action_index: f.index("action_index")?,
            op_id: f.str("op_id")?,
            instruction: f.str("instruction")?,
        },
        EventType::OperationResult => Payload::OperationResult {
            op_id: f.str("op_id")?,
            success: f.bool("success")?,
            content: f.str("content")?,
            links: f.strings("links")?,
        },
        EventType::ProgressLedger => Payload::ProgressLedger(LedgerSnapshot {
            op_id: f.opt_str("op_id")?,
            is_request_satisfied: f.bool("is_request_satisfied")?,
            is_progress_being_made: f.bool("is_progress_being_made")?,
            is_in_loop: f.bool("is_in_loop")?,
            next_agent: f.str("next_agent")?,
            instruction: f.str("instruction")?,
            reason: f.str("reason")?,
        }),
        EventType::ActivityCompleted => Payload::ActivityCompleted,
        EventType::FinalAnswer => Payload::FinalAnswer {
            answer: f.str("answer")?,
        },
        EventType::RawMessage => Payload::RawMessage {
            content: f.str("content")?,
        },
    })
}
