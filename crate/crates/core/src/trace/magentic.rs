//! Adapter from Magentic-One style conversation logs to CTEF.
//!
//! Input is JSONL with `source`, `content`, an optional `ledger` object and an
//! optional `timestamp`. Every input record becomes exactly one CTEF event;
//! records that fit no mapping rule become `raw_message`.

use std::sync::LazyLock;

use chrono::{DateTime, Duration, TimeZone, Utc};
use regex::Regex;
use serde_json::Value;
use thiserror::Error;

use super::{AgentRef, LedgerSnapshot, Payload, PlanStep, RawTrace, SourceFormat, TraceEvent};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AdaptError {
    #[error("line {line}: malformed record: {detail}")]
    MalformedRecord { line: usize, detail: String },
    #[error("no speaker can be identified as the orchestrator")]
    MissingOrchestrator,
    #[error("empty trace")]
    EmptyTrace,
}

impl AdaptError {
    pub fn line(&self) -> Option<usize> {
        match self {
            AdaptError::MalformedRecord { line, .. } => Some(*line),
            _ => None,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            AdaptError::MalformedRecord { .. } => "malformed_record",
            AdaptError::MissingOrchestrator => "missing_orchestrator",
            AdaptError::EmptyTrace => "empty_trace",
        }
    }
}

struct Record {
    source: String,
    content: String,
    ledger: Option<Ledger>,
    timestamp: Option<DateTime<Utc>>,
}

struct Ledger {
    is_request_satisfied: bool,
    is_progress_being_made: bool,
    is_in_loop: bool,
    next_speaker: String,
    instruction: String,
    reason: String,
}

static NUMBERED_STEP: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*\d+[.)]\s+(\S.*)$").unwrap());
static BULLET_STEP: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*[-*•]\s+(\S.*)$").unwrap());
static STEP_ANNOUNCE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)^\s*(?:(?:starting|proceeding to|moving on to|moving to|now on|beginning)\s+)?(?:step|action)\s+(\d+)\b",
    )
    .unwrap()
});
static FINAL_ANSWER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?is)^\s*final answer\s*:\s*(.*)$").unwrap());
static COMPLETED: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^\s*(?:task|activity|request)\s+(?:is\s+)?(?:complete|completed|finished|satisfied)\b")
        .unwrap()
});
static FAILURE_HINT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)\b(?:error|failed|failure|unable to|could not|cannot|can't|exception|traceback|access denied|not found|403|404|timed out)\b",
    )
    .unwrap()
});
static URL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#"https?://[^\s<>"'()\[\]]+"#).unwrap());

/// Fallback time base for records without a timestamp.
fn time_base() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()
}

pub fn extract_links(text: &str) -> Vec<String> {
    let mut links: Vec<String> = Vec::new();
    for m in URL.find_iter(text) {
        let url = m.as_str().trim_end_matches(['.', ',', ';', ':', '!', '?']);
        if !links.iter().any(|l| l == url) {
            links.push(url.to_string());
        }
    }
    links
}

fn parse_records(input: &[u8]) -> Result<Vec<(usize, Record)>, AdaptError> {
    let mut out = Vec::new();
    for (idx, raw) in input.split(|b| *b == b'\n').enumerate() {
        let line = idx + 1;
        let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
        let malformed = |detail: String| AdaptError::MalformedRecord { line, detail };
        let text =
            std::str::from_utf8(raw).map_err(|e| malformed(format!("invalid UTF-8: {e}")))?;
        if text.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(text).map_err(|e| malformed(e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| malformed("record is not a JSON object".into()))?;
        let source = obj
            .get("source")
            .and_then(Value::as_str)
            .filter(|s| !s.trim().is_empty())
            .ok_or_else(|| malformed("`source` must be a non-empty string".into()))?;
        let content = obj
            .get("content")
            .and_then(Value::as_str)
            .ok_or_else(|| malformed("`content` must be a string".into()))?;
        let ledger = match obj.get("ledger") {
            None | Some(Value::Null) => None,
            Some(Value::Object(l)) => Some(parse_ledger(l).map_err(malformed)?),
            Some(_) => return Err(malformed("`ledger` must be an object".into())),
        };
        let timestamp = match obj.get("timestamp") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(
                DateTime::parse_from_rfc3339(s)
                    .map_err(|e| malformed(format!("bad timestamp: {e}")))?
                    .with_timezone(&Utc),
            ),
            Some(_) => return Err(malformed("`timestamp` must be a string".into())),
        };
        out.push((
            line,
            Record {
                source: source.to_string(),
                content: content.to_string(),
                ledger,
                timestamp,
            },
        ));
    }
    Ok(out)
}

/// Ledger fields are accepted either flat (`"is_in_loop": false`) or in the
/// Magentic-One `{"answer": ..., "reason": ...}` shape.
fn parse_ledger(l: &serde_json::Map<String, Value>) -> Result<Ledger, String> {
    fn answer(v: Option<&Value>) -> Option<&Value> {
        match v {
            Some(Value::Object(o)) => o.get("answer"),
            other => other,
        }
    }
    let flag = |key: &str| {
        answer(l.get(key))
            .and_then(Value::as_bool)
            .ok_or_else(|| format!("ledger `{key}` must be a boolean"))
    };
    let text = |key: &str| -> Result<String, String> {
        match answer(l.get(key)) {
            None | Some(Value::Null) => Ok(String::new()),
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(format!("ledger `{key}` must be a string")),
        }
    };
    Ok(Ledger {
        is_request_satisfied: flag("is_request_satisfied")?,
        is_progress_being_made: flag("is_progress_being_made")?,
        is_in_loop: flag("is_in_loop")?,
        next_speaker: text("next_speaker")?,
        instruction: text("instruction_or_question")?,
        reason: text("reason")?,
    })
}

/// Splits an orchestrator message into (preamble, steps) when it contains an
/// enumerated list of at least two items.
fn plan_steps(content: &str) -> Option<(String, Vec<PlanStep>)> {
    for re in [&*NUMBERED_STEP, &*BULLET_STEP] {
        let mut steps = Vec::new();
        let mut preamble = Vec::new();
        for line in content.lines() {
            match re.captures(line) {
                Some(c) => steps.push(c[1].trim().to_string()),
                None if steps.is_empty() && !line.trim().is_empty() => preamble.push(line.trim()),
                None => {}
            }
        }
        if steps.len() >= 2 {
            let steps = steps
                .into_iter()
                .enumerate()
                .map(|(index, description)| PlanStep { index, description })
                .collect();
            return Some((preamble.join(" "), steps));
        }
    }
    None
}

fn identify_orchestrator(records: &[(usize, Record)]) -> Option<String> {
    records
        .iter()
        .find(|(_, r)| r.ledger.is_some())
        .or_else(|| {
            records
                .iter()
                .find(|(_, r)| r.source.to_lowercase().contains("orchestrator"))
        })
        .map(|(_, r)| r.source.clone())
}

struct State {
    orchestrator: String,
    plan_sizes: Vec<usize>,
    current_action: Option<usize>,
    next_op: usize,
    /// Assigned operations without a result: (op_id, worker).
    pending: Vec<(String, String)>,
    /// Target named by the most recent ledger, not yet used by an assignment.
    ledger_target: Option<String>,
    /// Latest operation with a result but no ledger yet.
    awaiting_ledger: Option<String>,
    satisfied: bool,
}

/// Converts a Magentic-One style log to CTEF. Attribution of operations to
/// actions follows the most recently started action of the current plan.
pub fn adapt_magentic(input: &[u8]) -> Result<RawTrace, AdaptError> {
    let records = parse_records(input)?;
    if records.is_empty() {
        return Err(AdaptError::EmptyTrace);
    }
    let orchestrator = identify_orchestrator(&records).ok_or(AdaptError::MissingOrchestrator)?;
    let mut state = State {
        orchestrator,
        plan_sizes: Vec::new(),
        current_action: None,
        next_op: 1,
        pending: Vec::new(),
        ledger_target: None,
        awaiting_ledger: None,
        satisfied: false,
    };

    let mut events = Vec::with_capacity(records.len());
    let mut prev_ts: Option<DateTime<Utc>> = None;
    for (i, (_, record)) in records.iter().enumerate() {
        let ts = record.timestamp.unwrap_or_else(|| match prev_ts {
            Some(t) => t + Duration::seconds(1),
            None => time_base(),
        });
        prev_ts = Some(ts);
        let next_source = records.get(i + 1).map(|(_, r)| r.source.as_str());
        let (agent, payload) = if i == 0 {
            (
                AgentRef::orchestrator(state.orchestrator.clone()),
                Payload::TaskReceived {
                    query: record.content.trim().to_string(),
                },
            )
        } else if record.source == state.orchestrator {
            state.orchestrator_event(record, next_source)
        } else {
            (
                AgentRef::worker(record.source.clone()),
                state.worker_event(record),
            )
        };
        events.push(TraceEvent {
            seq: i as u64,
            ts,
            agent,
            payload,
        });
    }
    Ok(RawTrace::new(events, SourceFormat::Magentic))
}

impl State {
    /// Assignments are attributed to the assignee; everything else the
    /// orchestrator says stays the orchestrator's.
    fn orchestrator_event(
        &mut self,
        record: &Record,
        next_source: Option<&str>,
    ) -> (AgentRef, Payload) {
        let payload = self.orchestrator_payload(record, next_source);
        let agent = match (&payload, self.pending.last()) {
            (Payload::OperationAssigned { .. }, Some((_, worker))) => {
                AgentRef::worker(worker.clone())
            }
            _ => AgentRef::orchestrator(self.orchestrator.clone()),
        };
        (agent, payload)
    }

    fn orchestrator_payload(&mut self, record: &Record, next_source: Option<&str>) -> Payload {
        if let Some(l) = &record.ledger {
            if l.is_request_satisfied {
                self.satisfied = true;
            }
            self.ledger_target = Some(l.next_speaker.clone())
                .filter(|s| !s.trim().is_empty() && *s != self.orchestrator);
            return Payload::ProgressLedger(LedgerSnapshot {
                op_id: self.awaiting_ledger.take(),
                is_request_satisfied: l.is_request_satisfied,
                is_progress_being_made: l.is_progress_being_made,
                is_in_loop: l.is_in_loop,
                next_agent: l.next_speaker.clone(),
                instruction: l.instruction.clone(),
                reason: l.reason.clone(),
            });
        }
        let content = &record.content;
        if let Some((preamble, actions)) = plan_steps(content) {
            self.current_action = None;
            self.ledger_target = None;
            let first = self.plan_sizes.is_empty();
            self.plan_sizes.push(actions.len());
            return if first {
                Payload::PlanCreated { actions }
            } else {
                let reason = if preamble.trim().is_empty() {
                    "Plan revised.".to_string()
                } else {
                    preamble
                };
                Payload::PlanRevised { reason, actions }
            };
        }
        if let Some(c) = FINAL_ANSWER.captures(content) {
            return Payload::FinalAnswer {
                answer: c[1].trim().to_string(),
            };
        }
        if COMPLETED.is_match(content) {
            return Payload::ActivityCompleted;
        }
        if let (Some(c), Some(&size)) = (STEP_ANNOUNCE.captures(content), self.plan_sizes.last()) {
            if let Ok(n) = c[1].parse::<usize>() {
                if (1..=size).contains(&n) {
                    self.current_action = Some(n - 1);
                    return Payload::ActionStarted {
                        plan_index: self.plan_sizes.len() - 1,
                        action_index: n - 1,
                    };
                }
            }
        }
        if !self.plan_sizes.is_empty() && !self.satisfied {
            let target = self.ledger_target.take().or_else(|| {
                next_source
                    .filter(|s| *s != self.orchestrator)
                    .map(str::to_string)
            });
            if let Some(worker) = target {
                let op_id = format!("op-{}", self.next_op);
                self.next_op += 1;
                self.pending.push((op_id.clone(), worker));
                return Payload::OperationAssigned {
                    plan_index: self.plan_sizes.len() - 1,
                    action_index: self.current_action.unwrap_or(0),
                    op_id,
                    instruction: content.clone(),
                };
            }
        }
        Payload::RawMessage {
            content: content.clone(),
        }
    }

    fn worker_event(&mut self, record: &Record) -> Payload {
        match self
            .pending
            .iter()
            .rposition(|(_, worker)| *worker == record.source)
        {
            Some(pos) => {
                let (op_id, _) = self.pending.remove(pos);
                self.awaiting_ledger = Some(op_id.clone());
                Payload::OperationResult {
                    op_id,
                    success: !FAILURE_HINT.is_match(&record.content),
                    content: record.content.clone(),
                    links: extract_links(&record.content),
                }
            }
            None => Payload::RawMessage {
                content: record.content.clone(),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{validate, EventType};
    use serde_json::json;

    fn jsonl(records: &[Value]) -> String {
        records
            .iter()
            .map(|r| r.to_string())
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn ledger(next: &str) -> Value {
        json!({
            "is_request_satisfied": false,
            "is_progress_being_made": true,
            "is_in_loop": false,
            "next_speaker": next,
            "instruction_or_question": "go",
            "reason": "r",
        })
    }

    #[test]
    fn enumerated_list_becomes_plan() {
        let input = jsonl(&[
            json!({"source": "user", "content": "find it"}),
            json!({"source": "Orchestrator", "content": "Here is the plan:\n1. Search the web.\n2. Read the page.\n3. Answer."}),
        ]);
        let trace = adapt_magentic(input.as_bytes()).unwrap();
        match &trace.events[1].payload {
            Payload::PlanCreated { actions } => {
                let d: Vec<_> = actions.iter().map(|a| a.description.as_str()).collect();
                assert_eq!(d, ["Search the web.", "Read the page.", "Answer."]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn worker_reply_attributed_to_current_action() {
        let input = jsonl(&[
            json!({"source": "user", "content": "q"}),
            json!({"source": "Orchestrator", "content": "1. a\n2. b"}),
            json!({"source": "Orchestrator", "content": "Step 2: do b"}),
            json!({"source": "Orchestrator", "content": "Open the page", "ledger": ledger("WebSurfer")}),
            json!({"source": "Orchestrator", "content": "Please open https://example.org"}),
            json!({"source": "WebSurfer", "content": "Opened https://example.org."}),
        ]);
        let trace = adapt_magentic(input.as_bytes()).unwrap();
        assert!(validate(&trace).is_empty());
        assert_eq!(
            trace.events[4].payload,
            Payload::OperationAssigned {
                plan_index: 0,
                action_index: 1,
                op_id: "op-1".into(),
                instruction: "Please open https://example.org".into(),
            }
        );
        assert_eq!(trace.events[4].agent, AgentRef::worker("WebSurfer"));
        assert_eq!(
            trace.events[5].payload,
            Payload::OperationResult {
                op_id: "op-1".into(),
                success: true,
                content: "Opened https://example.org.".into(),
                links: vec!["https://example.org".into()],
            }
        );
    }

    #[test]
    fn unclassifiable_records_are_kept() {
        let input = jsonl(&[
            json!({"source": "user", "content": "q"}),
            json!({"source": "Orchestrator", "content": "thinking..."}),
            json!({"source": "Coder", "content": "unsolicited"}),
        ]);
        let trace = adapt_magentic(input.as_bytes()).unwrap();
        assert_eq!(trace.events.len(), 3);
        assert_eq!(trace.events[1].event_type(), EventType::RawMessage);
        assert_eq!(trace.events[2].event_type(), EventType::RawMessage);
        // synthesized timestamps are 1 s apart
        assert_eq!((trace.events[2].ts - trace.events[0].ts).num_seconds(), 2);
    }

    #[test]
    fn missing_orchestrator() {
        let input = jsonl(&[
            json!({"source": "user", "content": "q"}),
            json!({"source": "WebSurfer", "content": "x"}),
        ]);
        assert_eq!(
            adapt_magentic(input.as_bytes()),
            Err(AdaptError::MissingOrchestrator)
        );
    }

    #[test]
    fn malformed_line() {
        let input = "{\"source\":\"user\",\"content\":\"q\"}\n[1,2]\n";
        assert!(matches!(
            adapt_magentic(input.as_bytes()),
            Err(AdaptError::MalformedRecord { line: 2, .. })
        ));
    }

    #[test]
    fn nested_ledger_answers() {
        let input = jsonl(&[
            json!({"source": "user", "content": "q"}),
            json!({"source": "MagenticOneOrchestrator", "content": "", "ledger": {
                "is_request_satisfied": {"answer": false, "reason": "no"},
                "is_progress_being_made": {"answer": true, "reason": "yes"},
                "is_in_loop": {"answer": false, "reason": "no"},
                "next_speaker": {"answer": "WebSurfer", "reason": "web"},
                "instruction_or_question": {"answer": "search", "reason": ""},
            }}),
        ]);
        let trace = adapt_magentic(input.as_bytes()).unwrap();
        match &trace.events[1].payload {
            Payload::ProgressLedger(l) => {
                assert_eq!(l.next_agent, "WebSurfer");
                assert_eq!(l.instruction, "search");
                assert!(l.is_progress_being_made);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn links_are_deduplicated_and_trimmed() {
        assert_eq!(
            extract_links("see https://a.org/x, and (https://b.org). Again https://a.org/x."),
            vec!["https://a.org/x".to_string(), "https://b.org".to_string()]
        );
    }
}
