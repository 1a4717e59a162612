use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{AgentRole, EventType, Payload, PlanStep, RawTrace};

/// Trace invariant names. Serialized in snake_case; these strings appear in
/// API error bodies and CLI diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    EmptyTrace,
    SeqOrder,
    FirstTaskReceived,
    SingleTaskReceived,
    SingleOrchestrator,
    UniqueAgentNames,
    SinglePlanCreated,
    PlanBeforeAction,
    PlanBeforeRevision,
    MissingRevisionReason,
    EmptyPlan,
    NoncontiguousActionIndices,
    DanglingPlanRef,
    DanglingActionRef,
    DuplicateOpId,
    UnknownOpResult,
    DuplicateOpResult,
    UnknownLedgerOp,
    AssignmentAfterSatisfied,
}

impl Rule {
    pub fn as_str(self) -> &'static str {
        match self {
            Rule::EmptyTrace => "empty_trace",
            Rule::SeqOrder => "seq_order",
            Rule::FirstTaskReceived => "first_task_received",
            Rule::SingleTaskReceived => "single_task_received",
            Rule::SingleOrchestrator => "single_orchestrator",
            Rule::UniqueAgentNames => "unique_agent_names",
            Rule::SinglePlanCreated => "single_plan_created",
            Rule::PlanBeforeAction => "plan_before_action",
            Rule::PlanBeforeRevision => "plan_before_revision",
            Rule::MissingRevisionReason => "missing_revision_reason",
            Rule::EmptyPlan => "empty_plan",
            Rule::NoncontiguousActionIndices => "noncontiguous_action_indices",
            Rule::DanglingPlanRef => "dangling_plan_ref",
            Rule::DanglingActionRef => "dangling_action_ref",
            Rule::DuplicateOpId => "duplicate_op_id",
            Rule::UnknownOpResult => "unknown_op_result",
            Rule::DuplicateOpResult => "duplicate_op_result",
            Rule::UnknownLedgerOp => "unknown_ledger_op",
            Rule::AssignmentAfterSatisfied => "assignment_after_satisfied",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// Seq of the offending event; `None` for whole-trace rules.
    pub seq: Option<u64>,
    /// Input line of the offending record, when the parser knows it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    pub rule: Rule,
    pub detail: String,
}

impl Violation {
    /// Fills `line` from a seq → line lookup.
    pub fn locate(mut self, line_of: impl Fn(u64) -> Option<usize>) -> Self {
        self.line = self.seq.and_then(line_of);
        self
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.seq) {
            (Some(line), _) => write!(f, "line {line}: {} ({})", self.rule, self.detail),
            (None, Some(seq)) => write!(f, "seq {seq}: {} ({})", self.rule, self.detail),
            (None, None) => write!(f, "{} ({})", self.rule, self.detail),
        }
    }
}

fn steps_ok(steps: &[PlanStep]) -> Option<Rule> {
    if steps.is_empty() {
        return Some(Rule::EmptyPlan);
    }
    if steps.iter().enumerate().any(|(i, s)| s.index != i) {
        return Some(Rule::NoncontiguousActionIndices);
    }
    None
}

/// Checks every trace invariant and returns the violations in trace order
/// (whole-trace violations first). Never mutates the trace.
pub fn validate(trace: &RawTrace) -> Vec<Violation> {
    let mut out = Vec::new();
    let events = &trace.events;
    let mut push = |seq: Option<u64>, rule: Rule, detail: String| {
        out.push(Violation {
            seq,
            line: None,
            rule,
            detail,
        })
    };

    if events.is_empty() {
        push(None, Rule::EmptyTrace, "trace has no events".into());
        return out;
    }

    if !events
        .iter()
        .any(|e| e.agent.role == AgentRole::Orchestrator)
    {
        push(
            None,
            Rule::SingleOrchestrator,
            "no orchestrator agent".into(),
        );
    }

    let mut roles: BTreeMap<&str, AgentRole> = BTreeMap::new();
    let mut orchestrator_seen: Option<&str> = None;
    let mut task_seen = false;
    let mut plan_created_seen = false;
    // Number of actions in each declared plan, by plan index.
    let mut plans: Vec<usize> = Vec::new();
    let mut assigned: HashSet<&str> = HashSet::new();
    let mut resulted: HashSet<&str> = HashSet::new();
    let mut satisfied_at: Option<u64> = None;
    let mut extra_orchestrators: HashSet<&str> = HashSet::new();

    for (i, e) in events.iter().enumerate() {
        let seq = Some(e.seq);
        if i > 0 && e.seq <= events[i - 1].seq {
            push(
                seq,
                Rule::SeqOrder,
                format!("seq {} follows {}", e.seq, events[i - 1].seq),
            );
        }

        match roles.get(e.agent.name.as_str()) {
            Some(r) if *r != e.agent.role => push(
                seq,
                Rule::UniqueAgentNames,
                format!("agent `{}` appears with two roles", e.agent.name),
            ),
            Some(_) => {}
            None => {
                roles.insert(&e.agent.name, e.agent.role);
            }
        }
        if e.agent.role == AgentRole::Orchestrator {
            match orchestrator_seen {
                None => orchestrator_seen = Some(&e.agent.name),
                Some(first) if first != e.agent.name => {
                    if extra_orchestrators.insert(&e.agent.name) {
                        push(
                            seq,
                            Rule::SingleOrchestrator,
                            format!(
                                "second orchestrator `{}` (first was `{first}`)",
                                e.agent.name
                            ),
                        );
                    }
                }
                Some(_) => {}
            }
        }

        match &e.payload {
            Payload::TaskReceived { .. } => {
                if task_seen {
                    push(
                        seq,
                        Rule::SingleTaskReceived,
                        "repeated task_received".into(),
                    );
                }
                task_seen = true;
            }
            Payload::PlanCreated { actions } => {
                if plan_created_seen {
                    push(
                        seq,
                        Rule::SinglePlanCreated,
                        "plan_created after the initial plan; use plan_revised".into(),
                    );
                }
                plan_created_seen = true;
                if let Some(rule) = steps_ok(actions) {
                    push(
                        seq,
                        rule,
                        "plan actions must be non-empty and indexed 0..n".into(),
                    );
                }
                plans.push(actions.len());
            }
            Payload::PlanRevised { reason, actions } => {
                if plans.is_empty() {
                    push(
                        seq,
                        Rule::PlanBeforeRevision,
                        "plan_revised before any plan_created".into(),
                    );
                }
                if reason.trim().is_empty() {
                    push(
                        seq,
                        Rule::MissingRevisionReason,
                        "plan_revised carries no reason".into(),
                    );
                }
                if let Some(rule) = steps_ok(actions) {
                    push(
                        seq,
                        rule,
                        "plan actions must be non-empty and indexed 0..n".into(),
                    );
                }
                plans.push(actions.len());
            }
            Payload::ActionStarted {
                plan_index,
                action_index,
            } => {
                check_refs(&plans, seq, *plan_index, *action_index, &mut push);
            }
            Payload::OperationAssigned {
                plan_index,
                action_index,
                op_id,
                ..
            } => {
                check_refs(&plans, seq, *plan_index, *action_index, &mut push);
                if !assigned.insert(op_id) {
                    push(seq, Rule::DuplicateOpId, format!("op_id `{op_id}` reused"));
                }
                if let Some(at) = satisfied_at {
                    push(
                        seq,
                        Rule::AssignmentAfterSatisfied,
                        format!("request was reported satisfied at seq {at}"),
                    );
                }
            }
            Payload::OperationResult { op_id, .. } => {
                if !assigned.contains(op_id.as_str()) {
                    push(
                        seq,
                        Rule::UnknownOpResult,
                        format!("result for unassigned op `{op_id}`"),
                    );
                } else if !resulted.insert(op_id) {
                    push(
                        seq,
                        Rule::DuplicateOpResult,
                        format!("second result for op `{op_id}`"),
                    );
                }
            }
            Payload::ProgressLedger(ledger) => {
                if let Some(op_id) = &ledger.op_id {
                    if !assigned.contains(op_id.as_str()) {
                        push(
                            seq,
                            Rule::UnknownLedgerOp,
                            format!("ledger refers to unassigned op `{op_id}`"),
                        );
                    }
                }
                if ledger.is_request_satisfied && satisfied_at.is_none() {
                    satisfied_at = Some(e.seq);
                }
            }
            Payload::ActivityCompleted
            | Payload::FinalAnswer { .. }
            | Payload::RawMessage { .. } => {}
        }
    }

    if events[0].event_type() != EventType::TaskReceived {
        out.insert(
            0,
            Violation {
                seq: Some(events[0].seq),
                line: None,
                rule: Rule::FirstTaskReceived,
                detail: "trace does not start with task_received".into(),
            },
        );
    }
    out
}

fn check_refs(
    plans: &[usize],
    seq: Option<u64>,
    plan_index: usize,
    action_index: usize,
    push: &mut impl FnMut(Option<u64>, Rule, String),
) {
    if plans.is_empty() {
        push(
            seq,
            Rule::PlanBeforeAction,
            "action referenced before any plan_created".into(),
        );
        return;
    }
    match plans.get(plan_index) {
        None => push(
            seq,
            Rule::DanglingPlanRef,
            format!("plan {plan_index} not declared ({} so far)", plans.len()),
        ),
        Some(&n) if action_index >= n => push(
            seq,
            Rule::DanglingActionRef,
            format!("action {action_index} not in plan {plan_index} ({n} actions)"),
        ),
        Some(_) => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{AgentRef, SourceFormat, TraceEvent};
    use chrono::{TimeZone, Utc};

    fn ev(seq: u64, agent: AgentRef, payload: Payload) -> TraceEvent {
        TraceEvent {
            seq,
            ts: Utc.timestamp_opt(1_700_000_000 + seq as i64, 0).unwrap(),
            agent,
            payload,
        }
    }

    fn orch() -> AgentRef {
        AgentRef::orchestrator("Orchestrator")
    }

    fn plan(n: usize) -> Payload {
        Payload::PlanCreated {
            actions: (0..n)
                .map(|i| PlanStep {
                    index: i,
                    description: format!("step {i}"),
                })
                .collect(),
        }
    }

    fn well_formed() -> Vec<TraceEvent> {
        vec![
            ev(0, orch(), Payload::TaskReceived { query: "q".into() }),
            ev(1, orch(), plan(4)),
            ev(
                2,
                orch(),
                Payload::ActionStarted {
                    plan_index: 0,
                    action_index: 0,
                },
            ),
            ev(
                3,
                AgentRef::worker("WebSurfer"),
                Payload::OperationAssigned {
                    plan_index: 0,
                    action_index: 0,
                    op_id: "op-1".into(),
                    instruction: "search".into(),
                },
            ),
            ev(
                4,
                AgentRef::worker("WebSurfer"),
                Payload::OperationResult {
                    op_id: "op-1".into(),
                    success: true,
                    content: "ok".into(),
                    links: vec![],
                },
            ),
        ]
    }

    #[test]
    fn well_formed_trace_has_no_violations() {
        let t = RawTrace::new(well_formed(), SourceFormat::Ctef);
        assert_eq!(validate(&t), vec![]);
    }

    #[test]
    fn two_orchestrators() {
        let mut events = well_formed();
        events.push(ev(
            5,
            AgentRef::orchestrator("Boss"),
            Payload::RawMessage {
                content: "hi".into(),
            },
        ));
        let v = validate(&RawTrace::new(events, SourceFormat::Ctef));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, Rule::SingleOrchestrator);
        assert_eq!(v[0].seq, Some(5));
    }

    #[test]
    fn dangling_action_ref() {
        let mut events = well_formed();
        events.push(ev(
            5,
            AgentRef::worker("Coder"),
            Payload::OperationAssigned {
                plan_index: 0,
                action_index: 9,
                op_id: "op-2".into(),
                instruction: "write".into(),
            },
        ));
        let v = validate(&RawTrace::new(events, SourceFormat::Ctef));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, Rule::DanglingActionRef);
    }

    #[test]
    fn referential_and_ordering_rules() {
        let mut events = well_formed();
        events.insert(
            1,
            ev(
                1,
                orch(),
                Payload::ActionStarted {
                    plan_index: 0,
                    action_index: 0,
                },
            ),
        );
        events[2].seq = 1;
        let rules: Vec<Rule> = validate(&RawTrace::new(events, SourceFormat::Ctef))
            .into_iter()
            .map(|v| v.rule)
            .collect();
        assert!(rules.contains(&Rule::PlanBeforeAction));
        assert!(rules.contains(&Rule::SeqOrder));
    }

    #[test]
    fn results_and_ledgers_need_assignments() {
        let mut events = well_formed();
        events.push(ev(
            5,
            AgentRef::worker("WebSurfer"),
            Payload::OperationResult {
                op_id: "op-1".into(),
                success: true,
                content: "again".into(),
                links: vec![],
            },
        ));
        events.push(ev(
            6,
            AgentRef::worker("WebSurfer"),
            Payload::OperationResult {
                op_id: "ghost".into(),
                success: true,
                content: "".into(),
                links: vec![],
            },
        ));
        let rules: Vec<Rule> = validate(&RawTrace::new(events, SourceFormat::Ctef))
            .into_iter()
            .map(|v| v.rule)
            .collect();
        assert_eq!(rules, vec![Rule::DuplicateOpResult, Rule::UnknownOpResult]);
    }

    #[test]
    fn no_assignment_after_satisfied() {
        let mut events = well_formed();
        events.push(ev(
            5,
            orch(),
            Payload::ProgressLedger(crate::trace::LedgerSnapshot {
                op_id: Some("op-1".into()),
                is_request_satisfied: true,
                is_progress_being_made: true,
                is_in_loop: false,
                next_agent: "Orchestrator".into(),
                instruction: "".into(),
                reason: "done".into(),
            }),
        ));
        events.push(ev(
            6,
            AgentRef::worker("WebSurfer"),
            Payload::OperationAssigned {
                plan_index: 0,
                action_index: 1,
                op_id: "op-2".into(),
                instruction: "more".into(),
            },
        ));
        let v = validate(&RawTrace::new(events, SourceFormat::Ctef));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, Rule::AssignmentAfterSatisfied);
    }

    #[test]
    fn revision_needs_reason_and_plan() {
        let mut events = well_formed();
        events.push(ev(
            5,
            orch(),
            Payload::PlanRevised {
                reason: "  ".into(),
                actions: vec![],
            },
        ));
        let rules: Vec<Rule> = validate(&RawTrace::new(events, SourceFormat::Ctef))
            .into_iter()
            .map(|v| v.rule)
            .collect();
        assert_eq!(rules, vec![Rule::MissingRevisionReason, Rule::EmptyPlan]);
    }

    #[test]
    fn empty_trace() {
        let v = validate(&RawTrace::new(vec![], SourceFormat::Ctef));
        assert_eq!(v[0].rule, Rule::EmptyTrace);
    }
}
