//! Reconstruction of the activity → action → operation layers from a trace.
//!
//! [`build_case`] is the entry point. It composes plan derivation, operation
//! attribution, status derivation, progress segmentation and update linking,
//! routing every human-readable string through a [`Summarizer`].

mod attribute;
mod links;
mod plans;
mod segments;
mod signals;
mod status;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::summarize::{
    Deterministic, OpTypeTable, Provenance, SummarizeError, Summarizer, SummaryRequest, SummaryRole,
};
use crate::trace::{validate, AgentRef, Payload, RawTrace, Violation};

pub use attribute::attribute_operations;
pub use links::{jaccard, link_plan_updates, normalize_description, UPDATE_LINK_THRESHOLD};
pub use plans::{derive_plans, split_reason};
pub use segments::{progress_runs, segment_progress};
pub use signals::{detect_signals, normalize_reason, Capabilities, DEFAULT_STALL_THRESHOLD};
pub use status::derive_action_status;

pub const ACTION_SUMMARY_BUDGET: usize = 80;
pub const PLAN_SUMMARY_BUDGET: usize = 160;
pub const INSTRUCTION_SUMMARY_BUDGET: usize = 80;
pub const RESULT_SUMMARY_BUDGET: usize = 120;
pub const SEGMENT_SUMMARY_BUDGET: usize = 160;
pub const TRANSITION_SUMMARY_BUDGET: usize = 160;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverallStatus {
    Completed,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionStatus {
    Completed,
    Failed,
    NotStarted,
}

impl ActionStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ActionStatus::Completed => "completed",
            ActionStatus::Failed => "failed",
            ActionStatus::NotStarted => "not_started",
        }
    }
}

impl std::str::FromStr for ActionStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "completed" => Ok(ActionStatus::Completed),
            "failed" => Ok(ActionStatus::Failed),
            "not_started" => Ok(ActionStatus::NotStarted),
            other => Err(format!("unknown action status `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanOrigin {
    Initial,
    Revision,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActionRef {
    pub to_plan: usize,
    pub to_action: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EventSpan {
    pub first_seq: u64,
    pub last_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSpan {
    pub first_seq: u64,
    pub last_seq: u64,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Operation {
    pub op_id: String,
    pub agent: AgentRef,
    pub op_type: String,
    pub instruction: String,
    pub instruction_summary: String,
    pub result_summary: String,
    pub success: bool,
    pub progress: bool,
    pub links: Vec<String>,
    pub event_span: EventSpan,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgressSegment {
    pub start_op: usize,
    /// Inclusive.
    pub end_op: usize,
    pub progress: bool,
    pub summary: String,
}

impl ProgressSegment {
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.end_op + 1 - self.start_op
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub index: usize,
    pub description: String,
    pub summary: String,
    pub status: ActionStatus,
    pub agents: Vec<AgentRef>,
    pub span: Option<ActionSpan>,
    pub operations: Vec<Operation>,
    pub segments: Vec<ProgressSegment>,
    /// Set when the next plan revises this action.
    pub update_link: Option<ActionRef>,
    /// Set when the next plan repeats this action verbatim.
    pub carried_to: Option<ActionRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub index: usize,
    pub origin: PlanOrigin,
    pub created_seq: u64,
    pub summary: String,
    pub actions: Vec<Action>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanTransition {
    pub from_plan: usize,
    pub to_plan: usize,
    pub failure_reason: String,
    pub update_rationale: String,
    pub summary: String,
    pub at_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseAnalysis {
    pub case_id: String,
    pub query: String,
    pub final_answer: Option<String>,
    pub plans: Vec<Plan>,
    pub transitions: Vec<PlanTransition>,
    pub overall_status: OverallStatus,
    pub agents: Vec<AgentRef>,
    /// Deterministic, remote, or fallback when any remote summary failed.
    pub summary_provenance: Provenance,
}

impl CaseAnalysis {
    pub fn action(&self, plan: usize, action: usize) -> Option<&Action> {
        self.plans.get(plan)?.actions.get(action)
    }

    /// Finds an operation and its (plan, action) indices.
    pub fn find_operation(&self, op_id: &str) -> Option<(usize, usize, &Operation)> {
        self.plans.iter().find_map(|p| {
            p.actions.iter().find_map(|a| {
                a.operations
                    .iter()
                    .find(|o| o.op_id == op_id)
                    .map(|o| (p.index, a.index, o))
            })
        })
    }

    pub fn operations(&self) -> impl Iterator<Item = (usize, usize, &Operation)> {
        self.plans.iter().flat_map(|p| {
            p.actions
                .iter()
                .flat_map(move |a| a.operations.iter().map(move |o| (p.index, a.index, o)))
        })
    }

    pub fn action_count(&self) -> usize {
        self.plans.iter().map(|p| p.actions.len()).sum()
    }

    /// Structural invariants that must hold for any analysis, including one
    /// loaded from disk. Returns a description of the first breach.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.plans.is_empty() {
            return Err("analysis has no plans".into());
        }
        if self.transitions.len() + 1 != self.plans.len() {
            return Err(format!(
                "{} transitions for {} plans",
                self.transitions.len(),
                self.plans.len()
            ));
        }
        for (i, t) in self.transitions.iter().enumerate() {
            if t.from_plan != i || t.to_plan != i + 1 {
                return Err(format!(
                    "transition {i} links {}→{}",
                    t.from_plan, t.to_plan
                ));
            }
        }
        let mut op_ids = BTreeSet::new();
        for (pi, plan) in self.plans.iter().enumerate() {
            if plan.index != pi {
                return Err(format!("plan at position {pi} has index {}", plan.index));
            }
            if plan.actions.is_empty() {
                return Err(format!("plan {pi} has no actions"));
            }
            for (ai, action) in plan.actions.iter().enumerate() {
                let here = format!("plan {pi} action {ai}");
                if action.index != ai {
                    return Err(format!("{here}: index {}", action.index));
                }
                if (action.status == ActionStatus::NotStarted) != action.operations.is_empty() {
                    return Err(format!(
                        "{here}: status {:?} disagrees with operations",
                        action.status
                    ));
                }
                for link in [action.update_link, action.carried_to]
                    .into_iter()
                    .flatten()
                {
                    if link.to_plan <= pi || self.action(link.to_plan, link.to_action).is_none() {
                        return Err(format!("{here}: bad link {link:?}"));
                    }
                }
                let mut next = 0usize;
                let mut prev: Option<bool> = None;
                for s in &action.segments {
                    if s.start_op != next
                        || s.end_op < s.start_op
                        || s.end_op >= action.operations.len()
                    {
                        return Err(format!("{here}: segments do not tile operations"));
                    }
                    if prev == Some(s.progress) {
                        return Err(format!("{here}: adjacent segments share a flag"));
                    }
                    for op in &action.operations[s.start_op..=s.end_op] {
                        if op.progress != s.progress {
                            return Err(format!(
                                "{here}: segment flag disagrees with op {}",
                                op.op_id
                            ));
                        }
                    }
                    prev = Some(s.progress);
                    next = s.end_op + 1;
                }
                if next != action.operations.len() {
                    return Err(format!("{here}: segments do not tile operations"));
                }
                for op in &action.operations {
                    if !op_ids.insert(op.op_id.as_str()) {
                        return Err(format!("duplicate op_id {}", op.op_id));
                    }
                    if let Some(span) = &action.span {
                        if op.event_span.first_seq < span.first_seq
                            || op.event_span.last_seq > span.last_seq
                        {
                            return Err(format!("{here}: op {} outside action span", op.op_id));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    ProblematicPlanning,
    ActionSkipping,
    IncorrectOperationAssignment,
    OperationCompletionFailure,
}

impl SignalKind {
    pub const ALL: [SignalKind; 4] = [
        SignalKind::ProblematicPlanning,
        SignalKind::ActionSkipping,
        SignalKind::IncorrectOperationAssignment,
        SignalKind::OperationCompletionFailure,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SignalKind::ProblematicPlanning => "problematic_planning",
            SignalKind::ActionSkipping => "action_skipping",
            SignalKind::IncorrectOperationAssignment => "incorrect_operation_assignment",
            SignalKind::OperationCompletionFailure => "operation_completion_failure",
        }
    }
}

impl std::str::FromStr for SignalKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SignalKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown failure type `{s}`"))
    }
}

impl std::fmt::Display for SignalKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SignalLocation {
    pub plan_index: usize,
    pub action_index: Option<usize>,
    pub op_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosticSignal {
    pub kind: SignalKind,
    pub location: SignalLocation,
    pub evidence: Vec<u64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LayeringError {
    #[error("trace is invalid: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidTrace(Vec<Violation>),
    #[error("trace declares no plan")]
    NoPlanFound,
    #[error("stall threshold must be at least 1 (got {0})")]
    InvalidThreshold(usize),
    #[error(transparent)]
    Summarize(#[from] SummarizeError),
}

/// Summarizes through `s`, falling back to the deterministic summarizer when a
/// remote backend is unavailable. Provenance is folded into `provenance`.
pub(crate) struct SummaryPipe<'a> {
    summarizer: &'a dyn Summarizer,
    provenance: Provenance,
}

impl<'a> SummaryPipe<'a> {
    pub(crate) fn new(summarizer: &'a dyn Summarizer) -> Self {
        Self {
            summarizer,
            provenance: Provenance::Deterministic,
        }
    }

    pub(crate) fn run(
        &mut self,
        role: SummaryRole,
        content: &str,
        budget: usize,
    ) -> Result<String, LayeringError> {
        let req = SummaryRequest::new(role, content, budget)?;
        let summary = match crate::summarize::summarize(&req, self.summarizer) {
            Err(SummarizeError::RemoteUnavailable(_)) => {
                let mut s = Deterministic.summarize(&req)?;
                s.provenance = Provenance::Fallback;
                s
            }
            other => other?,
        };
        self.provenance = match (self.provenance, summary.provenance) {
            (Provenance::Fallback, _) | (_, Provenance::Fallback) => Provenance::Fallback,
            (Provenance::Remote, _) | (_, Provenance::Remote) => Provenance::Remote,
            _ => Provenance::Deterministic,
        };
        Ok(summary.text)
    }
}

/// Builds the full three-layer analysis of a validated trace.
pub fn build_case(
    case_id: &str,
    trace: &RawTrace,
    summarizer: &dyn Summarizer,
    table: &OpTypeTable,
) -> Result<CaseAnalysis, LayeringError> {
    let violations = validate(trace);
    if !violations.is_empty() {
        return Err(LayeringError::InvalidTrace(violations));
    }
    let mut pipe = SummaryPipe::new(summarizer);

    let (mut plans, mut transitions) = derive_plans(trace)?;
    attribute_operations(trace, &mut plans, table);
    for plan in &mut plans {
        let statuses = derive_action_status(plan, trace);
        for (action, status) in plan.actions.iter_mut().zip(statuses) {
            action.status = status;
        }
    }
    link_plan_updates(&mut plans);

    for plan in &mut plans {
        let outline = plan
            .actions
            .iter()
            .map(|a| a.description.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        plan.summary = pipe.run(SummaryRole::Plan, &outline, PLAN_SUMMARY_BUDGET)?;
        for action in &mut plan.actions {
            action.summary = pipe.run(
                SummaryRole::Action,
                &action.description,
                ACTION_SUMMARY_BUDGET,
            )?;
            for op in &mut action.operations {
                op.instruction_summary = pipe.run(
                    SummaryRole::OperationInstruction,
                    &op.instruction,
                    INSTRUCTION_SUMMARY_BUDGET,
                )?;
            }
        }
    }
    // Result summaries need the result text, which lives in the trace.
    for event in &trace.events {
        if let Payload::OperationResult { op_id, content, .. } = &event.payload {
            let summary = pipe.run(SummaryRole::OperationResult, content, RESULT_SUMMARY_BUDGET)?;
            if let Some(op) = plans
                .iter_mut()
                .flat_map(|p| p.actions.iter_mut())
                .flat_map(|a| a.operations.iter_mut())
                .find(|o| &o.op_id == op_id)
            {
                op.result_summary = summary;
            }
        }
    }
    for plan in &mut plans {
        for action in &mut plan.actions {
            action.segments = segments::segment_with(&action.operations, &mut pipe)?;
        }
    }
    for t in &mut transitions {
        let text = if t.failure_reason == t.update_rationale {
            t.failure_reason.clone()
        } else {
            format!("{} {}", t.failure_reason, t.update_rationale)
        };
        t.summary = pipe.run(SummaryRole::Transition, &text, TRANSITION_SUMMARY_BUDGET)?;
    }

    let mut query = String::new();
    let mut final_answer = None;
    let mut completed = false;
    for e in &trace.events {
        match &e.payload {
            Payload::TaskReceived { query: q } => query = q.clone(),
            Payload::FinalAnswer { answer } => final_answer = Some(answer.clone()),
            Payload::ActivityCompleted => completed = true,
            _ => {}
        }
    }

    Ok(CaseAnalysis {
        case_id: case_id.to_string(),
        query,
        final_answer,
        plans,
        transitions,
        overall_status: if completed {
            OverallStatus::Completed
        } else {
            OverallStatus::Failed
        },
        agents: trace.agents.iter().cloned().collect(),
        summary_provenance: pipe.provenance,
    })
}
