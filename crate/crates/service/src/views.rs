//! Response bodies. Each mirrors a schema document under `schemas/`.

use serde::Serialize;
use serde_json::Value;

use atd_core::layering::{
    Action, ActionRef, ActionStatus, EventSpan, Operation, OverallStatus, Plan, PlanOrigin,
    PlanTransition,
};
use atd_core::summarize::Provenance;
use atd_core::trace::{Payload, RawTrace};
use atd_core::CaseAnalysis;

use crate::filter::{FilterQuery, Filters};

#[derive(Debug, Serialize)]
pub struct ActivityView {
    pub case_id: String,
    pub query: String,
    pub final_answer: Option<String>,
    pub overall_status: OverallStatus,
    pub agents: Vec<String>,
    pub summary_provenance: Provenance,
    pub plans: Vec<PlanView>,
}

#[derive(Debug, Serialize)]
pub struct PlanView {
    pub index: usize,
    pub origin: PlanOrigin,
    pub created_seq: u64,
    pub summary: String,
    /// The revision that ended this plan, if any.
    pub transition: Option<TransitionView>,
    pub actions: Vec<ActionView>,
}

#[derive(Debug, Serialize)]
pub struct TransitionView {
    pub to_plan: usize,
    pub failure_reason: String,
    pub update_rationale: String,
    pub summary: String,
    pub at_seq: u64,
}

#[derive(Debug, Serialize)]
pub struct ActionView {
    pub index: usize,
    pub description: String,
    pub summary: String,
    pub status: ActionStatus,
    pub agents: Vec<String>,
    pub duration_s: Option<f64>,
    pub update_link: Option<ActionRef>,
    pub carried_to: Option<ActionRef>,
    pub operation_count: usize,
    pub segments: Vec<SegmentView>,
}

#[derive(Debug, Serialize)]
pub struct SegmentView {
    pub index: usize,
    pub start_op: usize,
    pub end_op: usize,
    pub progress: bool,
    pub summary: String,
    pub op_ids: Vec<String>,
}

impl ActivityView {
    pub fn new(case: &CaseAnalysis) -> Self {
        Self {
            case_id: case.case_id.clone(),
            query: case.query.clone(),
            final_answer: case.final_answer.clone(),
            overall_status: case.overall_status,
            agents: case.agents.iter().map(|a| a.name.clone()).collect(),
            summary_provenance: case.summary_provenance,
            plans: case
                .plans
                .iter()
                .map(|p| plan_view(p, case.transitions.iter().find(|t| t.from_plan == p.index)))
                .collect(),
        }
    }
}

fn plan_view(plan: &Plan, transition: Option<&PlanTransition>) -> PlanView {
    PlanView {
        index: plan.index,
        origin: plan.origin,
        created_seq: plan.created_seq,
        summary: plan.summary.clone(),
        transition: transition.map(|t| TransitionView {
            to_plan: t.to_plan,
            failure_reason: t.failure_reason.clone(),
            update_rationale: t.update_rationale.clone(),
            summary: t.summary.clone(),
            at_seq: t.at_seq,
        }),
        actions: plan.actions.iter().map(action_view).collect(),
    }
}

fn action_view(action: &Action) -> ActionView {
    ActionView {
        index: action.index,
        description: action.description.clone(),
        summary: action.summary.clone(),
        status: action.status,
        agents: action.agents.iter().map(|a| a.name.clone()).collect(),
        duration_s: action.span.as_ref().map(|s| s.duration_s),
        update_link: action.update_link,
        carried_to: action.carried_to,
        operation_count: action.operations.len(),
        segments: action
            .segments
            .iter()
            .enumerate()
            .map(|(i, s)| SegmentView {
                index: i,
                start_op: s.start_op,
                end_op: s.end_op,
                progress: s.progress,
                summary: s.summary.clone(),
                op_ids: action.operations[s.start_op..=s.end_op]
                    .iter()
                    .map(|o| o.op_id.clone())
                    .collect(),
            })
            .collect(),
    }
}

#[derive(Debug, Serialize)]
pub struct OperationList {
    pub case_id: String,
    pub plan_index: usize,
    pub action_index: usize,
    pub filters: Filters,
    pub page: usize,
    pub page_size: usize,
    pub total: usize,
    pub items: Vec<OperationItem>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OperationItem {
    pub op_id: String,
    /// Position within the action, in trace order.
    pub position: usize,
    pub agent: String,
    pub op_type: String,
    pub instruction_summary: String,
    pub result_summary: String,
    pub success: bool,
    pub progress: bool,
    pub segment_index: usize,
    pub link_count: usize,
}

/// Full result text reported for `op_id`, empty when none was reported.
pub fn result_content<'a>(trace: &'a RawTrace, op_id: &str) -> &'a str {
    trace
        .events
        .iter()
        .rev()
        .find_map(|e| match &e.payload {
            Payload::OperationResult {
                op_id: id, content, ..
            } if id == op_id => Some(content.as_str()),
            _ => None,
        })
        .unwrap_or("")
}

fn segment_of(action: &Action, position: usize) -> usize {
    action
        .segments
        .iter()
        .position(|s| (s.start_op..=s.end_op).contains(&position))
        .unwrap_or(0)
}

impl OperationList {
    pub fn new(
        case: &CaseAnalysis,
        trace: &RawTrace,
        plan: usize,
        action: &Action,
        query: &FilterQuery,
    ) -> Self {
        let matched: Vec<OperationItem> = action
            .operations
            .iter()
            .enumerate()
            .filter(|(_, op)| query.matches(op, result_content(trace, &op.op_id)))
            .map(|(i, op)| item(action, i, op))
            .collect();
        let total = matched.len();
        let items = matched
            .into_iter()
            .skip((query.page - 1).saturating_mul(query.page_size))
            .take(query.page_size)
            .collect();
        Self {
            case_id: case.case_id.clone(),
            plan_index: plan,
            action_index: action.index,
            filters: query.filters.clone(),
            page: query.page,
            page_size: query.page_size,
            total,
            items,
        }
    }
}

fn item(action: &Action, position: usize, op: &Operation) -> OperationItem {
    OperationItem {
        op_id: op.op_id.clone(),
        position,
        agent: op.agent.name.clone(),
        op_type: op.op_type.clone(),
        instruction_summary: op.instruction_summary.clone(),
        result_summary: op.result_summary.clone(),
        success: op.success,
        progress: op.progress,
        segment_index: segment_of(action, position),
        link_count: op.links.len(),
    }
}

#[derive(Debug, Serialize)]
pub struct OperationDetail {
    pub case_id: String,
    pub plan_index: usize,
    pub action_index: usize,
    pub op_id: String,
    pub agent: String,
    pub agent_role: &'static str,
    pub op_type: String,
    pub instruction: String,
    pub instruction_summary: String,
    pub result_content: String,
    pub result_summary: String,
    pub success: bool,
    pub progress: bool,
    pub segment_index: usize,
    pub links: Vec<String>,
    pub event_span: EventSpan,
    /// CTEF records in the operation's event span.
    pub events: Vec<Value>,
    /// The orchestrator's ledger that closed the operation, if one did.
    pub ledger: Option<Value>,
}

impl OperationDetail {
    pub fn new(case: &CaseAnalysis, trace: &RawTrace, op_id: &str) -> Option<Self> {
        let (p, a, op) = case.find_operation(op_id)?;
        let action = case.action(p, a)?;
        let position = action.operations.iter().position(|o| o.op_id == op_id)?;
        let span = op.event_span;
        let in_span: Vec<_> = trace
            .events
            .iter()
            .filter(|e| (span.first_seq..=span.last_seq).contains(&e.seq))
            .collect();
        let ledger = in_span.iter().rev().find_map(|e| match &e.payload {
            Payload::ProgressLedger(l) if l.op_id.as_deref().is_none_or(|id| id == op_id) => {
                Some(e.payload.to_value())
            }
            _ => None,
        });
        Some(Self {
            case_id: case.case_id.clone(),
            plan_index: p,
            action_index: a,
            op_id: op.op_id.clone(),
            agent: op.agent.name.clone(),
            agent_role: op.agent.role.as_str(),
            op_type: op.op_type.clone(),
            instruction: op.instruction.clone(),
            instruction_summary: op.instruction_summary.clone(),
            result_content: result_content(trace, op_id).to_string(),
            result_summary: op.result_summary.clone(),
            success: op.success,
            progress: op.progress,
            segment_index: segment_of(action, position),
            links: op.links.clone(),
            event_span: span,
            events: in_span.iter().map(|e| e.to_value()).collect(),
            ledger,
        })
    }
}
