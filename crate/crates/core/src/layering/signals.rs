use std::collections::{BTreeMap, BTreeSet, HashSet};

use super::{CaseAnalysis, DiagnosticSignal, LayeringError, SignalKind, SignalLocation};
use crate::trace::{Payload, RawTrace};

/// Agent name → op types that agent may be asked to perform.
pub type Capabilities = BTreeMap<String, BTreeSet<String>>;

/// Consecutive no-progress operations needed to flag a stall.
pub const DEFAULT_STALL_THRESHOLD: usize = 2;

/// Normal form used to compare revision reasons: lowercase, collapsed
/// whitespace, trailing sentence punctuation removed.
pub fn normalize_reason(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
        .trim_end_matches(['.', '!', '?'])
        .to_string()
}

/// Scans an analysis (and the trace it was built from) for the four failure
/// patterns. Signals come back sorted by their first evidence seq.
///
/// - `action_skipping`: an action starts while an earlier action of the same
///   plan has had no operations; reported once per skipped action.
/// - `incorrect_operation_assignment`: an operation's type is outside the
///   agent's capabilities. Agents absent from `capabilities` are not checked.
/// - `operation_completion_failure`: every unsuccessful operation, plus every
///   run of at least `stall_threshold` no-progress operations that contains
///   no unsuccessful one (reported at the run's last operation).
/// - `problematic_planning`: a revision whose failure reason repeats an
///   earlier revision's.
pub fn detect_signals(
    case: &CaseAnalysis,
    trace: &RawTrace,
    capabilities: &Capabilities,
    stall_threshold: usize,
) -> Result<Vec<DiagnosticSignal>, LayeringError> {
    if stall_threshold < 1 {
        return Err(LayeringError::InvalidThreshold(stall_threshold));
    }
    let mut out = Vec::new();
    skipping(case, trace, &mut out);
    for plan in &case.plans {
        for action in &plan.actions {
            let at = |op_id: &str| SignalLocation {
                plan_index: plan.index,
                action_index: Some(action.index),
                op_id: Some(op_id.to_string()),
            };
            for op in &action.operations {
                if let Some(allowed) = capabilities.get(&op.agent.name) {
                    if !allowed.contains(&op.op_type) {
                        out.push(DiagnosticSignal {
                            kind: SignalKind::IncorrectOperationAssignment,
                            location: at(&op.op_id),
                            evidence: vec![op.event_span.first_seq],
                            detail: format!(
                                "{} was assigned a `{}` operation outside its capabilities",
                                op.agent.name, op.op_type
                            ),
                        });
                    }
                }
                if !op.success {
                    out.push(DiagnosticSignal {
                        kind: SignalKind::OperationCompletionFailure,
                        location: at(&op.op_id),
                        evidence: span_evidence(op.event_span.first_seq, op.event_span.last_seq),
                        detail: format!("{} did not complete the operation", op.agent.name),
                    });
                }
            }
            for seg in &action.segments {
                let ops = &action.operations[seg.start_op..=seg.end_op];
                if seg.progress || seg.len() < stall_threshold || ops.iter().any(|o| !o.success) {
                    continue;
                }
                let last = &ops[ops.len() - 1];
                out.push(DiagnosticSignal {
                    kind: SignalKind::OperationCompletionFailure,
                    location: at(&last.op_id),
                    evidence: span_evidence(ops[0].event_span.first_seq, last.event_span.last_seq),
                    detail: format!("{} consecutive operations made no progress", seg.len()),
                });
            }
        }
    }
    for (t, transition) in case.transitions.iter().enumerate() {
        let reason = normalize_reason(&transition.failure_reason);
        if let Some(earlier) = case.transitions[..t]
            .iter()
            .find(|u| normalize_reason(&u.failure_reason) == reason)
        {
            out.push(DiagnosticSignal {
                kind: SignalKind::ProblematicPlanning,
                location: SignalLocation {
                    plan_index: transition.from_plan,
                    action_index: None,
                    op_id: None,
                },
                evidence: vec![earlier.at_seq, transition.at_seq],
                detail: format!(
                    "plan {} stalled for the same reason as plan {}: {}",
                    transition.from_plan + 1,
                    earlier.from_plan + 1,
                    transition.failure_reason
                ),
            });
        }
    }
    out.sort_by(|a, b| {
        (a.evidence[0], a.kind, &a.location).cmp(&(b.evidence[0], b.kind, &b.location))
    });
    Ok(out)
}

fn span_evidence(first: u64, last: u64) -> Vec<u64> {
    if first == last {
        vec![first]
    } else {
        vec![first, last]
    }
}

fn skipping(case: &CaseAnalysis, trace: &RawTrace, out: &mut Vec<DiagnosticSignal>) {
    let mut touched: HashSet<(usize, usize)> = HashSet::new();
    let mut reported: HashSet<(usize, usize)> = HashSet::new();
    for e in &trace.events {
        match &e.payload {
            Payload::OperationAssigned {
                plan_index,
                action_index,
                ..
            } => {
                touched.insert((*plan_index, *action_index));
            }
            Payload::ActionStarted {
                plan_index,
                action_index,
            } => {
                let Some(plan) = case.plans.get(*plan_index) else {
                    continue;
                };
                for skipped in &plan.actions[..(*action_index).min(plan.actions.len())] {
                    let key = (*plan_index, skipped.index);
                    if touched.contains(&key) || !reported.insert(key) {
                        continue;
                    }
                    out.push(DiagnosticSignal {
                        kind: SignalKind::ActionSkipping,
                        location: SignalLocation {
                            plan_index: *plan_index,
                            action_index: Some(skipped.index),
                            op_id: None,
                        },
                        evidence: vec![e.seq],
                        detail: format!(
                            "action {} started before action {} received any operation",
                            action_index + 1,
                            skipped.index + 1
                        ),
                    });
                }
            }
            _ => {}
        }
    }
}
