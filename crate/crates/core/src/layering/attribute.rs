use std::collections::{BTreeSet, HashMap};

use chrono::{DateTime, Utc};

use super::{ActionSpan, EventSpan, Operation, Plan};
use crate::summarize::OpTypeTable;
use crate::trace::{AgentRole, Payload, RawTrace};

/// Places every `operation_assigned` in its declared (plan, action), fills in
/// results and ledgers, classifies op types and computes spans and agent sets.
///
/// A ledger without `op_id` applies to the most recent operation that has a
/// result but no ledger yet. An operation's progress flag is its ledger's
/// `is_progress_being_made`, or its success flag when no ledger exists.
pub fn attribute_operations(trace: &RawTrace, plans: &mut [Plan], table: &OpTypeTable) {
    // op_id -> (plan, action, position within action)
    let mut index: HashMap<String, (usize, usize, usize)> = HashMap::new();
    let mut has_ledger: HashMap<String, bool> = HashMap::new();
    let mut result_order: Vec<String> = Vec::new();
    let mut started: HashMap<(usize, usize), u64> = HashMap::new();
    let ts: HashMap<u64, DateTime<Utc>> = trace.events.iter().map(|e| (e.seq, e.ts)).collect();

    for e in &trace.events {
        match &e.payload {
            Payload::ActionStarted {
                plan_index,
                action_index,
            } => {
                started.entry((*plan_index, *action_index)).or_insert(e.seq);
            }
            Payload::OperationAssigned {
                plan_index,
                action_index,
                op_id,
                instruction,
            } => {
                let Some(action) = plans
                    .get_mut(*plan_index)
                    .and_then(|p| p.actions.get_mut(*action_index))
                else {
                    continue;
                };
                index.insert(
                    op_id.clone(),
                    (*plan_index, *action_index, action.operations.len()),
                );
                action.operations.push(Operation {
                    op_id: op_id.clone(),
                    agent: e.agent.clone(),
                    op_type: table.classify(&e.agent.name, instruction),
                    instruction: instruction.clone(),
                    instruction_summary: String::new(),
                    result_summary: String::new(),
                    success: false,
                    progress: false,
                    links: Vec::new(),
                    event_span: EventSpan {
                        first_seq: e.seq,
                        last_seq: e.seq,
                    },
                });
            }
            Payload::OperationResult {
                op_id,
                success,
                links,
                ..
            } => {
                if let Some(op) = lookup(plans, &index, op_id) {
                    op.success = *success;
                    op.progress = *success;
                    op.links = links.clone();
                    op.event_span.last_seq = op.event_span.last_seq.max(e.seq);
                    result_order.push(op_id.clone());
                }
            }
            Payload::ProgressLedger(ledger) => {
                let target = match &ledger.op_id {
                    Some(id) => Some(id.clone()),
                    None => result_order
                        .iter()
                        .rev()
                        .find(|id| !has_ledger.get(*id).copied().unwrap_or(false))
                        .cloned(),
                };
                if let Some(id) = target {
                    if has_ledger.get(&id).copied().unwrap_or(false) {
                        continue;
                    }
                    if let Some(op) = lookup(plans, &index, &id) {
                        op.progress = ledger.is_progress_being_made;
                        op.event_span.last_seq = op.event_span.last_seq.max(e.seq);
                        has_ledger.insert(id, true);
                    }
                }
            }
            _ => {}
        }
    }

    let orchestrator = trace
        .agents
        .iter()
        .find(|a| a.role == AgentRole::Orchestrator)
        .cloned();
    for plan in plans.iter_mut() {
        for action in &mut plan.actions {
            let mut agents: BTreeSet<_> =
                action.operations.iter().map(|o| o.agent.clone()).collect();
            agents.extend(orchestrator.clone());
            action.agents = agents.into_iter().collect();

            let first = started
                .get(&(plan.index, action.index))
                .copied()
                .into_iter()
                .chain(action.operations.iter().map(|o| o.event_span.first_seq))
                .min();
            let last = started
                .get(&(plan.index, action.index))
                .copied()
                .into_iter()
                .chain(action.operations.iter().map(|o| o.event_span.last_seq))
                .max();
            action.span = match (first, last) {
                (Some(first_seq), Some(last_seq)) => Some(ActionSpan {
                    first_seq,
                    last_seq,
                    duration_s: (ts[&last_seq] - ts[&first_seq]).num_milliseconds() as f64 / 1000.0,
                }),
                _ => None,
            };
        }
    }
}

fn lookup<'a>(
    plans: &'a mut [Plan],
    index: &HashMap<String, (usize, usize, usize)>,
    op_id: &str,
) -> Option<&'a mut Operation> {
    let (p, a, k) = *index.get(op_id)?;
    plans.get_mut(p)?.actions.get_mut(a)?.operations.get_mut(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layering::derive_plans;
    use crate::summarize::default_table;
    use crate::testutil::TraceBuilder;

    #[test]
    fn operations_land_in_declared_actions() {
        let mut b = TraceBuilder::new("q");
        b.plan(&["a", "b"]);
        b.start(0);
        b.op("WebSurfer", 0, "Search for the glossary", true, true);
        b.start(1);
        b.op("FileSurfer", 1, "Open the file", false, false);
        let trace = b.build();
        let (mut plans, _) = derive_plans(&trace).unwrap();
        attribute_operations(&trace, &mut plans, &default_table());
        let a0 = &plans[0].actions[0];
        let a1 = &plans[0].actions[1];
        assert_eq!(a0.operations.len(), 1);
        assert_eq!(a0.operations[0].op_type, "search");
        assert!(a0.operations[0].progress);
        assert_eq!(a1.operations[0].op_type, "open_file");
        assert!(!a1.operations[0].success);
        assert_eq!(
            a1.agents
                .iter()
                .map(|a| a.name.as_str())
                .collect::<Vec<_>>(),
            ["FileSurfer", "Orchestrator"]
        );
        let span = a0.span.as_ref().unwrap();
        assert_eq!((span.first_seq, span.last_seq), (2, 5));
        assert_eq!(span.duration_s, 6.0);
    }

    #[test]
    fn ledger_without_op_id_attaches_to_latest_result() {
        let mut b = TraceBuilder::new("q");
        b.plan(&["a"]);
        let op = b.assign("WebSurfer", 0, "read");
        b.result("WebSurfer", &op, true, "fine");
        b.ledger(None, false, false);
        let trace = b.build();
        let (mut plans, _) = derive_plans(&trace).unwrap();
        attribute_operations(&trace, &mut plans, &default_table());
        let o = &plans[0].actions[0].operations[0];
        assert!(o.success);
        assert!(!o.progress);
        assert_eq!(o.event_span.last_seq, 4);
    }

    #[test]
    fn missing_result_means_unsuccessful() {
        let mut b = TraceBuilder::new("q");
        b.plan(&["a"]);
        b.assign("Coder", 0, "write code");
        let trace = b.build();
        let (mut plans, _) = derive_plans(&trace).unwrap();
        attribute_operations(&trace, &mut plans, &default_table());
        let o = &plans[0].actions[0].operations[0];
        assert!(!o.success && !o.progress);
    }
}
