use super::{ActionStatus, Plan};
use crate::trace::{Payload, RawTrace};

/// Derives one status per action of `plan`, applying these rules in order:
///
/// 1. no operations → not started;
/// 2. the action was current when the plan was revised → failed;
/// 3. some operation failed and no later operation succeeded → failed;
/// 4. the trace ends without `activity_completed` while the action is current → failed;
/// 5. otherwise → completed.
///
/// The current action is the one named by the latest `action_started` or
/// `operation_assigned`; a revision clears it.
pub fn derive_action_status(plan: &Plan, trace: &RawTrace) -> Vec<ActionStatus> {
    let mut current: Option<(usize, usize)> = None;
    let mut current_at_revision = Vec::new();
    let mut completed = false;
    for e in &trace.events {
        match &e.payload {
            Payload::ActionStarted {
                plan_index,
                action_index,
            }
            | Payload::OperationAssigned {
                plan_index,
                action_index,
                ..
            } => current = Some((*plan_index, *action_index)),
            Payload::PlanRevised { .. } => {
                current_at_revision.extend(current.take());
            }
            Payload::ActivityCompleted => completed = true,
            _ => {}
        }
    }
    let current_at_end = if completed { None } else { current };

    plan.actions
        .iter()
        .map(|action| {
            let key = (plan.index, action.index);
            let ops = &action.operations;
            if ops.is_empty() {
                return ActionStatus::NotStarted;
            }
            if current_at_revision.contains(&key) {
                return ActionStatus::Failed;
            }
            let unrecovered = ops
                .iter()
                .enumerate()
                .any(|(i, o)| !o.success && !ops[i + 1..].iter().any(|later| later.success));
            if unrecovered || current_at_end == Some(key) {
                return ActionStatus::Failed;
            }
            ActionStatus::Completed
        })
        .collect()
}
