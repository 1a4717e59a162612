use super::{Action, ActionStatus, LayeringError, Plan, PlanOrigin, PlanTransition};
use crate::trace::{Payload, PlanStep, RawTrace};

/// Splits a revision reason into (why the previous plan stalled, what the new
/// plan changes). The first sentence is the failure reason and the remainder
/// the rationale; a single-sentence reason fills both.
pub fn split_reason(reason: &str) -> (String, String) {
    let text = reason.split_whitespace().collect::<Vec<_>>().join(" ");
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') && matches!(chars.peek(), Some((_, ' '))) {
            let end = i + c.len_utf8();
            let rest = text[end..].trim();
            if !rest.is_empty() {
                return (text[..end].to_string(), rest.to_string());
            }
        }
    }
    (text.clone(), text)
}

fn skeleton(steps: &[PlanStep]) -> Vec<Action> {
    steps
        .iter()
        .map(|s| Action {
            index: s.index,
            description: s.description.clone(),
            summary: String::new(),
            status: ActionStatus::NotStarted,
            agents: Vec::new(),
            span: None,
            operations: Vec::new(),
            segments: Vec::new(),
            update_link: None,
            carried_to: None,
        })
        .collect()
}

/// One plan per `plan_created`/`plan_revised` event, in trace order, and one
/// transition per revision. Actions come back without operations or statuses.
pub fn derive_plans(trace: &RawTrace) -> Result<(Vec<Plan>, Vec<PlanTransition>), LayeringError> {
    let mut plans: Vec<Plan> = Vec::new();
    let mut transitions = Vec::new();
    for e in &trace.events {
        match &e.payload {
            Payload::PlanCreated { actions } => plans.push(Plan {
                index: plans.len(),
                origin: PlanOrigin::Initial,
                created_seq: e.seq,
                summary: String::new(),
                actions: skeleton(actions),
            }),
            Payload::PlanRevised { reason, actions } if !plans.is_empty() => {
                let (failure_reason, update_rationale) = split_reason(reason);
                transitions.push(PlanTransition {
                    from_plan: plans.len() - 1,
                    to_plan: plans.len(),
                    failure_reason,
                    update_rationale,
                    summary: String::new(),
                    at_seq: e.seq,
                });
                plans.push(Plan {
                    index: plans.len(),
                    origin: PlanOrigin::Revision,
                    created_seq: e.seq,
                    summary: String::new(),
                    actions: skeleton(actions),
                });
            }
            _ => {}
        }
    }
    if plans.is_empty() {
        return Err(LayeringError::NoPlanFound);
    }
    Ok((plans, transitions))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::TraceBuilder;

    #[test]
    fn split_rule() {
        assert_eq!(
            split_reason("The PDF was blocked. Download it locally instead."),
            (
                "The PDF was blocked.".to_string(),
                "Download it locally instead.".to_string()
            )
        );
        assert_eq!(split_reason("R"), ("R".to_string(), "R".to_string()));
        assert_eq!(
            split_reason("Stuck.  "),
            ("Stuck.".to_string(), "Stuck.".to_string())
        );
    }

    #[test]
    fn single_plan() {
        let mut b = TraceBuilder::new("q");
        b.plan(&["a", "b"]);
        let (plans, transitions) = derive_plans(&b.build()).unwrap();
        assert_eq!(plans.len(), 1);
        assert!(transitions.is_empty());
        assert_eq!(plans[0].origin, PlanOrigin::Initial);
    }

    #[test]
    fn revision_adds_transition() {
        let mut b = TraceBuilder::new("q");
        b.plan(&["a", "b"]);
        b.revise("R", &["c"]);
        let (plans, transitions) = derive_plans(&b.build()).unwrap();
        assert_eq!(plans.len(), 2);
        assert_eq!(transitions.len(), 1);
        assert_eq!(transitions[0].failure_reason, "R");
        assert_eq!(transitions[0].update_rationale, "R");
        assert_eq!((transitions[0].from_plan, transitions[0].to_plan), (0, 1));
        assert_eq!(plans[1].origin, PlanOrigin::Revision);
    }

    #[test]
    fn no_plan() {
        let b = TraceBuilder::new("q");
        assert_eq!(derive_plans(&b.build()), Err(LayeringError::NoPlanFound));
    }
}
