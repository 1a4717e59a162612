//! Hand-rolled trace construction for unit tests.

use chrono::{Duration, TimeZone, Utc};

use crate::trace::{
    AgentRef, LedgerSnapshot, Payload, PlanStep, RawTrace, SourceFormat, TraceEvent,
};

pub struct TraceBuilder {
    events: Vec<TraceEvent>,
    next_op: usize,
    plans: usize,
}

fn steps(descriptions: &[&str]) -> Vec<PlanStep> {
    descriptions
        .iter()
        .enumerate()
        .map(|(index, d)| PlanStep {
            index,
            description: d.to_string(),
        })
        .collect()
}

impl TraceBuilder {
    pub fn new(query: &str) -> Self {
        let mut b = Self {
            events: Vec::new(),
            next_op: 1,
            plans: 0,
        };
        b.push(
            AgentRef::orchestrator("Orchestrator"),
            Payload::TaskReceived {
                query: query.into(),
            },
        );
        b
    }

    pub fn push(&mut self, agent: AgentRef, payload: Payload) -> u64 {
        let seq = self.events.len() as u64;
        let base = Utc.with_ymd_and_hms(2024, 5, 1, 12, 0, 0).unwrap();
        self.events.push(TraceEvent {
            seq,
            ts: base + Duration::seconds(2 * seq as i64),
            agent,
            payload,
        });
        seq
    }

    fn orch(&mut self, payload: Payload) -> u64 {
        self.push(AgentRef::orchestrator("Orchestrator"), payload)
    }

    pub fn current_plan(&self) -> usize {
        self.plans - 1
    }

    pub fn plan(&mut self, descriptions: &[&str]) -> u64 {
        self.plans += 1;
        self.orch(Payload::PlanCreated {
            actions: steps(descriptions),
        })
    }

    pub fn revise(&mut self, reason: &str, descriptions: &[&str]) -> u64 {
        self.plans += 1;
        self.orch(Payload::PlanRevised {
            reason: reason.into(),
            actions: steps(descriptions),
        })
    }

    pub fn start(&mut self, action: usize) -> u64 {
        let plan_index = self.current_plan();
        self.orch(Payload::ActionStarted {
            plan_index,
            action_index: action,
        })
    }

    pub fn assign(&mut self, worker: &str, action: usize, instruction: &str) -> String {
        let op_id = format!("op-{}", self.next_op);
        self.next_op += 1;
        let plan_index = self.current_plan();
        self.push(
            AgentRef::worker(worker),
            Payload::OperationAssigned {
                plan_index,
                action_index: action,
                op_id: op_id.clone(),
                instruction: instruction.into(),
            },
        );
        op_id
    }

    pub fn result(&mut self, worker: &str, op_id: &str, success: bool, content: &str) -> u64 {
        self.push(
            AgentRef::worker(worker),
            Payload::OperationResult {
                op_id: op_id.into(),
                success,
                content: content.into(),
                links: crate::trace::extract_links(content),
            },
        )
    }

    pub fn ledger(&mut self, op_id: Option<&str>, progress: bool, satisfied: bool) -> u64 {
        self.orch(Payload::ProgressLedger(LedgerSnapshot {
            op_id: op_id.map(str::to_string),
            is_request_satisfied: satisfied,
            is_progress_being_made: progress,
            is_in_loop: false,
            next_agent: "Orchestrator".into(),
            instruction: String::new(),
            reason: if progress { "moving on" } else { "stalled" }.into(),
        }))
    }

    /// assign + result + ledger in one go.
    pub fn op(
        &mut self,
        worker: &str,
        action: usize,
        instruction: &str,
        success: bool,
        progress: bool,
    ) -> String {
        let op_id = self.assign(worker, action, instruction);
        let content = if success {
            "Done. All good."
        } else {
            "Error: failed."
        };
        self.result(worker, &op_id, success, content);
        self.ledger(Some(&op_id), progress, false);
        op_id
    }

    pub fn complete(&mut self, answer: &str) {
        self.orch(Payload::FinalAnswer {
            answer: answer.into(),
        });
        self.orch(Payload::ActivityCompleted);
    }

    pub fn build(&self) -> RawTrace {
        RawTrace::new(self.events.clone(), SourceFormat::Ctef)
    }
}
