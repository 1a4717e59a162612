//! Deterministic synthetic traces with injected failures and a ground-truth
//! manifest.
//!
//! # Randomness
//!
//! All randomness comes from SplitMix64 seeded with `cfg.seed` as its raw
//! 64-bit state. Each draw updates and mixes the state (wrapping arithmetic):
//!
//! ```text
//! x = x + 0x9e3779b97f4a7c15
//! z = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9
//! z = (z ^ (z >> 27)) * 0x94d049bb133111eb
//! out = z ^ (z >> 31)
//! ```
//!
//! A value in `lo..=hi` is `lo + out % (hi - lo + 1)`; picking from a list of
//! length `n` uses index `out % n`. Draws happen in a fixed order (plan
//! shapes, then injection sites, then timestamps), so identical configs give
//! byte-identical traces.
//!
//! # Trace shape
//!
//! Each plan runs its actions in order: `action_started`, then per operation
//! `operation_assigned` → `operation_result` → `progress_ledger`. A non-final
//! plan stalls on one action (its last operation makes no progress) and is
//! followed by `plan_revised`; the final plan ends with a satisfied ledger,
//! `final_answer` and `activity_completed`. Clean traces contain isolated
//! no-progress operations but never two in a row and never a failed one.

mod text;

use std::collections::BTreeMap;
use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;

use chrono::{Duration, TimeZone, Utc};
use rand_core::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::layering::{ActionStatus, OverallStatus, SignalKind, DEFAULT_STALL_THRESHOLD};
use crate::trace::{
    extract_links, AgentRef, LedgerSnapshot, Payload, PlanStep, RawTrace, SourceFormat, TraceEvent,
};

pub use text::DEFAULT_QUERY;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionSpec {
    #[serde(rename = "type")]
    pub kind: SignalKind,
    pub count: usize,
}

impl FromStr for InjectionSpec {
    type Err = SynthError;

    /// Parses `<type>=<count>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |why: &str| SynthError::InvalidConfig(format!("injection `{s}`: {why}"));
        let (kind, count) = s
            .split_once('=')
            .ok_or_else(|| bad("expected <type>=<count>"))?;
        let kind = kind.trim().parse::<SignalKind>().map_err(|e| bad(&e))?;
        let count = count
            .trim()
            .parse::<usize>()
            .map_err(|_| bad("count is not a non-negative integer"))?;
        if count == 0 {
            return Err(bad("count must be at least 1"));
        }
        Ok(InjectionSpec { kind, count })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthConfig {
    pub seed: u64,
    pub query: String,
    pub n_plans: usize,
    pub actions_per_plan: RangeInclusive<usize>,
    pub ops_per_action: RangeInclusive<usize>,
    pub injections: Vec<InjectionSpec>,
    /// Length of the no-progress run emitted for a completion failure.
    pub stall_threshold: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            query: DEFAULT_QUERY.to_string(),
            n_plans: 1,
            actions_per_plan: 4..=4,
            ops_per_action: 1..=3,
            injections: Vec::new(),
            stall_threshold: DEFAULT_STALL_THRESHOLD,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |s: &str| Err(SynthError::InvalidConfig(s.to_string()));
        if self.n_plans == 0 {
            return bad("n_plans must be at least 1");
        }
        if self.actions_per_plan.is_empty() || *self.actions_per_plan.start() == 0 {
            return bad("actions_per_plan must be a non-empty range of positive counts");
        }
        if self.ops_per_action.is_empty() || *self.ops_per_action.start() == 0 {
            return bad("ops_per_action must be a non-empty range of positive counts");
        }
        if self.stall_threshold == 0 {
            return bad("stall_threshold must be at least 1");
        }
        if self.injections.iter().any(|i| i.count == 0) {
            return bad("injection counts must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    #[serde(rename = "type")]
    pub kind: SignalKind,
    pub plan_index: usize,
    /// None for plan-level failures.
    pub action_index: Option<usize>,
    pub op_id: Option<String>,
    /// The injected text, including its marker token.
    pub embedded_reason: String,
}

impl ManifestEntry {
    /// The marker token embedded in this entry's text.
    pub fn marker(&self) -> Option<&str> {
        let start = self.embedded_reason.find("[[marker-")?;
        let end = self.embedded_reason[start..].find("]]")? + start + 2;
        Some(&self.embedded_reason[start..end])
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureManifest {
    /// Sorted by the trace position of each failure.
    pub entries: Vec<ManifestEntry>,
}

/// What a correct analysis of the generated trace must report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub action_statuses: Vec<Vec<ActionStatus>>,
    /// One per transition, in order.
    pub failure_reasons: Vec<String>,
    pub overall_status: OverallStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthesized {
    pub trace: RawTrace,
    pub manifest: FailureManifest,
    pub truth: GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
    #[error("cannot place {requested} `{kind}` injection(s): only {placed} site(s) available")]
    InjectionOverflow {
        kind: SignalKind,
        requested: usize,
        placed: usize,
    },
    #[error("site {site:?} cannot take a `{kind}` injection")]
    SiteConflict { kind: SignalKind, site: Site },
}

/// Where an injection lands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Site {
    /// An action of a plan.
    Action { plan: usize, action: usize },
    /// The pair of transitions `t` and `t + 1`.
    Transitions(usize),
}

/// Thin wrapper documenting exactly how draws are made (see module docs).
#[derive(Debug, Clone)]
pub struct Prng(SplitMix64);

impl Prng {
    pub fn new(seed: u64) -> Self {
        Prng(SplitMix64::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    pub fn range(&mut self, r: &RangeInclusive<usize>) -> usize {
        let span = (r.end() - r.start()) as u64 + 1;
        r.start() + (self.next_u64() % span) as usize
    }

    pub fn pick<'a, T>(&mut self, items: &'a [T]) -> &'a T {
        &items[(self.next_u64() % items.len() as u64) as usize]
    }
}

#[derive(Debug, Clone)]
struct OpDraft {
    worker: &'static str,
    instruction: String,
    content: String,
    success: bool,
    progress: bool,
}

#[derive(Debug, Clone)]
struct ActionDraft {
    description: String,
    executed: bool,
    skipped: bool,
    injected: bool,
    ops: Vec<OpDraft>,
}

#[derive(Debug, Clone)]
struct PlanDraft {
    actions: Vec<ActionDraft>,
    /// The action the plan stalls on (non-final plans only).
    stall: Option<usize>,
    /// First sentence of the revision leaving this plan.
    failure: String,
    update: String,
    reason_injected: bool,
}

#[derive(Debug, Clone)]
enum Anchor {
    /// First `action_started` after this action in its plan.
    NextStart {
        plan: usize,
        action: usize,
    },
    Op {
        plan: usize,
        action: usize,
        op: usize,
    },
    Revision(usize),
}

#[derive(Debug, Clone)]
struct EntryDraft {
    kind: SignalKind,
    plan_index: usize,
    action_index: Option<usize>,
    anchor: Anchor,
    embedded_reason: String,
}

/// A trace under construction: the clean shape plus injections applied so
/// far. Rendering turns it into events.
#[derive(Debug, Clone)]
pub struct Draft {
    query: String,
    plans: Vec<PlanDraft>,
    stall_threshold: usize,
    entries: Vec<EntryDraft>,
}

impl Draft {
    /// Lays out a clean activity.
    pub fn new(cfg: &SynthConfig, rng: &mut Prng) -> Result<Self, SynthError> {
        cfg.validate()?;
        let mut plans = Vec::with_capacity(cfg.n_plans);
        for p in 0..cfg.n_plans {
            let n = rng.range(&cfg.actions_per_plan);
            let stall =
                (p + 1 < cfg.n_plans).then(|| if n == 1 { 0 } else { rng.range(&(1..=n - 1)) });
            let mut actions = Vec::with_capacity(n);
            for a in 0..n {
                let worker = rng.pick(&text::WORKERS);
                let description = rng.pick(worker.descriptions).to_string();
                let executed = stall.is_none_or(|k| a <= k);
                let mut ops = Vec::new();
                if executed {
                    let m = rng.range(&cfg.ops_per_action);
                    for k in 0..m {
                        // Isolated no-progress ops only between progressing ones.
                        let prev_ok = ops.last().is_none_or(|o: &OpDraft| o.progress);
                        let interior = k + 1 < m && !(stall == Some(a) && k + 2 == m);
                        let progress = !(cfg.stall_threshold > 1
                            && prev_ok
                            && interior
                            && rng.next_u64() % 4 == 0);
                        ops.push(clean_op(worker, progress, rng));
                    }
                    if stall == Some(a) {
                        let last = ops.last_mut().expect("at least one op");
                        last.progress = false;
                        last.content = rng.pick(text::NO_PROGRESS_RESULTS).to_string();
                    }
                }
                actions.push(ActionDraft {
                    description,
                    executed,
                    skipped: false,
                    injected: false,
                    ops,
                });
            }
            let (failure, update) = if stall.is_some() {
                (
                    rng.pick(text::FAILURE_REASONS)
                        .replace("{}", &(p + 1).to_string()),
                    rng.pick(text::UPDATES).replace("{}", &(p + 1).to_string()),
                )
            } else {
                (String::new(), String::new())
            };
            plans.push(PlanDraft {
                actions,
                stall,
                failure,
                update,
                reason_injected: false,
            });
        }
        Ok(Self {
            query: cfg.query.clone(),
            plans,
            stall_threshold: cfg.stall_threshold,
            entries: Vec::new(),
        })
    }

    fn last_executed(&self, plan: usize) -> usize {
        let p = &self.plans[plan];
        p.stall.unwrap_or(p.actions.len() - 1)
    }

    fn site_free(&self, kind: SignalKind, site: Site) -> bool {
        match (kind, site) {
            (SignalKind::ProblematicPlanning, Site::Transitions(t)) => {
                t + 2 < self.plans.len()
                    && !self.plans[t].reason_injected
                    && !self.plans[t + 1].reason_injected
            }
            (SignalKind::ProblematicPlanning, _) | (_, Site::Transitions(_)) => false,
            (kind, Site::Action { plan, action }) => {
                let Some(a) = self.plans.get(plan).and_then(|p| p.actions.get(action)) else {
                    return false;
                };
                let usable = a.executed && !a.skipped && !a.injected;
                match kind {
                    SignalKind::ActionSkipping => usable && action < self.last_executed(plan),
                    _ => usable,
                }
            }
        }
    }

    /// How many more repeated-reason injections fit (greedy packing of
    /// disjoint transition pairs, which is optimal for intervals).
    fn transition_capacity(&self) -> usize {
        let mut n = 0;
        let mut next = 0;
        for site in self.sites(SignalKind::ProblematicPlanning) {
            if let Site::Transitions(t) = site {
                if t >= next {
                    n += 1;
                    next = t + 2;
                }
            }
        }
        n
    }

    /// Sites that can still take an injection of `kind`, in trace order.
    pub fn sites(&self, kind: SignalKind) -> Vec<Site> {
        let candidates: Vec<Site> = if kind == SignalKind::ProblematicPlanning {
            (0..self.plans.len()).map(Site::Transitions).collect()
        } else {
            self.plans
                .iter()
                .enumerate()
                .flat_map(|(plan, p)| {
                    (0..p.actions.len()).map(move |action| Site::Action { plan, action })
                })
                .collect()
        };
        candidates
            .into_iter()
            .filter(|s| self.site_free(kind, *s))
            .collect()
    }

    /// Rewrites the draft so that exactly one failure of `kind` occurs at
    /// `site`, embedding a fresh marker token.
    pub fn inject_failure(&mut self, kind: SignalKind, site: Site) -> Result<(), SynthError> {
        if !self.site_free(kind, site) {
            return Err(SynthError::SiteConflict { kind, site });
        }
        let marker = text::marker(self.entries.len() + 1);
        let entry = match site {
            Site::Transitions(t) => {
                let reason = format!("{marker} {}", text::REPEATED_REASON);
                for p in [t, t + 1] {
                    self.plans[p].failure = reason.clone();
                    self.plans[p].reason_injected = true;
                }
                EntryDraft {
                    kind,
                    plan_index: t + 1,
                    action_index: None,
                    anchor: Anchor::Revision(t + 1),
                    embedded_reason: reason,
                }
            }
            Site::Action { plan, action } => {
                let is_stall = self.plans[plan].stall == Some(action);
                let threshold = self.stall_threshold;
                let a = &mut self.plans[plan].actions[action];
                a.injected = true;
                match kind {
                    SignalKind::ActionSkipping => {
                        a.skipped = true;
                        a.ops.clear();
                        a.description = format!("{marker} {}", a.description);
                        EntryDraft {
                            kind,
                            plan_index: plan,
                            action_index: Some(action),
                            anchor: Anchor::NextStart { plan, action },
                            embedded_reason: a.description.clone(),
                        }
                    }
                    SignalKind::IncorrectOperationAssignment => {
                        let instruction = format!("{marker} {}", text::FOREIGN_INSTRUCTION);
                        a.ops.insert(
                            0,
                            OpDraft {
                                worker: text::FOREIGN_WORKER,
                                instruction: instruction.clone(),
                                content: text::SUCCESS_RESULTS[0].to_string(),
                                success: true,
                                progress: true,
                            },
                        );
                        EntryDraft {
                            kind,
                            plan_index: plan,
                            action_index: Some(action),
                            anchor: Anchor::Op {
                                plan,
                                action,
                                op: 0,
                            },
                            embedded_reason: instruction,
                        }
                    }
                    SignalKind::OperationCompletionFailure => {
                        let template = a.ops[0].clone();
                        if is_stall {
                            // The run replaces the stalling op and ends the plan.
                            a.ops.pop();
                        }
                        for _ in 1..threshold {
                            a.ops.push(OpDraft {
                                content: text::NO_PROGRESS_RESULTS[0].to_string(),
                                success: true,
                                progress: false,
                                ..template.clone()
                            });
                        }
                        let content = format!("{marker} {}", text::FAILURE_RESULT);
                        a.ops.push(OpDraft {
                            content: content.clone(),
                            success: false,
                            progress: false,
                            ..template.clone()
                        });
                        let failed = a.ops.len() - 1;
                        if !is_stall {
                            a.ops.push(OpDraft {
                                content: text::SUCCESS_RESULTS[2].to_string(),
                                success: true,
                                progress: true,
                                ..template
                            });
                        }
                        EntryDraft {
                            kind,
                            plan_index: plan,
                            action_index: Some(action),
                            anchor: Anchor::Op {
                                plan,
                                action,
                                op: failed,
                            },
                            embedded_reason: content,
                        }
                    }
                    SignalKind::ProblematicPlanning => unreachable!("checked by site_free"),
                }
            }
        };
        self.entries.push(entry);
        Ok(())
    }

    /// Expected statuses and transition reasons for the current draft.
    pub fn truth(&self) -> GroundTruth {
        GroundTruth {
            action_statuses: self
                .plans
                .iter()
                .map(|p| {
                    p.actions
                        .iter()
                        .enumerate()
                        .map(|(i, a)| {
                            if !a.executed || a.skipped {
                                ActionStatus::NotStarted
                            } else if p.stall == Some(i) {
                                ActionStatus::Failed
                            } else {
                                ActionStatus::Completed
                            }
                        })
                        .collect()
                })
                .collect(),
            failure_reasons: self
                .plans
                .iter()
                .filter(|p| p.stall.is_some())
                .map(|p| p.failure.clone())
                .collect(),
            overall_status: OverallStatus::Completed,
        }
    }

    /// Emits the event stream and resolves manifest locations.
    pub fn render(&self, rng: &mut Prng) -> (RawTrace, FailureManifest) {
        let base = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
        let mut elapsed = 0i64;
        let mut events: Vec<TraceEvent> = Vec::new();
        let mut push = |agent: AgentRef, payload: Payload, rng: &mut Prng| {
            let seq = events.len() as u64;
            if seq > 0 {
                elapsed += 1 + (rng.next_u64() % 20) as i64;
            }
            events.push(TraceEvent {
                seq,
                ts: base + Duration::seconds(elapsed),
                agent,
                payload,
            });
            seq
        };
        let orch = || AgentRef::orchestrator(text::ORCHESTRATOR);
        let steps = |p: &PlanDraft| -> Vec<PlanStep> {
            p.actions
                .iter()
                .enumerate()
                .map(|(index, a)| PlanStep {
                    index,
                    description: a.description.clone(),
                })
                .collect()
        };

        let mut starts: BTreeMap<(usize, usize), u64> = BTreeMap::new();
        let mut ops: BTreeMap<(usize, usize, usize), (String, u64)> = BTreeMap::new();
        let mut revisions: BTreeMap<usize, u64> = BTreeMap::new();
        let mut next_op = 1usize;
        let last_plan = self.plans.len() - 1;

        push(
            orch(),
            Payload::TaskReceived {
                query: self.query.clone(),
            },
            rng,
        );
        push(
            orch(),
            Payload::PlanCreated {
                actions: steps(&self.plans[0]),
            },
            rng,
        );
        for (pi, plan) in self.plans.iter().enumerate() {
            let runnable: Vec<usize> = (0..plan.actions.len())
                .filter(|&a| plan.actions[a].executed && !plan.actions[a].skipped)
                .collect();
            for (ri, &ai) in runnable.iter().enumerate() {
                let action = &plan.actions[ai];
                let s = push(
                    orch(),
                    Payload::ActionStarted {
                        plan_index: pi,
                        action_index: ai,
                    },
                    rng,
                );
                starts.insert((pi, ai), s);
                for (k, op) in action.ops.iter().enumerate() {
                    let op_id = format!("op-{next_op}");
                    next_op += 1;
                    let assigned = push(
                        AgentRef::worker(op.worker),
                        Payload::OperationAssigned {
                            plan_index: pi,
                            action_index: ai,
                            op_id: op_id.clone(),
                            instruction: op.instruction.clone(),
                        },
                        rng,
                    );
                    ops.insert((pi, ai, k), (op_id.clone(), assigned));
                    push(
                        AgentRef::worker(op.worker),
                        Payload::OperationResult {
                            op_id: op_id.clone(),
                            success: op.success,
                            content: op.content.clone(),
                            links: extract_links(&op.content),
                        },
                        rng,
                    );
                    let finished =
                        pi == last_plan && ri + 1 == runnable.len() && k + 1 == action.ops.len();
                    let (next_agent, instruction) = match action.ops.get(k + 1) {
                        Some(next) => (next.worker.to_string(), next.instruction.clone()),
                        None => (text::ORCHESTRATOR.to_string(), String::new()),
                    };
                    push(
                        orch(),
                        Payload::ProgressLedger(LedgerSnapshot {
                            op_id: Some(op_id),
                            is_request_satisfied: finished,
                            is_progress_being_made: op.progress,
                            is_in_loop: false,
                            next_agent,
                            instruction,
                            reason: if finished {
                                "The request is satisfied."
                            } else if op.progress {
                                "Progress is being made."
                            } else {
                                "No new information was obtained."
                            }
                            .to_string(),
                        }),
                        rng,
                    );
                }
            }
            if pi < last_plan {
                let r = push(
                    orch(),
                    Payload::PlanRevised {
                        reason: format!("{} {}", plan.failure, plan.update),
                        actions: steps(&self.plans[pi + 1]),
                    },
                    rng,
                );
                revisions.insert(pi, r);
            }
        }
        push(
            orch(),
            Payload::FinalAnswer {
                answer: text::FINAL_ANSWER.to_string(),
            },
            rng,
        );
        push(orch(), Payload::ActivityCompleted, rng);

        let mut entries: Vec<(u64, ManifestEntry)> = self
            .entries
            .iter()
            .map(|e| {
                let (seq, op_id) = match e.anchor {
                    Anchor::NextStart { plan, action } => (
                        starts
                            .range((plan, action + 1)..(plan + 1, 0))
                            .next()
                            .map(|(_, s)| *s)
                            .expect("a later action starts"),
                        None,
                    ),
                    Anchor::Op { plan, action, op } => {
                        let (id, seq) = &ops[&(plan, action, op)];
                        (*seq, Some(id.clone()))
                    }
                    Anchor::Revision(t) => (revisions[&t], None),
                };
                (
                    seq,
                    ManifestEntry {
                        kind: e.kind,
                        plan_index: e.plan_index,
                        action_index: e.action_index,
                        op_id,
                        embedded_reason: e.embedded_reason.clone(),
                    },
                )
            })
            .collect();
        entries.sort_by_key(|(seq, e)| (*seq, e.kind));
        (
            RawTrace::new(events, SourceFormat::Ctef),
            FailureManifest {
                entries: entries.into_iter().map(|(_, e)| e).collect(),
            },
        )
    }
}

fn clean_op(worker: &text::WorkerText, progress: bool, rng: &mut Prng) -> OpDraft {
    let instruction = rng.pick(worker.instructions).to_string();
    let content = if progress {
        rng.pick(text::SUCCESS_RESULTS)
    } else {
        rng.pick(text::NO_PROGRESS_RESULTS)
    };
    OpDraft {
        worker: worker.name,
        instruction,
        content: content.to_string(),
        success: true,
        progress,
    }
}

/// Injection order: plan-level first, then action-level, then op-level, so
/// the more constrained kinds pick their sites first.
const PLACEMENT_ORDER: [SignalKind; 4] = [
    SignalKind::ProblematicPlanning,
    SignalKind::ActionSkipping,
    SignalKind::IncorrectOperationAssignment,
    SignalKind::OperationCompletionFailure,
];

/// Generates a trace, its failure manifest and the expected analysis.
pub fn generate(cfg: &SynthConfig) -> Result<Synthesized, SynthError> {
    let mut rng = Prng::new(cfg.seed);
    let mut draft = Draft::new(cfg, &mut rng)?;
    for kind in PLACEMENT_ORDER {
        let requested: usize = cfg
            .injections
            .iter()
            .filter(|i| i.kind == kind)
            .map(|i| i.count)
            .sum();
        for placed in 0..requested {
            let mut sites = draft.sites(kind);
            if kind == SignalKind::ProblematicPlanning {
                // Never pick a pair that strands the remaining requests.
                let still = requested - placed - 1;
                sites.retain(|&site| {
                    let mut d = draft.clone();
                    d.inject_failure(kind, site).is_ok() && d.transition_capacity() >= still
                });
            }
            if sites.is_empty() {
                return Err(SynthError::InjectionOverflow {
                    kind,
                    requested,
                    placed,
                });
            }
            let site = *rng.pick(&sites);
            draft.inject_failure(kind, site)?;
        }
    }
    let truth = draft.truth();
    let (trace, manifest) = draft.render(&mut rng);
    Ok(Synthesized {
        trace,
        manifest,
        truth,
    })
}

impl fmt::Display for FailureManifest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            writeln!(
                f,
                "{} plan={} action={} op={} {}",
                e.kind,
                e.plan_index,
                e.action_index.map_or("-".to_string(), |a| a.to_string()),
                e.op_id.as_deref().unwrap_or("-"),
                e.embedded_reason
            )?;
        }
        Ok(())
    }
}
