//! Static Markdown projection of an analyzed case: a plans table, one section
//! per plan with per-action operation lists, transitions, and signals.

use std::fmt::Write;

use atd_core::layering::{Action, ActionStatus, OverallStatus, ProgressSegment};
use atd_core::trace::{Payload, RawTrace};
use atd_core::{CaseAnalysis, DiagnosticSignal};

/// Characters of raw result content shown per operation.
pub const RESULT_EXCERPT_CHARS: usize = 200;

pub fn glyph(status: ActionStatus) -> &'static str {
    match status {
        ActionStatus::Completed => "✔",
        ActionStatus::Failed => "✘",
        ActionStatus::NotStarted => "○",
    }
}

/// `[====][--]`: one bracket per segment, `=` per progress op, `-` otherwise.
pub fn segment_bar(segments: &[ProgressSegment]) -> String {
    segments
        .iter()
        .map(|s| {
            let c = if s.progress { "=" } else { "-" };
            format!("[{}]", c.repeat(s.len()))
        })
        .collect()
}

fn cell(s: &str) -> String {
    s.replace('|', "\\|").replace(['\n', '\r'], " ")
}

fn quote(s: &str) -> String {
    s.lines().collect::<Vec<_>>().join("\n> ")
}

fn excerpt(s: &str) -> String {
    let flat = s.split_whitespace().collect::<Vec<_>>().join(" ");
    match flat.char_indices().nth(RESULT_EXCERPT_CHARS) {
        Some((cut, _)) => format!("{}…", &flat[..cut]),
        None => flat,
    }
}

fn agents(action: &Action) -> String {
    action
        .agents
        .iter()
        .map(|a| a.name.as_str())
        .collect::<Vec<_>>()
        .join(", ")
}

fn result_content<'a>(trace: &'a RawTrace, op_id: &str) -> &'a str {
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

pub fn render(case: &CaseAnalysis, trace: &RawTrace, signals: &[DiagnosticSignal]) -> String {
    let mut out = String::new();
    let w = &mut out;
    let overall = match case.overall_status {
        OverallStatus::Completed => "✔ completed",
        OverallStatus::Failed => "✘ failed",
    };
    let _ = writeln!(w, "# Diagnosis report: {}\n", case.case_id);
    let _ = writeln!(w, "- **Query:** {}", cell(&case.query));
    let _ = writeln!(w, "- **Outcome:** {overall}");
    if let Some(answer) = &case.final_answer {
        let _ = writeln!(w, "- **Final answer:** {}", cell(answer));
    }
    let names: Vec<&str> = case.agents.iter().map(|a| a.name.as_str()).collect();
    let _ = writeln!(w, "- **Agents:** {}", names.join(", "));
    let _ = writeln!(
        w,
        "- **Plans:** {}, **actions:** {}, **operations:** {}",
        case.plans.len(),
        case.action_count(),
        case.operations().count()
    );
    let _ = writeln!(w, "- **Summaries:** {}\n", case.summary_provenance.as_str());
    let _ = writeln!(
        w,
        "Legend: ✔ completed · ✘ failed · ○ not started · `[==]` progress · `[--]` no progress\n"
    );

    let _ = writeln!(w, "| Plan | Actions | Status | Agents | Progress |");
    let _ = writeln!(w, "|---|---|---|---|---|");
    for plan in &case.plans {
        for action in &plan.actions {
            let _ = writeln!(
                w,
                "| {} | {}.{} {} | {} | {} | {} |",
                plan.index + 1,
                plan.index + 1,
                action.index + 1,
                cell(&action.description),
                glyph(action.status),
                agents(action),
                segment_bar(&action.segments)
            );
        }
    }

    for plan in &case.plans {
        let _ = writeln!(w, "\n## Plan {}\n", plan.index + 1);
        if !plan.summary.is_empty() {
            let _ = writeln!(w, "{}\n", plan.summary);
        }
        for action in &plan.actions {
            let _ = writeln!(
                w,
                "### {} Action {}.{}: {}\n",
                glyph(action.status),
                plan.index + 1,
                action.index + 1,
                cell(&action.description)
            );
            let _ = writeln!(w, "- Status: {}", action.status.as_str());
            if !action.summary.is_empty() {
                let _ = writeln!(w, "- Summary: {}", cell(&action.summary));
            }
            if !action.agents.is_empty() {
                let _ = writeln!(w, "- Agents: {}", agents(action));
            }
            if let Some(span) = &action.span {
                let _ = writeln!(w, "- Duration: {:.1} s", span.duration_s);
            }
            if let Some(l) = action.update_link {
                let _ = writeln!(
                    w,
                    "- Revised as: Action {}.{}",
                    l.to_plan + 1,
                    l.to_action + 1
                );
            }
            if let Some(l) = action.carried_to {
                let _ = writeln!(
                    w,
                    "- Carried to: Action {}.{}",
                    l.to_plan + 1,
                    l.to_action + 1
                );
            }
            if !action.segments.is_empty() {
                let _ = writeln!(w, "- Progress: `{}`", segment_bar(&action.segments));
            }
            for (si, seg) in action.segments.iter().enumerate() {
                let _ = writeln!(
                    w,
                    "\n#### Segment {} ({})\n",
                    si + 1,
                    if seg.progress {
                        "progress"
                    } else {
                        "no progress"
                    }
                );
                if !seg.summary.is_empty() {
                    let _ = writeln!(w, "{}\n", cell(&seg.summary));
                }
                for (k, op) in action.operations[seg.start_op..=seg.end_op]
                    .iter()
                    .enumerate()
                {
                    let _ = writeln!(
                        w,
                        "{}. **{}** by {} (`{}`) {} {}",
                        seg.start_op + k + 1,
                        op.op_type,
                        op.agent.name,
                        op.op_id,
                        if op.success { "✔" } else { "✘" },
                        if op.progress {
                            "progress"
                        } else {
                            "no progress"
                        }
                    );
                    let _ = writeln!(w, "   - Instruction: {}", cell(&op.instruction));
                    let content = result_content(trace, &op.op_id);
                    if !content.is_empty() {
                        let _ = writeln!(w, "   - Result: {}", excerpt(content));
                    }
                    for link in &op.links {
                        let _ = writeln!(w, "   - Link: <{link}>");
                    }
                }
            }
            let _ = writeln!(w);
        }
        if let Some(t) = case.transitions.iter().find(|t| t.from_plan == plan.index) {
            let _ = writeln!(w, "> **Plan {} → Plan {}**", t.from_plan + 1, t.to_plan + 1);
            let _ = writeln!(w, ">");
            let _ = writeln!(w, "> Failure reason: {}", quote(&t.failure_reason));
            let _ = writeln!(w, ">");
            let _ = writeln!(w, "> Update rationale: {}", quote(&t.update_rationale));
        }
    }

    let _ = writeln!(w, "\n## Diagnostic signals\n");
    if signals.is_empty() {
        let _ = writeln!(w, "None detected.");
    }
    for s in signals {
        let mut at = format!("plan {}", s.location.plan_index + 1);
        if let Some(a) = s.location.action_index {
            let _ = write!(at, ", action {}", a + 1);
        }
        if let Some(op) = &s.location.op_id {
            let _ = write!(at, ", operation `{op}`");
        }
        let evidence: Vec<String> = s.evidence.iter().map(u64::to_string).collect();
        let _ = writeln!(
            w,
            "- **{}** at {at}: {} (evidence seq {})",
            s.kind,
            cell(&s.detail),
            evidence.join(", ")
        );
    }
    out
}
