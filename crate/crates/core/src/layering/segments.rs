use super::{LayeringError, Operation, ProgressSegment, SummaryPipe, SEGMENT_SUMMARY_BUDGET};
use crate::summarize::{Summarizer, SummaryRole};

/// Maximal runs of equal flags as `(start, end_inclusive, flag)`.
pub fn progress_runs(flags: &[bool]) -> Vec<(usize, usize, bool)> {
    let mut runs: Vec<(usize, usize, bool)> = Vec::new();
    for (i, &f) in flags.iter().enumerate() {
        match runs.last_mut() {
            Some(run) if run.2 == f => run.1 = i,
            _ => runs.push((i, i, f)),
        }
    }
    runs
}

/// Groups consecutive operations sharing a progress flag. Each segment's
/// summary condenses the result summaries of its operations.
pub fn segment_progress(
    ops: &[Operation],
    summarizer: &dyn Summarizer,
) -> Result<Vec<ProgressSegment>, LayeringError> {
    segment_with(ops, &mut SummaryPipe::new(summarizer))
}

pub(crate) fn segment_with(
    ops: &[Operation],
    pipe: &mut SummaryPipe,
) -> Result<Vec<ProgressSegment>, LayeringError> {
    let flags: Vec<bool> = ops.iter().map(|o| o.progress).collect();
    progress_runs(&flags)
        .into_iter()
        .map(|(start_op, end_op, progress)| {
            let text = ops[start_op..=end_op]
                .iter()
                .map(|o| o.result_summary.as_str())
                .filter(|s| !s.is_empty())
                .collect::<Vec<_>>()
                .join(" ");
            Ok(ProgressSegment {
                start_op,
                end_op,
                progress,
                summary: pipe.run(SummaryRole::Segment, &text, SEGMENT_SUMMARY_BUDGET)?,
            })
        })
        .collect()
}
