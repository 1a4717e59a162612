//! Parse → validate → analyze → persist, shared by the CLI and the service.

use std::path::Path;

use thiserror::Error;

use crate::layering::{build_case, LayeringError};
use crate::store::{
    case_dir, is_valid_case_id, save_case, CaseDocuments, CaseRecord, DirCache, StoreError,
    META_FILE,
};
use crate::summarize::{Cached, OpTypeTable, Summarizer};
use crate::synth::FailureManifest;
use crate::trace::{
    adapt_magentic, parse_ctef, validate, AdaptError, ParseError, RawTrace, SourceFormat, Violation,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error(transparent)]
    Parse(ParseError),
    #[error(transparent)]
    Adapt(#[from] AdaptError),
    #[error("trace violates {} invariant(s): {}", .0.len(), .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Analysis(#[from] LayeringError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl From<ParseError> for IngestError {
    fn from(e: ParseError) -> Self {
        match e {
            ParseError::Violations(v) => IngestError::Invalid(v),
            other => IngestError::Parse(other),
        }
    }
}

impl IngestError {
    /// True for errors caused by the input bytes rather than the environment.
    pub fn is_input_error(&self) -> bool {
        match self {
            IngestError::Parse(_) | IngestError::Adapt(_) | IngestError::Invalid(_) => true,
            IngestError::Analysis(e) => !matches!(e, LayeringError::Summarize(_)),
            IngestError::Store(_) => false,
        }
    }
}

/// Parses input in either supported format into a validated trace.
pub fn parse_trace(bytes: &[u8], format: SourceFormat) -> Result<RawTrace, IngestError> {
    match format {
        SourceFormat::Ctef => Ok(parse_ctef(bytes)?),
        SourceFormat::Magentic => {
            let trace = adapt_magentic(bytes)?;
            let violations = validate(&trace);
            if violations.is_empty() {
                return Ok(trace);
            }
            // Each non-blank input line became the event with the same position.
            let lines: Vec<usize> = bytes
                .split(|b| *b == b'\n')
                .enumerate()
                .filter(|(_, l)| !l.iter().all(u8::is_ascii_whitespace))
                .map(|(i, _)| i + 1)
                .collect();
            Err(IngestError::Invalid(
                violations
                    .into_iter()
                    .map(|v| v.locate(|seq| lines.get(seq as usize).copied()))
                    .collect(),
            ))
        }
    }
}

pub struct IngestOptions<'a> {
    pub summarizer: &'a dyn Summarizer,
    pub table: &'a OpTypeTable,
    /// Persist summaries in the case's cache directory (worthwhile for
    /// remote summarizers only).
    pub cache_summaries: bool,
    pub manifest: Option<FailureManifest>,
}

/// Analyzes `bytes` and stores the result as case `case_id`.
pub fn ingest(
    root: &Path,
    case_id: &str,
    format: SourceFormat,
    bytes: &[u8],
    opts: IngestOptions<'_>,
) -> Result<CaseRecord, IngestError> {
    if !is_valid_case_id(case_id) {
        return Err(StoreError::InvalidCaseId(case_id.to_string()).into());
    }
    if case_dir(root, case_id).join(META_FILE).exists() {
        return Err(StoreError::DuplicateCase(case_id.to_string()).into());
    }
    let trace = parse_trace(bytes, format)?;
    let analysis = if opts.cache_summaries {
        let cached = Cached::new(opts.summarizer, DirCache::for_case(root, case_id)?);
        build_case(case_id, &trace, &cached, opts.table)?
    } else {
        build_case(case_id, &trace, opts.summarizer, opts.table)?
    };
    let record = CaseRecord::new(case_id, format);
    Ok(save_case(
        root,
        &record,
        &CaseDocuments {
            trace,
            analysis: Some(analysis),
            manifest: opts.manifest,
        },
    )?)
}
