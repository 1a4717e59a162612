//! Summaries and operation-type classification.
//!
//! Every human-readable string in an analysis goes through a [`Summarizer`].
//! The deterministic implementation is extractive (first sentence, then a
//! word-boundary truncation); the remote implementation calls an
//! OpenAI-compatible chat-completions endpoint with one prompt per role.

mod cache;
mod classify;
mod remote;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{Cached, MemoryCache, SummaryCache};
pub use classify::{default_table, AgentRules, OpRule, OpTypeTable, FALLBACK_OP_TYPE};
pub use remote::{prompt_template, RemoteConfig, RemoteSummarizer, WithFallback};

pub const MIN_BUDGET: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryRole {
    Plan,
    Action,
    OperationInstruction,
    OperationResult,
    Segment,
    Transition,
}

impl SummaryRole {
    pub const ALL: [SummaryRole; 6] = [
        SummaryRole::Plan,
        SummaryRole::Action,
        SummaryRole::OperationInstruction,
        SummaryRole::OperationResult,
        SummaryRole::Segment,
        SummaryRole::Transition,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SummaryRole::Plan => "plan",
            SummaryRole::Action => "action",
            SummaryRole::OperationInstruction => "operation_instruction",
            SummaryRole::OperationResult => "operation_result",
            SummaryRole::Segment => "segment",
            SummaryRole::Transition => "transition",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SummarizerMode {
    #[default]
    Deterministic,
    Remote,
}

impl SummarizerMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SummarizerMode::Deterministic => "deterministic",
            SummarizerMode::Remote => "remote",
        }
    }
}

impl fmt::Display for SummarizerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SummarizerMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "deterministic" => Ok(SummarizerMode::Deterministic),
            "remote" => Ok(SummarizerMode::Remote),
            other => Err(format!("unknown summarizer mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SummaryRequest {
    role: SummaryRole,
    content: String,
    budget: usize,
}

impl SummaryRequest {
    pub fn new(
        role: SummaryRole,
        content: impl Into<String>,
        budget: usize,
    ) -> Result<Self, SummarizeError> {
        if budget < MIN_BUDGET {
            return Err(SummarizeError::BudgetTooSmall(budget));
        }
        Ok(Self {
            role,
            content: content.into(),
            budget,
        })
    }

    pub fn role(&self) -> SummaryRole {
        self.role
    }

    pub fn content(&self) -> &str {
        &self.content
    }

    pub fn budget(&self) -> usize {
        self.budget
    }
}

/// Where a summary text came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Deterministic,
    Remote,
    /// Remote mode was requested but the endpoint failed.
    Fallback,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Deterministic => "deterministic",
            Provenance::Remote => "remote",
            Provenance::Fallback => "fallback",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub text: String,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SummarizeError {
    #[error("summary budget {0} is below the minimum of {MIN_BUDGET}")]
    BudgetTooSmall(usize),
    #[error("remote summarizer unavailable: {0}")]
    RemoteUnavailable(String),
}

/// Pluggable summarization backend. Implementations must tolerate concurrent
/// calls.
pub trait Summarizer: Send + Sync {
    fn mode(&self) -> SummarizerMode;

    fn summarize(&self, req: &SummaryRequest) -> Result<Summary, SummarizeError>;
}

impl<S: Summarizer + ?Sized> Summarizer for &S {
    fn mode(&self) -> SummarizerMode {
        (**self).mode()
    }

    fn summarize(&self, req: &SummaryRequest) -> Result<Summary, SummarizeError> {
        (**self).summarize(req)
    }
}

impl<S: Summarizer + ?Sized> Summarizer for Box<S> {
    fn mode(&self) -> SummarizerMode {
        (**self).mode()
    }

    fn summarize(&self, req: &SummaryRequest) -> Result<Summary, SummarizeError> {
        (**self).summarize(req)
    }
}

impl<S: Summarizer + ?Sized> Summarizer for std::sync::Arc<S> {
    fn mode(&self) -> SummarizerMode {
        (**self).mode()
    }

    fn summarize(&self, req: &SummaryRequest) -> Result<Summary, SummarizeError> {
        (**self).summarize(req)
    }
}

/// Runs `s` and enforces the length bound on whatever comes back.
pub fn summarize(req: &SummaryRequest, s: &dyn Summarizer) -> Result<Summary, SummarizeError> {
    let mut out = s.summarize(req)?;
    if out.text.chars().count() > req.budget {
        out.text = truncate_to_budget(&out.text, req.budget);
    }
    Ok(out)
}

/// Extractive summarizer: first sentence, truncated to the budget.
#[derive(Debug, Clone, Copy, Default)]
pub struct Deterministic;

impl Summarizer for Deterministic {
    fn mode(&self) -> SummarizerMode {
        SummarizerMode::Deterministic
    }

    fn summarize(&self, req: &SummaryRequest) -> Result<Summary, SummarizeError> {
        Ok(Summary {
            text: extractive(req.content(), req.budget()),
            provenance: Provenance::Deterministic,
        })
    }
}

pub fn extractive(content: &str, budget: usize) -> String {
    truncate_to_budget(&first_sentence(content), budget)
}

/// Whitespace-collapsed text up to and including the first `.`, `!` or `?`
/// that is followed by whitespace or the end of the text.
pub fn first_sentence(text: &str) -> String {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ");
    let mut chars = collapsed.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            match chars.peek() {
                None => return collapsed,
                Some((_, ' ')) => return collapsed[..i + c.len_utf8()].to_string(),
                Some(_) => {}
            }
        }
    }
    collapsed
}

/// Cuts `text` at the last word boundary within `budget - 1` characters and
/// appends `…`. Text already within budget is returned unchanged.
pub fn truncate_to_budget(text: &str, budget: usize) -> String {
    if text.chars().count() <= budget {
        return text.to_string();
    }
    let limit = budget.saturating_sub(1);
    let cut = text
        .char_indices()
        .nth(limit)
        .map(|(i, _)| i)
        .unwrap_or(text.len());
    let head = &text[..cut];
    let at_boundary = text[cut..].starts_with(char::is_whitespace);
    let kept = if at_boundary {
        head
    } else {
        match head.rfind(char::is_whitespace) {
            Some(ws) => &head[..ws],
            None => head,
        }
    };
    let kept = kept.trim_end();
    let kept = if kept.is_empty() { head } else { kept };
    format!("{kept}…")
}
