//! Layered diagnosis of centralized LLM multi-agent execution traces.
//!
//! A trace (CTEF JSONL, or a Magentic-One log via the adapter) is parsed into
//! a [`trace::RawTrace`], reconstructed by [`layering::build_case`] into plans,
//! actions and operations with statuses, progress segments and update links,
//! and scanned for failure signals. [`store`] persists cases; [`synth`]
//! generates traces with known, injected failures.

pub mod canonical;
pub mod ingest;
pub mod layering;
pub mod store;
pub mod summarize;
pub mod synth;
pub mod trace;

#[cfg(test)]
mod testutil;

pub use layering::{build_case, detect_signals, CaseAnalysis, DiagnosticSignal, SignalKind};
pub use summarize::{Deterministic, OpTypeTable, Summarizer};
pub use trace::{parse_ctef, RawTrace};
