use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde_json::{json, Value};

use super::{
    truncate_to_budget, Deterministic, Provenance, SummarizeError, Summarizer, SummarizerMode,
    Summary, SummaryRequest, SummaryRole,
};

const PLAN_PROMPT: &str = include_str!("../../prompts/plan.txt");
const ACTION_PROMPT: &str = include_str!("../../prompts/action.txt");
const OPERATION_INSTRUCTION_PROMPT: &str = include_str!("../../prompts/operation_instruction.txt");
const OPERATION_RESULT_PROMPT: &str = include_str!("../../prompts/operation_result.txt");
const SEGMENT_PROMPT: &str = include_str!("../../prompts/segment.txt");
const TRANSITION_PROMPT: &str = include_str!("../../prompts/transition.txt");

/// Built-in system prompt for a summary role.
pub fn prompt_template(role: SummaryRole) -> &'static str {
    match role {
        SummaryRole::Plan => PLAN_PROMPT,
        SummaryRole::Action => ACTION_PROMPT,
        SummaryRole::OperationInstruction => OPERATION_INSTRUCTION_PROMPT,
        SummaryRole::OperationResult => OPERATION_RESULT_PROMPT,
        SummaryRole::Segment => SEGMENT_PROMPT,
        SummaryRole::Transition => TRANSITION_PROMPT,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemoteConfig {
    /// Base URL of an OpenAI-compatible API, e.g. `https://api.openai.com/v1`.
    pub base_url: String,
    pub model: String,
    pub api_key: String,
    pub timeout: Duration,
}

pub struct RemoteSummarizer {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
    templates: Vec<(SummaryRole, String)>,
}

impl RemoteSummarizer {
    pub fn new(config: RemoteConfig) -> Result<Self, SummarizeError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| SummarizeError::RemoteUnavailable(e.to_string()))?;
        let templates = SummaryRole::ALL
            .iter()
            .map(|r| (*r, prompt_template(*r).to_string()))
            .collect();
        Ok(Self {
            config,
            client,
            templates,
        })
    }

    /// Replaces built-in templates with `<dir>/<role>.txt` where present.
    pub fn with_prompt_dir(mut self, dir: &Path) -> std::io::Result<Self> {
        for (role, text) in &mut self.templates {
            let path = dir.join(format!("{}.txt", role.as_str()));
            if path.is_file() {
                *text = std::fs::read_to_string(path)?;
            }
        }
        Ok(self)
    }

    fn template(&self, role: SummaryRole) -> &str {
        self.templates
            .iter()
            .find(|(r, _)| *r == role)
            .map(|(_, t)| t.as_str())
            .unwrap_or_else(|| prompt_template(role))
    }

    fn call(&self, req: &SummaryRequest) -> Result<String, String> {
        let url = format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        );
        let body = json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": self.template(req.role())},
                {"role": "user", "content": format!(
                    "Character budget: {}\n\n{}", req.budget(), req.content()
                )},
            ],
        });
        let resp = self
            .client
            .post(url)
            .bearer_auth(&self.config.api_key)
            .json(&body)
            .send()
            .map_err(|e| e.to_string())?;
        let status = resp.status();
        if !status.is_success() {
            return Err(format!("endpoint returned {status}"));
        }
        let v: Value = resp.json().map_err(|e| e.to_string())?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(|s| s.trim().to_string())
            .ok_or_else(|| "response has no choices[0].message.content".to_string())
    }
}

impl Summarizer for RemoteSummarizer {
    fn mode(&self) -> SummarizerMode {
        SummarizerMode::Remote
    }

    fn summarize(&self, req: &SummaryRequest) -> Result<Summary, SummarizeError> {
        if req.content().trim().is_empty() {
            return Ok(Summary {
                text: String::new(),
                provenance: Provenance::Remote,
            });
        }
        let text = self.call(req).map_err(SummarizeError::RemoteUnavailable)?;
        Ok(Summary {
            text: truncate_to_budget(&text, req.budget()),
            provenance: Provenance::Remote,
        })
    }
}

/// Falls back to the deterministic summarizer whenever the inner one reports
/// [`SummarizeError::RemoteUnavailable`]; such summaries carry
/// [`Provenance::Fallback`].
pub struct WithFallback<S> {
    inner: S,
    fallbacks: AtomicUsize,
}

impl<S: Summarizer> WithFallback<S> {
    pub fn new(inner: S) -> Self {
        Self {
            inner,
            fallbacks: AtomicUsize::new(0),
        }
    }

    pub fn fallbacks(&self) -> usize {
        self.fallbacks.load(Ordering::Relaxed)
    }
}

impl<S: Summarizer> Summarizer for WithFallback<S> {
    fn mode(&self) -> SummarizerMode {
        self.inner.mode()
    }

    fn summarize(&self, req: &SummaryRequest) -> Result<Summary, SummarizeError> {
        match self.inner.summarize(req) {
            Err(SummarizeError::RemoteUnavailable(_)) => {
                self.fallbacks.fetch_add(1, Ordering::Relaxed);
                let mut s = Deterministic.summarize(req)?;
                s.provenance = Provenance::Fallback;
                Ok(s)
            }
            other => other,
        }
    }
}
