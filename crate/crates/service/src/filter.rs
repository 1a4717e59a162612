//! Query-string parsing for the operation list.

use serde::Serialize;

use atd_core::layering::{ActionStatus, Operation};

pub const DEFAULT_PAGE_SIZE: usize = 100;
pub const MAX_PAGE_SIZE: usize = 500;

/// The predicate part of a query, echoed back in responses.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Filters {
    pub agent: Option<String>,
    /// `completed` keeps successful operations, `failed` unsuccessful ones;
    /// no operation is `not_started`.
    pub status: Option<ActionStatus>,
    pub q: Option<String>,
    pub progress: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterQuery {
    pub filters: Filters,
    /// 1-based.
    pub page: usize,
    pub page_size: usize,
}

impl Default for FilterQuery {
    fn default() -> Self {
        Self {
            filters: Filters::default(),
            page: 1,
            page_size: DEFAULT_PAGE_SIZE,
        }
    }
}

impl FilterQuery {
    /// Parses a raw query string. Unknown, repeated or malformed parameters
    /// are errors.
    pub fn parse(raw: Option<&str>) -> Result<Self, String> {
        let mut out = FilterQuery::default();
        let mut seen = Vec::new();
        for (k, v) in form_urlencoded::parse(raw.unwrap_or("").as_bytes()) {
            if seen.contains(&k) {
                return Err(format!("parameter `{k}` given more than once"));
            }
            let f = &mut out.filters;
            match k.as_ref() {
                "agent" => f.agent = Some(v.to_string()),
                "status" => f.status = Some(v.parse()?),
                "q" => f.q = Some(v.to_string()),
                "progress" => {
                    f.progress = Some(match v.as_ref() {
                        "true" => true,
                        "false" => false,
                        _ => return Err(format!("progress must be true or false, got `{v}`")),
                    })
                }
                "page" => {
                    out.page = v
                        .parse()
                        .ok()
                        .filter(|p| *p >= 1)
                        .ok_or_else(|| format!("page must be a positive integer, got `{v}`"))?
                }
                "page_size" => {
                    out.page_size = v
                        .parse()
                        .ok()
                        .filter(|p| (1..=MAX_PAGE_SIZE).contains(p))
                        .ok_or_else(|| {
                            format!("page_size must be in 1..={MAX_PAGE_SIZE}, got `{v}`")
                        })?
                }
                other => return Err(format!("unknown parameter `{other}`")),
            }
            seen.push(k);
        }
        Ok(out)
    }

    /// `result` is the operation's full result text.
    pub fn matches(&self, op: &Operation, result: &str) -> bool {
        let f = &self.filters;
        f.agent.as_ref().is_none_or(|a| *a == op.agent.name)
            && f.status.is_none_or(|s| match s {
                ActionStatus::Completed => op.success,
                ActionStatus::Failed => !op.success,
                ActionStatus::NotStarted => false,
            })
            && f.progress.is_none_or(|p| p == op.progress)
            && f.q.as_ref().is_none_or(|q| {
                let q = q.to_lowercase();
                op.instruction.to_lowercase().contains(&q) || result.to_lowercase().contains(&q)
            })
    }
}
