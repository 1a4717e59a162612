use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub const FALLBACK_OP_TYPE: &str = "other";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpRule {
    pub op_type: String,
    /// A rule matches when any keyword occurs as a whole word (or word
    /// sequence) in the lowercased instruction.
    pub keywords: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentRules {
    pub name: String,
    pub rules: Vec<OpRule>,
}

/// Per-agent operation vocabularies. Rule order matters: first match wins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpTypeTable {
    pub agents: Vec<AgentRules>,
}

fn words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

fn rule_matches(rule: &OpRule, tokens: &[String]) -> bool {
    rule.keywords.iter().any(|kw| {
        let kw = words(kw);
        !kw.is_empty() && tokens.windows(kw.len()).any(|w| w == kw.as_slice())
    })
}

impl OpTypeTable {
    pub fn agent(&self, name: &str) -> Option<&AgentRules> {
        self.agents.iter().find(|a| a.name == name)
    }

    /// Classifies an instruction given to `agent`. The agent's own rules are
    /// tried first, then every other agent's rules in table order, so an
    /// instruction outside the agent's vocabulary still gets a meaningful
    /// type. Falls back to [`FALLBACK_OP_TYPE`].
    pub fn classify(&self, agent: &str, instruction: &str) -> String {
        let tokens = words(instruction);
        let own = self.agent(agent);
        let others = self.agents.iter().filter(|a| a.name != agent);
        own.into_iter()
            .chain(others)
            .flat_map(|a| a.rules.iter())
            .find(|r| rule_matches(r, &tokens))
            .map(|r| r.op_type.clone())
            .unwrap_or_else(|| FALLBACK_OP_TYPE.to_string())
    }

    /// Allowed op types per agent: the agent's own rule types plus the
    /// fallback.
    pub fn capabilities(&self) -> BTreeMap<String, BTreeSet<String>> {
        self.agents
            .iter()
            .map(|a| {
                let mut caps: BTreeSet<String> =
                    a.rules.iter().map(|r| r.op_type.clone()).collect();
                caps.insert(FALLBACK_OP_TYPE.to_string());
                (a.name.clone(), caps)
            })
            .collect()
    }
}

impl Default for OpTypeTable {
    fn default() -> Self {
        default_table()
    }
}

fn agent(name: &str, rules: &[(&str, &[&str])]) -> AgentRules {
    AgentRules {
        name: name.to_string(),
        rules: rules
            .iter()
            .map(|(op_type, kws)| OpRule {
                op_type: op_type.to_string(),
                keywords: kws.iter().map(|k| k.to_string()).collect(),
            })
            .collect(),
    }
}

/// Vocabulary for the Magentic-One cast.
pub fn default_table() -> OpTypeTable {
    OpTypeTable {
        agents: vec![
            agent(
                "WebSurfer",
                &[
                    (
                        "navigate",
                        &["navigate", "visit", "go to", "url", "browse", "website"],
                    ),
                    ("click", &["click", "press", "tap"]),
                    ("type", &["type", "enter", "input", "fill"]),
                    ("scroll", &["scroll", "page down", "page up"]),
                    ("read_page", &["read", "summarize", "extract", "look"]),
                    ("search", &["search", "google", "bing", "query", "find"]),
                ],
            ),
            agent(
                "FileSurfer",
                &[
                    ("open_file", &["open", "load"]),
                    ("read_section", &["read", "section", "view", "look"]),
                    ("list_dir", &["list", "directory", "folder", "ls"]),
                ],
            ),
            agent(
                "Coder",
                &[(
                    "write_code",
                    &[
                        "write",
                        "code",
                        "script",
                        "python",
                        "program",
                        "function",
                        "debug",
                        "implement",
                        "compute",
                        "calculate",
                    ],
                )],
            ),
            agent(
                "Executor",
                &[("run_code", &["run", "execute", "executing"])],
            ),
            agent(
                "Orchestrator",
                &[(
                    "instruct",
                    &["plan", "instruct", "assign", "ask", "delegate"],
                )],
            ),
        ],
    }
}
