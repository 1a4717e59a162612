//! Settings resolution: flags > environment > `atd.toml` > defaults.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;

use atd_core::layering::DEFAULT_STALL_THRESHOLD;
use atd_core::summarize::{default_table, OpTypeTable, RemoteConfig, SummarizerMode};

pub const CONFIG_FILE: &str = "atd.toml";
pub const DEFAULT_STORE: &str = "atd-store";
pub const DEFAULT_TIMEOUT_S: u64 = 30;

pub const ENV_STORE: &str = "ATD_STORE";
pub const ENV_BASE_URL: &str = "ATD_LLM_BASE_URL";
pub const ENV_MODEL: &str = "ATD_LLM_MODEL";
pub const ENV_KEY: &str = "ATD_LLM_KEY";
pub const ENV_STALL: &str = "ATD_STALL_L";

/// Contents of `atd.toml`. Every key is optional.
#[derive(Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub store: Option<PathBuf>,
    pub stall_threshold: Option<usize>,
    /// TOML or JSON op-type table replacing the built-in one.
    pub op_table: Option<PathBuf>,
    #[serde(default)]
    pub summarizer: FileSummarizer,
}

#[derive(Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FileSummarizer {
    pub mode: Option<SummarizerMode>,
    pub base_url: Option<String>,
    pub model: Option<String>,
    pub api_key: Option<String>,
    pub timeout_s: Option<u64>,
    /// Directory of `<role>.txt` prompt overrides.
    pub prompt_dir: Option<PathBuf>,
}

/// Values given on the command line.
#[derive(Debug, Default, Clone)]
pub struct Flags {
    pub store: Option<PathBuf>,
    pub summarizer: Option<SummarizerMode>,
    pub stall_threshold: Option<usize>,
    pub op_table: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub store_root: PathBuf,
    pub summarizer_mode: SummarizerMode,
    /// Present exactly when the mode is remote.
    pub remote: Option<RemoteConfig>,
    pub prompt_dir: Option<PathBuf>,
    pub stall_threshold: usize,
    pub op_table: Option<PathBuf>,
}

impl FileConfig {
    /// Reads `path`; a missing file is an empty config.
    pub fn load(path: &Path) -> Result<Self, String> {
        match std::fs::read_to_string(path) {
            Ok(text) => toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display())),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(format!("{}: {e}", path.display())),
        }
    }
}

impl CliConfig {
    pub fn resolve(
        flags: &Flags,
        env: impl Fn(&str) -> Option<String>,
        file: FileConfig,
    ) -> Result<Self, String> {
        let env_stall = match env(ENV_STALL) {
            Some(v) => Some(
                v.parse::<usize>()
                    .map_err(|_| format!("{ENV_STALL} must be a positive integer, got `{v}`"))?,
            ),
            None => None,
        };
        let stall_threshold = flags
            .stall_threshold
            .or(env_stall)
            .or(file.stall_threshold)
            .unwrap_or(DEFAULT_STALL_THRESHOLD);
        if stall_threshold < 1 {
            return Err("stall threshold must be at least 1".into());
        }
        let s = file.summarizer;
        let summarizer_mode = flags.summarizer.or(s.mode).unwrap_or_default();
        let remote = match summarizer_mode {
            SummarizerMode::Deterministic => None,
            SummarizerMode::Remote => {
                let base_url = env(ENV_BASE_URL).or(s.base_url);
                let api_key = env(ENV_KEY).or(s.api_key);
                let (Some(base_url), Some(api_key)) = (base_url, api_key) else {
                    return Err(format!(
                        "remote summarizer needs an endpoint and a key ({ENV_BASE_URL}, {ENV_KEY} or [summarizer] in {CONFIG_FILE})"
                    ));
                };
                Some(RemoteConfig {
                    base_url,
                    model: env(ENV_MODEL)
                        .or(s.model)
                        .unwrap_or_else(|| "gpt-4o-mini".into()),
                    api_key,
                    timeout: Duration::from_secs(s.timeout_s.unwrap_or(DEFAULT_TIMEOUT_S)),
                })
            }
        };
        Ok(Self {
            store_root: flags
                .store
                .clone()
                .or_else(|| env(ENV_STORE).map(PathBuf::from))
                .or(file.store)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_STORE)),
            summarizer_mode,
            remote,
            prompt_dir: s.prompt_dir,
            stall_threshold,
            op_table: flags.op_table.clone().or(file.op_table),
        })
    }

    /// The configured op-type table, or the built-in one.
    pub fn table(&self) -> Result<OpTypeTable, String> {
        let Some(path) = &self.op_table else {
            return Ok(default_table());
        };
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| format!("{}: {e}", path.display()))
    }
}
