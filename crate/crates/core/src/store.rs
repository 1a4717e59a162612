//! Filesystem case store.
//!
//! ```text
//! <root>/cases/<case_id>/
//!     trace.jsonl      CTEF
//!     analysis.json    canonical CaseAnalysis
//!     manifest.json    canonical FailureManifest (synthetic cases only)
//!     meta.json        {case_id, created_at, status, source_format}
//!     cache/           summary cache, one file per key
//! ```
//!
//! Every file is written to a temporary sibling and renamed into place, and
//! `meta.json` is written last, so a case directory without it is debris
//! from an interrupted save and is ignored.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use chrono::{DateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::to_canonical_bytes;
use crate::layering::CaseAnalysis;
use crate::summarize::{Summary, SummaryCache};
use crate::synth::FailureManifest;
use crate::trace::{parse_ctef, RawTrace, SourceFormat};

pub const TRACE_FILE: &str = "trace.jsonl";
pub const ANALYSIS_FILE: &str = "analysis.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const META_FILE: &str = "meta.json";
pub const CACHE_DIR: &str = "cache";

static CASE_ID: LazyLock<Regex> = LazyLock::new(|| Regex::new("^[a-z0-9-]{1,64}$").unwrap());

pub fn is_valid_case_id(id: &str) -> bool {
    CASE_ID.is_match(id)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseStatus {
    Ingested,
    Analyzed,
}

/// Contents of `meta.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Meta {
    case_id: String,
    created_at: DateTime<Utc>,
    status: CaseStatus,
    source_format: SourceFormat,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: String,
    pub created_at: DateTime<Utc>,
    pub status: CaseStatus,
    pub source_format: SourceFormat,
    /// Paths relative to the case directory.
    pub trace_path: String,
    pub analysis_path: Option<String>,
    pub manifest_path: Option<String>,
}

impl CaseRecord {
    /// A record for a case about to be saved.
    pub fn new(case_id: impl Into<String>, source_format: SourceFormat) -> Self {
        Self {
            case_id: case_id.into(),
            created_at: Utc::now(),
            status: CaseStatus::Ingested,
            source_format,
            trace_path: TRACE_FILE.to_string(),
            analysis_path: None,
            manifest_path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseDocuments {
    pub trace: RawTrace,
    pub analysis: Option<CaseAnalysis>,
    pub manifest: Option<FailureManifest>,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("case `{0}` already exists")]
    DuplicateCase(String),
    #[error("case `{0}` not found")]
    NotFound(String),
    #[error("invalid case id `{0}` (expected 1-64 characters of a-z, 0-9 and -)")]
    InvalidCaseId(String),
    #[error("I/O failure at {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("corrupt document {path}: {detail}")]
    CorruptDocument { path: PathBuf, detail: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::IoFailure {
        path: path.to_path_buf(),
        source,
    }
}

fn corrupt(path: &Path, detail: impl ToString) -> StoreError {
    StoreError::CorruptDocument {
        path: path.to_path_buf(),
        detail: detail.to_string(),
    }
}

pub fn cases_dir(root: &Path) -> PathBuf {
    root.join("cases")
}

pub fn case_dir(root: &Path, case_id: &str) -> PathBuf {
    cases_dir(root).join(case_id)
}

/// Writes `bytes` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::Builder::new()
        .prefix(".tmp-")
        .tempfile_in(dir)
        .map_err(io_err(path))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| io_err(path)(e.error))?;
    Ok(())
}

fn canonical<T: Serialize>(path: &Path, value: &T) -> Result<Vec<u8>, StoreError> {
    to_canonical_bytes(value).map_err(|e| corrupt(path, e))
}

/// Persists a new case. Fails with `DuplicateCase` if a complete case with
/// the same id exists.
pub fn save_case(
    root: &Path,
    record: &CaseRecord,
    docs: &CaseDocuments,
) -> Result<CaseRecord, StoreError> {
    if !is_valid_case_id(&record.case_id) {
        return Err(StoreError::InvalidCaseId(record.case_id.clone()));
    }
    let dir = case_dir(root, &record.case_id);
    if dir.join(META_FILE).exists() {
        return Err(StoreError::DuplicateCase(record.case_id.clone()));
    }
    fs::create_dir_all(dir.join(CACHE_DIR)).map_err(io_err(&dir))?;

    let mut out = record.clone();
    out.trace_path = TRACE_FILE.to_string();
    write_atomic(&dir.join(TRACE_FILE), docs.trace.to_ctef().as_bytes())?;
    out.analysis_path = None;
    out.status = CaseStatus::Ingested;
    if let Some(analysis) = &docs.analysis {
        let path = dir.join(ANALYSIS_FILE);
        write_atomic(&path, &canonical(&path, analysis)?)?;
        out.analysis_path = Some(ANALYSIS_FILE.to_string());
        out.status = CaseStatus::Analyzed;
    }
    out.manifest_path = None;
    if let Some(manifest) = &docs.manifest {
        let path = dir.join(MANIFEST_FILE);
        write_atomic(&path, &canonical(&path, manifest)?)?;
        out.manifest_path = Some(MANIFEST_FILE.to_string());
    }
    let meta = Meta {
        case_id: out.case_id.clone(),
        created_at: out.created_at,
        status: out.status,
        source_format: out.source_format,
    };
    let meta_path = dir.join(META_FILE);
    write_atomic(&meta_path, &canonical(&meta_path, &meta)?)?;
    Ok(out)
}

fn read_record(dir: &Path) -> Result<CaseRecord, StoreError> {
    let path = dir.join(META_FILE);
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    let meta: Meta = serde_json::from_slice(&bytes).map_err(|e| corrupt(&path, e))?;
    let present = |f: &str| dir.join(f).is_file().then(|| f.to_string());
    Ok(CaseRecord {
        case_id: meta.case_id,
        created_at: meta.created_at,
        status: meta.status,
        source_format: meta.source_format,
        trace_path: TRACE_FILE.to_string(),
        analysis_path: present(ANALYSIS_FILE),
        manifest_path: present(MANIFEST_FILE),
    })
}

/// The record for one case, without reading its documents.
pub fn case_record(root: &Path, case_id: &str) -> Result<CaseRecord, StoreError> {
    let dir = case_dir(root, case_id);
    if !is_valid_case_id(case_id) || !dir.join(META_FILE).is_file() {
        return Err(StoreError::NotFound(case_id.to_string()));
    }
    read_record(&dir)
}

/// Loads and re-validates a case: the trace must parse and validate, and the
/// analysis must satisfy its structural invariants.
pub fn load_case(root: &Path, case_id: &str) -> Result<(CaseRecord, CaseDocuments), StoreError> {
    let record = case_record(root, case_id)?;
    let dir = case_dir(root, case_id);

    let trace_path = dir.join(TRACE_FILE);
    let bytes = fs::read(&trace_path).map_err(io_err(&trace_path))?;
    let trace = parse_ctef(&bytes).map_err(|e| corrupt(&trace_path, e))?;

    let analysis = match &record.analysis_path {
        Some(f) => {
            let path = dir.join(f);
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            let a: CaseAnalysis = serde_json::from_slice(&bytes).map_err(|e| corrupt(&path, e))?;
            a.check_invariants().map_err(|e| corrupt(&path, e))?;
            if a.case_id != case_id {
                return Err(corrupt(&path, format!("belongs to case `{}`", a.case_id)));
            }
            Some(a)
        }
        None if record.status == CaseStatus::Analyzed => {
            return Err(corrupt(&dir.join(ANALYSIS_FILE), "missing"));
        }
        None => None,
    };
    let manifest = match &record.manifest_path {
        Some(f) => {
            let path = dir.join(f);
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            Some(serde_json::from_slice(&bytes).map_err(|e| corrupt(&path, e))?)
        }
        None => None,
    };
    Ok((
        record,
        CaseDocuments {
            trace,
            analysis,
            manifest,
        },
    ))
}

/// All complete cases, newest first. Stray files and directories without a
/// readable `meta.json` are skipped.
pub fn list_cases(root: &Path) -> Result<Vec<CaseRecord>, StoreError> {
    let dir = cases_dir(root);
    let entries = match fs::read_dir(&dir) {
        Ok(e) => e,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(&dir)(e)),
    };
    let mut out = Vec::new();
    for entry in entries {
        let entry = entry.map_err(io_err(&dir))?;
        let path = entry.path();
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        if !path.is_dir() || !is_valid_case_id(name) {
            continue;
        }
        if let Ok(record) = read_record(&path) {
            if record.case_id == name {
                out.push(record);
            }
        }
    }
    out.sort_by(|a, b| {
        b.created_at
            .cmp(&a.created_at)
            .then_with(|| a.case_id.cmp(&b.case_id))
    });
    Ok(out)
}

/// Summary cache backed by one JSON file per key.
#[derive(Debug, Clone)]
pub struct DirCache {
    dir: PathBuf,
}

impl DirCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        Ok(Self { dir })
    }

    /// The cache directory of a case.
    pub fn for_case(root: &Path, case_id: &str) -> Result<Self, StoreError> {
        Self::new(case_dir(root, case_id).join(CACHE_DIR))
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        key.chars()
            .all(|c| c.is_ascii_hexdigit())
            .then(|| self.dir.join(format!("{key}.json")))
    }
}

impl SummaryCache for DirCache {
    fn get(&self, key: &str) -> Option<Summary> {
        let bytes = fs::read(self.path(key)?).ok()?;
        serde_json::from_slice(&bytes).ok()
    }

    fn put(&self, key: &str, summary: &Summary) {
        // A failed cache write only costs a recomputation later.
        if let Some(path) = self.path(key) {
            if let Ok(bytes) = to_canonical_bytes(summary) {
                let _ = write_atomic(&path, &bytes);
            }
        }
    }
}
