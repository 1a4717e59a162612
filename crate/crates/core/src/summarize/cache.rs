use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::RwLock;

use sha2::{Digest, Sha256};

use super::{SummarizeError, Summarizer, SummarizerMode, Summary, SummaryRequest};

/// Key/value store for summaries. Keys are hex SHA-256 digests.
pub trait SummaryCache: Send + Sync {
    fn get(&self, key: &str) -> Option<Summary>;
    fn put(&self, key: &str, summary: &Summary);
}

#[derive(Debug, Default)]
pub struct MemoryCache {
    entries: RwLock<HashMap<String, Summary>>,
}

impl MemoryCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All entries, sorted by key.
    pub fn entries(&self) -> Vec<(String, Summary)> {
        let mut v: Vec<_> = self
            .entries
            .read()
            .unwrap()
            .iter()
            .map(|(k, s)| (k.clone(), s.clone()))
            .collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    }
}

impl SummaryCache for MemoryCache {
    fn get(&self, key: &str) -> Option<Summary> {
        self.entries.read().unwrap().get(key).cloned()
    }

    fn put(&self, key: &str, summary: &Summary) {
        self.entries
            .write()
            .unwrap()
            .insert(key.to_string(), summary.clone());
    }
}

/// Cache key over (role, content hash, budget, mode).
pub fn cache_key(req: &SummaryRequest, mode: SummarizerMode) -> String {
    let content_hash = Sha256::digest(req.content().as_bytes());
    let mut h = Sha256::new();
    h.update(req.role().as_str().as_bytes());
    h.update([0]);
    h.update(content_hash);
    h.update(req.budget().to_le_bytes());
    h.update(mode.as_str().as_bytes());
    hex::encode(h.finalize())
}

/// Wraps a summarizer with a cache. Only successful summaries are stored.
pub struct Cached<S, C> {
    inner: S,
    store: C,
    misses: AtomicUsize,
}

impl<S: Summarizer, C: SummaryCache> Cached<S, C> {
    pub fn new(inner: S, store: C) -> Self {
        Self {
            inner,
            store,
            misses: AtomicUsize::new(0),
        }
    }

    /// Number of requests forwarded to the inner summarizer.
    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn store(&self) -> &C {
        &self.store
    }

    pub fn into_parts(self) -> (S, C) {
        (self.inner, self.store)
    }
}

impl<S: Summarizer, C: SummaryCache> Summarizer for Cached<S, C> {
    fn mode(&self) -> SummarizerMode {
        self.inner.mode()
    }

    fn summarize(&self, req: &SummaryRequest) -> Result<Summary, SummarizeError> {
        let key = cache_key(req, self.inner.mode());
        if let Some(hit) = self.store.get(&key) {
            return Ok(hit);
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let out = self.inner.summarize(req)?;
        self.store.put(&key, &out);
        Ok(out)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::summarize::{Deterministic, SummaryRole};

    /// Counts invocations and delegates to the deterministic summarizer.
    #[derive(Default)]
    pub(crate) struct Counting {
        pub calls: AtomicUsize,
    }

    impl Summarizer for Counting {
        fn mode(&self) -> SummarizerMode {
            SummarizerMode::Deterministic
        }

        fn summarize(&self, req: &SummaryRequest) -> Result<Summary, SummarizeError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Deterministic.summarize(req)
        }
    }

    fn req(content: &str, budget: usize) -> SummaryRequest {
        SummaryRequest::new(SummaryRole::Action, content, budget).unwrap()
    }

    #[test]
    fn identical_requests_hit_once() {
        let c = Cached::new(Counting::default(), MemoryCache::new());
        let a = c.summarize(&req("Read the page. Then stop.", 40)).unwrap();
        let b = c.summarize(&req("Read the page. Then stop.", 40)).unwrap();
        assert_eq!(a, b);
        assert_eq!(c.inner.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn budget_is_part_of_the_key() {
        let c = Cached::new(Counting::default(), MemoryCache::new());
        c.summarize(&req("same", 40)).unwrap();
        c.summarize(&req("same", 41)).unwrap();
        assert_eq!(c.inner.calls.load(Ordering::SeqCst), 2);
        assert_eq!(c.misses(), 2);
    }

    #[test]
    fn role_and_mode_change_the_key() {
        let a = req("x", 10);
        let b = SummaryRequest::new(SummaryRole::Plan, "x", 10).unwrap();
        assert_ne!(
            cache_key(&a, SummarizerMode::Deterministic),
            cache_key(&b, SummarizerMode::Deterministic)
        );
        assert_ne!(
            cache_key(&a, SummarizerMode::Deterministic),
            cache_key(&a, SummarizerMode::Remote)
        );
    }
}
