//! Record/replay cache: one `<request_key>.json` file per exchange.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Backend, ChatRequest, ChatResponse, LlmError, Provenance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub request_key: String,
    pub request: Value,
    pub response: ChatResponse,
}

#[derive(Debug, Clone)]
pub struct ReplayCache {
    dir: PathBuf,
}

fn cache_err(path: &Path, e: impl std::fmt::Display) -> LlmError {
    LlmError::Cache(format!("{}: {e}", path.display()))
}

impl ReplayCache {
    pub fn open(dir: &Path) -> Result<Self, LlmError> {
        fs::create_dir_all(dir).map_err(|e| cache_err(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Result<Option<CacheEntry>, LlmError> {
        let path = self.path_for(key);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(|e| cache_err(&path, e))?;
        let entry: CacheEntry = serde_json::from_str(&text).map_err(|e| cache_err(&path, e))?;
        if entry.request_key != key {
            return Err(cache_err(&path, "request_key does not match file name"));
        }
        Ok(Some(entry))
    }

    pub fn put(&self, entry: &CacheEntry) -> Result<(), LlmError> {
        let path = self.path_for(&entry.request_key);
        let tmp = path.with_extension("json.tmp");
        let text = serde_json::to_string_pretty(entry).map_err(|e| cache_err(&path, e))?;
        fs::write(&tmp, text + "\n").map_err(|e| cache_err(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| cache_err(&path, e))
    }

    /// Valid entries sorted by key, plus the paths that failed to load.
    pub fn list(&self) -> Result<(Vec<CacheEntry>, Vec<PathBuf>), LlmError> {
        let mut good = Vec::new();
        let mut bad = Vec::new();
        let mut paths: Vec<PathBuf> = fs::read_dir(&self.dir)
            .map_err(|e| cache_err(&self.dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        paths.sort();
        for p in paths {
            let name = p
                .file_name()
                .unwrap_or_default()
                .to_string_lossy()
                .into_owned();
            match name.strip_suffix(".json") {
                Some(key) => match self.get(key) {
                    Ok(Some(e)) => good.push(e),
                    _ => bad.push(p),
                },
                None => bad.push(p),
            }
        }
        Ok((good, bad))
    }

    /// Deletes unreadable files and, when `keep` is given, entries whose key
    /// is not in it. Returns the removed paths.
    pub fn prune(&self, keep: Option<&HashSet<String>>) -> Result<Vec<PathBuf>, LlmError> {
        let (good, bad) = self.list()?;
        let mut removed = bad;
        if let Some(keep) = keep {
            removed.extend(
                good.iter()
                    .filter(|e| !keep.contains(&e.request_key))
                    .map(|e| self.path_for(&e.request_key)),
            );
        }
        removed.sort();
        for p in &removed {
            fs::remove_file(p).map_err(|e| cache_err(p, e))?;
        }
        Ok(removed)
    }
}

pub enum ReplayMode {
    /// Misses are errors.
    Strict,
    /// Misses go to the inner backend and are recorded.
    Record(Box<dyn Backend>),
}

pub struct ReplayBackend {
    cache: ReplayCache,
    mode: ReplayMode,
    write_lock: Mutex<()>,
}

impl ReplayBackend {
    pub fn new(cache: ReplayCache, mode: ReplayMode) -> Self {
        Self {
            cache,
            mode,
            write_lock: Mutex::new(()),
        }
    }

    pub fn cache(&self) -> &ReplayCache {
        &self.cache
    }
}

impl Backend for ReplayBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let content = request.content_value()?;
        let key = crate::hashing::sha256_hex(crate::hashing::canonical_json(&content));
        if let Some(entry) = self.cache.get(&key)? {
            return Ok(ChatResponse {
                provenance: Provenance::Replay,
                ..entry.response
            });
        }
        match &self.mode {
            ReplayMode::Strict => Err(LlmError::ReplayMiss { key }),
            ReplayMode::Record(inner) => {
                let response = inner.complete(request)?;
                let _guard = self.write_lock.lock().expect("poisoned");
                self.cache.put(&CacheEntry {
                    request_key: key,
                    request: content,
                    response: response.clone(),
                })?;
                Ok(response)
            }
        }
    }
}
