//! Record storage, exact retrieval and JSONL persistence.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::embed::{normalize, Embedder};
use super::{DiversifiedQuery, MemoryError, MemoryRecord, Namespace, RetrievalType};

pub const FORMAT_NAME: &str = "finagent-memory";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    namespace: Namespace,
    dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Retrieved {
    pub record: MemoryRecord,
    pub score: f64,
}

#[derive(Debug, Default, Clone)]
struct Shelf {
    records: Vec<MemoryRecord>,
    ids: HashSet<String>,
}

/// Records of all three namespaces with a fixed embedding dimension. When
/// opened on a directory every add is appended to `<dir>/<NS>.jsonl`.
#[derive(Debug, Clone)]
pub struct MemoryStore {
    dim: usize,
    shelves: BTreeMap<Namespace, Shelf>,
    dir: Option<PathBuf>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> MemoryError {
    MemoryError::Io(format!("{}: {e}", path.display()))
}

impl MemoryStore {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            shelves: Namespace::ALL
                .into_iter()
                .map(|n| (n, Shelf::default()))
                .collect(),
            dir: None,
        }
    }

    pub fn file_name(namespace: Namespace) -> String {
        format!("{}.jsonl", namespace.as_str())
    }

    /// Loads any existing namespace files under `dir` and persists later adds there.
    pub fn open(dir: &Path, dim: usize) -> Result<Self, MemoryError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let mut store = Self::new(dim);
        for ns in Namespace::ALL {
            let path = dir.join(Self::file_name(ns));
            if path.exists() {
                let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
                store.load_namespace(ns, &text, &path)?;
            } else {
                fs::write(&path, store.serialize_namespace(ns)).map_err(|e| io_err(&path, e))?;
            }
        }
        store.dir = Some(dir.to_path_buf());
        Ok(store)
    }

    fn load_namespace(
        &mut self,
        ns: Namespace,
        text: &str,
        path: &Path,
    ) -> Result<(), MemoryError> {
        let fmt_err = |line: usize, message: String| MemoryError::Format {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines
            .next()
            .ok_or_else(|| fmt_err(1, "missing header".into()))?;
        let header: Header =
            serde_json::from_str(first).map_err(|e| fmt_err(1, format!("header: {e}")))?;
        if header.format != FORMAT_NAME || header.version != FORMAT_VERSION {
            return Err(fmt_err(
                1,
                format!("unsupported format {} v{}", header.format, header.version),
            ));
        }
        if header.namespace != ns {
            return Err(fmt_err(
                1,
                format!("file holds namespace {}", header.namespace),
            ));
        }
        if header.dim != self.dim {
            return Err(MemoryError::DimensionMismatch {
                expected: self.dim,
                got: header.dim,
            });
        }
        for (i, line) in lines {
            let rec: MemoryRecord =
                serde_json::from_str(line).map_err(|e| fmt_err(i + 1, e.to_string()))?;
            if rec.namespace != ns {
                return Err(fmt_err(
                    i + 1,
                    format!("record in namespace {}", rec.namespace),
                ));
            }
            self.insert(rec)?;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn len(&self, namespace: Namespace) -> usize {
        self.shelves[&namespace].records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shelves.values().all(|s| s.records.is_empty())
    }

    pub fn records(&self, namespace: Namespace) -> &[MemoryRecord] {
        &self.shelves[&namespace].records
    }

    pub fn get(&self, namespace: Namespace, id: &str) -> Option<&MemoryRecord> {
        self.shelves[&namespace].records.iter().find(|r| r.id == id)
    }

    fn validate(&self, rec: &MemoryRecord) -> Result<(), MemoryError> {
        if rec.embedding.len() != self.dim {
            return Err(MemoryError::DimensionMismatch {
                expected: self.dim,
                got: rec.embedding.len(),
            });
        }
        if !rec.is_unit_norm() {
            return Err(MemoryError::NotNormalized(rec.id.clone()));
        }
        if self.shelves[&rec.namespace].ids.contains(&rec.id) {
            return Err(MemoryError::DuplicateId {
                namespace: rec.namespace,
                id: rec.id.clone(),
            });
        }
        Ok(())
    }

    fn insert(&mut self, rec: MemoryRecord) -> Result<(), MemoryError> {
        self.validate(&rec)?;
        let shelf = self
            .shelves
            .get_mut(&rec.namespace)
            .expect("all namespaces present");
        shelf.ids.insert(rec.id.clone());
        shelf.records.push(rec);
        Ok(())
    }

    pub fn add(&mut self, rec: MemoryRecord) -> Result<String, MemoryError> {
        self.validate(&rec)?;
        if let Some(dir) = &self.dir {
            let path = dir.join(Self::file_name(rec.namespace));
            let line = serde_json::to_string(&rec).map_err(|e| MemoryError::Io(e.to_string()))?;
            let mut f = OpenOptions::new()
                .append(true)
                .open(&path)
                .map_err(|e| io_err(&path, e))?;
            writeln!(f, "{line}").map_err(|e| io_err(&path, e))?;
        }
        let id = rec.id.clone();
        self.insert(rec)?;
        Ok(id)
    }

    /// Keeps only records for which `keep` holds, rewriting persisted files.
    pub fn retain(
        &mut self,
        mut keep: impl FnMut(&MemoryRecord) -> bool,
    ) -> Result<(), MemoryError> {
        for shelf in self.shelves.values_mut() {
            shelf.records.retain(&mut keep);
            shelf.ids = shelf.records.iter().map(|r| r.id.clone()).collect();
        }
        if let Some(dir) = self.dir.clone() {
            self.save(&dir)?;
        }
        Ok(())
    }

    /// Header line followed by one JSON record per line, in insertion order.
    pub fn serialize_namespace(&self, namespace: Namespace) -> String {
        let header = Header {
            format: FORMAT_NAME.into(),
            version: FORMAT_VERSION,
            namespace,
            dim: self.dim,
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for r in self.records(namespace) {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, dir: &Path) -> Result<(), MemoryError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        for ns in Namespace::ALL {
            let path = dir.join(Self::file_name(ns));
            fs::write(&path, self.serialize_namespace(ns)).map_err(|e| io_err(&path, e))?;
        }
        Ok(())
    }

    /// Top `k` records by cosine similarity to `query`, restricted to
    /// `type_filter` and to dates strictly before `before`. Ties go to the
    /// more recent record, then the smaller id.
    pub fn search(
        &self,
        namespace: Namespace,
        query: &[f64],
        k: usize,
        type_filter: Option<RetrievalType>,
        before: NaiveDate,
    ) -> Result<Vec<Retrieved>, MemoryError> {
        if query.len() != self.dim {
            return Err(MemoryError::DimensionMismatch {
                expected: self.dim,
                got: query.len(),
            });
        }
        let mut q = query.to_vec();
        if !normalize(&mut q) {
            return Err(MemoryError::InvalidQuery("zero query vector".into()));
        }
        let mut hits: Vec<Retrieved> = self
            .records(namespace)
            .iter()
            .filter(|r| r.date < before && type_filter.is_none_or(|t| r.retrieval_type == t))
            .map(|r| Retrieved {
                score: r.embedding.iter().zip(&q).map(|(a, b)| a * b).sum(),
                record: r.clone(),
            })
            .collect();
        hits.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then(b.record.date.cmp(&a.record.date))
                .then_with(|| a.record.id.cmp(&b.record.id))
        });
        hits.truncate(k);
        Ok(hits)
    }
}

/// A store paired with the embedder that produced its vectors.
#[derive(Clone)]
pub struct Memory {
    pub store: MemoryStore,
    embedder: Arc<dyn Embedder>,
}

impl std::fmt::Debug for Memory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Memory")
            .field("store", &self.store)
            .field("dim", &self.embedder.dim())
            .finish()
    }
}

impl Memory {
    pub fn new(store: MemoryStore, embedder: Arc<dyn Embedder>) -> Result<Self, MemoryError> {
        if store.dim() != embedder.dim() {
            return Err(MemoryError::DimensionMismatch {
                expected: store.dim(),
                got: embedder.dim(),
            });
        }
        Ok(Self { store, embedder })
    }

    pub fn embedder(&self) -> &dyn Embedder {
        self.embedder.as_ref()
    }

    /// Embeds `query` (or `summary` when the query is blank) and stores the record.
    #[allow(clippy::too_many_arguments)]
    pub fn add_text(
        &mut self,
        namespace: Namespace,
        id: &str,
        date: NaiveDate,
        summary: &str,
        query: &str,
        retrieval_type: RetrievalType,
    ) -> Result<String, MemoryError> {
        let key = if query.trim().is_empty() {
            summary
        } else {
            query
        };
        let embedding = self.embedder.embed(key)?;
        self.store.add(MemoryRecord::new(
            namespace,
            id,
            date,
            summary,
            query,
            retrieval_type,
            embedding,
        ))
    }

    pub fn retrieve(
        &self,
        namespace: Namespace,
        query_text: &str,
        k: usize,
        type_filter: Option<RetrievalType>,
        before: NaiveDate,
    ) -> Result<Vec<Retrieved>, MemoryError> {
        if self.store.len(namespace) == 0 || k == 0 {
            return Ok(Vec::new());
        }
        let q = self.embedder.embed(query_text)?;
        self.store.search(namespace, &q, k, type_filter, before)
    }

    /// Top `k` per retrieval type. Types partition records, so no record
    /// appears in two groups.
    pub fn diversified_retrieve(
        &self,
        namespace: Namespace,
        dq: &DiversifiedQuery,
        before: NaiveDate,
    ) -> Result<BTreeMap<RetrievalType, Vec<Retrieved>>, MemoryError> {
        dq.queries
            .iter()
            .map(|(t, text)| Ok((*t, self.retrieve(namespace, text, dq.k, Some(*t), before)?)))
            .collect()
    }
}
