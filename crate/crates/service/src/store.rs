//! Single-directory persistence.
//!
//! ```text
//! <store>/corpora/<corpus_id>.json   sealed corpus, written once via rename
//! <store>/journal.jsonl              append-only event log (sessions, searches)
//! ```
//!
//! State is rebuilt by replaying the journal. A torn final line (crash
//! mid-append) is truncated away; damage anywhere else is an error.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use infotriage_core::corpus::{ingest_bytes_with_id, Corpus, CorpusError, Format};
use infotriage_core::evaluate::{ConfusionCounts, MetricRow};
use infotriage_core::query::{FeedbackMark, HistoryEntry, Query, SearchResult, SearchSession};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store i/o on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("journal line {line} is corrupt: {reason}")]
    CorruptJournal { line: usize, reason: String },
    #[error("corpus file {path} is unreadable: {reason}")]
    CorruptCorpus { path: PathBuf, reason: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("unknown session {0:?}")]
    UnknownSession(String),
    #[error("unknown search {0:?}")]
    UnknownSearch(String),
    #[error("search {id:?} cannot move from {from:?} to {to:?}")]
    IllegalTransition { id: String, from: SearchStatus, to: SearchStatus },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchStatus {
    Pending,
    Running,
    Done,
    Failed,
}

impl SearchStatus {
    pub fn can_become(self, next: SearchStatus) -> bool {
        use SearchStatus::*;
        matches!((self, next), (Pending, Running) | (Running, Done) | (Running, Failed))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredMetrics {
    #[serde(flatten)]
    pub metrics: MetricRow,
    pub counts: ConfusionCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredSearch {
    pub search_id: String,
    pub session_id: String,
    pub corpus_id: String,
    pub backend: String,
    pub query: Query,
    pub status: SearchStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub created_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<DateTime<Utc>>,
    /// Present iff `status` is Done.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<SearchResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<StoredMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    SessionCreated {
        session_id: String,
        corpus_id: String,
        at: DateTime<Utc>,
    },
    SearchEnqueued {
        search_id: String,
        session_id: String,
        corpus_id: String,
        backend: String,
        query: Query,
        at: DateTime<Utc>,
    },
    SearchStarted {
        search_id: String,
        at: DateTime<Utc>,
    },
    SearchDone {
        search_id: String,
        result: SearchResult,
        at: DateTime<Utc>,
    },
    SearchFailed {
        search_id: String,
        error: String,
        at: DateTime<Utc>,
    },
    Feedback {
        session_id: String,
        doc_id: String,
        mark: Option<FeedbackMark>,
        at: DateTime<Utc>,
    },
    Metrics {
        search_id: String,
        metrics: StoredMetrics,
    },
}

#[derive(Debug, Default)]
struct State {
    sessions: BTreeMap<String, SearchSession>,
    searches: HashMap<String, StoredSearch>,
}

impl State {
    /// Checks that `event` is legal against the current state.
    fn check(&self, event: &Event) -> Result<(), StoreError> {
        let transition = |id: &str, to| {
            let s = self
                .searches
                .get(id)
                .ok_or_else(|| StoreError::UnknownSearch(id.to_string()))?;
            if s.status.can_become(to) {
                Ok(())
            } else {
                Err(StoreError::IllegalTransition {
                    id: id.to_string(),
                    from: s.status,
                    to,
                })
            }
        };
        match event {
            Event::SessionCreated { .. } => Ok(()),
            Event::SearchEnqueued { session_id, .. } | Event::Feedback { session_id, .. } => {
                if self.sessions.contains_key(session_id) {
                    Ok(())
                } else {
                    Err(StoreError::UnknownSession(session_id.clone()))
                }
            }
            Event::SearchStarted { search_id, .. } => transition(search_id, SearchStatus::Running),
            Event::SearchDone { search_id, .. } => transition(search_id, SearchStatus::Done),
            Event::SearchFailed { search_id, .. } => transition(search_id, SearchStatus::Failed),
            Event::Metrics { search_id, .. } => match self.searches.get(search_id) {
                Some(s) if s.status == SearchStatus::Done => Ok(()),
                Some(s) => Err(StoreError::IllegalTransition {
                    id: search_id.clone(),
                    from: s.status,
                    to: SearchStatus::Done,
                }),
                None => Err(StoreError::UnknownSearch(search_id.clone())),
            },
        }
    }

    fn apply(&mut self, event: Event) {
        match event {
            Event::SessionCreated { session_id, corpus_id, .. } => {
                self.sessions
                    .insert(session_id.clone(), SearchSession::new(session_id, corpus_id));
            }
            Event::SearchEnqueued {
                search_id,
                session_id,
                corpus_id,
                backend,
                query,
                at,
            } => {
                if let Some(session) = self.sessions.get_mut(&session_id) {
                    session.record(HistoryEntry {
                        query: query.clone(),
                        result: Vec::new(),
                        timestamp: at,
                        search_id: Some(search_id.clone()),
                    });
                }
                self.searches.insert(
                    search_id.clone(),
                    StoredSearch {
                        search_id,
                        session_id,
                        corpus_id,
                        backend,
                        query,
                        status: SearchStatus::Pending,
                        error: None,
                        created_at: at,
                        finished_at: None,
                        result: None,
                        metrics: None,
                    },
                );
            }
            Event::SearchStarted { search_id, .. } => {
                if let Some(s) = self.searches.get_mut(&search_id) {
                    s.status = SearchStatus::Running;
                }
            }
            Event::SearchDone { search_id, result, at } => {
                if let Some(s) = self.searches.get_mut(&search_id) {
                    if let Some(session) = self.sessions.get_mut(&s.session_id) {
                        let entry = session
                            .history
                            .iter_mut()
                            .find(|h| h.search_id.as_deref() == Some(search_id.as_str()));
                        if let Some(entry) = entry {
                            entry.result = result.doc_ids.clone();
                        }
                    }
                    s.status = SearchStatus::Done;
                    s.finished_at = Some(at);
                    s.result = Some(result);
                }
            }
            Event::SearchFailed { search_id, error, at } => {
                if let Some(s) = self.searches.get_mut(&search_id) {
                    s.status = SearchStatus::Failed;
                    s.error = Some(error);
                    s.finished_at = Some(at);
                }
            }
            Event::Feedback {
                session_id, doc_id, mark, ..
            } => {
                if let Some(session) = self.sessions.get_mut(&session_id) {
                    session.mark(&doc_id, mark);
                }
            }
            Event::Metrics { search_id, metrics } => {
                if let Some(s) = self.searches.get_mut(&search_id) {
                    s.metrics = Some(metrics);
                }
            }
        }
    }
}

struct Journal {
    path: PathBuf,
    file: File,
}

impl Journal {
    fn append(&mut self, event: &Event) -> Result<(), StoreError> {
        let mut line = serde_json::to_vec(event).expect("events serialize");
        line.push(b'\n');
        self.file.write_all(&line).map_err(io_err(&self.path))?;
        self.file.sync_data().map_err(io_err(&self.path))
    }
}

/// Reads the journal, truncating a torn final line in place.
fn replay(path: &Path) -> Result<Vec<Event>, StoreError> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    let mut events = Vec::new();
    let mut offset = 0;
    let mut line_no = 0;
    while offset < bytes.len() {
        line_no += 1;
        let end = bytes[offset..].iter().position(|&b| b == b'\n').map(|i| offset + i);
        let line = &bytes[offset..end.unwrap_or(bytes.len())];
        match (serde_json::from_slice::<Event>(line), end) {
            (Ok(event), Some(end)) => {
                events.push(event);
                offset = end + 1;
            }
            (parsed, _) => {
                let is_tail = end.is_none_or(|e| e + 1 == bytes.len());
                if !is_tail {
                    let reason = parsed.err().map_or("unterminated".into(), |e| e.to_string());
                    return Err(StoreError::CorruptJournal { line: line_no, reason });
                }
                tracing::warn!(line = line_no, "truncating torn journal tail");
                let file = OpenOptions::new().write(true).open(path).map_err(io_err(path))?;
                file.set_len(offset as u64).map_err(io_err(path))?;
                file.sync_all().map_err(io_err(path))?;
                break;
            }
        }
    }
    Ok(events)
}

fn write_atomically(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = dir.join(format!(".{name}.tmp"));
    let target = dir.join(name);
    {
        let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, &target).map_err(io_err(&target))?;
    // Persist the rename itself.
    File::open(dir).and_then(|d| d.sync_all()).map_err(io_err(dir))
}

/// Content digest naming a corpus: the same bytes in the same format always
/// get the same id.
pub fn corpus_digest_id(bytes: &[u8], format: Format) -> String {
    let mut h = Sha256::new();
    h.update(format!("{format:?}").as_bytes());
    h.update([0]);
    h.update(bytes);
    let digest = h.finalize();
    let hex: String = digest[..16].iter().map(|b| format!("{b:02x}")).collect();
    format!("c-{hex}")
}

pub struct Store {
    dir: PathBuf,
    corpora: RwLock<HashMap<String, Arc<Corpus>>>,
    corpus_writer: Mutex<()>,
    journal: Mutex<Journal>,
    state: RwLock<State>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").field("dir", &self.dir).finish()
    }
}

/// What `Store::open` found that needs attention.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Recovery {
    /// Searches that never started; the caller should run them.
    pub pending: Vec<String>,
    /// Searches that were running at the crash; now Failed.
    pub interrupted: Vec<String>,
}

impl Store {
    pub fn open(dir: impl Into<PathBuf>) -> Result<(Self, Recovery), StoreError> {
        let dir = dir.into();
        let corpora_dir = dir.join("corpora");
        fs::create_dir_all(&corpora_dir).map_err(io_err(&corpora_dir))?;

        let mut corpora = HashMap::new();
        for entry in fs::read_dir(&corpora_dir).map_err(io_err(&corpora_dir))? {
            let path = entry.map_err(io_err(&corpora_dir))?.path();
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
            if name.starts_with('.') {
                // Leftover from an interrupted write; the rename never happened.
                let _ = fs::remove_file(&path);
                continue;
            }
            if !name.ends_with(".json") {
                continue;
            }
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            let corpus: Corpus = serde_json::from_slice(&bytes).map_err(|e| StoreError::CorruptCorpus {
                path: path.clone(),
                reason: e.to_string(),
            })?;
            corpora.insert(corpus.corpus_id().to_string(), Arc::new(corpus));
        }

        let journal_path = dir.join("journal.jsonl");
        let mut state = State::default();
        for (i, event) in replay(&journal_path)?.into_iter().enumerate() {
            state.check(&event).map_err(|e| StoreError::CorruptJournal {
                line: i + 1,
                reason: e.to_string(),
            })?;
            state.apply(event);
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&journal_path)
            .map_err(io_err(&journal_path))?;

        let store = Store {
            dir,
            corpora: RwLock::new(corpora),
            corpus_writer: Mutex::new(()),
            journal: Mutex::new(Journal {
                path: journal_path,
                file,
            }),
            state: RwLock::new(state),
        };

        let mut recovery = Recovery::default();
        let mut stale: Vec<(DateTime<Utc>, String, SearchStatus)> = store
            .read_state()
            .searches
            .values()
            .filter(|s| matches!(s.status, SearchStatus::Pending | SearchStatus::Running))
            .map(|s| (s.created_at, s.search_id.clone(), s.status))
            .collect();
        stale.sort_by(|a, b| (a.0, &a.1).cmp(&(b.0, &b.1)));
        for (_, id, status) in stale {
            if status == SearchStatus::Running {
                store.record(Event::SearchFailed {
                    search_id: id.clone(),
                    error: "interrupted by service restart".into(),
                    at: Utc::now(),
                })?;
                recovery.interrupted.push(id);
            } else {
                recovery.pending.push(id);
            }
        }
        Ok((store, recovery))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn read_state(&self) -> std::sync::RwLockReadGuard<'_, State> {
        self.state.read().unwrap_or_else(|e| e.into_inner())
    }

    /// Validates, journals, then applies `event`. The journal lock is held
    /// throughout so memory and disk see events in the same order.
    pub fn record(&self, event: Event) -> Result<(), StoreError> {
        let mut journal = self.journal.lock().unwrap_or_else(|e| e.into_inner());
        self.read_state().check(&event)?;
        journal.append(&event)?;
        self.state.write().unwrap_or_else(|e| e.into_inner()).apply(event);
        Ok(())
    }

    /// Ingests `bytes` unless a corpus with the same digest exists. Returns
    /// the corpus and whether it was newly created.
    pub fn put_corpus(&self, bytes: &[u8], format: Format) -> Result<(Arc<Corpus>, bool), StoreError> {
        let id = corpus_digest_id(bytes, format);
        if let Some(c) = self.corpus(&id) {
            return Ok((c, false));
        }
        let corpus = ingest_bytes_with_id(bytes, format, &id)?;
        let _writer = self.corpus_writer.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(c) = self.corpus(&id) {
            return Ok((c, false));
        }
        let encoded = serde_json::to_vec(&corpus).expect("corpus serializes");
        write_atomically(&self.dir.join("corpora"), &format!("{id}.json"), &encoded)?;
        let corpus = Arc::new(corpus);
        self.corpora
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(id, corpus.clone());
        Ok((corpus, true))
    }

    pub fn corpus(&self, id: &str) -> Option<Arc<Corpus>> {
        self.corpora.read().unwrap_or_else(|e| e.into_inner()).get(id).cloned()
    }

    pub fn create_session(&self, corpus_id: &str) -> Result<SearchSession, StoreError> {
        let session_id = format!("s-{}", uuid::Uuid::new_v4().simple());
        self.record(Event::SessionCreated {
            session_id: session_id.clone(),
            corpus_id: corpus_id.to_string(),
            at: Utc::now(),
        })?;
        self.session(&session_id)
    }

    pub fn session(&self, id: &str) -> Result<SearchSession, StoreError> {
        self.read_state()
            .sessions
            .get(id)
            .cloned()
            .ok_or_else(|| StoreError::UnknownSession(id.to_string()))
    }

    pub fn session_ids(&self) -> Vec<String> {
        self.read_state().sessions.keys().cloned().collect()
    }

    pub fn search(&self, id: &str) -> Result<StoredSearch, StoreError> {
        self.read_state()
            .searches
            .get(id)
            .cloned()
            .ok_or_else(|| StoreError::UnknownSearch(id.to_string()))
    }

    /// Reads a search without cloning its result.
    pub fn with_search<R>(&self, id: &str, f: impl FnOnce(&StoredSearch) -> R) -> Result<R, StoreError> {
        let state = self.read_state();
        let s = state
            .searches
            .get(id)
            .ok_or_else(|| StoreError::UnknownSearch(id.to_string()))?;
        Ok(f(s))
    }

    pub fn search_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.read_state().searches.keys().cloned().collect();
        ids.sort();
        ids
    }
}
