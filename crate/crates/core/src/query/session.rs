use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Query;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackMark {
    Relevant,
    Irrelevant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub query: Query,
    /// Matching document ids in corpus order.
    pub result: Vec<String>,
    pub timestamp: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search_id: Option<String>,
}

/// One analyst's query-inspect-revise loop over a corpus. History only
/// grows; unmarked documents are simply absent from `feedback`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSession {
    pub session_id: String,
    pub corpus_id: String,
    pub history: Vec<HistoryEntry>,
    pub feedback: BTreeMap<String, FeedbackMark>,
}

impl SearchSession {
    pub fn new(session_id: impl Into<String>, corpus_id: impl Into<String>) -> Self {
        SearchSession {
            session_id: session_id.into(),
            corpus_id: corpus_id.into(),
            history: Vec::new(),
            feedback: BTreeMap::new(),
        }
    }

    pub fn record(&mut self, entry: HistoryEntry) {
        self.history.push(entry);
    }

    /// `None` clears the mark.
    pub fn mark(&mut self, doc_id: &str, mark: Option<FeedbackMark>) {
        match mark {
            Some(m) => {
                self.feedback.insert(doc_id.to_string(), m);
            }
            None => {
                self.feedback.remove(doc_id);
            }
        }
    }

    /// Share of `shown` documents the analyst marked relevant.
    pub fn feedback_precision(&self, shown: &[String]) -> Option<f64> {
        if shown.is_empty() {
            return None;
        }
        let relevant = shown
            .iter()
            .filter(|d| self.feedback.get(*d) == Some(&FeedbackMark::Relevant))
            .count();
        Some(relevant as f64 / shown.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error("unknown session {0:?}")]
    UnknownSession(String),
}

/// In-memory session store. Each session has its own lock, so writers to
/// different sessions never contend and readers get consistent snapshots.
#[derive(Debug, Default)]
pub struct SessionRegistry {
    sessions: RwLock<HashMap<String, Arc<Mutex<SearchSession>>>>,
}

impl SessionRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn create(&self, corpus_id: &str) -> SearchSession {
        let session = SearchSession::new(format!("s-{}", uuid::Uuid::new_v4().simple()), corpus_id);
        self.insert(session.clone());
        session
    }

    /// Adds or replaces a session, e.g. when restoring from disk.
    pub fn insert(&self, session: SearchSession) {
        let id = session.session_id.clone();
        self.sessions
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(id, Arc::new(Mutex::new(session)));
    }

    fn handle(&self, id: &str) -> Result<Arc<Mutex<SearchSession>>, SessionError> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::UnknownSession(id.to_string()))
    }

    pub fn get(&self, id: &str) -> Result<SearchSession, SessionError> {
        Ok(self.handle(id)?.lock().unwrap_or_else(|e| e.into_inner()).clone())
    }

    /// Applies `f` to the session under its lock and returns the new state.
    pub fn update<F: FnOnce(&mut SearchSession)>(&self, id: &str, f: F) -> Result<SearchSession, SessionError> {
        let handle = self.handle(id)?;
        let mut session = handle.lock().unwrap_or_else(|e| e.into_inner());
        f(&mut session);
        Ok(session.clone())
    }

    /// Appends a search to the session's history. Feedback is untouched.
    pub fn revise(&self, id: &str, query: Query, result: Vec<String>) -> Result<SearchSession, SessionError> {
        let entry = HistoryEntry {
            query,
            result,
            timestamp: Utc::now(),
            search_id: None,
        };
        self.update(id, |s| s.record(entry))
    }

    pub fn set_feedback(&self, id: &str, doc_id: &str, mark: Option<FeedbackMark>) -> Result<SearchSession, SessionError> {
        self.update(id, |s| s.mark(doc_id, mark))
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .keys()
            .cloned()
            .collect();
        ids.sort();
        ids
    }
}
