//! Engine state shared by the HTTP handlers: the store, the backend
//! registry and the background search runner.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use chrono::Utc;
use infotriage_core::classify::ClassifierBackend;
use infotriage_core::evaluate::{confusion, prf, GoldRelevance};
use infotriage_core::query::{run_search, FeedbackMark, Query, SearchOptions, SearchSession};
use thiserror::Error;
use tokio::sync::Semaphore;

use crate::config::{BackendSpec, ConfigError, ServiceConfig};
use crate::store::{Event, Recovery, SearchStatus, Store, StoreError, StoredMetrics, StoredSearch};

#[derive(Debug, Error)]
pub enum AppError {
    #[error("unknown corpus {0:?}")]
    UnknownCorpus(String),
    #[error("unknown backend {0:?}")]
    UnknownBackend(String),
    #[error("unknown document {0:?} in corpus {1:?}")]
    UnknownDocument(String, String),
    #[error("{0}")]
    InvalidQuery(String),
    #[error("search {id:?} is {status:?}, not done")]
    NotDone { id: String, status: SearchStatus },
    #[error("gold labels miss {} corpus document(s)", .0.len())]
    GoldCoverage(Vec<String>),
    #[error("invalid gold labels: {0}")]
    InvalidGold(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

pub struct RegisteredBackend {
    pub spec: BackendSpec,
    pub backend: Arc<dyn ClassifierBackend>,
}

pub struct App {
    pub store: Store,
    pub backends: BTreeMap<String, RegisteredBackend>,
    pub options: SearchOptions,
    pub deadline: Option<Duration>,
    pub max_upload_bytes: usize,
    slots: Arc<Semaphore>,
}

impl App {
    /// Opens the store and builds the backend registry. Pending searches
    /// found on disk are returned for [`App::resume`].
    pub fn open(config: &ServiceConfig) -> Result<(Arc<Self>, Recovery), StartError> {
        let mut backends = BTreeMap::new();
        for (name, spec) in config.backend_specs() {
            let backend = spec.build(&name)?;
            backends.insert(name, RegisteredBackend { spec, backend });
        }
        let (store, recovery) = Store::open(&config.store_dir)?;
        let app = App {
            store,
            backends,
            options: SearchOptions::with_parallelism(config.parallelism),
            deadline: config.search_deadline_secs.map(Duration::from_secs_f64),
            max_upload_bytes: config.max_upload_bytes,
            slots: Arc::new(Semaphore::new(config.max_concurrent_searches.max(1))),
        };
        Ok((Arc::new(app), recovery))
    }

    /// Restarts searches that were enqueued but never began.
    pub fn resume(self: &Arc<Self>, recovery: &Recovery) {
        for id in &recovery.pending {
            self.spawn(id.clone());
        }
    }

    pub fn backend(&self, name: &str) -> Result<&RegisteredBackend, AppError> {
        self.backends
            .get(name)
            .ok_or_else(|| AppError::UnknownBackend(name.to_string()))
    }

    /// Validates and journals a search, then runs it in the background.
    pub fn enqueue(
        self: &Arc<Self>,
        session_id: &str,
        corpus_id: Option<&str>,
        backend: &str,
        query: Query,
    ) -> Result<StoredSearch, AppError> {
        let session = self.store.session(session_id)?;
        let corpus_id = corpus_id.unwrap_or(&session.corpus_id).to_string();
        if self.store.corpus(&corpus_id).is_none() {
            return Err(AppError::UnknownCorpus(corpus_id));
        }
        query.validate().map_err(|e| AppError::InvalidQuery(e.to_string()))?;
        let registered = self.backend(backend)?;
        if let Some(cap) = query.required_capability() {
            registered
                .backend
                .require(cap)
                .map_err(|e| AppError::InvalidQuery(e.to_string()))?;
        }
        let search_id = format!("q-{}", uuid::Uuid::new_v4().simple());
        self.store.record(Event::SearchEnqueued {
            search_id: search_id.clone(),
            session_id: session_id.to_string(),
            corpus_id,
            backend: backend.to_string(),
            query,
            at: Utc::now(),
        })?;
        self.spawn(search_id.clone());
        Ok(self.store.search(&search_id)?)
    }

    fn spawn(self: &Arc<Self>, search_id: String) {
        let app = self.clone();
        tokio::spawn(async move {
            if let Err(e) = app.execute(&search_id).await {
                tracing::error!(search_id, error = %e, "search bookkeeping failed");
            }
        });
    }

    async fn execute(self: Arc<Self>, search_id: &str) -> Result<(), StoreError> {
        let _slot = self.slots.clone().acquire_owned().await.expect("semaphore never closed");
        let search = self.store.search(search_id)?;
        if search.status != SearchStatus::Pending {
            return Ok(());
        }
        self.store.record(Event::SearchStarted {
            search_id: search_id.to_string(),
            at: Utc::now(),
        })?;

        let fail = |error: String| Event::SearchFailed {
            search_id: search_id.to_string(),
            error,
            at: Utc::now(),
        };
        let (Some(corpus), Ok(registered)) = (self.store.corpus(&search.corpus_id), self.backend(&search.backend)) else {
            return self.store.record(fail("corpus or backend no longer available".into()));
        };
        let backend = registered.backend.clone();
        let options = self.options;
        let query = search.query;
        let job = tokio::task::spawn_blocking(move || run_search(&query, &corpus, backend.as_ref(), options));
        let joined = match self.deadline {
            Some(limit) => match tokio::time::timeout(limit, job).await {
                Ok(joined) => joined,
                Err(_) => {
                    return self
                        .store
                        .record(fail(format!("deadline of {:.1}s exceeded", limit.as_secs_f64())))
                }
            },
            None => job.await,
        };
        let event = match joined {
            Ok(Ok(result)) => Event::SearchDone {
                search_id: search_id.to_string(),
                result,
                at: Utc::now(),
            },
            Ok(Err(e)) => fail(e.to_string()),
            Err(e) => fail(format!("search worker crashed: {e}")),
        };
        self.store.record(event)
    }

    pub fn feedback(&self, session_id: &str, doc_id: &str, mark: Option<FeedbackMark>) -> Result<SearchSession, AppError> {
        let session = self.store.session(session_id)?;
        let corpus = self
            .store
            .corpus(&session.corpus_id)
            .ok_or_else(|| AppError::UnknownCorpus(session.corpus_id.clone()))?;
        if !corpus.contains(doc_id) {
            return Err(AppError::UnknownDocument(doc_id.to_string(), session.corpus_id));
        }
        self.store.record(Event::Feedback {
            session_id: session_id.to_string(),
            doc_id: doc_id.to_string(),
            mark,
            at: Utc::now(),
        })?;
        Ok(self.store.session(session_id)?)
    }

    /// Scores a finished search against gold labels that cover its corpus.
    pub fn metrics(&self, search_id: &str, gold: &GoldRelevance) -> Result<StoredMetrics, AppError> {
        let (status, corpus_id, predicted) = self.store.with_search(search_id, |s| {
            (s.status, s.corpus_id.clone(), s.result.as_ref().map(|r| r.doc_ids.clone()))
        })?;
        let Some(predicted) = predicted.filter(|_| status == SearchStatus::Done) else {
            return Err(AppError::NotDone {
                id: search_id.to_string(),
                status,
            });
        };
        let corpus = self
            .store
            .corpus(&corpus_id)
            .ok_or_else(|| AppError::UnknownCorpus(corpus_id.clone()))?;
        let missing = gold.missing(corpus.ids());
        if !missing.is_empty() {
            return Err(AppError::GoldCoverage(missing));
        }
        let counts = confusion(&predicted, gold).map_err(|e| AppError::InvalidGold(e.to_string()))?;
        let stored = StoredMetrics {
            metrics: prf(&counts),
            counts,
        };
        self.store.record(Event::Metrics {
            search_id: search_id.to_string(),
            metrics: stored.clone(),
        })?;
        Ok(stored)
    }
}

#[derive(Debug, Error)]
pub enum StartError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("server error: {0}")]
    Serve(std::io::Error),
}
