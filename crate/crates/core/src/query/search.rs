use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{match_query, MatchError, MatchOutcome, MatchRationale, Query};
use crate::classify::{ClassifierBackend, ClassifyError};
use crate::corpus::Corpus;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchOptions {
    /// Worker threads; 0 means one per available processor.
    pub parallelism: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions { parallelism: 0 }
    }
}

impl SearchOptions {
    pub fn with_parallelism(parallelism: usize) -> Self {
        SearchOptions { parallelism }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedDoc {
    pub doc_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SearchResult {
    /// Matching documents in corpus order.
    pub doc_ids: Vec<String>,
    /// One rationale per entry of `doc_ids`.
    pub rationales: Vec<MatchRationale>,
    pub skipped: Vec<SkippedDoc>,
    pub classifier_calls: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SearchError {
    #[error(transparent)]
    Unsupported(ClassifyError),
    #[error("{failed} of {calls} classifier calls failed (first: {first})")]
    TooManyFailures {
        failed: usize,
        calls: usize,
        first: MatchError,
    },
    #[error("could not start search workers: {0}")]
    Pool(String),
}

/// Runs `query` over every document. The result depends only on the query,
/// the corpus and the backend's answers, never on `options.parallelism`.
pub fn run_search(
    query: &Query,
    corpus: &Corpus,
    backend: &dyn ClassifierBackend,
    options: SearchOptions,
) -> Result<SearchResult, SearchError> {
    if let Some(cap) = query.required_capability() {
        backend.require(cap).map_err(SearchError::Unsupported)?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.parallelism)
        .build()
        .map_err(|e| SearchError::Pool(e.to_string()))?;
    let outcomes: Vec<Result<MatchOutcome, MatchError>> = pool.install(|| {
        corpus
            .documents()
            .par_iter()
            .map(|doc| match_query(query, doc, backend))
            .collect()
    });

    let mut result = SearchResult::default();
    let mut first_failure = None;
    for outcome in outcomes {
        match outcome {
            Ok(o) => {
                result.classifier_calls += usize::from(o.classified);
                if o.matched {
                    result.doc_ids.push(o.rationale.doc_id.clone());
                    result.rationales.push(o.rationale);
                }
            }
            Err(e) => {
                result.classifier_calls += 1;
                result.skipped.push(SkippedDoc {
                    doc_id: e.doc_id.clone(),
                    error: e.source.to_string(),
                });
                first_failure.get_or_insert(e);
            }
        }
    }
    let failed = result.skipped.len();
    if failed * 10 > result.classifier_calls {
        return Err(SearchError::TooManyFailures {
            failed,
            calls: result.classifier_calls,
            first: first_failure.expect("failures were recorded"),
        });
    }
    Ok(result)
}
