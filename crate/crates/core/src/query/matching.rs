use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    AspectQuery, Keyword, KeywordExpr, KeywordQuery, MatchMode, Query, SentimentQuery, StanceQuery,
};
use crate::classify::{
    AspectSpan, AspectTag, ClassifierBackend, ClassifyError, SentimentLabel, StanceLabel,
};
use crate::corpus::CleanDocument;

/// One keyword occurrence, as character offsets into the cleaned text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchedSpan {
    pub start: usize,
    pub end: usize,
    pub pattern: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct KeywordMatch {
    pub matched: bool,
    pub spans: Vec<MatchedSpan>,
}

/// What the classifier said about a document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierOutput {
    Sentiment(SentimentLabel),
    Aspects(Vec<AspectSpan>),
    Stance(StanceLabel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRationale {
    pub doc_id: String,
    pub matched_spans: Vec<MatchedSpan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classifier_output: Option<ClassifierOutput>,
    pub rule_fired: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchOutcome {
    pub matched: bool,
    pub rationale: MatchRationale,
    /// Whether the backend was consulted.
    pub classified: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("document {doc_id:?}: {source}")]
pub struct MatchError {
    pub doc_id: String,
    #[source]
    pub source: ClassifyError,
}

/// All start offsets of `keyword` in `text`, overlapping occurrences included.
fn occurrences(keyword: &Keyword, text: &str) -> Vec<MatchedSpan> {
    let pat = keyword.pattern();
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(pos) = text[from..].find(pat) {
        let start = from + pos;
        let end = start + pat.len();
        let bounded = keyword.mode() == MatchMode::Substring
            || ((start == 0 || !bytes[start - 1].is_ascii_alphanumeric())
                && (end == bytes.len() || !bytes[end].is_ascii_alphanumeric()));
        if bounded {
            out.push(MatchedSpan {
                start,
                end,
                pattern: pat.to_string(),
            });
        }
        from = start + text[start..].chars().next().map_or(1, char::len_utf8);
    }
    out
}

fn group_occurrences(group: &[Keyword], text: &str) -> Vec<MatchedSpan> {
    let mut spans: Vec<MatchedSpan> = group.iter().flat_map(|k| occurrences(k, text)).collect();
    spans.sort_by(|a, b| (a.start, a.end, &a.pattern).cmp(&(b.start, b.end, &b.pattern)));
    spans.dedup();
    spans
}

/// AND over groups, OR within a group. Spans list every occurrence of every
/// keyword that occurs.
pub fn matches_keywords(expr: &KeywordExpr, doc: &CleanDocument) -> KeywordMatch {
    let mut matched = true;
    let mut spans = Vec::new();
    for group in expr.groups() {
        let found = group_occurrences(group, doc.text());
        matched &= !found.is_empty();
        spans.extend(found);
    }
    spans.sort_by(|a, b| (a.start, a.end, &a.pattern).cmp(&(b.start, b.end, &b.pattern)));
    spans.dedup();
    KeywordMatch { matched, spans }
}

fn rationale(doc: &CleanDocument, spans: Vec<MatchedSpan>, output: Option<ClassifierOutput>, rule: String) -> MatchRationale {
    MatchRationale {
        doc_id: doc.id().to_string(),
        matched_spans: spans,
        classifier_output: output,
        rule_fired: rule,
    }
}

fn annotate(doc: &CleanDocument) -> impl FnOnce(ClassifyError) -> MatchError + '_ {
    move |source| MatchError {
        doc_id: doc.id().to_string(),
        source,
    }
}

fn keyword_miss(doc: &CleanDocument, km: KeywordMatch) -> MatchOutcome {
    MatchOutcome {
        matched: false,
        rationale: rationale(doc, km.spans, None, "keywords not matched".into()),
        classified: false,
    }
}

pub fn match_keywords_only(query: &KeywordQuery, doc: &CleanDocument) -> MatchOutcome {
    let km = matches_keywords(&query.keywords, doc);
    let rule = if km.matched {
        "keywords matched"
    } else {
        "keywords not matched"
    };
    MatchOutcome {
        matched: km.matched,
        rationale: rationale(doc, km.spans, None, rule.into()),
        classified: false,
    }
}

/// Keywords present and whole-text sentiment equal to the target.
pub fn match_sa(
    query: &SentimentQuery,
    doc: &CleanDocument,
    backend: &dyn ClassifierBackend,
) -> Result<MatchOutcome, MatchError> {
    let km = matches_keywords(&query.keywords, doc);
    if !km.matched {
        return Ok(keyword_miss(doc, km));
    }
    let label = backend.sentiment(doc).map_err(annotate(doc))?.label;
    let matched = label == query.target_sentiment;
    let rule = format!(
        "keywords matched; sentiment {label} {} {}",
        if matched { "==" } else { "!=" },
        query.target_sentiment
    );
    Ok(MatchOutcome {
        matched,
        rationale: rationale(doc, km.spans, Some(ClassifierOutput::Sentiment(label)), rule),
        classified: true,
    })
}

fn overlaps(span: &MatchedSpan, start: usize, end: usize) -> bool {
    span.start < end && start < span.end
}

/// Keywords present, and for every tagged requirement some occurrence of
/// one of its keywords overlaps a token carrying the required tag.
pub fn match_absa(
    query: &AspectQuery,
    doc: &CleanDocument,
    backend: &dyn ClassifierBackend,
) -> Result<MatchOutcome, MatchError> {
    let km = matches_keywords(&query.keywords, doc);
    if !km.matched {
        return Ok(keyword_miss(doc, km));
    }
    let mut spans = km.spans;
    let per_requirement: Vec<Vec<MatchedSpan>> = query
        .aspect_requirements
        .iter()
        .map(|r| group_occurrences(&r.keywords, doc.text()))
        .collect();
    if let Some(i) = per_requirement.iter().position(Vec::is_empty) {
        return Ok(MatchOutcome {
            matched: false,
            rationale: rationale(doc, spans, None, format!("aspect requirement {} keywords absent", i + 1)),
            classified: false,
        });
    }

    let tagging = backend.aspects(doc).map_err(annotate(doc))?;
    let tokens = doc.tokens();
    let mut failed = None;
    for (i, (req, occ)) in query.aspect_requirements.iter().zip(&per_requirement).enumerate() {
        let Some(required) = req.tag.tag() else {
            continue;
        };
        let satisfied = occ.iter().any(|o| {
            tokens
                .iter()
                .zip(tagging.tags())
                .any(|(t, &tag)| tag == required && overlaps(o, t.start, t.end))
        });
        if !satisfied {
            failed = Some((i, required));
            break;
        }
    }
    for occ in per_requirement {
        spans.extend(occ);
    }
    spans.sort_by(|a, b| (a.start, a.end, &a.pattern).cmp(&(b.start, b.end, &b.pattern)));
    spans.dedup();

    let rule = match failed {
        None => "keywords matched; every aspect requirement tagged as required".to_string(),
        Some((i, tag)) => format!("aspect requirement {} has no keyword tagged {}", i + 1, tag_name(tag)),
    };
    Ok(MatchOutcome {
        matched: failed.is_none(),
        rationale: rationale(doc, spans, Some(ClassifierOutput::Aspects(tagging.spans().to_vec())), rule),
        classified: true,
    })
}

fn tag_name(tag: AspectTag) -> &'static str {
    match tag {
        AspectTag::Null => "O",
        other => other.as_str(),
    }
}

/// Optional keyword prefilter, then stance toward the claim equal to the target.
pub fn match_sd(
    query: &StanceQuery,
    doc: &CleanDocument,
    backend: &dyn ClassifierBackend,
) -> Result<MatchOutcome, MatchError> {
    let spans = match &query.keywords {
        Some(expr) => {
            let km = matches_keywords(expr, doc);
            if !km.matched {
                return Ok(keyword_miss(doc, km));
            }
            km.spans
        }
        None => Vec::new(),
    };
    let claim = CleanDocument::from_text("claim", &query.claim);
    let label = backend.stance(&claim, doc).map_err(annotate(doc))?.label;
    let target = query.target_stance.label();
    let matched = label == target;
    let rule = format!(
        "stance {label} {} {target}",
        if matched { "==" } else { "!=" }
    );
    Ok(MatchOutcome {
        matched,
        rationale: rationale(doc, spans, Some(ClassifierOutput::Stance(label)), rule),
        classified: true,
    })
}

pub fn match_query(
    query: &Query,
    doc: &CleanDocument,
    backend: &dyn ClassifierBackend,
) -> Result<MatchOutcome, MatchError> {
    match query {
        Query::KeywordOnly(q) => Ok(match_keywords_only(q, doc)),
        Query::Sentiment(q) => match_sa(q, doc, backend),
        Query::Aspect(q) => match_absa(q, doc, backend),
        Query::Stance(q) => match_sd(q, doc, backend),
    }
}
