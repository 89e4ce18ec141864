//! Analyst queries: keyword expressions, claim templates, the match rules
//! for each query kind, corpus-wide search and the iterative session loop.
//!
//! Query files are JSON. A keyword is either a bare string (substring
//! match) or `{"pattern": "...", "mode": "token"}`:
//!
//! ```json
//! {"kind": "aspect",
//!  "keywords": [["covid", "coronavirus"], ["water"]],
//!  "aspect_requirements": [
//!    {"keywords": ["water"], "tag": "positive"},
//!    {"keywords": ["covid", "coronavirus"], "tag": "any"}]}
//! ```

mod claims;
mod matching;
mod search;
mod session;

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::classify::{AspectTag, Capability, SentimentLabel, StanceLabel};
use crate::corpus::clean_text;

pub use claims::{expand_claims, ClaimError, ClaimTemplate, DEFAULT_NEGATION_PREFIX};
pub use matching::{
    match_absa, match_query, match_sa, match_sd, matches_keywords, ClassifierOutput, KeywordMatch,
    MatchError, MatchOutcome, MatchRationale, MatchedSpan,
};
pub use search::{run_search, SearchError, SearchOptions, SearchResult, SkippedDoc};
pub use session::{FeedbackMark, HistoryEntry, SearchSession, SessionError, SessionRegistry};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueryError {
    #[error("keyword pattern is empty")]
    EmptyPattern,
    #[error("keyword {0:?} is not in cleaned form (expected {1:?})")]
    UncleanPattern(String, String),
    #[error("keyword group {0} is empty")]
    EmptyGroup(usize),
    #[error("aspect requirement {0} has no keywords")]
    EmptyRequirement(usize),
    #[error("aspect query needs at least one requirement with a specific tag")]
    NoTaggedRequirement,
    #[error("invalid query JSON: {0}")]
    Json(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    /// Plain substring containment ("as strings, not words").
    #[default]
    Substring,
    /// Whole-token equality: the occurrence must be bounded by whitespace,
    /// punctuation or the ends of the text.
    Token,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Keyword {
    pattern: String,
    mode: MatchMode,
}

impl Keyword {
    pub fn new(pattern: impl Into<String>, mode: MatchMode) -> Result<Self, QueryError> {
        let pattern = pattern.into();
        if pattern.is_empty() {
            return Err(QueryError::EmptyPattern);
        }
        let cleaned = clean_text(&pattern).text;
        if cleaned != pattern {
            return Err(QueryError::UncleanPattern(pattern, cleaned));
        }
        Ok(Keyword { pattern, mode })
    }

    pub fn substring(pattern: &str) -> Result<Self, QueryError> {
        Self::new(pattern, MatchMode::Substring)
    }

    pub fn token(pattern: &str) -> Result<Self, QueryError> {
        Self::new(pattern, MatchMode::Token)
    }

    pub fn pattern(&self) -> &str {
        &self.pattern
    }

    pub fn mode(&self) -> MatchMode {
        self.mode
    }
}

impl fmt::Display for Keyword {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.mode {
            MatchMode::Substring => write!(f, "{:?}", self.pattern),
            MatchMode::Token => write!(f, "token:{:?}", self.pattern),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum KeywordRepr {
    Bare(String),
    Full {
        pattern: String,
        #[serde(default)]
        mode: MatchMode,
    },
}

impl Serialize for Keyword {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.mode {
            MatchMode::Substring => KeywordRepr::Bare(self.pattern.clone()),
            MatchMode::Token => KeywordRepr::Full {
                pattern: self.pattern.clone(),
                mode: self.mode,
            },
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Keyword {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let (pattern, mode) = match KeywordRepr::deserialize(d)? {
            KeywordRepr::Bare(p) => (p, MatchMode::Substring),
            KeywordRepr::Full { pattern, mode } => (pattern, mode),
        };
        Keyword::new(pattern, mode).map_err(serde::de::Error::custom)
    }
}

/// Conjunction of OR-groups. No groups matches every document.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KeywordExpr {
    groups: Vec<Vec<Keyword>>,
}

impl KeywordExpr {
    pub fn new(groups: Vec<Vec<Keyword>>) -> Result<Self, QueryError> {
        let expr = KeywordExpr { groups };
        expr.validate()?;
        Ok(expr)
    }

    /// Matches everything.
    pub fn any() -> Self {
        KeywordExpr::default()
    }

    /// Builds an expression of substring keywords from string groups.
    pub fn substrings(groups: &[&[&str]]) -> Result<Self, QueryError> {
        Self::from_patterns(groups, MatchMode::Substring)
    }

    pub fn from_patterns(groups: &[&[&str]], mode: MatchMode) -> Result<Self, QueryError> {
        let groups = groups
            .iter()
            .map(|g| g.iter().map(|p| Keyword::new(*p, mode)).collect())
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(groups)
    }

    pub fn groups(&self) -> &[Vec<Keyword>] {
        &self.groups
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Adds an alternative to an existing group.
    pub fn with_alternative(mut self, group: usize, keyword: Keyword) -> Self {
        self.groups[group].push(keyword);
        self
    }

    /// Adds a further required group.
    pub fn with_group(mut self, group: Vec<Keyword>) -> Result<Self, QueryError> {
        self.groups.push(group);
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), QueryError> {
        match self.groups.iter().position(Vec::is_empty) {
            Some(i) => Err(QueryError::EmptyGroup(i)),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RequiredTag {
    /// Only presence of one of the keywords is required.
    Any,
    #[serde(rename = "O")]
    Null,
    Positive,
    Neutral,
    Negative,
}

impl RequiredTag {
    pub fn tag(self) -> Option<AspectTag> {
        match self {
            RequiredTag::Any => None,
            RequiredTag::Null => Some(AspectTag::Null),
            RequiredTag::Positive => Some(AspectTag::Positive),
            RequiredTag::Neutral => Some(AspectTag::Neutral),
            RequiredTag::Negative => Some(AspectTag::Negative),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspectRequirement {
    pub keywords: Vec<Keyword>,
    pub tag: RequiredTag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StanceTarget {
    Agree,
    Disagree,
}

impl StanceTarget {
    pub fn label(self) -> StanceLabel {
        match self {
            StanceTarget::Agree => StanceLabel::Agree,
            StanceTarget::Disagree => StanceLabel::Disagree,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeywordQuery {
    pub keywords: KeywordExpr,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SentimentQuery {
    pub keywords: KeywordExpr,
    pub target_sentiment: SentimentLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AspectQuery {
    pub keywords: KeywordExpr,
    pub aspect_requirements: Vec<AspectRequirement>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StanceQuery {
    /// Optional relevance prefilter; documents failing it never reach the
    /// classifier.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keywords: Option<KeywordExpr>,
    pub claim: String,
    pub target_stance: StanceTarget,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Query {
    KeywordOnly(KeywordQuery),
    Sentiment(SentimentQuery),
    Aspect(AspectQuery),
    Stance(StanceQuery),
}

impl Query {
    pub fn keyword_only(keywords: KeywordExpr) -> Self {
        Query::KeywordOnly(KeywordQuery { keywords })
    }

    pub fn sentiment(keywords: KeywordExpr, target: SentimentLabel) -> Self {
        Query::Sentiment(SentimentQuery {
            keywords,
            target_sentiment: target,
        })
    }

    pub fn aspect(keywords: KeywordExpr, requirements: Vec<AspectRequirement>) -> Self {
        Query::Aspect(AspectQuery {
            keywords,
            aspect_requirements: requirements,
        })
    }

    pub fn stance(keywords: Option<KeywordExpr>, claim: impl Into<String>, target: StanceTarget) -> Self {
        Query::Stance(StanceQuery {
            keywords,
            claim: claim.into(),
            target_stance: target,
        })
    }

    /// Parses and validates a query file.
    pub fn from_json(text: &str) -> Result<Self, QueryError> {
        let q: Query = serde_json::from_str(text).map_err(|e| QueryError::Json(e.to_string()))?;
        q.validate()?;
        Ok(q)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("query serializes")
    }

    pub fn validate(&self) -> Result<(), QueryError> {
        match self {
            Query::KeywordOnly(q) => q.keywords.validate(),
            Query::Sentiment(q) => q.keywords.validate(),
            Query::Aspect(q) => {
                q.keywords.validate()?;
                if let Some(i) = q.aspect_requirements.iter().position(|r| r.keywords.is_empty()) {
                    return Err(QueryError::EmptyRequirement(i));
                }
                if q.aspect_requirements.iter().all(|r| r.tag == RequiredTag::Any) {
                    return Err(QueryError::NoTaggedRequirement);
                }
                Ok(())
            }
            Query::Stance(q) => q.keywords.as_ref().map_or(Ok(()), KeywordExpr::validate),
        }
    }

    /// Classifier capability this query needs, if any.
    pub fn required_capability(&self) -> Option<Capability> {
        match self {
            Query::KeywordOnly(_) => None,
            Query::Sentiment(_) => Some(Capability::Sentiment),
            Query::Aspect(_) => Some(Capability::Aspects),
            Query::Stance(_) => Some(Capability::Stance),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Query::KeywordOnly(_) => "keyword_only",
            Query::Sentiment(_) => "sentiment",
            Query::Aspect(_) => "aspect",
            Query::Stance(_) => "stance",
        }
    }
}
