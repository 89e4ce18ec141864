//! Label spaces, the classifier backend contract and its implementations.
//!
//! Learned models are never embedded here. They sit behind the HTTP
//! protocol implemented by [`remote::RemoteBackend`]; the in-process
//! [`lexicon::LexiconBackend`] is a deterministic stand-in used for
//! pipeline tests and desk-scale runs.

pub mod heads;
pub mod lexicon;
pub mod remote;

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CleanDocument, TokenSpan};

pub use heads::{head_geometry, softmax, HeadGeometry, HeadKind, SoftmaxError, TrainingRecipe};
pub use lexicon::{Lexicon, LexiconBackend, Stopwords};
pub use remote::{RemoteBackend, RemoteConfig};

macro_rules! label_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $wire:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $wire)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            /// Wire name used by the classifier protocol and query files.
            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $wire),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($wire => Ok($name::$variant),)+
                    other => Err(format!(concat!("unknown ", stringify!($name), " {:?}"), other)),
                }
            }
        }
    };
}

label_enum!(
    /// Whole-text sentiment.
    SentimentLabel {
        Positive => "positive",
        Neutral => "neutral",
        Negative => "negative",
    }
);

label_enum!(
    /// Relation of a text to a claim.
    StanceLabel {
        Unrelated => "unrelated",
        Agree => "agree",
        Discuss => "discuss",
        Disagree => "disagree",
    }
);

label_enum!(
    /// Per-token aspect tag. `Null` ("O") marks tokens that are not a
    /// sentiment target.
    AspectTag {
        Null => "O",
        Positive => "positive",
        Neutral => "neutral",
        Negative => "negative",
    }
);

impl AspectTag {
    pub fn polarity(self) -> Option<SentimentLabel> {
        match self {
            AspectTag::Null => None,
            AspectTag::Positive => Some(SentimentLabel::Positive),
            AspectTag::Neutral => Some(SentimentLabel::Neutral),
            AspectTag::Negative => Some(SentimentLabel::Negative),
        }
    }

    pub fn from_polarity(p: SentimentLabel) -> Self {
        match p {
            SentimentLabel::Positive => AspectTag::Positive,
            SentimentLabel::Neutral => AspectTag::Neutral,
            SentimentLabel::Negative => AspectTag::Negative,
        }
    }
}

/// One maximal run of identically tagged target tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AspectSpan {
    pub start_token: usize,
    /// Exclusive.
    pub end_token: usize,
    pub polarity: SentimentLabel,
    pub char_start: usize,
    pub char_end: usize,
}

/// Per-token aspect tags with their derived target spans.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspectTagging {
    tags: Vec<AspectTag>,
    spans: Vec<AspectSpan>,
}

impl AspectTagging {
    /// `tokens` are the cleaned-token character spans the tags align with.
    pub fn from_tags(tags: Vec<AspectTag>, tokens: &[TokenSpan]) -> Result<Self, ClassifyError> {
        if tags.len() != tokens.len() {
            return Err(ClassifyError::Protocol(format!(
                "{} aspect tags for {} tokens",
                tags.len(),
                tokens.len()
            )));
        }
        let mut spans = Vec::new();
        let mut i = 0;
        while i < tags.len() {
            let Some(polarity) = tags[i].polarity() else {
                i += 1;
                continue;
            };
            let start = i;
            while i < tags.len() && tags[i] == tags[start] {
                i += 1;
            }
            spans.push(AspectSpan {
                start_token: start,
                end_token: i,
                polarity,
                char_start: tokens[start].start,
                char_end: tokens[i - 1].end,
            });
        }
        Ok(AspectTagging { tags, spans })
    }

    pub fn tags(&self) -> &[AspectTag] {
        &self.tags
    }

    pub fn spans(&self) -> &[AspectSpan] {
        &self.spans
    }

    /// Rebuilds the tag sequence from the spans alone.
    pub fn expand(spans: &[AspectSpan], len: usize) -> Vec<AspectTag> {
        let mut tags = vec![AspectTag::Null; len];
        for s in spans {
            for t in &mut tags[s.start_token..s.end_token] {
                *t = AspectTag::from_polarity(s.polarity);
            }
        }
        tags
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Capability {
    Sentiment,
    Aspects,
    Stance,
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Capability::Sentiment => "sentiment",
            Capability::Aspects => "aspects",
            Capability::Stance => "stance",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Capabilities {
    pub sentiment: bool,
    pub aspects: bool,
    pub stance: bool,
}

impl Capabilities {
    pub const ALL: Capabilities = Capabilities {
        sentiment: true,
        aspects: true,
        stance: true,
    };

    pub fn only(caps: &[Capability]) -> Self {
        let mut c = Capabilities::default();
        for cap in caps {
            match cap {
                Capability::Sentiment => c.sentiment = true,
                Capability::Aspects => c.aspects = true,
                Capability::Stance => c.stance = true,
            }
        }
        c
    }

    pub fn supports(&self, cap: Capability) -> bool {
        match cap {
            Capability::Sentiment => self.sentiment,
            Capability::Aspects => self.aspects,
            Capability::Stance => self.stance,
        }
    }

    pub fn list(&self) -> Vec<Capability> {
        [Capability::Sentiment, Capability::Aspects, Capability::Stance]
            .into_iter()
            .filter(|c| self.supports(*c))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifyError {
    #[error("backend {backend:?} does not support {capability}")]
    Unsupported {
        backend: String,
        capability: Capability,
    },
    #[error("classifier did not answer within {0:?}")]
    Timeout(Duration),
    #[error("classifier protocol error: {0}")]
    Protocol(String),
    #[error("classifier rejected the request: {0}")]
    Rejected(String),
    #[error("classifier unreachable: {0}")]
    Transport(String),
}

/// A label plus the raw class scores when the backend reports them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction<L> {
    pub label: L,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
}

impl<L> Prediction<L> {
    pub fn bare(label: L) -> Self {
        Prediction { label, scores: None }
    }
}

/// Anything that can answer sentiment, aspect and stance requests.
///
/// Implementations must reject requests outside [`capabilities`] with
/// [`ClassifyError::Unsupported`] and be safe to call from many threads.
///
/// [`capabilities`]: ClassifierBackend::capabilities
pub trait ClassifierBackend: Send + Sync {
    fn name(&self) -> &str;
    fn capabilities(&self) -> Capabilities;
    fn sentiment(&self, doc: &CleanDocument) -> Result<Prediction<SentimentLabel>, ClassifyError>;
    fn aspects(&self, doc: &CleanDocument) -> Result<AspectTagging, ClassifyError>;
    fn stance(
        &self,
        claim: &CleanDocument,
        doc: &CleanDocument,
    ) -> Result<Prediction<StanceLabel>, ClassifyError>;

    fn require(&self, capability: Capability) -> Result<(), ClassifyError> {
        if self.capabilities().supports(capability) {
            Ok(())
        } else {
            Err(ClassifyError::Unsupported {
                backend: self.name().to_string(),
                capability,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::whitespace_tokens;
    use proptest::prelude::*;

    #[test]
    fn wire_names() {
        assert_eq!("agree".parse::<StanceLabel>(), Ok(StanceLabel::Agree));
        assert!("maybe".parse::<StanceLabel>().is_err());
        assert_eq!(AspectTag::Null.as_str(), "O");
        assert_eq!(serde_json::to_string(&AspectTag::Null).unwrap(), "\"O\"");
        assert_eq!(
            serde_json::from_str::<SentimentLabel>("\"neutral\"").unwrap(),
            SentimentLabel::Neutral
        );
    }

    #[test]
    fn spans_are_maximal_identical_runs() {
        use AspectTag::*;
        let text = "the good coffee and bad tea here";
        let tokens = whitespace_tokens(text);
        let tagging =
            AspectTagging::from_tags(vec![Null, Positive, Positive, Negative, Negative, Null, Neutral], &tokens)
                .unwrap();
        let spans = tagging.spans();
        assert_eq!(spans.len(), 3);
        assert_eq!((spans[0].start_token, spans[0].end_token), (1, 3));
        assert_eq!(&text[spans[0].char_start..spans[0].char_end], "good coffee");
        assert_eq!(spans[1].polarity, SentimentLabel::Negative);
        assert_eq!(&text[spans[1].char_start..spans[1].char_end], "and bad");
        assert_eq!(&text[spans[2].char_start..spans[2].char_end], "here");
    }

    #[test]
    fn tag_count_must_match_tokens() {
        let tokens = whitespace_tokens("a b c");
        assert!(matches!(
            AspectTagging::from_tags(vec![AspectTag::Null; 2], &tokens),
            Err(ClassifyError::Protocol(_))
        ));
    }

    proptest! {
        #[test]
        fn expanding_spans_restores_tags(tags in prop::collection::vec(0usize..4, 0..40)) {
            let tags: Vec<AspectTag> = tags.into_iter().map(|i| AspectTag::ALL[i]).collect();
            let text = vec!["w"; tags.len()].join(" ");
            let tokens = whitespace_tokens(&text);
            let tagging = AspectTagging::from_tags(tags.clone(), &tokens).unwrap();
            prop_assert_eq!(AspectTagging::expand(tagging.spans(), tags.len()), tags);
            for w in tagging.spans().windows(2) {
                prop_assert!(w[0].end_token <= w[1].start_token);
            }
        }
    }
}
