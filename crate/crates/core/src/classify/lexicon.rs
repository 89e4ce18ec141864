//! Deterministic word-list baseline for all three tasks.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use super::{
    AspectTag, AspectTagging, Capabilities, ClassifierBackend, ClassifyError, Prediction,
    SentimentLabel, StanceLabel,
};
use crate::corpus::CleanDocument;

const BUNDLED_LEXICON: &str = include_str!("../../data/polarity_lexicon.tsv");
const BUNDLED_STOPWORDS: &str = include_str!("../../data/stopwords.txt");

pub const DEFAULT_THETA_REL: f64 = 0.15;
pub const DEFAULT_WINDOW: usize = 3;

/// Strips surrounding punctuation so "good!" looks up as "good".
/// Hashtag and handle sigils are kept.
pub fn lexical_form(token: &str) -> &str {
    token.trim_matches(|c: char| !c.is_ascii_alphanumeric() && c != '#' && c != '@')
}

/// Word → polarity (+1 / −1).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    polarity: HashMap<String, i8>,
}

impl Lexicon {
    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, i8)>,
        S: Into<String>,
    {
        Lexicon {
            polarity: pairs
                .into_iter()
                .map(|(w, p)| (w.into(), p.signum()))
                .filter(|(_, p)| *p != 0)
                .collect(),
        }
    }

    /// Parses `word<TAB>+1|-1` lines; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut polarity = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split_whitespace();
            let (Some(word), Some(value), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(format!("lexicon line {}: expected `word polarity`", i + 1));
            };
            let value: i8 = match value {
                "+1" | "1" => 1,
                "-1" => -1,
                other => return Err(format!("lexicon line {}: bad polarity {other:?}", i + 1)),
            };
            polarity.insert(word.to_lowercase(), value);
        }
        Ok(Lexicon { polarity })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, String> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text)
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_LEXICON).expect("bundled lexicon parses")
    }

    pub fn get(&self, word: &str) -> Option<i8> {
        self.polarity.get(word).copied()
    }

    pub fn len(&self) -> usize {
        self.polarity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.polarity.is_empty()
    }

    /// Same words, every polarity flipped.
    pub fn negated(&self) -> Self {
        Lexicon {
            polarity: self.polarity.iter().map(|(w, p)| (w.clone(), -p)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stopwords(HashSet<String>);

impl Stopwords {
    pub fn parse(text: &str) -> Self {
        Stopwords(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_lowercase)
                .collect(),
        )
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_STOPWORDS)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn polarity_label(sum: i64) -> SentimentLabel {
    match sum {
        s if s > 0 => SentimentLabel::Positive,
        s if s < 0 => SentimentLabel::Negative,
        _ => SentimentLabel::Neutral,
    }
}

pub fn lexicon_sentiment(doc: &CleanDocument, lexicon: &Lexicon) -> SentimentLabel {
    let sum: i64 = doc
        .token_strings()
        .into_iter()
        .filter_map(|t| lexicon.get(lexical_form(t)))
        .map(i64::from)
        .sum();
    polarity_label(sum)
}

/// Tags each content token with the polarity of the nearest lexicon word
/// at most `window` tokens away; ties go to the earlier word.
pub fn lexicon_aspects(
    doc: &CleanDocument,
    lexicon: &Lexicon,
    stopwords: &Stopwords,
    window: usize,
) -> AspectTagging {
    let tokens = doc.tokens();
    let text = doc.text();
    let forms: Vec<&str> = tokens.iter().map(|t| lexical_form(&text[t.start..t.end])).collect();
    let hits: Vec<Option<i8>> = forms.iter().map(|f| lexicon.get(f)).collect();

    let tags = (0..forms.len())
        .map(|i| {
            if hits[i].is_some() || forms[i].is_empty() || stopwords.contains(forms[i]) {
                return AspectTag::Null;
            }
            let lo = i.saturating_sub(window);
            let hi = (i + window).min(forms.len().saturating_sub(1));
            let nearest = (lo..=hi)
                .filter(|&j| j != i)
                .filter_map(|j| hits[j].map(|p| (i.abs_diff(j), j, p)))
                .min_by_key(|&(dist, j, _)| (dist, j));
            match nearest {
                Some((_, _, p)) if p > 0 => AspectTag::Positive,
                Some(_) => AspectTag::Negative,
                None => AspectTag::Null,
            }
        })
        .collect();
    AspectTagging::from_tags(tags, &tokens).expect("one tag per token")
}

fn content_words<'a>(doc: &'a CleanDocument, stopwords: &Stopwords) -> HashSet<&'a str> {
    doc.token_strings()
        .into_iter()
        .map(lexical_form)
        .filter(|f| !f.is_empty() && !stopwords.contains(f))
        .collect()
}

/// Jaccard overlap of content-word sets; two empty sets overlap 0.
pub fn jaccard_overlap(a: &CleanDocument, b: &CleanDocument, stopwords: &Stopwords) -> f64 {
    let a = content_words(a, stopwords);
    let b = content_words(b, stopwords);
    let union = a.union(&b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

pub fn lexicon_stance(
    claim: &CleanDocument,
    doc: &CleanDocument,
    lexicon: &Lexicon,
    stopwords: &Stopwords,
    theta_rel: f64,
) -> StanceLabel {
    if jaccard_overlap(claim, doc, stopwords) < theta_rel {
        return StanceLabel::Unrelated;
    }
    use SentimentLabel::*;
    match (lexicon_sentiment(claim, lexicon), lexicon_sentiment(doc, lexicon)) {
        (Positive, Positive) | (Negative, Negative) => StanceLabel::Agree,
        (Positive, Negative) | (Negative, Positive) => StanceLabel::Disagree,
        _ => StanceLabel::Discuss,
    }
}

/// In-process backend over a polarity lexicon. Pure and freely shareable.
#[derive(Debug, Clone)]
pub struct LexiconBackend {
    name: String,
    lexicon: Arc<Lexicon>,
    stopwords: Arc<Stopwords>,
    theta_rel: f64,
    window: usize,
}

impl LexiconBackend {
    pub fn new(name: impl Into<String>, lexicon: Lexicon) -> Self {
        LexiconBackend {
            name: name.into(),
            lexicon: Arc::new(lexicon),
            stopwords: Arc::new(Stopwords::bundled()),
            theta_rel: DEFAULT_THETA_REL,
            window: DEFAULT_WINDOW,
        }
    }

    /// Bundled lexicon and default thresholds.
    pub fn bundled() -> Self {
        Self::new("lexicon", Lexicon::bundled())
    }

    pub fn with_theta_rel(mut self, theta_rel: f64) -> Self {
        assert!((0.0..=1.0).contains(&theta_rel), "theta_rel must lie in [0, 1]");
        self.theta_rel = theta_rel;
        self
    }

    pub fn with_window(mut self, window: usize) -> Self {
        self.window = window;
        self
    }

    pub fn with_stopwords(mut self, stopwords: Stopwords) -> Self {
        self.stopwords = Arc::new(stopwords);
        self
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }
}

impl ClassifierBackend for LexiconBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities::ALL
    }

    fn sentiment(&self, doc: &CleanDocument) -> Result<Prediction<SentimentLabel>, ClassifyError> {
        Ok(Prediction::bare(lexicon_sentiment(doc, &self.lexicon)))
    }

    fn aspects(&self, doc: &CleanDocument) -> Result<AspectTagging, ClassifyError> {
        Ok(lexicon_aspects(doc, &self.lexicon, &self.stopwords, self.window))
    }

    fn stance(
        &self,
        claim: &CleanDocument,
        doc: &CleanDocument,
    ) -> Result<Prediction<StanceLabel>, ClassifyError> {
        Ok(Prediction::bare(lexicon_stance(
            claim,
            doc,
            &self.lexicon,
            &self.stopwords,
            self.theta_rel,
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn doc(text: &str) -> CleanDocument {
        CleanDocument::from_text("d", text)
    }

    fn good_bad() -> Lexicon {
        Lexicon::from_pairs([("good", 1), ("bad", -1)])
    }

    #[test]
    fn bundled_data() {
        let lex = Lexicon::bundled();
        assert!(lex.len() > 2_000, "{} entries", lex.len());
        assert_eq!(lex.get("great"), Some(1));
        assert_eq!(lex.get("terrible"), Some(-1));
        let stop = Stopwords::bundled();
        assert_eq!(stop.len(), 50);
        assert!(stop.contains("the") && !stop.contains("a"));
    }

    #[test]
    fn sentence_sentiment() {
        let lex = good_bad();
        assert_eq!(lexicon_sentiment(&doc("bill gates is good"), &lex), SentimentLabel::Positive);
        assert_eq!(lexicon_sentiment(&doc(""), &lex), SentimentLabel::Neutral);
        assert_eq!(lexicon_sentiment(&doc("bad bad good"), &lex), SentimentLabel::Negative);
        assert_eq!(lexicon_sentiment(&doc("good, bad!"), &lex), SentimentLabel::Neutral);
        assert_eq!(lexicon_sentiment(&doc("Good!!"), &lex), SentimentLabel::Positive);
    }

    #[test]
    fn aspect_window() {
        let lex = Lexicon::from_pairs([("good", 1)]);
        let stop = Stopwords::bundled();
        let t = lexicon_aspects(&doc("good coffee"), &lex, &stop, 2);
        assert_eq!(t.tags(), [AspectTag::Null, AspectTag::Positive]);
        assert_eq!(t.spans().len(), 1);

        let t = lexicon_aspects(&doc("coffee"), &lex, &stop, 2);
        assert_eq!(t.tags(), [AspectTag::Null]);
        assert!(t.spans().is_empty());

        let t = lexicon_aspects(&doc("good a b c d"), &lex, &stop, 2);
        use AspectTag::*;
        assert_eq!(t.tags(), [Null, Positive, Positive, Null, Null]);
    }

    #[test]
    fn aspect_ties_go_to_the_earlier_word() {
        let lex = good_bad();
        let t = lexicon_aspects(&doc("good coffee bad"), &lex, &Stopwords::bundled(), 3);
        assert_eq!(t.tags()[1], AspectTag::Positive);
        let t = lexicon_aspects(&doc("bad coffee good"), &lex, &Stopwords::bundled(), 3);
        assert_eq!(t.tags()[1], AspectTag::Negative);
        let t = lexicon_aspects(&doc("the good coffee"), &lex, &Stopwords::bundled(), 0);
        assert!(t.spans().is_empty());
    }

    #[test]
    fn stance_rules() {
        let lex = good_bad();
        let stop = Stopwords::bundled();
        let claim = doc("gates is good");
        let st = |d: &str| lexicon_stance(&claim, &doc(d), &lex, &stop, 0.2);
        assert_eq!(st("weather today"), StanceLabel::Unrelated);
        assert_eq!(st("gates is good"), StanceLabel::Agree);
        assert_eq!(st("gates is bad"), StanceLabel::Disagree);
        assert_eq!(st("gates is here"), StanceLabel::Discuss);
        assert_eq!(
            jaccard_overlap(&claim, &doc("gates is bad"), &stop),
            1.0 / 3.0
        );
        assert_eq!(jaccard_overlap(&doc(""), &doc("the"), &stop), 0.0);
    }

    #[test]
    fn backend_capabilities() {
        let b = LexiconBackend::bundled();
        assert_eq!(b.capabilities(), Capabilities::ALL);
        assert!(b.require(super::super::Capability::Stance).is_ok());
    }

    fn sentence() -> impl Strategy<Value = String> {
        prop::collection::vec(
            prop_oneof![
                Just("good"), Just("bad"), Just("gates"), Just("cure"),
                Just("covid"), Just("the"), Just("is"), Just("water"), Just("great"),
            ],
            0..8,
        )
        .prop_map(|w| w.join(" "))
    }

    proptest! {
        #[test]
        fn negating_the_lexicon_keeps_every_stance(claim in sentence(), text in sentence()) {
            let lex = Lexicon::from_pairs([("good", 1), ("bad", -1), ("great", 1)]);
            let stop = Stopwords::bundled();
            let (c, d) = (doc(&claim), doc(&text));
            let before = lexicon_stance(&c, &d, &lex, &stop, 0.15);
            let after = lexicon_stance(&c, &d, &lex.negated(), &stop, 0.15);
            prop_assert_eq!(before, after);
            // Negating the lexicon for the text alone swaps agreement.
            let sc = lexicon_sentiment(&c, &lex);
            let sd = lexicon_sentiment(&d, &lex.negated());
            if before == StanceLabel::Agree {
                prop_assert!(sc != sd && sd != SentimentLabel::Neutral);
            }
        }

        #[test]
        fn backend_is_pure(text in sentence()) {
            let b = LexiconBackend::bundled();
            let d = doc(&text);
            prop_assert_eq!(b.sentiment(&d).unwrap(), b.sentiment(&d).unwrap());
            prop_assert_eq!(b.aspects(&d).unwrap(), b.aspects(&d).unwrap());
        }
    }
}
