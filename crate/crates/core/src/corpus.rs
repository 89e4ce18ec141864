//! Document ingestion and text cleaning.
//!
//! Raw records are read from JSON Lines or CSV, cleaned into lowercase
//! ASCII text and sealed into an immutable [`Corpus`]. Every cleaned
//! character keeps a pointer back to the raw character it came from so
//! match spans can be shown against the original text.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("duplicate document id {0:?}")]
    DuplicateId(String),
    #[error("invalid cleaned document {id:?}: {reason}")]
    InvalidDocument { id: String, reason: String },
}

impl CorpusError {
    fn malformed(line: usize, reason: impl Into<String>) -> Self {
        CorpusError::MalformedRecord {
            line,
            reason: reason.into(),
        }
    }
}

/// Input file layout accepted by [`ingest`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Jsonl,
    Csv,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" | "ndjson" => Ok(Format::Jsonl),
            "csv" => Ok(Format::Csv),
            other => Err(format!("unknown corpus format {other:?} (expected jsonl or csv)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawDocument {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    /// Passed through untouched for evaluation tooling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<serde_json::Value>,
}

/// Output of [`clean_text`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cleaned {
    pub text: String,
    /// `char_map[i]` is the index (in chars) of the raw character that
    /// produced cleaned character `i`.
    pub char_map: Vec<usize>,
}

const PUNCTUATION_KEPT: &str = "#@'-.,!?%$&/():;";

fn is_retained(c: char) -> bool {
    c.is_ascii_lowercase() || c.is_ascii_digit() || c == ' ' || PUNCTUATION_KEPT.contains(c)
}

/// Maps one raw character to at most one retained character.
///
/// The character is NFKC-normalized, lowercased and stripped of combining
/// marks. If exactly one retained character survives it is returned;
/// characters that vanish or expand to several retained characters
/// (ligatures, vulgar fractions) are dropped.
pub fn normalize_char(ch: char) -> Option<char> {
    if ch.is_whitespace() {
        return Some(' ');
    }
    if ch.is_ascii() {
        let c = ch.to_ascii_lowercase();
        return is_retained(c).then_some(c);
    }
    let mut kept = None;
    let mut count = 0;
    for composed in std::iter::once(ch).nfkc() {
        for lower in composed.to_lowercase() {
            for d in std::iter::once(lower).nfd() {
                if is_combining_mark(d) {
                    continue;
                }
                let d = if d.is_whitespace() { ' ' } else { d };
                if is_retained(d) {
                    count += 1;
                    kept = Some(d);
                }
            }
        }
    }
    if count == 1 {
        kept
    } else {
        None
    }
}

fn starts_with_at(chars: &[(char, usize)], at: usize, pat: &str) -> bool {
    let mut i = at;
    for p in pat.chars() {
        match chars.get(i) {
            Some((c, _)) if *c == p => i += 1,
            _ => return false,
        }
    }
    true
}

fn url_starts_at(chars: &[(char, usize)], at: usize) -> bool {
    if starts_with_at(chars, at, "http://") || starts_with_at(chars, at, "https://") {
        return true;
    }
    starts_with_at(chars, at, "www.")
        && (at == 0 || !chars[at - 1].0.is_ascii_alphanumeric())
}

fn strip_urls(chars: Vec<(char, usize)>) -> Vec<(char, usize)> {
    let mut out = Vec::with_capacity(chars.len());
    let mut i = 0;
    while i < chars.len() {
        if url_starts_at(&chars, i) {
            while i < chars.len() && chars[i].0 != ' ' {
                i += 1;
            }
        } else {
            out.push(chars[i]);
            i += 1;
        }
    }
    out
}

/// Cleans raw text: lowercase, URLs and emoji removed, hashtags and
/// handles kept, whitespace collapsed and trimmed.
///
/// The output contains only lowercase ASCII letters, digits, single
/// spaces and the punctuation `# @ ' - . , ! ? % $ & / ( ) : ;`.
pub fn clean_text(raw: &str) -> Cleaned {
    let filtered: Vec<(char, usize)> = raw
        .chars()
        .enumerate()
        .filter_map(|(idx, ch)| normalize_char(ch).map(|c| (c, idx)))
        .collect();
    let filtered = strip_urls(filtered);

    let mut text = String::with_capacity(filtered.len());
    let mut char_map = Vec::with_capacity(filtered.len());
    for (c, idx) in filtered {
        if c == ' ' && (text.is_empty() || text.ends_with(' ')) {
            continue;
        }
        text.push(c);
        char_map.push(idx);
    }
    if text.ends_with(' ') {
        text.pop();
        char_map.pop();
    }
    Cleaned { text, char_map }
}

/// Byte span of one whitespace-delimited token in cleaned text.
///
/// Cleaned text is ASCII, so byte offsets and character offsets coincide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSpan {
    pub start: usize,
    pub end: usize,
}

pub fn whitespace_tokens(text: &str) -> Vec<TokenSpan> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, b) in text.bytes().enumerate() {
        if b.is_ascii_whitespace() {
            if let Some(s) = start.take() {
                spans.push(TokenSpan { start: s, end: i });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        spans.push(TokenSpan {
            start: s,
            end: text.len(),
        });
    }
    spans
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CleanDocumentRepr", into = "CleanDocumentRepr")]
pub struct CleanDocument {
    id: String,
    text: String,
    char_map: Vec<usize>,
    source: Option<String>,
    timestamp: Option<String>,
    gold: Option<serde_json::Value>,
}

impl CleanDocument {
    pub fn from_raw(raw: RawDocument) -> Self {
        let Cleaned { text, char_map } = clean_text(&raw.text);
        CleanDocument {
            id: raw.id,
            text,
            char_map,
            source: raw.source,
            timestamp: raw.timestamp,
            gold: raw.gold,
        }
    }

    /// Convenience for tests and ad-hoc classification.
    pub fn from_text(id: impl Into<String>, text: &str) -> Self {
        Self::from_raw(RawDocument {
            id: id.into(),
            text: text.to_string(),
            source: None,
            timestamp: None,
            gold: None,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn char_map(&self) -> &[usize] {
        &self.char_map
    }

    pub fn source(&self) -> Option<&str> {
        self.source.as_deref()
    }

    pub fn timestamp(&self) -> Option<&str> {
        self.timestamp.as_deref()
    }

    pub fn gold(&self) -> Option<&serde_json::Value> {
        self.gold.as_ref()
    }

    pub fn tokens(&self) -> Vec<TokenSpan> {
        whitespace_tokens(&self.text)
    }

    pub fn token_strings(&self) -> Vec<&str> {
        self.text.split_ascii_whitespace().collect()
    }

    /// Maps a cleaned `[start, end)` span back to raw character indices.
    pub fn raw_span(&self, start: usize, end: usize) -> Option<(usize, usize)> {
        if start >= end || end > self.char_map.len() {
            return None;
        }
        Some((self.char_map[start], self.char_map[end - 1] + 1))
    }

    fn validate(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if let Some(c) = self.text.chars().find(|c| !is_retained(*c)) {
            return Err(format!("character {c:?} outside the cleaned alphabet"));
        }
        if self.char_map.len() != self.text.len() {
            return Err("char_map length differs from text length".into());
        }
        if self.char_map.windows(2).any(|w| w[0] >= w[1]) {
            return Err("char_map is not strictly increasing".into());
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct CleanDocumentRepr {
    id: String,
    text: String,
    char_map: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    timestamp: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gold: Option<serde_json::Value>,
}

impl TryFrom<CleanDocumentRepr> for CleanDocument {
    type Error = CorpusError;

    fn try_from(r: CleanDocumentRepr) -> Result<Self, Self::Error> {
        let doc = CleanDocument {
            id: r.id,
            text: r.text,
            char_map: r.char_map,
            source: r.source,
            timestamp: r.timestamp,
            gold: r.gold,
        };
        doc.validate().map_err(|reason| CorpusError::InvalidDocument {
            id: doc.id.clone(),
            reason,
        })?;
        Ok(doc)
    }
}

impl From<CleanDocument> for CleanDocumentRepr {
    fn from(d: CleanDocument) -> Self {
        CleanDocumentRepr {
            id: d.id,
            text: d.text,
            char_map: d.char_map,
            source: d.source,
            timestamp: d.timestamp,
            gold: d.gold,
        }
    }
}

/// A sealed, immutable collection of cleaned documents in insertion order.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "CorpusRepr", into = "CorpusRepr")]
pub struct Corpus {
    corpus_id: String,
    created_at: DateTime<Utc>,
    documents: Arc<[CleanDocument]>,
    index: Arc<HashMap<String, usize>>,
}

impl Corpus {
    /// Seals `documents` under a freshly generated id.
    pub fn seal(documents: Vec<CleanDocument>) -> Result<Self, CorpusError> {
        Self::seal_with_id(format!("c-{}", uuid::Uuid::new_v4().simple()), documents)
    }

    pub fn seal_with_id(
        corpus_id: impl Into<String>,
        documents: Vec<CleanDocument>,
    ) -> Result<Self, CorpusError> {
        Self::assemble(corpus_id.into(), Utc::now(), documents)
    }

    fn assemble(
        corpus_id: String,
        created_at: DateTime<Utc>,
        documents: Vec<CleanDocument>,
    ) -> Result<Self, CorpusError> {
        let mut index = HashMap::with_capacity(documents.len());
        for (i, doc) in documents.iter().enumerate() {
            if index.insert(doc.id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId(doc.id.clone()));
            }
        }
        Ok(Corpus {
            corpus_id,
            created_at,
            documents: documents.into(),
            index: Arc::new(index),
        })
    }

    pub fn corpus_id(&self) -> &str {
        &self.corpus_id
    }

    pub fn created_at(&self) -> DateTime<Utc> {
        self.created_at
    }

    pub fn documents(&self) -> &[CleanDocument] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&CleanDocument> {
        self.index.get(id).map(|&i| &self.documents[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.documents.iter().map(|d| d.id())
    }
}

#[derive(Serialize, Deserialize)]
struct CorpusRepr {
    corpus_id: String,
    created_at: DateTime<Utc>,
    documents: Vec<CleanDocument>,
}

impl TryFrom<CorpusRepr> for Corpus {
    type Error = CorpusError;

    fn try_from(r: CorpusRepr) -> Result<Self, Self::Error> {
        Corpus::assemble(r.corpus_id, r.created_at, r.documents)
    }
}

impl From<Corpus> for CorpusRepr {
    fn from(c: Corpus) -> Self {
        CorpusRepr {
            corpus_id: c.corpus_id,
            created_at: c.created_at,
            documents: c.documents.to_vec(),
        }
    }
}

fn check_record(line: usize, rec: &RawDocument, seen: &mut HashSet<String>) -> Result<(), CorpusError> {
    if rec.id.is_empty() {
        return Err(CorpusError::malformed(line, "empty id"));
    }
    if !seen.insert(rec.id.clone()) {
        return Err(CorpusError::DuplicateId(rec.id.clone()));
    }
    Ok(())
}

fn read_jsonl<R: Read>(reader: R) -> Result<Vec<RawDocument>, CorpusError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(reader).split(b'\n').enumerate() {
        let line_no = i + 1;
        let mut bytes = line?;
        if line_no == 1 && bytes.starts_with(&[0xEF, 0xBB, 0xBF]) {
            bytes.drain(..3);
        }
        let text = std::str::from_utf8(&bytes)
            .map_err(|_| CorpusError::malformed(line_no, "invalid UTF-8"))?;
        if text.trim().is_empty() {
            continue;
        }
        let rec: RawDocument = serde_json::from_str(text)
            .map_err(|e| CorpusError::malformed(line_no, e.to_string()))?;
        check_record(line_no, &rec, &mut seen)?;
        out.push(rec);
    }
    Ok(out)
}

fn read_csv<R: Read>(reader: R) -> Result<Vec<RawDocument>, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(e, 1))?.clone();
    let column = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (Some(id_col), Some(text_col)) = (column("id"), column("text")) else {
        return Err(CorpusError::malformed(1, "header row must name id and text columns"));
    };
    let source_col = column("source");
    let ts_col = column("timestamp");

    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for result in rdr.records() {
        let record = result.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            csv_error(e, line)
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |col: usize| record.get(col).map(str::to_string);
        let opt = |col: Option<usize>| col.and_then(field).filter(|s| !s.is_empty());
        let rec = RawDocument {
            id: field(id_col).ok_or_else(|| CorpusError::malformed(line, "missing id"))?,
            text: field(text_col).ok_or_else(|| CorpusError::malformed(line, "missing text"))?,
            source: opt(source_col),
            timestamp: opt(ts_col),
            gold: None,
        };
        check_record(line, &rec, &mut seen)?;
        out.push(rec);
    }
    Ok(out)
}

fn csv_error(e: csv::Error, line: usize) -> CorpusError {
    match e.kind() {
        csv::ErrorKind::Io(_) => match e.into_kind() {
            csv::ErrorKind::Io(io) => CorpusError::Io(io),
            _ => unreachable!(),
        },
        csv::ErrorKind::Utf8 { .. } => CorpusError::malformed(line, "invalid UTF-8"),
        _ => CorpusError::malformed(line, e.to_string()),
    }
}

/// Parses raw records without cleaning them.
pub fn read_records<R: Read>(reader: R, format: Format) -> Result<Vec<RawDocument>, CorpusError> {
    match format {
        Format::Jsonl => read_jsonl(reader),
        Format::Csv => read_csv(reader),
    }
}

/// Parses and cleans `bytes`, sealing the result under `corpus_id`.
pub fn ingest_bytes_with_id(
    bytes: &[u8],
    format: Format,
    corpus_id: impl Into<String>,
) -> Result<Corpus, CorpusError> {
    let docs = read_records(bytes, format)?
        .into_iter()
        .map(CleanDocument::from_raw)
        .collect();
    Corpus::seal_with_id(corpus_id, docs)
}

pub fn ingest_reader<R: Read>(reader: R, format: Format) -> Result<Corpus, CorpusError> {
    let docs = read_records(reader, format)?
        .into_iter()
        .map(CleanDocument::from_raw)
        .collect();
    Corpus::seal(docs)
}

/// Reads `path`, cleans every record and returns a sealed corpus.
pub fn ingest(path: impl AsRef<Path>, format: Format) -> Result<Corpus, CorpusError> {
    ingest_reader(fs::File::open(path)?, format)
}
