//! Training and validation set assembly from upstream labelled corpora.
//!
//! Source files are never bundled. Each adapter in [`adapters`] reads one
//! upstream format; the builders in [`recipes`] take fixed prefixes of
//! those sources in file order and verify every count, failing rather than
//! padding. [`synthetic`] writes stand-in sources with the real sizes.

pub mod adapters;
pub mod recipes;
pub mod synthetic;

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{SentimentLabel, StanceLabel};
use crate::corpus::clean_text;

pub use recipes::{build_absa, build_sa, build_sd, AbsaRecipe, AbsaSources, SaRecipe, SaSources, SdRecipe, SdSources, Take};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{source_name} line {line}: {reason}")]
    Parse {
        source_name: String,
        line: usize,
        reason: String,
    },
    #[error("star rating {0} outside 1..=5")]
    OutOfRange(i64),
    #[error("{source_name}: need {needed} {class} examples, found {found}")]
    InsufficientExamples {
        source_name: String,
        class: String,
        needed: usize,
        found: usize,
    },
    #[error("{source_name}: expected {expected} items, found {found}")]
    CountMismatch {
        source_name: String,
        expected: usize,
        found: usize,
    },
    #[error("placeholder replacement needs at least one name")]
    EmptyNameList,
    #[error("source manifest has no entry for {0:?}")]
    MissingSource(String),
}

impl DatasetError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DatasetError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn parse(source_name: &str, line: usize, reason: impl Into<String>) -> Self {
        DatasetError::Parse {
            source_name: source_name.to_string(),
            line,
            reason: reason.into(),
        }
    }
}

/// Star ratings: 1-2 negative, 3 neutral, 4-5 positive.
pub fn map_stars(stars: i64) -> Result<SentimentLabel, DatasetError> {
    match stars {
        1 | 2 => Ok(SentimentLabel::Negative),
        3 => Ok(SentimentLabel::Neutral),
        4 | 5 => Ok(SentimentLabel::Positive),
        other => Err(DatasetError::OutOfRange(other)),
    }
}

/// Five-way treebank labels, numbered 0 (very negative) to 4 (very positive).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sst5 {
    VeryNegative,
    Negative,
    Neutral,
    Positive,
    VeryPositive,
}

impl Sst5 {
    pub fn from_index(i: u8) -> Option<Self> {
        use Sst5::*;
        [VeryNegative, Negative, Neutral, Positive, VeryPositive]
            .get(usize::from(i))
            .copied()
    }
}

pub fn collapse_sst(label: Sst5) -> SentimentLabel {
    match label {
        Sst5::VeryNegative | Sst5::Negative => SentimentLabel::Negative,
        Sst5::Neutral => SentimentLabel::Neutral,
        Sst5::Positive | Sst5::VeryPositive => SentimentLabel::Positive,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentimentItem {
    pub text: String,
    pub label: SentimentLabel,
    #[serde(skip)]
    pub origin: String,
}

/// Character offsets into the item's (cleaned) text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspectTarget {
    pub start: usize,
    pub end: usize,
    pub polarity: SentimentLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspectItem {
    pub text: String,
    pub targets: Vec<AspectTarget>,
    #[serde(skip)]
    pub origin: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StanceItem {
    pub claim: String,
    pub body: String,
    pub label: StanceLabel,
    #[serde(skip)]
    pub origin: String,
}

impl SentimentItem {
    pub fn new(raw: &str, label: SentimentLabel, origin: &str) -> Self {
        SentimentItem {
            text: clean_text(raw).text,
            label,
            origin: origin.to_string(),
        }
    }
}

impl StanceItem {
    pub fn new(claim: &str, body: &str, label: StanceLabel, origin: &str) -> Self {
        StanceItem {
            claim: clean_text(claim).text,
            body: clean_text(body).text,
            label,
            origin: origin.to_string(),
        }
    }
}

/// A target given as character offsets into raw text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawTarget {
    pub start: usize,
    pub end: usize,
    pub polarity: SentimentLabel,
}

impl AspectItem {
    /// Cleans `raw` and carries each target over to cleaned offsets.
    /// Targets that clean away entirely, or overlap an earlier kept target,
    /// are dropped; the second value counts them.
    pub fn from_raw(raw: &str, targets: &[RawTarget], origin: &str) -> (Self, usize) {
        let cleaned = clean_text(raw);
        let bytes = cleaned.text.as_bytes();
        let mut sorted = targets.to_vec();
        sorted.sort_by_key(|t| (t.start, t.end));
        let mut kept: Vec<AspectTarget> = Vec::new();
        let mut dropped = 0;
        for t in sorted {
            let mut s = cleaned.char_map.partition_point(|&r| r < t.start);
            let mut e = cleaned.char_map.partition_point(|&r| r < t.end);
            while s < e && bytes[s] == b' ' {
                s += 1;
            }
            while e > s && bytes[e - 1] == b' ' {
                e -= 1;
            }
            let overlaps = kept.last().is_some_and(|k| s < k.end);
            let duplicate = kept.last().is_some_and(|k| (k.start, k.end, k.polarity) == (s, e, t.polarity));
            if duplicate {
                continue;
            }
            if s == e || overlaps {
                dropped += 1;
                continue;
            }
            kept.push(AspectTarget {
                start: s,
                end: e,
                polarity: t.polarity,
            });
        }
        (
            AspectItem {
                text: cleaned.text,
                targets: kept,
                origin: origin.to_string(),
            },
            dropped,
        )
    }
}

/// Whether `s[i..]` starts a `LOCATION<digits>` placeholder; returns its
/// byte length.
fn placeholder_at(s: &str, i: usize) -> Option<usize> {
    const STEM: &str = "LOCATION";
    let bytes = s.as_bytes();
    if !s[i..].starts_with(STEM) || (i > 0 && bytes[i - 1].is_ascii_alphanumeric()) {
        return None;
    }
    let digits = bytes[i + STEM.len()..].iter().take_while(|b| b.is_ascii_digit()).count();
    let end = i + STEM.len() + digits;
    if digits == 0 || bytes.get(end).is_some_and(|b| b.is_ascii_alphanumeric()) {
        return None;
    }
    Some(end - i)
}

/// Replacement result: the new text and, per placeholder occurrence, the
/// placeholder and the character span of the name that replaced it.
pub(crate) struct Replaced {
    pub text: String,
    pub spans: Vec<(String, usize, usize)>,
}

pub(crate) fn replace_with_spans(sentence: &str, names: &[String], seed: u64) -> Result<Replaced, DatasetError> {
    if names.is_empty() {
        return Err(DatasetError::EmptyNameList);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<(&str, &str)> = Vec::new();
    let mut text = String::with_capacity(sentence.len());
    let mut spans = Vec::new();
    let mut chars_out = 0;
    let mut i = 0;
    while i < sentence.len() {
        if let Some(len) = placeholder_at(sentence, i) {
            let ph = &sentence[i..i + len];
            let name = match chosen.iter().find(|(p, _)| *p == ph) {
                Some((_, n)) => *n,
                None => {
                    let n = names[rng.gen_range(0..names.len())].as_str();
                    chosen.push((ph, n));
                    n
                }
            };
            let n_chars = name.chars().count();
            spans.push((ph.to_string(), chars_out, chars_out + n_chars));
            text.push_str(name);
            chars_out += n_chars;
            i += len;
        } else {
            let c = sentence[i..].chars().next().expect("in bounds");
            text.push(c);
            chars_out += 1;
            i += c.len_utf8();
        }
    }
    Ok(Replaced { text, spans })
}

/// Replaces each distinct `LOCATIONn` placeholder with one name drawn
/// uniformly from `names`. Repeats of a placeholder get the same name.
pub fn replace_placeholders(sentence: &str, names: &[String], seed: u64) -> Result<String, DatasetError> {
    Ok(replace_with_spans(sentence, names, seed)?.text)
}

/// One name per line; blank lines are ignored.
pub fn load_names(path: &Path) -> Result<Vec<String>, DatasetError> {
    let text = fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Sa,
    Absa,
    Sd,
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sa" => Ok(Task::Sa),
            "absa" => Ok(Task::Absa),
            "sd" => Ok(Task::Sd),
            other => Err(format!("unknown task {other:?} (expected sa, absa or sd)")),
        }
    }
}

/// Audit record written next to the emitted splits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub task: Task,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub train_size: usize,
    pub val_size: usize,
    pub train_by_origin: BTreeMap<String, usize>,
    pub val_by_origin: BTreeMap<String, usize>,
    /// Item labels for SA and SD; target polarities for ABSA.
    pub train_by_label: BTreeMap<String, usize>,
    pub val_by_label: BTreeMap<String, usize>,
    #[serde(default)]
    pub dropped_targets: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub manifest: DatasetManifest,
}

/// Items that can be tallied in a [`DatasetManifest`].
pub trait Audited {
    fn origin(&self) -> &str;
    fn labels(&self) -> Vec<String>;
}

impl Audited for SentimentItem {
    fn origin(&self) -> &str {
        &self.origin
    }
    fn labels(&self) -> Vec<String> {
        vec![self.label.to_string()]
    }
}

impl Audited for StanceItem {
    fn origin(&self) -> &str {
        &self.origin
    }
    fn labels(&self) -> Vec<String> {
        vec![self.label.to_string()]
    }
}

impl Audited for AspectItem {
    fn origin(&self) -> &str {
        &self.origin
    }
    fn labels(&self) -> Vec<String> {
        self.targets.iter().map(|t| t.polarity.to_string()).collect()
    }
}

pub(crate) fn tally<T: Audited>(items: &[T]) -> (BTreeMap<String, usize>, BTreeMap<String, usize>) {
    let mut origins = BTreeMap::new();
    let mut labels = BTreeMap::new();
    for it in items {
        *origins.entry(it.origin().to_string()).or_insert(0) += 1;
        for l in it.labels() {
            *labels.entry(l).or_insert(0) += 1;
        }
    }
    (origins, labels)
}

impl<T: Audited> Dataset<T> {
    pub(crate) fn assemble(task: Task, seed: Option<u64>, train: Vec<T>, val: Vec<T>, dropped_targets: usize) -> Self {
        let (train_by_origin, train_by_label) = tally(&train);
        let (val_by_origin, val_by_label) = tally(&val);
        let manifest = DatasetManifest {
            task,
            seed,
            train_size: train.len(),
            val_size: val.len(),
            train_by_origin,
            val_by_origin,
            train_by_label,
            val_by_label,
            dropped_targets,
        };
        Dataset { train, val, manifest }
    }
}

impl<T: Serialize> Dataset<T> {
    /// Writes `train.jsonl`, `val.jsonl` and `manifest.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), DatasetError> {
        fs::create_dir_all(dir).map_err(|e| DatasetError::io(dir, e))?;
        write_jsonl(&dir.join("train.jsonl"), &self.train)?;
        write_jsonl(&dir.join("val.jsonl"), &self.val)?;
        let path = dir.join("manifest.json");
        let mut json = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        json.push('\n');
        fs::write(&path, json).map_err(|e| DatasetError::io(&path, e))
    }
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), DatasetError> {
    let file = fs::File::create(path).map_err(|e| DatasetError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for it in items {
        serde_json::to_writer(&mut out, it).expect("item serializes");
        out.write_all(b"\n").map_err(|e| DatasetError::io(path, e))?;
    }
    out.flush().map_err(|e| DatasetError::io(path, e))
}
