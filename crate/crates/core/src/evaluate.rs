//! Set-based retrieval metrics, categorical accuracy, entity-level ABSA
//! matching and table-shaped search reports.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{AspectSpan, ClassifierBackend, SentimentLabel, StanceLabel};
use crate::corpus::Corpus;
use crate::query::{run_search, Query, SearchOptions};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("document {0:?} is not covered by the gold labels")]
    UnknownDocId(String),
    #[error("{predictions} predictions but {golds} gold labels")]
    LengthMismatch { predictions: usize, golds: usize },
    #[error("no labels to score")]
    EmptyInput,
    #[error("gold labels miss {} corpus document(s), first {:?}", .0.len(), .0[0])]
    Coverage(Vec<String>),
    #[error("gold line {line}: {reason}")]
    GoldFormat { line: usize, reason: String },
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tn: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricRow {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision, recall and F1. With no true positives all three are 0.0,
/// whatever fp and fn are.
pub fn prf(counts: &ConfusionCounts) -> MetricRow {
    if counts.tp == 0 {
        return MetricRow::default();
    }
    let tp = counts.tp as f64;
    let precision = tp / (tp + counts.fp as f64);
    let recall = tp / (tp + counts.fn_ as f64);
    MetricRow {
        precision,
        recall,
        f1: 2.0 * precision * recall / (precision + recall),
    }
}

/// Per-document relevance judgements.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GoldRelevance {
    labels: BTreeMap<String, bool>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GoldRecord {
    doc_id: String,
    #[serde(default)]
    relevant: Option<bool>,
    #[serde(default)]
    stance: Option<StanceLabel>,
}

impl GoldRelevance {
    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, bool)>,
        S: Into<String>,
    {
        GoldRelevance {
            labels: pairs.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }

    /// Reads `{"doc_id", "relevant": bool}` or `{"doc_id", "stance"}` lines.
    /// A stance line counts as relevant iff it equals `stance_target`.
    pub fn from_jsonl(text: &str, stance_target: Option<StanceLabel>) -> Result<Self, EvalError> {
        let mut labels = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |reason: String| EvalError::GoldFormat { line: line_no, reason };
            let rec: GoldRecord = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
            let relevant = match (rec.relevant, rec.stance) {
                (Some(r), None) => r,
                (None, Some(s)) => {
                    let target = stance_target.ok_or_else(|| bad("stance gold needs a target stance".into()))?;
                    s == target
                }
                _ => return Err(bad("expected exactly one of \"relevant\" or \"stance\"".into())),
            };
            if labels.insert(rec.doc_id.clone(), relevant).is_some() {
                return Err(bad(format!("duplicate doc_id {:?}", rec.doc_id)));
            }
        }
        Ok(GoldRelevance { labels })
    }

    pub fn load(path: &Path, stance_target: Option<StanceLabel>) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))?;
        Self::from_jsonl(&text, stance_target)
    }

    pub fn is_relevant(&self, doc_id: &str) -> Option<bool> {
        self.labels.get(doc_id).copied()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn relevant_ids(&self) -> impl Iterator<Item = &str> {
        self.labels.iter().filter(|(_, &r)| r).map(|(k, _)| k.as_str())
    }

    /// Ids in `ids` without a judgement, in input order.
    pub fn missing<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> Vec<String> {
        ids.into_iter()
            .filter(|id| !self.labels.contains_key(*id))
            .map(str::to_string)
            .collect()
    }
}

pub fn confusion<S: AsRef<str>>(predicted: &[S], gold: &GoldRelevance) -> Result<ConfusionCounts, EvalError> {
    let predicted: BTreeSet<&str> = predicted.iter().map(AsRef::as_ref).collect();
    let mut counts = ConfusionCounts::default();
    for id in &predicted {
        match gold.is_relevant(id) {
            Some(true) => counts.tp += 1,
            Some(false) => counts.fp += 1,
            None => return Err(EvalError::UnknownDocId(id.to_string())),
        }
    }
    let relevant = gold.relevant_ids().count();
    counts.fn_ = relevant - counts.tp;
    counts.tn = Some(gold.len() - counts.tp - counts.fp - counts.fn_);
    Ok(counts)
}

pub fn categorical_accuracy<L: PartialEq>(predictions: &[L], golds: &[L]) -> Result<f64, EvalError> {
    if predictions.len() != golds.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            golds: golds.len(),
        });
    }
    if golds.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let equal = predictions.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(equal as f64 / golds.len() as f64)
}

/// A labelled entity: half-open token range plus polarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub polarity: SentimentLabel,
}

impl From<&AspectSpan> for EntitySpan {
    fn from(s: &AspectSpan) -> Self {
        EntitySpan {
            start: s.start_token,
            end: s.end_token,
            polarity: s.polarity,
        }
    }
}

/// Entity-level matching: a prediction counts only if boundaries and
/// polarity both equal a gold entity.
pub fn exact_match_absa(predicted: &[EntitySpan], gold: &[EntitySpan]) -> ConfusionCounts {
    let p: HashSet<&EntitySpan> = predicted.iter().collect();
    let g: HashSet<&EntitySpan> = gold.iter().collect();
    let tp = p.intersection(&g).count();
    ConfusionCounts {
        tp,
        fp: p.len() - tp,
        fn_: g.len() - tp,
        tn: None,
    }
}

/// Sums counts over many items (e.g. ABSA sentences).
pub fn sum_counts(counts: impl IntoIterator<Item = ConfusionCounts>) -> ConfusionCounts {
    counts.into_iter().fold(ConfusionCounts::default(), |acc, c| ConfusionCounts {
        tp: acc.tp + c.tp,
        fp: acc.fp + c.fp,
        fn_: acc.fn_ + c.fn_,
        tn: match (acc.tn, c.tn) {
            (Some(a), Some(b)) => Some(a + b),
            (None, None) if acc == ConfusionCounts::default() => c.tn,
            _ => None,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    /// Row label in table convention: "K", "SA", "ABSA 1", "SD 3", ...
    pub label: String,
    pub query: Query,
}

/// One column group of a results table: every row is searched over the
/// same corpus and scored against the same gold labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSuite {
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    /// Stance that counts as relevant when the gold file carries stances.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_stance: Option<StanceLabel>,
    pub rows: Vec<SuiteRow>,
}

impl ReportSuite {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let suite: ReportSuite = serde_json::from_str(text).map_err(|e| e.to_string())?;
        for row in &suite.rows {
            row.query.validate().map_err(|e| format!("row {:?}: {e}", row.label))?;
        }
        Ok(suite)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("suite serializes") + "\n"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    #[serde(flatten, default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<ConfusionCounts>,
    pub skipped: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub title: String,
    pub rows: Vec<ReportRow>,
}

pub const CSV_HEADER: &str = "label,precision,recall,f1,tp,fp,fn,skipped";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl ReportRow {
    pub fn scored(label: impl Into<String>, counts: ConfusionCounts, skipped: usize) -> Self {
        ReportRow {
            label: label.into(),
            metrics: Some(prf(&counts)),
            counts: Some(counts),
            skipped,
            error: None,
        }
    }

    pub fn failed(label: impl Into<String>, error: impl Into<String>) -> Self {
        ReportRow {
            label: label.into(),
            metrics: None,
            counts: None,
            skipped: 0,
            error: Some(error.into()),
        }
    }

    /// Full-precision CSV line; failed rows keep their label and leave the
    /// numeric fields empty.
    pub fn csv_line(&self) -> String {
        match (&self.metrics, &self.counts) {
            (Some(m), Some(c)) => format!(
                "{},{:?},{:?},{:?},{},{},{},{}",
                csv_field(&self.label),
                m.precision,
                m.recall,
                m.f1,
                c.tp,
                c.fp,
                c.fn_,
                self.skipped
            ),
            _ => format!("{},,,,,,,", csv_field(&self.label)),
        }
    }
}

impl Report {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.csv_line());
            out.push('\n');
        }
        out
    }

    /// Aligned table with two-decimal scores.
    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max(5);
        let mut out = format!("{}\n", self.title);
        writeln!(out, "{:<width$}  {:>5}  {:>5}  {:>5}", "", "Prec.", "Rec.", "F1").expect("string write");
        for row in &self.rows {
            match (&row.metrics, &row.error) {
                (Some(m), _) => {
                    write!(out, "{:<width$}  {:>5.2}  {:>5.2}  {:>5.2}", row.label, m.precision, m.recall, m.f1)
                        .expect("string write");
                    if row.skipped > 0 {
                        write!(out, "  ({} skipped)", row.skipped).expect("string write");
                    }
                    out.push('\n');
                }
                (None, err) => {
                    writeln!(out, "{:<width$}  failed: {}", row.label, err.as_deref().unwrap_or("unknown error"))
                        .expect("string write");
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// Runs each row's search and scores it. A row whose search fails stays in
/// the report, marked failed.
pub fn emit_report(
    suite: &ReportSuite,
    corpus: &Corpus,
    gold: &GoldRelevance,
    backend: &dyn ClassifierBackend,
    options: SearchOptions,
) -> Result<Report, EvalError> {
    let missing = gold.missing(corpus.documents().iter().map(|d| d.id()));
    if !missing.is_empty() {
        return Err(EvalError::Coverage(missing));
    }
    let rows = suite
        .rows
        .iter()
        .map(|row| match run_search(&row.query, corpus, backend, options) {
            Ok(result) => match confusion(&result.doc_ids, gold) {
                Ok(counts) => ReportRow::scored(&row.label, counts, result.skipped.len()),
                Err(e) => ReportRow::failed(&row.label, e.to_string()),
            },
            Err(e) => ReportRow::failed(&row.label, e.to_string()),
        })
        .collect();
    Ok(Report {
        title: suite.title.clone(),
        rows,
    })
}
