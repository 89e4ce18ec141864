//! Readers for the native formats of the upstream corpora.
//!
//! | adapter | format |
//! |---|---|
//! | [`parse_sst_tsv`] | `label<TAB>sentence`, label 0 (very negative) to 4 (very positive) |
//! | [`parse_star_csv`] | headerless CSV, star rating first, remaining fields are text (title, body) |
//! | [`parse_semeval_xml`] | `<sentence><text/><aspectTerms><aspectTerm from to polarity/>` (SemEval 2014, MAMS, negation/speculation sets) |
//! | [`parse_twitter`] | three lines per item: sentence with `$T$`, target, polarity -1/0/1 |
//! | [`parse_sentihood_json`] | JSON array of `{"text", "opinions": [{"target_entity", "sentiment"}]}` |
//! | [`parse_absa_jsonl`] | `{"text", "targets": [{"start", "end", "polarity"}]}`, char offsets into raw text |
//! | [`parse_fnc`] | bodies CSV (`Body ID`, `articleBody`) plus stances CSV (`Headline`, `Body ID`, `Stance`) |
//! | [`parse_stance_jsonl`] | `{"claim", "body", "label"}` |
//!
//! Aspect targets labelled `conflict` are dropped and counted.

use std::collections::HashMap;

use serde::Deserialize;

use super::{
    collapse_sst, map_stars, replace_with_spans, AspectItem, DatasetError, RawTarget, SentimentItem, Sst5,
    StanceItem,
};
use crate::classify::{SentimentLabel, StanceLabel};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AspectBatch {
    pub items: Vec<AspectItem>,
    /// Targets lost to `conflict` labels, cleaning or overlap.
    pub dropped: usize,
}

impl AspectBatch {
    fn push(&mut self, raw: &str, targets: &[RawTarget], origin: &str) {
        let (item, dropped) = AspectItem::from_raw(raw, targets, origin);
        self.items.push(item);
        self.dropped += dropped;
    }

    pub fn extend(&mut self, other: AspectBatch) {
        self.items.extend(other.items);
        self.dropped += other.dropped;
    }
}

fn strip_bom(text: &str) -> &str {
    text.strip_prefix('\u{feff}').unwrap_or(text)
}

pub fn parse_sst_tsv(text: &str, source: &str) -> Result<Vec<SentimentItem>, DatasetError> {
    let mut items = Vec::new();
    for (i, line) in strip_bom(text).lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (label, sentence) = line
            .split_once('\t')
            .ok_or_else(|| DatasetError::parse(source, i + 1, "expected label<TAB>sentence"))?;
        let sst = label
            .trim()
            .parse::<u8>()
            .ok()
            .and_then(Sst5::from_index)
            .ok_or_else(|| DatasetError::parse(source, i + 1, format!("label {label:?} not in 0..=4")))?;
        items.push(SentimentItem::new(sentence, collapse_sst(sst), source));
    }
    Ok(items)
}

pub fn parse_star_csv(text: &str, source: &str) -> Result<Vec<SentimentItem>, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(strip_bom(text).as_bytes());
    let mut items = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 1;
        let record = record.map_err(|e| DatasetError::parse(source, line, e.to_string()))?;
        if record.len() < 2 {
            return Err(DatasetError::parse(source, line, "expected rating and text fields"));
        }
        let stars: i64 = record[0]
            .trim()
            .parse()
            .map_err(|_| DatasetError::parse(source, line, format!("rating {:?} is not an integer", &record[0])))?;
        let label = map_stars(stars).map_err(|e| DatasetError::parse(source, line, e.to_string()))?;
        let text = record
            .iter()
            .skip(1)
            .map(|f| f.replace("\\n", " "))
            .filter(|f| !f.trim().is_empty())
            .collect::<Vec<_>>()
            .join(" ");
        items.push(SentimentItem::new(&text, label, source));
    }
    Ok(items)
}

/// `Ok(None)` for labels that are deliberately skipped.
fn aspect_polarity(raw: &str) -> Result<Option<SentimentLabel>, String> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "positive" | "1" | "+1" => Ok(Some(SentimentLabel::Positive)),
        "neutral" | "0" => Ok(Some(SentimentLabel::Neutral)),
        "negative" | "-1" => Ok(Some(SentimentLabel::Negative)),
        "conflict" => Ok(None),
        other => Err(format!("unknown polarity {other:?}")),
    }
}

pub fn parse_semeval_xml(text: &str, source: &str) -> Result<AspectBatch, DatasetError> {
    let text = strip_bom(text);
    let doc = roxmltree::Document::parse(text)
        .map_err(|e| DatasetError::parse(source, e.pos().row as usize, e.to_string()))?;
    let line_starts: Vec<usize> = std::iter::once(0)
        .chain(text.match_indices('\n').map(|(i, _)| i + 1))
        .collect();
    let line_of = |node: roxmltree::Node| line_starts.partition_point(|&s| s <= node.range().start);
    let mut batch = AspectBatch::default();
    for sentence in doc.descendants().filter(|n| n.has_tag_name("sentence")) {
        let line = line_of(sentence);
        let raw = sentence
            .children()
            .find(|n| n.has_tag_name("text"))
            .map(|n| n.text().unwrap_or(""))
            .ok_or_else(|| DatasetError::parse(source, line, "sentence without <text>"))?;
        let n_chars = raw.chars().count();
        let mut targets = Vec::new();
        for term in sentence.descendants().filter(|n| n.has_tag_name("aspectTerm")) {
            let line = line_of(term);
            let attr = |name: &str| {
                term.attribute(name)
                    .ok_or_else(|| DatasetError::parse(source, line, format!("aspectTerm without {name}")))
            };
            let offset = |name: &str| -> Result<usize, DatasetError> {
                let v = attr(name)?;
                v.parse()
                    .map_err(|_| DatasetError::parse(source, line, format!("{name}={v:?} is not an offset")))
            };
            let (start, end) = (offset("from")?, offset("to")?);
            if start > end || end > n_chars {
                return Err(DatasetError::parse(source, line, format!("span {start}..{end} outside text")));
            }
            match aspect_polarity(attr("polarity")?).map_err(|e| DatasetError::parse(source, line, e))? {
                Some(polarity) => targets.push(RawTarget { start, end, polarity }),
                None => batch.dropped += 1,
            }
        }
        batch.push(raw, &targets, source);
    }
    Ok(batch)
}

pub fn parse_twitter(text: &str, source: &str) -> Result<AspectBatch, DatasetError> {
    let lines: Vec<(usize, &str)> = strip_bom(text)
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l))
        .collect();
    if lines.len() % 3 != 0 {
        let line = lines.last().map_or(1, |l| l.0);
        return Err(DatasetError::parse(source, line, "incomplete three-line item"));
    }
    let mut batch = AspectBatch::default();
    for block in lines.chunks(3) {
        let (line, template) = block[0];
        let target = block[1].1.trim();
        let polarity = aspect_polarity(block[2].1).map_err(|e| DatasetError::parse(source, block[2].0, e))?;
        if !template.contains("$T$") {
            return Err(DatasetError::parse(source, line, "sentence has no $T$ marker"));
        }
        let mut raw = String::new();
        let mut targets = Vec::new();
        let target_chars = target.chars().count();
        for (k, piece) in template.split("$T$").enumerate() {
            if k > 0 {
                let start = raw.chars().count();
                raw.push_str(target);
                if let Some(polarity) = polarity {
                    targets.push(RawTarget { start, end: start + target_chars, polarity });
                }
            }
            raw.push_str(piece);
        }
        if polarity.is_none() {
            batch.dropped += 1;
        }
        batch.push(&raw, &targets, source);
    }
    Ok(batch)
}

#[derive(Deserialize)]
struct SentihoodOpinion {
    target_entity: String,
    sentiment: String,
}

#[derive(Deserialize)]
struct SentihoodRecord {
    text: String,
    #[serde(default)]
    opinions: Vec<SentihoodOpinion>,
}

/// Majority polarity of a target's opinions; ties go to whichever tied
/// polarity was stated first.
fn majority(polarities: &[SentimentLabel]) -> Option<SentimentLabel> {
    let count = |p: SentimentLabel| polarities.iter().filter(|&&q| q == p).count();
    let best = polarities.iter().map(|&p| count(p)).max()?;
    polarities.iter().copied().find(|&p| count(p) == best)
}

/// Sentihood with placeholders replaced by names. Item `i` of this file is
/// drawn with seed `seed + i`. Every occurrence of a placeholder becomes a
/// target carrying that placeholder's majority opinion polarity.
pub fn parse_sentihood_json(text: &str, names: &[String], seed: u64, source: &str) -> Result<AspectBatch, DatasetError> {
    let records: Vec<SentihoodRecord> =
        serde_json::from_str(strip_bom(text)).map_err(|e| DatasetError::parse(source, e.line(), e.to_string()))?;
    let mut batch = AspectBatch::default();
    for (i, rec) in records.iter().enumerate() {
        let mut by_target: Vec<(&str, Vec<SentimentLabel>)> = Vec::new();
        for op in &rec.opinions {
            let Some(p) = aspect_polarity(&op.sentiment).map_err(|e| DatasetError::parse(source, i + 1, e))? else {
                batch.dropped += 1;
                continue;
            };
            match by_target.iter_mut().find(|(t, _)| *t == op.target_entity) {
                Some((_, ps)) => ps.push(p),
                None => by_target.push((op.target_entity.as_str(), vec![p])),
            }
        }
        let replaced = replace_with_spans(&rec.text, names, seed.wrapping_add(i as u64))?;
        let targets: Vec<RawTarget> = replaced
            .spans
            .iter()
            .filter_map(|(ph, start, end)| {
                let (_, ps) = by_target.iter().find(|(t, _)| t == ph)?;
                Some(RawTarget { start: *start, end: *end, polarity: majority(ps)? })
            })
            .collect();
        batch.push(&replaced.text, &targets, source);
    }
    Ok(batch)
}

#[derive(Deserialize)]
struct JsonTarget {
    start: usize,
    end: usize,
    polarity: String,
}

#[derive(Deserialize)]
struct JsonAspectRecord {
    text: String,
    #[serde(default)]
    targets: Vec<JsonTarget>,
}

pub fn parse_absa_jsonl(text: &str, source: &str) -> Result<AspectBatch, DatasetError> {
    let mut batch = AspectBatch::default();
    for (i, line) in strip_bom(text).lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonAspectRecord =
            serde_json::from_str(line).map_err(|e| DatasetError::parse(source, i + 1, e.to_string()))?;
        let n_chars = rec.text.chars().count();
        let mut targets = Vec::new();
        for t in rec.targets {
            if t.start > t.end || t.end > n_chars {
                return Err(DatasetError::parse(source, i + 1, format!("span {}..{} outside text", t.start, t.end)));
            }
            match aspect_polarity(&t.polarity).map_err(|e| DatasetError::parse(source, i + 1, e))? {
                Some(polarity) => targets.push(RawTarget { start: t.start, end: t.end, polarity }),
                None => batch.dropped += 1,
            }
        }
        batch.push(&rec.text, &targets, source);
    }
    Ok(batch)
}

fn stance_label(raw: &str) -> Result<StanceLabel, String> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "agree" | "support" | "supports" => Ok(StanceLabel::Agree),
        "disagree" | "undermine" | "undermines" => Ok(StanceLabel::Disagree),
        "discuss" => Ok(StanceLabel::Discuss),
        "unrelated" => Ok(StanceLabel::Unrelated),
        other => Err(format!("unknown stance {other:?}")),
    }
}

fn csv_columns(
    reader: &mut csv::Reader<&[u8]>,
    wanted: &[&str],
    source: &str,
) -> Result<Vec<usize>, DatasetError> {
    let headers = reader
        .headers()
        .map_err(|e| DatasetError::parse(source, 1, e.to_string()))?
        .clone();
    wanted
        .iter()
        .map(|w| {
            headers
                .iter()
                .position(|h| h.trim() == *w)
                .ok_or_else(|| DatasetError::parse(source, 1, format!("header lacks column {w:?}")))
        })
        .collect()
}

/// Body ID to article text.
pub fn parse_fnc_bodies(text: &str, source: &str) -> Result<HashMap<String, String>, DatasetError> {
    let mut reader = csv::Reader::from_reader(strip_bom(text).as_bytes());
    let cols = csv_columns(&mut reader, &["Body ID", "articleBody"], source)?;
    let mut by_id = HashMap::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| DatasetError::parse(source, i + 2, e.to_string()))?;
        let field = |c: usize| rec.get(c).unwrap_or("").to_string();
        by_id.insert(field(cols[0]).trim().to_string(), field(cols[1]));
    }
    Ok(by_id)
}

/// Joins a stances file against parsed bodies. The headline is the claim.
pub fn parse_fnc_stances(
    text: &str,
    bodies: &HashMap<String, String>,
    source: &str,
) -> Result<Vec<StanceItem>, DatasetError> {
    let mut reader = csv::Reader::from_reader(strip_bom(text).as_bytes());
    let cols = csv_columns(&mut reader, &["Headline", "Body ID", "Stance"], source)?;
    let mut items = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| DatasetError::parse(source, line, e.to_string()))?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let body_id = field(cols[1]).trim();
        let body = bodies
            .get(body_id)
            .ok_or_else(|| DatasetError::parse(source, line, format!("unknown Body ID {body_id:?}")))?;
        let label = stance_label(field(cols[2])).map_err(|e| DatasetError::parse(source, line, e))?;
        items.push(StanceItem::new(field(cols[0]), body, label, source));
    }
    Ok(items)
}

pub fn parse_fnc(bodies: &str, stances: &str, source: &str) -> Result<Vec<StanceItem>, DatasetError> {
    let by_id = parse_fnc_bodies(bodies, &format!("{source} bodies"))?;
    parse_fnc_stances(stances, &by_id, source)
}

#[derive(Deserialize)]
struct JsonStanceRecord {
    claim: String,
    body: String,
    label: String,
}

pub fn parse_stance_jsonl(text: &str, source: &str) -> Result<Vec<StanceItem>, DatasetError> {
    let mut items = Vec::new();
    for (i, line) in strip_bom(text).lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonStanceRecord =
            serde_json::from_str(line).map_err(|e| DatasetError::parse(source, i + 1, e.to_string()))?;
        let label = stance_label(&rec.label).map_err(|e| DatasetError::parse(source, i + 1, e))?;
        items.push(StanceItem::new(&rec.claim, &rec.body, label, source));
    }
    Ok(items)
}
