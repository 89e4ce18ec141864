//! Stand-in source files in each upstream format, sized like the real
//! corpora, for exercising the recipes without the licensed originals.
//! Classes are interleaved round-robin so file-order prefixes matter.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use super::DatasetError;

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), DatasetError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| DatasetError::io(&path, e))
}

fn write_manifest(dir: &Path, manifest: Value) -> Result<PathBuf, DatasetError> {
    let path = dir.join("sources.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text).map_err(|e| DatasetError::io(&path, e))?;
    Ok(path)
}

/// Round-robin over classes until every count is exhausted; yields
/// (class index, running item index).
fn interleave(counts: &[usize]) -> Vec<(usize, usize)> {
    let mut left = counts.to_vec();
    let mut out = Vec::with_capacity(counts.iter().sum());
    while left.iter().any(|&n| n > 0) {
        for (c, n) in left.iter_mut().enumerate() {
            if *n > 0 {
                *n -= 1;
                out.push((c, out.len()));
            }
        }
    }
    out
}

fn csv_string(rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

/// Per-class counts are (positive, neutral, negative).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SaStandIn {
    pub sst: [usize; 3],
    pub amazon_test: [usize; 3],
    pub yelp_test: [usize; 3],
    pub amazon_train: [usize; 3],
    pub yelp_train: [usize; 3],
}

impl Default for SaStandIn {
    fn default() -> Self {
        SaStandIn {
            sst: [4980, 2226, 4649],
            amazon_test: [1700, 3100, 1900],
            yelp_test: [1700, 3100, 1900],
            amazon_train: [400, 400, 400],
            yelp_train: [400, 400, 400],
        }
    }
}

impl SaStandIn {
    pub fn write(&self, dir: &Path) -> Result<PathBuf, DatasetError> {
        let mut sst = String::new();
        for (c, i) in interleave(&self.sst) {
            // Alternate between the two fine-grained labels of each class.
            let label = [[3, 4], [2, 2], [0, 1]][c][i % 2];
            let word = ["lovely", "plain", "dreadful"][c];
            writeln!(sst, "{label}\tA {word} film, scene {i}.").expect("string write");
        }
        write(dir, "sst.tsv", &sst)?;
        for (name, counts) in [
            ("amazon_test", self.amazon_test),
            ("yelp_test", self.yelp_test),
            ("amazon_train", self.amazon_train),
            ("yelp_train", self.yelp_train),
        ] {
            let rows = interleave(&counts).into_iter().map(|(c, i)| {
                let stars = [[4, 5], [3, 3], [1, 2]][c][i % 2];
                let word = ["great", "okay", "awful"][c];
                vec![stars.to_string(), format!("Review {i}"), format!("This was {word}.\\nItem {i}")]
            });
            write(dir, &format!("{name}.csv"), &csv_string(rows))?;
        }
        write_manifest(
            dir,
            json!({
                "sst": "sst.tsv",
                "amazon_test": "amazon_test.csv",
                "amazon_train": "amazon_train.csv",
                "yelp_test": "yelp_test.csv",
                "yelp_train": "yelp_train.csv",
            }),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbsaStandIn {
    pub semeval14: usize,
    pub negspec: usize,
    pub mams: usize,
    pub twitter: usize,
    pub yaso: usize,
    /// Train, dev, test.
    pub sentihood: [usize; 3],
}

impl Default for AbsaStandIn {
    fn default() -> Self {
        AbsaStandIn {
            semeval14: 9880,
            negspec: 2423,
            mams: 5297,
            twitter: 2358,
            yaso: 1989,
            sentihood: [2977, 747, 1491],
        }
    }
}

const POLARITIES: [&str; 3] = ["positive", "neutral", "negative"];

fn semeval_xml(n: usize, aspect: &str) -> String {
    let mut xml = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<sentences>\n");
    for i in 0..n {
        let text = format!("The {aspect} in visit {i} was worth noting.");
        let from = 4;
        let to = from + aspect.chars().count();
        let polarity = if i % 11 == 10 { "conflict" } else { POLARITIES[i % 3] };
        writeln!(
            xml,
            "  <sentence id=\"{i}\">\n    <text>{text}</text>\n    <aspectTerms>\n      \
             <aspectTerm term=\"{aspect}\" polarity=\"{polarity}\" from=\"{from}\" to=\"{to}\"/>\n    \
             </aspectTerms>\n  </sentence>"
        )
        .expect("string write");
    }
    xml.push_str("</sentences>\n");
    xml
}

fn sentihood_json(n: usize, offset: usize) -> String {
    let records: Vec<Value> = (0..n)
        .map(|k| {
            let i = offset + k;
            let sentiment = ["Positive", "Negative"][i % 2];
            json!({
                "id": i,
                "text": format!(" LOCATION1 is near LOCATION2, stop {i}"),
                "opinions": [
                    {"sentiment": sentiment, "aspect": "general", "target_entity": "LOCATION1"},
                    {"sentiment": "Negative", "aspect": "price", "target_entity": "LOCATION2"},
                ],
            })
        })
        .collect();
    serde_json::to_string(&records).expect("records serialize")
}

pub const STAND_IN_NAMES: &[&str] = &[
    "Lac Boomerang",
    "Shoal Lake",
    "Moose Jaw",
    "Île d'Orléans",
    "Baie-Comeau",
    "Red Deer",
    "Tuktoyaktuk",
    "Kamloops",
];

impl AbsaStandIn {
    pub fn write(&self, dir: &Path) -> Result<PathBuf, DatasetError> {
        write(dir, "semeval14.xml", &semeval_xml(self.semeval14, "pasta"))?;
        write(dir, "negspec.xml", &semeval_xml(self.negspec, "battery life"))?;
        write(dir, "mams.xml", &semeval_xml(self.mams, "waiter"))?;

        let mut twitter = String::new();
        for i in 0..self.twitter {
            let polarity = ["1", "0", "-1"][i % 3];
            writeln!(twitter, "so $T$ did it again , take {i}\n@windows\n{polarity}").expect("string write");
        }
        write(dir, "twitter.raw", &twitter)?;

        let mut yaso = String::new();
        for i in 0..self.yaso {
            let text = format!("Opinosis says the screen of unit {i} is dim");
            let line = json!({"text": text, "targets": [{"start": 18, "end": 24, "polarity": POLARITIES[(i + 2) % 3]}]});
            writeln!(yaso, "{line}").expect("string write");
        }
        write(dir, "yaso.jsonl", &yaso)?;

        let [train, dev, test] = self.sentihood;
        write(dir, "sentihood-train.json", &sentihood_json(train, 0))?;
        write(dir, "sentihood-dev.json", &sentihood_json(dev, train))?;
        write(dir, "sentihood-test.json", &sentihood_json(test, train + dev))?;
        write(dir, "names.txt", &(STAND_IN_NAMES.join("\n") + "\n"))?;

        write_manifest(
            dir,
            json!({
                "semeval14": "semeval14.xml",
                "negspec": "negspec.xml",
                "mams": "mams.xml",
                "twitter": "twitter.raw",
                "yaso": "yaso.jsonl",
                "sentihood_train": "sentihood-train.json",
                "sentihood_dev": "sentihood-dev.json",
                "sentihood_test": "sentihood-test.json",
                "names": "names.txt",
            }),
        )
    }
}

/// Per-class counts are (unrelated, agree, discuss, disagree).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SdStandIn {
    pub fnc_train: [usize; 4],
    pub fnc_test: [usize; 4],
    pub arc: [usize; 4],
    pub perspectrum: [usize; 4],
}

impl Default for SdStandIn {
    fn default() -> Self {
        SdStandIn {
            fnc_train: [3400, 3678, 5400, 840],
            fnc_test: [600, 550, 520, 510],
            arc: [3300, 1257, 904, 1402],
            perspectrum: [0, 1400, 0, 4100],
        }
    }
}

const STANCES: [&str; 4] = ["unrelated", "agree", "discuss", "disagree"];

fn fnc_files(dir: &Path, stem: &str, counts: [usize; 4]) -> Result<(), DatasetError> {
    let bodies = (0..7).map(|b| vec![b.to_string(), format!("Body {b} reports, at length, on topic {b}.")]);
    let header = vec!["Body ID".to_string(), "articleBody".to_string()];
    write(dir, &format!("{stem}_bodies.csv"), &csv_string(std::iter::once(header).chain(bodies)))?;
    let header = vec!["Headline".to_string(), "Body ID".to_string(), "Stance".to_string()];
    let rows = interleave(&counts)
        .into_iter()
        .map(|(c, i)| vec![format!("Headline {i} on topic {}", i % 7), (i % 7).to_string(), STANCES[c].to_string()]);
    write(dir, &format!("{stem}_stances.csv"), &csv_string(std::iter::once(header).chain(rows)))
}

impl SdStandIn {
    pub fn write(&self, dir: &Path) -> Result<PathBuf, DatasetError> {
        fnc_files(dir, "fnc_train", self.fnc_train)?;
        fnc_files(dir, "fnc_test", self.fnc_test)?;
        fnc_files(dir, "arc", self.arc)?;
        let mut perspectrum = String::new();
        for (c, i) in interleave(&self.perspectrum) {
            let label = match STANCES[c] {
                "agree" => "supports",
                "disagree" => "undermines",
                other => other,
            };
            let line = json!({"claim": format!("Claim {}", i % 13), "body": format!("Perspective {i}"), "label": label});
            writeln!(perspectrum, "{line}").expect("string write");
        }
        write(dir, "perspectrum.jsonl", &perspectrum)?;
        write_manifest(
            dir,
            json!({
                "fnc_train_bodies": "fnc_train_bodies.csv",
                "fnc_train_stances": "fnc_train_stances.csv",
                "fnc_test_bodies": "fnc_test_bodies.csv",
                "fnc_test_stances": "fnc_test_stances.csv",
                "arc_bodies": "arc_bodies.csv",
                "arc_stances": "arc_stances.csv",
                "perspectrum": "perspectrum.jsonl",
            }),
        )
    }
}
