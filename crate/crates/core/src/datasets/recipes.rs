//! Per-task assembly recipes. Every "take" is a file-order prefix of one
//! class; "all" takes additionally require the source to hold exactly
//! that many examples of the class.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::adapters::{
    parse_absa_jsonl, parse_fnc_bodies, parse_fnc_stances, parse_semeval_xml, parse_sentihood_json,
    parse_sst_tsv, parse_star_csv, parse_stance_jsonl, parse_twitter, AspectBatch,
};
use super::{load_names, AspectItem, Dataset, DatasetError, SentimentItem, StanceItem, Task};
use crate::classify::{SentimentLabel, StanceLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Take<L> {
    pub label: L,
    pub count: usize,
    pub all: bool,
}

impl<L> Take<L> {
    pub const fn first(label: L, count: usize) -> Self {
        Take { label, count, all: false }
    }

    pub const fn all(label: L, count: usize) -> Self {
        Take { label, count, all: true }
    }
}

trait Labelled {
    type Label: Copy + PartialEq + Display;
    fn label(&self) -> Self::Label;
}

impl Labelled for SentimentItem {
    type Label = SentimentLabel;
    fn label(&self) -> SentimentLabel {
        self.label
    }
}

impl Labelled for StanceItem {
    type Label = StanceLabel;
    fn label(&self) -> StanceLabel {
        self.label
    }
}

fn take<T: Labelled + Clone>(items: &[T], takes: &[Take<T::Label>], source: &str) -> Result<Vec<T>, DatasetError> {
    for t in takes {
        let found = items.iter().filter(|i| i.label() == t.label).count();
        if t.all && found != t.count {
            return Err(DatasetError::CountMismatch {
                source_name: format!("{source} {}", t.label),
                expected: t.count,
                found,
            });
        }
        if found < t.count {
            return Err(DatasetError::InsufficientExamples {
                source_name: source.to_string(),
                class: t.label.to_string(),
                needed: t.count,
                found,
            });
        }
    }
    let mut left: Vec<usize> = takes.iter().map(|t| t.count).collect();
    let mut out = Vec::with_capacity(left.iter().sum());
    for item in items {
        if let Some(k) = takes.iter().position(|t| t.label == item.label()) {
            if left[k] > 0 {
                left[k] -= 1;
                out.push(item.clone());
            }
        }
    }
    Ok(out)
}

fn check_classes<T: Labelled>(items: &[T], expected: &[(T::Label, usize)], split: &str) -> Result<(), DatasetError> {
    for &(label, n) in expected {
        let found = items.iter().filter(|i| i.label() == label).count();
        if found != n {
            return Err(DatasetError::CountMismatch {
                source_name: format!("{split} {label}"),
                expected: n,
                found,
            });
        }
    }
    Ok(())
}

fn check_len(source: &str, expected: usize, found: usize) -> Result<(), DatasetError> {
    if expected == found {
        Ok(())
    } else {
        Err(DatasetError::CountMismatch {
            source_name: source.to_string(),
            expected,
            found,
        })
    }
}

fn relabel<T>(items: &mut [T], origin: &str, field: impl Fn(&mut T) -> &mut String) {
    for it in items {
        *field(it) = origin.to_string();
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SaRecipe {
    pub sst_size: usize,
    pub amazon_test: Vec<Take<SentimentLabel>>,
    pub yelp_test: Vec<Take<SentimentLabel>>,
    pub amazon_train: Vec<Take<SentimentLabel>>,
    pub yelp_train: Vec<Take<SentimentLabel>>,
    pub train_per_class: Vec<(SentimentLabel, usize)>,
    pub val_size: usize,
}

impl Default for SaRecipe {
    fn default() -> Self {
        use SentimentLabel::*;
        let val = vec![Take::first(Positive, 333), Take::first(Negative, 333), Take::first(Neutral, 334)];
        SaRecipe {
            sst_size: 11_855,
            amazon_test: vec![Take::first(Positive, 1676), Take::first(Neutral, 3054), Take::first(Negative, 1842)],
            yelp_test: vec![Take::first(Positive, 1677), Take::first(Neutral, 3054), Take::first(Negative, 1842)],
            amazon_train: val.clone(),
            yelp_train: val,
            train_per_class: vec![(Positive, 8333), (Neutral, 8334), (Negative, 8333)],
            val_size: 2000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SaSources {
    pub sst: Vec<SentimentItem>,
    pub amazon_test: Vec<SentimentItem>,
    pub amazon_train: Vec<SentimentItem>,
    pub yelp_test: Vec<SentimentItem>,
    pub yelp_train: Vec<SentimentItem>,
}

/// Train: the whole treebank, then the Amazon and Yelp test-split takes.
/// Validation: the Amazon and Yelp train-split takes.
pub fn build_sa(sources: &SaSources, recipe: &SaRecipe) -> Result<Dataset<SentimentItem>, DatasetError> {
    check_len("sst", recipe.sst_size, sources.sst.len())?;
    let mut train = sources.sst.clone();
    relabel(&mut train, "sst", |i| &mut i.origin);
    for (name, items, takes) in [
        ("amazon_test", &sources.amazon_test, &recipe.amazon_test),
        ("yelp_test", &sources.yelp_test, &recipe.yelp_test),
    ] {
        let mut part = take(items, takes, name)?;
        relabel(&mut part, name, |i| &mut i.origin);
        train.extend(part);
    }
    let mut val = Vec::new();
    for (name, items, takes) in [
        ("amazon_train", &sources.amazon_train, &recipe.amazon_train),
        ("yelp_train", &sources.yelp_train, &recipe.yelp_train),
    ] {
        let mut part = take(items, takes, name)?;
        relabel(&mut part, name, |i| &mut i.origin);
        val.extend(part);
    }
    check_classes(&train, &recipe.train_per_class, "sa train")?;
    check_len("sa validation", recipe.val_size, val.len())?;
    Ok(Dataset::assemble(Task::Sa, None, train, val, 0))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbsaRecipe {
    /// Non-Sentihood sources in concatenation order with their sizes.
    pub parts: Vec<(String, usize)>,
    pub sentihood_size: usize,
    pub train_size: usize,
    /// Leading Sentihood validation items that land in the training split.
    pub sentihood_dev_in_train: usize,
}

impl Default for AbsaRecipe {
    fn default() -> Self {
        let parts = [
            ("semeval14", 9880),
            ("negspec", 2423),
            ("mams", 5297),
            ("twitter", 2358),
            ("yaso", 1989),
        ];
        AbsaRecipe {
            parts: parts.iter().map(|&(n, c)| (n.to_string(), c)).collect(),
            sentihood_size: 5215,
            train_size: 25_000,
            sentihood_dev_in_train: 76,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AbsaSources {
    /// Keyed by the recipe's part names.
    pub parts: BTreeMap<String, AspectBatch>,
    pub sentihood_train: AspectBatch,
    pub sentihood_dev: AspectBatch,
    pub sentihood_test: AspectBatch,
}

/// Concatenates the parts in recipe order, then Sentihood train, dev and
/// test. The first `train_size` items train; the rest (the tail of the
/// Sentihood dev set plus its test set) validate.
pub fn build_absa(sources: &AbsaSources, recipe: &AbsaRecipe) -> Result<Dataset<AspectItem>, DatasetError> {
    let mut all: Vec<AspectItem> = Vec::new();
    let mut dropped = 0;
    for (name, expected) in &recipe.parts {
        let batch = sources
            .parts
            .get(name)
            .ok_or_else(|| DatasetError::MissingSource(name.clone()))?;
        check_len(name, *expected, batch.items.len())?;
        let mut items = batch.items.clone();
        relabel(&mut items, name, |i| &mut i.origin);
        all.extend(items);
        dropped += batch.dropped;
    }
    let sentihood = [
        ("sentihood_train", &sources.sentihood_train),
        ("sentihood_dev", &sources.sentihood_dev),
        ("sentihood_test", &sources.sentihood_test),
    ];
    let sentihood_total: usize = sentihood.iter().map(|(_, b)| b.items.len()).sum();
    check_len("sentihood", recipe.sentihood_size, sentihood_total)?;
    let sentihood_train_expected = recipe
        .train_size
        .checked_sub(all.len() + recipe.sentihood_dev_in_train)
        .ok_or_else(|| DatasetError::CountMismatch {
            source_name: "absa train".into(),
            expected: recipe.train_size,
            found: all.len() + recipe.sentihood_dev_in_train,
        })?;
    check_len("sentihood_train", sentihood_train_expected, sources.sentihood_train.items.len())?;
    if sources.sentihood_dev.items.len() < recipe.sentihood_dev_in_train {
        return Err(DatasetError::InsufficientExamples {
            source_name: "sentihood_dev".into(),
            class: "any".into(),
            needed: recipe.sentihood_dev_in_train,
            found: sources.sentihood_dev.items.len(),
        });
    }
    for (name, batch) in sentihood {
        let mut items = batch.items.clone();
        relabel(&mut items, name, |i| &mut i.origin);
        all.extend(items);
        dropped += batch.dropped;
    }
    let val = all.split_off(recipe.train_size);
    Ok(Dataset::assemble(Task::Absa, None, all, val, dropped))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SdRecipe {
    pub fnc_train: Vec<Take<StanceLabel>>,
    pub arc: Vec<Take<StanceLabel>>,
    pub perspectrum: Vec<Take<StanceLabel>>,
    pub fnc_test: Vec<Take<StanceLabel>>,
    pub train_per_class: usize,
}

impl Default for SdRecipe {
    fn default() -> Self {
        use StanceLabel::*;
        SdRecipe {
            fnc_train: vec![
                Take::all(Disagree, 840),
                Take::all(Agree, 3678),
                Take::first(Discuss, 5346),
                Take::first(Unrelated, 3125),
            ],
            arc: vec![
                Take::all(Agree, 1257),
                Take::all(Disagree, 1402),
                Take::all(Discuss, 904),
                Take::first(Unrelated, 3125),
            ],
            perspectrum: vec![Take::first(Agree, 1315), Take::first(Disagree, 4008)],
            fnc_test: StanceLabel::ALL.iter().map(|&l| Take::first(l, 500)).collect(),
            train_per_class: 6250,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SdSources {
    pub fnc_train: Vec<StanceItem>,
    pub fnc_test: Vec<StanceItem>,
    pub arc: Vec<StanceItem>,
    pub perspectrum: Vec<StanceItem>,
}

/// Train: FNC-1 train, ARC and Perspectrum takes, in that order.
/// Validation: the FNC-1 competition test takes.
pub fn build_sd(sources: &SdSources, recipe: &SdRecipe) -> Result<Dataset<StanceItem>, DatasetError> {
    let mut train = Vec::new();
    for (name, items, takes) in [
        ("fnc_train", &sources.fnc_train, &recipe.fnc_train),
        ("arc", &sources.arc, &recipe.arc),
        ("perspectrum", &sources.perspectrum, &recipe.perspectrum),
    ] {
        let mut part = take(items, takes, name)?;
        relabel(&mut part, name, |i| &mut i.origin);
        train.extend(part);
    }
    let expected: Vec<(StanceLabel, usize)> = StanceLabel::ALL.iter().map(|&l| (l, recipe.train_per_class)).collect();
    check_classes(&train, &expected, "sd train")?;
    let mut val = take(&sources.fnc_test, &recipe.fnc_test, "fnc_test")?;
    relabel(&mut val, "fnc_test", |i| &mut i.origin);
    Ok(Dataset::assemble(Task::Sd, None, train, val, 0))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(PathBuf),
    Many(Vec<PathBuf>),
}

/// JSON object mapping source keys to a path or a list of paths, read and
/// concatenated in order. Relative paths resolve against the manifest's
/// directory.
///
/// | task | keys |
/// |---|---|
/// | sa | `sst`, `amazon_test`, `amazon_train`, `yelp_test`, `yelp_train` |
/// | absa | `semeval14`, `negspec`, `mams`, `twitter`, `yaso`, `sentihood_train`, `sentihood_dev`, `sentihood_test`, `names` |
/// | sd | `fnc_train_bodies`, `fnc_train_stances`, `fnc_test_bodies`, `fnc_test_stances`, `arc_bodies`, `arc_stances`, `perspectrum` |
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceManifest {
    entries: HashMap<String, Vec<PathBuf>>,
}

impl SourceManifest {
    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
        let raw: HashMap<String, OneOrMany> =
            serde_json::from_str(&text).map_err(|e| DatasetError::parse(&path.display().to_string(), e.line(), e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let entries = raw
            .into_iter()
            .map(|(k, v)| {
                let paths = match v {
                    OneOrMany::One(p) => vec![p],
                    OneOrMany::Many(ps) => ps,
                };
                (k, paths.into_iter().map(|p| base.join(p)).collect())
            })
            .collect();
        Ok(SourceManifest { entries })
    }

    pub fn paths(&self, key: &str) -> Result<&[PathBuf], DatasetError> {
        self.entries
            .get(key)
            .map(Vec::as_slice)
            .ok_or_else(|| DatasetError::MissingSource(key.to_string()))
    }

    fn texts(&self, key: &str) -> Result<Vec<String>, DatasetError> {
        self.paths(key)?
            .iter()
            .map(|p| fs::read_to_string(p).map_err(|e| DatasetError::io(p, e)))
            .collect()
    }

    fn concat<T>(&self, key: &str, parse: impl Fn(&str, &str) -> Result<Vec<T>, DatasetError>) -> Result<Vec<T>, DatasetError> {
        let mut out = Vec::new();
        for text in self.texts(key)? {
            out.extend(parse(&text, key)?);
        }
        Ok(out)
    }

    fn batch(&self, key: &str, parse: impl Fn(&str, &str) -> Result<AspectBatch, DatasetError>) -> Result<AspectBatch, DatasetError> {
        let mut out = AspectBatch::default();
        for text in self.texts(key)? {
            out.extend(parse(&text, key)?);
        }
        Ok(out)
    }

    pub fn sa_sources(&self) -> Result<SaSources, DatasetError> {
        Ok(SaSources {
            sst: self.concat("sst", parse_sst_tsv)?,
            amazon_test: self.concat("amazon_test", parse_star_csv)?,
            amazon_train: self.concat("amazon_train", parse_star_csv)?,
            yelp_test: self.concat("yelp_test", parse_star_csv)?,
            yelp_train: self.concat("yelp_train", parse_star_csv)?,
        })
    }

    /// Sentihood file `k` (train, dev, test in that order, counting across
    /// lists) draws names with seed `seed + k * 2^32 + item index`.
    pub fn absa_sources(&self, recipe: &AbsaRecipe, seed: u64) -> Result<AbsaSources, DatasetError> {
        let mut parts = BTreeMap::new();
        for (name, _) in &recipe.parts {
            let batch = match name.as_str() {
                "twitter" => self.batch(name, parse_twitter)?,
                "yaso" => self.batch(name, parse_absa_jsonl)?,
                _ => self.batch(name, parse_semeval_xml)?,
            };
            parts.insert(name.clone(), batch);
        }
        let mut names = Vec::new();
        for p in self.paths("names")? {
            names.extend(load_names(p)?);
        }
        let mut file_no = 0u64;
        let mut sentihood = |key: &str| -> Result<AspectBatch, DatasetError> {
            let mut out = AspectBatch::default();
            for text in self.texts(key)? {
                let file_seed = seed.wrapping_add(file_no << 32);
                file_no += 1;
                out.extend(parse_sentihood_json(&text, &names, file_seed, key)?);
            }
            Ok(out)
        };
        Ok(AbsaSources {
            parts,
            sentihood_train: sentihood("sentihood_train")?,
            sentihood_dev: sentihood("sentihood_dev")?,
            sentihood_test: sentihood("sentihood_test")?,
        })
    }

    fn fnc(&self, bodies_key: &str, stances_key: &str) -> Result<Vec<StanceItem>, DatasetError> {
        let mut bodies = HashMap::new();
        for text in self.texts(bodies_key)? {
            bodies.extend(parse_fnc_bodies(&text, bodies_key)?);
        }
        self.concat(stances_key, |text, key| parse_fnc_stances(text, &bodies, key))
    }

    pub fn sd_sources(&self) -> Result<SdSources, DatasetError> {
        Ok(SdSources {
            fnc_train: self.fnc("fnc_train_bodies", "fnc_train_stances")?,
            fnc_test: self.fnc("fnc_test_bodies", "fnc_test_stances")?,
            arc: self.fnc("arc_bodies", "arc_stances")?,
            perspectrum: self.concat("perspectrum", parse_stance_jsonl)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BuiltDataset {
    Sa(Dataset<SentimentItem>),
    Absa(Dataset<AspectItem>),
    Sd(Dataset<StanceItem>),
}

impl BuiltDataset {
    pub fn manifest(&self) -> &super::DatasetManifest {
        match self {
            BuiltDataset::Sa(d) => &d.manifest,
            BuiltDataset::Absa(d) => &d.manifest,
            BuiltDataset::Sd(d) => &d.manifest,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<(), DatasetError> {
        match self {
            BuiltDataset::Sa(d) => d.write(dir),
            BuiltDataset::Absa(d) => d.write(dir),
            BuiltDataset::Sd(d) => d.write(dir),
        }
    }
}

/// Loads every source named by the manifest and runs the default recipe.
/// The seed only affects ABSA (Sentihood placeholder names) but is recorded
/// for every task.
pub fn build_from_manifest(task: Task, manifest: &Path, seed: u64) -> Result<BuiltDataset, DatasetError> {
    let sources = SourceManifest::load(manifest)?;
    let mut built = match task {
        Task::Sa => BuiltDataset::Sa(build_sa(&sources.sa_sources()?, &SaRecipe::default())?),
        Task::Absa => {
            let recipe = AbsaRecipe::default();
            BuiltDataset::Absa(build_absa(&sources.absa_sources(&recipe, seed)?, &recipe)?)
        }
        Task::Sd => BuiltDataset::Sd(build_sd(&sources.sd_sources()?, &SdRecipe::default())?),
    };
    let seed_slot = match &mut built {
        BuiltDataset::Sa(d) => &mut d.manifest.seed,
        BuiltDataset::Absa(d) => &mut d.manifest.seed,
        BuiltDataset::Sd(d) => &mut d.manifest.seed,
    };
    *seed_slot = Some(seed);
    Ok(built)
}
