//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any failed.
//!
//! Dataset criteria also run against real source manifests when
//! `INFOTRIAGE_SA_SOURCES`, `INFOTRIAGE_ABSA_SOURCES` or
//! `INFOTRIAGE_SD_SOURCES` point at them.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::time::{Duration, Instant};

use infotriage_core::classify::{
    head_geometry, AspectTagging, Capabilities, Capability, ClassifierBackend, ClassifyError,
    HeadKind, Lexicon, LexiconBackend, Prediction, RemoteBackend, RemoteConfig, SentimentLabel,
    StanceLabel,
};
use infotriage_core::corpus::{CleanDocument, Corpus};
use infotriage_core::datasets::recipes::{build_from_manifest, BuiltDataset};
use infotriage_core::datasets::synthetic::{AbsaStandIn, SaStandIn, SdStandIn};
use infotriage_core::datasets::Task;
use infotriage_core::evaluate::{
    confusion, emit_report, exact_match_absa, prf, ConfusionCounts, EntitySpan, GoldRelevance,
    ReportSuite,
};
use infotriage_core::query::{
    expand_claims, matches_keywords, run_search, AspectRequirement, ClaimTemplate, Keyword,
    KeywordExpr, MatchMode, Query, RequiredTag, SearchOptions, StanceTarget,
};
use infotriage_core::tokenizer::{encode_pair, encode_single, ModelGeometry, Vocabulary};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

type Outcome = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("metric oracle equivalence", metric_oracle),
        ("zero-TP convention", zero_tp),
        ("claim expansion", claim_expansion),
        ("sequence geometry", sequence_geometry),
        ("head geometry", head_geometry_counts),
        ("dataset recipes", dataset_recipes),
        ("search semantics", search_semantics),
        ("keyword relevance proxy", keyword_proxy),
        ("service durability", service_durability),
        ("remote protocol conformance", remote_conformance),
    ];
    // Panic messages are reported on the FAIL line instead.
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(()) => println!("PASS  {name} ({secs:.2}s)"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name} ({secs:.2}s): {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- metrics

fn metric_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..1000 {
        let n = rng.gen_range(0..80);
        let relevant: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.35)).collect();
        let predicted: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
        let ids: Vec<String> = (0..n).map(|d| format!("d{d}")).collect();
        let gold = GoldRelevance::from_pairs(ids.iter().cloned().zip(relevant.iter().copied()));
        let preds: Vec<&str> = ids
            .iter()
            .zip(&predicted)
            .filter(|(_, &p)| p)
            .map(|(s, _)| s.as_str())
            .collect();
        let c = confusion(&preds, &gold).map_err(|e| e.to_string())?;
        let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
        for d in 0..n {
            match (predicted[d], relevant[d]) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => tn += 1,
            }
        }
        ensure!(
            (c.tp, c.fp, c.fn_, c.tn) == (tp, fp, fn_, Some(tn)),
            "instance {i}: counts {c:?} vs ({tp},{fp},{fn_},{tn})"
        );
        let m = prf(&c);
        let (p, r, f) = if tp == 0 {
            (0.0, 0.0, 0.0)
        } else {
            (
                tp as f64 / (tp + fp) as f64,
                tp as f64 / (tp + fn_) as f64,
                2.0 * tp as f64 / (2 * tp + fp + fn_) as f64,
            )
        };
        ensure!(
            m.precision == p && m.recall == r,
            "instance {i}: P/R mismatch"
        );
        ensure!(
            (m.f1 - f).abs() <= 1e-12,
            "instance {i}: F1 {} vs {f}",
            m.f1
        );
    }
    for i in 0..1000 {
        let span = |rng: &mut ChaCha8Rng| {
            let start = rng.gen_range(0..10);
            EntitySpan {
                start,
                end: start + rng.gen_range(1..4),
                polarity: SentimentLabel::ALL[rng.gen_range(0..3)],
            }
        };
        let pred: Vec<EntitySpan> = (0..rng.gen_range(0..7)).map(|_| span(&mut rng)).collect();
        let gold: Vec<EntitySpan> = (0..rng.gen_range(0..7)).map(|_| span(&mut rng)).collect();
        let c = exact_match_absa(&pred, &gold);
        let p: BTreeSet<_> = pred.iter().map(|s| (s.start, s.end, s.polarity)).collect();
        let g: BTreeSet<_> = gold.iter().map(|s| (s.start, s.end, s.polarity)).collect();
        let tp = p.intersection(&g).count();
        ensure!(
            (c.tp, c.fp, c.fn_) == (tp, p.len() - tp, g.len() - tp),
            "exact-match instance {i}: {c:?}"
        );
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(())
}

fn zero_tp() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let c = ConfusionCounts {
            tp: 0,
            fp: rng.gen_range(0..1000),
            fn_: rng.gen_range(0..1000),
            tn: None,
        };
        let m = prf(&c);
        ensure!(
            (m.precision, m.recall, m.f1) == (0.0, 0.0, 0.0),
            "{c:?} gave {m:?}"
        );
    }
    Ok(())
}

// ------------------------------------------------------- claims, geometry

fn claim_expansion() -> Outcome {
    let dir = root().join("cookbook/claims");
    let read =
        |name: &str| std::fs::read_to_string(dir.join(name)).map_err(|e| format!("{name}: {e}"));
    let template = ClaimTemplate::from_json(&read("covidcq.json")?).map_err(|e| e.to_string())?;
    let regular = expand_claims(&template, false).map_err(|e| e.to_string())?;
    let negated = expand_claims(&template, true).map_err(|e| e.to_string())?;
    ensure!(
        regular.len() == 9 && negated.len() == 9,
        "{} / {} claims",
        regular.len(),
        negated.len()
    );
    let lines = |v: &[String]| v.iter().map(|c| format!("{c}\n")).collect::<String>();
    ensure!(
        lines(&regular) == read("covidcq.expected.txt")?,
        "regular claims differ from golden"
    );
    ensure!(
        lines(&negated) == read("covidcq.negated.expected.txt")?,
        "negated claims differ from golden"
    );
    ensure!(
        regular[2] == "hydroxychloroquine is a cure for COVID",
        "claim 3 is {:?}",
        regular[2]
    );
    ensure!(
        negated[2].starts_with("It is not the case that"),
        "negated claim 3 is {:?}",
        negated[2]
    );
    Ok(())
}

fn test_vocab() -> Vocabulary {
    let mut tokens: Vec<String> = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"]
        .map(String::from)
        .to_vec();
    for c in 'a'..='z' {
        tokens.push(c.to_string());
        tokens.push(format!("##{c}"));
    }
    for w in [
        "the", "covid", "vaccine", "cure", "water", "##ing", "5g", ",", ".", "!",
    ] {
        tokens.push(w.to_string());
    }
    Vocabulary::new(tokens).unwrap()
}

fn random_text(rng: &mut ChaCha8Rng, max_words: usize) -> String {
    const WORDS: &[&str] = &[
        "the",
        "covid",
        "vaccines",
        "curing",
        "water",
        "5g",
        "Ünïcode",
        "hello!",
        "x",
        "…",
        "claims,",
        "#tag",
        "@user",
        "lorem",
        "ipsum",
        "42",
    ];
    let n = rng.gen_range(0..=max_words);
    (0..n)
        .map(|_| *WORDS.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
}

fn sequence_geometry() -> Outcome {
    let vocab = test_vocab();
    let geometry = ModelGeometry::default();
    ensure!(
        geometry.max_tokens == 192,
        "max_tokens is {}",
        geometry.max_tokens
    );
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..1000 {
        let text = random_text(&mut rng, 400);
        let single = encode_single(&text, &vocab, geometry);
        ensure!(
            single.ids.len() == 192,
            "text {i}: length {}",
            single.ids.len()
        );
        single
            .check(&vocab, geometry, false)
            .map_err(|e| format!("text {i}: {e}"))?;
        let claim = random_text(&mut rng, 20);
        let pair =
            encode_pair(&claim, &text, &vocab, geometry).map_err(|e| format!("pair {i}: {e}"))?;
        pair.check(&vocab, geometry, true)
            .map_err(|e| format!("pair {i}: {e}"))?;
        let switches = pair.segment_ids[..pair.actual_length]
            .windows(2)
            .filter(|w| w[0] != w[1])
            .count();
        ensure!(switches <= 1, "pair {i}: {switches} segment switches");
    }
    Ok(())
}

fn head_geometry_counts() -> Outcome {
    let g = ModelGeometry::default();
    let counts =
        [HeadKind::Absa, HeadKind::Sa, HeadKind::Sd].map(|k| head_geometry(k, g).parameter_count);
    ensure!(
        counts == [3076, 442_371, 589_828],
        "parameter counts {counts:?}"
    );
    ensure!(
        g.flattened_dim() == 147_456,
        "flattened dim {}",
        g.flattened_dim()
    );
    Ok(())
}

// ---------------------------------------------------------------- datasets

fn by_label(m: &BTreeMap<String, usize>) -> Vec<(&str, usize)> {
    m.iter().map(|(k, &v)| (k.as_str(), v)).collect()
}

fn check_dataset(task: Task, manifest: &Path) -> Outcome {
    let built = build_from_manifest(task, manifest, 0).map_err(|e| e.to_string())?;
    match built {
        BuiltDataset::Sa(ds) => {
            let labels = by_label(&ds.manifest.train_by_label);
            ensure!(
                labels == [("negative", 8333), ("neutral", 8334), ("positive", 8333)],
                "SA train classes {labels:?}"
            );
            ensure!(
                ds.train.len() == 25_000 && ds.val.len() == 2000,
                "SA sizes {}/{}",
                ds.train.len(),
                ds.val.len()
            );
        }
        BuiltDataset::Absa(ds) => {
            ensure!(
                (ds.train.len(), ds.val.len()) == (25_000, 2162),
                "ABSA split {}/{}",
                ds.train.len(),
                ds.val.len()
            );
        }
        BuiltDataset::Sd(ds) => {
            let four = |n| {
                vec![
                    ("agree", n),
                    ("disagree", n),
                    ("discuss", n),
                    ("unrelated", n),
                ]
            };
            ensure!(
                by_label(&ds.manifest.train_by_label) == four(6250),
                "SD train {:?}",
                ds.manifest.train_by_label
            );
            ensure!(
                by_label(&ds.manifest.val_by_label) == four(500),
                "SD val {:?}",
                ds.manifest.val_by_label
            );
        }
    }
    Ok(())
}

fn dataset_recipes() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let sub = |name: &str| -> Result<PathBuf, String> {
        let path = dir.path().join(name);
        std::fs::create_dir_all(&path).map_err(|e| e.to_string())?;
        Ok(path)
    };
    let sa = SaStandIn::default()
        .write(&sub("sa")?)
        .map_err(|e| e.to_string())?;
    let absa = AbsaStandIn::default()
        .write(&sub("absa")?)
        .map_err(|e| e.to_string())?;
    let sd = SdStandIn::default()
        .write(&sub("sd")?)
        .map_err(|e| e.to_string())?;
    check_dataset(Task::Sa, &sa)?;
    check_dataset(Task::Absa, &absa)?;
    check_dataset(Task::Sd, &sd)?;
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    for (var, task) in [
        ("INFOTRIAGE_SA_SOURCES", Task::Sa),
        ("INFOTRIAGE_ABSA_SOURCES", Task::Absa),
        ("INFOTRIAGE_SD_SOURCES", Task::Sd),
    ] {
        if let Some(path) = std::env::var_os(var) {
            check_dataset(task, Path::new(&path)).map_err(|e| format!("{var}: {e}"))?;
        }
    }
    Ok(())
}

// ------------------------------------------------------------------ search

const VOCAB: &[&str] = &[
    "covid", "corona", "virus", "good", "bad", "gates", "water", "cure", "vaccine", "5g", "great",
    "terrible", "claim", "love", "hate", "the", "is",
];

fn engineered_corpus(rng: &mut ChaCha8Rng, n: usize) -> Corpus {
    let docs = (0..n)
        .map(|i| {
            let len = rng.gen_range(1..14);
            let text: Vec<&str> = (0..len).map(|_| *VOCAB.choose(rng).unwrap()).collect();
            CleanDocument::from_text(format!("d{i:03}"), &text.join(" "))
        })
        .collect();
    Corpus::seal(docs).unwrap()
}

fn random_keyword(rng: &mut ChaCha8Rng) -> Keyword {
    let w = VOCAB.choose(rng).unwrap();
    let end = (w.len() - rng.gen_range(0..3).min(w.len() - 1)).max(1);
    let mode = if rng.gen_bool(0.5) {
        MatchMode::Token
    } else {
        MatchMode::Substring
    };
    Keyword::new(&w[..end], mode).unwrap()
}

fn random_expr(rng: &mut ChaCha8Rng) -> KeywordExpr {
    let groups = (0..rng.gen_range(1..4))
        .map(|_| {
            (0..rng.gen_range(1..4))
                .map(|_| random_keyword(rng))
                .collect()
        })
        .collect();
    KeywordExpr::new(groups).unwrap()
}

fn keyword_hits(expr: &KeywordExpr, corpus: &Corpus) -> BTreeSet<String> {
    corpus
        .documents()
        .iter()
        .filter(|d| matches_keywords(expr, d).matched)
        .map(|d| d.id().to_string())
        .collect()
}

struct Counting {
    inner: LexiconBackend,
    seen: Mutex<Vec<String>>,
}

impl Counting {
    fn note(&self, doc: &CleanDocument) {
        self.seen.lock().unwrap().push(doc.id().to_string());
    }
}

impl ClassifierBackend for Counting {
    fn name(&self) -> &str {
        self.inner.name()
    }
    fn capabilities(&self) -> Capabilities {
        self.inner.capabilities()
    }
    fn sentiment(&self, doc: &CleanDocument) -> Result<Prediction<SentimentLabel>, ClassifyError> {
        self.note(doc);
        self.inner.sentiment(doc)
    }
    fn aspects(&self, doc: &CleanDocument) -> Result<AspectTagging, ClassifyError> {
        self.note(doc);
        self.inner.aspects(doc)
    }
    fn stance(
        &self,
        claim: &CleanDocument,
        doc: &CleanDocument,
    ) -> Result<Prediction<StanceLabel>, ClassifyError> {
        self.note(doc);
        self.inner.stance(claim, doc)
    }
}

fn lexicon_backend() -> LexiconBackend {
    LexiconBackend::new(
        "lexicon",
        Lexicon::from_pairs([
            ("good", 1),
            ("great", 1),
            ("love", 1),
            ("bad", -1),
            ("terrible", -1),
            ("hate", -1),
        ]),
    )
}

fn search_semantics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let corpus = engineered_corpus(&mut rng, 200);
    let expr =
        KeywordExpr::substrings(&[&["covid", "corona", "virus"], &["cure", "vaccine", "gates"]])
            .unwrap();
    let queries = [
        Query::keyword_only(expr.clone()),
        Query::sentiment(expr.clone(), SentimentLabel::Positive),
        Query::aspect(
            expr.clone(),
            vec![AspectRequirement {
                keywords: vec![Keyword::substring("gates").unwrap()],
                tag: RequiredTag::Negative,
            }],
        ),
        Query::stance(
            Some(expr.clone()),
            "the vaccine is a great cure",
            StanceTarget::Agree,
        ),
        Query::stance(None, "covid is bad", StanceTarget::Disagree),
    ];
    let hits = keyword_hits(&expr, &corpus);
    ensure!(
        !hits.is_empty() && hits.len() < corpus.len(),
        "degenerate fixture: {} hits",
        hits.len()
    );
    for query in &queries {
        let kind = query.kind_name();
        let mut runs = Vec::new();
        for p in [1, 4, 16] {
            let backend = Counting {
                inner: lexicon_backend(),
                seen: Mutex::new(Vec::new()),
            };
            let result = run_search(query, &corpus, &backend, SearchOptions::with_parallelism(p))
                .map_err(|e| format!("{kind}: {e}"))?;
            let seen = backend.seen.into_inner().unwrap();
            ensure!(
                seen.len() == result.classifier_calls,
                "{kind}: call count mismatch"
            );
            if let Query::Stance(q) = query {
                if q.keywords.is_none() {
                    runs.push(result);
                    continue;
                }
            }
            let misses: Vec<&String> = seen.iter().filter(|id| !hits.contains(*id)).collect();
            ensure!(
                misses.is_empty(),
                "{kind}: keyword misses classified: {misses:?}"
            );
            runs.push(result);
        }
        ensure!(
            runs[0] == runs[1] && runs[0] == runs[2],
            "{kind}: results differ across parallelism"
        );
    }

    for i in 0..500 {
        let expr = random_expr(&mut rng);
        let before = keyword_hits(&expr, &corpus);
        let group = rng.gen_range(0..expr.groups().len());
        let wider = keyword_hits(
            &expr
                .clone()
                .with_alternative(group, random_keyword(&mut rng)),
            &corpus,
        );
        ensure!(
            before.is_subset(&wider),
            "expression {i}: OR shrank the result"
        );
        let extra = (0..rng.gen_range(1..3))
            .map(|_| random_keyword(&mut rng))
            .collect();
        let narrower = keyword_hits(&expr.with_group(extra).unwrap(), &corpus);
        ensure!(
            narrower.is_subset(&before),
            "expression {i}: AND grew the result"
        );
    }
    Ok(())
}

fn keyword_proxy() -> Outcome {
    let suite = ReportSuite::from_json(
        r#"{"title": "proxy", "rows": [{"label": "K", "query": {"kind": "keyword_only", "keywords": [["vaccine"]]}}]}"#,
    )
    .map_err(|e| e.to_string())?;
    let mut docs = Vec::new();
    for i in 0..10 {
        docs.push(CleanDocument::from_text(
            format!("k{i}"),
            &format!("the vaccine story number {i}"),
        ));
        docs.push(CleanDocument::from_text(
            format!("o{i}"),
            &format!("an unrelated story number {i}"),
        ));
    }
    let corpus = Corpus::seal(docs).unwrap();
    let backend = lexicon_backend();
    let row = |gold: &GoldRelevance| -> Result<(f64, f64, f64), String> {
        let report = emit_report(&suite, &corpus, gold, &backend, SearchOptions::default())
            .map_err(|e| e.to_string())?;
        let m = report.rows[0].metrics.ok_or("K row failed")?;
        Ok((m.precision, m.recall, m.f1))
    };

    // Gold relevance defined by the keyword itself.
    let by_keyword =
        GoldRelevance::from_pairs(corpus.ids().map(|id| (id.to_string(), id.starts_with('k'))));
    let (_, recall, _) = row(&by_keyword)?;
    ensure!(recall == 1.0, "keyword-defined gold gives recall {recall}");

    // 4 of the 10 keyword matches are relevant.
    let forty = GoldRelevance::from_pairs(corpus.ids().map(|id| {
        let relevant = matches!(id, "k0" | "k3" | "k5" | "k8");
        (id.to_string(), relevant)
    }));
    let (p, r, f) = row(&forty)?;
    let shown = format!("({p:.2}, {r:.2}, {f:.2})");
    ensure!(shown == "(0.40, 1.00, 0.57)", "K row {shown}");
    Ok(())
}

// ----------------------------------------------------------- stub servers

/// What a stub answers: HTTP status, JSON body and a delay before replying.
type Handler = dyn Fn(&str, &Value) -> (u16, Value, Duration) + Send + Sync;

/// A tiny one-request-per-connection HTTP server on a background thread.
fn spawn_stub(handler: Arc<Handler>) -> SocketAddr {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        for stream in listener.incoming().flatten() {
            let handler = Arc::clone(&handler);
            std::thread::spawn(move || {
                let _ = serve_one(stream, &*handler);
            });
        }
    });
    addr
}

fn serve_one(stream: TcpStream, handler: &Handler) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    let path = request_line
        .split_whitespace()
        .nth(1)
        .unwrap_or("/")
        .to_string();
    let mut length = 0;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line)?;
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            if name.eq_ignore_ascii_case("content-length") {
                length = value.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body)?;
    let request: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
    let (status, reply, delay) = handler(&path, &request);
    std::thread::sleep(delay);
    let reply = reply.to_string();
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
        reply.len()
    )?;
    stream.flush()
}

fn remote(addr: SocketAddr, timeout_secs: f64) -> RemoteBackend {
    RemoteBackend::new(
        "stub",
        &RemoteConfig {
            endpoint: format!("http://{addr}"),
            timeout_secs,
            pool_size: 2,
            capabilities: vec![
                Capability::Sentiment,
                Capability::Aspects,
                Capability::Stance,
            ],
        },
    )
}

fn remote_conformance() -> Outcome {
    let no_delay = Duration::ZERO;
    let valid = spawn_stub(Arc::new(move |path: &str, req: &Value| match path {
        "/v1/sentiment" => (
            200,
            json!({"label": "negative", "scores": [0.7, 0.2, 0.1]}),
            no_delay,
        ),
        "/v1/stance" => (200, json!({"label": "disagree"}), no_delay),
        "/v1/aspects" => {
            let n = req["tokens"].as_array().map_or(0, Vec::len);
            let mut tags = vec!["O"; n];
            tags[1] = "positive";
            (200, json!({ "tags": tags }), no_delay)
        }
        _ => (404, json!({}), no_delay),
    }));
    let doc = CleanDocument::from_text("d", "bill gates is great");
    let claim = CleanDocument::from_text("c", "vaccines cause harm");
    let b = remote(valid, 5.0);
    let s = b
        .sentiment(&doc)
        .map_err(|e| format!("valid sentiment: {e}"))?;
    ensure!(
        s.label == SentimentLabel::Negative && s.scores.as_ref().map(Vec::len) == Some(3),
        "sentiment {s:?}"
    );
    let st = b
        .stance(&claim, &doc)
        .map_err(|e| format!("valid stance: {e}"))?;
    ensure!(
        st.label == StanceLabel::Disagree && st.scores.is_none(),
        "stance {st:?}"
    );
    let t = b.aspects(&doc).map_err(|e| format!("valid aspects: {e}"))?;
    ensure!(
        t.tags().len() == 4 && t.spans().len() == 1,
        "aspects {:?}",
        t.spans()
    );

    let unknown = spawn_stub(Arc::new(move |path: &str, _: &Value| match path {
        "/v1/sentiment" => (200, json!({"label": "ecstatic"}), no_delay),
        _ => (200, json!({"label": "refute"}), no_delay),
    }));
    let b = remote(unknown, 5.0);
    ensure!(
        matches!(b.sentiment(&doc), Err(ClassifyError::Protocol(_))),
        "unknown sentiment label accepted"
    );
    ensure!(
        matches!(b.stance(&claim, &doc), Err(ClassifyError::Protocol(_))),
        "unknown stance label accepted"
    );

    let short = spawn_stub(Arc::new(move |_: &str, _: &Value| {
        (200, json!({"tags": ["O", "O"]}), no_delay)
    }));
    let r = remote(short, 5.0).aspects(&doc);
    ensure!(
        matches!(r, Err(ClassifyError::Protocol(_))),
        "tag-length mismatch gave {r:?}"
    );

    let rejecting = spawn_stub(Arc::new(move |_: &str, _: &Value| {
        (400, json!({"error": "text too long"}), no_delay)
    }));
    let r = remote(rejecting, 5.0).sentiment(&doc);
    ensure!(
        matches!(&r, Err(ClassifyError::Rejected(m)) if m == "text too long"),
        "400 gave {r:?}"
    );

    let slow = spawn_stub(Arc::new(|_: &str, _: &Value| {
        (200, json!({"label": "positive"}), Duration::from_secs(3))
    }));
    let start = Instant::now();
    let r = remote(slow, 0.3).sentiment(&doc);
    ensure!(
        matches!(r, Err(ClassifyError::Timeout(_))),
        "slow backend gave {r:?}"
    );
    ensure!(
        start.elapsed() < Duration::from_secs(2),
        "timeout took {:?}",
        start.elapsed()
    );
    Ok(())
}

// ----------------------------------------------------------------- service

struct Server {
    child: Child,
    base: String,
}

impl Server {
    fn start(config: &Path) -> Result<Server, String> {
        let mut child = Command::new(env!("CARGO_BIN_EXE_infotriage"))
            .args(["serve", "--config"])
            .arg(config)
            .env("RUST_LOG", "warn")
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| e.to_string())?;
        let stderr = child.stderr.take().unwrap();
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stderr).lines().map_while(Result::ok) {
                if let Some(addr) = line.strip_prefix("listening on ") {
                    let _ = tx.send(addr.to_string());
                }
            }
        });
        let base = rx.recv_timeout(Duration::from_secs(20)).map_err(|_| {
            let _ = child.kill();
            "server did not report its address".to_string()
        })?;
        Ok(Server { child, base })
    }

    fn kill(mut self) {
        // Child::kill is SIGKILL on unix: no graceful shutdown.
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

struct Client {
    agent: ureq::Agent,
    base: String,
}

impl Client {
    fn new(base: &str) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .into();
        Client {
            agent,
            base: base.to_string(),
        }
    }

    fn finish(
        r: Result<ureq::http::Response<ureq::Body>, ureq::Error>,
    ) -> Result<(u16, Value), String> {
        let mut r = r.map_err(|e| e.to_string())?;
        let status = r.status().as_u16();
        let text = r.body_mut().read_to_string().map_err(|e| e.to_string())?;
        Ok((status, serde_json::from_str(&text).unwrap_or(Value::Null)))
    }

    fn get(&self, path: &str) -> Result<(u16, Value), String> {
        Self::finish(self.agent.get(format!("{}{path}", self.base)).call())
    }

    fn post(&self, path: &str, body: &Value) -> Result<(u16, Value), String> {
        Self::finish(
            self.agent
                .post(format!("{}{path}", self.base))
                .send_json(body),
        )
    }

    fn upload(&self, bytes: &str) -> Result<(u16, Value), String> {
        Self::finish(
            self.agent
                .post(format!("{}/corpora", self.base))
                .send(bytes),
        )
    }

    fn wait_status(
        &self,
        search_id: &str,
        wanted: &[&str],
        within: Duration,
    ) -> Result<Value, String> {
        let start = Instant::now();
        loop {
            let (_, s) = self.get(&format!("/searches/{search_id}"))?;
            if wanted.iter().any(|w| s["status"] == *w) {
                return Ok(s);
            }
            if start.elapsed() > within {
                return Err(format!("search {search_id} stuck at {}", s["status"]));
            }
            std::thread::sleep(Duration::from_millis(50));
        }
    }
}

fn service_durability() -> Outcome {
    let calls = Arc::new(AtomicUsize::new(0));
    let counter = Arc::clone(&calls);
    let slow = spawn_stub(Arc::new(move |_: &str, _: &Value| {
        counter.fetch_add(1, Ordering::SeqCst);
        (
            200,
            json!({"label": "positive"}),
            Duration::from_millis(100),
        )
    }));
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = dir.path().join("store");
    let config = dir.path().join("service.toml");
    std::fs::write(
        &config,
        format!(
            "listen = \"127.0.0.1:0\"\nstore_dir = {store:?}\nmax_concurrent_searches = 1\n\n\
             [backends.lexicon]\ntype = \"lexicon\"\n\n\
             [backends.slow]\ntype = \"remote\"\nendpoint = \"http://{slow}\"\ntimeout_secs = 10\npool_size = 1\n\
             capabilities = [\"sentiment\"]\n"
        ),
    )
    .map_err(|e| e.to_string())?;

    let corpus: String = (0..40)
        .map(|i| {
            format!(
                "{}\n",
                json!({"id": format!("d{i:02}"), "text": format!("bill gates story {i} is great")})
            )
        })
        .collect();
    let server = Server::start(&config)?;
    let client = Client::new(&server.base);

    // Identical bytes uploaded concurrently resolve to one corpus.
    let uploads: Vec<(u16, Value)> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..4).map(|_| s.spawn(|| client.upload(&corpus))).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap())
            .collect::<Result<_, _>>()
    })?;
    let ids: BTreeSet<&str> = uploads
        .iter()
        .filter_map(|(_, b)| b["corpus_id"].as_str())
        .collect();
    ensure!(ids.len() == 1, "concurrent uploads returned ids {ids:?}");
    let created = uploads.iter().filter(|(s, _)| *s == 201).count();
    ensure!(
        created == 1,
        "{created} uploads reported creation; statuses {:?}",
        uploads.iter().map(|u| u.0).collect::<Vec<_>>()
    );
    let corpus_id = ids.into_iter().next().unwrap().to_string();

    let (_, session) = client.post("/sessions", &json!({ "corpus_id": corpus_id }))?;
    let session_id = session["session_id"]
        .as_str()
        .ok_or("no session id")?
        .to_string();
    let searches = format!("/sessions/{session_id}/searches");
    let query =
        json!({"kind": "sentiment", "keywords": [["gates"]], "target_sentiment": "positive"});

    let (_, first) = client.post(&searches, &json!({"query": query, "backend": "lexicon"}))?;
    let first = first["search_id"]
        .as_str()
        .ok_or("no search id")?
        .to_string();
    client.wait_status(&first, &["done"], Duration::from_secs(20))?;
    let (status, _) = client.post(
        &format!("/sessions/{session_id}/feedback"),
        &json!({"doc_id": "d03", "mark": "relevant"}),
    )?;
    ensure!(status == 200, "feedback returned {status}");

    // One search mid-flight against the slow backend and one queued behind it.
    let (_, running) = client.post(&searches, &json!({"query": query, "backend": "slow"}))?;
    let running = running["search_id"]
        .as_str()
        .ok_or("no search id")?
        .to_string();
    let (_, queued) = client.post(&searches, &json!({"query": query, "backend": "lexicon"}))?;
    let queued = queued["search_id"]
        .as_str()
        .ok_or("no search id")?
        .to_string();
    client.wait_status(&running, &["running"], Duration::from_secs(20))?;
    let start = Instant::now();
    while calls.load(Ordering::SeqCst) < 3 && start.elapsed() < Duration::from_secs(10) {
        std::thread::sleep(Duration::from_millis(20));
    }
    let (_, q) = client.get(&format!("/searches/{queued}"))?;
    ensure!(q["status"] == "pending", "queued search is {}", q["status"]);
    server.kill();

    let server = Server::start(&config)?;
    let client = Client::new(&server.base);
    let legal = ["pending", "running", "done", "failed"];
    for id in [&first, &running, &queued] {
        let (status, s) = client.get(&format!("/searches/{id}"))?;
        ensure!(status == 200, "search {id} missing after restart");
        ensure!(
            legal.iter().any(|l| s["status"] == *l),
            "search {id} has status {}",
            s["status"]
        );
    }
    let (_, f) = client.get(&format!("/searches/{first}"))?;
    ensure!(
        f["status"] == "done" && f["result_count"] == 40,
        "completed search became {f}"
    );
    let (_, r) = client.get(&format!("/searches/{running}"))?;
    ensure!(
        r["status"] == "failed" && r["error"].as_str().is_some_and(|e| e.contains("restart")),
        "interrupted search is {r}"
    );
    client.wait_status(&queued, &["done"], Duration::from_secs(20))?;

    let (_, s) = client.get(&format!("/sessions/{session_id}"))?;
    let history = s["history"].as_array().ok_or("no history")?;
    ensure!(history.len() == 3, "history has {} entries", history.len());
    ensure!(
        history[0]["result"].as_array().map(Vec::len) == Some(40),
        "first result lost"
    );
    ensure!(
        s["feedback"] == json!({"d03": "relevant"}),
        "feedback is {}",
        s["feedback"]
    );
    let (status, again) = client.upload(&corpus)?;
    ensure!(
        status == 200 && again["corpus_id"] == corpus_id.as_str(),
        "re-upload gave {status} {again}"
    );
    drop(server);
    Ok(())
}
