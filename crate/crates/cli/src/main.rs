//! `infotriage`: headless driver for ingestion, search, evaluation,
//! report tables, dataset assembly, claim expansion and the HTTP service.
//!
//! Exit codes: 0 success, 1 user or input error, 2 internal failure.
//! Machine-readable output goes to stdout, diagnostics to stderr.

use std::io::{IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use infotriage_core::classify::{ClassifierBackend, StanceLabel};
use infotriage_core::corpus::{ingest_bytes_with_id, Corpus, Format};
use infotriage_core::datasets::recipes::build_from_manifest;
use infotriage_core::datasets::Task;
use infotriage_core::evaluate::{
    confusion, emit_report, GoldRelevance, Report, ReportRow, ReportSuite,
};
use infotriage_core::query::{
    expand_claims, run_search, ClaimTemplate, Query, SearchOptions, SearchResult,
};
use infotriage_service::store::corpus_digest_id;
use infotriage_service::ServiceConfig;

#[derive(Parser)]
#[command(
    name = "infotriage",
    version,
    about = "Keyword, sentiment and stance search for disinformation triage"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Output {
    Text,
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Clean and seal a corpus file and print its summary.
    Ingest {
        file: PathBuf,
        #[arg(long, value_parser = parse_format)]
        format: Option<Format>,
        /// Also write the sealed corpus as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        output: Output,
    },
    /// Run one query over a corpus file.
    Search {
        corpus: PathBuf,
        /// A query file, or a report suite together with --row.
        #[arg(long)]
        query: PathBuf,
        /// Row label to take from a suite file, e.g. "SD 3".
        #[arg(long)]
        row: Option<String>,
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long, value_parser = parse_format)]
        format: Option<Format>,
        #[arg(long, value_enum, default_value = "json")]
        output: Output,
    },
    /// Score a saved search result against gold labels.
    Eval {
        #[arg(long)]
        search_output: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Stance that counts as relevant when gold lines carry stances.
        #[arg(long, value_parser = parse_stance)]
        stance: Option<StanceLabel>,
        #[arg(long, default_value = "search")]
        label: String,
        #[arg(long, value_enum, default_value = "csv")]
        output: Output,
    },
    /// Run every row of a suite and print the results table.
    Report {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long, value_parser = parse_format)]
        format: Option<Format>,
        #[arg(long, value_enum, default_value = "csv")]
        output: Output,
    },
    /// Assemble a fine-tuning dataset from upstream source files.
    #[command(after_help = "Source manifest keys (each a path or a list of paths):\n  \
        sa:   sst, amazon_test, amazon_train, yelp_test, yelp_train\n  \
        absa: semeval14, negspec, mams, twitter, yaso, sentihood_train, sentihood_dev, sentihood_test, names\n  \
        sd:   fnc_train_bodies, fnc_train_stances, fnc_test_bodies, fnc_test_stances, arc_bodies, arc_stances, perspectrum")]
    BuildDataset {
        /// sa, absa or sd.
        #[arg(value_parser = parse_task)]
        task: Task,
        /// JSON manifest mapping source keys to files.
        #[arg(long)]
        sources: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the claims a template expands to, one per line.
    Claims {
        #[arg(long)]
        template: PathBuf,
        #[arg(long)]
        negate: bool,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct EngineArgs {
    #[arg(long, default_value = "lexicon")]
    backend: String,
    /// Service configuration whose backend registry to use.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads; 0 uses every processor.
    #[arg(long, default_value_t = 0)]
    parallelism: usize,
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse()
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn parse_stance(s: &str) -> Result<StanceLabel, String> {
    s.parse().map_err(|_| format!("unknown stance {s:?}"))
}

#[derive(Debug)]
enum CliError {
    User(String),
    Internal(String),
}

fn user<E: std::fmt::Display>(context: impl std::fmt::Display) -> impl FnOnce(E) -> CliError {
    move |e| CliError::User(format!("{context}: {e}"))
}

type CliResult = Result<(), CliError>;

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(user(path.display()))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(user(path.display()))
}

fn emit(text: &str) -> CliResult {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        Err(e) => Err(CliError::Internal(format!("writing output: {e}"))),
    }
}

fn json_line<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("output serializes") + "\n"
}

fn color() -> bool {
    std::env::var_os("NO_COLOR").is_none() && std::io::stdout().is_terminal()
}

fn infer_format(path: &Path, explicit: Option<Format>) -> Format {
    explicit.unwrap_or_else(|| match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
        _ => Format::Jsonl,
    })
}

/// Corpus ids are content digests, so the CLI and the service agree.
fn load_corpus(path: &Path, format: Option<Format>) -> Result<Corpus, CliError> {
    let bytes = read(path)?;
    let format = infer_format(path, format);
    ingest_bytes_with_id(&bytes, format, corpus_digest_id(&bytes, format))
        .map_err(user(path.display()))
}

fn load_backend(args: &EngineArgs) -> Result<Arc<dyn ClassifierBackend>, CliError> {
    let config = match &args.config {
        Some(path) => ServiceConfig::load(path).map_err(user(path.display()))?,
        None => ServiceConfig::default(),
    };
    let specs = config.backend_specs();
    let spec = specs.get(&args.backend).ok_or_else(|| {
        let known: Vec<&str> = specs.keys().map(String::as_str).collect();
        CliError::User(format!(
            "unknown backend {:?} (known: {})",
            args.backend,
            known.join(", ")
        ))
    })?;
    spec.build(&args.backend).map_err(user("backend"))
}

fn load_query(path: &Path, row: Option<&str>) -> Result<Query, CliError> {
    let text = read_text(path)?;
    match row {
        None => Query::from_json(&text).map_err(user(path.display())),
        Some(label) => {
            let suite = ReportSuite::from_json(&text).map_err(user(path.display()))?;
            suite
                .rows
                .into_iter()
                .find(|r| r.label == label)
                .map(|r| r.query)
                .ok_or_else(|| {
                    CliError::User(format!("{}: no row labelled {label:?}", path.display()))
                })
        }
    }
}

/// A saved search is either `search --output json` or bare ids, one per line.
fn load_predictions(path: &Path) -> Result<Vec<String>, CliError> {
    let text = read_text(path)?;
    if text.trim_start().starts_with('{') {
        let result: SearchResult = serde_json::from_str(&text).map_err(user(path.display()))?;
        return Ok(result.doc_ids);
    }
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

fn render_report(report: &Report, output: Output) -> String {
    match output {
        Output::Csv => report.to_csv(),
        Output::Json => report.to_json(),
        Output::Text if color() => {
            let text = report.to_text();
            let mut lines = text.lines();
            let mut out = String::new();
            if let Some(title) = lines.next() {
                out.push_str(&format!("\x1b[1m{title}\x1b[0m\n"));
            }
            for line in lines {
                if line.contains("  failed: ") {
                    out.push_str(&format!("\x1b[31m{line}\x1b[0m\n"));
                } else {
                    out.push_str(line);
                    out.push('\n');
                }
            }
            out
        }
        Output::Text => report.to_text(),
    }
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Ingest {
            file,
            format,
            out,
            output,
        } => {
            let corpus = load_corpus(&file, format)?;
            if let Some(out) = out {
                let bytes = serde_json::to_vec(&corpus).expect("corpus serializes");
                std::fs::write(&out, bytes).map_err(user(out.display()))?;
            }
            let summary = serde_json::json!({
                "corpus_id": corpus.corpus_id(),
                "documents": corpus.len(),
            });
            emit(&match output {
                Output::Json => json_line(&summary),
                Output::Csv => format!(
                    "corpus_id,documents\n{},{}\n",
                    corpus.corpus_id(),
                    corpus.len()
                ),
                Output::Text => format!("{}\t{} documents\n", corpus.corpus_id(), corpus.len()),
            })
        }
        Command::Search {
            corpus,
            query,
            row,
            engine,
            format,
            output,
        } => {
            let query = load_query(&query, row.as_deref())?;
            let corpus = load_corpus(&corpus, format)?;
            let backend = load_backend(&engine)?;
            let options = SearchOptions::with_parallelism(engine.parallelism);
            let result =
                run_search(&query, &corpus, backend.as_ref(), options).map_err(user("search"))?;
            for s in &result.skipped {
                eprintln!("skipped {}: {}", s.doc_id, s.error);
            }
            emit(&match output {
                Output::Json => json_line(&result),
                Output::Text => result.doc_ids.iter().map(|d| format!("{d}\n")).collect(),
                Output::Csv => {
                    let mut s = String::from("doc_id,rule_fired\n");
                    for r in &result.rationales {
                        s.push_str(&format!("{},{}\n", r.doc_id, r.rule_fired));
                    }
                    s
                }
            })
        }
        Command::Eval {
            search_output,
            gold,
            stance,
            label,
            output,
        } => {
            let predicted = load_predictions(&search_output)?;
            let gold = GoldRelevance::load(&gold, stance).map_err(user(gold.display()))?;
            let counts = confusion(&predicted, &gold).map_err(user("eval"))?;
            let report = Report {
                title: label.clone(),
                rows: vec![ReportRow::scored(label, counts, 0)],
            };
            emit(&render_report(&report, output))
        }
        Command::Report {
            suite,
            gold,
            corpus,
            engine,
            format,
            output,
        } => {
            let suite_path = suite;
            let suite = ReportSuite::from_json(&read_text(&suite_path)?)
                .map_err(user(suite_path.display()))?;
            let gold =
                GoldRelevance::load(&gold, suite.gold_stance).map_err(user(gold.display()))?;
            let corpus = load_corpus(&corpus, format)?;
            let backend = load_backend(&engine)?;
            let options = SearchOptions::with_parallelism(engine.parallelism);
            let report = emit_report(&suite, &corpus, &gold, backend.as_ref(), options)
                .map_err(user("report"))?;
            emit(&render_report(&report, output))
        }
        Command::BuildDataset {
            task,
            sources,
            out,
            seed,
        } => {
            let built = build_from_manifest(task, &sources, seed).map_err(user("build-dataset"))?;
            std::fs::create_dir_all(&out).map_err(user(out.display()))?;
            built.write(&out).map_err(user("build-dataset"))?;
            emit(&json_line(built.manifest()))
        }
        Command::Claims { template, negate } => {
            let t = ClaimTemplate::from_json(&read_text(&template)?)
                .map_err(user(template.display()))?;
            let claims = expand_claims(&t, negate).map_err(user(template.display()))?;
            emit(&claims.iter().map(|c| format!("{c}\n")).collect::<String>())
        }
        Command::Serve { config } => {
            let config = match config {
                Some(path) => ServiceConfig::load(&path).map_err(user(path.display()))?,
                None => {
                    let mut c = ServiceConfig::default();
                    c.apply_env(std::env::vars()).map_err(user("environment"))?;
                    c
                }
            };
            tracing_subscriber::fmt()
                .with_writer(std::io::stderr)
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env()
                        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
                )
                .init();
            let runtime =
                tokio::runtime::Runtime::new().map_err(|e| CliError::Internal(e.to_string()))?;
            runtime
                .block_on(infotriage_service::serve(config))
                .map_err(user("serve"))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    std::panic::set_hook(Box::new(|info| eprintln!("internal error: {info}")));
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(CliError::User(msg))) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Ok(Err(CliError::Internal(msg))) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(2)
        }
        Err(_) => ExitCode::from(2),
    }
}
