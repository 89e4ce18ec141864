use std::fs;
use std::path::PathBuf;

use infotriage_core::evaluate::ReportSuite;
use infotriage_core::query::{expand_claims, ClaimTemplate, Query, StanceTarget};

fn cookbook() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../cookbook")
}

fn suite(name: &str) -> ReportSuite {
    let path = cookbook().join("suites").join(format!("{name}.json"));
    ReportSuite::from_json(&fs::read_to_string(&path).unwrap()).unwrap()
}

fn stance_claims(suite: &ReportSuite, target: StanceTarget) -> Vec<String> {
    suite
        .rows
        .iter()
        .filter_map(|r| match &r.query {
            Query::Stance(q) => {
                assert_eq!(q.target_stance, target, "row {}", r.label);
                Some(q.claim.clone())
            }
            _ => None,
        })
        .collect()
}

#[test]
fn every_suite_round_trips_byte_identically() {
    let mut seen = 0;
    for entry in fs::read_dir(cookbook().join("suites")).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        let parsed = ReportSuite::from_json(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(parsed.to_json(), text, "{}", path.display());
        for row in &parsed.rows {
            let q = Query::from_json(&row.query.to_json()).unwrap();
            assert_eq!(q, row.query);
        }
        seen += 1;
    }
    assert_eq!(seen, 16);
}

#[test]
fn covidcq_claims_match_golden_files() {
    let dir = cookbook().join("claims");
    let template = ClaimTemplate::from_json(&fs::read_to_string(dir.join("covidcq.json")).unwrap()).unwrap();
    for (negate, golden) in [(false, "covidcq.expected.txt"), (true, "covidcq.negated.expected.txt")] {
        let claims = expand_claims(&template, negate).unwrap();
        assert_eq!(claims.len(), 9);
        let text: String = claims.iter().map(|c| format!("{c}\n")).collect();
        assert_eq!(text, fs::read_to_string(dir.join(golden)).unwrap());
    }

    let regular = expand_claims(&template, false).unwrap();
    let negated = expand_claims(&template, true).unwrap();
    assert_eq!(stance_claims(&suite("covidcq_regular"), StanceTarget::Agree), regular);
    assert_eq!(stance_claims(&suite("covidcq_negated"), StanceTarget::Disagree), negated);
}

#[test]
fn table_row_labels() {
    let labels = |name: &str| suite(name).rows.iter().map(|r| r.label.clone()).collect::<Vec<_>>();
    let sd = |n: usize| (1..=n).map(|i| format!("SD {i}")).collect::<Vec<_>>();
    let with = |head: &[&str], n| head.iter().map(|s| s.to_string()).chain(sd(n)).collect::<Vec<_>>();
    for name in ["clinton_for", "clinton_against", "trump_for", "trump_against"] {
        assert_eq!(labels(name), with(&["K", "SA", "ABSA"], 7));
    }
    for name in ["spears_positive", "spears_negative", "carter_positive", "carter_negative"] {
        assert_eq!(labels(name), with(&["K", "SA", "ABSA"], 3));
    }
    assert_eq!(labels("covidcq_regular"), with(&["K", "SA", "ABSA"], 9));
    assert_eq!(labels("covidcq_negated"), sd(9));
    assert_eq!(labels("genetic_engineering"), with(&["K", "SA 1", "SA 2", "ABSA 1", "ABSA 2"], 3));
    assert_eq!(labels("cold_survival"), with(&["K", "SA 1", "SA 2", "ABSA 1", "ABSA 2"], 2));
    let four = ["K", "SA 1", "SA 2", "ABSA 1", "ABSA 2", "ABSA 3", "ABSA 4"];
    assert_eq!(labels("water_cure"), with(&four, 4));
    assert_eq!(labels("garlic_cure"), with(&four, 4));
    assert_eq!(labels("bioweapon"), with(&four, 2));
    assert_eq!(labels("5g"), with(&["K", "SA 1", "ABSA 1"], 2));
}
