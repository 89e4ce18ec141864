//! Brute-force per-document oracles for the metric functions.

use infotriage_core::classify::SentimentLabel;
use infotriage_core::evaluate::{confusion, exact_match_absa, prf, EntitySpan, GoldRelevance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Walks every document once and classifies it by hand.
fn oracle_counts(n_docs: usize, predicted: &[bool], relevant: &[bool]) -> (usize, usize, usize, usize) {
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for d in 0..n_docs {
        match (predicted[d], relevant[d]) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    (tp, fp, fn_, tn)
}

fn oracle_prf(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    if tp == 0 {
        return (0.0, 0.0, 0.0);
    }
    let p = tp as f64 / (tp + fp) as f64;
    let r = tp as f64 / (tp + fn_) as f64;
    // Harmonic mean written as the count form.
    let f = 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64;
    (p, r, f)
}

#[test]
fn retrieval_metrics_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let n = rng.gen_range(0..60);
        let relevant: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
        let predicted: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
        let ids: Vec<String> = (0..n).map(|i| format!("doc{i}")).collect();
        let gold = GoldRelevance::from_pairs(ids.iter().cloned().zip(relevant.iter().copied()));
        // Duplicate predictions must not change anything.
        let mut pred_ids: Vec<&str> = ids.iter().zip(&predicted).filter(|(_, &p)| p).map(|(s, _)| s.as_str()).collect();
        if let Some(&first) = pred_ids.first() {
            pred_ids.push(first);
        }

        let c = confusion(&pred_ids, &gold).unwrap();
        let (tp, fp, fn_, tn) = oracle_counts(n, &predicted, &relevant);
        assert_eq!((c.tp, c.fp, c.fn_, c.tn), (tp, fp, fn_, Some(tn)));

        let m = prf(&c);
        let (p, r, f) = oracle_prf(tp, fp, fn_);
        assert_eq!((m.precision, m.recall), (p, r));
        assert!((m.f1 - f).abs() <= 1e-12, "{} vs {f}", m.f1);
    }
}

#[test]
fn exact_match_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let span = |rng: &mut ChaCha8Rng| {
        let start = rng.gen_range(0..8);
        EntitySpan {
            start,
            end: start + rng.gen_range(1..3),
            polarity: SentimentLabel::ALL[rng.gen_range(0..3)],
        }
    };
    for _ in 0..1000 {
        let mut pred: Vec<EntitySpan> = (0..rng.gen_range(0..6)).map(|_| span(&mut rng)).collect();
        let mut gold: Vec<EntitySpan> = (0..rng.gen_range(0..6)).map(|_| span(&mut rng)).collect();
        let c = exact_match_absa(&pred, &gold);
        pred.sort();
        pred.dedup();
        gold.sort();
        gold.dedup();
        let tp = pred
            .iter()
            .filter(|p| gold.iter().any(|g| g.start == p.start && g.end == p.end && g.polarity == p.polarity))
            .count();
        assert_eq!((c.tp, c.fp, c.fn_), (tp, pred.len() - tp, gold.len() - tp));
    }
}
