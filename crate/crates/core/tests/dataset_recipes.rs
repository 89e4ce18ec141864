use std::collections::BTreeMap;
use std::fs;

use infotriage_core::corpus::clean_text;
use infotriage_core::datasets::recipes::{build_from_manifest, BuiltDataset, SourceManifest};
use infotriage_core::datasets::synthetic::{AbsaStandIn, SaStandIn, SdStandIn};
use infotriage_core::datasets::{build_absa, build_sa, build_sd, AbsaRecipe, DatasetError, SaRecipe, SdRecipe, Task};

fn counts(pairs: &[(&str, usize)]) -> BTreeMap<String, usize> {
    pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
}

#[test]
fn sa_recipe_on_stand_ins() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = SaStandIn::default().write(dir.path()).unwrap();
    let BuiltDataset::Sa(ds) = build_from_manifest(Task::Sa, &manifest, 0).unwrap() else {
        panic!("wrong task");
    };
    assert_eq!(ds.train.len(), 25_000);
    assert_eq!(ds.val.len(), 2000);
    assert_eq!(
        ds.manifest.train_by_label,
        counts(&[("negative", 8333), ("neutral", 8334), ("positive", 8333)])
    );
    assert_eq!(
        ds.manifest.train_by_origin,
        counts(&[("amazon_test", 6572), ("sst", 11_855), ("yelp_test", 6573)])
    );
    assert_eq!(
        ds.manifest.val_by_label,
        counts(&[("negative", 666), ("neutral", 668), ("positive", 666)])
    );
    for item in ds.train.iter().chain(&ds.val) {
        assert_eq!(clean_text(&item.text).text, item.text);
    }
}

#[test]
fn sa_recipe_rejects_short_sources() {
    let dir = tempfile::tempdir().unwrap();
    let stand_in = SaStandIn {
        amazon_test: [1000, 3100, 1900],
        ..SaStandIn::default()
    };
    let manifest = stand_in.write(dir.path()).unwrap();
    let err = build_from_manifest(Task::Sa, &manifest, 0).unwrap_err();
    assert!(
        matches!(&err, DatasetError::InsufficientExamples { source_name, needed: 1676, found: 1000, .. } if source_name == "amazon_test"),
        "{err}"
    );

    let stand_in = SaStandIn {
        sst: [4981, 2225, 4649],
        ..SaStandIn::default()
    };
    let manifest = stand_in.write(dir.path()).unwrap();
    let sources = SourceManifest::load(&manifest).unwrap().sa_sources().unwrap();
    assert!(matches!(
        build_sa(&sources, &SaRecipe::default()),
        Err(DatasetError::CountMismatch { .. })
    ));
}

#[test]
fn absa_recipe_on_stand_ins() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = AbsaStandIn::default().write(dir.path()).unwrap();
    let BuiltDataset::Absa(ds) = build_from_manifest(Task::Absa, &manifest, 11).unwrap() else {
        panic!("wrong task");
    };
    assert_eq!(ds.train.len() + ds.val.len(), 27_162);
    assert_eq!(ds.train.len(), 25_000);
    assert_eq!(ds.val.len(), 2162);
    assert_eq!(ds.manifest.train_by_origin["sentihood_dev"], 76);
    assert_eq!(
        ds.manifest.val_by_origin,
        counts(&[("sentihood_dev", 747 - 76), ("sentihood_test", 1491)])
    );
    for item in ds.train.iter().chain(&ds.val) {
        assert_eq!(clean_text(&item.text).text, item.text);
        for pair in item.targets.windows(2) {
            assert!(pair[0].end <= pair[1].start);
        }
        for t in &item.targets {
            assert!(t.start < t.end && t.end <= item.text.len());
        }
    }
    // Every stand-in Sentihood item names two places and both are targets.
    assert!(ds.val.iter().all(|i| i.targets.len() == 2));
}

#[test]
fn absa_recipe_count_mismatches() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = AbsaStandIn {
        mams: 5000,
        ..AbsaStandIn::default()
    }
    .write(dir.path())
    .unwrap();
    let err = build_from_manifest(Task::Absa, &manifest, 1).unwrap_err();
    assert!(
        matches!(&err, DatasetError::CountMismatch { source_name, expected: 5297, found: 5000 } if source_name == "mams"),
        "{err}"
    );

    let manifest = AbsaStandIn {
        sentihood: [0, 0, 0],
        ..AbsaStandIn::default()
    }
    .write(dir.path())
    .unwrap();
    let recipe = AbsaRecipe::default();
    let sources = SourceManifest::load(&manifest).unwrap().absa_sources(&recipe, 1).unwrap();
    assert!(matches!(
        build_absa(&sources, &recipe),
        Err(DatasetError::CountMismatch { expected: 5215, found: 0, .. })
    ));

    // Right total, wrong split between the Sentihood files.
    let manifest = AbsaStandIn {
        sentihood: [2976, 748, 1491],
        ..AbsaStandIn::default()
    }
    .write(dir.path())
    .unwrap();
    let sources = SourceManifest::load(&manifest).unwrap().absa_sources(&recipe, 1).unwrap();
    assert!(matches!(
        build_absa(&sources, &recipe),
        Err(DatasetError::CountMismatch { expected: 2977, found: 2976, .. })
    ));
}

#[test]
fn sd_recipe_on_stand_ins() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = SdStandIn::default().write(dir.path()).unwrap();
    let BuiltDataset::Sd(ds) = build_from_manifest(Task::Sd, &manifest, 0).unwrap() else {
        panic!("wrong task");
    };
    let four = |n| counts(&[("agree", n), ("disagree", n), ("discuss", n), ("unrelated", n)]);
    assert_eq!(ds.train.len(), 25_000);
    assert_eq!(ds.manifest.train_by_label, four(6250));
    assert_eq!(ds.manifest.val_by_label, four(500));
    assert_eq!(
        ds.manifest.train_by_origin,
        counts(&[("arc", 1257 + 1402 + 904 + 3125), ("fnc_train", 840 + 3678 + 5346 + 3125), ("perspectrum", 1315 + 4008)])
    );
}

#[test]
fn sd_recipe_requires_exact_all_takes() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = SdStandIn {
        fnc_train: [3400, 3678, 5400, 841],
        ..SdStandIn::default()
    }
    .write(dir.path())
    .unwrap();
    let sources = SourceManifest::load(&manifest).unwrap().sd_sources().unwrap();
    assert!(matches!(
        build_sd(&sources, &SdRecipe::default()),
        Err(DatasetError::CountMismatch { expected: 840, found: 841, .. })
    ));
}

#[test]
fn builds_are_byte_deterministic() {
    let src = tempfile::tempdir().unwrap();
    let manifest = AbsaStandIn::default().write(src.path()).unwrap();
    let out = |seed: u64| {
        let dir = tempfile::tempdir().unwrap();
        build_from_manifest(Task::Absa, &manifest, seed).unwrap().write(dir.path()).unwrap();
        ["train.jsonl", "val.jsonl", "manifest.json"].map(|f| fs::read(dir.path().join(f)).unwrap())
    };
    let a = out(5);
    assert_eq!(a, out(5));
    let b = out(6);
    assert_ne!(a[1], b[1], "a different seed draws different place names");
}
