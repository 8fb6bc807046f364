mod common;

use seqtag::corpus::{parse_conll, ReadMode};
use seqtag::fixtures::{format_conll, generate_toy, read_manifest, sha256_hex, MANIFEST, SPLITS, TOY_LABELS, TOY_SEED, TOY_SENTENCES};

#[test]
fn pinned_files_match_the_generator() {
    let dir = common::toy_dir();
    let pinned = read_manifest(&std::fs::read_to_string(dir.join(MANIFEST)).unwrap());
    let corpus = generate_toy(TOY_SEED, TOY_SENTENCES);
    assert_eq!(corpus.digests(), pinned);
    for (name, hash) in &pinned {
        let bytes = std::fs::read(dir.join(name)).unwrap();
        assert_eq!(&sha256_hex(&bytes), hash, "{name}");
    }
}

#[test]
fn regeneration_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    generate_toy(TOY_SEED, TOY_SENTENCES).write(tmp.path()).unwrap();
    for name in SPLITS.iter().chain([&MANIFEST]) {
        let a = std::fs::read(tmp.path().join(name)).unwrap();
        let b = std::fs::read(common::toy_dir().join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
    assert_ne!(generate_toy(8, TOY_SENTENCES), generate_toy(TOY_SEED, TOY_SENTENCES));
}

#[test]
fn splits_parse_and_carry_features() {
    let corpus = generate_toy(TOY_SEED, TOY_SENTENCES);
    assert_eq!(corpus.train.len(), TOY_SENTENCES);
    assert_eq!((corpus.dev.len(), corpus.test.len()), (TOY_SENTENCES / 2, TOY_SENTENCES / 2));
    for (_, sents) in corpus.splits() {
        let parsed = parse_conll(&format_conll(sents), ReadMode::Train).unwrap();
        assert_eq!(parsed.as_slice(), sents);
        for s in sents {
            assert_eq!(s.feature_names(), vec!["POS", "Cap"]);
            assert!(s.labels().iter().all(|l| TOY_LABELS.contains(l)));
        }
    }
    assert_eq!(generate_toy(3, 1).train.len(), 1);
    assert_eq!(generate_toy(3, 1).dev.len(), 1);
}

#[test]
fn multi_token_entities_occur() {
    let corpus = generate_toy(TOY_SEED, TOY_SENTENCES);
    let labels: Vec<&str> = corpus.train.iter().flat_map(|s| s.labels()).collect();
    assert!(labels.windows(2).any(|w| w == ["B-PER", "I-PER"]));
    assert!(labels.contains(&"B-LOC"));
}
