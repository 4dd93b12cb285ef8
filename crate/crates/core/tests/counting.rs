// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use common::*;
use freqlens::corpus::{
    cumulative_counts, document_counts, generate_synthetic_corpus, merge_counts, scan_corpus, CheckpointSchedule,
    CorpusShape, CountTable, Matcher, PairMode, ScanOptions, SynthSpec, TermDictionary, TokenCorpus,
};
use freqlens::Error;
use proptest::prelude::*;

fn table(entries: &[(u32, u64)], pairs: &[(u32, u32, u64)], tokens: u64) -> CountTable {
    let mut t = CountTable::new();
    entries.iter().for_each(|&(a, n)| t.add_occurrences(a, n));
    pairs.iter().for_each(|&(a, b, n)| t.add_pair(a, b, n));
    t.tokens_scanned = tokens;
    t
}

fn arb_table() -> impl Strategy<Value = CountTable> {
    (
        prop::collection::vec((0u32..20, 1u64..50), 0..10),
        prop::collection::vec((0u32..20, 0u32..20, 1u64..50), 0..15),
        0u64..1000,
    )
        .prop_map(|(e, p, t)| table(&e, &p, t))
}

fn opts(mode: PairMode, shards: usize) -> ScanOptions {
    ScanOptions {
        emit_positions: false,
        pair_mode: mode,
        shards,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn merge_is_a_commutative_monoid(a in arb_table(), b in arb_table(), c in arb_table()) {
        prop_assert_eq!(merge_counts(&a, &CountTable::new()), a.clone());
        prop_assert_eq!(merge_counts(&a, &b), merge_counts(&b, &a));
        prop_assert_eq!(merge_counts(&merge_counts(&a, &b), &c), merge_counts(&a, &merge_counts(&b, &c)));
    }

    #[test]
    fn scan_matches_oracle_for_any_shard_count(seed in 0u64..10_000, shards in 1usize..6) {
        let fx = random_fixture(seed, 4_000);
        let m = Matcher::compile(&fx.dict);
        let c = &fx.corpus;
        for mode in [PairMode::Presence, PairMode::Product] {
            let got = scan_corpus(&m, c, &opts(mode, shards)).counts;
            prop_assert_eq!(&got, &oracle_rows(c, &fx.dict, mode, c.n_batches()));
            prop_assert_eq!(got, scan_corpus(&m, c, &opts(mode, 1)).counts);
        }
    }

    #[test]
    fn checkpoints_are_monotone_batch_prefixes(seed in 0u64..10_000) {
        let fx = random_fixture(seed, 4_000);
        let m = Matcher::compile(&fx.dict);
        let schedule = CheckpointSchedule::new(fx.cutoffs.clone()).unwrap();
        let tables = cumulative_counts(&m, &fx.corpus, &schedule, &opts(PairMode::Presence, 2)).unwrap();
        prop_assert_eq!(tables.len(), fx.cutoffs.len());
        for w in tables.windows(2) {
            let (lo, hi) = (&w[0].1, &w[1].1);
            prop_assert!(lo.tokens_scanned <= hi.tokens_scanned);
            for (&t, &n) in &lo.occurrences {
                prop_assert!(hi.occurrence(t) >= n);
            }
            for (&(a, b), &n) in &lo.pair_counts {
                prop_assert!(hi.pair(a, b) >= n);
            }
        }
        let batch_tokens = (fx.corpus.batch_size() * fx.corpus.seq_len()) as u64;
        for (cutoff, t) in &tables {
            prop_assert_eq!(t.tokens_scanned, cutoff / batch_tokens * batch_tokens);
        }
    }

    #[test]
    fn whole_row_documents_contain_row_counts(seed in 0u64..10_000) {
        let fx = random_fixture(seed, 4_000);
        let m = Matcher::compile(&fx.dict);
        let aligned = fx.corpus.clone().with_doc_offsets(fx.aligned_docs.clone()).unwrap();
        let rows = scan_corpus(&m, &aligned, &opts(PairMode::Product, 1)).counts;
        let docs = document_counts(&m, &aligned, PairMode::Product).unwrap();
        prop_assert!(docs.tokens_scanned == rows.tokens_scanned);
        for (&(a, b), &n) in &rows.pair_counts {
            prop_assert!(docs.pair(a, b) >= n);
        }
        for (&t, &n) in &rows.occurrences {
            prop_assert!(docs.occurrence(t) >= n);
        }
    }
}

#[test]
fn documents_match_oracle() {
    for seed in 0..20 {
        let fx = random_fixture(seed, 6_000);
        let m = Matcher::compile(&fx.dict);
        let docs = fx.corpus.doc_offsets().unwrap();
        for mode in [PairMode::Presence, PairMode::Product] {
            assert_eq!(
                document_counts(&m, &fx.corpus, mode).unwrap(),
                oracle_docs(&fx.corpus, docs, &fx.dict, mode),
                "seed {seed} {mode:?}"
            );
        }
    }
}

#[test]
fn pattern_split_across_rows_is_seen_only_by_documents() {
    let dict = TermDictionary::from_patterns(vec![vec![vec![7, 8]], vec![vec![9]]]).unwrap();
    let corpus = TokenCorpus::from_rows(&[vec![1, 9, 7], vec![8, 1, 1]], 2, 3, "t")
        .unwrap()
        .with_doc_offsets(vec![(0, 6)])
        .unwrap();
    let m = Matcher::compile(&dict);
    let rows = scan_corpus(&m, &corpus, &ScanOptions::default()).counts;
    let docs = document_counts(&m, &corpus, PairMode::Presence).unwrap();
    assert_eq!(rows.occurrence(0), 0);
    assert_eq!(docs.occurrence(0), 1);
    assert_eq!(docs.pair(0, 1), 1);
    assert_eq!(rows.pair(0, 1), 0);
}

#[test]
fn documents_require_offsets() {
    let fx = random_fixture(3, 1_000);
    let plain = TokenCorpus::from_rows(
        &fx.corpus.rows().map(<[u32]>::to_vec).collect::<Vec<_>>(),
        fx.corpus.batch_size() as u32,
        fx.corpus.seq_len() as u32,
        "t",
    )
    .unwrap();
    let m = Matcher::compile(&fx.dict);
    assert!(matches!(document_counts(&m, &plain, PairMode::Presence), Err(Error::MissingDocOffsets)));
}

#[test]
fn bad_schedules_are_rejected() {
    assert!(matches!(CheckpointSchedule::new(vec![]), Err(Error::Schedule(_))));
    assert!(matches!(CheckpointSchedule::new(vec![5, 5]), Err(Error::Schedule(_))));
    assert!(matches!(CheckpointSchedule::new(vec![9, 3]), Err(Error::Schedule(_))));
    let fx = random_fixture(1, 1_000);
    let m = Matcher::compile(&fx.dict);
    let too_far = CheckpointSchedule::new(vec![fx.corpus.total_tokens() + 1]).unwrap();
    assert!(matches!(
        cumulative_counts(&m, &fx.corpus, &too_far, &ScanOptions::default()),
        Err(Error::Schedule(_))
    ));
}

#[test]
fn tables_and_corpora_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let fx = random_fixture(11, 3_000);
    let m = Matcher::compile(&fx.dict);
    let counts = scan_corpus(&m, &fx.corpus, &ScanOptions::default()).counts;
    counts.write_dir(&dir.path().join("counts")).unwrap();
    assert_eq!(CountTable::read_dir(&dir.path().join("counts")).unwrap(), counts);
    fx.corpus.save(&dir.path().join("corpus")).unwrap();
    let loaded = TokenCorpus::load(&dir.path().join("corpus")).unwrap();
    assert_eq!(loaded.tokens(), fx.corpus.tokens());
    assert_eq!(loaded.doc_offsets(), fx.corpus.doc_offsets());
    fx.dict.save(&dir.path().join("dict.jsonl")).unwrap();
    assert_eq!(TermDictionary::load(&dir.path().join("dict.jsonl")).unwrap().entries(), fx.dict.entries());
}

#[test]
fn synthetic_corpus_scans_to_planted_truth() {
    let dict = TermDictionary::from_patterns((0..6).map(|t| vec![vec![1000 + 2 * t, 1001 + 2 * t]]).collect()).unwrap();
    let spec = SynthSpec {
        dictionary: dict.clone(),
        pair_counts: vec![(0, 1, 40), (2, 3, 7), (0, 5, 1)],
        term_counts: vec![(4, 30), (0, 60)],
        filler_vocab: 500,
        shape: CorpusShape {
            batch_size: 8,
            seq_len: 12,
            n_batches: 20,
        },
        seed: 3,
        tokenizer_id: "synth".into(),
    };
    let (corpus, truth) = generate_synthetic_corpus(&spec).unwrap();
    assert_eq!(truth.pair(0, 1), 40);
    assert_eq!(truth.occurrence(0), 60);
    assert_eq!(truth.occurrence(4), 30);
    let m = Matcher::compile(&dict);
    for shards in [1, 3] {
        assert_eq!(scan_corpus(&m, &corpus, &opts(PairMode::Presence, shards)).counts, truth);
    }
    let (again, _) = generate_synthetic_corpus(&spec).unwrap();
    assert_eq!(again.tokens(), corpus.tokens());
}

#[test]
fn positions_are_sorted_and_agree_with_counts() {
    for seed in 0..10 {
        let fx = random_fixture(seed, 3_000);
        let m = Matcher::compile(&fx.dict);
        for shards in [1, 3] {
            let out = scan_corpus(
                &m,
                &fx.corpus,
                &ScanOptions {
                    emit_positions: true,
                    pair_mode: PairMode::Presence,
                    shards,
                },
            );
            let pos = out.positions.unwrap();
            assert!(pos.windows(2).all(|w| w[0] < w[1]), "seed {seed}");
            let total: u64 = out.counts.occurrences.values().sum();
            assert_eq!(pos.len() as u64, total);
            for r in &pos {
                let entry = fx.dict.get(r.term_id).unwrap();
                let pat = &entry.patterns[r.pattern_index as usize];
                let row = fx.corpus.row(r.batch_index as usize, r.row_index as usize);
                assert_eq!(&row[r.position as usize..r.position as usize + pat.len()], pat.as_slice());
            }
        }
    }
}
