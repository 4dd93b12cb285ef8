// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn freqlens(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_freqlens")).args(args).output().expect("binary runs")
}

fn code(args: &[&str]) -> i32 {
    freqlens(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &str = r#"
n_relations = 3
examples_per_relation = 8
objects_per_relation = 3
dim = 4
hidden_dim = 6
log10_min = 0.5
log10_max = 2.0
batch_size = 32
"#;

/// Planted experiment written through the CLI; returns its directory.
fn planted(root: &Path) -> PathBuf {
    let dir = root.join("exp");
    fs::write(root.join("planted.toml"), SMALL).unwrap();
    let out = freqlens(&["--out", s(&dir), "synth", "--planted", "--spec", s(&root.join("planted.toml"))]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    dir
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&[]), 1);
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(code(&["count", "--corpus", "x"]), 1);
}

#[test]
fn counting_verbs() {
    let root = tempfile::tempdir().unwrap();
    let exp = planted(root.path());
    let (corpus, dict) = (exp.join("corpus"), exp.join("dictionary.jsonl"));
    let input = ["--corpus", s(&corpus), "--dict", s(&dict)];
    let run = |out: &Path, verb: &[&str]| {
        let mut args = vec!["--out", s(out)];
        args.extend_from_slice(verb);
        code(&args)
    };

    let counts = root.path().join("counts");
    let positions = root.path().join("positions.tsv");
    assert_eq!(run(&counts, &[&["count"], &input[..], &["--positions", s(&positions)]].concat()), 0);
    assert_eq!(fs::read_dir(&counts).unwrap().count(), fs::read_dir(exp.join("truth")).unwrap().count());
    for f in fs::read_dir(exp.join("truth")).unwrap() {
        let name = f.unwrap().file_name();
        assert_eq!(fs::read(counts.join(&name)).unwrap(), fs::read(exp.join("truth").join(&name)).unwrap());
    }
    assert!(positions.is_file());

    let sharded = root.path().join("sharded");
    assert_eq!(code(&[&["--shards", "3", "--out", s(&sharded), "cooc"], &input[..]].concat()), 0);
    for f in fs::read_dir(&counts).unwrap() {
        let name = f.unwrap().file_name();
        assert_eq!(fs::read(counts.join(&name)).unwrap(), fs::read(sharded.join(&name)).unwrap());
    }

    let merged = root.path().join("merged");
    assert_eq!(code(&["--out", s(&merged), "merge", s(&counts), s(&sharded)]), 0);

    let ck = root.path().join("ck");
    assert_eq!(run(&ck, &[&["checkpoints"], &input[..], &["--schedule", "256,512"]].concat()), 0);
    assert_eq!(run(&ck, &[&["checkpoints"], &input[..], &["--schedule", "512,256"]].concat()), 1);
    // The planted corpus has no document offsets.
    assert_eq!(run(&root.path().join("docs"), &[&["doc-cooc"], &input[..]].concat()), 2);
    assert_eq!(run(&root.path().join("x"), &["count", "--corpus", "/nonexistent", "--dict", s(&dict)]), 2);
}

#[test]
fn lre_and_regression_verbs() {
    let root = tempfile::tempdir().unwrap();
    let exp = planted(root.path());
    let rels: Vec<PathBuf> = (0..3).map(|i| exp.join(format!("relations/rel{i:02}.json"))).collect();
    let lres = root.path().join("lre");
    for r in &rels {
        let out = freqlens(&["--out", s(&lres), "sweep", "--relation", s(r), "--analytic"]);
        assert!(out.status.success());
        assert!(String::from_utf8_lossy(&out.stdout).contains("hard_causality="));
    }
    assert_eq!(code(&["--out", s(&root.path().join("fixed")), "fit-lre", "--relation", s(&rels[0]), "--rank", "2"]), 0);
    assert_eq!(code(&["--out", s(&root.path().join("fixed")), "fit-lre", "--relation", s(&rels[0]), "--probe", "7"]), 1);

    let metrics = root.path().join("metrics");
    let mut args = vec!["--out", s(&metrics), "metrics", "--lre-dir", s(&lres)];
    for r in &rels {
        args.extend(["--relation", s(r)]);
    }
    assert_eq!(code(&args), 0);
    let records = metrics.join("example_records.tsv");
    assert!(metrics.join("relation_metrics.tsv").is_file());

    let counts = root.path().join("counts");
    let (corpus, dict) = (exp.join("corpus"), exp.join("dictionary.jsonl"));
    assert_eq!(code(&["--out", s(&counts), "count", "--corpus", s(&corpus), "--dict", s(&dict)]), 0);
    let feat = root.path().join("feat");
    assert_eq!(code(&["--out", s(&feat), "features", "--records", s(&records), "--counts", s(&counts), "--dict", s(&dict)]), 0);
    let table = feat.join("features.tsv");

    let reg = root.path().join("reg");
    let out = freqlens(&["--out", s(&reg), "regress", "--features", s(&table), "--seeds", "1", "--trees", "5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(reg.join("loro_lm_and_lre.tsv").is_file() && reg.join("forest.bin").is_file());
    assert_eq!(code(&["--out", s(&reg), "regress", "--features", s(&table), "--seeds", "1", "--trees", "5", "--lm-only"]), 0);
    assert!(reg.join("loro_lm_only.tsv").is_file());

    let imp = root.path().join("imp");
    let base = ["--out", s(&imp), "importance", "--features", s(&table), "--seeds", "1", "--trees", "5", "--repeats", "2"];
    assert_eq!(code(&[&base[..], &["--pca-merge", "none"]].concat()), 0);
    assert!(imp.join("importance.tsv").is_file());
    assert_eq!(code(&[&base[..], &["--pca-merge", "faithfulness"]].concat()), 1);

    let forest = reg.join("forest.bin");
    let tr = ["--out", s(&imp), "transfer", "--forest", s(&forest), "--train-features", s(&table), "--eval-features", s(&table)];
    assert_eq!(code(&[&tr[..], &["--token-ratio", "2.5"]].concat()), 0);
    assert_eq!(code(&[&tr[..], &["--token-ratio", "-1"]].concat()), 1);
    assert!(imp.join("transfer.tsv").is_file());

    assert_eq!(code(&["--out", s(&imp), "correlate", "--features", s(&table)]), 0);
    assert_eq!(code(&["--out", s(&imp), "correlate", "--features", s(&table), "--feature", "shoe_size"]), 1);

    let bad = root.path().join("bad.tsv");
    fs::write(&bad, "relation_id\texample_id\n1\t2\n").unwrap();
    assert_eq!(code(&["--out", s(&feat), "features", "--records", s(&bad), "--counts", s(&counts), "--dict", s(&dict)]), 1);
}

#[test]
fn pipeline_verbs() {
    let root = tempfile::tempdir().unwrap();
    let exp = planted(root.path());
    let config = exp.join("experiment.toml");
    let text = fs::read_to_string(&config).unwrap().replace("n_trees = 100", "n_trees = 5")
        // Every example of this tiny experiment is faithful, so the merge would see a constant column.
        .replace(r#"pca_merge = ["faithfulness", "faith_prob"]"#, "pca_merge = []");
    fs::write(&config, text).unwrap();
    assert_eq!(code(&["validate", s(&config)]), 0);
    assert_eq!(code(&["run", s(&config)]), 0);
    assert_eq!(code(&["report", s(&exp.join("out"))]), 0);
    assert!(exp.join("out/report/regression.tsv").is_file());

    fs::write(exp.join("out/.lock"), "").unwrap();
    assert_eq!(code(&["run", s(&config)]), 2);
    fs::remove_file(exp.join("out/.lock")).unwrap();

    let empty = root.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let out = freqlens(&["report", s(&empty)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for stage in ["count", "cooc", "checkpoints", "fit", "metrics", "features", "regress"] {
        assert!(err.contains(stage), "{err}");
    }

    let broken = root.path().join("broken.toml");
    fs::write(&broken, "version = 1\nbogus = true\n").unwrap();
    assert_eq!(code(&["validate", s(&broken)]), 1);
    let missing = fs::read_to_string(&config).unwrap().replace("dictionary.jsonl", "nope.jsonl");
    fs::write(exp.join("missing.toml"), missing).unwrap();
    let out = freqlens(&["validate", s(&exp.join("missing.toml"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("corpus.dictionary") || String::from_utf8_lossy(&out.stderr).contains("corpus.dictionary"));
}
