// SPDX-License-Identifier: MIT OR Apache-2.0

//! Compares per-row co-occurrence with document-window co-occurrence when
//! documents span several rows.

use freqlens::corpus::{document_counts, scan_corpus, Matcher, PairMode, TermDictionary, TokenCorpus};

fn main() -> freqlens::error::Result<()> {
    let dict = TermDictionary::from_patterns(vec![vec![vec![5]], vec![vec![6]]])?;
    // Each document covers two rows; the pair is split across rows in the
    // second and third documents.
    let rows = vec![
        vec![5, 6, 0, 0],
        vec![0, 0, 0, 0],
        vec![5, 0, 0, 0],
        vec![0, 0, 0, 6],
        vec![0, 0, 0, 5],
        vec![6, 0, 0, 0],
    ];
    let corpus = TokenCorpus::from_rows(&rows, 2, 4, "demo")?.with_doc_offsets(vec![(0, 8), (8, 16), (16, 24)])?;
    let m = Matcher::compile(&dict);
    let seq = scan_corpus(&m, &corpus, &Default::default()).counts.pair(0, 1);
    let doc = document_counts(&m, &corpus, PairMode::Presence)?.pair(0, 1);
    println!("sequence windows: {seq}");
    println!("document windows: {doc}");
    println!("sequence / document: {:.3}", seq as f64 / doc as f64);
    Ok(())
}
