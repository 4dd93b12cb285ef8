// SPDX-License-Identifier: MIT OR Apache-2.0

//! Compiles a small dictionary and counts term matches and per-row
//! co-occurrences in both pair modes.

use freqlens::corpus::{scan_corpus, Matcher, PairMode, ScanOptions, TermDictionary, TokenCorpus};

fn main() -> freqlens::error::Result<()> {
    // term 0 = [7], term 1 = [8, 9], term 2 = [7, 8] (overlaps both)
    let dict = TermDictionary::from_patterns(vec![vec![vec![7]], vec![vec![8, 9]], vec![vec![7, 8]]])?;
    let rows = vec![
        vec![7, 8, 9, 0, 7, 1],
        vec![1, 2, 3, 8, 9, 4],
        vec![7, 7, 8, 9, 0, 0],
        vec![0, 0, 0, 0, 0, 0],
    ];
    let corpus = TokenCorpus::from_rows(&rows, 2, 6, "demo")?;
    let matcher = Matcher::compile(&dict);
    println!("{} patterns, {} automaton states", matcher.pattern_count(), matcher.state_count());

    for mode in [PairMode::Presence, PairMode::Product] {
        let opts = ScanOptions {
            pair_mode: mode,
            emit_positions: true,
            shards: 2,
        };
        let out = scan_corpus(&matcher, &corpus, &opts);
        println!("\n{mode:?}: {} tokens", out.counts.tokens_scanned);
        for (t, n) in &out.counts.occurrences {
            println!("  term {t}: {n}");
        }
        for ((a, b), n) in &out.counts.pair_counts {
            println!("  pair ({a}, {b}): {n}");
        }
        if mode == PairMode::Presence {
            for r in out.positions.unwrap_or_default().iter().take(4) {
                println!("  match batch={} row={} pos={} term={}", r.batch_index, r.row_index, r.position, r.term_id);
            }
        }
    }
    Ok(())
}
