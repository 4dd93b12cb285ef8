// SPDX-License-Identifier: MIT OR Apache-2.0

//! Cumulative counts at token budgets, as seen by a run that consumed the
//! corpus batch by batch.

use freqlens::corpus::{cumulative_counts, CheckpointSchedule, Matcher, TermDictionary, TokenCorpus};

fn main() -> freqlens::error::Result<()> {
    let dict = TermDictionary::from_patterns(vec![vec![vec![3]], vec![vec![4]]])?;
    let rows: Vec<Vec<u32>> = (0..8).map(|i| if i % 3 == 0 { vec![3, 4, 1] } else { vec![3, 1, 1] }).collect();
    // 2 rows of 3 tokens per batch: 6 tokens per batch, 4 batches.
    let corpus = TokenCorpus::from_rows(&rows, 2, 3, "demo")?;
    let schedule = CheckpointSchedule::new(vec![6, 13, 24])?;
    let m = Matcher::compile(&dict);
    println!("cutoff\ttokens_scanned\tterm0\tpair(0,1)");
    for (cutoff, t) in cumulative_counts(&m, &corpus, &schedule, &Default::default())? {
        println!("{cutoff}\t{}\t{}\t{}", t.tokens_scanned, t.occurrence(0), t.pair(0, 1));
    }
    Ok(())
}
