// SPDX-License-Identifier: MIT OR Apache-2.0

//! Generates a corpus with planted counts and checks that scanning it
//! recovers them exactly.

use freqlens::corpus::{
    generate_synthetic_corpus, scan_corpus, CorpusShape, Matcher, SynthSpec, TermDictionary,
};

fn main() -> freqlens::error::Result<()> {
    let dictionary =
        TermDictionary::from_patterns(vec![vec![vec![100]], vec![vec![101, 102]], vec![vec![103], vec![104]]])?;
    let spec = SynthSpec {
        dictionary: dictionary.clone(),
        pair_counts: vec![(0, 1, 40), (1, 2, 7)],
        term_counts: vec![(0, 90)],
        filler_vocab: 100,
        shape: CorpusShape {
            batch_size: 16,
            seq_len: 12,
            n_batches: 8,
        },
        seed: 7,
        tokenizer_id: "demo".into(),
    };
    let (corpus, truth) = generate_synthetic_corpus(&spec)?;
    let scanned = scan_corpus(&Matcher::compile(&dictionary), &corpus, &Default::default()).counts;
    println!("tokens: {}", corpus.total_tokens());
    println!("term 0: planted {} scanned {}", truth.occurrence(0), scanned.occurrence(0));
    println!("pair (0,1): planted {} scanned {}", truth.pair(0, 1), scanned.pair(0, 1));
    println!("pair (1,2): planted {} scanned {}", truth.pair(1, 2), scanned.pair(1, 2));
    println!("exact: {}", truth == scanned);
    Ok(())
}
