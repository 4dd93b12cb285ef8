// SPDX-License-Identifier: MIT OR Apache-2.0

//! Exact term and co-occurrence counting over tokenized batch corpora.

mod counts;
mod dictionary;
mod matcher;
mod scan;
mod synth;
mod tokens;

pub use counts::{
    merge_counts, read_checkpoints, write_checkpoints, write_positions, CountTable, OCCURRENCES_FILE,
    PAIRS_FILE, SUMMARY_FILE,
};
pub use dictionary::{TermDictionary, TermEntry, TermId};
pub use matcher::{MatchRecord, Matcher, PatternId};
pub use scan::{
    cumulative_counts, document_counts, scan_corpus, CheckpointSchedule, PairMode, ScanOptions,
    ScanOutput,
};
pub use synth::{generate_synthetic_corpus, CorpusShape, SynthSpec, SynthSpecFile};
pub use tokens::{DocSpan, Endianness, Manifest, TokenCorpus, DOCS_FILE, MANIFEST_FILE, TOKENS_FILE};

/// Compiles a validated dictionary into a shareable matcher.
pub fn compile_patterns(dict: &TermDictionary) -> Matcher {
    Matcher::compile(dict)
}
