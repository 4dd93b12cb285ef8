// SPDX-License-Identifier: MIT OR Apache-2.0

//! Corpus scanning: per-sequence co-occurrence, document-window comparison
//! counts, and checkpoint-cumulative counts.
//!
//! Work is split into contiguous batch shards. Each worker owns a private
//! accumulator; results are reduced with [`merge_counts`](super::merge_counts)
//! so the shard count never changes the output.

use std::collections::BTreeMap;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::counts::CountTable;
use super::dictionary::TermId;
use super::matcher::{MatchRecord, Matcher};
use super::tokens::TokenCorpus;
use crate::error::{Error, Result};

/// How a co-occurrence window contributes to a pair count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairMode {
    /// One per window in which both terms match.
    #[default]
    Presence,
    /// Matches of `a` times matches of `b` within the window.
    Product,
}

impl FromStr for PairMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "presence" => Ok(PairMode::Presence),
            "product" => Ok(PairMode::Product),
            other => Err(Error::InvalidArgument(format!(
                "unknown pair mode `{other}` (expected presence or product)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScanOptions {
    pub emit_positions: bool,
    pub pair_mode: PairMode,
    /// Number of batch shards scanned in parallel; 0 and 1 both mean serial.
    pub shards: usize,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            emit_positions: false,
            pair_mode: PairMode::Presence,
            shards: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ScanOutput {
    pub counts: CountTable,
    /// Ordered by (batch, row, position, term, pattern) when requested.
    pub positions: Option<Vec<MatchRecord>>,
}

/// Strictly increasing token budgets at which cumulative counts are reported.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointSchedule {
    cutoffs: Vec<u64>,
}

impl CheckpointSchedule {
    pub fn new(cutoffs: Vec<u64>) -> Result<Self> {
        if cutoffs.is_empty() {
            return Err(Error::Schedule("schedule has no cutoffs".into()));
        }
        for w in cutoffs.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::Schedule(format!(
                    "cutoffs must be strictly increasing, found {} then {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(CheckpointSchedule { cutoffs })
    }

    pub fn cutoffs(&self) -> &[u64] {
        &self.cutoffs
    }
}

/// Buffered window entries are folded into the pair totals at this length.
const WINDOW_BUFFER: usize = 1 << 22;

/// Dense per-term scratch reused across windows by one worker.
///
/// Each window's distinct terms are buffered in sorted order. On compaction
/// the buffer is inverted by term, and for every term `a` the partners `b > a`
/// from all windows containing `a` are summed in a dense per-term array, so
/// pairs come out sorted by `(a, b)` and are merged into `pairs`.
struct WindowAccumulator {
    per_term: Vec<u32>,
    touched: Vec<TermId>,
    occurrences: Vec<u64>,
    win_terms: Vec<TermId>,
    win_mult: Vec<u32>,
    win_end: Vec<usize>,
    buffer_limit: usize,
    /// Sorted by key `a << 32 | b`.
    pairs: Vec<(u64, u64)>,
    acc: Vec<u64>,
    acc_touched: Vec<TermId>,
    tokens_scanned: u64,
    mode: PairMode,
}

impl WindowAccumulator {
    fn new(term_count: usize, mode: PairMode) -> Self {
        WindowAccumulator {
            per_term: vec![0; term_count],
            touched: Vec::new(),
            occurrences: vec![0; term_count],
            win_terms: Vec::new(),
            win_mult: Vec::new(),
            win_end: Vec::new(),
            buffer_limit: WINDOW_BUFFER,
            pairs: Vec::new(),
            acc: vec![0; term_count],
            acc_touched: Vec::new(),
            tokens_scanned: 0,
            mode,
        }
    }

    #[inline]
    fn hit(&mut self, term: TermId) {
        let slot = &mut self.per_term[term as usize];
        if *slot == 0 {
            self.touched.push(term);
        }
        *slot += 1;
    }

    /// Closes the current window, folding its matches into the totals.
    fn flush(&mut self) {
        if self.touched.is_empty() {
            return;
        }
        self.touched.sort_unstable();
        for &t in &self.touched {
            self.occurrences[t as usize] += self.per_term[t as usize] as u64;
        }
        if self.touched.len() > 1 {
            self.win_terms.extend_from_slice(&self.touched);
            if self.mode == PairMode::Product {
                self.win_mult.extend(self.touched.iter().map(|&t| self.per_term[t as usize]));
            }
            self.win_end.push(self.win_terms.len());
        }
        for &t in &self.touched {
            self.per_term[t as usize] = 0;
        }
        self.touched.clear();
        if self.win_terms.len() >= self.buffer_limit {
            self.compact();
        }
    }

    fn compact(&mut self) {
        if self.win_terms.is_empty() {
            return;
        }
        // Postings (entry, window end) grouped by term via a counting sort;
        // the last entry of a window has no partners and is skipped.
        let n_terms = self.acc.len();
        let mut start = vec![0usize; n_terms + 1];
        let mut begin = 0;
        for &end in &self.win_end {
            for &t in &self.win_terms[begin..end - 1] {
                start[t as usize + 1] += 1;
            }
            begin = end;
        }
        for t in 0..n_terms {
            start[t + 1] += start[t];
        }
        let mut fill = start.clone();
        let mut postings = vec![(0usize, 0usize); start[n_terms]];
        let mut begin = 0;
        for &end in &self.win_end {
            for e in begin..end - 1 {
                let t = self.win_terms[e] as usize;
                postings[fill[t]] = (e, end);
                fill[t] += 1;
            }
            begin = end;
        }

        let mut fresh = Vec::new();
        for a in 0..n_terms {
            let list = &postings[start[a]..start[a + 1]];
            if list.is_empty() {
                continue;
            }
            for &(e, end) in list {
                let ma = match self.mode {
                    PairMode::Presence => 1,
                    PairMode::Product => self.win_mult[e] as u64,
                };
                for idx in e + 1..end {
                    let b = self.win_terms[idx];
                    let inc = match self.mode {
                        PairMode::Presence => 1,
                        PairMode::Product => ma * self.win_mult[idx] as u64,
                    };
                    let slot = &mut self.acc[b as usize];
                    if *slot == 0 {
                        self.acc_touched.push(b);
                    }
                    *slot += inc;
                }
            }
            self.acc_touched.sort_unstable();
            let row = (a as u64) << 32;
            for &b in &self.acc_touched {
                fresh.push((row | b as u64, self.acc[b as usize]));
                self.acc[b as usize] = 0;
            }
            self.acc_touched.clear();
        }
        self.pairs = if self.pairs.is_empty() {
            fresh
        } else {
            merge_sum(&self.pairs, &fresh)
        };
        self.win_terms.clear();
        self.win_mult.clear();
        self.win_end.clear();
    }

    fn into_table(mut self) -> CountTable {
        self.compact();
        let mut table = CountTable::new();
        for (t, &n) in self.occurrences.iter().enumerate() {
            table.add_occurrences(t as TermId, n);
        }
        table.pair_counts = self
            .pairs
            .into_iter()
            .map(|(key, n)| (((key >> 32) as TermId, key as TermId), n))
            .collect::<BTreeMap<_, _>>();
        table.tokens_scanned = self.tokens_scanned;
        table
    }
}

/// Merges two key-sorted runs with distinct keys, summing shared keys.
fn merge_sum(a: &[(u64, u64)], b: &[(u64, u64)]) -> Vec<(u64, u64)> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        let (x, y) = (a[i], b[j]);
        if x.0 < y.0 {
            out.push(x);
            i += 1;
        } else if y.0 < x.0 {
            out.push(y);
            j += 1;
        } else {
            out.push((x.0, x.1 + y.1));
            i += 1;
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

fn shard_ranges(n_batches: usize, shards: usize) -> Vec<std::ops::Range<usize>> {
    let shards = shards.clamp(1, n_batches.max(1));
    let base = n_batches / shards;
    let extra = n_batches % shards;
    let mut start = 0;
    (0..shards)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

fn scan_batches(
    m: &Matcher,
    corpus: &TokenCorpus,
    batches: std::ops::Range<usize>,
    opts: &ScanOptions,
) -> ScanOutput {
    let mut acc = WindowAccumulator::new(m.term_count(), opts.pair_mode);
    let mut positions = opts.emit_positions.then(Vec::new);
    let seq_len = corpus.seq_len();
    for b in batches {
        for (r, row) in corpus.batch(b).chunks_exact(seq_len).enumerate() {
            m.for_each_match(row, |p, _| acc.hit(m.pattern_term(p)));
            acc.flush();
            acc.tokens_scanned += seq_len as u64;
            if let Some(pos) = positions.as_mut() {
                pos.extend(m.scan_sequence(row, b as u32, r as u32));
            }
        }
    }
    ScanOutput {
        counts: acc.into_table(),
        positions,
    }
}

fn run_sharded<T, F>(shards: usize, n_batches: usize, work: F) -> Vec<T>
where
    T: Send,
    F: Fn(std::ops::Range<usize>) -> T + Sync + Send,
{
    let ranges = shard_ranges(n_batches, shards);
    if ranges.len() <= 1 {
        return ranges.into_iter().map(work).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ranges.len())
        .build()
        .expect("thread pool");
    pool.install(|| ranges.into_par_iter().map(work).collect())
}

fn scan_range(
    m: &Matcher,
    corpus: &TokenCorpus,
    batches: std::ops::Range<usize>,
    opts: &ScanOptions,
) -> ScanOutput {
    let offset = batches.start;
    let len = batches.len();
    let parts = run_sharded(opts.shards, len, |r| {
        scan_batches(m, corpus, offset + r.start..offset + r.end, opts)
    });
    let mut out = ScanOutput {
        counts: CountTable::new(),
        positions: opts.emit_positions.then(Vec::new),
    };
    // Shards are contiguous and ordered, so concatenation keeps position order.
    for part in parts {
        if out.counts.is_empty() && out.counts.tokens_scanned == 0 {
            out.counts = part.counts;
        } else {
            out.counts.merge_from(&part.counts);
        }
        if let (Some(all), Some(p)) = (out.positions.as_mut(), part.positions) {
            all.extend(p);
        }
    }
    out
}

/// Counts every term match and per-row co-occurrences over the whole corpus.
/// Rows are the co-occurrence window and never span batches.
pub fn scan_corpus(m: &Matcher, corpus: &TokenCorpus, opts: &ScanOptions) -> ScanOutput {
    scan_range(m, corpus, 0..corpus.n_batches(), opts)
}

/// Counts with document spans as the co-occurrence window. Spans may cross
/// row and batch boundaries, so a pattern split across two rows of the same
/// document is matched here but not by [`scan_corpus`]. Tokens outside every
/// document are not scanned.
pub fn document_counts(m: &Matcher, corpus: &TokenCorpus, pair_mode: PairMode) -> Result<CountTable> {
    let docs = corpus.doc_offsets().ok_or(Error::MissingDocOffsets)?;
    let tokens = corpus.tokens();
    let mut acc = WindowAccumulator::new(m.term_count(), pair_mode);
    for &(start, end) in docs {
        let span = &tokens[start as usize..end as usize];
        m.for_each_match(span, |p, _| acc.hit(m.pattern_term(p)));
        acc.flush();
        acc.tokens_scanned += end - start;
    }
    Ok(acc.into_table())
}

/// Cumulative counts at each cutoff. Entry `k` covers exactly the batches
/// whose cumulative token total is within cutoff `k`; a partially covered
/// batch is excluded.
pub fn cumulative_counts(
    m: &Matcher,
    corpus: &TokenCorpus,
    schedule: &CheckpointSchedule,
    opts: &ScanOptions,
) -> Result<Vec<(u64, CountTable)>> {
    let total = corpus.total_tokens();
    if let Some(&last) = schedule.cutoffs().last() {
        if last > total {
            return Err(Error::Schedule(format!(
                "cutoff {last} exceeds corpus size of {total} tokens"
            )));
        }
    }
    let batch_tokens = corpus.manifest().batch_tokens();
    let opts = ScanOptions {
        emit_positions: false,
        ..*opts
    };
    let mut running = CountTable::new();
    let mut done = 0usize;
    let mut out = Vec::with_capacity(schedule.cutoffs().len());
    for &cutoff in schedule.cutoffs() {
        let upto = ((cutoff / batch_tokens) as usize).min(corpus.n_batches());
        if upto > done {
            let segment = scan_range(m, corpus, done..upto, &opts);
            running.merge_from(&segment.counts);
            done = upto;
        }
        out.push((cutoff, running.clone()));
    }
    Ok(out)
}
