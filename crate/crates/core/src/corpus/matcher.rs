// SPDX-License-Identifier: MIT OR Apache-2.0

//! Multi-pattern automaton over a token-ID alphabet.
//!
//! Token vocabularies run to hundreds of thousands of symbols, so states keep
//! sparse transition lists (sorted by token, binary searched). The root is the
//! hot state on real text and gets a dense lookup table when the largest first
//! token is small enough.

use std::collections::VecDeque;

use super::dictionary::{TermDictionary, TermId};

const ROOT: u32 = 0;
const NONE: u32 = u32::MAX;
const DENSE_ROOT_LIMIT: u32 = 1 << 24;

/// Global index of a pattern across the whole dictionary.
pub type PatternId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MatchRecord {
    pub batch_index: u32,
    pub row_index: u32,
    /// Index of the pattern's first token within the row.
    pub position: u32,
    pub term_id: TermId,
    /// Index of the matched pattern within its term's pattern list.
    pub pattern_index: u32,
}

#[derive(Debug, Clone, Copy)]
struct PatternInfo {
    term_id: TermId,
    pattern_index: u32,
    len: u32,
}

/// Immutable compiled matcher; share it freely between scanning threads.
#[derive(Debug, Clone)]
pub struct Matcher {
    // Per-state slices into `keys`/`targets`.
    trans_start: Vec<u32>,
    trans_len: Vec<u32>,
    keys: Vec<u32>,
    targets: Vec<u32>,
    fail: Vec<u32>,
    // Per-state slices into `outputs`, already closed under failure links.
    out_start: Vec<u32>,
    out_len: Vec<u32>,
    outputs: Vec<PatternId>,
    root_dense: Vec<u32>,
    patterns: Vec<PatternInfo>,
    term_count: usize,
}

impl Matcher {
    /// Compiles a validated dictionary. Dictionary validation already rejects
    /// empty patterns and cross-term duplicates.
    pub fn compile(dict: &TermDictionary) -> Matcher {
        // Trie construction with nested sparse maps, flattened afterwards.
        let mut children: Vec<Vec<(u32, u32)>> = vec![Vec::new()];
        let mut own_output: Vec<Vec<PatternId>> = vec![Vec::new()];
        let mut patterns = Vec::with_capacity(dict.pattern_count());

        for entry in dict.entries() {
            for (pattern_index, pattern) in entry.patterns.iter().enumerate() {
                let mut state = ROOT;
                for &tok in pattern {
                    let kids = &children[state as usize];
                    state = match kids.binary_search_by_key(&tok, |&(k, _)| k) {
                        Ok(i) => kids[i].1,
                        Err(i) => {
                            let next = children.len() as u32;
                            children[state as usize].insert(i, (tok, next));
                            children.push(Vec::new());
                            own_output.push(Vec::new());
                            next
                        }
                    };
                }
                own_output[state as usize].push(patterns.len() as PatternId);
                patterns.push(PatternInfo {
                    term_id: entry.term_id,
                    pattern_index: pattern_index as u32,
                    len: pattern.len() as u32,
                });
            }
        }

        let n_states = children.len();
        let mut fail = vec![ROOT; n_states];
        let mut merged: Vec<Vec<PatternId>> = own_output;
        let mut queue = VecDeque::new();
        for &(_, child) in &children[ROOT as usize] {
            queue.push_back(child);
        }
        // Breadth-first so every failure target is finalized before use.
        while let Some(state) = queue.pop_front() {
            let fail_out = merged[fail[state as usize] as usize].clone();
            merged[state as usize].extend(fail_out);
            for &(tok, child) in &children[state as usize] {
                let mut f = fail[state as usize];
                let target = loop {
                    if let Some(next) = lookup_nested(&children, f, tok) {
                        break next;
                    }
                    if f == ROOT {
                        break ROOT;
                    }
                    f = fail[f as usize];
                };
                fail[child as usize] = if target == child { ROOT } else { target };
                queue.push_back(child);
            }
        }

        let mut trans_start = Vec::with_capacity(n_states);
        let mut trans_len = Vec::with_capacity(n_states);
        let mut keys = Vec::new();
        let mut targets = Vec::new();
        for kids in &children {
            trans_start.push(keys.len() as u32);
            trans_len.push(kids.len() as u32);
            for &(k, t) in kids {
                keys.push(k);
                targets.push(t);
            }
        }
        let mut out_start = Vec::with_capacity(n_states);
        let mut out_len = Vec::with_capacity(n_states);
        let mut outputs = Vec::new();
        for out in &mut merged {
            out.sort_unstable();
            out_start.push(outputs.len() as u32);
            out_len.push(out.len() as u32);
            outputs.extend_from_slice(out);
        }

        let root_kids = &children[ROOT as usize];
        let root_dense = match root_kids.last() {
            Some(&(max_tok, _)) if max_tok < DENSE_ROOT_LIMIT => {
                let mut table = vec![NONE; max_tok as usize + 1];
                for &(k, t) in root_kids {
                    table[k as usize] = t;
                }
                table
            }
            _ => Vec::new(),
        };

        Matcher {
            trans_start,
            trans_len,
            keys,
            targets,
            fail,
            out_start,
            out_len,
            outputs,
            root_dense,
            patterns,
            term_count: dict.len(),
        }
    }

    pub fn term_count(&self) -> usize {
        self.term_count
    }

    pub fn pattern_count(&self) -> usize {
        self.patterns.len()
    }

    pub fn state_count(&self) -> usize {
        self.fail.len()
    }

    pub fn pattern_term(&self, pattern: PatternId) -> TermId {
        self.patterns[pattern as usize].term_id
    }

    pub fn pattern_len(&self, pattern: PatternId) -> usize {
        self.patterns[pattern as usize].len as usize
    }

    #[inline]
    fn step(&self, state: u32, tok: u32) -> Option<u32> {
        if state == ROOT && !self.root_dense.is_empty() {
            return match self.root_dense.get(tok as usize) {
                Some(&t) if t != NONE => Some(t),
                _ => None,
            };
        }
        let start = self.trans_start[state as usize] as usize;
        let len = self.trans_len[state as usize] as usize;
        let keys = &self.keys[start..start + len];
        let idx = if len <= 8 {
            keys.iter().position(|&k| k == tok)?
        } else {
            keys.binary_search(&tok).ok()?
        };
        Some(self.targets[start + idx])
    }

    /// Calls `on_match(pattern, end)` for every occurrence of every pattern,
    /// overlapping ones included, where `end` is the index of the last token.
    #[inline]
    pub fn for_each_match<F: FnMut(PatternId, usize)>(&self, tokens: &[u32], mut on_match: F) {
        let mut state = ROOT;
        for (end, &tok) in tokens.iter().enumerate() {
            loop {
                if let Some(next) = self.step(state, tok) {
                    state = next;
                    break;
                }
                if state == ROOT {
                    break;
                }
                state = self.fail[state as usize];
            }
            let n = self.out_len[state as usize];
            if n > 0 {
                let start = self.out_start[state as usize] as usize;
                for &p in &self.outputs[start..start + n as usize] {
                    on_match(p, end);
                }
            }
        }
    }

    /// All `(pattern, end)` matches in order of end position.
    pub fn find_all(&self, tokens: &[u32]) -> Vec<(PatternId, usize)> {
        let mut found = Vec::new();
        self.for_each_match(tokens, |p, end| found.push((p, end)));
        found
    }

    /// Matches mapped to terms, sorted by position, then term, then pattern.
    pub fn scan_sequence(&self, tokens: &[u32], batch_index: u32, row_index: u32) -> Vec<MatchRecord> {
        let mut records = Vec::new();
        self.for_each_match(tokens, |p, end| {
            let info = self.patterns[p as usize];
            records.push(MatchRecord {
                batch_index,
                row_index,
                position: (end + 1 - info.len as usize) as u32,
                term_id: info.term_id,
                pattern_index: info.pattern_index,
            });
        });
        records.sort_unstable_by_key(|r| (r.position, r.term_id, r.pattern_index));
        records
    }
}

fn lookup_nested(children: &[Vec<(u32, u32)>], state: u32, tok: u32) -> Option<u32> {
    let kids = &children[state as usize];
    kids.binary_search_by_key(&tok, |&(k, _)| k)
        .ok()
        .map(|i| kids[i].1)
}
