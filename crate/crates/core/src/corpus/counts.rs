// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::dictionary::TermId;
use super::matcher::MatchRecord;
use crate::error::{Error, Result};

pub const OCCURRENCES_FILE: &str = "occurrences.tsv";
pub const PAIRS_FILE: &str = "pairs.tsv";
pub const SUMMARY_FILE: &str = "summary.tsv";

/// Occurrence and co-occurrence counts. Pair keys are always `(a, b)` with
/// `a < b`; zero counts are never stored.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CountTable {
    pub occurrences: BTreeMap<TermId, u64>,
    pub pair_counts: BTreeMap<(TermId, TermId), u64>,
    pub tokens_scanned: u64,
}

impl CountTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn occurrence(&self, term: TermId) -> u64 {
        self.occurrences.get(&term).copied().unwrap_or(0)
    }

    /// Pair count for an unordered pair; same-term pairs are never recorded.
    pub fn pair(&self, a: TermId, b: TermId) -> u64 {
        if a == b {
            return 0;
        }
        self.pair_counts
            .get(&(a.min(b), a.max(b)))
            .copied()
            .unwrap_or(0)
    }

    pub fn add_occurrences(&mut self, term: TermId, n: u64) {
        if n > 0 {
            *self.occurrences.entry(term).or_default() += n;
        }
    }

    pub fn add_pair(&mut self, a: TermId, b: TermId, n: u64) {
        if a != b && n > 0 {
            *self.pair_counts.entry((a.min(b), a.max(b))).or_default() += n;
        }
    }

    pub fn is_empty(&self) -> bool {
        self.occurrences.is_empty() && self.pair_counts.is_empty()
    }

    /// Fieldwise sum, in place.
    pub fn merge_from(&mut self, other: &CountTable) {
        for (&t, &n) in &other.occurrences {
            self.add_occurrences(t, n);
        }
        if self.pair_counts.is_empty() {
            self.pair_counts = other.pair_counts.clone();
        } else if other.pair_counts.len() * 8 < self.pair_counts.len() {
            for (&(a, b), &n) in &other.pair_counts {
                self.add_pair(a, b, n);
            }
        } else {
            let mine = std::mem::take(&mut self.pair_counts);
            self.pair_counts = merge_sorted(mine.into_iter(), other.pair_counts.iter().map(|(&k, &n)| (k, n)));
        }
        self.tokens_scanned += other.tokens_scanned;
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut occ = String::from("term_id\tcount\n");
        for (t, n) in &self.occurrences {
            occ.push_str(&format!("{t}\t{n}\n"));
        }
        let mut pairs = String::from("term_a\tterm_b\tcount\n");
        for ((a, b), n) in &self.pair_counts {
            pairs.push_str(&format!("{a}\t{b}\t{n}\n"));
        }
        let summary = format!("key\tvalue\ntokens_scanned\t{}\n", self.tokens_scanned);
        for (name, body) in [(OCCURRENCES_FILE, occ), (PAIRS_FILE, pairs), (SUMMARY_FILE, summary)] {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let mut table = CountTable::new();
        for row in read_tsv(&dir.join(OCCURRENCES_FILE), 2)? {
            table.add_occurrences(row[0] as TermId, row[1]);
        }
        for row in read_tsv(&dir.join(PAIRS_FILE), 3)? {
            table.add_pair(row[0] as TermId, row[1] as TermId, row[2]);
        }
        let summary_path = dir.join(SUMMARY_FILE);
        if summary_path.exists() {
            let text = fs::read_to_string(&summary_path).map_err(|e| Error::io(&summary_path, e))?;
            for line in text.lines().skip(1) {
                if let Some(("tokens_scanned", v)) = line.split_once('\t') {
                    table.tokens_scanned = v
                        .trim()
                        .parse()
                        .map_err(|e| Error::parse(summary_path.display().to_string(), e))?;
                }
            }
        }
        Ok(table)
    }
}

/// Fieldwise sum of two tables. Associative and commutative, with the empty
/// table as identity.
/// Sums two key-sorted streams into a map in one linear pass.
fn merge_sorted<K: Ord + Copy>(
    a: impl Iterator<Item = (K, u64)>,
    b: impl Iterator<Item = (K, u64)>,
) -> BTreeMap<K, u64> {
    let mut out: Vec<(K, u64)> = Vec::new();
    let mut b = b.peekable();
    for (k, n) in a {
        while let Some(&(kb, nb)) = b.peek() {
            if kb >= k {
                break;
            }
            out.push((kb, nb));
            b.next();
        }
        match b.peek() {
            Some(&(kb, nb)) if kb == k => {
                out.push((k, n + nb));
                b.next();
            }
            _ => out.push((k, n)),
        }
    }
    out.extend(b);
    out.into_iter().collect()
}

pub fn merge_counts(a: &CountTable, b: &CountTable) -> CountTable {
    let mut out = a.clone();
    out.merge_from(b);
    out
}

/// Reads an integer TSV with a header line.
pub(crate) fn read_tsv(path: &Path, columns: usize) -> Result<Vec<Vec<u64>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let loc = || format!("{}:{}", path.display(), lineno + 1);
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != columns {
            return Err(Error::parse(loc(), format!("expected {columns} columns, found {}", fields.len())));
        }
        let row = fields
            .iter()
            .map(|f| f.trim().parse::<u64>().map_err(|e| Error::parse(loc(), e)))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Per-cutoff count tables as produced by checkpoint scanning.
pub fn write_checkpoints(path_dir: &Path, tables: &[(u64, CountTable)]) -> Result<()> {
    fs::create_dir_all(path_dir).map_err(|e| Error::io(path_dir, e))?;
    let mut occ = String::from("cutoff_tokens\tterm_id\tcount\n");
    let mut pairs = String::from("cutoff_tokens\tterm_a\tterm_b\tcount\n");
    for (cutoff, table) in tables {
        for (t, n) in &table.occurrences {
            occ.push_str(&format!("{cutoff}\t{t}\t{n}\n"));
        }
        for ((a, b), n) in &table.pair_counts {
            pairs.push_str(&format!("{cutoff}\t{a}\t{b}\t{n}\n"));
        }
    }
    let occ_path = path_dir.join("checkpoints.tsv");
    fs::write(&occ_path, occ).map_err(|e| Error::io(&occ_path, e))?;
    let pairs_path = path_dir.join("checkpoint_pairs.tsv");
    fs::write(&pairs_path, pairs).map_err(|e| Error::io(&pairs_path, e))?;
    Ok(())
}

pub fn read_checkpoints(path_dir: &Path, cutoffs: &[u64]) -> Result<Vec<(u64, CountTable)>> {
    let mut tables: BTreeMap<u64, CountTable> =
        cutoffs.iter().map(|&c| (c, CountTable::new())).collect();
    for row in read_tsv(&path_dir.join("checkpoints.tsv"), 3)? {
        tables.entry(row[0]).or_default().add_occurrences(row[1] as TermId, row[2]);
    }
    for row in read_tsv(&path_dir.join("checkpoint_pairs.tsv"), 4)? {
        tables
            .entry(row[0])
            .or_default()
            .add_pair(row[1] as TermId, row[2] as TermId, row[3]);
    }
    Ok(tables.into_iter().collect())
}

pub fn write_positions(path: &Path, records: &[MatchRecord]) -> Result<()> {
    let mut out = String::from("batch\trow\tposition\tterm_id\tpattern_index\n");
    for r in records {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            r.batch_index, r.row_index, r.position, r.term_id, r.pattern_index
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
