// SPDX-License-Identifier: MIT OR Apache-2.0

//! Searched term set: each term owns one or more token-ID patterns
//! (surface variants such as a leading-space or capitalized tokenization).

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TermId = u32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermEntry {
    pub term_id: TermId,
    pub surface: String,
    pub patterns: Vec<Vec<u32>>,
}

/// Validated term dictionary. Entries are stored in `term_id` order and ids
/// are dense from zero.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TermDictionary {
    entries: Vec<TermEntry>,
}

impl TermDictionary {
    pub fn new(mut entries: Vec<TermEntry>) -> Result<Self> {
        entries.sort_by_key(|e| e.term_id);
        for (expected, entry) in entries.iter().enumerate() {
            if entry.term_id as usize != expected {
                return Err(Error::Dictionary(format!(
                    "term ids must be unique and dense from 0; expected {expected}, found {}",
                    entry.term_id
                )));
            }
            if entry.patterns.is_empty() {
                return Err(Error::Dictionary(format!(
                    "term {} ({:?}) has no patterns",
                    entry.term_id, entry.surface
                )));
            }
            if entry.patterns.iter().any(Vec::is_empty) {
                return Err(Error::Dictionary(format!(
                    "term {} ({:?}) has an empty pattern",
                    entry.term_id, entry.surface
                )));
            }
        }

        let mut owner: HashMap<&[u32], TermId> = HashMap::new();
        for entry in &entries {
            for pattern in &entry.patterns {
                if let Some(&first) = owner.get(pattern.as_slice()) {
                    if first == entry.term_id {
                        return Err(Error::Dictionary(format!(
                            "term {} lists pattern {:?} twice",
                            entry.term_id, pattern
                        )));
                    }
                    return Err(Error::DuplicatePattern {
                        pattern: pattern.clone(),
                        first,
                        second: entry.term_id,
                    });
                }
                owner.insert(pattern, entry.term_id);
            }
        }
        Ok(TermDictionary { entries })
    }

    /// Builds a dictionary from bare pattern lists, numbering terms in order.
    pub fn from_patterns(patterns: Vec<Vec<Vec<u32>>>) -> Result<Self> {
        let entries = patterns
            .into_iter()
            .enumerate()
            .map(|(i, patterns)| TermEntry {
                term_id: i as TermId,
                surface: format!("term{i}"),
                patterns,
            })
            .collect();
        Self::new(entries)
    }

    pub fn entries(&self) -> &[TermEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn pattern_count(&self) -> usize {
        self.entries.iter().map(|e| e.patterns.len()).sum()
    }

    pub fn get(&self, term_id: TermId) -> Option<&TermEntry> {
        self.entries.get(term_id as usize)
    }

    pub fn find_surface(&self, surface: &str) -> Option<TermId> {
        self.entries
            .iter()
            .find(|e| e.surface == surface)
            .map(|e| e.term_id)
    }

    /// Reads the one-JSON-object-per-line dictionary format.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let entry: TermEntry = serde_json::from_str(line)
                .map_err(|e| Error::parse(format!("{}:{}", path.display(), lineno + 1), e))?;
            entries.push(entry);
        }
        Self::new(entries)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for entry in &self.entries {
            serde_json::to_writer(&mut out, entry).expect("term entry serializes");
            out.push(b'\n');
        }
        fs::File::create(path)
            .and_then(|mut f| f.write_all(&out))
            .map_err(|e| Error::io(path, e))
    }
}
