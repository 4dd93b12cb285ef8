// SPDX-License-Identifier: MIT OR Apache-2.0

//! On-disk tokenized corpus: `manifest.toml`, a raw `tokens.bin` array laid out
//! row-major as `[batch][row][position]`, and an optional `docs.idx` listing
//! half-open document spans over the flattened token stream.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const TOKENS_FILE: &str = "tokens.bin";
pub const DOCS_FILE: &str = "docs.idx";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Endianness {
    Little,
    Big,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub token_width: u32,
    pub endianness: Endianness,
    pub batch_size: u32,
    pub seq_len: u32,
    pub n_batches: u32,
    pub total_tokens: u64,
    pub tokenizer_id: String,
}

impl Manifest {
    pub fn new(batch_size: u32, seq_len: u32, n_batches: u32, tokenizer_id: &str) -> Self {
        Manifest {
            token_width: 4,
            endianness: Endianness::Little,
            batch_size,
            seq_len,
            n_batches,
            total_tokens: batch_size as u64 * seq_len as u64 * n_batches as u64,
            tokenizer_id: tokenizer_id.to_string(),
        }
    }

    pub fn batch_tokens(&self) -> u64 {
        self.batch_size as u64 * self.seq_len as u64
    }

    fn check(&self) -> Result<()> {
        if self.token_width != 4 {
            return Err(Error::Integrity(format!(
                "token_width {} unsupported, only 4-byte tokens are read",
                self.token_width
            )));
        }
        if self.batch_size == 0 || self.seq_len == 0 {
            return Err(Error::Integrity("batch_size and seq_len must be positive".into()));
        }
        let expected = self.batch_tokens() * self.n_batches as u64;
        if expected != self.total_tokens {
            return Err(Error::Integrity(format!(
                "total_tokens {} != n_batches {} x batch_size {} x seq_len {}",
                self.total_tokens, self.n_batches, self.batch_size, self.seq_len
            )));
        }
        Ok(())
    }
}

/// Half-open `[start, end)` span of flattened token offsets.
pub type DocSpan = (u64, u64);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenCorpus {
    manifest: Manifest,
    tokens: Vec<u32>,
    doc_offsets: Option<Vec<DocSpan>>,
}

impl TokenCorpus {
    pub fn new(manifest: Manifest, tokens: Vec<u32>, doc_offsets: Option<Vec<DocSpan>>) -> Result<Self> {
        manifest.check()?;
        if tokens.len() as u64 != manifest.total_tokens {
            return Err(Error::Integrity(format!(
                "token array holds {} tokens, manifest declares {}",
                tokens.len(),
                manifest.total_tokens
            )));
        }
        if let Some(docs) = &doc_offsets {
            check_docs(docs, manifest.total_tokens)?;
        }
        Ok(TokenCorpus {
            manifest,
            tokens,
            doc_offsets,
        })
    }

    /// Lays out `rows` (each `seq_len` long) into batches of `batch_size`.
    pub fn from_rows(rows: &[Vec<u32>], batch_size: u32, seq_len: u32, tokenizer_id: &str) -> Result<Self> {
        if !rows.len().is_multiple_of(batch_size as usize) {
            return Err(Error::Integrity(format!(
                "{} rows do not fill whole batches of {batch_size}",
                rows.len()
            )));
        }
        let n_batches = (rows.len() / batch_size as usize) as u32;
        let mut tokens = Vec::with_capacity(rows.len() * seq_len as usize);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != seq_len as usize {
                return Err(Error::Integrity(format!(
                    "row {i} has {} tokens, expected {seq_len}",
                    row.len()
                )));
            }
            tokens.extend_from_slice(row);
        }
        Self::new(Manifest::new(batch_size, seq_len, n_batches, tokenizer_id), tokens, None)
    }

    pub fn with_doc_offsets(mut self, docs: Vec<DocSpan>) -> Result<Self> {
        check_docs(&docs, self.manifest.total_tokens)?;
        self.doc_offsets = Some(docs);
        Ok(self)
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }

    pub fn doc_offsets(&self) -> Option<&[DocSpan]> {
        self.doc_offsets.as_deref()
    }

    pub fn seq_len(&self) -> usize {
        self.manifest.seq_len as usize
    }

    pub fn batch_size(&self) -> usize {
        self.manifest.batch_size as usize
    }

    pub fn n_batches(&self) -> usize {
        self.manifest.n_batches as usize
    }

    pub fn n_rows(&self) -> usize {
        self.n_batches() * self.batch_size()
    }

    pub fn total_tokens(&self) -> u64 {
        self.manifest.total_tokens
    }

    pub fn batch(&self, batch: usize) -> &[u32] {
        let width = self.batch_size() * self.seq_len();
        &self.tokens[batch * width..(batch + 1) * width]
    }

    pub fn row(&self, batch: usize, row: usize) -> &[u32] {
        let start = (batch * self.batch_size() + row) * self.seq_len();
        &self.tokens[start..start + self.seq_len()]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, u32> {
        self.tokens.chunks_exact(self.seq_len())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: Manifest =
            toml::from_str(&text).map_err(|e| Error::parse(manifest_path.display().to_string(), e))?;
        manifest.check()?;

        let tokens_path = dir.join(TOKENS_FILE);
        let bytes = fs::read(&tokens_path).map_err(|e| Error::io(&tokens_path, e))?;
        let expected = manifest.total_tokens * manifest.token_width as u64;
        if bytes.len() as u64 != expected {
            let kind = if (bytes.len() as u64) < expected { "truncated" } else { "oversized" };
            return Err(Error::Integrity(format!(
                "{} is {kind}: {} bytes present, manifest requires {expected} (bytes {}..{} {})",
                tokens_path.display(),
                bytes.len(),
                bytes.len().min(expected as usize),
                bytes.len().max(expected as usize),
                if kind == "truncated" { "missing" } else { "unexpected" },
            )));
        }
        let tokens: Vec<u32> = match manifest.endianness {
            Endianness::Little => bytes
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
            Endianness::Big => bytes
                .chunks_exact(4)
                .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        };

        let docs_path = dir.join(DOCS_FILE);
        let docs = if docs_path.exists() {
            Some(read_docs(&docs_path)?)
        } else {
            None
        };
        Self::new(manifest, tokens, docs)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest_path = dir.join(MANIFEST_FILE);
        let text = toml::to_string(&self.manifest).expect("manifest serializes");
        fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;

        let mut bytes = Vec::with_capacity(self.tokens.len() * 4);
        for &t in &self.tokens {
            match self.manifest.endianness {
                Endianness::Little => bytes.extend_from_slice(&t.to_le_bytes()),
                Endianness::Big => bytes.extend_from_slice(&t.to_be_bytes()),
            }
        }
        let tokens_path = dir.join(TOKENS_FILE);
        fs::write(&tokens_path, bytes).map_err(|e| Error::io(&tokens_path, e))?;

        let docs_path = dir.join(DOCS_FILE);
        if let Some(docs) = &self.doc_offsets {
            let mut text = String::new();
            for (s, e) in docs {
                text.push_str(&format!("{s}\t{e}\n"));
            }
            fs::write(&docs_path, text).map_err(|e| Error::io(&docs_path, e))?;
        } else if docs_path.exists() {
            fs::remove_file(&docs_path).map_err(|e| Error::io(&docs_path, e))?;
        }
        Ok(())
    }
}

fn read_docs(path: &Path) -> Result<Vec<DocSpan>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut docs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let loc = || format!("{}:{}", path.display(), lineno + 1);
        let mut parts = line.split('\t');
        let mut next = || -> Result<u64> {
            parts
                .next()
                .ok_or_else(|| Error::parse(loc(), "expected `start<TAB>end`"))?
                .trim()
                .parse()
                .map_err(|e| Error::parse(loc(), e))
        };
        let start = next()?;
        let end = next()?;
        docs.push((start, end));
    }
    Ok(docs)
}

fn check_docs(docs: &[DocSpan], total: u64) -> Result<()> {
    let mut prev_end = 0;
    for (i, &(start, end)) in docs.iter().enumerate() {
        if start >= end || end > total {
            return Err(Error::Integrity(format!(
                "document {i} span [{start}, {end}) is empty or exceeds {total} tokens"
            )));
        }
        if start < prev_end {
            return Err(Error::Integrity(format!(
                "document {i} starts at {start}, before the previous document ends at {prev_end}"
            )));
        }
        prev_end = end;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> TokenCorpus {
        let rows: Vec<Vec<u32>> = (0..4).map(|r| vec![r, r + 10, r + 20]).collect();
        TokenCorpus::from_rows(&rows, 2, 3, "toy").unwrap()
    }

    #[test]
    fn layout_is_row_major() {
        let c = corpus();
        assert_eq!(c.n_batches(), 2);
        assert_eq!(c.row(1, 0), &[2, 12, 22]);
        assert_eq!(c.batch(0), &[0, 10, 20, 1, 11, 21]);
    }

    #[test]
    fn disk_roundtrip_with_docs() {
        let dir = tempfile::tempdir().unwrap();
        let c = corpus().with_doc_offsets(vec![(0, 4), (4, 12)]).unwrap();
        c.save(dir.path()).unwrap();
        assert_eq!(TokenCorpus::load(dir.path()).unwrap(), c);
    }

    #[test]
    fn truncated_tokens_report_byte_offsets() {
        let dir = tempfile::tempdir().unwrap();
        corpus().save(dir.path()).unwrap();
        let path = dir.path().join(TOKENS_FILE);
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..30]).unwrap();
        let err = TokenCorpus::load(dir.path()).unwrap_err().to_string();
        assert!(err.contains("truncated"), "{err}");
        assert!(err.contains("30..48"), "{err}");
    }

    #[test]
    fn overlapping_docs_rejected() {
        let err = corpus().with_doc_offsets(vec![(0, 5), (4, 8)]).unwrap_err();
        assert!(matches!(err, Error::Integrity(_)));
        let err = corpus().with_doc_offsets(vec![(0, 13)]).unwrap_err();
        assert!(matches!(err, Error::Integrity(_)));
    }

    #[test]
    fn inconsistent_manifest_rejected() {
        let mut m = Manifest::new(2, 3, 2, "toy");
        m.total_tokens = 11;
        assert!(TokenCorpus::new(m, vec![0; 11], None).is_err());
    }
}
