// SPDX-License-Identifier: MIT OR Apache-2.0

//! Planted-frequency corpus generator.
//!
//! Every planted row carries either one co-occurring pair or several copies
//! of a single term, separated by filler. Filler never uses a token that
//! appears in any pattern, and no pattern may occur inside another, so the
//! returned ground truth is exactly what a presence-mode scan reports.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::counts::CountTable;
use super::dictionary::{TermDictionary, TermId};
use super::tokens::TokenCorpus;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusShape {
    pub batch_size: u32,
    pub seq_len: u32,
    pub n_batches: u32,
}

impl CorpusShape {
    pub fn rows(&self) -> u64 {
        self.batch_size as u64 * self.n_batches as u64
    }
}

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub dictionary: TermDictionary,
    /// Rows in which both terms are planted together.
    pub pair_counts: Vec<(TermId, TermId, u64)>,
    /// Requested total occurrences per term; must be at least the number of
    /// pair rows the term takes part in. Unlisted terms get exactly that.
    pub term_counts: Vec<(TermId, u64)>,
    /// Filler is drawn from `0..filler_vocab` minus every pattern token.
    pub filler_vocab: u32,
    pub shape: CorpusShape,
    pub seed: u64,
    pub tokenizer_id: String,
}

/// File form of [`SynthSpec`]; the dictionary path is resolved relative to
/// the spec file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpecFile {
    pub dictionary: PathBuf,
    #[serde(default)]
    pub pairs: Vec<(TermId, TermId, u64)>,
    #[serde(default)]
    pub terms: Vec<(TermId, u64)>,
    pub filler_vocab: u32,
    pub shape: CorpusShape,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tokenizer")]
    pub tokenizer_id: String,
}

fn default_tokenizer() -> String {
    "synthetic".to_string()
}

impl SynthSpecFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))
    }

    pub fn resolve(self, base: &Path) -> Result<SynthSpec> {
        let dictionary = TermDictionary::load(&base.join(&self.dictionary))?;
        Ok(SynthSpec {
            dictionary,
            pair_counts: self.pairs,
            term_counts: self.terms,
            filler_vocab: self.filler_vocab,
            shape: self.shape,
            seed: self.seed,
            tokenizer_id: self.tokenizer_id,
        })
    }
}

enum Plan {
    Pair(TermId, TermId),
    Repeat(TermId, usize),
}

fn check_plantable(dict: &TermDictionary) -> Result<()> {
    let all: Vec<(&[u32], TermId)> = dict
        .entries()
        .iter()
        .flat_map(|e| e.patterns.iter().map(move |p| (p.as_slice(), e.term_id)))
        .collect();
    for &(outer, outer_term) in &all {
        for &(inner, inner_term) in &all {
            if std::ptr::eq(outer, inner) || inner.len() > outer.len() {
                continue;
            }
            if outer.windows(inner.len()).any(|w| w == inner) {
                return Err(Error::Infeasible(format!(
                    "pattern {inner:?} (term {inner_term}) occurs inside pattern {outer:?} \
                     (term {outer_term}); planted counts would be ambiguous"
                )));
            }
        }
    }
    Ok(())
}

/// Generates a corpus with the requested counts and returns it with the
/// presence-mode ground truth. Deterministic for a fixed seed.
pub fn generate_synthetic_corpus(spec: &SynthSpec) -> Result<(TokenCorpus, CountTable)> {
    let dict = &spec.dictionary;
    let seq_len = spec.shape.seq_len as usize;
    if spec.shape.batch_size == 0 || spec.shape.seq_len == 0 {
        return Err(Error::Infeasible("corpus shape must be positive".into()));
    }
    check_plantable(dict)?;

    let pattern_tokens: HashSet<u32> = dict
        .entries()
        .iter()
        .flat_map(|e| e.patterns.iter().flatten().copied())
        .collect();
    let filler: Vec<u32> = (0..spec.filler_vocab)
        .filter(|t| !pattern_tokens.contains(t))
        .collect();
    if filler.is_empty() {
        return Err(Error::Infeasible(format!(
            "no filler tokens left in 0..{} after excluding pattern tokens",
            spec.filler_vocab
        )));
    }

    let known = |t: TermId| -> Result<()> {
        if dict.get(t).is_none() {
            return Err(Error::Infeasible(format!("term {t} is not in the dictionary")));
        }
        Ok(())
    };
    let longest = |t: TermId| dict.get(t).map_or(0, |e| e.patterns.iter().map(Vec::len).max().unwrap_or(0));

    let mut plans = Vec::new();
    let mut implied: BTreeMap<TermId, u64> = BTreeMap::new();
    for &(a, b, n) in &spec.pair_counts {
        known(a)?;
        known(b)?;
        if a == b {
            return Err(Error::Infeasible(format!("pair ({a}, {a}) pairs a term with itself")));
        }
        if n > 0 && longest(a) + longest(b) + 1 > seq_len {
            return Err(Error::Infeasible(format!(
                "terms {a} and {b} do not fit together in a row of {seq_len} tokens"
            )));
        }
        *implied.entry(a).or_default() += n;
        *implied.entry(b).or_default() += n;
        plans.extend((0..n).map(|_| Plan::Pair(a, b)));
    }
    for &(t, want) in &spec.term_counts {
        known(t)?;
        let have = implied.get(&t).copied().unwrap_or(0);
        if want < have {
            return Err(Error::Infeasible(format!(
                "term {t} requested {want} occurrences but its pairs already plant {have}"
            )));
        }
        let mut extra = want - have;
        if extra == 0 {
            continue;
        }
        let len = longest(t);
        if len > seq_len {
            return Err(Error::Infeasible(format!("term {t} is longer than a row")));
        }
        let per_row = (seq_len + 1) / (len + 1);
        while extra > 0 {
            let k = extra.min(per_row as u64);
            plans.push(Plan::Repeat(t, k as usize));
            extra -= k;
        }
    }

    let capacity = spec.shape.rows();
    if plans.len() as u64 > capacity {
        return Err(Error::Infeasible(format!(
            "planting needs {} rows but the corpus shape holds {capacity} rows \
             ({} batches x {} rows)",
            plans.len(),
            spec.shape.n_batches,
            spec.shape.batch_size
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_rows = capacity as usize;
    let mut tokens: Vec<u32> = (0..n_rows * seq_len)
        .map(|_| filler[rng.random_range(0..filler.len())])
        .collect();
    let mut row_order: Vec<usize> = (0..n_rows).collect();
    row_order.shuffle(&mut rng);

    let mut truth = CountTable::new();
    let pick = |rng: &mut ChaCha8Rng, t: TermId| -> Vec<u32> {
        let pats = &dict.get(t).expect("checked").patterns;
        pats[rng.random_range(0..pats.len())].clone()
    };
    for (plan, &row) in plans.iter().zip(&row_order) {
        let dst = &mut tokens[row * seq_len..(row + 1) * seq_len];
        match *plan {
            Plan::Pair(a, b) => {
                let (first, second) = if rng.random_bool(0.5) { (a, b) } else { (b, a) };
                let p1 = pick(&mut rng, first);
                let p2 = pick(&mut rng, second);
                let slack = seq_len - p1.len() - p2.len() - 1;
                let s1 = rng.random_range(0..=slack);
                let s2 = rng.random_range(s1 + p1.len() + 1..=seq_len - p2.len());
                dst[s1..s1 + p1.len()].copy_from_slice(&p1);
                dst[s2..s2 + p2.len()].copy_from_slice(&p2);
                truth.add_occurrences(a, 1);
                truth.add_occurrences(b, 1);
                truth.add_pair(a, b, 1);
            }
            Plan::Repeat(t, k) => {
                let copies: Vec<Vec<u32>> = (0..k).map(|_| pick(&mut rng, t)).collect();
                let needed: usize = copies.iter().map(Vec::len).sum::<usize>() + k - 1;
                let mut at = rng.random_range(0..=seq_len - needed);
                for c in &copies {
                    dst[at..at + c.len()].copy_from_slice(c);
                    at += c.len() + 1;
                }
                truth.add_occurrences(t, k as u64);
            }
        }
    }
    truth.tokens_scanned = (n_rows * seq_len) as u64;

    let rows: Vec<Vec<u32>> = tokens.chunks_exact(seq_len).map(<[u32]>::to_vec).collect();
    let corpus = TokenCorpus::from_rows(&rows, spec.shape.batch_size, spec.shape.seq_len, &spec.tokenizer_id)?;
    Ok((corpus, truth))
}
