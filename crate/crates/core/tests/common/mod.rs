// SPDX-License-Identifier: MIT OR Apache-2.0

//! Brute-force oracles and random fixtures shared by the integration tests.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use freqlens::corpus::{CountTable, DocSpan, PairMode, TermDictionary, TermId, TokenCorpus};
use freqlens::lre::{argmax, RelationExample, RelationModel};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Counts by trying every (position, length) slice against a hash of all
/// patterns. Each slice is one window.
pub fn oracle_counts<'a>(windows: impl IntoIterator<Item = &'a [u32]>, dict: &TermDictionary, mode: PairMode) -> CountTable {
    let mut by_pattern: HashMap<&[u32], TermId> = HashMap::new();
    let mut max_len = 0;
    for e in dict.entries() {
        for p in &e.patterns {
            by_pattern.insert(p, e.term_id);
            max_len = max_len.max(p.len());
        }
    }
    let mut table = CountTable::new();
    for w in windows {
        table.tokens_scanned += w.len() as u64;
        let mut hits: BTreeMap<TermId, u64> = BTreeMap::new();
        for i in 0..w.len() {
            for l in 1..=max_len.min(w.len() - i) {
                if let Some(&t) = by_pattern.get(&w[i..i + l]) {
                    *hits.entry(t).or_default() += 1;
                }
            }
        }
        let hits: Vec<(TermId, u64)> = hits.into_iter().collect();
        for (i, &(a, na)) in hits.iter().enumerate() {
            table.add_occurrences(a, na);
            for &(b, nb) in &hits[i + 1..] {
                let n = match mode {
                    PairMode::Presence => 1,
                    PairMode::Product => na * nb,
                };
                table.add_pair(a, b, n);
            }
        }
    }
    table
}

pub fn oracle_rows(corpus: &TokenCorpus, dict: &TermDictionary, mode: PairMode, n_batches: usize) -> CountTable {
    let rows = corpus.tokens()[..n_batches * corpus.batch_size() * corpus.seq_len()].chunks(corpus.seq_len());
    oracle_counts(rows, dict, mode)
}

pub fn oracle_docs(corpus: &TokenCorpus, docs: &[DocSpan], dict: &TermDictionary, mode: PairMode) -> CountTable {
    let t = corpus.tokens();
    oracle_counts(docs.iter().map(|&(s, e)| &t[s as usize..e as usize]), dict, mode)
}

pub struct Fixture {
    pub dict: TermDictionary,
    /// Carries arbitrary document spans (gaps, mid-row boundaries).
    pub corpus: TokenCorpus,
    /// Whole rows per document, covering every token.
    pub aligned_docs: Vec<DocSpan>,
    pub cutoffs: Vec<u64>,
}

/// A random corpus of at most `max_tokens` tokens and a dictionary of at
/// most 200 patterns over a small alphabet, so matches are frequent.
pub fn random_fixture(seed: u64, max_tokens: usize) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alphabet = rng.random_range(4..40u32);
    let n_terms = rng.random_range(1..=100);
    let mut seen = std::collections::HashSet::new();
    let mut terms = Vec::new();
    let mut n_patterns = 0;
    for _ in 0..n_terms {
        let mut pats = Vec::new();
        for _ in 0..rng.random_range(1..=2) {
            let len = rng.random_range(1..=4);
            let p: Vec<u32> = (0..len).map(|_| rng.random_range(0..alphabet)).collect();
            if n_patterns < 200 && seen.insert(p.clone()) {
                pats.push(p);
                n_patterns += 1;
            }
        }
        if !pats.is_empty() {
            terms.push(pats);
        }
    }
    let dict = TermDictionary::from_patterns(terms).expect("valid dictionary");

    let seq_len = rng.random_range(1..=64u32);
    let batch_size = rng.random_range(1..=16u32);
    let per_batch = (seq_len * batch_size) as usize;
    let budget = rng.random_range(per_batch..=max_tokens.max(per_batch));
    let n_batches = (budget / per_batch).max(1);
    let rows: Vec<Vec<u32>> = (0..n_batches * batch_size as usize)
        .map(|_| (0..seq_len).map(|_| rng.random_range(0..alphabet)).collect())
        .collect();
    let total = (n_batches * per_batch) as u64;

    let mut docs = Vec::new();
    let mut pos = 0u64;
    while pos < total {
        if rng.random_bool(0.2) {
            pos += rng.random_range(1..=3);
        }
        let len = rng.random_range(1..=3 * seq_len as u64);
        let end = (pos + len).min(total);
        if pos < end {
            docs.push((pos, end));
        }
        pos = end;
    }
    let mut aligned = Vec::new();
    let n_rows = rows.len() as u64;
    let mut r = 0u64;
    while r < n_rows {
        let k = rng.random_range(1..=4).min(n_rows - r);
        aligned.push((r * seq_len as u64, (r + k) * seq_len as u64));
        r += k;
    }
    let mut cutoffs: Vec<u64> = (0..rng.random_range(1..=4)).map(|_| rng.random_range(1..=total)).collect();
    cutoffs.sort_unstable();
    cutoffs.dedup();

    let corpus = TokenCorpus::from_rows(&rows, batch_size, seq_len, "fixture")
        .expect("valid corpus")
        .with_doc_offsets(docs)
        .expect("valid docs");
    Fixture {
        dict,
        corpus,
        aligned_docs: aligned,
        cutoffs,
    }
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let u1: f64 = rng.random_range(f64::EPSILON..1.0);
            let u2: f64 = rng.random_range(0.0..1.0);
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos() * scale
        })
        .collect()
}

/// Examples whose object is the model's own answer at `probe`.
pub fn model_examples(model: &dyn RelationModel, n: usize, seed: u64, probe: usize) -> Vec<RelationExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let s = gaussian_vec(&mut rng, model.subject_dim(), 1.5);
            let ctx = (i % 5) as u32;
            let token = argmax(&model.decode(&model.forward(&DVector::from_vec(s.clone()), ctx, probe)));
            RelationExample {
                subject_id: i as u32,
                subject_vector: s,
                context_id: ctx,
                object_token: token,
                object_id: 10_000 + token as u32,
                subject_surface: format!("s{i}"),
                object_surface: format!("o{token}"),
            }
        })
        .collect()
}

/// Central-difference Jacobian with a fixed absolute step.
pub fn fd_jacobian(model: &dyn RelationModel, s: &DVector<f64>, ctx: u32, probe: usize, h: f64) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(model.object_dim(), s.len());
    for c in 0..s.len() {
        let mut p = s.clone();
        let mut m = s.clone();
        p[c] += h;
        m[c] -= h;
        let col = (model.forward(&p, ctx, probe) - model.forward(&m, ctx, probe)) / (2.0 * h);
        j.set_column(c, &col);
    }
    j
}

/// Mean Jacobian and mean first-order offset, accumulated example by example.
pub fn oracle_lre(model: &dyn RelationModel, examples: &[RelationExample], probe: usize) -> (DMatrix<f64>, DVector<f64>) {
    let n = examples.len() as f64;
    let mut w = DMatrix::zeros(model.object_dim(), model.subject_dim());
    let mut b = DVector::zeros(model.object_dim());
    for ex in examples {
        let s = DVector::from_vec(ex.subject_vector.clone());
        let j = fd_jacobian(model, &s, ex.context_id, probe, 1e-4);
        let f = model.forward(&s, ex.context_id, probe);
        b += (f - &j * &s) / n;
        w += j / n;
    }
    (w, b)
}

/// Exhaustive CART: every feature, every midpoint between distinct sorted
/// values, split kept when it strictly lowers the summed squared error.
pub fn cart_predict(x: &[Vec<f64>], y: &[f64], rows: &[usize], q: &[f64]) -> f64 {
    let mean = rows.iter().map(|&i| y[i]).sum::<f64>() / rows.len() as f64;
    let sse = |idx: &[usize]| {
        let m = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
        idx.iter().map(|&i| (y[i] - m).powi(2)).sum::<f64>()
    };
    let base = sse(rows);
    let mut best: Option<(f64, usize, f64)> = None;
    for f in 0..x[0].len() {
        let mut vals: Vec<f64> = rows.iter().map(|&i| x[i][f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let mut t = (w[0] + w[1]) / 2.0;
            if t >= w[1] {
                t = w[0];
            }
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][f] <= t);
            let cost = sse(&l) + sse(&r);
            if cost < base - 1e-9 * base.max(1.0) && best.is_none_or(|b| cost < b.0 - 1e-9 * base.max(1.0)) {
                best = Some((cost, f, t));
            }
        }
    }
    match best {
        None => mean,
        Some((_, f, t)) => {
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][f] <= t);
            if q[f] <= t {
                cart_predict(x, y, &l, q)
            } else {
                cart_predict(x, y, &r, q)
            }
        }
    }
}
