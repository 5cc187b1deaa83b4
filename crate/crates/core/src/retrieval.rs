//! Bit-packed binary codes, Hamming ranking and retrieval metrics.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{IcsError, Result};

/// A `K`-bit code packed into 64-bit words; bit set means `+1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryCode {
    k_bits: usize,
    words: Vec<u64>,
}

impl BinaryCode {
    /// Packs raw words, rejecting set bits beyond `k_bits`.
    pub fn from_words(k_bits: usize, words: Vec<u64>) -> Result<Self> {
        if words.len() != k_bits.div_ceil(64) {
            return Err(IcsError::Argument(format!(
                "{k_bits} bits need {} words, got {}",
                k_bits.div_ceil(64),
                words.len()
            )));
        }
        let rem = k_bits % 64;
        if rem != 0 {
            let last = *words.last().expect("nonempty");
            if last >> rem != 0 {
                return Err(IcsError::Argument("pad bits beyond K must be zero".into()));
            }
        }
        Ok(BinaryCode { k_bits, words })
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut words = vec![0u64; bits.len().div_ceil(64)];
        for (i, _) in bits.iter().enumerate().filter(|(_, &b)| b) {
            words[i / 64] |= 1 << (i % 64);
        }
        BinaryCode {
            k_bits: bits.len(),
            words,
        }
    }

    /// Packs a `±1` code; anything positive becomes a set bit.
    pub fn from_signs(signs: &[i8]) -> Self {
        let bits: Vec<bool> = signs.iter().map(|&s| s > 0).collect();
        Self::from_bits(&bits)
    }

    pub fn k_bits(&self) -> usize {
        self.k_bits
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn bit(&self, i: usize) -> bool {
        assert!(
            i < self.k_bits,
            "bit {i} out of range for {} bits",
            self.k_bits
        );
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn to_signs(&self) -> Vec<i8> {
        (0..self.k_bits)
            .map(|i| if self.bit(i) { 1 } else { -1 })
            .collect()
    }

    fn to_01_string(&self) -> String {
        (0..self.k_bits)
            .map(|i| if self.bit(i) { '1' } else { '0' })
            .collect()
    }
}

/// XOR-popcount distance between two codes of equal width.
pub fn hamming(a: &BinaryCode, b: &BinaryCode) -> Result<u32> {
    if a.k_bits != b.k_bits {
        return Err(IcsError::Argument(format!(
            "cannot compare {}-bit and {}-bit codes",
            a.k_bits, b.k_bits
        )));
    }
    Ok(hamming_unchecked(a, b))
}

#[inline]
fn hamming_unchecked(a: &BinaryCode, b: &BinaryCode) -> u32 {
    a.words
        .iter()
        .zip(&b.words)
        .map(|(x, y)| (x ^ y).count_ones())
        .sum()
}

/// A database ordered by distance to one query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedResult {
    pub query: usize,
    /// Database indices, nearest first; ties by ascending index.
    pub order: Vec<usize>,
    /// `distances[r]` belongs to `order[r]`.
    pub distances: Vec<u32>,
}

/// Sorts the database by `(distance, index)`.
pub fn rank_database(query: &BinaryCode, db: &[BinaryCode]) -> Result<RankedResult> {
    rank_database_for(0, query, db)
}

fn rank_database_for(
    query_idx: usize,
    query: &BinaryCode,
    db: &[BinaryCode],
) -> Result<RankedResult> {
    if db.is_empty() {
        return Err(IcsError::Argument("cannot rank an empty database".into()));
    }
    if let Some(bad) = db.iter().position(|c| c.k_bits != query.k_bits) {
        return Err(IcsError::Argument(format!(
            "database code {bad} has {} bits, query has {}",
            db[bad].k_bits, query.k_bits
        )));
    }
    // Distances are at most K, so a counting sort keeps ties in index order.
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); query.k_bits + 1];
    for (i, code) in db.iter().enumerate() {
        buckets[hamming_unchecked(query, code) as usize].push(i);
    }
    let mut order = Vec::with_capacity(db.len());
    let mut distances = Vec::with_capacity(db.len());
    for (dist, bucket) in buckets.into_iter().enumerate() {
        distances.extend(std::iter::repeat_n(dist as u32, bucket.len()));
        order.extend(bucket);
    }
    Ok(RankedResult {
        query: query_idx,
        order,
        distances,
    })
}

/// Two items are relevant to each other when they share a positive label.
pub fn relevant(query_labels: &[bool], db_labels: &[bool]) -> bool {
    query_labels.iter().zip(db_labels).any(|(&a, &b)| a && b)
}

/// Codes with their label vectors.
#[derive(Debug, Clone, Copy)]
pub struct RetrievalSet<'a> {
    pub codes: &'a [BinaryCode],
    pub labels: &'a [Vec<bool>],
}

impl RetrievalSet<'_> {
    fn check(&self, what: &str) -> Result<()> {
        if self.codes.len() != self.labels.len() {
            return Err(IcsError::Argument(format!(
                "{what}: {} codes but {} label vectors",
                self.codes.len(),
                self.labels.len()
            )));
        }
        Ok(())
    }
}

/// Metrics report written by the evaluator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalMetrics {
    pub map_at_k: f64,
    pub precision_at_k: f64,
    pub k: usize,
    pub n_queries: usize,
    pub n_database: usize,
}

struct QueryScore {
    ap: f64,
    precision: f64,
}

fn score_query(
    q: usize,
    queries: &RetrievalSet<'_>,
    database: &RetrievalSet<'_>,
    k: usize,
) -> Result<Option<QueryScore>> {
    let q_labels = &queries.labels[q];
    if q_labels.len() != database.labels.first().map_or(q_labels.len(), Vec::len) {
        return Err(IcsError::Argument(
            "query and database label widths differ".into(),
        ));
    }
    let total_relevant = database
        .labels
        .iter()
        .filter(|l| relevant(q_labels, l))
        .count();
    if total_relevant == 0 {
        return Ok(None);
    }
    let ranked = rank_database_for(q, &queries.codes[q], database.codes)?;
    let depth = k.min(ranked.order.len());
    let mut hits = 0usize;
    let mut ap_sum = 0.0;
    for (r, &idx) in ranked.order[..depth].iter().enumerate() {
        if relevant(q_labels, &database.labels[idx]) {
            hits += 1;
            ap_sum += hits as f64 / (r + 1) as f64;
        }
    }
    Ok(Some(QueryScore {
        ap: ap_sum / k.min(total_relevant) as f64,
        precision: hits as f64 / depth as f64,
    }))
}

/// mAP@k and precision@k over all queries that have at least one relevant
/// database item.
pub fn evaluate(
    queries: &RetrievalSet<'_>,
    database: &RetrievalSet<'_>,
    k: usize,
) -> Result<RetrievalMetrics> {
    if k == 0 {
        return Err(IcsError::Argument("k must be >= 1".into()));
    }
    if database.codes.is_empty() {
        return Err(IcsError::Argument("database is empty".into()));
    }
    queries.check("queries")?;
    database.check("database")?;

    let scores: Vec<Option<QueryScore>> = (0..queries.codes.len())
        .into_par_iter()
        .map(|q| score_query(q, queries, database, k))
        .collect::<Result<_>>()?;
    let scored: Vec<&QueryScore> = scores.iter().flatten().collect();
    if scored.is_empty() {
        return Err(IcsError::Evaluation(
            "no query has a relevant item in the database".into(),
        ));
    }
    // Summed in query order, so the result does not depend on the thread count.
    let n = scored.len() as f64;
    Ok(RetrievalMetrics {
        map_at_k: scored.iter().map(|s| s.ap).sum::<f64>() / n,
        precision_at_k: scored.iter().map(|s| s.precision).sum::<f64>() / n,
        k,
        n_queries: queries.codes.len(),
        n_database: database.codes.len(),
    })
}

pub fn map_at_k(queries: &RetrievalSet<'_>, database: &RetrievalSet<'_>, k: usize) -> Result<f64> {
    evaluate(queries, database, k).map(|m| m.map_at_k)
}

pub fn precision_at_k(
    queries: &RetrievalSet<'_>,
    database: &RetrievalSet<'_>,
    k: usize,
) -> Result<f64> {
    evaluate(queries, database, k).map(|m| m.precision_at_k)
}

/// Codes file: `N K` header, then one line of `K` characters in `{0,1}` per code.
pub fn codes_to_text(codes: &[BinaryCode], k_bits: usize) -> Result<String> {
    let mut out = format!("{} {}\n", codes.len(), k_bits);
    for (i, c) in codes.iter().enumerate() {
        if c.k_bits != k_bits {
            return Err(IcsError::Argument(format!(
                "code {i} has {} bits, expected {k_bits}",
                c.k_bits
            )));
        }
        out.push_str(&c.to_01_string());
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_codes(text: &str) -> Result<Vec<BinaryCode>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| IcsError::parse(1, "missing header"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let [n, k] = fields.as_slice() else {
        return Err(IcsError::parse(1, "expected `N K`"));
    };
    let n: usize = n
        .parse()
        .map_err(|_| IcsError::parse(1, format!("bad N `{n}`")))?;
    let k: usize = k
        .parse()
        .map_err(|_| IcsError::parse(1, format!("bad K `{k}`")))?;
    (0..n)
        .map(|i| {
            let line_no = i + 2;
            let line = lines
                .next()
                .ok_or_else(|| IcsError::parse(line_no, "missing code row"))?;
            let bits = line
                .chars()
                .map(|ch| match ch {
                    '0' => Ok(false),
                    '1' => Ok(true),
                    other => Err(IcsError::parse(line_no, format!("bad character `{other}`"))),
                })
                .collect::<Result<Vec<bool>>>()?;
            if bits.len() != k {
                return Err(IcsError::parse(
                    line_no,
                    format!("expected {k} bits, found {}", bits.len()),
                ));
            }
            Ok(BinaryCode::from_bits(&bits))
        })
        .collect()
}

pub fn save_codes(path: impl AsRef<Path>, codes: &[BinaryCode], k_bits: usize) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, codes_to_text(codes, k_bits)?).map_err(|e| IcsError::io(path, e))
}

pub fn load_codes(path: impl AsRef<Path>) -> Result<Vec<BinaryCode>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| IcsError::io(path, e))?;
    parse_codes(&text)
}
