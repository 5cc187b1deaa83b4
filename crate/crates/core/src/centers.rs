//! Hadamard matrices and hash-center generation.
//!
//! Centers are `±1` codes stored as `i8`. When the code length is a power of
//! two the centers are rows of a Sylvester–Hadamard matrix (or of `[H; -H]`
//! when there are more labels than bits), which puts every pair of distinct
//! centers exactly `K/2` bits apart. Otherwise each center is a random
//! balanced code.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{IcsError, Result};

/// Largest supported Sylvester exponent (order 65536).
pub const MAX_HADAMARD_EXP: u32 = 16;

/// Resampling budget per Bernoulli center before giving up.
pub const MAX_BERNOULLI_RESAMPLES: usize = 1000;

/// A square `±1` matrix with pairwise orthogonal rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HadamardMatrix {
    order: usize,
    entries: Vec<i8>,
}

impl HadamardMatrix {
    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> i8 {
        self.entries[row * self.order + col]
    }

    pub fn row(&self, row: usize) -> &[i8] {
        &self.entries[row * self.order..(row + 1) * self.order]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[i8]> {
        self.entries.chunks_exact(self.order)
    }
}

/// Builds `H_{2^k}` by the recursion `H_{2n} = [[H_n, H_n], [H_n, -H_n]]`,
/// i.e. `H_2 ⊗ H_n`, starting from `H_1 = [[1]]`.
pub fn sylvester_hadamard(k_exp: u32) -> Result<HadamardMatrix> {
    if k_exp > MAX_HADAMARD_EXP {
        return Err(IcsError::Capacity(format!(
            "Hadamard exponent {k_exp} exceeds the limit {MAX_HADAMARD_EXP}"
        )));
    }
    let mut order = 1usize;
    let mut entries = vec![1i8];
    for _ in 0..k_exp {
        let next = order * 2;
        let mut grown = vec![0i8; next * next];
        for r in 0..order {
            for c in 0..order {
                let v = entries[r * order + c];
                grown[r * next + c] = v;
                grown[r * next + c + order] = v;
                grown[(r + order) * next + c] = v;
                grown[(r + order) * next + c + order] = -v;
            }
        }
        order = next;
        entries = grown;
    }
    Ok(HadamardMatrix { order, entries })
}

/// How a [`HashCenterSet`] was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CenterStrategy {
    /// Distinct rows of `H_K`.
    HadamardRows,
    /// Distinct rows of the stacked matrix `[H_K; -H_K]`.
    StackedHadamard,
    /// Independent balanced random codes.
    Bernoulli,
}

impl CenterStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            CenterStrategy::HadamardRows => "hadamard-rows",
            CenterStrategy::StackedHadamard => "stacked-hadamard",
            CenterStrategy::Bernoulli => "bernoulli",
        }
    }

    /// The strategy `generate_centers` uses for a given shape.
    pub fn select(k_bits: usize, m_labels: usize) -> Self {
        if k_bits.is_power_of_two() && m_labels <= k_bits {
            CenterStrategy::HadamardRows
        } else if k_bits.is_power_of_two() && m_labels <= 2 * k_bits {
            CenterStrategy::StackedHadamard
        } else {
            CenterStrategy::Bernoulli
        }
    }
}

impl fmt::Display for CenterStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CenterStrategy {
    type Err = IcsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hadamard-rows" => Ok(CenterStrategy::HadamardRows),
            "stacked-hadamard" => Ok(CenterStrategy::StackedHadamard),
            "bernoulli" => Ok(CenterStrategy::Bernoulli),
            other => Err(IcsError::Argument(format!(
                "unknown center strategy `{other}`"
            ))),
        }
    }
}

/// `M` hash centers of `K` bits each, one per class label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashCenterSet {
    k_bits: usize,
    strategy: CenterStrategy,
    seed: u64,
    centers: Vec<Vec<i8>>,
}

impl HashCenterSet {
    /// Wraps explicit rows. Rows must all have length `k_bits` and contain
    /// only `±1`; distinctness is not checked here so that invalid sets can be
    /// built for validation.
    pub fn from_rows(
        k_bits: usize,
        strategy: CenterStrategy,
        seed: u64,
        centers: Vec<Vec<i8>>,
    ) -> Result<Self> {
        if k_bits == 0 {
            return Err(IcsError::Argument("centers need at least one bit".into()));
        }
        for (i, row) in centers.iter().enumerate() {
            if row.len() != k_bits {
                return Err(IcsError::Argument(format!(
                    "center {i} has {} bits, expected {k_bits}",
                    row.len()
                )));
            }
            if row.iter().any(|&v| v != 1 && v != -1) {
                return Err(IcsError::Argument(format!("center {i} has a non ±1 entry")));
            }
        }
        Ok(HashCenterSet {
            k_bits,
            strategy,
            seed,
            centers,
        })
    }

    pub fn k_bits(&self) -> usize {
        self.k_bits
    }

    pub fn m_labels(&self) -> usize {
        self.centers.len()
    }

    pub fn strategy(&self) -> CenterStrategy {
        self.strategy
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn center(&self, label: usize) -> &[i8] {
        &self.centers[label]
    }

    pub fn centers(&self) -> &[Vec<i8>] {
        &self.centers
    }

    /// Center `label` mapped to `{0, 1}` by `v ↦ (v + 1) / 2`.
    pub fn center01(&self, label: usize) -> Vec<u8> {
        self.centers[label]
            .iter()
            .map(|&v| u8::from(v > 0))
            .collect()
    }

    /// Writes the text format: a `K M strategy seed` header followed by one
    /// row of `K` space-separated `±1` values per center.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "{} {} {} {}",
            self.k_bits,
            self.m_labels(),
            self.strategy,
            self.seed
        )?;
        for row in &self.centers {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| IcsError::parse(1, "missing header"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(IcsError::parse(1, "expected `K M strategy seed`"));
        }
        let k_bits: usize = fields[0]
            .parse()
            .map_err(|_| IcsError::parse(1, format!("bad K `{}`", fields[0])))?;
        let m_labels: usize = fields[1]
            .parse()
            .map_err(|_| IcsError::parse(1, format!("bad M `{}`", fields[1])))?;
        let strategy: CenterStrategy = fields[2]
            .parse()
            .map_err(|e: IcsError| IcsError::parse(1, e.to_string()))?;
        let seed: u64 = fields[3]
            .parse()
            .map_err(|_| IcsError::parse(1, format!("bad seed `{}`", fields[3])))?;

        let mut centers = Vec::with_capacity(m_labels);
        for i in 0..m_labels {
            let line_no = i + 2;
            let line = lines
                .next()
                .ok_or_else(|| IcsError::parse(line_no, "missing center row"))?;
            let row = line
                .split_whitespace()
                .map(|tok| match tok {
                    "1" => Ok(1i8),
                    "-1" => Ok(-1i8),
                    other => Err(IcsError::parse(line_no, format!("bad entry `{other}`"))),
                })
                .collect::<Result<Vec<i8>>>()?;
            if row.len() != k_bits {
                return Err(IcsError::parse(
                    line_no,
                    format!("expected {k_bits} entries, found {}", row.len()),
                ));
            }
            centers.push(row);
        }
        if let Some((extra, _)) = lines.enumerate().find(|(_, l)| !l.trim().is_empty()) {
            return Err(IcsError::parse(m_labels + 2 + extra, "trailing content"));
        }
        HashCenterSet::from_rows(k_bits, strategy, seed, centers)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| IcsError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| IcsError::io(path, e))?;
        Self::parse(&text)
    }
}

/// Samples `m_labels` centers of `k_bits` bits, deterministically in `seed`.
pub fn generate_centers(k_bits: usize, m_labels: usize, seed: u64) -> Result<HashCenterSet> {
    if k_bits < 2 {
        return Err(IcsError::Argument(format!(
            "need at least 2 bits, got {k_bits}"
        )));
    }
    if m_labels < 1 {
        return Err(IcsError::Argument("need at least one label".into()));
    }
    let too_many = u32::try_from(k_bits)
        .ok()
        .and_then(|k| 1usize.checked_shl(k))
        .is_some_and(|codes| m_labels > codes);
    if too_many {
        return Err(IcsError::Capacity(format!(
            "{m_labels} distinct centers do not exist in {k_bits} bits"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let strategy = CenterStrategy::select(k_bits, m_labels);
    let centers = match strategy {
        CenterStrategy::HadamardRows | CenterStrategy::StackedHadamard => {
            let h = sylvester_hadamard(k_bits.trailing_zeros())?;
            let stacked = strategy == CenterStrategy::StackedHadamard;
            let n_rows = if stacked { 2 * k_bits } else { k_bits };
            let mut idx: Vec<usize> = (0..n_rows).collect();
            idx.shuffle(&mut rng);
            idx.truncate(m_labels);
            idx.into_iter()
                .map(|r| {
                    if r < k_bits {
                        h.row(r).to_vec()
                    } else {
                        h.row(r - k_bits).iter().map(|&v| -v).collect()
                    }
                })
                .collect()
        }
        CenterStrategy::Bernoulli => bernoulli_centers(k_bits, m_labels, &mut rng)?,
    };
    HashCenterSet::from_rows(k_bits, strategy, seed, centers)
}

fn bernoulli_centers<R: Rng>(k_bits: usize, m_labels: usize, rng: &mut R) -> Result<Vec<Vec<i8>>> {
    let lo = k_bits / 2;
    let hi = k_bits.div_ceil(2);
    let mut centers: Vec<Vec<i8>> = Vec::with_capacity(m_labels);
    for i in 0..m_labels {
        let mut accepted = None;
        for _ in 0..MAX_BERNOULLI_RESAMPLES {
            let row: Vec<i8> = (0..k_bits)
                .map(|_| if rng.random_bool(0.5) { 1 } else { -1 })
                .collect();
            let ones = row.iter().filter(|&&v| v > 0).count();
            if (ones == lo || ones == hi) && !centers.contains(&row) {
                accepted = Some(row);
                break;
            }
        }
        match accepted {
            Some(row) => centers.push(row),
            None => {
                return Err(IcsError::Capacity(format!(
                    "no balanced distinct center {i} after {MAX_BERNOULLI_RESAMPLES} draws \
                     ({k_bits} bits, {m_labels} labels)"
                )))
            }
        }
    }
    Ok(centers)
}

/// Number of positions where two `±1` codes differ.
pub fn sign_hamming(a: &[i8], b: &[i8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

/// Smallest Hamming distance over all pairs of distinct centers.
pub fn min_pairwise_hamming(set: &HashCenterSet) -> Result<usize> {
    let rows = set.centers();
    if rows.len() < 2 {
        return Err(IcsError::Argument(
            "minimum pairwise distance needs at least two centers".into(),
        ));
    }
    let mut best = usize::MAX;
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            best = best.min(sign_hamming(&rows[i], &rows[j]));
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inner(a: &[i8], b: &[i8]) -> i64 {
        a.iter()
            .zip(b)
            .map(|(&x, &y)| i64::from(x) * i64::from(y))
            .sum()
    }

    #[test]
    fn base_cases() {
        let h0 = sylvester_hadamard(0).unwrap();
        assert_eq!(h0.order(), 1);
        assert_eq!(h0.row(0), &[1]);

        let h1 = sylvester_hadamard(1).unwrap();
        assert_eq!(h1.row(0), &[1, 1]);
        assert_eq!(h1.row(1), &[1, -1]);
    }

    #[test]
    fn order_four_matches_hand_expansion() {
        // H4 = H2 ⊗ H2 written out by hand.
        let expected: [[i8; 4]; 4] = [[1, 1, 1, 1], [1, -1, 1, -1], [1, 1, -1, -1], [1, -1, -1, 1]];
        let h = sylvester_hadamard(2).unwrap();
        for (r, row) in expected.iter().enumerate() {
            assert_eq!(h.row(r), row);
        }
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 4 } else { 0 };
                assert_eq!(inner(h.row(i), h.row(j)), want);
            }
        }
    }

    #[test]
    fn rows_orthogonal_up_to_order_256() {
        for k in 0..=8 {
            let h = sylvester_hadamard(k).unwrap();
            let n = h.order();
            assert!(h.rows().flatten().all(|&v| v == 1 || v == -1));
            for i in 0..n {
                for j in 0..n {
                    let want = if i == j { n as i64 } else { 0 };
                    assert_eq!(inner(h.row(i), h.row(j)), want, "k={k} rows {i},{j}");
                }
            }
        }
    }

    #[test]
    fn exponent_guard() {
        assert!(matches!(sylvester_hadamard(17), Err(IcsError::Capacity(_))));
    }

    #[test]
    fn strategy_selection() {
        assert_eq!(CenterStrategy::select(16, 10), CenterStrategy::HadamardRows);
        assert_eq!(CenterStrategy::select(16, 16), CenterStrategy::HadamardRows);
        assert_eq!(
            CenterStrategy::select(16, 17),
            CenterStrategy::StackedHadamard
        );
        assert_eq!(
            CenterStrategy::select(16, 32),
            CenterStrategy::StackedHadamard
        );
        assert_eq!(CenterStrategy::select(16, 33), CenterStrategy::Bernoulli);
        assert_eq!(CenterStrategy::select(48, 10), CenterStrategy::Bernoulli);
    }

    #[test]
    fn hadamard_rows_are_half_apart() {
        let set = generate_centers(16, 10, 7).unwrap();
        assert_eq!(set.strategy(), CenterStrategy::HadamardRows);
        assert_eq!(set.m_labels(), 10);
        let h = sylvester_hadamard(4).unwrap();
        for c in set.centers() {
            assert!(h.rows().any(|r| r == c.as_slice()));
        }
        for i in 0..10 {
            for j in 0..10 {
                if i != j {
                    assert_eq!(sign_hamming(set.center(i), set.center(j)), 8);
                }
            }
        }
    }

    #[test]
    fn single_label() {
        let set = generate_centers(16, 1, 3).unwrap();
        assert_eq!(set.m_labels(), 1);
        let h = sylvester_hadamard(4).unwrap();
        assert!(h.rows().any(|r| r == set.center(0)));
    }

    #[test]
    fn stacked_rows_are_half_apart_or_complementary() {
        let set = generate_centers(16, 30, 1).unwrap();
        assert_eq!(set.strategy(), CenterStrategy::StackedHadamard);
        // A row and its negation may both be drawn; those pairs sit K bits
        // apart, every other pair K/2.
        assert_eq!(min_pairwise_hamming(&set).unwrap(), 8);
    }

    #[test]
    fn bernoulli_balanced_and_distinct() {
        let set = generate_centers(48, 80, 11).unwrap();
        assert_eq!(set.strategy(), CenterStrategy::Bernoulli);
        assert_eq!(set.m_labels(), 80);
        for c in set.centers() {
            assert_eq!(c.iter().filter(|&&v| v > 0).count(), 24);
        }
        for i in 0..80 {
            for j in i + 1..80 {
                assert_ne!(set.center(i), set.center(j));
            }
        }
    }

    #[test]
    fn bernoulli_odd_width_within_one_bit() {
        let set = generate_centers(7, 20, 2).unwrap();
        for c in set.centers() {
            let ones = c.iter().filter(|&&v| v > 0).count();
            assert!(ones == 3 || ones == 4);
        }
    }

    #[test]
    fn capacity_errors() {
        assert!(matches!(
            generate_centers(2, 5, 0),
            Err(IcsError::Capacity(_))
        ));
        // 6 balanced 3-bit codes exist, 8 are requested.
        assert!(matches!(
            generate_centers(3, 8, 0),
            Err(IcsError::Capacity(_))
        ));
        assert!(matches!(
            generate_centers(1, 1, 0),
            Err(IcsError::Argument(_))
        ));
        assert!(matches!(
            generate_centers(16, 0, 0),
            Err(IcsError::Argument(_))
        ));
    }

    #[test]
    fn deterministic_in_seed() {
        assert_eq!(
            generate_centers(32, 20, 5).unwrap(),
            generate_centers(32, 20, 5).unwrap()
        );
        assert_eq!(
            generate_centers(20, 9, 5).unwrap(),
            generate_centers(20, 9, 5).unwrap()
        );
        assert_ne!(
            generate_centers(32, 20, 5).unwrap(),
            generate_centers(32, 20, 6).unwrap()
        );
    }

    #[test]
    fn min_pairwise_examples() {
        let set = generate_centers(32, 32, 9).unwrap();
        assert_eq!(min_pairwise_hamming(&set).unwrap(), 16);

        let dup =
            HashCenterSet::from_rows(4, CenterStrategy::Bernoulli, 0, vec![vec![1, -1, 1, -1]; 2])
                .unwrap();
        assert_eq!(min_pairwise_hamming(&dup).unwrap(), 0);

        let comp = HashCenterSet::from_rows(
            16,
            CenterStrategy::Bernoulli,
            0,
            vec![vec![1; 16], vec![-1; 16]],
        )
        .unwrap();
        assert_eq!(min_pairwise_hamming(&comp).unwrap(), 16);

        let one = generate_centers(16, 1, 0).unwrap();
        assert!(matches!(
            min_pairwise_hamming(&one),
            Err(IcsError::Argument(_))
        ));
    }

    #[test]
    fn text_round_trip() {
        let set = generate_centers(12, 5, 42).unwrap();
        let text = set.to_text();
        assert!(text.starts_with("12 5 bernoulli 42\n"));
        let back = HashCenterSet::parse(&text).unwrap();
        assert_eq!(back, set);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        match HashCenterSet::parse("") {
            Err(IcsError::Parse { line: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        match HashCenterSet::parse("2 1 bernoulli 0\n1 0\n") {
            Err(IcsError::Parse { line: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        match HashCenterSet::parse("2 2 hadamard-rows 0\n1 1\n") {
            Err(IcsError::Parse { line: 3, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
