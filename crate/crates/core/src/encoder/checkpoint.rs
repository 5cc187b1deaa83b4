//! Text checkpoints.
//!
//! ```text
//! ics-checkpoint 1
//! layers 16 64 16
//! k 16
//! m 8
//! seed 42
//! layer 0 weight
//! <n_out rows of n_in values>
//! layer 0 bias
//! <one row of n_out values>
//! ...
//! ```
//!
//! Values use the shortest representation that parses back to the same
//! float, so save → load is bit-exact.

use std::fs;
use std::path::Path;

use super::{Dense, EncoderParams};
use crate::error::{IcsError, Result};
use crate::scalar::Scalar;

const MAGIC: &str = "ics-checkpoint 1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub params: EncoderParams<T>,
    pub m_labels: usize,
    pub seed: u64,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn k_bits(&self) -> usize {
        self.params.code_bits()
    }

    pub fn to_text(&self) -> String {
        let sizes: Vec<String> = self.params.sizes().iter().map(|s| s.to_string()).collect();
        let mut out = format!(
            "{MAGIC}\nlayers {}\nk {}\nm {}\nseed {}\n",
            sizes.join(" "),
            self.k_bits(),
            self.m_labels,
            self.seed
        );
        for (l, layer) in self.params.layers().iter().enumerate() {
            out.push_str(&format!("layer {l} weight\n"));
            for row in layer.weight.chunks_exact(layer.n_in) {
                out.push_str(&join(row));
                out.push('\n');
            }
            out.push_str(&format!("layer {l} bias\n"));
            out.push_str(&join(&layer.bias));
            out.push('\n');
        }
        out
    }
}

fn join<T: Scalar>(values: &[T]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        match self.inner.next() {
            Some((i, l)) => {
                self.last = i + 1;
                Ok((i + 1, l))
            }
            None => Err(IcsError::parse(self.last + 1, format!("missing {what}"))),
        }
    }

    fn keyed(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (no, line) = self.next(key)?;
        line.strip_prefix(key)
            .and_then(|rest| rest.strip_prefix(' '))
            .map(|rest| (no, rest))
            .ok_or_else(|| IcsError::parse(no, format!("expected `{key} ...`")))
    }
}

fn parse_num<N: std::str::FromStr>(tok: &str, line: usize) -> Result<N> {
    tok.parse()
        .map_err(|_| IcsError::parse(line, format!("bad number `{tok}`")))
}

fn parse_row<T: Scalar>(line: &str, no: usize, expected: usize) -> Result<Vec<T>> {
    let row = line
        .split_whitespace()
        .map(|t| parse_num::<T>(t, no))
        .collect::<Result<Vec<T>>>()?;
    if row.len() != expected {
        return Err(IcsError::parse(
            no,
            format!("expected {expected} values, found {}", row.len()),
        ));
    }
    if row.iter().any(|v| !v.is_finite()) {
        return Err(IcsError::parse(no, "non-finite parameter"));
    }
    Ok(row)
}

pub fn parse_checkpoint<T: Scalar>(text: &str) -> Result<Checkpoint<T>> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        last: 0,
    };
    let (no, magic) = lines.next("header")?;
    if magic.trim() != MAGIC {
        return Err(IcsError::parse(no, format!("expected `{MAGIC}`")));
    }
    let (no, sizes) = lines.keyed("layers")?;
    let sizes = sizes
        .split_whitespace()
        .map(|t| parse_num::<usize>(t, no))
        .collect::<Result<Vec<usize>>>()?;
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(IcsError::parse(
            no,
            "need at least two positive layer sizes",
        ));
    }
    let (no, k) = lines.keyed("k")?;
    let k: usize = parse_num(k.trim(), no)?;
    if k != *sizes.last().expect("nonempty") {
        return Err(IcsError::parse(no, "k disagrees with the last layer size"));
    }
    let (no, m) = lines.keyed("m")?;
    let m_labels: usize = parse_num(m.trim(), no)?;
    let (no, seed) = lines.keyed("seed")?;
    let seed: u64 = parse_num(seed.trim(), no)?;

    let mut layers = Vec::with_capacity(sizes.len() - 1);
    for (l, pair) in sizes.windows(2).enumerate() {
        let (n_in, n_out) = (pair[0], pair[1]);
        let (no, tag) = lines.next("layer weight tag")?;
        if tag.trim() != format!("layer {l} weight") {
            return Err(IcsError::parse(no, format!("expected `layer {l} weight`")));
        }
        let mut weight = Vec::with_capacity(n_in * n_out);
        for _ in 0..n_out {
            let (no, row) = lines.next("weight row")?;
            weight.extend(parse_row::<T>(row, no, n_in)?);
        }
        let (no, tag) = lines.next("layer bias tag")?;
        if tag.trim() != format!("layer {l} bias") {
            return Err(IcsError::parse(no, format!("expected `layer {l} bias`")));
        }
        let (no, row) = lines.next("bias row")?;
        let bias = parse_row::<T>(row, no, n_out)?;
        layers.push(Dense {
            n_in,
            n_out,
            weight,
            bias,
        });
    }
    Ok(Checkpoint {
        params: EncoderParams::from_layers(layers)?,
        m_labels,
        seed,
    })
}

pub fn save_checkpoint<T: Scalar>(path: impl AsRef<Path>, ckpt: &Checkpoint<T>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, ckpt.to_text()).map_err(|e| IcsError::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<Checkpoint<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| IcsError::io(path, e))?;
    parse_checkpoint(&text)
}
