//! Multi-label datasets: text I/O, a synthetic generator with known instance
//! proportions, and rank correlation for comparing weights to proportions.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{IcsError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct MultiLabelSample<T> {
    pub features: Vec<T>,
    pub labels: Vec<bool>,
    /// Ground-truth share of each positive label, in ascending label order.
    pub proportions: Option<Vec<T>>,
}

impl<T: Scalar> MultiLabelSample<T> {
    /// Indices of the positive labels, ascending.
    pub fn positive_labels(&self) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, &on)| on.then_some(i))
            .collect()
    }

    pub fn n_positive(&self) -> usize {
        self.labels.iter().filter(|&&on| on).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub d_features: usize,
    pub m_labels: usize,
    pub samples: Vec<MultiLabelSample<T>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<Vec<bool>> {
        self.samples.iter().map(|s| s.labels.clone()).collect()
    }

    /// Checks every sample against the dataset shape and the sample invariants.
    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.samples.iter().enumerate() {
            if s.features.len() != self.d_features {
                return Err(IcsError::Data(format!(
                    "sample {i} has {} features, expected {}",
                    s.features.len(),
                    self.d_features
                )));
            }
            if s.labels.len() != self.m_labels {
                return Err(IcsError::Data(format!(
                    "sample {i} has {} labels, expected {}",
                    s.labels.len(),
                    self.m_labels
                )));
            }
            let c = s.n_positive();
            if c == 0 {
                return Err(IcsError::Data(format!("sample {i} has no positive label")));
            }
            if let Some(p) = &s.proportions {
                if p.len() != c {
                    return Err(IcsError::Data(format!(
                        "sample {i} has {} proportions for {c} labels",
                        p.len()
                    )));
                }
                let sum: T = p.iter().copied().sum();
                if p.iter().any(|&x| x < T::zero()) || (sum - T::one()).abs() > T::lit(1e-6) {
                    return Err(IcsError::Data(format!(
                        "sample {i} proportions are not on the simplex"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Text format: `N D M` header, then per sample a line of `D` features, a
    /// line of `M` label characters, and a proportions line (or `-`).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{} {} {}", self.len(), self.d_features, self.m_labels).unwrap();
        for s in &self.samples {
            out.push_str(&join(&s.features));
            out.push('\n');
            out.extend(s.labels.iter().map(|&on| if on { '1' } else { '0' }));
            out.push('\n');
            match &s.proportions {
                Some(p) => out.push_str(&join(p)),
                None => out.push('-'),
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = lines
            .next()
            .ok_or_else(|| IcsError::parse(1, "empty dataset file"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let [n, d, m] = fields.as_slice() else {
            return Err(IcsError::parse(1, "expected `N D M`"));
        };
        let parse_count = |s: &str, what: &str| {
            s.parse::<usize>()
                .map_err(|_| IcsError::parse(1, format!("bad {what} `{s}`")))
        };
        let n = parse_count(n, "N")?;
        let d_features = parse_count(d, "D")?;
        let m_labels = parse_count(m, "M")?;

        let mut samples = Vec::with_capacity(n);
        let mut last_line = 1;
        let mut next_line = |what: &str, last_line: &mut usize| {
            let (no, l) = lines
                .next()
                .ok_or_else(|| IcsError::parse(*last_line + 1, format!("missing {what} line")))?;
            *last_line = no;
            Ok::<_, IcsError>((no, l))
        };
        for i in 0..n {
            let (no, line) = next_line("features", &mut last_line)?;
            let features = parse_floats::<T>(line, no)?;
            if features.len() != d_features {
                return Err(IcsError::parse(
                    no,
                    format!("expected {d_features} features, found {}", features.len()),
                ));
            }

            let (no, line) = next_line("labels", &mut last_line)?;
            let labels = line
                .trim()
                .chars()
                .map(|ch| match ch {
                    '0' => Ok(false),
                    '1' => Ok(true),
                    other => Err(IcsError::parse(
                        no,
                        format!("bad label character `{other}`"),
                    )),
                })
                .collect::<Result<Vec<bool>>>()?;
            if labels.len() != m_labels {
                return Err(IcsError::parse(
                    no,
                    format!("expected {m_labels} labels, found {}", labels.len()),
                ));
            }
            if !labels.contains(&true) {
                return Err(IcsError::Data(format!(
                    "sample {i} (line {no}) has no positive label"
                )));
            }

            let (no, line) = next_line("proportions", &mut last_line)?;
            let proportions = if line.trim() == "-" {
                None
            } else {
                Some(parse_floats::<T>(line, no)?)
            };
            samples.push(MultiLabelSample {
                features,
                labels,
                proportions,
            });
        }
        let ds = Dataset {
            d_features,
            m_labels,
            samples,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Headerless CSV: each row holds the features followed by `m_labels`
    /// 0/1 label columns.
    pub fn parse_csv(text: &str, m_labels: usize) -> Result<Self> {
        let mut samples = Vec::new();
        let mut d_features = None;
        for (i, line) in text.lines().enumerate() {
            let no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() <= m_labels {
                return Err(IcsError::parse(
                    no,
                    format!("row has {} columns, need more than {m_labels}", cells.len()),
                ));
            }
            let split = cells.len() - m_labels;
            match d_features {
                None => d_features = Some(split),
                Some(d) if d != split => {
                    return Err(IcsError::parse(
                        no,
                        format!("expected {d} features, found {split}"),
                    ))
                }
                _ => {}
            }
            let features = cells[..split]
                .iter()
                .map(|c| {
                    c.parse::<T>()
                        .map_err(|_| IcsError::parse(no, format!("bad number `{c}`")))
                })
                .collect::<Result<Vec<T>>>()?;
            let labels = cells[split..]
                .iter()
                .map(|&c| match c {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    other => Err(IcsError::parse(no, format!("bad label `{other}`"))),
                })
                .collect::<Result<Vec<bool>>>()?;
            if !labels.contains(&true) {
                return Err(IcsError::Data(format!(
                    "sample {} (line {no}) has no positive label",
                    samples.len()
                )));
            }
            samples.push(MultiLabelSample {
                features,
                labels,
                proportions: None,
            });
        }
        let d_features = d_features.ok_or_else(|| IcsError::parse(1, "empty CSV file"))?;
        Ok(Dataset {
            d_features,
            m_labels,
            samples,
        })
    }
}

fn join<T: Scalar>(values: &[T]) -> String {
    let parts: Vec<String> = values.iter().map(|v| v.to_string()).collect();
    parts.join(" ")
}

fn parse_floats<T: Scalar>(line: &str, line_no: usize) -> Result<Vec<T>> {
    line.split_whitespace()
        .map(|tok| {
            let v: T = tok
                .parse()
                .map_err(|_| IcsError::parse(line_no, format!("bad number `{tok}`")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(IcsError::parse(
                    line_no,
                    format!("non-finite number `{tok}`"),
                ))
            }
        })
        .collect()
}

pub fn save_dataset<T: Scalar>(path: impl AsRef<Path>, dataset: &Dataset<T>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, dataset.to_text()).map_err(|e| IcsError::io(path, e))
}

pub fn load_dataset<T: Scalar>(path: impl AsRef<Path>) -> Result<Dataset<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| IcsError::io(path, e))?;
    Dataset::parse(&text)
}

pub fn load_dataset_csv<T: Scalar>(path: impl AsRef<Path>, m_labels: usize) -> Result<Dataset<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| IcsError::io(path, e))?;
    Dataset::parse_csv(&text, m_labels)
}

/// Parameters of the synthetic mixture generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_samples: usize,
    pub d_features: usize,
    pub m_labels: usize,
    /// Inclusive range `[min, max]` of positive labels per sample.
    pub labels_per_sample: (usize, usize),
    pub dirichlet_alpha: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_samples: 1000,
            d_features: 16,
            m_labels: 8,
            labels_per_sample: (1, 3),
            dirichlet_alpha: 1.0,
            noise_sigma: 0.1,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.labels_per_sample;
        if self.n_samples == 0 || self.d_features == 0 || self.m_labels == 0 {
            return Err(IcsError::Argument(
                "sample, feature and label counts must be positive".into(),
            ));
        }
        if lo == 0 || lo > hi || hi > self.m_labels {
            return Err(IcsError::Argument(format!(
                "labels per sample [{lo}, {hi}] must satisfy 1 <= min <= max <= {}",
                self.m_labels
            )));
        }
        if !(self.dirichlet_alpha.is_finite() && self.dirichlet_alpha > 0.0) {
            return Err(IcsError::Argument("dirichlet_alpha must be > 0".into()));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(IcsError::Argument("noise_sigma must be >= 0".into()));
        }
        Ok(())
    }
}

/// Draws a dataset whose features are proportion-weighted mixtures of
/// per-label anchor directions plus Gaussian noise.
///
/// Anchors are drawn first and samples one after another, so a dataset of
/// `n` samples is a prefix of the dataset of `n + m` samples with the same
/// seed.
pub fn generate_synthetic<T: Scalar>(spec: &SyntheticSpec) -> Result<Dataset<T>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.d_features;

    let anchors: Vec<Vec<f64>> = (0..spec.m_labels)
        .map(|_| loop {
            let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break v.into_iter().map(|x| x / norm).collect();
            }
        })
        .collect();

    let gamma = Gamma::new(spec.dirichlet_alpha, 1.0)
        .map_err(|e| IcsError::Argument(format!("dirichlet_alpha: {e}")))?;
    let (lo, hi) = spec.labels_per_sample;

    let mut samples = Vec::with_capacity(spec.n_samples);
    for _ in 0..spec.n_samples {
        let c = rng.random_range(lo..=hi);
        let mut chosen = index::sample(&mut rng, spec.m_labels, c).into_vec();
        chosen.sort_unstable();

        let proportions: Vec<f64> = if c == 1 {
            vec![1.0]
        } else {
            loop {
                let g: Vec<f64> = (0..c).map(|_| gamma.sample(&mut rng)).collect();
                let total: f64 = g.iter().sum();
                if total > 0.0 {
                    break g.into_iter().map(|x| x / total).collect();
                }
            }
        };

        let mut x = vec![0.0f64; d];
        for (&label, &p) in chosen.iter().zip(&proportions) {
            for (xi, &a) in x.iter_mut().zip(&anchors[label]) {
                *xi += p * a;
            }
        }
        for xi in &mut x {
            let z: f64 = rng.sample(StandardNormal);
            *xi += spec.noise_sigma * z;
        }

        let mut labels = vec![false; spec.m_labels];
        for &l in &chosen {
            labels[l] = true;
        }
        samples.push(MultiLabelSample {
            features: x.into_iter().map(T::lit).collect(),
            labels,
            proportions: Some(proportions.into_iter().map(T::lit).collect()),
        });
    }
    Ok(Dataset {
        d_features: d,
        m_labels: spec.m_labels,
        samples,
    })
}

/// Ranks starting at 1, tied values sharing their average rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman_corr(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(IcsError::Evaluation(format!(
            "sequences differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(IcsError::Evaluation(
            "need at least two observations".into(),
        ));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(IcsError::Evaluation("non-finite observation".into()));
    }
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(IcsError::Evaluation(
            "rank correlation of a constant sequence".into(),
        ));
    }
    Ok((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
}

/// Per-sample agreement between learned center weights and ground-truth
/// proportions.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightReportRow {
    pub sample: usize,
    pub weights: Vec<f64>,
    pub proportions: Vec<f64>,
    /// `None` for single-label samples and when either side is constant.
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightReport {
    pub rows: Vec<WeightReportRow>,
    /// Mean Spearman ρ over scored samples, `None` when nothing was scored.
    pub mean_rho: Option<f64>,
    pub n_scored: usize,
    /// Multi-label samples whose ρ is undefined (constant weights or proportions).
    pub n_excluded: usize,
    pub n_single_label: usize,
    /// Mean over multi-label samples of the population variance of their weights.
    pub weight_variance: f64,
}

/// Compares `weights[i]` (aligned with sample `i`'s positive labels in
/// ascending order) with the sample's stored proportions.
pub fn weight_report<T: Scalar>(
    weights: &[Vec<f64>],
    dataset: &Dataset<T>,
) -> Result<WeightReport> {
    if weights.len() != dataset.len() {
        return Err(IcsError::Data(format!(
            "{} weight rows for {} samples",
            weights.len(),
            dataset.len()
        )));
    }
    let mut rows = Vec::with_capacity(weights.len());
    let (mut rho_sum, mut n_scored, mut n_excluded, mut n_single) = (0.0, 0usize, 0usize, 0usize);
    let (mut var_sum, mut n_multi) = (0.0, 0usize);
    for (i, (w, s)) in weights.iter().zip(&dataset.samples).enumerate() {
        let p: Vec<f64> = s
            .proportions
            .as_ref()
            .ok_or_else(|| IcsError::Data(format!("sample {i} has no ground-truth proportions")))?
            .iter()
            .map(|v| v.to_f64_lossy())
            .collect();
        if p.len() != w.len() {
            return Err(IcsError::Data(format!(
                "sample {i}: {} weights for {} proportions",
                w.len(),
                p.len()
            )));
        }
        let rho = if w.len() < 2 {
            n_single += 1;
            None
        } else {
            n_multi += 1;
            let mean = w.iter().sum::<f64>() / w.len() as f64;
            var_sum += w.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / w.len() as f64;
            match spearman_corr(w, &p) {
                Ok(r) => {
                    n_scored += 1;
                    rho_sum += r;
                    Some(r)
                }
                Err(_) => {
                    n_excluded += 1;
                    None
                }
            }
        };
        rows.push(WeightReportRow {
            sample: i,
            weights: w.clone(),
            proportions: p,
            rho,
        });
    }
    Ok(WeightReport {
        rows,
        mean_rho: (n_scored > 0).then(|| rho_sum / n_scored as f64),
        n_scored,
        n_excluded,
        n_single_label: n_single,
        weight_variance: if n_multi > 0 {
            var_sum / n_multi as f64
        } else {
            0.0
        },
    })
}
