//! The instance-weighted central similarity objective.
//!
//! For a relaxed code `b ∈ (0,1)^K` and a sample with centers `v_1..v_c`
//! (mapped to `{0,1}`) and weights `w` on the simplex:
//!
//! ```text
//! d_j  = -Σ_k [ v_jk log b_k + (1 - v_jk) log(1 - b_k) ]
//! Ω    = Σ_j w_j d_j
//! J1   = Σ_i softplus(β Ω_i)            (= -Σ_i log p_i, p = 1/(1+e^{βΩ}))
//! Jq   = Σ_i Σ_k log cosh(|2 b_ik - 1| - 1)
//! R    = Σ_i Σ_j w_ij log w_ij
//! J    = J1 + γ Jq + λ R
//! ```

use std::fmt;
use std::str::FromStr;

use crate::centers::HashCenterSet;
use crate::error::{IcsError, Result};
use crate::scalar::{log_cosh, sigmoid, softplus, Scalar};
use crate::weights::{entropy_regularizer_floored, WeightVector, DEFAULT_WEIGHT_FLOOR};

/// Margin keeping relaxed code entries away from 0 and 1.
pub const CODE_EPSILON: f64 = 1e-7;

/// An encoder output in `(ε_b, 1 - ε_b)^K`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedCode<T>(Vec<T>);

impl<T: Scalar> RelaxedCode<T> {
    /// Clamps every entry into `[ε_b, 1 - ε_b]`. NaN entries are rejected.
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.iter().any(|v| v.is_nan()) {
            return Err(IcsError::Argument("relaxed code contains NaN".into()));
        }
        let eps = T::lit(CODE_EPSILON);
        let hi = T::one() - eps;
        Ok(RelaxedCode(
            values.into_iter().map(|v| v.max(eps).min(hi)).collect(),
        ))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }
}

/// The centers a sample is attracted to, one per positive label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CenterAssignment {
    center_indices: Vec<usize>,
    centers01: Vec<Vec<u8>>,
}

impl CenterAssignment {
    /// Picks the rows of `centers` for the given labels.
    pub fn new(center_indices: Vec<usize>, centers: &HashCenterSet) -> Result<Self> {
        if center_indices.is_empty() {
            return Err(IcsError::Data("a sample needs at least one center".into()));
        }
        for (i, &c) in center_indices.iter().enumerate() {
            if c >= centers.m_labels() {
                return Err(IcsError::Data(format!(
                    "label {c} out of range for {} centers",
                    centers.m_labels()
                )));
            }
            if center_indices[..i].contains(&c) {
                return Err(IcsError::Data(format!("label {c} listed twice")));
            }
        }
        let centers01 = center_indices
            .iter()
            .map(|&c| centers.center01(c))
            .collect();
        Ok(CenterAssignment {
            center_indices,
            centers01,
        })
    }

    /// Builds an assignment from explicit `{0,1}` rows.
    pub fn from_rows(center_indices: Vec<usize>, centers01: Vec<Vec<u8>>) -> Result<Self> {
        if center_indices.is_empty() || center_indices.len() != centers01.len() {
            return Err(IcsError::Argument(
                "assignment needs one index per center row and at least one row".into(),
            ));
        }
        if centers01.iter().flatten().any(|&v| v > 1) {
            return Err(IcsError::Argument("center rows must be 0/1".into()));
        }
        Ok(CenterAssignment {
            center_indices,
            centers01,
        })
    }

    pub fn len(&self) -> usize {
        self.center_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.center_indices.is_empty()
    }

    pub fn center_indices(&self) -> &[usize] {
        &self.center_indices
    }

    pub fn centers01(&self) -> &[Vec<u8>] {
        &self.centers01
    }
}

/// How `J1` combines a sample's centers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Aggregation {
    /// `softplus(β Σ_j w_j d_j)` per sample.
    #[default]
    PerImage,
    /// `Σ_j softplus(β w_j d_j)` per sample.
    PerCenter,
}

impl Aggregation {
    pub fn as_str(self) -> &'static str {
        match self {
            Aggregation::PerImage => "per-image",
            Aggregation::PerCenter => "per-center",
        }
    }
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Aggregation {
    type Err = IcsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-image" => Ok(Aggregation::PerImage),
            "per-center" => Ok(Aggregation::PerCenter),
            other => Err(IcsError::Argument(format!("unknown aggregation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig<T> {
    pub beta: T,
    pub gamma: T,
    pub lambda: T,
    pub aggregation: Aggregation,
}

impl<T: Scalar> Default for LossConfig<T> {
    fn default() -> Self {
        LossConfig {
            beta: T::lit(0.1),
            gamma: T::lit(0.05),
            lambda: T::lit(0.01),
            aggregation: Aggregation::PerImage,
        }
    }
}

impl<T: Scalar> LossConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > T::zero() && self.beta <= T::one()) {
            return Err(IcsError::Argument(format!(
                "beta must lie in (0, 1], got {}",
                self.beta
            )));
        }
        if !(self.gamma >= T::zero() && self.gamma.is_finite()) {
            return Err(IcsError::Argument(format!(
                "gamma must be >= 0, got {}",
                self.gamma
            )));
        }
        if !(self.lambda >= T::zero() && self.lambda.is_finite()) {
            return Err(IcsError::Argument(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// One batch member: its code, its centers and its (fixed) weights.
#[derive(Debug, Clone, Copy)]
pub struct LossSample<'a, T> {
    pub code: &'a RelaxedCode<T>,
    pub assignment: &'a CenterAssignment,
    pub weights: &'a WeightVector<T>,
}

/// The three terms of the objective together with their combination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts<T> {
    pub total: T,
    pub j1: T,
    pub jq: T,
    pub r: T,
}

/// Nonnegative binary cross entropy between a code and a `{0,1}` center.
pub fn bce_distance<T: Scalar>(b: &RelaxedCode<T>, center01: &[u8]) -> Result<T> {
    if b.len() != center01.len() {
        return Err(IcsError::Argument(format!(
            "code has {} bits, center has {}",
            b.len(),
            center01.len()
        )));
    }
    Ok(bce_raw(b.as_slice(), center01))
}

fn bce_raw<T: Scalar>(b: &[T], center01: &[u8]) -> T {
    -b.iter()
        .zip(center01)
        .map(|(&bk, &vk)| {
            if vk == 1 {
                bk.ln()
            } else {
                (T::one() - bk).ln()
            }
        })
        .sum::<T>()
}

/// Distances from `b` to each of the sample's centers, in assignment order.
pub fn center_distances<T: Scalar>(b: &RelaxedCode<T>, a: &CenterAssignment) -> Result<Vec<T>> {
    a.centers01().iter().map(|c| bce_distance(b, c)).collect()
}

/// `Ω = Σ_j w_j d_j`.
pub fn weighted_distance<T: Scalar>(
    b: &RelaxedCode<T>,
    a: &CenterAssignment,
    w: &WeightVector<T>,
) -> Result<T> {
    if w.len() != a.len() {
        return Err(IcsError::Argument(format!(
            "{} weights for {} centers",
            w.len(),
            a.len()
        )));
    }
    let d = center_distances(b, a)?;
    Ok(d.iter().zip(w.as_slice()).map(|(&dj, &wj)| wj * dj).sum())
}

/// `p = 1 / (1 + exp(β Ω))`.
pub fn central_likelihood<T: Scalar>(omega: T, beta: T) -> T {
    sigmoid(-beta * omega)
}

fn sample_j1<T: Scalar>(d: &[T], w: &[T], cfg: &LossConfig<T>) -> T {
    match cfg.aggregation {
        Aggregation::PerImage => {
            let omega: T = d.iter().zip(w).map(|(&dj, &wj)| wj * dj).sum();
            softplus(cfg.beta * omega)
        }
        Aggregation::PerCenter => d
            .iter()
            .zip(w)
            .map(|(&dj, &wj)| softplus(cfg.beta * wj * dj))
            .sum(),
    }
}

fn check_sample<T: Scalar>(s: &LossSample<'_, T>) -> Result<()> {
    if s.weights.len() != s.assignment.len() {
        return Err(IcsError::Argument(format!(
            "{} weights for {} centers",
            s.weights.len(),
            s.assignment.len()
        )));
    }
    for c in s.assignment.centers01() {
        if c.len() != s.code.len() {
            return Err(IcsError::Argument(format!(
                "code has {} bits, center has {}",
                s.code.len(),
                c.len()
            )));
        }
    }
    Ok(())
}

/// `J1 = Σ_i -log p_i`.
pub fn central_loss<T: Scalar>(batch: &[LossSample<'_, T>], cfg: &LossConfig<T>) -> Result<T> {
    if batch.is_empty() {
        return Err(IcsError::Argument("empty batch".into()));
    }
    let mut j1 = T::zero();
    for s in batch {
        check_sample(s)?;
        let d = center_distances(s.code, s.assignment)?;
        j1 = j1 + sample_j1(&d, s.weights.as_slice(), cfg);
    }
    Ok(j1)
}

fn quantization_term<T: Scalar>(bk: T) -> T {
    let two = T::lit(2.0);
    log_cosh((two * bk - T::one()).abs() - T::one())
}

fn quantization_grad<T: Scalar>(bk: T) -> T {
    let two = T::lit(2.0);
    let centered = two * bk - T::one();
    if centered == T::zero() {
        // Subgradient at the kink.
        return T::zero();
    }
    let u = centered.abs() - T::one();
    u.tanh() * two * centered.signum()
}

/// `Jq = Σ_i Σ_k log cosh(|2 b_ik - 1| - 1)`.
pub fn quantization_loss<T: Scalar>(codes: &[&RelaxedCode<T>]) -> Result<T> {
    if codes.is_empty() {
        return Err(IcsError::Argument("empty batch".into()));
    }
    Ok(codes
        .iter()
        .flat_map(|c| c.as_slice().iter())
        .map(|&bk| quantization_term(bk))
        .sum())
}

/// `J = J1 + γ Jq + λ R` with its decomposition.
pub fn total_loss<T: Scalar>(
    batch: &[LossSample<'_, T>],
    cfg: &LossConfig<T>,
) -> Result<LossParts<T>> {
    let j1 = central_loss(batch, cfg)?;
    let codes: Vec<&RelaxedCode<T>> = batch.iter().map(|s| s.code).collect();
    let jq = quantization_loss(&codes)?;
    let floor = T::lit(DEFAULT_WEIGHT_FLOOR);
    let r: T = batch
        .iter()
        .map(|s| entropy_regularizer_floored(s.weights.as_slice(), floor))
        .sum();
    Ok(LossParts {
        total: j1 + cfg.gamma * jq + cfg.lambda * r,
        j1,
        jq,
        r,
    })
}

/// `∂J/∂b_ik` for every sample, weights held fixed.
pub fn loss_gradient_wrt_codes<T: Scalar>(
    batch: &[LossSample<'_, T>],
    cfg: &LossConfig<T>,
) -> Result<Vec<Vec<T>>> {
    batch
        .iter()
        .map(|s| {
            check_sample(s)?;
            Ok(sample_code_gradient(s, cfg))
        })
        .collect()
}

fn sample_code_gradient<T: Scalar>(s: &LossSample<'_, T>, cfg: &LossConfig<T>) -> Vec<T> {
    let b = s.code.as_slice();
    let w = s.weights.as_slice();
    let rows = s.assignment.centers01();
    let d: Vec<T> = rows.iter().map(|c| bce_raw(b, c)).collect();

    // Coefficient multiplying ∂d_j/∂b_k in ∂J1/∂b_k.
    let coeff: Vec<T> = match cfg.aggregation {
        Aggregation::PerImage => {
            let omega: T = d.iter().zip(w).map(|(&dj, &wj)| wj * dj).sum();
            let s = cfg.beta * sigmoid(cfg.beta * omega);
            w.iter().map(|&wj| s * wj).collect()
        }
        Aggregation::PerCenter => d
            .iter()
            .zip(w)
            .map(|(&dj, &wj)| cfg.beta * wj * sigmoid(cfg.beta * wj * dj))
            .collect(),
    };

    b.iter()
        .enumerate()
        .map(|(k, &bk)| {
            let pos = -T::one() / bk;
            let neg = T::one() / (T::one() - bk);
            let central: T = rows
                .iter()
                .zip(&coeff)
                .map(|(c, &a)| a * if c[k] == 1 { pos } else { neg })
                .sum();
            central + cfg.gamma * quantization_grad(bk)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code(v: &[f64]) -> RelaxedCode<f64> {
        RelaxedCode::new(v.to_vec()).unwrap()
    }

    #[test]
    fn bce_examples() {
        let d = bce_distance(&code(&[0.9, 0.1]), &[1, 0]).unwrap();
        assert!((d + 2.0 * 0.9f64.ln()).abs() < 1e-15);
        assert!((d - 0.210_721_031_315_652_6).abs() < 1e-12);

        let half = code(&[0.5; 8]);
        let d = bce_distance(&half, &[1, 0, 1, 1, 0, 0, 1, 0]).unwrap();
        assert!((d - 8.0 * 2f64.ln()).abs() < 1e-12);

        let center = [1u8, 0, 0, 1, 1];
        let exact = code(&center.iter().map(|&v| f64::from(v)).collect::<Vec<_>>());
        let d = bce_distance(&exact, &center).unwrap();
        let bound = 2.0 * 5.0 * CODE_EPSILON * CODE_EPSILON.ln().abs();
        assert!(d >= 0.0 && d <= bound, "{d} > {bound}");

        assert!(bce_distance(&half, &[1, 0]).is_err());
    }

    #[test]
    fn relaxed_code_clamps() {
        let c = code(&[0.0, 1.0, 0.5]);
        assert_eq!(c.as_slice()[0], CODE_EPSILON);
        assert_eq!(c.as_slice()[1], 1.0 - CODE_EPSILON);
        assert!(RelaxedCode::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn weighted_distance_examples() {
        let b = code(&[0.8, 0.3, 0.6]);
        let a1 = CenterAssignment::from_rows(vec![0], vec![vec![1, 0, 1]]).unwrap();
        let w1 = WeightVector::new(vec![1.0]).unwrap();
        assert_eq!(
            weighted_distance(&b, &a1, &w1).unwrap(),
            bce_distance(&b, &[1, 0, 1]).unwrap()
        );

        // Two centers equidistant from b = 0.5.
        let half = code(&[0.5; 4]);
        let a2 = CenterAssignment::from_rows(vec![0, 1], vec![vec![1, 0, 1, 0], vec![0, 0, 1, 1]])
            .unwrap();
        let w = WeightVector::new(vec![0.3, 0.7]).unwrap();
        let omega = weighted_distance(&half, &a2, &w).unwrap();
        assert!((omega - 4.0 * 2f64.ln()).abs() < 1e-12);

        assert!(weighted_distance(&b, &a1, &WeightVector::uniform(2)).is_err());
    }

    #[test]
    fn weighted_distance_is_convex_combination() {
        // With b_k = e^{-1/2} every set center bit costs exactly 1/2.
        let x = (-0.5f64).exp();
        let b = code(&[x, x, x, x, x, x]);
        let a = CenterAssignment::from_rows(
            vec![0, 1],
            vec![vec![1, 1, 0, 0, 0, 0], vec![1, 1, 1, 1, 1, 1]],
        )
        .unwrap();
        let d = center_distances(&b, &a).unwrap();
        let off = -(1.0 - x).ln();
        assert!((d[0] - (1.0 + 4.0 * off)).abs() < 1e-12);
        assert!((d[1] - 3.0).abs() < 1e-12);
        let w = WeightVector::new(vec![0.75, 0.25]).unwrap();
        let omega = weighted_distance(&b, &a, &w).unwrap();
        assert!((omega - (0.75 * d[0] + 0.25 * d[1])).abs() < 1e-12);
    }

    #[test]
    fn weighted_distance_hand_arithmetic() {
        // Ω for d = (1, 3), w = (0.75, 0.25).
        let d = [1.0f64, 3.0];
        let w = [0.75, 0.25];
        let omega: f64 = w.iter().zip(d).map(|(a, b)| a * b).sum();
        assert_eq!(omega, 1.5);
        let sample = sample_j1(
            &d,
            &w,
            &LossConfig {
                beta: 1.0,
                ..Default::default()
            },
        );
        assert!((sample - softplus(1.5)).abs() < 1e-15);
    }

    #[test]
    fn likelihood_examples() {
        assert_eq!(central_likelihood(0.0, 0.3), 0.5);
        assert!((central_likelihood(3f64.ln(), 1.0) - 0.25).abs() < 1e-15);
        let p = central_likelihood(1e6, 1.0);
        assert!((0.0..1e-300).contains(&p));
        assert!(central_likelihood(1.0, 0.5) > central_likelihood(2.0, 0.5));
    }

    #[test]
    fn central_loss_examples() {
        let half = code(&[0.5; 2]);
        let a = CenterAssignment::from_rows(vec![0], vec![vec![1, 0]]).unwrap();
        let w = WeightVector::new(vec![1.0]).unwrap();
        let cfg = LossConfig {
            beta: 1.0,
            ..Default::default()
        };
        let s = LossSample {
            code: &half,
            assignment: &a,
            weights: &w,
        };
        let j1 = central_loss(&[s], &cfg).unwrap();
        let omega = 2.0 * 2f64.ln();
        assert!((j1 - (1.0 + omega.exp()).ln()).abs() < 1e-12);
        // At Ω = ln 3 the loss is -ln(1/4) = ln 4.
        assert!((softplus(3f64.ln()) - 4f64.ln()).abs() < 1e-15);
        assert!(central_loss::<f64>(&[], &cfg).is_err());
    }

    #[test]
    fn quantization_examples() {
        let binary = code(&[0.0, 1.0]);
        let jq = quantization_loss(&[&binary]).unwrap();
        assert!(jq.abs() < 1e-12);

        let half = code(&[0.5]);
        let jq = quantization_loss(&[&half]).unwrap();
        assert!((jq - 1f64.cosh().ln()).abs() < 1e-15);
        assert!((jq - 0.433_780_830_483_027).abs() < 1e-12);

        let mut prev = f64::INFINITY;
        for i in 0..50 {
            let b = 0.5 + 0.5 * f64::from(i) / 50.0;
            let q = quantization_term(b);
            assert!(q < prev);
            assert!((q - quantization_term(1.0 - b)).abs() < 1e-15);
            prev = q;
        }
        assert!(quantization_loss::<f64>(&[]).is_err());
    }

    #[test]
    fn total_loss_decomposition() {
        let b1 = code(&[0.3, 0.8, 0.6, 0.1]);
        let b2 = code(&[0.7, 0.2, 0.4, 0.9]);
        let a = CenterAssignment::from_rows(vec![0, 1], vec![vec![1, 0, 1, 0], vec![0, 1, 1, 0]])
            .unwrap();
        let w = WeightVector::uniform(2);
        let batch = [
            LossSample {
                code: &b1,
                assignment: &a,
                weights: &w,
            },
            LossSample {
                code: &b2,
                assignment: &a,
                weights: &w,
            },
        ];
        let cfg = LossConfig::<f64>::default();
        let parts = total_loss(&batch, &cfg).unwrap();
        assert_eq!(
            parts.total - (parts.j1 + cfg.gamma * parts.jq + cfg.lambda * parts.r),
            0.0
        );
        assert!((parts.r + 2.0 * 2f64.ln()).abs() < 1e-12);

        let ablated = LossConfig {
            gamma: 0.0,
            lambda: 0.0,
            ..cfg
        };
        let parts = total_loss(&batch, &ablated).unwrap();
        assert_eq!(parts.total, parts.j1);
    }

    #[test]
    fn quantization_gradient_is_zero_at_half() {
        let half = code(&[0.5; 3]);
        let a = CenterAssignment::from_rows(vec![0], vec![vec![1, 0, 1]]).unwrap();
        let w = WeightVector::new(vec![1.0]).unwrap();
        assert_eq!(quantization_grad(0.5f64), 0.0);
        let cfg = LossConfig {
            beta: 0.1,
            gamma: 0.05,
            lambda: 0.0,
            aggregation: Aggregation::PerImage,
        };
        let g = loss_gradient_wrt_codes(
            &[LossSample {
                code: &half,
                assignment: &a,
                weights: &w,
            }],
            &cfg,
        )
        .unwrap();
        // Only the central term remains: β σ(βΩ) (∓1/b).
        let omega = 3.0 * 2f64.ln();
        let s = 0.1 * sigmoid(0.1 * omega);
        assert!((g[0][0] + 2.0 * s).abs() < 1e-12);
        assert!((g[0][1] - 2.0 * s).abs() < 1e-12);
    }

    #[test]
    fn gradient_finite_at_perfect_match() {
        let center = vec![1u8, 0, 1, 1];
        let b = code(&[1.0, 0.0, 1.0, 1.0]);
        let a = CenterAssignment::from_rows(vec![0], vec![center]).unwrap();
        let w = WeightVector::new(vec![1.0]).unwrap();
        let cfg = LossConfig {
            beta: 1.0,
            gamma: 0.0,
            lambda: 0.0,
            aggregation: Aggregation::PerImage,
        };
        let g = loss_gradient_wrt_codes(
            &[LossSample {
                code: &b,
                assignment: &a,
                weights: &w,
            }],
            &cfg,
        )
        .unwrap();
        for &gk in &g[0] {
            assert!(gk.is_finite());
            // β σ(βΩ) / (1 - ε_b) with Ω ≈ 0.
            assert!(gk.abs() <= 0.51);
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = LossConfig::<f64>::default();
        assert!(cfg.validate().is_ok());
        cfg.beta = 2.0;
        assert!(cfg.validate().is_err());
        cfg.beta = 0.5;
        cfg.gamma = -1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn aggregation_names() {
        assert_eq!(
            "per-center".parse::<Aggregation>().unwrap(),
            Aggregation::PerCenter
        );
        assert_eq!(Aggregation::default().as_str(), "per-image");
    }
}
