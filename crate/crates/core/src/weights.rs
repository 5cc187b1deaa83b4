//! Per-sample center weights on the probability simplex.
//!
//! Each training sample with `c` positive labels owns a weight vector `w` on
//! the `c`-simplex. Given the sample's distances `d` to its `c` centers, the
//! weights minimize
//!
//! ```text
//! F(w) = softplus(β · Σ w_j d_j) + λ · Σ w_j log w_j
//! ```
//!
//! by projected gradient descent: a gradient step followed by the exact
//! Euclidean projection onto the simplex.

use std::fmt;
use std::str::FromStr;

use crate::error::{IcsError, Result};
use crate::scalar::{sigmoid, softplus, Scalar};

/// Floor applied to weights before taking a logarithm.
pub const DEFAULT_WEIGHT_FLOOR: f64 = 1e-8;

/// Armijo sufficient-decrease constant for [`StepRule::Spectral`].
const ARMIJO_C: f64 = 1e-4;
/// Backtracking stops once the trial step has shrunk by this factor.
const MIN_STEP_RATIO: f64 = 1e-14;

fn simplex_tolerance<T: Scalar>(c: usize) -> T {
    // 1e-9 in double precision; scaled machine epsilon for narrower floats.
    let scaled = T::epsilon() * T::from_usize_lossy(4 * c.max(1));
    scaled.max(T::lit(1e-9))
}

/// A point on the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector<T>(Vec<T>);

impl<T: Scalar> WeightVector<T> {
    /// Validates `w_j ≥ 0` and `Σ w_j = 1`.
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(IcsError::Argument("weight vector must be nonempty".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < T::zero()) {
            return Err(IcsError::Argument(format!(
                "weights must be finite and nonnegative: {values:?}"
            )));
        }
        let sum: T = values.iter().copied().sum();
        if (sum - T::one()).abs() > simplex_tolerance(values.len()) {
            return Err(IcsError::Argument(format!("weights sum to {sum}, not 1")));
        }
        Ok(WeightVector(values))
    }

    /// `(1/c, …, 1/c)`.
    pub fn uniform(c: usize) -> Self {
        assert!(c > 0, "uniform weights need c >= 1");
        let v = T::one() / T::from_usize_lossy(c);
        WeightVector(vec![v; c])
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

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }
}

impl<T> std::ops::Index<usize> for WeightVector<T> {
    type Output = T;

    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

/// Distances of one relaxed code to each of its centers.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceVector<T>(Vec<T>);

impl<T: Scalar> DistanceVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(IcsError::Argument(
                "distance vector must be nonempty".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite() || *v < T::zero()) {
            return Err(IcsError::Argument(format!(
                "distances must be finite and nonnegative: {values:?}"
            )));
        }
        Ok(DistanceVector(values))
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

    pub fn min(&self) -> T {
        self.0.iter().copied().fold(T::infinity(), T::min)
    }
}

/// Which gradient the solver descends along.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GradientMode {
    /// `-w_j / (1 + exp(w_j d_j)) + λ (1 + log w_j)`, coordinate-wise as
    /// published with the original algorithm.
    Paper,
    /// The analytic gradient of `F`.
    Exact,
}

impl GradientMode {
    pub fn as_str(self) -> &'static str {
        match self {
            GradientMode::Paper => "paper",
            GradientMode::Exact => "exact",
        }
    }
}

impl fmt::Display for GradientMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GradientMode {
    type Err = IcsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(GradientMode::Paper),
            "exact" => Ok(GradientMode::Exact),
            other => Err(IcsError::Argument(format!(
                "unknown gradient mode `{other}`"
            ))),
        }
    }
}

/// Step-length rule for the projected gradient iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StepRule {
    /// Every step has length `eta`.
    Fixed,
    /// First step `eta`, later steps the Barzilai–Borwein length
    /// `⟨s,s⟩/⟨s,y⟩`; each step is halved until the Armijo condition on `F`
    /// holds, so the objective never increases.
    Spectral,
}

impl StepRule {
    pub fn as_str(self) -> &'static str {
        match self {
            StepRule::Fixed => "fixed",
            StepRule::Spectral => "spectral",
        }
    }
}

impl fmt::Display for StepRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StepRule {
    type Err = IcsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(StepRule::Fixed),
            "spectral" => Ok(StepRule::Spectral),
            other => Err(IcsError::Argument(format!("unknown step rule `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightSolverConfig<T> {
    /// Entropy strength `λ`.
    pub lambda: T,
    /// Step size `η`.
    pub eta: T,
    /// Sigmoid bandwidth `β`; only the exact gradient uses it.
    pub beta: T,
    pub max_iters: usize,
    /// Stop once `|F_t - F_{t-1}| / max(|F_{t-1}|, 1) < tol`.
    pub tol: T,
    pub gradient_mode: GradientMode,
    pub step_rule: StepRule,
    pub weight_floor: T,
}

impl<T: Scalar> Default for WeightSolverConfig<T> {
    /// The published update: coordinate-wise gradient, fixed `η = 0.1`.
    fn default() -> Self {
        WeightSolverConfig {
            lambda: T::lit(0.01),
            eta: T::lit(0.1),
            beta: T::lit(0.1),
            max_iters: 50,
            tol: T::lit(1e-6),
            gradient_mode: GradientMode::Paper,
            step_rule: StepRule::Fixed,
            weight_floor: T::lit(DEFAULT_WEIGHT_FLOOR),
        }
    }
}

impl<T: Scalar> WeightSolverConfig<T> {
    /// Exact gradient of `F` with the monotone spectral step rule.
    pub fn exact(beta: T, lambda: T) -> Self {
        WeightSolverConfig {
            lambda,
            beta,
            gradient_mode: GradientMode::Exact,
            step_rule: StepRule::Spectral,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: T| v.is_finite() && v > T::zero();
        if !(self.lambda.is_finite() && self.lambda >= T::zero()) {
            return Err(IcsError::Argument(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if !positive(self.eta) {
            return Err(IcsError::Argument(format!(
                "eta must be > 0, got {}",
                self.eta
            )));
        }
        if !positive(self.beta) {
            return Err(IcsError::Argument(format!(
                "beta must be > 0, got {}",
                self.beta
            )));
        }
        if !positive(self.tol) {
            return Err(IcsError::Argument(format!(
                "tol must be > 0, got {}",
                self.tol
            )));
        }
        if self.max_iters == 0 {
            return Err(IcsError::Argument("max_iters must be >= 1".into()));
        }
        if !(positive(self.weight_floor) && self.weight_floor < T::one()) {
            return Err(IcsError::Argument(format!(
                "weight_floor must lie in (0, 1), got {}",
                self.weight_floor
            )));
        }
        Ok(())
    }
}

/// Euclidean projection of `v` onto the probability simplex.
///
/// Sorts `v` in descending order into `q`, finds the largest `ρ` with
/// `q_ρ + (1 - Σ_{i≤ρ} q_i)/ρ > 0`, and shifts every entry by
/// `ξ = (1 - Σ_{i≤ρ} q_i)/ρ` before clipping at zero.
pub fn project_to_simplex<T: Scalar>(v: &[T]) -> Result<WeightVector<T>> {
    if v.is_empty() {
        return Err(IcsError::Argument("cannot project an empty vector".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(IcsError::Argument(format!(
            "non-finite projection input: {v:?}"
        )));
    }
    let mut q = v.to_vec();
    // Stable: equal values keep their original order.
    q.sort_by(|a, b| b.partial_cmp(a).expect("finite"));

    // Points already on the simplex up to rounding are returned as is, so the
    // projection is exactly idempotent. Summing in sorted order keeps the
    // test independent of the input permutation.
    let sum: T = q.iter().copied().sum();
    let slack = T::lit(4.0) * T::from_usize_lossy(v.len()) * T::epsilon();
    if q[q.len() - 1] >= T::zero() && (sum - T::one()).abs() <= slack {
        return Ok(WeightVector(v.to_vec()));
    }

    let mut cumsum = T::zero();
    let mut rho = 0usize;
    let mut rho_sum = T::zero();
    for (j, &qj) in q.iter().enumerate() {
        cumsum = cumsum + qj;
        let n = T::from_usize_lossy(j + 1);
        if qj + (T::one() - cumsum) / n > T::zero() {
            rho = j + 1;
            rho_sum = cumsum;
        }
    }
    // j = 1 always qualifies, so rho >= 1.
    let xi = (T::one() - rho_sum) / T::from_usize_lossy(rho);
    let w = v.iter().map(|&x| (x + xi).max(T::zero())).collect();
    Ok(WeightVector(w))
}

/// `Σ_j w_j log w_j` with every weight floored at [`DEFAULT_WEIGHT_FLOOR`].
pub fn entropy_regularizer<T: Scalar>(w: &WeightVector<T>) -> T {
    entropy_regularizer_floored(w.as_slice(), T::lit(DEFAULT_WEIGHT_FLOOR))
}

pub fn entropy_regularizer_floored<T: Scalar>(w: &[T], floor: T) -> T {
    w.iter()
        .map(|&x| {
            let x = x.max(floor);
            x * x.ln()
        })
        .sum()
}

/// The per-sample objective `F(w)` reported in every solver trace.
pub fn weight_objective<T: Scalar>(w: &[T], d: &[T], cfg: &WeightSolverConfig<T>) -> T {
    let omega: T = w.iter().zip(d).map(|(&wj, &dj)| wj * dj).sum();
    softplus(cfg.beta * omega) + cfg.lambda * entropy_regularizer_floored(w, cfg.weight_floor)
}

/// Gradient of the weight subproblem at `w` (see [`GradientMode`]).
pub fn weight_gradient<T: Scalar>(
    w: &WeightVector<T>,
    d: &DistanceVector<T>,
    cfg: &WeightSolverConfig<T>,
) -> Result<Vec<T>> {
    if w.len() != d.len() {
        return Err(IcsError::Argument(format!(
            "{} weights for {} distances",
            w.len(),
            d.len()
        )));
    }
    gradient_raw(w.as_slice(), d.as_slice(), cfg)
}

fn gradient_raw<T: Scalar>(w: &[T], d: &[T], cfg: &WeightSolverConfig<T>) -> Result<Vec<T>> {
    let lambda = cfg.lambda;
    let log_term = |wj: T| -> Result<T> {
        let clamped = wj.max(cfg.weight_floor);
        if clamped <= T::zero() || clamped.is_nan() {
            return Err(IcsError::Invariant(format!(
                "weight {wj} is not positive after flooring at {}",
                cfg.weight_floor
            )));
        }
        Ok(lambda * (T::one() + clamped.ln()))
    };
    match cfg.gradient_mode {
        GradientMode::Paper => w
            .iter()
            .zip(d)
            .map(|(&wj, &dj)| {
                // 1 / (1 + exp(w d)) == sigmoid(-w d)
                Ok(-wj * sigmoid(-wj * dj) + log_term(wj)?)
            })
            .collect(),
        GradientMode::Exact => {
            let omega: T = w.iter().zip(d).map(|(&wj, &dj)| wj * dj).sum();
            let s = sigmoid(cfg.beta * omega);
            w.iter()
                .zip(d)
                .map(|(&wj, &dj)| Ok(cfg.beta * dj * s + log_term(wj)?))
                .collect()
        }
    }
}

/// Result of one weight solve.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSolution<T> {
    pub weights: WeightVector<T>,
    /// Number of gradient-plus-projection steps taken.
    pub iterations: usize,
    /// `F` at the starting point followed by `F` after every step.
    pub objective_trace: Vec<T>,
    /// Whether the relative-change test fired before `max_iters`.
    pub converged: bool,
}

/// Solves for a sample's weights starting from the uniform vector.
pub fn solve_weights<T: Scalar>(
    d: &DistanceVector<T>,
    cfg: &WeightSolverConfig<T>,
) -> Result<WeightSolution<T>> {
    if d.is_empty() {
        return Err(IcsError::Argument(
            "cannot solve weights for zero centers".into(),
        ));
    }
    solve_weights_from(&WeightVector::uniform(d.len()), d, cfg)
}

/// Solves for a sample's weights starting from `init`.
pub fn solve_weights_from<T: Scalar>(
    init: &WeightVector<T>,
    d: &DistanceVector<T>,
    cfg: &WeightSolverConfig<T>,
) -> Result<WeightSolution<T>> {
    cfg.validate()?;
    if init.len() != d.len() {
        return Err(IcsError::Argument(format!(
            "{} initial weights for {} distances",
            init.len(),
            d.len()
        )));
    }
    let d = d.as_slice();
    let mut w = init.as_slice().to_vec();
    let mut f = weight_objective(&w, d, cfg);
    let mut trace = Vec::with_capacity(cfg.max_iters + 1);
    trace.push(f);
    let mut g = gradient_raw(&w, d, cfg)?;
    let mut step = cfg.eta;
    let min_step = cfg.eta * T::lit(MIN_STEP_RATIO);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_iters {
        let trial = |step: T| -> Result<(Vec<T>, T)> {
            let moved: Vec<T> = w.iter().zip(&g).map(|(&wj, &gj)| wj - step * gj).collect();
            let next = project_to_simplex(&moved)?.into_vec();
            let f_next = weight_objective(&next, d, cfg);
            Ok((next, f_next))
        };

        let (next, f_next) = match cfg.step_rule {
            StepRule::Fixed => trial(step)?,
            StepRule::Spectral => {
                let mut accepted = None;
                while step >= min_step {
                    let (next, f_next) = trial(step)?;
                    let descent: T = next
                        .iter()
                        .zip(&w)
                        .zip(&g)
                        .map(|((&a, &b), &gj)| gj * (a - b))
                        .sum();
                    if f_next <= f + T::lit(ARMIJO_C) * descent {
                        accepted = Some((next, f_next));
                        break;
                    }
                    step = step * T::lit(0.5);
                }
                match accepted {
                    Some(pair) => pair,
                    None => {
                        // No descent left along the projected arc: stationary.
                        converged = true;
                        break;
                    }
                }
            }
        };

        iterations += 1;
        trace.push(f_next);
        let rel = (f_next - f).abs() / f.abs().max(T::one());

        let g_next = gradient_raw(&next, d, cfg)?;
        if cfg.step_rule == StepRule::Spectral {
            let mut ss = T::zero();
            let mut sy = T::zero();
            for j in 0..next.len() {
                let s = next[j] - w[j];
                ss = ss + s * s;
                sy = sy + s * (g_next[j] - g[j]);
            }
            step = if sy > T::zero() {
                (ss / sy).max(T::lit(1e-10)).min(T::lit(1e10))
            } else {
                cfg.eta
            };
        }
        w = next;
        g = g_next;
        f = f_next;
        if rel < cfg.tol {
            converged = true;
            break;
        }
    }

    let weights = WeightVector::new(w).map_err(|e| IcsError::Invariant(e.to_string()))?;
    Ok(WeightSolution {
        weights,
        iterations,
        objective_trace: trace,
        converged,
    })
}
