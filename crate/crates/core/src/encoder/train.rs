//! Two-step alternating optimization.
//!
//! Per batch: (1) with the encoder frozen, compute codes and center
//! distances and re-solve every sample's center weights; (2) with the weights
//! frozen, backpropagate the total loss and take one Adam step.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{backward_from_trace, forward_trace, AdamConfig, AdamState, EncoderParams};
use crate::centers::HashCenterSet;
use crate::data::Dataset;
use crate::error::{IcsError, Result};
use crate::loss::{
    center_distances, loss_gradient_wrt_codes, total_loss, CenterAssignment, LossConfig, LossSample,
};
use crate::scalar::Scalar;
use crate::weights::{solve_weights_from, DistanceVector, WeightSolverConfig, WeightVector};

/// Whether center weights are learned or pinned at `1/c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WeightMode {
    Learned,
    /// Equal weights `1/c_i`, never re-solved.
    Equal,
}

impl WeightMode {
    pub fn as_str(self) -> &'static str {
        match self {
            WeightMode::Learned => "learned",
            WeightMode::Equal => "equal",
        }
    }
}

impl fmt::Display for WeightMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WeightMode {
    type Err = IcsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "learned" => Ok(WeightMode::Learned),
            "equal" => Ok(WeightMode::Equal),
            other => Err(IcsError::Argument(format!("unknown weight mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig<T> {
    pub epochs: usize,
    pub batch_size: usize,
    /// Hidden layer widths between the input and the code layer.
    pub hidden: Vec<usize>,
    pub adam: AdamConfig<T>,
    /// The learning rate is divided by `lr_decay_factor` every
    /// `lr_decay_every` epochs.
    pub lr_decay_every: usize,
    pub lr_decay_factor: T,
    pub loss: LossConfig<T>,
    /// Weight solver settings. Its `lambda` and `beta` are overwritten with
    /// the loss values so that both steps optimize the same objective.
    pub solver: WeightSolverConfig<T>,
    pub weight_mode: WeightMode,
    pub seed: u64,
}

impl<T: Scalar> Default for TrainConfig<T> {
    fn default() -> Self {
        TrainConfig {
            epochs: 90,
            batch_size: 64,
            hidden: vec![64],
            adam: AdamConfig::default(),
            lr_decay_every: 30,
            lr_decay_factor: T::lit(10.0),
            loss: LossConfig::default(),
            solver: WeightSolverConfig::default(),
            weight_mode: WeightMode::Learned,
            seed: 0,
        }
    }
}

impl<T: Scalar> TrainConfig<T> {
    /// Learning rate in effect during `epoch` (0-based).
    pub fn learning_rate(&self, epoch: usize) -> T {
        if self.lr_decay_every == 0 {
            return self.adam.lr0;
        }
        let drops = i32::try_from(epoch / self.lr_decay_every).unwrap_or(i32::MAX);
        self.adam.lr0 / self.lr_decay_factor.powi(drops)
    }

    /// The solver configuration actually used during training.
    pub fn effective_solver(&self) -> WeightSolverConfig<T> {
        WeightSolverConfig {
            lambda: self.loss.lambda,
            beta: self.loss.beta,
            ..self.solver
        }
    }

    pub fn layer_sizes(&self, d_features: usize, k_bits: usize) -> Vec<usize> {
        let mut sizes = vec![d_features];
        sizes.extend(&self.hidden);
        sizes.push(k_bits);
        sizes
    }

    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(IcsError::Argument("batch_size must be >= 1".into()));
        }
        if self.adam.lr0.is_nan() || self.adam.lr0 <= T::zero() {
            return Err(IcsError::Argument("learning rate must be > 0".into()));
        }
        if self.lr_decay_factor.is_nan() || self.lr_decay_factor <= T::zero() {
            return Err(IcsError::Argument("lr_decay_factor must be > 0".into()));
        }
        self.loss.validate()?;
        self.effective_solver().validate()
    }
}

/// Loss decomposition summed over one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss<T> {
    pub epoch: usize,
    pub total: T,
    pub j1: T,
    pub jq: T,
    pub r: T,
    /// Mean solver iterations per weight solve (0 in equal-weight mode).
    pub mean_solver_iters: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState<T> {
    pub params: EncoderParams<T>,
    pub adam: AdamState<T>,
    /// One weight vector per training sample, aligned with its positive
    /// labels in ascending order.
    pub weight_table: Vec<WeightVector<T>>,
    pub loss_history: Vec<EpochLoss<T>>,
}

fn assignments<T: Scalar>(
    dataset: &Dataset<T>,
    centers: &HashCenterSet,
) -> Result<Vec<CenterAssignment>> {
    dataset
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if s.labels.len() != centers.m_labels() {
                return Err(IcsError::Config(format!(
                    "sample {i} has {} labels but there are {} centers",
                    s.labels.len(),
                    centers.m_labels()
                )));
            }
            let labels = s.positive_labels();
            if labels.is_empty() {
                return Err(IcsError::Data(format!("sample {i} has no positive label")));
            }
            CenterAssignment::new(labels, centers)
        })
        .collect()
}

/// Trains an encoder on `dataset` towards `centers`.
pub fn train<T: Scalar>(
    dataset: &Dataset<T>,
    centers: &HashCenterSet,
    cfg: &TrainConfig<T>,
) -> Result<TrainState<T>> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(IcsError::Data("training set is empty".into()));
    }
    if dataset.m_labels != centers.m_labels() {
        return Err(IcsError::Config(format!(
            "dataset has {} labels but there are {} centers",
            dataset.m_labels,
            centers.m_labels()
        )));
    }
    let assignments = assignments(dataset, centers)?;
    let sizes = cfg.layer_sizes(dataset.d_features, centers.k_bits());
    let params = EncoderParams::init(&sizes, cfg.seed)?;
    let mut state = TrainState {
        adam: AdamState::new(&params),
        params,
        weight_table: assignments
            .iter()
            .map(|a| WeightVector::uniform(a.len()))
            .collect(),
        loss_history: Vec::with_capacity(cfg.epochs),
    };

    let solver = cfg.effective_solver();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1);
    let mut order: Vec<usize> = (0..dataset.len()).collect();

    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate(epoch);
        order.shuffle(&mut shuffle_rng);
        let mut acc = EpochLoss {
            epoch,
            total: T::zero(),
            j1: T::zero(),
            jq: T::zero(),
            r: T::zero(),
            mean_solver_iters: 0.0,
        };
        let mut solves = 0usize;
        let mut solver_iters = 0usize;

        for batch in order.chunks(cfg.batch_size) {
            // Step 1: encoder frozen.
            let traced = batch
                .par_iter()
                .map(|&i| forward_trace(&state.params, &dataset.samples[i].features))
                .collect::<Result<Vec<_>>>()?;

            if cfg.weight_mode == WeightMode::Learned {
                let solved = batch
                    .par_iter()
                    .zip(&traced)
                    .map(|(&i, (code, _))| {
                        let d = DistanceVector::new(center_distances(code, &assignments[i])?)?;
                        solve_weights_from(&state.weight_table[i], &d, &solver)
                    })
                    .collect::<Result<Vec<_>>>()?;
                for (&i, sol) in batch.iter().zip(solved) {
                    solves += 1;
                    solver_iters += sol.iterations;
                    state.weight_table[i] = sol.weights;
                }
            }

            // Step 2: weights frozen.
            let samples: Vec<LossSample<'_, T>> = batch
                .iter()
                .zip(&traced)
                .map(|(&i, (code, _))| LossSample {
                    code,
                    assignment: &assignments[i],
                    weights: &state.weight_table[i],
                })
                .collect();
            let parts = total_loss(&samples, &cfg.loss)?;
            let code_grads = loss_gradient_wrt_codes(&samples, &cfg.loss)?;
            let per_sample = traced
                .par_iter()
                .zip(&code_grads)
                .map(|((_, trace), g)| backward_from_trace(&state.params, trace, g))
                .collect::<Result<Vec<_>>>()?;
            let mut grads = state.params.zeros_like();
            for g in &per_sample {
                grads.add_assign(g);
            }
            super::adam_step(&mut state.params, &mut state.adam, &grads, lr, &cfg.adam)?;

            acc.total = acc.total + parts.total;
            acc.j1 = acc.j1 + parts.j1;
            acc.jq = acc.jq + parts.jq;
            acc.r = acc.r + parts.r;
        }

        if solves > 0 {
            acc.mean_solver_iters = solver_iters as f64 / solves as f64;
        }
        if !(acc.total.is_finite() && state.params.is_finite()) {
            return Err(IcsError::Invariant(format!(
                "non-finite loss or parameters in epoch {epoch}"
            )));
        }
        state.loss_history.push(acc);
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::centers::generate_centers;
    use crate::data::{generate_synthetic, SyntheticSpec};

    fn toy(labels: (usize, usize), seed: u64) -> Dataset<f64> {
        generate_synthetic(&SyntheticSpec {
            n_samples: 120,
            d_features: 8,
            m_labels: 4,
            labels_per_sample: labels,
            dirichlet_alpha: 1.0,
            noise_sigma: 0.05,
            seed,
        })
        .unwrap()
    }

    fn quick_cfg() -> TrainConfig<f64> {
        TrainConfig {
            epochs: 5,
            batch_size: 32,
            hidden: vec![16],
            adam: AdamConfig {
                lr0: 1e-2,
                ..AdamConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_return_initial_state() {
        let ds = toy((1, 2), 0);
        let centers = generate_centers(16, 4, 0).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..quick_cfg()
        };
        let st = train(&ds, &centers, &cfg).unwrap();
        assert!(st.loss_history.is_empty());
        assert_eq!(
            st.params,
            EncoderParams::init(&[8, 16, 16], cfg.seed).unwrap()
        );
        for (w, s) in st.weight_table.iter().zip(&ds.samples) {
            assert_eq!(w, &WeightVector::uniform(s.n_positive()));
        }
    }

    #[test]
    fn equal_and_learned_agree_on_single_label_data() {
        let ds = toy((1, 1), 4);
        let centers = generate_centers(16, 4, 1).unwrap();
        let learned = train(&ds, &centers, &quick_cfg()).unwrap();
        let equal = train(
            &ds,
            &centers,
            &TrainConfig {
                weight_mode: WeightMode::Equal,
                ..quick_cfg()
            },
        )
        .unwrap();
        assert_eq!(learned.params, equal.params);
        assert_eq!(learned.weight_table, equal.weight_table);
    }

    #[test]
    fn training_is_reproducible() {
        let ds = toy((1, 3), 2);
        let centers = generate_centers(16, 4, 3).unwrap();
        let a = train(&ds, &centers, &quick_cfg()).unwrap();
        let b = train(&ds, &centers, &quick_cfg()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn equal_mode_keeps_uniform_weights() {
        let ds = toy((1, 3), 6);
        let centers = generate_centers(16, 4, 3).unwrap();
        let st = train(
            &ds,
            &centers,
            &TrainConfig {
                weight_mode: WeightMode::Equal,
                ..quick_cfg()
            },
        )
        .unwrap();
        for (w, s) in st.weight_table.iter().zip(&ds.samples) {
            assert_eq!(w, &WeightVector::uniform(s.n_positive()));
        }
        assert!(st.loss_history.iter().all(|e| e.mean_solver_iters == 0.0));
    }

    #[test]
    fn learning_rate_schedule() {
        let cfg = TrainConfig::<f64>::default();
        assert_eq!(cfg.learning_rate(0), 1e-4);
        assert_eq!(cfg.learning_rate(29), 1e-4);
        assert!((cfg.learning_rate(30) - 1e-5).abs() < 1e-20);
        assert!((cfg.learning_rate(89) - 1e-6).abs() < 1e-20);
    }

    #[test]
    fn shape_and_label_errors() {
        let ds = toy((1, 2), 0);
        let wrong_m = generate_centers(16, 5, 0).unwrap();
        assert!(matches!(
            train(&ds, &wrong_m, &quick_cfg()),
            Err(IcsError::Config(_))
        ));

        let mut bad = ds.clone();
        bad.samples[7].labels = vec![false; 4];
        let centers = generate_centers(16, 4, 0).unwrap();
        match train(&bad, &centers, &quick_cfg()) {
            Err(IcsError::Data(msg)) => assert!(msg.contains("sample 7"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
