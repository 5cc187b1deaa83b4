//! Instance-weighted central similarity hashing.
//!
//! * [`centers`]: Sylvester–Hadamard matrices and hash-center sampling.
//! * [`weights`]: the per-sample center-weight solver (projected gradient on
//!   the simplex with an entropy regularizer).
//! * [`loss`]: BCE center distances, weighted central similarity, quantization
//!   loss and their code-level gradient.
//! * [`encoder`]: a small MLP hash function with hand-written backprop, Adam,
//!   and the alternating training loop.
//! * [`retrieval`]: bit-packed Hamming ranking and mAP@k / precision@k.
//! * [`data`]: dataset I/O and a synthetic multi-label generator.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix the common double-precision instantiation.

pub mod centers;
pub mod data;
pub mod encoder;
pub mod error;
pub mod loss;
pub mod retrieval;
pub mod scalar;
pub mod weights;

pub use centers::{
    generate_centers, min_pairwise_hamming, sylvester_hadamard, CenterStrategy, HashCenterSet,
};
pub use error::{IcsError, Result};
pub use scalar::Scalar;

pub type WeightVector64 = weights::WeightVector<f64>;
pub type DistanceVector64 = weights::DistanceVector<f64>;
pub type WeightSolverConfig64 = weights::WeightSolverConfig<f64>;
pub type RelaxedCode64 = loss::RelaxedCode<f64>;
pub type LossConfig64 = loss::LossConfig<f64>;
pub type EncoderParams64 = encoder::EncoderParams<f64>;
pub type TrainConfig64 = encoder::TrainConfig<f64>;
pub type TrainState64 = encoder::TrainState<f64>;
pub type Dataset64 = data::Dataset<f64>;

pub type WeightVector32 = weights::WeightVector<f32>;
pub type RelaxedCode32 = loss::RelaxedCode<f32>;
pub type EncoderParams32 = encoder::EncoderParams<f32>;
