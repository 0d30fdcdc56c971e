//! Federated multimodal graph learning for activity recognition with
//! client-level differential privacy, simulated on a single machine.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: dense matrices, a recorded gradient tape, optimizers, DCT
//! - [`dataio`]: MEx-layout loading, resampling, windowing, feature encoding,
//!   and a synthetic multimodal generator
//! - [`graph`]: per-modality window graphs and their normalized adjacency
//! - [`models`]: the multimodal GCN with attention fusion and the FFN baseline
//! - [`privacy`]: clipping, Gaussian noise, Rényi-DP accounting, σ calibration
//! - [`federated`]: client sampling, local DP training, FedAvg, centralized mode
//! - [`eval`]: metrics, embedding export, and the quadratic convergence testbed
//! - [`experiment`]: the config format and experiment runner behind the CLI
//!
//! Runnable walkthroughs of each layer live in `examples/`.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dataio;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod federated;
pub mod graph;
pub mod models;
pub mod numerics;
pub mod privacy;
pub mod rng;

pub use error::{Error, Result};
pub use numerics::Tensor2;
