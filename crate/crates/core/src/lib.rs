//! Decentralized stochastic optimization over gossip networks with
//! communication compression.
//!
//! The crate simulates n agents that each hold a private smooth objective
//! f_i and cooperate to minimize f(θ) = (1/n) Σ_i f_i(θ) by exchanging
//! compressed messages with their neighbors under a doubly stochastic mixing
//! matrix W. The main algorithm combines three mechanisms:
//!
//! - **doubly compressed gossip**: both the iterate θ and the tracked
//!   gradient g travel through the network as compressed residuals against
//!   replicated reference copies, so per-round traffic is a fraction δ of a
//!   dense exchange;
//! - **gradient tracking**: each agent maintains g_i so that the network
//!   average of g always equals the network average of the momentum
//!   estimators, giving every agent an estimate of the global descent
//!   direction;
//! - **momentum variance reduction**: a hybrid recursive estimator
//!   v ← β∇f̂(θ') + (1−β)(v + ∇f̂(θ') − ∇f̂(θ)) with both gradients drawn
//!   from the same minibatch.
//!
//! Baselines (plain decentralized SGD, compressed-gossip SGD, uncompressed
//! tracking with and without momentum) share the same state machinery so
//! that trajectories and communication budgets are directly comparable.
//!
//! Everything is deterministic given a 64-bit seed: random streams are
//! derived per (seed, agent, iteration, purpose), so neither thread count
//! nor evaluation order can change a trajectory.

pub mod algorithms;
pub mod compression;
pub mod engine;
mod error;
pub mod problems;
pub mod rng;
pub mod topology;

pub use algorithms::{
    choco_step, docom_init, docom_step, dsgd_step, hsgd_step, safe_step_sizes, theory_constants,
    tracking_step, AgentState, AlgorithmKind, HyperParams, InitBatch, NetworkState, SafeStepSizes,
    TheoryConstants,
};
pub use compression::{CompressorConfig, CompressorKind, CompressorSpec};
pub use engine::{
    lyapunov_diagnostic, momentum_variance_probe, run, run_observed, MetricsRecord, RunSetup,
    VarianceProbe,
};
pub use error::Error;
pub use problems::{
    estimate_lipschitz, generate_synthetic, quadratic::QuadraticProblem, sigmoid::LabelEncoding,
    sigmoid::SigmoidProblem, sigmoid::SyntheticConfig, sigmoid::SyntheticDataset, Problem,
    ProblemMeta,
};
pub use topology::{spectral_quantities, MixingMatrix};

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
