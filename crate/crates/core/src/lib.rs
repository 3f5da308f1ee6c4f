//! Online binary accept/reject decisions under one-sided feedback.
//!
//! The crate models the bank-loan problem: a learner sees batches of
//! applicants, accepts or rejects each one, and only observes the outcome of
//! the applicants it accepted. It provides
//!
//! - [`env`]: the environment that hides labels and keeps regret books,
//! - [`scorer`]: linear and two-hidden-layer tanh scorers with exact gradients,
//! - [`plot`]: the pseudo-label optimism policy (PLOT),
//! - [`baselines`]: greedy, decayed ε-greedy and a diagonal NeuralUCB surrogate,
//! - [`data`]: UCI Adult/Bank and MNIST loaders plus synthetic generators,
//! - [`harness`]: seeded multi-run experiments with CSV/JSON output,
//! - [`theory`]: numeric checks of the supporting inequalities.

// `!(x > 0.0)` is used on purpose so NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod data;
pub mod env;
pub mod error;
pub mod harness;
pub mod plot;
pub mod policy;
pub mod scorer;
pub mod theory;

pub use error::{Error, Result};
pub use policy::{Decision, Policy};
pub use scorer::{
    link, Arch, FeatureVector, LabeledDataset, LabeledPoint, Optimizer, ScorerParams,
    TrainConfig,
};

/// Seeded PRNG used everywhere a run needs randomness.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the crate's PRNG from a `u64` seed.
pub fn seeded_rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}
