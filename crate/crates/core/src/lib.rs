//! Fixed-confidence best-arm identification when historical (offline) samples
//! are available before adaptive (online) sampling starts.
//!
//! - [`spef`]: KL primitives for Bernoulli and unit-variance Gaussian arms.
//! - [`oracle`]: lower-bound allocation solvers and optimality checks.
//! - [`tas`]: the batched Track-and-Stop sampler with GLRT stopping.
//! - [`baselines`]: LUCB, artificial replay and an offline-aware UCB for regret.
//! - [`harness`]: offline data generation, Monte-Carlo sweeps and reporting.

pub mod baselines;
pub mod harness;
pub mod oracle;
pub mod rewards;
pub mod spef;
pub mod tas;
