//! Learning algorithms and the sampling boundary they run behind.
//!
//! [`env::EnvironmentHandle`] is the only door between a learner and a
//! model: it plays policies, returns observation/action/reward episodes
//! with the latent state struck out, and keeps the exact per-episode regret
//! trace on its own side of the wall. Everything a learner reports —
//! findings, event counts, survival flags — is a function of those episodes
//! alone.
//!
//! On top of the handle:
//!
//! - [`uniformity`] — collision-based uniformity testing at a prescribed
//!   total-variation gap, with `√D/t²` batch sizes, median amplification,
//!   and an empirical calibration of the minimal batch.
//! - [`bruteforce`] — the exhaustive two-stage scan that turns the planted
//!   families' "one far cell, everything else exactly uniform" structure
//!   into an identification procedure.
//! - [`omle`] — optimistic maximum-likelihood over a finite model class,
//!   scored by a forward belief filter.
//! - [`ete`] — explore-then-exploit: fit the scan into a fraction of an
//!   episode allowance, then commit.

pub mod bruteforce;
pub mod env;
pub mod ete;
pub mod omle;
pub mod uniformity;

pub use bruteforce::{
    bruteforce_budget, bruteforce_learn, bruteforce_learn_with, BruteforceBudget, BruteforceConfig,
};
pub use env::{EnvironmentHandle, Episode, EventTally, Finding, LearnerReport};
pub use ete::{explore_then_exploit, explore_then_exploit_with};
pub use omle::{
    family_model_class, log_likelihood, omle, omle_beta, ConfidenceSet, OmleModel, DEFAULT_BETA_C,
};
pub use uniformity::{
    calibrate_min_batch, collision_midpoint, collision_statistic, collision_uniformity_test,
    collision_uniformity_test_with, median_collision_statistic, TesterConfig, UniformityPlan,
    UniformityVerdict,
};
