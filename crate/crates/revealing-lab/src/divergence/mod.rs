//! Exact information-theoretic accounting over finite trajectory spaces.
//!
//! Everything here treats distributions as finite lists of `(key, prob)`
//! pairs and computes expectations by exhaustive summation, so every
//! inequality the lab relies on can be checked to floating-point accuracy
//! rather than sampled. Three layers:
//!
//! - [`FiniteDistribution`] and [`divergences`] — total variation
//!   `½Σ|p−q|`, squared Hellinger `Σ(√p−√q)²`, `KL = Σ p ln(p/q)`, and
//!   `χ² = Σ p²/q − 1` between any two keyed distributions, plus the
//!   conditioning inequality `E_{X∼P}[H²(P_{Y|X}, Q_{Y|X})] ≤ 2 H²(P_{XY},
//!   Q_{XY})` via [`hellinger_conditioning_check`].
//! - [`ingster_check`] — the mixture-χ² identity behind every lower bound
//!   in the lab: for a prior `ζ` over planted models and *any* episode
//!   schedule (including adaptive ones),
//!   `1 + χ²(E_{M∼ζ}[P_M] ‖ P_0) = E_{M,M'∼ζ×ζ} E_0[∏_t ratio_{M,M'}(τᵗ)]`,
//!   verified by computing both sides along unrelated code paths.
//! - [`chi2_inner_product_check`] and [`i_profile`] — the per-instance
//!   moment accounting. A planted secret only distorts the trajectory
//!   measure inside observable *reveal* and *correct-guess* events
//!   ([`PlantedEvents`]); outside them the conditional likelihood-ratio
//!   moment `I(τ)` is exactly 1, and almost-sure visit budgets give
//!   `E_0[∏_t ratio] ≤ exp(N̄_o · C σ²ε²/K · |⟨μ,μ'⟩| + (4/3) C ε² N̄_r)`.
//!
//! The inner-product form is what turns a pair of coin-bias vectors into a
//! code-distance argument: anti-correlated `μ, μ'` make the mixture moment
//! collapse toward 1, which caps how fast any algorithm's posterior can
//! separate the planted instances.

mod dist;
mod ingster;
mod profile;

pub use dist::{
    divergences, hellinger_conditioning_check, DivergenceSet, FiniteDistribution,
    HellingerConditioningReport,
};
pub use ingster::{ingster_check, IngsterReport, Schedule};
pub use profile::{
    chi2_inner_product_check, i_profile, Chi2Report, EventBudgets, PlantedEvents, ProfileEntry,
    RevealMode,
};
