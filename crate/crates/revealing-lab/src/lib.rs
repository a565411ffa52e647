//! A desk-scale laboratory for *revealing* POMDPs.
//!
//! Everything here is built around tabular finite-horizon POMDPs in which the
//! emission process leaks enough information about the latent state that the
//! model is learnable: the `m`-step emission-action matrices admit generalized
//! left inverses with bounded `(*→1)` operator norm. The crate provides, end
//! to end:
//!
//! * exact tabular POMDP machinery — sampling, trajectory-distribution
//!   enumeration, policy evaluation, brute-force optimal planning
//!   ([`pomdp`]);
//! * revealing-condition certification by explicit matrix computation —
//!   emission-action matrices, the star norm and its `(*→1)` operator norm,
//!   block-structured generalized inverses and window-lifting ([`revealing`]);
//! * three families of combination-lock hard instances (single-step,
//!   multi-step regret, multi-step PAC) with closed-form optimal values and
//!   certified revealing constants ([`instances`]);
//! * observable-operator (predictive-state) representations with verified
//!   factorizations and stability diagnostics ([`psr`]);
//! * learning algorithms at the scale the instances allow: a collision-based
//!   uniformity tester, a two-stage brute-force learner for the PAC family,
//!   optimistic MLE, and an explore-then-exploit baseline ([`learners`]);
//! * finite-space information-theoretic identities checked by exhaustive
//!   enumeration: f-divergences, the mixture-vs-null chi-square identity, and
//!   chi-square inner-product bounds ([`divergence`]);
//! * seeded, CSV-producing experiment drivers behind both a config-file API
//!   and the `rlab` command-line tool ([`exp`], [`cli`]).
//!
//! # Runnable examples
//!
//! Each major capability has a runnable example under `examples/`:
//!
//! | example | shows |
//! |---|---|
//! | `build_families` | constructing all three hard-instance families, metadata, serialization round-trip |
//! | `certify_revealing` | per-step inverse certificates, lift chains, the non-revealing witness |
//! | `value_formulas` | brute-force optimal values vs the closed forms, suboptimality lower bounds |
//! | `b_representation` | observable-operator factorization and stability reports |
//! | `divergence_identities` | divergence inequalities, the mixture chi-square identity, inner-product bounds |
//! | `uniformity_testing` | collision tester calibration and error rates |
//! | `bruteforce_learner` | the two-stage learner identifying a hidden lock |
//! | `omle_demo` | optimistic MLE vs a random baseline, regret traces |
//! | `scaling_laws` | calibrated budgets vs domain size and emission gap |
//! | `calibration` | the one-time experiment fixing the tester/OMLE constants |
//!
//! Run one with `cargo run --release --example certify_revealing`.
//!
//! # Conventions
//!
//! Steps, states, observations and actions are 0-based `usize` indices
//! everywhere in code; human-readable labels live in
//! [`pomdp::TabularPomdp::states`] and friends. A trajectory at horizon `H`
//! is `(o_0, a_0, …, o_{H-1}, a_{H-1})`; transitions act between consecutive
//! steps, so there are `H−1` transition tensors and `H` emission matrices.
//! All argmax operations break ties lexicographically (smallest index wins)
//! so that every run is reproducible from its seed.

pub mod cli;
pub mod divergence;
pub mod error;
pub mod exp;
pub mod instances;
pub mod learners;
pub mod pomdp;
pub mod psr;
pub mod revealing;
pub mod util;

pub use error::{LabError, Result};
