//! Predictive-state (observable-operator) views of a tabular POMDP.
//!
//! A window-`m` view summarizes the future after step `h` by the
//! probabilities of *core tests*: length-`min(m, H−h)` observation
//! sequences under each action sequence one shorter. When every step
//! admits a certified left inverse `M⁺_h` of its window matrix, the
//! dynamics factor through the tests as linear operators
//!
//! ```text
//! B_h(o,a) = M_{h+1} · T_{h,a} · diag(O_h(o|·)) · M⁺_h,
//! P(τ, t) = e_tᵀ B_{h-1}(o_{h-1},a_{h-1}) ⋯ B_0(o_0,a_0) q_0,
//! ```
//!
//! with 0/1 prefix indicators once fewer than `m` steps remain. The
//! stability side asks how large `max_π Σ_τ π(τ)|B_{H:h}(τ)x|` can get
//! against `max{‖x‖_*, ‖x‖_{Π'}}`: the revealing chain bounds it by the
//! certified `α⁻¹`, and [`check_b_stability`] measures it probe by probe.
//! Here `‖x‖_{Π'}` is the policy-weighted ℓ1 norm over the tests,
//! `max_π̄ Σ_t π̄(t)|x(t)|`; for full product test sets no test strictly
//! extends another, so the maximum is the exact interleaved
//! sum-over-observations / max-over-actions recursion.

mod b_rep;
mod core_tests;
mod stability;

pub use b_rep::{
    build_brep, numerical_psr_rank, predictive_state_from_model, verify_factorization,
    BRepresentation,
};
pub use core_tests::{core_tests, TestSet};
pub use stability::{
    check_b_stability, policy_weighted_norm, standard_probes, ProbeOutcome, StabilityProbe,
    StabilityReport,
};
