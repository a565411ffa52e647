//! Observable-matrix analysis: windowed emission-action matrices, the
//! star-norm machinery, and certified generalized left inverses.
//!
//! For a window of `w` steps starting at step `h`, the observable matrix
//! `M ∈ R^{O^w·A^{w-1} × S}` collects
//! `P(o_{h:h+w-1} = o | s_h = s, do(a_{h:h+w-2} = a))`, with rows laid out
//! `act_idx · O^w + obs_idx` (big-endian sequence indices). A model is
//! `w`-step revealing when every such matrix admits a generalized left
//! inverse `M⁺` with `M⁺ M T = T` on the direction columns `T` of the
//! previous step (the initial distribution at `h = 0`), and the revealing
//! constant is controlled by the `(*→1)` operator norm
//! `‖M⁺‖_{*→1} = max_{‖x‖_* ≤ 1} ‖M⁺x‖₁`, where
//! `‖x‖_* = [Σ_a (Σ_o |x(o,a)|)²]^{1/2}`.
//!
//! Certification is constructive: each step searches base windows in
//! increasing order and action sequences lexicographically, partitions the
//! unmasked columns into support-connected components, inverts singleton
//! components by support indicators and two-column components by an exact
//! χ²-weighted closed form, embeds the result in a single action block, and
//! lifts it to the target window. Every certificate is then re-verified
//! directly at the target window, and its norm computed exactly.

mod certify;
mod inverse;
mod matrix;
mod norms;

pub use certify::{
    certificate_from_json, certificate_to_json, certify, certify_step, certify_with,
    non_revealing_witness, CertificateCheck, CertificateReport, Construction,
    NonRevealingWitness, StepCertificate, verify_certificate, CERT_FORMAT,
    DEFAULT_RESIDUAL_TOL,
};
pub use inverse::{
    block_left_inverse, chi2_pair_inverse, pinv_left_inverse, product_via_model,
    product_with_block, residual_on_transitions, LeftInverse, SparseEntry, CHI2_MIN,
};
pub use matrix::{column_probs, full_matrix, reachable_block, ReachableBlock};
pub use norms::{
    one_to_one_norm, star_dual_norm, star_norm, star_to_one_norm, star_to_one_search,
    StarToOne, MAX_SIGN_STATES,
};
