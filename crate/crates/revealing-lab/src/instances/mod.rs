//! Hard-instance families: binary-tree password search with coin-flip
//! signals, in three flavors.
//!
//! Each family plants a secret `θ = (h*, s*, a*, password)` into a
//! combination-lock POMDP built on a level-`n` binary tree. Exiting the
//! planted leaf with the planted action at the planted step leaks an `ε`
//! chance of reaching a lock state whose coin observations carry a `±σ`
//! bias pattern `μ`; every other exit leads to an unbiased twin with
//! identical dynamics. The families differ in *when* the coins can be
//! inspected:
//!
//! - [`single_step::SingleStepFamily`] — coins are visible every step, so
//!   the instance is 1-step revealing with `α⁻¹ ≤ 1 + 2/σ`.
//! - [`regret::RegretFamily`] — a block of dedicated reveal actions opens
//!   the lock only on a periodic schedule, making the instance
//!   `(stride+1)`-step revealing but not `stride`-step revealing.
//! - [`pac::PacFamily`] — the regret geometry with `L` parallel lock
//!   copies sharing the leaked mass, which scales the planted/null
//!   statistical distance down by `L` while keeping the certification
//!   window fixed.
//!
//! [`family`] holds the shared metadata record, the `(1+2ε)/4` vs
//! `(1+ε)/4` closed-form values, and tagged config/parameter enums for
//! serialization.

pub mod family;
pub mod pac;
pub mod regret;
mod rows;
pub mod single_step;
pub mod tree;

pub use family::{
    null_regret_floor, null_suboptimality_floor, null_value, planted_suboptimality_floor,
    planted_value, reveal_event_prob, Family, FamilyConfig, FamilyKind, FamilyMeta, Theta,
};
pub use pac::{PacFamily, PacParams, PacTheta};
pub use regret::{RegretFamily, RegretParams, RegretTheta};
pub use single_step::{SingleStepFamily, SingleStepParams, SingleStepTheta};
pub use tree::{reveal_schedule, BinaryTree};

/// Cartesian product over per-position choice sets (empty product = one
/// empty sequence).
pub(crate) fn mixed_products(choice_sets: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = vec![Vec::new()];
    for set in choice_sets {
        let mut next = Vec::with_capacity(out.len() * set.len());
        for prefix in &out {
            for &choice in set {
                let mut seq = prefix.clone();
                seq.push(choice);
                next.push(seq);
            }
        }
        out = next;
    }
    out
}
