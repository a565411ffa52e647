//! Tabular finite-horizon POMDPs and exact machinery on top of them.
//!
//! A model is the tuple `(H, S, O, A, μ₁, {T_h}, {O_h}, r)`: the episode runs
//! `o_0, a_0, …, o_{H-1}, a_{H-1}` with latent states `s_0 ~ μ₁`,
//! `o_h ~ O_h(·|s_h)`, `s_{h+1} ~ T_h(·|s_h, a_h)`, and per-step reward
//! `r_h(o_h, a_h) ∈ [0,1]`. Instance families guarantee the *realized total*
//! reward of every trajectory is at most 1, which keeps value differences
//! directly comparable across models.
//!
//! The [`TabularPomdp::reachable`] mask records which `(step, state)` pairs
//! can occur at all; rows under the mask are placeholders that sampling and
//! enumeration refuse to touch. That convention is what lets null models
//! leave their unreachable branches unspecified without poisoning matrix
//! computations downstream.

mod enumerate;
pub(crate) mod model;
mod policy;
mod serial;
mod simulate;

pub use enumerate::{
    enumerate_distribution, optimal_value_bruteforce, policy_value, policy_value_forward,
    TrajItem, TrajectoryDist,
};
pub use model::TabularPomdp;
pub use policy::{HistoryPolicy, Policy};
pub use serial::{load_pomdp, pomdp_from_json, pomdp_to_json, save_pomdp, POMDP_FORMAT};
pub use simulate::{sample_trajectory, Simulator, Trajectory};
