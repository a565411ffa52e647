//! Single-step revealing hard instances: a needle-in-a-haystack tree search
//! whose reward signal hides behind a biased-coin observation channel.
//!
//! States are a level-`n` binary tree plus a signal state `s:+` and a noise
//! state `s:-`. The agent starts at the root and can descend one level per
//! step. At any leaf, every non-`wait` action enters the exit lottery: it
//! lands in `s:+` with probability `ε` if the planted triple
//! `(h*, s*, a*)` was matched exactly, and otherwise in `s:-`. From `s:+`
//! the planted password `a*_{h*+1}, …, a*_{H−2}` must be replayed one
//! action per step or the state decays to `s:-`; `s:-` is absorbing.
//!
//! Observations: tree states announce themselves. Before the final step,
//! `s:+` emits one of `2K` coin observations with bias pattern
//! `(1 ± σ·μ_i)/(2K)` and `s:-` emits them uniformly; at the final step they
//! emit `good`/`bad` with probabilities `(3/4, 1/4)` and `(1/4, 3/4)`.
//! Rewards are known, observation-only, and final-step: `good` pays 1, the
//! root observation pays `(1+ε)/4`, everything else 0. Staying home earns
//! `(1+ε)/4`; finding and holding `s:+` earns `(1+2ε)/4`.
//!
//! Every reachable emission pair `{s:+, s:-}` is a χ² = σ² coin contrast
//! (or the χ² = 4/3 `good`/`bad` contrast at the final step), so each step
//! admits a window-1 left inverse of (*→1)-norm at most `1 + 2/σ`: the
//! family is single-step revealing. The null model replaces the exit
//! lottery with a certain jump to `s:-`, leaving `s:+` unreachable.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::instances::family::{null_value, planted_value, FamilyKind, FamilyMeta};
use crate::instances::rows::{binary_row, point_row, signal_coin_row, uniform_coin_row};
use crate::instances::tree::{BinaryTree, WAIT};
use crate::pomdp::{Policy, TabularPomdp};
use crate::util::{checked_pow, index_to_seq};

/// Hyperparameters shared by the whole family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingleStepParams {
    pub horizon: usize,
    /// Tree level `n`; the tree has `2^n − 1` nodes and `2^{n−1}` leaves.
    pub tree_level: usize,
    pub n_actions: usize,
    /// Number of coin pairs `K` (so `2K` coin observations).
    pub coin_pairs: usize,
    /// Exit-lottery success probability `ε`.
    pub eps: f64,
    /// Coin bias `σ`.
    pub sigma: f64,
    /// Skip the conservative published ranges (`ε ≤ 0.1`, `σ ≤ 1/(2H)`,
    /// `H ≥ 4n`) and enforce only structural validity.
    #[serde(default)]
    pub unchecked: bool,
}

/// Planted instance parameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SingleStepTheta {
    /// 0-based step of the gated exit; the lottery succeeds only on a leaf
    /// exit taken exactly at this step.
    pub h_star: usize,
    /// State index of the planted leaf.
    pub s_star: usize,
    /// Exit action, in `1..n_actions`.
    pub a_star: usize,
    /// Actions required to hold `s:+`, one per step `h_star+1..horizon-1`.
    pub password: Vec<usize>,
}

/// The family: fixed spaces and dynamics template, instances indexed by
/// `(θ, μ)` plus one null model.
#[derive(Clone, Debug)]
pub struct SingleStepFamily {
    params: SingleStepParams,
    tree: BinaryTree,
}

impl SingleStepFamily {
    pub fn new(params: SingleStepParams) -> Result<Self> {
        let p = &params;
        if p.tree_level < 1 {
            return Err(LabError::BadParams("tree_level must be ≥ 1".into()));
        }
        let min_actions = if p.tree_level >= 2 { 3 } else { 2 };
        if p.n_actions < min_actions {
            return Err(LabError::BadParams(format!(
                "need ≥ {min_actions} actions for tree level {}",
                p.tree_level
            )));
        }
        if p.coin_pairs < 1 {
            return Err(LabError::BadParams("coin_pairs must be ≥ 1".into()));
        }
        if p.horizon < p.tree_level + 2 {
            return Err(LabError::BadParams(
                "horizon leaves no room for a gated exit".into(),
            ));
        }
        if !(p.eps > 0.0 && p.eps < 1.0) || !(p.sigma > 0.0 && p.sigma <= 1.0) {
            return Err(LabError::BadParams(format!(
                "eps {} / sigma {} outside (0,1)",
                p.eps, p.sigma
            )));
        }
        if !p.unchecked {
            if p.eps > 0.1 {
                return Err(LabError::BadParams("eps > 0.1 (set unchecked)".into()));
            }
            if p.sigma > 1.0 / (2.0 * p.horizon as f64) {
                return Err(LabError::BadParams("sigma > 1/(2H) (set unchecked)".into()));
            }
            if p.horizon < 4 * p.tree_level {
                return Err(LabError::BadParams("horizon < 4n (set unchecked)".into()));
            }
        }
        let tree = BinaryTree::new(p.tree_level);
        Ok(SingleStepFamily { params, tree })
    }

    pub fn params(&self) -> &SingleStepParams {
        &self.params
    }

    pub fn tree(&self) -> BinaryTree {
        self.tree
    }

    // State layout: tree nodes, then the signal/noise pair.
    pub fn s_plus(&self) -> usize {
        self.tree.node_count()
    }

    pub fn s_minus(&self) -> usize {
        self.tree.node_count() + 1
    }

    pub fn n_states(&self) -> usize {
        self.tree.node_count() + 2
    }

    // Observation layout: tree nodes, coin pairs, then good/bad.
    pub fn coin_base(&self) -> usize {
        self.tree.node_count()
    }

    pub fn good_obs(&self) -> usize {
        self.coin_base() + 2 * self.params.coin_pairs
    }

    pub fn bad_obs(&self) -> usize {
        self.good_obs() + 1
    }

    pub fn n_observations(&self) -> usize {
        self.bad_obs() + 1
    }

    /// 0-based steps at which the planted exit may sit.
    pub fn h_star_choices(&self) -> Vec<usize> {
        (self.params.tree_level..=self.params.horizon - 2).collect()
    }

    pub fn meta(&self) -> FamilyMeta {
        FamilyMeta {
            kind: FamilyKind::SingleStep,
            horizon: self.params.horizon,
            n_states: self.n_states(),
            n_observations: self.n_observations(),
            n_actions: self.params.n_actions,
            tree_level: self.params.tree_level,
            leaf_states: self.tree.leaves().collect(),
            root_obs: 0,
            coin_obs: (self.coin_base()..self.good_obs()).collect(),
            good_obs: self.good_obs(),
            bad_obs: self.bad_obs(),
            lock_obs: Vec::new(),
            reveal_steps: Vec::new(),
            reveal_actions: Vec::new(),
            h_star_choices: self.h_star_choices(),
            window: 1,
            alpha_inv_bound: 1.0 + 2.0 / self.params.sigma,
            eps: self.params.eps,
            sigma: self.params.sigma,
            value_planted: planted_value(self.params.eps),
            value_null: null_value(self.params.eps),
        }
    }

    fn check_theta(&self, theta: &SingleStepTheta) -> Result<()> {
        let p = &self.params;
        if !self.h_star_choices().contains(&theta.h_star) {
            return Err(LabError::BadParams(format!(
                "h_star {} outside {:?}",
                theta.h_star,
                self.h_star_choices()
            )));
        }
        if !self.tree.is_leaf(theta.s_star) || theta.s_star >= self.tree.node_count() {
            return Err(LabError::BadParams("s_star is not a leaf".into()));
        }
        if theta.a_star == WAIT || theta.a_star >= p.n_actions {
            return Err(LabError::BadParams("a_star must be a non-wait action".into()));
        }
        if theta.password.len() != p.horizon - 2 - theta.h_star {
            return Err(LabError::BadParams(format!(
                "password length {} != {}",
                theta.password.len(),
                p.horizon - 2 - theta.h_star
            )));
        }
        if theta.password.iter().any(|&a| a >= p.n_actions) {
            return Err(LabError::BadParams("password action out of range".into()));
        }
        Ok(())
    }

    fn check_mu(&self, mu: &[i8]) -> Result<()> {
        if mu.len() != self.params.coin_pairs || mu.iter().any(|&m| m != 1 && m != -1) {
            return Err(LabError::BadParams(format!(
                "mu must be ±1 of length {}",
                self.params.coin_pairs
            )));
        }
        Ok(())
    }

    /// Build the planted model `M_{θ,μ}`.
    pub fn build(&self, theta: &SingleStepTheta, mu: &[i8]) -> Result<TabularPomdp> {
        self.check_theta(theta)?;
        self.check_mu(mu)?;
        self.assemble(Some(theta), mu)
    }

    /// Build the null model: the exit lottery always lands in `s:-`, so
    /// `s:+` is unreachable and the model carries no planted secret.
    pub fn build_null(&self) -> Result<TabularPomdp> {
        self.assemble(None, &vec![1; self.params.coin_pairs])
    }

    fn assemble(&self, theta: Option<&SingleStepTheta>, mu: &[i8]) -> Result<TabularPomdp> {
        let p = &self.params;
        let (ns, no, na, hh) = (self.n_states(), self.n_observations(), p.n_actions, p.horizon);
        let (s_plus, s_minus) = (self.s_plus(), self.s_minus());

        let mut states: Vec<String> = (0..self.tree.node_count())
            .map(|i| self.tree.label(i))
            .collect();
        states.push("s:+".into());
        states.push("s:-".into());
        let mut observations = states[..self.tree.node_count()].to_vec();
        for i in 1..=p.coin_pairs {
            observations.push(format!("o:{i}+"));
            observations.push(format!("o:{i}-"));
        }
        observations.push("good".into());
        observations.push("bad".into());
        let actions: Vec<String> = (0..na).map(|a| format!("a{a}")).collect();

        let signal_row = signal_coin_row(no, self.coin_base(), p.sigma, mu);
        let noise_row = uniform_coin_row(no, self.coin_base(), p.coin_pairs);
        let mut emissions = Vec::with_capacity(hh);
        for h in 0..hh {
            let mut at_h = Vec::with_capacity(ns);
            for i in 0..self.tree.node_count() {
                at_h.push(point_row(no, i));
            }
            if h + 1 < hh {
                at_h.push(signal_row.clone());
                at_h.push(noise_row.clone());
            } else {
                at_h.push(binary_row(no, self.good_obs(), self.bad_obs(), 0.75));
                at_h.push(binary_row(no, self.good_obs(), self.bad_obs(), 0.25));
            }
            emissions.push(at_h);
        }

        let mut transitions = Vec::with_capacity(hh - 1);
        for h in 0..hh - 1 {
            let mut at_h = Vec::with_capacity(ns);
            for node in 0..self.tree.node_count() {
                let mut per_a = Vec::with_capacity(na);
                for a in 0..na {
                    if self.tree.is_leaf(node) && a != WAIT {
                        let planted = theta
                            .map(|t| h == t.h_star && node == t.s_star && a == t.a_star)
                            .unwrap_or(false);
                        let mut row = vec![0.0; ns];
                        if planted {
                            row[s_plus] = p.eps;
                            row[s_minus] = 1.0 - p.eps;
                        } else {
                            row[s_minus] = 1.0;
                        }
                        per_a.push(row);
                    } else {
                        per_a.push(self.tree.transition_row(node, a, ns));
                    }
                }
                at_h.push(per_a);
            }
            // s:+ — placeholder self-loop before it can exist, password
            // matching afterwards.
            let plus_rows: Vec<Vec<f64>> = (0..na)
                .map(|a| match theta {
                    Some(t) if h > t.h_star => {
                        let keep = t.password[h - t.h_star - 1] == a;
                        point_row(ns, if keep { s_plus } else { s_minus })
                    }
                    _ => point_row(ns, s_plus),
                })
                .collect();
            at_h.push(plus_rows);
            at_h.push(vec![point_row(ns, s_minus); na]);
            transitions.push(at_h);
        }

        let mut rewards = vec![vec![vec![0.0; na]; no]; hh];
        for a in 0..na {
            rewards[hh - 1][self.good_obs()][a] = 1.0;
            rewards[hh - 1][0][a] = (1.0 + p.eps) / 4.0;
        }

        let mut model = TabularPomdp {
            horizon: hh,
            states,
            observations,
            actions,
            init: point_row(ns, 0),
            transitions,
            emissions,
            rewards,
            reachable: Vec::new(),
        };
        model.reachable = vec![vec![false; ns]; hh];
        model.reachable = model.reachability_closure();
        model.validate()?;
        Ok(model)
    }

    pub fn random_theta<R: Rng>(&self, rng: &mut R) -> SingleStepTheta {
        let choices = self.h_star_choices();
        let h_star = choices[rng.gen_range(0..choices.len())];
        let s_star = rng.gen_range(self.tree.leaves());
        let a_star = rng.gen_range(1..self.params.n_actions);
        let password = (h_star + 1..self.params.horizon - 1)
            .map(|_| rng.gen_range(0..self.params.n_actions))
            .collect();
        SingleStepTheta { h_star, s_star, a_star, password }
    }

    pub fn random_mu<R: Rng>(&self, rng: &mut R) -> Vec<i8> {
        (0..self.params.coin_pairs)
            .map(|_| if rng.gen::<bool>() { 1 } else { -1 })
            .collect()
    }

    /// Number of planted parameters (not counting `μ` or the null model).
    pub fn theta_count(&self) -> Option<u128> {
        let p = &self.params;
        let mut total: u128 = 0;
        for h_star in self.h_star_choices() {
            let pw = checked_pow(p.n_actions, p.horizon - 2 - h_star)? as u128;
            let here = (self.tree.leaf_count() as u128)
                .checked_mul((p.n_actions - 1) as u128)?
                .checked_mul(pw)?;
            total = total.checked_add(here)?;
        }
        Some(total)
    }

    /// All planted parameters, refusing to materialize more than `cap`.
    pub fn enumerate_thetas(&self, cap: usize) -> Result<Vec<SingleStepTheta>> {
        let total = self.theta_count().unwrap_or(u128::MAX);
        if total > cap as u128 {
            return Err(LabError::CapExceeded { visited: usize::MAX, cap });
        }
        let p = &self.params;
        let mut out = Vec::with_capacity(total as usize);
        for h_star in self.h_star_choices() {
            let pw_len = p.horizon - 2 - h_star;
            let pw_count = checked_pow(p.n_actions, pw_len).unwrap();
            for s_star in self.tree.leaves() {
                for a_star in 1..p.n_actions {
                    for idx in 0..pw_count {
                        out.push(SingleStepTheta {
                            h_star,
                            s_star,
                            a_star,
                            password: index_to_seq(idx, p.n_actions, pw_len),
                        });
                    }
                }
            }
        }
        Ok(out)
    }

    /// The open-loop policy that realizes the planted value `(1+2ε)/4`:
    /// descend to `s*`, wait until `h*`, take `a*`, then replay the password.
    pub fn optimal_policy(&self, theta: &SingleStepTheta) -> Policy {
        let mut seq = self.tree.path_actions(theta.s_star);
        seq.resize(theta.h_star, WAIT);
        seq.push(theta.a_star);
        seq.extend_from_slice(&theta.password);
        seq.push(WAIT); // final step: no transition, reward ignores actions
        Policy::ActionSequence(seq)
    }

    /// Stay at the root forever, optimal under the null model.
    pub fn null_optimal_policy(&self) -> Policy {
        Policy::ActionSequence(vec![WAIT; self.params.horizon])
    }
}
