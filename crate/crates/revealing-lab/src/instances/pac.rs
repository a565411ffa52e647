//! Multi-step revealing hard instances for PAC lower bounds: the tree
//! search with `L` parallel lock copies, each guarding its own coin signal
//! behind the periodic reveal action.
//!
//! States extend the level-`n` tree with, per copy `j ∈ 1..=L`, a lock pair
//! `s:+:j`/`s:-:j`, an echo pair `e:+:j`/`e:-:j`, and an absorbing
//! `terminal:j`. Action `0` doubles as `wait` and the single `reveal`
//! action. A leaf exit spreads its mass evenly over the copies: the planted
//! triple `(h*, s*, a*)` sends mass `ε/L` to each `s:+:j` and `(1−ε)/L` to
//! each `s:-:j`; any other exit sends `1/L` to each `s:-:j`. On the reveal
//! schedule `{n−1+l·stride} ∩ [0, H−2]` the lock pair announces its copy
//! (`lock:j`) and `reveal` echoes it into `e:+:j`/`e:-:j`, which emits one
//! biased/uniform coin draw (bias row `μ_j ∈ {±1}^K`) and falls into
//! `terminal:j`. Off the schedule the pairs emit the flat `lock` and `s:+:j`
//! must be held with the planted password, which avoids `reveal` at
//! schedule steps. Rewards and values are as in the other families: `good`
//! pays 1, the root observation `(1+ε)/4`; the planted optimum is
//! `(1+2ε)/4`, the null optimum `(1+ε)/4`.
//!
//! Revealing geometry matches the regret family — α⁻¹ ≤ 1 + 2/σ at window
//! `stride+1`, with a window-`stride` witness of residual ≥ ε/(2L) built
//! from the `L` simultaneous lock-pair differences. The extra copies
//! multiply the statistical cost of localizing the signal by √L while
//! keeping each episode's information one coin draw.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::instances::family::{null_value, planted_value, FamilyKind, FamilyMeta};
use crate::instances::rows::{binary_row, point_row, signal_coin_row, uniform_coin_row};
use crate::instances::tree::{reveal_schedule, BinaryTree, WAIT};
use crate::pomdp::{Policy, TabularPomdp};

/// The reveal action (also the tree `wait`).
pub const REVEAL: usize = 0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PacParams {
    pub horizon: usize,
    /// Tree level `n`.
    pub tree_level: usize,
    pub n_actions: usize,
    /// Number of coin pairs `K` per echo state.
    pub coin_pairs: usize,
    /// Steps between reveal opportunities.
    pub stride: usize,
    /// Number of parallel lock copies `L`.
    pub lock_copies: usize,
    pub eps: f64,
    pub sigma: f64,
    /// Skip the conservative published ranges (`ε ≤ 0.1`,
    /// `H ≥ 8n + stride + 1`) and enforce only structural validity.
    #[serde(default)]
    pub unchecked: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacTheta {
    /// 0-based step of the gated exit; must lie on the reveal schedule.
    pub h_star: usize,
    /// State index of the planted leaf.
    pub s_star: usize,
    /// Exit action, in `1..n_actions`.
    pub a_star: usize,
    /// Actions required to hold `s:+:j`, one per step
    /// `h_star+1..horizon-1`; must avoid `reveal` at schedule steps.
    pub password: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct PacFamily {
    params: PacParams,
    tree: BinaryTree,
}

impl PacFamily {
    pub fn new(params: PacParams) -> Result<Self> {
        let p = &params;
        if p.tree_level < 1 || p.stride < 1 {
            return Err(LabError::BadParams("tree_level and stride must be ≥ 1".into()));
        }
        let min_actions = if p.tree_level >= 2 { 3 } else { 2 };
        if p.n_actions < min_actions {
            return Err(LabError::BadParams(format!(
                "need ≥ {min_actions} actions for tree level {}",
                p.tree_level
            )));
        }
        if p.coin_pairs < 1 || p.lock_copies < 1 {
            return Err(LabError::BadParams("coin_pairs and lock_copies must be ≥ 1".into()));
        }
        if p.horizon < p.tree_level + 1 {
            return Err(LabError::BadParams(
                "horizon leaves no reveal opportunity".into(),
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
            if p.horizon < 8 * p.tree_level + p.stride + 1 {
                return Err(LabError::BadParams(
                    "horizon < 8n + stride + 1 (set unchecked)".into(),
                ));
            }
        }
        let tree = BinaryTree::new(p.tree_level);
        Ok(PacFamily { params, tree })
    }

    pub fn params(&self) -> &PacParams {
        &self.params
    }

    pub fn tree(&self) -> BinaryTree {
        self.tree
    }

    pub fn schedule(&self) -> Vec<usize> {
        reveal_schedule(self.params.tree_level, self.params.stride, self.params.horizon)
    }

    // State layout: tree, then per copy j: s:+:j, s:-:j, e:+:j, e:-:j,
    // terminal:j.
    pub fn s_plus(&self, j: usize) -> usize {
        self.tree.node_count() + 5 * j
    }

    pub fn s_minus(&self, j: usize) -> usize {
        self.tree.node_count() + 5 * j + 1
    }

    pub fn e_plus(&self, j: usize) -> usize {
        self.tree.node_count() + 5 * j + 2
    }

    pub fn e_minus(&self, j: usize) -> usize {
        self.tree.node_count() + 5 * j + 3
    }

    pub fn terminal_state(&self, j: usize) -> usize {
        self.tree.node_count() + 5 * j + 4
    }

    pub fn n_states(&self) -> usize {
        self.tree.node_count() + 5 * self.params.lock_copies
    }

    // Observation layout: tree, coins, lock, good, bad, then per copy j:
    // lock:j, terminal:j.
    pub fn coin_base(&self) -> usize {
        self.tree.node_count()
    }

    pub fn lock_obs(&self) -> usize {
        self.coin_base() + 2 * self.params.coin_pairs
    }

    pub fn good_obs(&self) -> usize {
        self.lock_obs() + 1
    }

    pub fn bad_obs(&self) -> usize {
        self.lock_obs() + 2
    }

    pub fn copy_lock_obs(&self, j: usize) -> usize {
        self.lock_obs() + 3 + 2 * j
    }

    pub fn copy_terminal_obs(&self, j: usize) -> usize {
        self.lock_obs() + 3 + 2 * j + 1
    }

    pub fn n_observations(&self) -> usize {
        self.lock_obs() + 3 + 2 * self.params.lock_copies
    }

    pub fn meta(&self) -> FamilyMeta {
        let l = self.params.lock_copies;
        let mut lock_obs = vec![self.lock_obs()];
        lock_obs.extend((0..l).map(|j| self.copy_lock_obs(j)));
        FamilyMeta {
            kind: FamilyKind::Pac,
            horizon: self.params.horizon,
            n_states: self.n_states(),
            n_observations: self.n_observations(),
            n_actions: self.params.n_actions,
            tree_level: self.params.tree_level,
            leaf_states: self.tree.leaves().collect(),
            root_obs: 0,
            coin_obs: (self.coin_base()..self.lock_obs()).collect(),
            good_obs: self.good_obs(),
            bad_obs: self.bad_obs(),
            lock_obs,
            reveal_steps: self.schedule(),
            reveal_actions: vec![REVEAL],
            h_star_choices: self.schedule(),
            window: self.params.stride + 1,
            alpha_inv_bound: 1.0 + 2.0 / self.params.sigma,
            eps: self.params.eps,
            sigma: self.params.sigma,
            value_planted: planted_value(self.params.eps),
            value_null: null_value(self.params.eps),
        }
    }

    fn check_theta(&self, theta: &PacTheta) -> Result<()> {
        let p = &self.params;
        let schedule = self.schedule();
        if !schedule.contains(&theta.h_star) {
            return Err(LabError::BadParams(format!(
                "h_star {} not on the reveal schedule {:?}",
                theta.h_star, schedule
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
        for (g, &a) in (theta.h_star + 1..p.horizon - 1).zip(&theta.password) {
            if a >= p.n_actions {
                return Err(LabError::BadParams("password action out of range".into()));
            }
            if schedule.binary_search(&g).is_ok() && a == REVEAL {
                return Err(LabError::BadParams(format!(
                    "password must avoid reveal at schedule step {g}"
                )));
            }
        }
        Ok(())
    }

    fn check_mu(&self, mu: &[i8]) -> Result<()> {
        let want = self.params.lock_copies * self.params.coin_pairs;
        if mu.len() != want || mu.iter().any(|&m| m != 1 && m != -1) {
            return Err(LabError::BadParams(format!(
                "mu must be ±1 of length L·K = {want}"
            )));
        }
        Ok(())
    }

    /// Build the planted model; `mu` is row-major `L×K` (copy-major).
    pub fn build(&self, theta: &PacTheta, mu: &[i8]) -> Result<TabularPomdp> {
        self.check_theta(theta)?;
        self.check_mu(mu)?;
        self.assemble(Some(theta), mu)
    }

    /// Null model: leaf exits spread `1/L` over the `s:-:j`, so every
    /// `s:+:j` and `e:+:j` is unreachable.
    pub fn build_null(&self) -> Result<TabularPomdp> {
        let mu = vec![1; self.params.lock_copies * self.params.coin_pairs];
        self.assemble(None, &mu)
    }

    fn assemble(&self, theta: Option<&PacTheta>, mu: &[i8]) -> Result<TabularPomdp> {
        let p = &self.params;
        let (ns, no, na, hh) = (self.n_states(), self.n_observations(), p.n_actions, p.horizon);
        let l = p.lock_copies;
        let k = p.coin_pairs;
        let schedule = self.schedule();
        let on_schedule = |h: usize| schedule.binary_search(&h).is_ok();

        let mut states: Vec<String> = (0..self.tree.node_count())
            .map(|i| self.tree.label(i))
            .collect();
        for j in 1..=l {
            states.push(format!("s:+:{j}"));
            states.push(format!("s:-:{j}"));
            states.push(format!("e:+:{j}"));
            states.push(format!("e:-:{j}"));
            states.push(format!("terminal:{j}"));
        }
        let mut observations = states[..self.tree.node_count()].to_vec();
        for i in 1..=k {
            observations.push(format!("o:{i}+"));
            observations.push(format!("o:{i}-"));
        }
        observations.extend(["lock", "good", "bad"].map(String::from));
        for j in 1..=l {
            observations.push(format!("lock:{j}"));
            observations.push(format!("terminal:{j}"));
        }
        let actions: Vec<String> = (0..na).map(|a| format!("a{a}")).collect();

        let noise_row = uniform_coin_row(no, self.coin_base(), k);
        let mut emissions = Vec::with_capacity(hh);
        for h in 0..hh {
            let mut at_h = Vec::with_capacity(ns);
            for i in 0..self.tree.node_count() {
                at_h.push(point_row(no, i));
            }
            for j in 0..l {
                let lock_row = if h + 1 == hh {
                    None
                } else if on_schedule(h) {
                    Some(point_row(no, self.copy_lock_obs(j)))
                } else {
                    Some(point_row(no, self.lock_obs()))
                };
                match lock_row {
                    Some(row) => {
                        at_h.push(row.clone());
                        at_h.push(row);
                    }
                    None => {
                        at_h.push(binary_row(no, self.good_obs(), self.bad_obs(), 0.75));
                        at_h.push(binary_row(no, self.good_obs(), self.bad_obs(), 0.25));
                    }
                }
                at_h.push(signal_coin_row(no, self.coin_base(), p.sigma, &mu[j * k..(j + 1) * k]));
                at_h.push(noise_row.clone());
                at_h.push(point_row(no, self.copy_terminal_obs(j)));
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
                        for j in 0..l {
                            if planted {
                                row[self.s_plus(j)] = p.eps / l as f64;
                                row[self.s_minus(j)] = (1.0 - p.eps) / l as f64;
                            } else {
                                row[self.s_minus(j)] = 1.0 / l as f64;
                            }
                        }
                        per_a.push(row);
                    } else {
                        per_a.push(self.tree.transition_row(node, a, ns));
                    }
                }
                at_h.push(per_a);
            }
            for j in 0..l {
                let plus_rows: Vec<Vec<f64>> = (0..na)
                    .map(|a| match theta {
                        Some(t) if h > t.h_star => {
                            if on_schedule(h) && a == REVEAL {
                                point_row(ns, self.e_plus(j))
                            } else {
                                let keep = t.password[h - t.h_star - 1] == a;
                                point_row(ns, if keep { self.s_plus(j) } else { self.s_minus(j) })
                            }
                        }
                        _ => point_row(ns, self.s_plus(j)),
                    })
                    .collect();
                at_h.push(plus_rows);
                let minus_rows: Vec<Vec<f64>> = (0..na)
                    .map(|a| {
                        if on_schedule(h) && a == REVEAL {
                            point_row(ns, self.e_minus(j))
                        } else {
                            point_row(ns, self.s_minus(j))
                        }
                    })
                    .collect();
                at_h.push(minus_rows);
                at_h.push(vec![point_row(ns, self.terminal_state(j)); na]);
                at_h.push(vec![point_row(ns, self.terminal_state(j)); na]);
                at_h.push(vec![point_row(ns, self.terminal_state(j)); na]);
            }
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

    pub fn random_theta<R: Rng>(&self, rng: &mut R) -> PacTheta {
        let schedule = self.schedule();
        let h_star = schedule[rng.gen_range(0..schedule.len())];
        let s_star = rng.gen_range(self.tree.leaves());
        let a_star = rng.gen_range(1..self.params.n_actions);
        let password = (h_star + 1..self.params.horizon - 1)
            .map(|g| {
                if schedule.binary_search(&g).is_ok() {
                    rng.gen_range(1..self.params.n_actions)
                } else {
                    rng.gen_range(0..self.params.n_actions)
                }
            })
            .collect();
        PacTheta { h_star, s_star, a_star, password }
    }

    pub fn random_mu<R: Rng>(&self, rng: &mut R) -> Vec<i8> {
        (0..self.params.lock_copies * self.params.coin_pairs)
            .map(|_| if rng.gen::<bool>() { 1 } else { -1 })
            .collect()
    }

    /// Number of planted parameters (not counting `μ` or the null model).
    pub fn theta_count(&self) -> Option<u128> {
        let p = &self.params;
        let schedule = self.schedule();
        let mut total: u128 = 0;
        for &h_star in &schedule {
            let mut pw: u128 = 1;
            for g in h_star + 1..p.horizon - 1 {
                let choices = if schedule.binary_search(&g).is_ok() {
                    p.n_actions - 1
                } else {
                    p.n_actions
                };
                pw = pw.checked_mul(choices as u128)?;
            }
            let here = (self.tree.leaf_count() as u128)
                .checked_mul((p.n_actions - 1) as u128)?
                .checked_mul(pw)?;
            total = total.checked_add(here)?;
        }
        Some(total)
    }

    /// All planted parameters, refusing to materialize more than `cap`.
    pub fn enumerate_thetas(&self, cap: usize) -> Result<Vec<PacTheta>> {
        let total = self.theta_count().unwrap_or(u128::MAX);
        if total > cap as u128 {
            return Err(LabError::CapExceeded { visited: usize::MAX, cap });
        }
        let p = &self.params;
        let schedule = self.schedule();
        let mut out = Vec::with_capacity(total as usize);
        for &h_star in &schedule {
            let choice_sets: Vec<Vec<usize>> = (h_star + 1..p.horizon - 1)
                .map(|g| {
                    if schedule.binary_search(&g).is_ok() {
                        (1..p.n_actions).collect()
                    } else {
                        (0..p.n_actions).collect()
                    }
                })
                .collect();
            for s_star in self.tree.leaves() {
                for a_star in 1..p.n_actions {
                    for password in crate::instances::mixed_products(&choice_sets) {
                        out.push(PacTheta { h_star, s_star, a_star, password });
                    }
                }
            }
        }
        Ok(out)
    }

    /// The open-loop policy that realizes `(1+2ε)/4`.
    pub fn optimal_policy(&self, theta: &PacTheta) -> Policy {
        let mut seq = self.tree.path_actions(theta.s_star);
        seq.resize(theta.h_star, WAIT);
        seq.push(theta.a_star);
        seq.extend_from_slice(&theta.password);
        seq.push(WAIT);
        Policy::ActionSequence(seq)
    }

    /// Stay at the root forever, optimal under the null model.
    pub fn null_optimal_policy(&self) -> Policy {
        Policy::ActionSequence(vec![WAIT; self.params.horizon])
    }
}
