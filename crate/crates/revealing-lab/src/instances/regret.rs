//! Multi-step revealing hard instances for regret lower bounds: the
//! needle-in-a-haystack tree search with the coin signal locked behind a
//! periodic, irreversible reveal action.
//!
//! States extend the level-`n` tree with a lock pair `s:+`/`s:-`, an echo
//! pair `e:+`/`e:-`, and an absorbing `terminal`. The action space splits
//! into reveal actions `0..a1` and transit actions `a1..A`, where
//! `a1 = 1 + ⌊A/6⌋`. Leaf exits work as in the single-step family (planted
//! triple `(h*, s*, a*)`, success probability `ε`), but the lock pair emits
//! only the flat `lock` observation before the final step. Every `stride`
//! steps — at the schedule `{n−1+l·stride} ∩ [0, H−2]`, which also hosts
//! `h*` — a reveal action jumps the lock pair into the echo pair: `s:+`
//! reaches the coin-signal state `e:+` only under the planted reveal action
//! `a_rev*` (other reveal actions land in `e:-`), while `s:-` always echoes
//! `e:-`. Echo states emit one biased/uniform coin draw and then fall into
//! `terminal`, forfeiting the final `good`/`bad` reward. Off the schedule
//! (or under transit actions) `s:+` must be held with the planted password,
//! which uses transit actions at schedule steps.
//!
//! Revealing geometry: between consecutive schedule steps the lock pair is
//! observationally identical for `stride` steps, so no window-`stride` left
//! inverse exists (the non-revealing witness has residual ≥ ε/2), but a
//! window of `stride+1` always reaches either a coin draw after a reveal or
//! the final `good`/`bad` contrast, giving α⁻¹ ≤ 1 + 2/σ.
//!
//! Rewards and values match the single-step family: `good` pays 1, the root
//! observation pays `(1+ε)/4`, the planted optimum is `(1+2ε)/4`, the null
//! optimum `(1+ε)/4`. Revealing is never profitable, but under the null
//! model it is the only way to see a non-uniform observation — the
//! exploration/regret dilemma this family exists to exhibit.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::instances::family::{null_value, planted_value, FamilyKind, FamilyMeta};
use crate::instances::rows::{binary_row, point_row, signal_coin_row, uniform_coin_row};
use crate::instances::tree::{reveal_schedule, BinaryTree, WAIT};
use crate::pomdp::{Policy, TabularPomdp};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretParams {
    pub horizon: usize,
    /// Tree level `n`.
    pub tree_level: usize,
    pub n_actions: usize,
    /// Number of coin pairs `K`.
    pub coin_pairs: usize,
    /// Steps between reveal opportunities; the family is `(stride+1)`-step
    /// revealing but not `stride`-step revealing.
    pub stride: usize,
    pub eps: f64,
    pub sigma: f64,
    /// Skip the conservative published ranges (`ε ≤ 0.1`, `K ≥ 2`,
    /// `H ≥ 8n + stride + 1`) and enforce only structural validity.
    #[serde(default)]
    pub unchecked: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegretTheta {
    /// 0-based step of the gated exit; must lie on the reveal schedule.
    pub h_star: usize,
    /// State index of the planted leaf.
    pub s_star: usize,
    /// Exit action, in `1..n_actions`.
    pub a_star: usize,
    /// The one reveal action that `s:+` echoes into `e:+`.
    pub a_rev_star: usize,
    /// Actions required to hold `s:+`, one per step `h_star+1..horizon-1`;
    /// must be transit actions at schedule steps.
    pub password: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct RegretFamily {
    params: RegretParams,
    tree: BinaryTree,
}

impl RegretFamily {
    pub fn new(params: RegretParams) -> Result<Self> {
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
        if p.coin_pairs < 1 {
            return Err(LabError::BadParams("coin_pairs must be ≥ 1".into()));
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
            if p.coin_pairs < 2 {
                return Err(LabError::BadParams("coin_pairs < 2 (set unchecked)".into()));
            }
            if p.horizon < 8 * p.tree_level + p.stride + 1 {
                return Err(LabError::BadParams(
                    "horizon < 8n + stride + 1 (set unchecked)".into(),
                ));
            }
        }
        let tree = BinaryTree::new(p.tree_level);
        Ok(RegretFamily { params, tree })
    }

    pub fn params(&self) -> &RegretParams {
        &self.params
    }

    pub fn tree(&self) -> BinaryTree {
        self.tree
    }

    /// Number of reveal actions `a1 = 1 + ⌊A/6⌋`; actions `0..a1` reveal at
    /// schedule steps, actions `a1..A` are transit actions.
    pub fn reveal_action_count(&self) -> usize {
        1 + self.params.n_actions / 6
    }

    pub fn is_reveal_action(&self, a: usize) -> bool {
        a < self.reveal_action_count()
    }

    /// The 0-based steps at which lock states accept reveal actions.
    pub fn schedule(&self) -> Vec<usize> {
        reveal_schedule(self.params.tree_level, self.params.stride, self.params.horizon)
    }

    // State layout: tree, then s:+, s:-, e:+, e:-, terminal.
    pub fn s_plus(&self) -> usize {
        self.tree.node_count()
    }

    pub fn s_minus(&self) -> usize {
        self.tree.node_count() + 1
    }

    pub fn e_plus(&self) -> usize {
        self.tree.node_count() + 2
    }

    pub fn e_minus(&self) -> usize {
        self.tree.node_count() + 3
    }

    pub fn terminal_state(&self) -> usize {
        self.tree.node_count() + 4
    }

    pub fn n_states(&self) -> usize {
        self.tree.node_count() + 5
    }

    // Observation layout: tree, coins, lock, good, bad, terminal.
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

    pub fn terminal_obs(&self) -> usize {
        self.lock_obs() + 3
    }

    pub fn n_observations(&self) -> usize {
        self.terminal_obs() + 1
    }

    pub fn meta(&self) -> FamilyMeta {
        FamilyMeta {
            kind: FamilyKind::Regret,
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
            lock_obs: vec![self.lock_obs()],
            reveal_steps: self.schedule(),
            reveal_actions: (0..self.reveal_action_count()).collect(),
            h_star_choices: self.schedule(),
            window: self.params.stride + 1,
            alpha_inv_bound: 1.0 + 2.0 / self.params.sigma,
            eps: self.params.eps,
            sigma: self.params.sigma,
            value_planted: planted_value(self.params.eps),
            value_null: null_value(self.params.eps),
        }
    }

    fn check_theta(&self, theta: &RegretTheta) -> Result<()> {
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
        if !self.is_reveal_action(theta.a_rev_star) {
            return Err(LabError::BadParams("a_rev_star must be a reveal action".into()));
        }
        if theta.password.len() != p.horizon - 2 - theta.h_star {
            return Err(LabError::BadParams(format!(
                "password length {} != {}",
                theta.password.len(),
                p.horizon - 2 - theta.h_star
            )));
        }
        for (g, &a) in password_steps(theta.h_star, p.horizon).zip(&theta.password) {
            if a >= p.n_actions {
                return Err(LabError::BadParams("password action out of range".into()));
            }
            if schedule.binary_search(&g).is_ok() && self.is_reveal_action(a) {
                return Err(LabError::BadParams(format!(
                    "password must use transit actions at schedule step {g}"
                )));
            }
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

    pub fn build(&self, theta: &RegretTheta, mu: &[i8]) -> Result<TabularPomdp> {
        self.check_theta(theta)?;
        self.check_mu(mu)?;
        self.assemble(Some(theta), mu)
    }

    /// Null model: leaf exits always land in `s:-`, so `s:+` and `e:+` are
    /// unreachable and no coin ever carries signal.
    pub fn build_null(&self) -> Result<TabularPomdp> {
        self.assemble(None, &vec![1; self.params.coin_pairs])
    }

    fn assemble(&self, theta: Option<&RegretTheta>, mu: &[i8]) -> Result<TabularPomdp> {
        let p = &self.params;
        let (ns, no, na, hh) = (self.n_states(), self.n_observations(), p.n_actions, p.horizon);
        let (s_plus, s_minus) = (self.s_plus(), self.s_minus());
        let (e_plus, e_minus, term) = (self.e_plus(), self.e_minus(), self.terminal_state());
        let schedule = self.schedule();
        let on_schedule = |h: usize| schedule.binary_search(&h).is_ok();

        let mut states: Vec<String> = (0..self.tree.node_count())
            .map(|i| self.tree.label(i))
            .collect();
        states.extend(["s:+", "s:-", "e:+", "e:-", "terminal"].map(String::from));
        let mut observations = states[..self.tree.node_count()].to_vec();
        for i in 1..=p.coin_pairs {
            observations.push(format!("o:{i}+"));
            observations.push(format!("o:{i}-"));
        }
        observations.extend(["lock", "good", "bad", "terminal"].map(String::from));
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
                at_h.push(point_row(no, self.lock_obs()));
                at_h.push(point_row(no, self.lock_obs()));
            } else {
                at_h.push(binary_row(no, self.good_obs(), self.bad_obs(), 0.75));
                at_h.push(binary_row(no, self.good_obs(), self.bad_obs(), 0.25));
            }
            at_h.push(signal_row.clone());
            at_h.push(noise_row.clone());
            at_h.push(point_row(no, self.terminal_obs()));
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
            // s:+ — placeholder self-loop before it can exist; afterwards a
            // reveal echo at schedule steps and password matching elsewhere.
            let plus_rows: Vec<Vec<f64>> = (0..na)
                .map(|a| match theta {
                    Some(t) if h > t.h_star => {
                        if on_schedule(h) && self.is_reveal_action(a) {
                            point_row(ns, if a == t.a_rev_star { e_plus } else { e_minus })
                        } else {
                            let keep = t.password[h - t.h_star - 1] == a;
                            point_row(ns, if keep { s_plus } else { s_minus })
                        }
                    }
                    _ => point_row(ns, s_plus),
                })
                .collect();
            at_h.push(plus_rows);
            let minus_rows: Vec<Vec<f64>> = (0..na)
                .map(|a| {
                    if on_schedule(h) && self.is_reveal_action(a) {
                        point_row(ns, e_minus)
                    } else {
                        point_row(ns, s_minus)
                    }
                })
                .collect();
            at_h.push(minus_rows);
            at_h.push(vec![point_row(ns, term); na]); // e:+ falls to terminal
            at_h.push(vec![point_row(ns, term); na]); // e:- falls to terminal
            at_h.push(vec![point_row(ns, term); na]); // terminal absorbs
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

    pub fn random_theta<R: Rng>(&self, rng: &mut R) -> RegretTheta {
        let schedule = self.schedule();
        let h_star = schedule[rng.gen_range(0..schedule.len())];
        let s_star = rng.gen_range(self.tree.leaves());
        let a_star = rng.gen_range(1..self.params.n_actions);
        let a_rev_star = rng.gen_range(0..self.reveal_action_count());
        let a1 = self.reveal_action_count();
        let password = password_steps(h_star, self.params.horizon)
            .map(|g| {
                if schedule.binary_search(&g).is_ok() {
                    rng.gen_range(a1..self.params.n_actions)
                } else {
                    rng.gen_range(0..self.params.n_actions)
                }
            })
            .collect();
        RegretTheta { h_star, s_star, a_star, a_rev_star, password }
    }

    pub fn random_mu<R: Rng>(&self, rng: &mut R) -> Vec<i8> {
        (0..self.params.coin_pairs)
            .map(|_| if rng.gen::<bool>() { 1 } else { -1 })
            .collect()
    }

    /// Number of planted parameters (not counting `μ` or the null model).
    pub fn theta_count(&self) -> Option<u128> {
        let p = &self.params;
        let a1 = self.reveal_action_count();
        let schedule = self.schedule();
        let mut total: u128 = 0;
        for &h_star in &schedule {
            let mut pw: u128 = 1;
            for g in password_steps(h_star, p.horizon) {
                let choices = if schedule.binary_search(&g).is_ok() {
                    p.n_actions - a1
                } else {
                    p.n_actions
                };
                pw = pw.checked_mul(choices as u128)?;
            }
            let here = (self.tree.leaf_count() as u128)
                .checked_mul((p.n_actions - 1) as u128)?
                .checked_mul(a1 as u128)?
                .checked_mul(pw)?;
            total = total.checked_add(here)?;
        }
        Some(total)
    }

    /// All planted parameters, refusing to materialize more than `cap`.
    pub fn enumerate_thetas(&self, cap: usize) -> Result<Vec<RegretTheta>> {
        let total = self.theta_count().unwrap_or(u128::MAX);
        if total > cap as u128 {
            return Err(LabError::CapExceeded { visited: usize::MAX, cap });
        }
        let p = &self.params;
        let a1 = self.reveal_action_count();
        let schedule = self.schedule();
        let mut out = Vec::with_capacity(total as usize);
        for &h_star in &schedule {
            let choice_sets: Vec<Vec<usize>> = password_steps(h_star, p.horizon)
                .map(|g| {
                    if schedule.binary_search(&g).is_ok() {
                        (a1..p.n_actions).collect()
                    } else {
                        (0..p.n_actions).collect()
                    }
                })
                .collect();
            for s_star in self.tree.leaves() {
                for a_star in 1..p.n_actions {
                    for a_rev_star in 0..a1 {
                        for password in crate::instances::mixed_products(&choice_sets) {
                            out.push(RegretTheta {
                                h_star,
                                s_star,
                                a_star,
                                a_rev_star,
                                password,
                            });
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// The open-loop policy that realizes `(1+2ε)/4`: descend to `s*`, wait
    /// until `h*`, exit with `a*`, then replay the password (which never
    /// reveals).
    pub fn optimal_policy(&self, theta: &RegretTheta) -> Policy {
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

/// The 0-based steps covered by a password: `h_star+1 ..= horizon-2`.
fn password_steps(h_star: usize, horizon: usize) -> std::ops::Range<usize> {
    h_star + 1..horizon - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pomdp::{enumerate_distribution, optimal_value_bruteforce, policy_value, Policy};
    use crate::revealing::{certify, non_revealing_witness};
    use crate::util::rng_from_seed;

    /// Tiny instance: level-1 tree (the root is the only leaf), stride 2,
    /// horizon 6, so the schedule is {0, 2, 4}.
    fn tiny() -> RegretFamily {
        RegretFamily::new(RegretParams {
            horizon: 6,
            tree_level: 1,
            n_actions: 3,
            coin_pairs: 2,
            stride: 2,
            eps: 0.1,
            sigma: 0.5,
            unchecked: true,
        })
        .unwrap()
    }

    fn tiny_theta() -> RegretTheta {
        // Schedule {0, 2, 4}; reveal actions {0}; transit {1, 2}. The
        // password covers steps 1..=4 and must transit at steps 2 and 4.
        RegretTheta { h_star: 0, s_star: 0, a_star: 2, a_rev_star: 0, password: vec![1, 2, 0, 1] }
    }

    #[test]
    fn space_sizes_match_formulas() {
        let fam = tiny();
        // |S| = 2^n + 4, |O| = 2^n + 2K + 3.
        assert_eq!(fam.n_states(), 6);
        assert_eq!(fam.n_observations(), 9);
        assert_eq!(fam.reveal_action_count(), 1);
        assert_eq!(fam.schedule(), vec![0, 2, 4]);
        let m = fam.build(&tiny_theta(), &[1, -1]).unwrap();
        assert_eq!(m.states, vec!["tree:root", "s:+", "s:-", "e:+", "e:-", "terminal"]);
        assert_eq!(m.observations[5], "lock");
        assert_eq!(m.observations[8], "terminal");
    }

    #[test]
    fn password_must_transit_at_schedule_steps() {
        let fam = tiny();
        let mut t = tiny_theta();
        t.password[1] = 0; // step 2 is on the schedule; 0 is a reveal action
        assert!(fam.build(&t, &[1, 1]).is_err());
    }

    #[test]
    fn masks_follow_the_plant_and_the_schedule() {
        let fam = tiny();
        let t = tiny_theta();
        let m = fam.build(&t, &[1, 1]).unwrap();
        // s:+ exists after the gated exit at step 0.
        for h in 0..6 {
            assert_eq!(m.reachable[h][fam.s_plus()], h >= 1, "s:+ at {h}");
            assert_eq!(m.reachable[h][fam.s_minus()], h >= 1, "s:- at {h}");
        }
        // Echo states appear only right after schedule steps ≥ 1: {3, 5}.
        for h in 0..6 {
            assert_eq!(m.reachable[h][fam.e_plus()], h == 3 || h == 5, "e:+ at {h}");
            assert_eq!(m.reachable[h][fam.e_minus()], h == 3 || h == 5, "e:- at {h}");
            assert_eq!(m.reachable[h][fam.terminal_state()], h >= 4, "terminal at {h}");
        }
        let null = fam.build_null().unwrap();
        for h in 0..6 {
            assert!(!null.reachable[h][fam.s_plus()]);
            assert!(!null.reachable[h][fam.e_plus()]);
        }
        assert!(null.reachable[3][fam.e_minus()]);
    }

    #[test]
    fn certified_at_window_stride_plus_one() {
        let fam = tiny();
        let m = fam.build(&tiny_theta(), &[1, -1]).unwrap();
        let report = certify(&m, fam.params().stride + 1).unwrap();
        let bound = 1.0 + 2.0 / fam.params().sigma;
        assert!(report.max_residual <= 1e-9, "residual {}", report.max_residual);
        assert!(report.alpha_inv <= bound + 1e-9, "norm {}", report.alpha_inv);
        assert!(non_revealing_witness(&m, fam.params().stride + 1).unwrap().is_none());

        let null = certify(&fam.build_null().unwrap(), fam.params().stride + 1).unwrap();
        assert!(null.max_residual <= 1e-12);
        assert!((null.alpha_inv - 1.0).abs() < 1e-12);
    }

    #[test]
    fn not_revealing_at_window_stride() {
        let fam = tiny();
        let m = fam.build(&tiny_theta(), &[1, -1]).unwrap();
        let w = non_revealing_witness(&m, fam.params().stride)
            .unwrap()
            .expect("stride-window witness must exist");
        assert!(
            w.residual_lower_bound >= fam.params().eps / 2.0 - 1e-12,
            "bound {}",
            w.residual_lower_bound
        );
        // And certification honestly fails at the short window.
        assert!(certify(&m, fam.params().stride).is_err());
    }

    #[test]
    fn closed_form_values_match_brute_force() {
        let fam = RegretFamily::new(RegretParams {
            horizon: 4,
            tree_level: 1,
            n_actions: 2,
            coin_pairs: 1,
            stride: 1,
            eps: 0.1,
            sigma: 0.5,
            unchecked: true,
        })
        .unwrap();
        // Schedule {0,1,2}; reveal {0}, transit {1}; password forced to 1
        // at schedule steps.
        let theta =
            RegretTheta { h_star: 0, s_star: 0, a_star: 1, a_rev_star: 0, password: vec![1, 1] };
        let m = fam.build(&theta, &[1]).unwrap();
        let (v_star, _) = optimal_value_bruteforce(&m, 2_000_000).unwrap();
        assert!((v_star - planted_value(0.1)).abs() < 1e-12, "v* = {v_star}");
        let v_pi = policy_value(&m, &fam.optimal_policy(&theta), 1_000_000).unwrap();
        assert!((v_pi - planted_value(0.1)).abs() < 1e-12);

        let null = fam.build_null().unwrap();
        let (v0, _) = optimal_value_bruteforce(&null, 2_000_000).unwrap();
        assert!((v0 - null_value(0.1)).abs() < 1e-12, "v0 = {v0}");
    }

    #[test]
    fn revealing_forfeits_the_terminal_reward() {
        let fam = tiny();
        let t = tiny_theta();
        let m = fam.build(&t, &[1, 1]).unwrap();
        // Exit at step 0, then reveal at the next schedule step (2).
        let probe = Policy::ActionSequence(vec![t.a_star, t.password[0], 0, 0, 0, 0]);
        let v = policy_value(&m, &probe, 1_000_000).unwrap();
        assert_eq!(v, 0.0, "revealed episodes end in coins/terminal, reward 0");
        // Every trajectory that ever pairs a lock observation with a reveal
        // action earns exactly zero.
        let dist = enumerate_distribution(&m, &probe, 1_000_000).unwrap();
        for item in &dist.items {
            let revealed = item
                .observations
                .iter()
                .zip(&item.actions)
                .enumerate()
                .any(|(h, (&o, &a))| {
                    o == fam.lock_obs() && fam.is_reveal_action(a) && fam.schedule().contains(&h)
                });
            if revealed {
                assert_eq!(item.reward, 0.0);
            }
        }
    }

    #[test]
    fn enumeration_counts_and_builds() {
        let fam = RegretFamily::new(RegretParams {
            horizon: 4,
            tree_level: 1,
            n_actions: 2,
            coin_pairs: 1,
            stride: 2,
            eps: 0.05,
            sigma: 0.5,
            unchecked: true,
        })
        .unwrap();
        // Schedule {0, 2}. h*=0: password steps {1,2}, step 2 scheduled →
        // 2·1 choices; h*=2: empty password. Each with 1 leaf · 1 exit · 1
        // reveal action.
        assert_eq!(fam.theta_count(), Some(2 + 1));
        let thetas = fam.enumerate_thetas(10).unwrap();
        assert_eq!(thetas.len(), 3);
        for t in &thetas {
            fam.build(t, &[-1]).unwrap();
        }
    }

    #[test]
    fn random_thetas_build_valid_models() {
        let fam = tiny();
        let mut rng = rng_from_seed(23);
        for _ in 0..5 {
            let t = fam.random_theta(&mut rng);
            let mu = fam.random_mu(&mut rng);
            fam.build(&t, &mu).unwrap();
        }
    }
}
