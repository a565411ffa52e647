use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Row-sum tolerance for probability tables.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// A tabular finite-horizon POMDP.
///
/// Index conventions: steps `h ∈ 0..horizon`, with `transitions[h]` acting
/// between steps `h` and `h+1` (so `transitions.len() == horizon - 1`),
/// `emissions[h][s][o]` the step-`h` emission row, and `rewards[h][o][a]` the
/// known reward of taking `a` on observation `o` at step `h`.
///
/// `reachable[h][s]` marks whether state `s` can occur at step `h` under the
/// model's own dynamics from `init`. Emission and transition rows for masked
/// pairs are placeholders: they must still be well-formed probability rows
/// (so serialization and validation stay uniform) but nothing may depend on
/// their values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularPomdp {
    pub horizon: usize,
    pub states: Vec<String>,
    pub observations: Vec<String>,
    pub actions: Vec<String>,
    /// Initial state distribution μ₁.
    pub init: Vec<f64>,
    /// `transitions[h][s][a][s']`, `h ∈ 0..horizon-1`.
    pub transitions: Vec<Vec<Vec<Vec<f64>>>>,
    /// `emissions[h][s][o]`, `h ∈ 0..horizon`.
    pub emissions: Vec<Vec<Vec<f64>>>,
    /// `rewards[h][o][a] ∈ [0,1]`, `h ∈ 0..horizon`.
    pub rewards: Vec<Vec<Vec<f64>>>,
    /// `reachable[h][s]`, `h ∈ 0..horizon`.
    pub reachable: Vec<Vec<bool>>,
}

impl TabularPomdp {
    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_observations(&self) -> usize {
        self.observations.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    /// Emission row at `(h, s)`, refusing masked access.
    pub fn emission_row(&self, h: usize, s: usize) -> Result<&[f64]> {
        if !self.reachable[h][s] {
            return Err(LabError::MaskedRowAccess { step: h, state: s });
        }
        Ok(&self.emissions[h][s])
    }

    /// Transition row at `(h, s, a)`, refusing masked access.
    pub fn transition_row(&self, h: usize, s: usize, a: usize) -> Result<&[f64]> {
        if !self.reachable[h][s] {
            return Err(LabError::MaskedRowAccess { step: h, state: s });
        }
        Ok(&self.transitions[h][s][a])
    }

    /// Recompute the reachability closure from `init` under the stored
    /// dynamics: `reach_0 = supp(μ₁)`, `reach_{h+1} = ∪_{s ∈ reach_h, a} supp(T_h(·|s,a))`.
    pub fn reachability_closure(&self) -> Vec<Vec<bool>> {
        let ns = self.n_states();
        let mut reach = vec![vec![false; ns]; self.horizon];
        for (s, &p) in self.init.iter().enumerate() {
            if p > 0.0 {
                reach[0][s] = true;
            }
        }
        for h in 0..self.horizon - 1 {
            for s in 0..ns {
                if !reach[h][s] {
                    continue;
                }
                for a in 0..self.n_actions() {
                    for (s2, &p) in self.transitions[h][s][a].iter().enumerate() {
                        if p > 0.0 {
                            reach[h + 1][s2] = true;
                        }
                    }
                }
            }
        }
        reach
    }

    /// Validate shapes, probability rows, reward range, and that the stored
    /// reachability mask equals the closure of the stored dynamics.
    pub fn validate(&self) -> Result<()> {
        let (h_len, ns, no, na) = (
            self.horizon,
            self.n_states(),
            self.n_observations(),
            self.n_actions(),
        );
        if h_len == 0 || ns == 0 || no == 0 || na == 0 {
            return Err(LabError::InvalidModel("empty dimension".into()));
        }
        if self.init.len() != ns {
            return Err(LabError::InvalidModel("init length != |S|".into()));
        }
        check_prob_row(&self.init, "init")?;
        if self.transitions.len() != h_len - 1
            || self.emissions.len() != h_len
            || self.rewards.len() != h_len
            || self.reachable.len() != h_len
        {
            return Err(LabError::InvalidModel("step-indexed table length".into()));
        }
        for (h, em) in self.emissions.iter().enumerate() {
            if em.len() != ns {
                return Err(LabError::InvalidModel(format!("emissions[{h}] rows")));
            }
            for (s, row) in em.iter().enumerate() {
                if row.len() != no {
                    return Err(LabError::InvalidModel(format!("emissions[{h}][{s}] len")));
                }
                check_prob_row(row, &format!("emissions[{h}][{s}]"))?;
            }
        }
        for (h, tr) in self.transitions.iter().enumerate() {
            if tr.len() != ns {
                return Err(LabError::InvalidModel(format!("transitions[{h}] rows")));
            }
            for (s, per_a) in tr.iter().enumerate() {
                if per_a.len() != na {
                    return Err(LabError::InvalidModel(format!(
                        "transitions[{h}][{s}] actions"
                    )));
                }
                for (a, row) in per_a.iter().enumerate() {
                    if row.len() != ns {
                        return Err(LabError::InvalidModel(format!(
                            "transitions[{h}][{s}][{a}] len"
                        )));
                    }
                    check_prob_row(row, &format!("transitions[{h}][{s}][{a}]"))?;
                }
            }
        }
        for (h, rw) in self.rewards.iter().enumerate() {
            if rw.len() != no {
                return Err(LabError::InvalidModel(format!("rewards[{h}] rows")));
            }
            for row in rw {
                if row.len() != na {
                    return Err(LabError::InvalidModel(format!("rewards[{h}] cols")));
                }
                for &r in row {
                    if !(0.0..=1.0).contains(&r) {
                        return Err(LabError::InvalidModel(format!(
                            "reward {r} outside [0,1] at step {h}"
                        )));
                    }
                }
            }
        }
        for (h, row) in self.reachable.iter().enumerate() {
            if row.len() != ns {
                return Err(LabError::InvalidModel(format!("reachable[{h}] len")));
            }
        }
        let closure = self.reachability_closure();
        if closure != self.reachable {
            return Err(LabError::InvalidModel(
                "reachability mask differs from dynamics closure".into(),
            ));
        }
        Ok(())
    }

    /// Known reward function lookup.
    #[inline]
    pub fn reward(&self, h: usize, o: usize, a: usize) -> f64 {
        self.rewards[h][o][a]
    }

    /// Exhaustively check that every realizable trajectory has total reward
    /// ≤ 1 (+tol). Walks the support of the *uniform-random* policy, which is
    /// the support of every policy. `cap` bounds visited nodes.
    pub fn check_total_reward_bound(&self, cap: usize) -> Result<f64> {
        let mut best: f64 = f64::NEG_INFINITY;
        let mut visited = 0usize;
        // Depth-first over (belief support, obs, action) with reward so far.
        // Only reward values matter, so collapse states to the *set* of
        // states with positive probability.
        let mut stack: Vec<(usize, Vec<bool>, f64)> = Vec::new();
        let init_supp: Vec<bool> = self.init.iter().map(|&p| p > 0.0).collect();
        stack.push((0, init_supp, 0.0));
        while let Some((h, supp, acc)) = stack.pop() {
            visited += 1;
            if visited > cap {
                return Err(LabError::CapExceeded { visited, cap });
            }
            if h == self.horizon {
                best = best.max(acc);
                continue;
            }
            for o in 0..self.n_observations() {
                let possible = (0..self.n_states())
                    .any(|s| supp[s] && self.emissions[h][s][o] > 0.0);
                if !possible {
                    continue;
                }
                let supp_o: Vec<bool> = (0..self.n_states())
                    .map(|s| supp[s] && self.emissions[h][s][o] > 0.0)
                    .collect();
                for a in 0..self.n_actions() {
                    let acc2 = acc + self.rewards[h][o][a];
                    if h + 1 == self.horizon {
                        best = best.max(acc2);
                        continue;
                    }
                    let mut next = vec![false; self.n_states()];
                    for s in 0..self.n_states() {
                        if !supp_o[s] {
                            continue;
                        }
                        for (s2, &p) in self.transitions[h][s][a].iter().enumerate() {
                            if p > 0.0 {
                                next[s2] = true;
                            }
                        }
                    }
                    stack.push((h + 1, next, acc2));
                }
            }
        }
        if best > 1.0 + ROW_SUM_TOL {
            return Err(LabError::InvalidModel(format!(
                "realizable total reward {best} exceeds 1"
            )));
        }
        Ok(best)
    }
}

fn check_prob_row(row: &[f64], what: &str) -> Result<()> {
    let mut sum = 0.0;
    for &p in row {
        if !(p >= 0.0) || !p.is_finite() {
            return Err(LabError::InvalidModel(format!("{what}: entry {p}")));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(LabError::InvalidModel(format!("{what}: row sum {sum}")));
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod testkit {
    use super::*;
    use crate::util::{random_simplex, rng_from_seed};
    use rand::Rng;

    /// A fully random dense POMDP (everything reachable); workhorse for
    /// property tests across modules.
    pub fn random_pomdp(seed: u64, horizon: usize, ns: usize, no: usize, na: usize) -> TabularPomdp {
        let mut rng = rng_from_seed(seed);
        let init = random_simplex(ns, &mut rng);
        let transitions = (0..horizon - 1)
            .map(|_| {
                (0..ns)
                    .map(|_| (0..na).map(|_| random_simplex(ns, &mut rng)).collect())
                    .collect()
            })
            .collect();
        let emissions = (0..horizon)
            .map(|_| (0..ns).map(|_| random_simplex(no, &mut rng)).collect())
            .collect();
        // Rewards scaled so any trajectory sums to ≤ 1.
        let rewards = (0..horizon)
            .map(|_| {
                (0..no)
                    .map(|_| {
                        (0..na)
                            .map(|_| rng.gen::<f64>() / horizon as f64)
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let pomdp = TabularPomdp {
            horizon,
            states: (0..ns).map(|i| format!("s{i}")).collect(),
            observations: (0..no).map(|i| format!("o{i}")).collect(),
            actions: (0..na).map(|i| format!("a{i}")).collect(),
            init,
            transitions,
            emissions,
            rewards,
            reachable: vec![vec![true; ns]; horizon],
        };
        pomdp.validate().expect("random pomdp must validate");
        pomdp
    }
}
