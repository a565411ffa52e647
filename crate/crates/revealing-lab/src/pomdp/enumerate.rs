use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::pomdp::policy::ActionChoice;
use crate::pomdp::{HistoryPolicy, Policy, TabularPomdp};

/// One trajectory with its exact probability under a (model, policy) pair.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrajItem {
    pub observations: Vec<usize>,
    pub actions: Vec<usize>,
    pub prob: f64,
    /// Realized total reward of this trajectory.
    pub reward: f64,
}

/// Exact distribution over complete trajectories.
#[derive(Clone, Debug, Default)]
pub struct TrajectoryDist {
    pub items: Vec<TrajItem>,
}

impl TrajectoryDist {
    pub fn total_prob(&self) -> f64 {
        crate::util::kahan_sum(self.items.iter().map(|i| i.prob))
    }

    /// Expected value of a trajectory functional.
    pub fn expect(&self, f: impl Fn(&TrajItem) -> f64) -> f64 {
        crate::util::kahan_sum(self.items.iter().map(|i| i.prob * f(i)))
    }

    /// Probability of a trajectory event.
    pub fn prob_of(&self, pred: impl Fn(&TrajItem) -> bool) -> f64 {
        crate::util::kahan_sum(self.items.iter().filter(|i| pred(i)).map(|i| i.prob))
    }
}

/// Depth-first walk over the support of the trajectory distribution,
/// invoking `visit(observations, actions, prob, reward)` per trajectory.
fn walk(
    pomdp: &TabularPomdp,
    policy: &Policy,
    cap: usize,
    mut visit: impl FnMut(&[usize], &[usize], f64, f64),
) -> Result<()> {
    struct Ctx<'a, F> {
        pomdp: &'a TabularPomdp,
        policy: &'a Policy,
        cap: usize,
        visited: usize,
        prefix: Vec<(usize, usize)>,
        visit: F,
    }

    fn rec<F: FnMut(&[usize], &[usize], f64, f64)>(
        ctx: &mut Ctx<'_, F>,
        h: usize,
        belief: &[f64],
        reward: f64,
    ) -> Result<()> {
        ctx.visited += 1;
        if ctx.visited > ctx.cap {
            return Err(LabError::CapExceeded {
                visited: ctx.visited,
                cap: ctx.cap,
            });
        }
        let ns = ctx.pomdp.n_states();
        for (s, &b) in belief.iter().enumerate() {
            if b > 0.0 && !ctx.pomdp.reachable[h][s] {
                return Err(LabError::MaskedRowAccess { step: h, state: s });
            }
        }
        for o in 0..ctx.pomdp.n_observations() {
            let mut belief_o = vec![0.0; ns];
            let mut mass = 0.0;
            for s in 0..ns {
                let w = belief[s] * ctx.pomdp.emissions[h][s][o];
                belief_o[s] = w;
                mass += w;
            }
            if mass <= 0.0 {
                continue;
            }
            let choice = ctx.policy.decide(h, &ctx.prefix, o);
            let action_probs: Vec<(usize, f64)> = match choice {
                ActionChoice::Det(a) => vec![(a, 1.0)],
                ActionChoice::Stoch(dist) => dist
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(a, &p)| (a, p))
                    .collect(),
            };
            for (a, pa) in action_probs {
                let r2 = reward + ctx.pomdp.rewards[h][o][a];
                ctx.prefix.push((o, a));
                if h + 1 == ctx.pomdp.horizon {
                    let (obs, acts): (Vec<usize>, Vec<usize>) =
                        ctx.prefix.iter().copied().unzip();
                    (ctx.visit)(&obs, &acts, mass * pa, r2);
                } else {
                    let mut next = vec![0.0; ns];
                    for s in 0..ns {
                        let w = belief_o[s] * pa;
                        if w == 0.0 {
                            continue;
                        }
                        for (s2, &t) in ctx.pomdp.transitions[h][s][a].iter().enumerate() {
                            next[s2] += w * t;
                        }
                    }
                    rec(ctx, h + 1, &next, r2)?;
                }
                ctx.prefix.pop();
            }
        }
        Ok(())
    }

    let mut ctx = Ctx {
        pomdp,
        policy,
        cap,
        visited: 0,
        prefix: Vec::with_capacity(pomdp.horizon),
        visit: &mut visit,
    };
    let init = pomdp.init.clone();
    rec(&mut ctx, 0, &init, 0.0)
}

/// Exact distribution over complete trajectories of `(pomdp, policy)`.
/// `cap` bounds visited enumeration nodes.
pub fn enumerate_distribution(
    pomdp: &TabularPomdp,
    policy: &Policy,
    cap: usize,
) -> Result<TrajectoryDist> {
    let mut dist = TrajectoryDist::default();
    walk(pomdp, policy, cap, |obs, acts, prob, reward| {
        dist.items.push(TrajItem {
            observations: obs.to_vec(),
            actions: acts.to_vec(),
            prob,
            reward,
        });
    })?;
    Ok(dist)
}

/// Exact policy value by trajectory enumeration. Works for every policy
/// representation; see [`policy_value_forward`] for the linear-time path.
pub fn policy_value(pomdp: &TabularPomdp, policy: &Policy, cap: usize) -> Result<f64> {
    let mut acc = crate::util::Kahan::new();
    walk(pomdp, policy, cap, |_, _, prob, reward| {
        acc.add(prob * reward);
    })?;
    Ok(acc.total())
}

/// Exact policy value by a forward pass over `(state, observation)` joint
/// marginals — no trajectory enumeration. Only valid for reactive policies
/// (action depends on at most `(h, o_h)`); errors on history policies.
pub fn policy_value_forward(pomdp: &TabularPomdp, policy: &Policy) -> Result<f64> {
    if !policy.is_reactive() {
        return Err(LabError::BadParams(
            "forward evaluator requires a reactive or open-loop policy".into(),
        ));
    }
    let ns = pomdp.n_states();
    let mut p = pomdp.init.clone();
    let mut value = crate::util::Kahan::new();
    for h in 0..pomdp.horizon {
        for (s, &w) in p.iter().enumerate() {
            if w > 0.0 && !pomdp.reachable[h][s] {
                return Err(LabError::MaskedRowAccess { step: h, state: s });
            }
        }
        let mut next = vec![0.0; ns];
        for s in 0..ns {
            if p[s] == 0.0 {
                continue;
            }
            for o in 0..pomdp.n_observations() {
                let w = p[s] * pomdp.emissions[h][s][o];
                if w == 0.0 {
                    continue;
                }
                for a in 0..pomdp.n_actions() {
                    let pa = policy.action_prob(h, &[], o, a);
                    if pa == 0.0 {
                        continue;
                    }
                    value.add(w * pa * pomdp.rewards[h][o][a]);
                    if h + 1 < pomdp.horizon {
                        for (s2, &t) in pomdp.transitions[h][s][a].iter().enumerate() {
                            next[s2] += w * pa * t;
                        }
                    }
                }
            }
        }
        p = next;
    }
    Ok(value.total())
}

/// Optimal value over all (deterministic, history-dependent) policies, by
/// exhaustive backward induction on the observable-history tree. Returns the
/// value and the optimizing policy as an explicit history table.
///
/// Argmax ties break to the smallest action index.
pub fn optimal_value_bruteforce(pomdp: &TabularPomdp, cap: usize) -> Result<(f64, Policy)> {
    struct Ctx<'a> {
        pomdp: &'a TabularPomdp,
        cap: usize,
        visited: usize,
        prefix: Vec<(usize, usize)>,
        table: std::collections::BTreeMap<String, usize>,
    }

    // Returns the optimal expected remaining reward, weighted by the
    // (unnormalized) probability mass of `belief`.
    fn rec(ctx: &mut Ctx<'_>, h: usize, belief: &[f64]) -> Result<f64> {
        if h == ctx.pomdp.horizon {
            return Ok(0.0);
        }
        ctx.visited += 1;
        if ctx.visited > ctx.cap {
            return Err(LabError::CapExceeded {
                visited: ctx.visited,
                cap: ctx.cap,
            });
        }
        let ns = ctx.pomdp.n_states();
        for (s, &b) in belief.iter().enumerate() {
            if b > 0.0 && !ctx.pomdp.reachable[h][s] {
                return Err(LabError::MaskedRowAccess { step: h, state: s });
            }
        }
        let mut total = crate::util::Kahan::new();
        for o in 0..ctx.pomdp.n_observations() {
            let mut belief_o = vec![0.0; ns];
            let mut mass = 0.0;
            for s in 0..ns {
                let w = belief[s] * ctx.pomdp.emissions[h][s][o];
                belief_o[s] = w;
                mass += w;
            }
            if mass <= 0.0 {
                continue;
            }
            let mut best = f64::NEG_INFINITY;
            let mut best_a = 0usize;
            for a in 0..ctx.pomdp.n_actions() {
                let immediate = mass * ctx.pomdp.rewards[h][o][a];
                let future = if h + 1 == ctx.pomdp.horizon {
                    0.0
                } else {
                    let mut next = vec![0.0; ns];
                    for s in 0..ns {
                        if belief_o[s] == 0.0 {
                            continue;
                        }
                        for (s2, &t) in ctx.pomdp.transitions[h][s][a].iter().enumerate() {
                            next[s2] += belief_o[s] * t;
                        }
                    }
                    ctx.prefix.push((o, a));
                    let v = rec(ctx, h + 1, &next)?;
                    ctx.prefix.pop();
                    v
                };
                let q = immediate + future;
                if q > best {
                    best = q;
                    best_a = a;
                }
            }
            let key = super::policy::history_key(&ctx.prefix, o);
            ctx.table.insert(key, best_a);
            total.add(best);
        }
        Ok(total.total())
    }

    let mut ctx = Ctx {
        pomdp,
        cap,
        visited: 0,
        prefix: Vec::with_capacity(pomdp.horizon),
        table: std::collections::BTreeMap::new(),
    };
    let init = pomdp.init.clone();
    let value = rec(&mut ctx, 0, &init)?;
    Ok((
        value,
        Policy::HistoryDet(HistoryPolicy {
            default_action: 0,
            table: ctx.table,
        }),
    ))
}
