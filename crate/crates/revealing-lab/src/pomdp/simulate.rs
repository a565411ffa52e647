use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::pomdp::{Policy, TabularPomdp};
use crate::util::rng_from_seed;

/// One sampled episode. `latent` carries the hidden state trace when the
/// sampler was asked to keep it; learner-facing copies strip it.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Trajectory {
    pub observations: Vec<usize>,
    pub actions: Vec<usize>,
    /// Realized total reward Σ_h r_h(o_h, a_h).
    pub reward: f64,
    pub latent: Option<Vec<usize>>,
}

impl Trajectory {
    pub fn without_latent(mut self) -> Self {
        self.latent = None;
        self
    }
}

/// Precomputed cumulative-weight tables for fast repeated sampling from one
/// model. Learner experiments draw millions of episodes, so the sampler
/// avoids re-walking nested `Vec`s per draw.
pub struct Simulator {
    horizon: usize,
    n_states: usize,
    n_obs: usize,
    n_actions: usize,
    init_cum: Vec<f64>,
    /// `emit_cum[h][s]`: cumulative emission row (empty for masked pairs).
    emit_cum: Vec<Vec<Vec<f64>>>,
    /// `trans_cum[h][s][a]`: cumulative transition row (empty rows masked).
    trans_cum: Vec<Vec<Vec<Vec<f64>>>>,
    rewards: Vec<Vec<Vec<f64>>>,
}

fn cumulative(row: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    row.iter()
        .map(|&p| {
            acc += p;
            acc
        })
        .collect()
}

fn draw(cum: &[f64], u: f64) -> usize {
    // cum is nondecreasing ending at ~1; binary search for the first entry
    // ≥ u, robust to the final cumulative being 1-1e-16.
    match cum.binary_search_by(|c| c.partial_cmp(&u).unwrap()) {
        Ok(i) => i,
        Err(i) => i.min(cum.len() - 1),
    }
}

impl Simulator {
    pub fn new(pomdp: &TabularPomdp) -> Self {
        let horizon = pomdp.horizon;
        let emit_cum = (0..horizon)
            .map(|h| {
                (0..pomdp.n_states())
                    .map(|s| {
                        if pomdp.reachable[h][s] {
                            cumulative(&pomdp.emissions[h][s])
                        } else {
                            Vec::new()
                        }
                    })
                    .collect()
            })
            .collect();
        let trans_cum = (0..horizon - 1)
            .map(|h| {
                (0..pomdp.n_states())
                    .map(|s| {
                        if pomdp.reachable[h][s] {
                            (0..pomdp.n_actions())
                                .map(|a| cumulative(&pomdp.transitions[h][s][a]))
                                .collect()
                        } else {
                            Vec::new()
                        }
                    })
                    .collect()
            })
            .collect();
        Simulator {
            horizon,
            n_states: pomdp.n_states(),
            n_obs: pomdp.n_observations(),
            n_actions: pomdp.n_actions(),
            init_cum: cumulative(&pomdp.init),
            emit_cum,
            trans_cum,
            rewards: pomdp.rewards.clone(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_observations(&self) -> usize {
        self.n_obs
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// Sample one episode under `policy`.
    pub fn episode<R: Rng>(&self, policy: &Policy, rng: &mut R) -> Result<Trajectory> {
        let mut obs = Vec::with_capacity(self.horizon);
        let mut acts = Vec::with_capacity(self.horizon);
        let mut latent = Vec::with_capacity(self.horizon);
        let mut prefix: Vec<(usize, usize)> = Vec::with_capacity(self.horizon);
        let mut reward = 0.0;
        let mut s = draw(&self.init_cum, rng.gen::<f64>());
        for h in 0..self.horizon {
            let emit = &self.emit_cum[h][s];
            if emit.is_empty() {
                return Err(LabError::MaskedRowAccess { step: h, state: s });
            }
            let o = draw(emit, rng.gen::<f64>());
            let a = match policy.decide(h, &prefix, o) {
                super::policy::ActionChoice::Det(a) => a,
                super::policy::ActionChoice::Stoch(dist) => {
                    draw(&cumulative(&dist), rng.gen::<f64>())
                }
            };
            reward += self.rewards[h][o][a];
            obs.push(o);
            acts.push(a);
            latent.push(s);
            prefix.push((o, a));
            if h + 1 < self.horizon {
                let row = &self.trans_cum[h][s];
                if row.is_empty() {
                    return Err(LabError::MaskedRowAccess { step: h, state: s });
                }
                s = draw(&row[a], rng.gen::<f64>());
            }
        }
        Ok(Trajectory {
            observations: obs,
            actions: acts,
            reward,
            latent: Some(latent),
        })
    }
}

/// Sample a single trajectory with a fresh deterministic RNG.
pub fn sample_trajectory(pomdp: &TabularPomdp, policy: &Policy, seed: u64) -> Result<Trajectory> {
    let sim = Simulator::new(pomdp);
    let mut rng = rng_from_seed(seed);
    sim.episode(policy, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pomdp::model::testkit::random_pomdp;
    use std::collections::HashMap;

    #[test]
    fn seeded_sampling_is_reproducible() {
        let m = random_pomdp(21, 4, 3, 3, 2);
        let pi = Policy::uniform_random(4, 3, 2);
        let t1 = sample_trajectory(&m, &pi, 99).unwrap();
        let t2 = sample_trajectory(&m, &pi, 99).unwrap();
        assert_eq!(t1, t2);
        let t3 = sample_trajectory(&m, &pi, 100).unwrap();
        assert!(t1 != t3 || t1.observations == t3.observations);
    }

    /// Monte-Carlo frequencies must match the exact enumerated distribution.
    /// This is the sampling oracle: enumeration is independent code.
    #[test]
    fn sampling_matches_enumeration() {
        let m = random_pomdp(33, 3, 2, 2, 2);
        let pi = Policy::uniform_random(3, 2, 2);
        let exact = crate::pomdp::enumerate_distribution(&m, &pi, 1_000_000).unwrap();
        let sim = Simulator::new(&m);
        let mut rng = crate::util::rng_from_seed(7);
        let n = 200_000;
        let mut counts: HashMap<(Vec<usize>, Vec<usize>), usize> = HashMap::new();
        for _ in 0..n {
            let t = sim.episode(&pi, &mut rng).unwrap();
            *counts.entry((t.observations, t.actions)).or_default() += 1;
        }
        for item in &exact.items {
            let k = (item.observations.clone(), item.actions.clone());
            let freq = *counts.get(&k).unwrap_or(&0) as f64 / n as f64;
            // 200k samples: binomial std ≤ 0.0012; allow 5 sigma.
            assert!(
                (freq - item.prob).abs() < 6e-3,
                "freq {freq} vs exact {} for {k:?}",
                item.prob
            );
        }
    }
}
