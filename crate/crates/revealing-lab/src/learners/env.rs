//! The simulated-environment boundary that keeps learners honest.
//!
//! [`EnvironmentHandle`] owns the true model and a seeded sampler and exposes
//! exactly one interaction: submit a policy, receive the observable episode
//! `(o_0, a_0, …, o_{H-1}, a_{H-1})` plus its realized reward. The hidden
//! parameters — which `θ` (if any) was planted, the bias pattern `μ`, the
//! latent state sequence — never cross the boundary: [`Episode`] carries no
//! latent field, and nothing on the handle returns the wrapped model.
//!
//! For audit purposes the handle also keeps books the learner must not read:
//! a per-episode regret trace `V* − V(π_t)` computed from exact policy
//! values (so every entry is ≥ 0), and an optional latent-state log. Latent
//! tracing never touches the RNG, so enabling it cannot change any sampled
//! episode — a property the hygiene tests rely on.

use std::collections::{BTreeMap, HashMap};

use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::instances::{null_value, planted_value, Family, FamilyMeta, Theta};
use crate::pomdp::{policy_value, policy_value_forward, Policy, Simulator, TabularPomdp};
use crate::util::rng_from_seed;

/// Trajectory-enumeration cap used when a history-dependent policy forces
/// value computation off the linear forward path.
const HISTORY_VALUE_CAP: usize = 2_000_000;

/// What a learner is allowed to see of one rollout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub observations: Vec<usize>,
    pub actions: Vec<usize>,
    /// Realized total reward of the episode.
    pub reward: f64,
}

/// What a learner concluded about the environment's hidden parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum Finding {
    /// No planted signal found anywhere: the no-secret model.
    Null,
    /// A planted secret, recovered exactly.
    Planted { theta: Theta },
}

/// Uniform output record of every learner in this module.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerReport {
    /// Episodes consumed from the environment.
    pub episodes: usize,
    /// The policy the learner stands behind at the end.
    pub policy: Policy,
    /// Per-episode instantaneous regret `V* − V(π_t)`, from exact values.
    pub regret_trace: Vec<f64>,
    /// Visitation counts of declared observable events; each ≤ `episodes`.
    pub event_counts: BTreeMap<String, usize>,
    /// Identification verdict, when the learner makes one.
    pub finding: Option<Finding>,
    /// Per-round audit flags (true-model-survived), when requested.
    pub survival: Option<Vec<bool>>,
}

impl LearnerReport {
    pub fn cumulative_regret(&self) -> f64 {
        crate::util::kahan_sum(self.regret_trace.iter().copied())
    }
}

/// Counts of observable events over a stream of episodes. All predicates
/// read only `(observations, actions)` — they are exactly the events a
/// learner itself could tally.
#[derive(Clone, Debug, Default)]
pub struct EventTally {
    /// Episodes with a non-wait action while observing a tree leaf.
    pub leaf_exit: usize,
    /// Episodes with a reveal action answered at a lock observation on a
    /// reveal step.
    pub reveal_echo: usize,
    /// Episodes whose final observation is `good`.
    pub terminal_good: usize,
}

impl EventTally {
    pub fn observe(&mut self, meta: &FamilyMeta, ep: &Episode) {
        let exited = ep
            .observations
            .iter()
            .zip(&ep.actions)
            .any(|(o, &a)| meta.leaf_states.contains(o) && a != 0);
        if exited {
            self.leaf_exit += 1;
        }
        let echoed = meta.reveal_steps.iter().any(|&l| {
            meta.lock_obs.contains(&ep.observations[l]) && meta.reveal_actions.contains(&ep.actions[l])
        });
        if echoed {
            self.reveal_echo += 1;
        }
        if ep.observations.last() == Some(&meta.good_obs) {
            self.terminal_good += 1;
        }
    }

    pub fn into_counts(self) -> BTreeMap<String, usize> {
        BTreeMap::from([
            ("leaf-exit".to_string(), self.leaf_exit),
            ("reveal-echo".to_string(), self.reveal_echo),
            ("terminal-good".to_string(), self.terminal_good),
        ])
    }
}

/// A sealed environment: the true model, a seeded sampler, an episode
/// counter, and audit-side books.
pub struct EnvironmentHandle {
    model: TabularPomdp,
    sim: Simulator,
    rng: ChaCha12Rng,
    v_star: f64,
    cap: Option<usize>,
    episodes: usize,
    regret_trace: Vec<f64>,
    value_cache: HashMap<String, f64>,
    trace_latents: bool,
    latent_log: Vec<Vec<usize>>,
}

impl EnvironmentHandle {
    /// Wrap an arbitrary model. `v_star` must be the exact optimal value —
    /// the regret trace is only meaningful relative to it.
    pub fn new(model: TabularPomdp, v_star: f64, seed: u64) -> Self {
        let sim = Simulator::new(&model);
        EnvironmentHandle {
            model,
            sim,
            rng: rng_from_seed(seed),
            v_star,
            cap: None,
            episodes: 0,
            regret_trace: Vec::new(),
            value_cache: HashMap::new(),
            trace_latents: false,
            latent_log: Vec::new(),
        }
    }

    /// Build a family member — planted `(θ, μ)` or null — with its
    /// closed-form optimal value.
    pub fn from_family(family: &Family, planted: Option<(&Theta, &[i8])>, seed: u64) -> Result<Self> {
        let eps = family.meta().eps;
        let (model, v_star) = match planted {
            Some((theta, mu)) => (family.build(theta, mu)?, planted_value(eps)),
            None => (family.build_null()?, null_value(eps)),
        };
        Ok(EnvironmentHandle::new(model, v_star, seed))
    }

    /// Refuse to run more than `cap` episodes in total.
    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = Some(cap);
        self
    }

    /// Run one episode of `policy`. Increments the episode counter exactly
    /// once and appends one regret-trace entry.
    pub fn episode(&mut self, policy: &Policy) -> Result<Episode> {
        if let Some(cap) = self.cap {
            if self.episodes >= cap {
                return Err(LabError::CapExceeded { visited: self.episodes + 1, cap });
            }
        }
        let value = self.policy_value_cached(policy)?;
        let traj = self.sim.episode(policy, &mut self.rng)?;
        self.episodes += 1;
        debug_assert!(value <= self.v_star + 1e-9, "policy value {value} above V* {}", self.v_star);
        self.regret_trace.push((self.v_star - value).max(0.0));
        if self.trace_latents {
            if let Some(latent) = &traj.latent {
                self.latent_log.push(latent.clone());
            }
        }
        Ok(Episode {
            observations: traj.observations,
            actions: traj.actions,
            reward: traj.reward,
        })
    }

    pub fn episodes(&self) -> usize {
        self.episodes
    }

    // Public dimensions: a learner may know the shape of the interface.
    pub fn horizon(&self) -> usize {
        self.sim.horizon()
    }

    pub fn n_observations(&self) -> usize {
        self.sim.n_observations()
    }

    pub fn n_actions(&self) -> usize {
        self.sim.n_actions()
    }

    /// Audit accessor: the per-episode regret trace. Report plumbing only —
    /// a learner that branched on this would be reading `V*`, which encodes
    /// whether a secret was planted.
    pub fn regret_trace(&self) -> &[f64] {
        &self.regret_trace
    }

    pub fn cumulative_regret(&self) -> f64 {
        crate::util::kahan_sum(self.regret_trace.iter().copied())
    }

    /// Toggle audit-side latent logging. Never consumes randomness, so the
    /// sampled episodes are identical either way.
    pub fn set_latent_tracing(&mut self, on: bool) {
        self.trace_latents = on;
    }

    /// Audit accessor: logged latent-state sequences.
    pub fn latent_log(&self) -> &[Vec<usize>] {
        &self.latent_log
    }

    fn policy_value_cached(&mut self, policy: &Policy) -> Result<f64> {
        let key = serde_json::to_string(policy)?;
        if let Some(&v) = self.value_cache.get(&key) {
            return Ok(v);
        }
        let v = if policy.is_reactive() {
            policy_value_forward(&self.model, policy)?
        } else {
            policy_value(&self.model, policy, HISTORY_VALUE_CAP)?
        };
        self.value_cache.insert(key, v);
        Ok(v)
    }
}
