//! Optimistic maximum-likelihood estimation over a finite model class.
//!
//! Each round keeps the set of models whose cumulative log-likelihood is
//! within `β` of the best,
//!
//! ```text
//! Θᵏ = { θ : Σ_{t<k} log P_θ(τ_t) ≥ max_θ' Σ_{t<k} log P_θ'(τ_t) − β },
//! ```
//!
//! picks the survivor claiming the highest optimal value, and plays that
//! model's own optimal policy. Likelihoods condition on the realized
//! actions, so the policy factor is common to every model and cancels from
//! the comparison; what accumulates is exactly
//! `Σ_h log P_θ(o_h | o_{<h}, a_{<h})`, computed by a normalized forward
//! belief filter. A zero-probability observation yields the `−∞` sentinel —
//! hard instances contain deterministic observations, and smoothing would
//! blunt exactly the eliminations they are built to force.
//!
//! With `β = C·log(|Θ|/δ)` the true model stays in every `Θᵏ` with
//! probability ≥ 1 − δ; the default `C` below was fixed by the one-time
//! calibration experiment.

use crate::error::{LabError, Result};
use crate::instances::{null_value, planted_value, Family, Theta};
use crate::learners::env::{EnvironmentHandle, Episode, LearnerReport};
use crate::pomdp::{optimal_value_bruteforce, Policy, TabularPomdp};

/// Default constant `C` in `β = C·log(|Θ|/δ)`.
pub const DEFAULT_BETA_C: f64 = 4.0;

/// The confidence-width schedule `β = c·log(class_size/δ)`.
pub fn omle_beta(class_size: usize, delta: f64, c: f64) -> f64 {
    c * (class_size as f64 / delta).ln()
}

/// Conditional log-likelihood `Σ_h log P_model(o_h | τ_{h−1})` of an
/// episode's observations given its actions, by a forward belief filter.
/// Returns `−∞` when some observation has probability zero.
pub fn log_likelihood(model: &TabularPomdp, episode: &Episode) -> f64 {
    let hh = model.horizon;
    debug_assert_eq!(episode.observations.len(), hh);
    debug_assert_eq!(episode.actions.len(), hh);
    let ns = model.n_states();
    let mut belief = model.init.clone();
    let mut total = 0.0;
    for h in 0..hh {
        let o = episode.observations[h];
        let mut mass = 0.0;
        for b in belief.iter_mut().enumerate() {
            let (s, b) = b;
            if *b > 0.0 {
                *b *= model.emissions[h][s][o];
                mass += *b;
            }
        }
        if mass <= 0.0 {
            return f64::NEG_INFINITY;
        }
        total += mass.ln();
        if h + 1 < hh {
            let a = episode.actions[h];
            let mut next = vec![0.0; ns];
            for (s, &w) in belief.iter().enumerate() {
                if w > 0.0 {
                    for (s2, &t) in model.transitions[h][s][a].iter().enumerate() {
                        if t > 0.0 {
                            next[s2] += w / mass * t;
                        }
                    }
                }
            }
            belief = next;
        }
    }
    total
}

/// One candidate model: its tables plus the optimal policy and value it
/// would claim if it were true.
#[derive(Clone, Debug)]
pub struct OmleModel {
    pub pomdp: TabularPomdp,
    pub policy: Policy,
    pub value: f64,
    pub label: String,
}

impl OmleModel {
    /// A planted family member with its closed-form optimum.
    pub fn planted(family: &Family, theta: &Theta, mu: &[i8]) -> Result<Self> {
        Ok(OmleModel {
            pomdp: family.build(theta, mu)?,
            policy: family.optimal_policy(theta)?,
            value: planted_value(family.meta().eps),
            label: theta_label(theta),
        })
    }

    /// The no-secret family member with its closed-form optimum.
    pub fn null(family: &Family) -> Result<Self> {
        Ok(OmleModel {
            pomdp: family.build_null()?,
            policy: family.null_optimal_policy(),
            value: null_value(family.meta().eps),
            label: "null".to_string(),
        })
    }

    /// An arbitrary model, planning by brute force over open-loop policies.
    pub fn from_pomdp(pomdp: TabularPomdp, cap: usize, label: &str) -> Result<Self> {
        let (value, policy) = optimal_value_bruteforce(&pomdp, cap)?;
        Ok(OmleModel { pomdp, policy, value, label: label.to_string() })
    }
}

fn theta_label(theta: &Theta) -> String {
    let digits = |pw: &[usize]| pw.iter().map(|a| a.to_string()).collect::<String>();
    match theta {
        Theta::SingleStep(t) => {
            format!("ss:h{}:s{}:a{}:pw{}", t.h_star, t.s_star, t.a_star, digits(&t.password))
        }
        Theta::Regret(t) => format!(
            "rg:h{}:s{}:a{}:r{}:pw{}",
            t.h_star,
            t.s_star,
            t.a_star,
            t.a_rev_star,
            digits(&t.password)
        ),
        Theta::Pac(t) => {
            format!("pc:h{}:s{}:a{}:pw{}", t.h_star, t.s_star, t.a_star, digits(&t.password))
        }
    }
}

/// The standard realizable class for a family: every planted `θ` (shared
/// bias pattern `μ`), in `enumerate_thetas` order, with the null model
/// appended last.
pub fn family_model_class(family: &Family, mu: &[i8], theta_cap: usize) -> Result<Vec<OmleModel>> {
    let thetas = family.enumerate_thetas(theta_cap)?;
    let mut class = Vec::with_capacity(thetas.len() + 1);
    for theta in &thetas {
        class.push(OmleModel::planted(family, theta, mu)?);
    }
    class.push(OmleModel::null(family)?);
    Ok(class)
}

/// Relative-threshold confidence set over a finite class.
#[derive(Clone, Debug)]
pub struct ConfidenceSet {
    loglik: Vec<f64>,
    beta: f64,
}

impl ConfidenceSet {
    pub fn new(class_size: usize, beta: f64) -> Result<Self> {
        if class_size == 0 {
            return Err(LabError::BadParams("confidence set over an empty class".into()));
        }
        if !(beta >= 0.0) {
            return Err(LabError::BadParams(format!("beta {beta} must be ≥ 0")));
        }
        Ok(ConfidenceSet { loglik: vec![0.0; class_size], beta })
    }

    /// Add one episode's per-model log-likelihoods.
    pub fn absorb(&mut self, increments: &[f64]) {
        debug_assert_eq!(increments.len(), self.loglik.len());
        for (ll, &inc) in self.loglik.iter_mut().zip(increments) {
            *ll += inc;
        }
    }

    pub fn max_loglik(&self) -> f64 {
        self.loglik.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Indices within `β` of the best; the maximizer always survives, so
    /// the set is never empty.
    pub fn active(&self) -> Vec<usize> {
        let cut = self.max_loglik();
        (0..self.loglik.len()).filter(|&i| self.loglik[i] >= cut - self.beta).collect()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.loglik[index] >= self.max_loglik() - self.beta
    }

    pub fn loglik(&self, index: usize) -> f64 {
        self.loglik[index]
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// Run optimistic MLE for `episodes` rounds. Each round plays the optimal
/// policy of the highest-value surviving model (ties to the smallest
/// index), then updates every model's likelihood on the observed episode.
///
/// `audit_true_index`, when given, only records per-round survival flags of
/// that model — it never influences a decision.
pub fn omle(
    class: &[OmleModel],
    env: &mut EnvironmentHandle,
    episodes: usize,
    beta: f64,
    audit_true_index: Option<usize>,
) -> Result<LearnerReport> {
    if class.is_empty() {
        return Err(LabError::BadParams("model class is empty".into()));
    }
    if episodes == 0 {
        return Err(LabError::BadParams("need at least one episode".into()));
    }
    if let Some(i) = audit_true_index {
        if i >= class.len() {
            return Err(LabError::BadParams(format!("audit index {i} outside class")));
        }
    }
    for m in class {
        if m.pomdp.horizon != env.horizon() || m.pomdp.n_observations() != env.n_observations() {
            return Err(LabError::BadParams(format!(
                "model '{}' does not match the environment's interface",
                m.label
            )));
        }
    }

    let mut set = ConfidenceSet::new(class.len(), beta)?;
    let mut survival = audit_true_index.map(|_| Vec::with_capacity(episodes));
    let mut plays = vec![0usize; class.len()];
    let start_episode = env.episodes();
    let trace_start = env.regret_trace().len();
    let mut choice = 0;

    for _ in 0..episodes {
        let active = set.active();
        if let (Some(flags), Some(truth)) = (survival.as_mut(), audit_true_index) {
            flags.push(active.contains(&truth));
        }
        choice = active[0];
        for &i in &active[1..] {
            if class[i].value > class[choice].value {
                choice = i;
            }
        }
        plays[choice] += 1;
        let episode = env.episode(&class[choice].policy)?;
        let increments: Vec<f64> =
            class.iter().map(|m| log_likelihood(&m.pomdp, &episode)).collect();
        set.absorb(&increments);
    }

    let event_counts = plays
        .iter()
        .enumerate()
        .filter(|(_, &n)| n > 0)
        .map(|(i, &n)| (format!("played:{}", class[i].label), n))
        .collect();
    Ok(LearnerReport {
        episodes: env.episodes() - start_episode,
        policy: class[choice].policy.clone(),
        regret_trace: env.regret_trace()[trace_start..].to_vec(),
        event_counts,
        finding: None,
        survival,
    })
}
