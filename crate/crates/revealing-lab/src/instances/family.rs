//! Shared surface for the three hard-instance families: closed-form values,
//! a metadata record describing each instance's geometry, dispatch enums for
//! configs/parameters, and the value/regret floors that hold for every
//! planted parameter.
//!
//! All families reward only the final observation — `good` pays 1 and the
//! root observation pays `(1+ε)/4` — so optimal values have two-point
//! closed forms: the planted optimum is
//! `(1−ε)·1/4 + ε·3/4 = (1+2ε)/4` (ride the gate, then hold the lock to
//! the good/bad coin flip) and the null optimum is `(1+ε)/4` (stay home).
//! Any policy therefore pays at least `(ε/4)·P(missed the root payoff)`
//! under the null model and `(ε/4)·P(settled for the root payoff)` under a
//! planted one, and revealing mid-episode forfeits the terminal reward
//! entirely — the floors exported here as [`planted_suboptimality_floor`],
//! [`null_suboptimality_floor`], and [`null_regret_floor`].

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::instances::pac::{PacFamily, PacParams, PacTheta};
use crate::instances::regret::{RegretFamily, RegretParams, RegretTheta};
use crate::instances::single_step::{SingleStepFamily, SingleStepParams, SingleStepTheta};
use crate::pomdp::{Policy, TabularPomdp, TrajectoryDist};

/// Optimal value of a planted instance: `(1+2ε)/4`.
pub fn planted_value(eps: f64) -> f64 {
    (1.0 + 2.0 * eps) / 4.0
}

/// Optimal value of a null instance: `(1+ε)/4`.
pub fn null_value(eps: f64) -> f64 {
    (1.0 + eps) / 4.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    /// Single-step revealing; the signal hides in per-step coin biases.
    SingleStep,
    /// Multi-step revealing with a dedicated reveal-action block.
    Regret,
    /// Multi-step revealing with `L` parallel lock copies.
    Pac,
}

/// Instance geometry shared by analysis code: index layout, reveal
/// structure, the certification window with its norm bound, and the
/// closed-form values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyMeta {
    pub kind: FamilyKind,
    pub horizon: usize,
    pub n_states: usize,
    pub n_observations: usize,
    pub n_actions: usize,
    pub tree_level: usize,
    pub leaf_states: Vec<usize>,
    pub root_obs: usize,
    pub coin_obs: Vec<usize>,
    pub good_obs: usize,
    pub bad_obs: usize,
    /// Lock observations (empty when the family has no lock phase).
    pub lock_obs: Vec<usize>,
    /// Steps at which a reveal action has an effect.
    pub reveal_steps: Vec<usize>,
    /// Actions that trigger a reveal at those steps.
    pub reveal_actions: Vec<usize>,
    /// Admissible planted steps `h*`.
    pub h_star_choices: Vec<usize>,
    /// Window at which the family certifies.
    pub window: usize,
    /// Closed-form bound on the certified `(*→1)` norm: `1 + 2/σ`.
    pub alpha_inv_bound: f64,
    pub eps: f64,
    pub sigma: f64,
    pub value_planted: f64,
    pub value_null: f64,
}

/// Parameters for any of the three families, tagged for config files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum FamilyConfig {
    SingleStep(SingleStepParams),
    Regret(RegretParams),
    Pac(PacParams),
}

impl FamilyConfig {
    pub fn into_family(self) -> Result<Family> {
        match self {
            FamilyConfig::SingleStep(p) => Ok(Family::SingleStep(SingleStepFamily::new(p)?)),
            FamilyConfig::Regret(p) => Ok(Family::Regret(RegretFamily::new(p)?)),
            FamilyConfig::Pac(p) => Ok(Family::Pac(PacFamily::new(p)?)),
        }
    }
}

/// Planted parameters for any of the three families.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Theta {
    SingleStep(SingleStepTheta),
    Regret(RegretTheta),
    Pac(PacTheta),
}

/// A constructed family of either kind, dispatching the common operations.
#[derive(Clone, Debug)]
pub enum Family {
    SingleStep(SingleStepFamily),
    Regret(RegretFamily),
    Pac(PacFamily),
}

impl Family {
    pub fn kind(&self) -> FamilyKind {
        match self {
            Family::SingleStep(_) => FamilyKind::SingleStep,
            Family::Regret(_) => FamilyKind::Regret,
            Family::Pac(_) => FamilyKind::Pac,
        }
    }

    pub fn config(&self) -> FamilyConfig {
        match self {
            Family::SingleStep(f) => FamilyConfig::SingleStep(f.params().clone()),
            Family::Regret(f) => FamilyConfig::Regret(f.params().clone()),
            Family::Pac(f) => FamilyConfig::Pac(f.params().clone()),
        }
    }

    pub fn meta(&self) -> FamilyMeta {
        match self {
            Family::SingleStep(f) => f.meta(),
            Family::Regret(f) => f.meta(),
            Family::Pac(f) => f.meta(),
        }
    }

    /// Length of the coin-bias vector `μ` this family expects.
    pub fn mu_len(&self) -> usize {
        match self {
            Family::SingleStep(f) => f.params().coin_pairs,
            Family::Regret(f) => f.params().coin_pairs,
            Family::Pac(f) => f.params().lock_copies * f.params().coin_pairs,
        }
    }

    pub fn build(&self, theta: &Theta, mu: &[i8]) -> Result<TabularPomdp> {
        match (self, theta) {
            (Family::SingleStep(f), Theta::SingleStep(t)) => f.build(t, mu),
            (Family::Regret(f), Theta::Regret(t)) => f.build(t, mu),
            (Family::Pac(f), Theta::Pac(t)) => f.build(t, mu),
            _ => Err(LabError::BadParams("theta kind does not match family".into())),
        }
    }

    pub fn build_null(&self) -> Result<TabularPomdp> {
        match self {
            Family::SingleStep(f) => f.build_null(),
            Family::Regret(f) => f.build_null(),
            Family::Pac(f) => f.build_null(),
        }
    }

    pub fn random_theta<R: rand::Rng>(&self, rng: &mut R) -> Theta {
        match self {
            Family::SingleStep(f) => Theta::SingleStep(f.random_theta(rng)),
            Family::Regret(f) => Theta::Regret(f.random_theta(rng)),
            Family::Pac(f) => Theta::Pac(f.random_theta(rng)),
        }
    }

    pub fn random_mu<R: rand::Rng>(&self, rng: &mut R) -> Vec<i8> {
        match self {
            Family::SingleStep(f) => f.random_mu(rng),
            Family::Regret(f) => f.random_mu(rng),
            Family::Pac(f) => f.random_mu(rng),
        }
    }

    pub fn theta_count(&self) -> Option<u128> {
        match self {
            Family::SingleStep(f) => f.theta_count(),
            Family::Regret(f) => f.theta_count(),
            Family::Pac(f) => f.theta_count(),
        }
    }

    pub fn enumerate_thetas(&self, cap: usize) -> Result<Vec<Theta>> {
        Ok(match self {
            Family::SingleStep(f) => f
                .enumerate_thetas(cap)?
                .into_iter()
                .map(Theta::SingleStep)
                .collect(),
            Family::Regret(f) => f.enumerate_thetas(cap)?.into_iter().map(Theta::Regret).collect(),
            Family::Pac(f) => f.enumerate_thetas(cap)?.into_iter().map(Theta::Pac).collect(),
        })
    }

    /// The open-loop policy that realizes `(1+2ε)/4` under `theta`.
    pub fn optimal_policy(&self, theta: &Theta) -> Result<Policy> {
        match (self, theta) {
            (Family::SingleStep(f), Theta::SingleStep(t)) => Ok(f.optimal_policy(t)),
            (Family::Regret(f), Theta::Regret(t)) => Ok(f.optimal_policy(t)),
            (Family::Pac(f), Theta::Pac(t)) => Ok(f.optimal_policy(t)),
            _ => Err(LabError::BadParams("theta kind does not match family".into())),
        }
    }

    pub fn null_optimal_policy(&self) -> Policy {
        match self {
            Family::SingleStep(f) => f.null_optimal_policy(),
            Family::Regret(f) => f.null_optimal_policy(),
            Family::Pac(f) => f.null_optimal_policy(),
        }
    }
}

/// Under a planted model, every policy pays at least
/// `(ε/4) · P(final observation = root)`.
pub fn planted_suboptimality_floor(meta: &FamilyMeta, dist: &TrajectoryDist) -> f64 {
    let root = meta.root_obs;
    meta.eps / 4.0 * dist.prob_of(|item| item.observations.last() == Some(&root))
}

/// Under the null model, every policy pays at least
/// `(ε/4) · P(final observation ≠ root)`.
pub fn null_suboptimality_floor(meta: &FamilyMeta, dist: &TrajectoryDist) -> f64 {
    let root = meta.root_obs;
    meta.eps / 4.0 * dist.prob_of(|item| item.observations.last() != Some(&root))
}

/// Probability that an episode triggers a reveal: some reveal step shows a
/// lock observation and the policy answers with a reveal action.
pub fn reveal_event_prob(meta: &FamilyMeta, dist: &TrajectoryDist) -> f64 {
    dist.prob_of(|item| {
        meta.reveal_steps.iter().any(|&h| {
            meta.lock_obs.contains(&item.observations[h])
                && meta.reveal_actions.contains(&item.actions[h])
        })
    })
}

/// Null-model regret floor for one episode: the stay-home gap plus the
/// forfeited terminal reward `(1/4) · P(reveal event)`.
pub fn null_regret_floor(meta: &FamilyMeta, dist: &TrajectoryDist) -> f64 {
    null_suboptimality_floor(meta, dist) + 0.25 * reveal_event_prob(meta, dist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pomdp::enumerate_distribution;
    use crate::util::rng_from_seed;

    #[test]
    fn closed_form_values() {
        assert_eq!(planted_value(0.1), 0.3);
        assert_eq!(null_value(0.1), 0.275);
        assert!(planted_value(0.05) > null_value(0.05));
    }

    fn regret_config() -> FamilyConfig {
        FamilyConfig::Regret(RegretParams {
            horizon: 6,
            tree_level: 1,
            n_actions: 3,
            coin_pairs: 2,
            stride: 2,
            eps: 0.1,
            sigma: 0.5,
            unchecked: true,
        })
    }

    #[test]
    fn config_round_trips_with_tag() {
        let cfg = regret_config();
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(json.contains("\"family\":\"regret\""), "{json}");
        let back: FamilyConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn dispatch_builds_and_checks_kinds() {
        let fam = regret_config().into_family().unwrap();
        assert_eq!(fam.kind(), FamilyKind::Regret);
        assert_eq!(fam.mu_len(), 2);
        let mut rng = rng_from_seed(7);
        let theta = fam.random_theta(&mut rng);
        let mu = fam.random_mu(&mut rng);
        let m = fam.build(&theta, &mu).unwrap();
        assert_eq!(m.horizon, 6);
        // A theta of the wrong kind is rejected.
        let alien = Theta::SingleStep(SingleStepTheta {
            h_star: 1,
            s_star: 0,
            a_star: 1,
            password: vec![],
        });
        assert!(fam.build(&alien, &mu).is_err());
    }

    #[test]
    fn floors_for_the_stay_home_policy() {
        let fam = regret_config().into_family().unwrap();
        let meta = fam.meta();
        let null = fam.build_null().unwrap();
        let home = fam.null_optimal_policy();
        let dist = enumerate_distribution(&null, &home, 1_000_000).unwrap();
        // Staying home never reveals and always ends at the root.
        assert_eq!(reveal_event_prob(&meta, &dist), 0.0);
        assert_eq!(null_suboptimality_floor(&meta, &dist), 0.0);
        assert_eq!(null_regret_floor(&meta, &dist), 0.0);
        // Under a planted model the same policy ends at the root, so the
        // planted floor is the full ε/4.
        let mut rng = rng_from_seed(11);
        let theta = fam.random_theta(&mut rng);
        let mu = fam.random_mu(&mut rng);
        let planted = fam.build(&theta, &mu).unwrap();
        let dist_p = enumerate_distribution(&planted, &home, 1_000_000).unwrap();
        let floor = planted_suboptimality_floor(&meta, &dist_p);
        assert!((floor - meta.eps / 4.0).abs() < 1e-15, "floor {floor}");
    }
}
