use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::divergence::dist::{divergences, FiniteDistribution};
use crate::error::{LabError, Result};
use crate::pomdp::{enumerate_distribution, Policy, TabularPomdp};
use crate::util::Kahan;

/// How an interaction of `T` episodes picks its per-episode policy. The
/// `TwoBranch` variant is a genuinely adaptive two-episode rule — the second
/// policy depends on what the first episode observed — exercising the claim
/// that the mixture identity holds for adaptive algorithms, not just fixed
/// policy sequences.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "schedule", rename_all = "kebab-case")]
pub enum Schedule {
    /// Episode `t` runs `policies[t]`.
    PerEpisode(Vec<Policy>),
    /// Two episodes: run `first`, then `if_seen` when `first`'s trajectory
    /// contained `trigger_obs` and `otherwise` when it did not.
    TwoBranch {
        first: Policy,
        trigger_obs: usize,
        if_seen: Policy,
        otherwise: Policy,
    },
}

impl Schedule {
    pub fn episodes(&self) -> usize {
        match self {
            Schedule::PerEpisode(policies) => policies.len(),
            Schedule::TwoBranch { .. } => 2,
        }
    }
}

/// One episode's trajectory probabilities under every model at once,
/// aligned on the union of supports. Row order is enumeration order of the
/// reference model, then novel keys from the others (which must all carry
/// zero reference probability only if they carry zero probability under
/// every model — otherwise the reference does not dominate and the walk
/// refuses to start).
pub(crate) struct EpisodeTable {
    pub keys: Vec<(Vec<usize>, Vec<usize>)>,
    /// `probs[k][m]` = probability of `keys[k]` under model `m`; column 0 is
    /// the reference.
    pub probs: Vec<Vec<f64>>,
}

fn episode_table(models: &[&TabularPomdp], policy: &Policy, cap: usize) -> Result<EpisodeTable> {
    let mut index: HashMap<(Vec<usize>, Vec<usize>), usize> = HashMap::new();
    let mut keys: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    let mut probs: Vec<Vec<f64>> = Vec::new();
    for (m, model) in models.iter().enumerate() {
        let dist = enumerate_distribution(model, policy, cap)?;
        for item in dist.items {
            let key = (item.observations, item.actions);
            let k = match index.get(&key) {
                Some(&k) => k,
                None => {
                    keys.push(key.clone());
                    probs.push(vec![0.0; models.len()]);
                    index.insert(key, keys.len() - 1);
                    keys.len() - 1
                }
            };
            probs[k][m] += item.prob;
        }
    }
    // Drop trajectories no model can produce through the reference, erroring
    // when some model escapes the reference's support: the ratio identities
    // below are only defined under domination.
    let mut kept_keys = Vec::with_capacity(keys.len());
    let mut kept_probs = Vec::with_capacity(probs.len());
    for (key, row) in keys.into_iter().zip(probs) {
        if row[0] > 0.0 {
            kept_keys.push(key);
            kept_probs.push(row);
        } else if row.iter().any(|&p| p > 0.0) {
            return Err(LabError::BadParams(
                "a mixture model puts trajectory mass outside the reference support".into(),
            ));
        }
    }
    Ok(EpisodeTable { keys: kept_keys, probs: kept_probs })
}

/// Per-episode trajectory tables induced by a schedule, plus the rule that
/// assigns a table to each episode during the tuple walk.
pub(crate) struct ScheduleTables {
    pub tables: Vec<EpisodeTable>,
    plan: Plan,
}

enum Plan {
    /// `slot[t]` is the table index of episode `t`.
    PerEpisode(Vec<usize>),
    /// Tables are `[first, if_seen, otherwise]`.
    TwoBranch { trigger_obs: usize },
}

impl ScheduleTables {
    pub fn build(
        models: &[&TabularPomdp],
        schedule: &Schedule,
        cap: usize,
    ) -> Result<ScheduleTables> {
        let (h, no, na) = (
            models[0].horizon,
            models[0].n_observations(),
            models[0].n_actions(),
        );
        if models
            .iter()
            .any(|m| m.horizon != h || m.n_observations() != no || m.n_actions() != na)
        {
            return Err(LabError::BadParams(
                "all models must share horizon, observation, and action spaces".into(),
            ));
        }
        match schedule {
            Schedule::PerEpisode(policies) => {
                if policies.is_empty() {
                    return Err(LabError::BadParams("schedule has no episodes".into()));
                }
                let tables = policies
                    .iter()
                    .map(|policy| episode_table(models, policy, cap))
                    .collect::<Result<Vec<_>>>()?;
                let plan = Plan::PerEpisode((0..tables.len()).collect());
                Ok(ScheduleTables { tables, plan })
            }
            Schedule::TwoBranch { first, trigger_obs, if_seen, otherwise } => {
                if *trigger_obs >= no {
                    return Err(LabError::BadParams(format!(
                        "trigger observation {trigger_obs} out of range"
                    )));
                }
                let tables = vec![
                    episode_table(models, first, cap)?,
                    episode_table(models, if_seen, cap)?,
                    episode_table(models, otherwise, cap)?,
                ];
                Ok(ScheduleTables { tables, plan: Plan::TwoBranch { trigger_obs: *trigger_obs } })
            }
        }
    }

    fn second_table(&self, first_key: usize) -> usize {
        match self.plan {
            Plan::PerEpisode(_) => unreachable!("branching only happens on two-branch plans"),
            Plan::TwoBranch { trigger_obs } => {
                if self.tables[0].keys[first_key].0.contains(&trigger_obs) {
                    1
                } else {
                    2
                }
            }
        }
    }

    /// Exact number of trajectory tuples the walk will visit.
    pub fn tuple_count(&self) -> usize {
        match &self.plan {
            Plan::PerEpisode(slots) => slots
                .iter()
                .map(|&t| self.tables[t].keys.len())
                .fold(1usize, usize::saturating_mul),
            Plan::TwoBranch { .. } => (0..self.tables[0].keys.len())
                .map(|k| self.tables[self.second_table(k)].keys.len())
                .fold(0usize, usize::saturating_add),
        }
    }

    /// Visits every trajectory tuple with positive reference probability.
    /// `visit` receives the per-model probability products (reference first)
    /// and the tuple itself as `(table, key)` index pairs, one per episode.
    pub fn walk_tuples(
        &self,
        cap: usize,
        mut visit: impl FnMut(&[f64], &[(usize, usize)]) -> Result<()>,
    ) -> Result<usize> {
        let total = self.tuple_count();
        if total > cap {
            return Err(LabError::CapExceeded { visited: total, cap });
        }
        let n_models = self.tables[0].probs.first().map_or(0, Vec::len);
        let slots: Vec<usize> = match &self.plan {
            Plan::PerEpisode(slots) => slots.clone(),
            // Placeholder second slot; resolved per first-episode key below.
            Plan::TwoBranch { .. } => vec![0, usize::MAX],
        };
        let mut products = vec![1.0; n_models];
        let mut chosen: Vec<(usize, usize)> = Vec::with_capacity(slots.len());
        self.rec(&slots, 0, &mut products, &mut chosen, &mut visit)?;
        Ok(total)
    }

    fn rec(
        &self,
        slots: &[usize],
        episode: usize,
        products: &mut Vec<f64>,
        chosen: &mut Vec<(usize, usize)>,
        visit: &mut impl FnMut(&[f64], &[(usize, usize)]) -> Result<()>,
    ) -> Result<()> {
        if episode == slots.len() {
            return visit(products, chosen);
        }
        let table = if slots[episode] == usize::MAX {
            self.second_table(chosen[0].1)
        } else {
            slots[episode]
        };
        for k in 0..self.tables[table].keys.len() {
            let saved = products.clone();
            for (m, p) in products.iter_mut().enumerate() {
                *p *= self.tables[table].probs[k][m];
            }
            chosen.push((table, k));
            self.rec(slots, episode + 1, products, chosen, visit)?;
            chosen.pop();
            *products = saved;
        }
        Ok(())
    }
}

/// Both sides of the mixture chi-square identity, evaluated literally over
/// the interaction's trajectory-tuple space.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct IngsterReport {
    /// `1 + χ²(E_ζ[P_M^𝔄] ‖ P_0^𝔄)`, computed by materializing the mixture
    /// and reference tuple distributions and calling the generic divergence.
    pub lhs: f64,
    /// `E_{M,M'∼ζ×ζ} E_0[∏_t P_M(τ_t) P_{M'}(τ_t) / P_0(τ_t)²]`, computed
    /// from pairwise ratio products.
    pub rhs: f64,
    pub gap: f64,
    /// Size of the enumerated tuple space.
    pub tuples: usize,
}

/// Verifies the change-of-measure identity behind every lower bound in this
/// crate: for any prior `ζ` over models and any (possibly adaptive) schedule
/// of `T` episodes,
///
/// ```text
/// 1 + χ²(E_{M∼ζ}[P_M^𝔄] ‖ P_0^𝔄)
///     = E_{M,M'∼ζ×ζ} E_{τ¹:ᵀ∼P_0^𝔄}[ ∏_t P_M(τᵗ) P_{M'}(τᵗ) / P_0(τᵗ)² ].
/// ```
///
/// Policy factors cancel inside each ratio, so the right side only sees the
/// models' trajectory probabilities; the left side is a single divergence of
/// tuple distributions. Both sides are computed independently over the
/// explicit tuple space (at most `cap` tuples) and compared.
///
/// Requires every model in the prior to be dominated by the reference on
/// each episode's trajectory space; otherwise the left side is `+∞` while
/// the right side stays finite, and the call fails instead.
pub fn ingster_check(
    reference: &TabularPomdp,
    prior: &[(f64, TabularPomdp)],
    schedule: &Schedule,
    cap: usize,
) -> Result<IngsterReport> {
    if prior.is_empty() {
        return Err(LabError::BadParams("prior over models is empty".into()));
    }
    let weight_sum = crate::util::kahan_sum(prior.iter().map(|(w, _)| *w));
    if prior.iter().any(|(w, _)| w.is_nan() || *w < 0.0) || (weight_sum - 1.0).abs() > 1e-10 {
        return Err(LabError::BadParams(format!(
            "prior weights must be nonnegative and sum to 1, got {weight_sum}"
        )));
    }
    let mut models: Vec<&TabularPomdp> = Vec::with_capacity(prior.len() + 1);
    models.push(reference);
    models.extend(prior.iter().map(|(_, m)| m));
    let tables = ScheduleTables::build(&models, schedule, cap)?;

    let n = prior.len();
    let mut ref_probs: Vec<f64> = Vec::new();
    let mut mix_probs: Vec<f64> = Vec::new();
    let mut pair_sums = vec![Kahan::new(); n * n];
    let tuples = tables.walk_tuples(cap, |products, _| {
        let p0 = products[0];
        let mix = crate::util::kahan_sum(
            prior
                .iter()
                .zip(&products[1..])
                .map(|((w, _), &a)| w * a),
        );
        ref_probs.push(p0);
        mix_probs.push(mix);
        for i in 0..n {
            for j in 0..n {
                pair_sums[i * n + j].add(products[1 + i] * products[1 + j] / p0);
            }
        }
        Ok(())
    })?;

    let support: Vec<usize> = (0..ref_probs.len()).collect();
    let ref_dist = FiniteDistribution::new(support.clone(), ref_probs)?;
    let mix_dist = FiniteDistribution::new(support, mix_probs)?;
    let lhs = 1.0 + divergences(&mix_dist, &ref_dist).chi_sq;

    let mut rhs = Kahan::new();
    for i in 0..n {
        for j in 0..n {
            rhs.add(prior[i].0 * prior[j].0 * pair_sums[i * n + j].total());
        }
    }
    let rhs = rhs.total();
    Ok(IngsterReport { lhs, rhs, gap: (lhs - rhs).abs(), tuples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{SingleStepFamily, SingleStepParams, SingleStepTheta};
    use crate::pomdp::model::testkit::random_pomdp;
    use crate::util::{random_simplex, rng_from_seed};

    fn tiny_family() -> (SingleStepFamily, SingleStepTheta) {
        let fam = SingleStepFamily::new(SingleStepParams {
            horizon: 4,
            tree_level: 1,
            n_actions: 2,
            coin_pairs: 1,
            eps: 0.125,
            sigma: 0.5,
            unchecked: true,
        })
        .unwrap();
        let theta = SingleStepTheta { h_star: 1, s_star: 0, a_star: 1, password: vec![0] };
        (fam, theta)
    }

    fn random_reactive(seed: u64, horizon: usize, no: usize, na: usize) -> Policy {
        let mut rng = rng_from_seed(seed);
        Policy::ReactiveStoch(
            (0..horizon)
                .map(|_| (0..no).map(|_| random_simplex(na, &mut rng)).collect())
                .collect(),
        )
    }

    #[test]
    fn point_mass_prior_on_the_reference_gives_one() {
        let m = random_pomdp(4, 3, 3, 2, 2);
        let schedule = Schedule::PerEpisode(vec![
            random_reactive(1, 3, 2, 2),
            random_reactive(2, 3, 2, 2),
        ]);
        let report = ingster_check(&m, &[(1.0, m.clone())], &schedule, 1_000_000).unwrap();
        assert!((report.lhs - 1.0).abs() < 1e-12, "lhs {}", report.lhs);
        assert!((report.rhs - 1.0).abs() < 1e-12, "rhs {}", report.rhs);
        assert!(report.gap < 1e-12);
    }

    /// With one episode the identity is the textbook mixture chi-square;
    /// check the left route against a by-hand mixture over trajectories.
    #[test]
    fn single_episode_matches_hand_built_mixture() {
        let reference = random_pomdp(10, 3, 2, 2, 2);
        let a = random_pomdp(11, 3, 2, 2, 2);
        let b = random_pomdp(12, 3, 2, 2, 2);
        let pi = random_reactive(13, 3, 2, 2);
        let prior = [(0.3, a.clone()), (0.7, b.clone())];
        let schedule = Schedule::PerEpisode(vec![pi.clone()]);
        let report = ingster_check(&reference, &prior, &schedule, 1_000_000).unwrap();
        assert!(report.gap < 1e-12, "gap {}", report.gap);

        let mut mixture: std::collections::HashMap<(Vec<usize>, Vec<usize>), f64> =
            std::collections::HashMap::new();
        for (w, model) in &prior {
            let dist = enumerate_distribution(model, &pi, 1_000_000).unwrap();
            for item in dist.items {
                *mixture.entry((item.observations, item.actions)).or_insert(0.0) +=
                    w * item.prob;
            }
        }
        let (keys, probs): (Vec<_>, Vec<_>) = mixture.into_iter().unzip();
        let mix = FiniteDistribution::new(keys, probs).unwrap();
        let ref_dist = FiniteDistribution::from_trajectories(
            &enumerate_distribution(&reference, &pi, 1_000_000).unwrap(),
        )
        .unwrap();
        let direct = 1.0 + divergences(&mix, &ref_dist).chi_sq;
        assert!((report.lhs - direct).abs() < 1e-12, "{} vs {direct}", report.lhs);
    }

    /// The identity on the hard instance it was built for: a prior over the
    /// two coin biases of a planted model, against the null reference, with
    /// two episodes of different policies.
    #[test]
    fn planted_family_two_episode_identity() {
        let (fam, theta) = tiny_family();
        let prior = [
            (0.5, fam.build(&theta, &[1]).unwrap()),
            (0.5, fam.build(&theta, &[-1]).unwrap()),
        ];
        let null = fam.build_null().unwrap();
        let schedule = Schedule::PerEpisode(vec![
            fam.optimal_policy(&theta),
            random_reactive(99, 4, fam.n_observations(), 2),
        ]);
        let report = ingster_check(&null, &prior, &schedule, 1_000_000).unwrap();
        assert!(report.gap <= 1e-9, "gap {}", report.gap);
        assert!(report.lhs > 1.0, "planted mixture should differ from null");
        assert!(report.tuples > 1);
    }

    /// An adaptive second episode — branch on whether the first episode saw
    /// the first coin observation — still satisfies the identity exactly.
    #[test]
    fn adaptive_two_branch_schedule_keeps_the_identity() {
        let (fam, theta) = tiny_family();
        let prior = [
            (0.5, fam.build(&theta, &[1]).unwrap()),
            (0.5, fam.build(&theta, &[-1]).unwrap()),
        ];
        let null = fam.build_null().unwrap();
        let schedule = Schedule::TwoBranch {
            first: fam.optimal_policy(&theta),
            trigger_obs: fam.coin_base(),
            if_seen: random_reactive(7, 4, fam.n_observations(), 2),
            otherwise: fam.optimal_policy(&theta),
        };
        let report = ingster_check(&null, &prior, &schedule, 1_000_000).unwrap();
        assert!(report.gap <= 1e-9, "gap {}", report.gap);
        assert!(report.lhs > 1.0);
    }

    #[test]
    fn rejects_bad_priors_and_small_caps() {
        let m = random_pomdp(20, 2, 2, 2, 2);
        let schedule = Schedule::PerEpisode(vec![random_reactive(21, 2, 2, 2)]);
        let short = [(0.5, m.clone())];
        assert!(matches!(
            ingster_check(&m, &short, &schedule, 1_000_000),
            Err(LabError::BadParams(_))
        ));
        assert!(matches!(
            ingster_check(&m, &[], &schedule, 1_000_000),
            Err(LabError::BadParams(_))
        ));
        let two = Schedule::PerEpisode(vec![
            random_reactive(21, 2, 2, 2),
            random_reactive(22, 2, 2, 2),
        ]);
        assert!(matches!(
            ingster_check(&m, &[(1.0, m.clone())], &two, 3),
            Err(LabError::CapExceeded { .. })
        ));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(16))]
        /// The identity holds for arbitrary model priors sharing the
        /// reference's support, over random two-episode schedules.
        #[test]
        fn prop_identity_on_random_models(seed in 0u64..10_000) {
            use rand::Rng;
            let mut rng = rng_from_seed(seed);
            let h = rng.gen_range(2..3usize);
            let ns = rng.gen_range(1..3usize);
            let no = rng.gen_range(2..3usize);
            let na = rng.gen_range(2..3usize);
            let reference = random_pomdp(seed.wrapping_mul(3), h, ns, no, na);
            let weights = random_simplex(2, &mut rng);
            let prior = [
                (weights[0], random_pomdp(seed.wrapping_mul(3) + 1, h, ns, no, na)),
                (weights[1], random_pomdp(seed.wrapping_mul(3) + 2, h, ns, no, na)),
            ];
            let schedule = Schedule::PerEpisode(vec![
                random_reactive(seed ^ 0xa, h, no, na),
                random_reactive(seed ^ 0xb, h, no, na),
            ]);
            let report = ingster_check(&reference, &prior, &schedule, 1_000_000).unwrap();
            proptest::prop_assert!(report.gap <= 1e-9, "gap {}", report.gap);
            proptest::prop_assert!(report.lhs >= 1.0 - 1e-10);
        }
    }
}
