use serde::{Deserialize, Serialize};

use crate::divergence::ingster::{Schedule, ScheduleTables};
use crate::error::{LabError, Result};
use crate::instances::{Family, FamilyKind, Theta};
use crate::pomdp::TabularPomdp;
use crate::util::Kahan;

/// When a planted instance leaks its coin signal: every step while the
/// signal state persists (the single-step geometry), or only as a one-shot
/// echo after a reveal action on the schedule (the lock geometry).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RevealMode {
    /// Coins flash at every position `h*+1 ..= H−2` while the password
    /// holds, so the reveal events are nested by prefix.
    EveryStep,
    /// Coins flash at position `l+1` only when the reveal action fires at an
    /// on-schedule step `l` with the password held before it; distinct `l`
    /// give disjoint events because the password never uses `a_rev` on the
    /// schedule.
    Echo { schedule: Vec<usize>, a_rev: usize },
}

/// Observable event structure of one planted instance: which trajectory
/// prefixes make the next observation's law differ between a planted model
/// and the null model. Everything here is a predicate on `(obs, acts)` —
/// the events are measurable to the agent, which is what lets almost-sure
/// visit budgets constrain an algorithm.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedEvents {
    pub horizon: usize,
    pub h_star: usize,
    /// Observation announcing the planted leaf.
    pub leaf_obs: usize,
    pub a_star: usize,
    pub password: Vec<usize>,
    pub reveal: RevealMode,
}

impl PlantedEvents {
    /// Extracts the event structure of `(family, theta)`. The parallel-copy
    /// family is rejected: its leaked mass is split across lock copies, so
    /// its visit counting does not fit the single-lock profile below.
    pub fn from_family(family: &Family, theta: &Theta) -> Result<PlantedEvents> {
        match (family, theta) {
            (Family::SingleStep(f), Theta::SingleStep(t)) => Ok(PlantedEvents {
                horizon: f.params().horizon,
                h_star: t.h_star,
                leaf_obs: t.s_star,
                a_star: t.a_star,
                password: t.password.clone(),
                reveal: RevealMode::EveryStep,
            }),
            (Family::Regret(f), Theta::Regret(t)) => Ok(PlantedEvents {
                horizon: f.params().horizon,
                h_star: t.h_star,
                leaf_obs: t.s_star,
                a_star: t.a_star,
                password: t.password.clone(),
                reveal: RevealMode::Echo { schedule: f.schedule(), a_rev: t.a_rev_star },
            }),
            (Family::Pac(_), Theta::Pac(_)) => Err(LabError::BadParams(
                "the parallel-copy family splits its signal across lock copies and has no \
                 single-lock event profile"
                    .into(),
            )),
            _ => Err(LabError::BadParams("theta kind does not match family".into())),
        }
    }

    /// The gated exit was taken: the planted leaf was observed at `h*` and
    /// answered with the planted action.
    fn planted_start(&self, obs: &[usize], acts: &[usize]) -> bool {
        obs.get(self.h_star) == Some(&self.leaf_obs) && acts.get(self.h_star) == Some(&self.a_star)
    }

    /// First `upto` password entries were replayed at steps `h*+1, …`.
    fn password_held(&self, acts: &[usize], upto: usize) -> bool {
        (0..upto).all(|i| acts.get(self.h_star + 1 + i) == Some(&self.password[i]))
    }

    /// Whether the prediction of `obs[g]` given the first `g` steps sits
    /// inside a reveal event — the conditional law of `obs[g]` depends on
    /// the coin bias `μ`.
    pub fn reveal_at(&self, g: usize, obs: &[usize], acts: &[usize]) -> bool {
        if g <= self.h_star || !self.planted_start(obs, acts) {
            return false;
        }
        match &self.reveal {
            RevealMode::EveryStep => {
                g <= self.horizon - 2 && self.password_held(acts, g - 1 - self.h_star)
            }
            RevealMode::Echo { schedule, a_rev } => {
                let l = g - 1;
                l > self.h_star
                    && schedule.contains(&l)
                    && acts.get(l) == Some(a_rev)
                    && self.password_held(acts, l - 1 - self.h_star)
            }
        }
    }

    /// Whether the prediction of `obs[g]` is the final good/bad draw after a
    /// complete planted walk — the positive outcome becomes `(1+2ε)/4`-likely
    /// instead of `1/4`.
    pub fn correct_at(&self, g: usize, obs: &[usize], acts: &[usize]) -> bool {
        g == self.horizon - 1
            && self.planted_start(obs, acts)
            && self.password_held(acts, self.password.len())
    }

    /// Number of reveal events one episode belongs to.
    pub fn reveal_count(&self, obs: &[usize], acts: &[usize]) -> usize {
        (1..self.horizon).filter(|&g| self.reveal_at(g, obs, acts)).count()
    }

    /// Whether one episode belongs to the correct-guess event.
    pub fn correct(&self, obs: &[usize], acts: &[usize]) -> bool {
        self.correct_at(self.horizon - 1, obs, acts)
    }
}

/// Almost-sure visit budgets a schedule must respect: across all episodes of
/// any trajectory tuple the schedule can produce, at most `reveals` reveal
/// events and `corrects` correct-guess events.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EventBudgets {
    pub reveals: usize,
    pub corrects: usize,
}

/// One verified instance of the inner-product bound.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Chi2Report {
    /// `E_0[∏_t P_{θ,μ}(τᵗ) P_{θ,μ'}(τᵗ) / P_0(τᵗ)²]` over the tuple space.
    pub lhs: f64,
    /// `exp(N̄_o · C σ²ε²/K · |⟨μ,μ'⟩| + (4/3) C ε² N̄_r)`.
    pub bound: f64,
    pub ok: bool,
    /// `⟨μ, μ'⟩`.
    pub inner: f64,
    /// The amplification constant `C`: posteriors can grow along observed
    /// coins in the single-step geometry (`C = (1+σ)^{2H}`), but stay pinned
    /// at `ε` in the lock geometry (`C = 1`).
    pub amplification: f64,
    pub tuples: usize,
}

/// Verifies the moment bound that turns event-visit budgets into an
/// indistinguishability guarantee: for any schedule whose reveal visits and
/// correct guesses are almost surely capped by `budgets`,
///
/// ```text
/// E_0[∏_t ratio(τᵗ)] ≤ exp(N̄_o · C σ²ε²/K · |⟨μ,μ'⟩| + (4/3) C ε² N̄_r),
/// ```
///
/// where `ratio(τ) = P_{θ,μ}(τ) P_{θ,μ'}(τ) / P_0(τ)²`. The left side is
/// computed exactly over the tuple space; the budget precondition is checked
/// on every tuple the reference can produce, and a schedule that can exceed
/// it is rejected rather than silently bounded.
pub fn chi2_inner_product_check(
    family: &Family,
    theta: &Theta,
    mu: &[i8],
    mu_prime: &[i8],
    schedule: &Schedule,
    budgets: EventBudgets,
    cap: usize,
) -> Result<Chi2Report> {
    let events = PlantedEvents::from_family(family, theta)?;
    if mu.len() != mu_prime.len() {
        return Err(LabError::BadParams(format!(
            "mu has {} coins but mu' has {}",
            mu.len(),
            mu_prime.len()
        )));
    }
    let meta = family.meta();
    let amplification = match family.kind() {
        FamilyKind::SingleStep => (1.0 + meta.sigma).powi(2 * meta.horizon as i32),
        FamilyKind::Regret => 1.0,
        FamilyKind::Pac => unreachable!("rejected by the event extraction above"),
    };

    let planted = family.build(theta, mu)?;
    let planted_prime = family.build(theta, mu_prime)?;
    let null = family.build_null()?;
    let models: Vec<&TabularPomdp> = vec![&null, &planted, &planted_prime];
    let tables = ScheduleTables::build(&models, schedule, cap)?;
    let counts: Vec<Vec<(usize, usize)>> = tables
        .tables
        .iter()
        .map(|table| {
            table
                .keys
                .iter()
                .map(|(obs, acts)| {
                    (events.reveal_count(obs, acts), usize::from(events.correct(obs, acts)))
                })
                .collect()
        })
        .collect();

    let mut lhs = Kahan::new();
    let tuples = tables.walk_tuples(cap, |products, chosen| {
        let mut reveals = 0usize;
        let mut corrects = 0usize;
        for &(table, key) in chosen {
            reveals += counts[table][key].0;
            corrects += counts[table][key].1;
        }
        if reveals > budgets.reveals || corrects > budgets.corrects {
            return Err(LabError::BadParams(format!(
                "schedule can produce {reveals} reveal visits and {corrects} correct guesses, \
                 exceeding the almost-sure budgets ({}, {})",
                budgets.reveals, budgets.corrects
            )));
        }
        lhs.add(products[1] * products[2] / products[0]);
        Ok(())
    })?;

    let k = mu.len() as f64;
    let inner: f64 = mu.iter().zip(mu_prime).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum();
    let (eps, sigma) = (meta.eps, meta.sigma);
    let bound = (budgets.reveals as f64 * amplification * sigma * sigma * eps * eps / k
        * inner.abs()
        + 4.0 / 3.0 * amplification * eps * eps * budgets.corrects as f64)
        .exp();
    let lhs = lhs.total();
    Ok(Chi2Report { lhs, bound, ok: lhs <= bound + 1e-9, inner, amplification, tuples })
}

/// The conditional likelihood-ratio second moment of one trajectory prefix:
/// `I(τ) = Σ_o P_{θ,μ}(o|τ) P_{θ,μ'}(o|τ) / P_0(o|τ)`, the factor by which
/// that prefix multiplies `E_0[ratio]`. Off every reveal and correct-guess
/// event this is exactly 1 — the planted models are conditionally
/// indistinguishable from null — which is what the profile makes auditable.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProfileEntry {
    /// Length of the prefix; the entry scores the prediction of `obs[step]`.
    pub step: usize,
    pub observations: Vec<usize>,
    pub actions: Vec<usize>,
    pub in_reveal: bool,
    pub in_correct: bool,
    pub value: f64,
}

/// Computes `I(τ)` for every prefix `τ` with positive null probability, by
/// filtering unnormalized beliefs forward under the null and both planted
/// models simultaneously. Prefixes range over all action choices — the
/// profile is a property of the models, not of any policy.
pub fn i_profile(
    family: &Family,
    theta: &Theta,
    mu: &[i8],
    mu_prime: &[i8],
    cap: usize,
) -> Result<Vec<ProfileEntry>> {
    let events = PlantedEvents::from_family(family, theta)?;
    let models = [family.build_null()?, family.build(theta, mu)?, family.build(theta, mu_prime)?];
    let hh = models[0].horizon;

    struct Ctx<'a> {
        models: &'a [TabularPomdp; 3],
        events: &'a PlantedEvents,
        cap: usize,
        visited: usize,
        obs: Vec<usize>,
        acts: Vec<usize>,
        out: Vec<ProfileEntry>,
    }

    fn rec(ctx: &mut Ctx<'_>, g: usize, beliefs: &[Vec<f64>; 3]) -> Result<()> {
        ctx.visited += 1;
        if ctx.visited > ctx.cap {
            return Err(LabError::CapExceeded { visited: ctx.visited, cap: ctx.cap });
        }
        let (ns, no, na, hh) = (
            ctx.models[0].n_states(),
            ctx.models[0].n_observations(),
            ctx.models[0].n_actions(),
            ctx.models[0].horizon,
        );
        // Conditional next-observation laws under each model.
        let mut cond = [vec![0.0; no], vec![0.0; no], vec![0.0; no]];
        for (m, belief) in beliefs.iter().enumerate() {
            let mass: f64 = crate::util::kahan_sum(belief.iter().copied());
            if mass <= 0.0 {
                return Err(LabError::BadParams(
                    "planted and null supports diverged on an observable prefix".into(),
                ));
            }
            for o in 0..no {
                let w = crate::util::kahan_sum(
                    (0..ns).map(|s| belief[s] * ctx.models[m].emissions[g][s][o]),
                );
                cond[m][o] = w / mass;
            }
        }
        let mut value = Kahan::new();
        for o in 0..no {
            if cond[0][o] > 0.0 {
                value.add(cond[1][o] * cond[2][o] / cond[0][o]);
            } else if cond[1][o] * cond[2][o] > 0.0 {
                return Err(LabError::BadParams(
                    "planted and null supports diverged on an observable prefix".into(),
                ));
            }
        }
        ctx.out.push(ProfileEntry {
            step: g,
            observations: ctx.obs.clone(),
            actions: ctx.acts.clone(),
            in_reveal: ctx.events.reveal_at(g, &ctx.obs, &ctx.acts),
            in_correct: ctx.events.correct_at(g, &ctx.obs, &ctx.acts),
            value: value.total(),
        });
        if g + 1 == hh {
            return Ok(());
        }
        for o in 0..no {
            if cond[0][o] <= 0.0 {
                continue;
            }
            for a in 0..na {
                let mut next: [Vec<f64>; 3] =
                    [vec![0.0; ns], vec![0.0; ns], vec![0.0; ns]];
                for m in 0..3 {
                    for s in 0..ns {
                        let w = beliefs[m][s] * ctx.models[m].emissions[g][s][o];
                        if w == 0.0 {
                            continue;
                        }
                        for (s2, &t) in ctx.models[m].transitions[g][s][a].iter().enumerate() {
                            next[m][s2] += w * t;
                        }
                    }
                }
                ctx.obs.push(o);
                ctx.acts.push(a);
                rec(ctx, g + 1, &next)?;
                ctx.obs.pop();
                ctx.acts.pop();
            }
        }
        Ok(())
    }

    let mut ctx = Ctx {
        models: &models,
        events: &events,
        cap,
        visited: 0,
        obs: Vec::with_capacity(hh),
        acts: Vec::with_capacity(hh),
        out: Vec::new(),
    };
    let beliefs = [models[0].init.clone(), models[1].init.clone(), models[2].init.clone()];
    rec(&mut ctx, 0, &beliefs)?;
    Ok(ctx.out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{
        PacFamily, PacParams, PacTheta, RegretFamily, RegretParams, RegretTheta,
        SingleStepFamily, SingleStepParams, SingleStepTheta,
    };
    use crate::pomdp::{enumerate_distribution, Policy};

    fn regret_fixture() -> (Family, Theta) {
        let fam = RegretFamily::new(RegretParams {
            horizon: 4,
            tree_level: 1,
            n_actions: 2,
            coin_pairs: 1,
            stride: 1,
            eps: 0.125,
            sigma: 0.5,
            unchecked: true,
        })
        .unwrap();
        let theta =
            RegretTheta { h_star: 0, s_star: 0, a_star: 1, a_rev_star: 0, password: vec![1, 1] };
        (Family::Regret(fam), Theta::Regret(theta))
    }

    fn single_step_fixture() -> (Family, Theta) {
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
        (Family::SingleStep(fam), Theta::SingleStep(theta))
    }

    /// The lock geometry admits exact closed forms for every prefix: the
    /// posterior of the signal state is pinned at ε, so `I` is exactly
    /// `1 + ε²σ²⟨μ,μ'⟩/K` inside reveal events, exactly `1 + (4/3)ε²` on the
    /// correct-guess event, and exactly 1 everywhere else.
    #[test]
    fn lock_profile_matches_closed_forms_exhaustively() {
        let (family, theta) = regret_fixture();
        let (eps, sigma) = (0.125, 0.5);
        for (mu_prime, inner) in [([1i8], 1.0), ([-1i8], -1.0)] {
            let profile = i_profile(&family, &theta, &[1], &mu_prime, 1_000_000).unwrap();
            let (mut reveals, mut corrects, mut off) = (0, 0, 0);
            for entry in &profile {
                assert!(
                    !(entry.in_reveal && entry.in_correct),
                    "reveal and correct events must be disjoint"
                );
                let expected = if entry.in_correct {
                    corrects += 1;
                    1.0 + 4.0 / 3.0 * eps * eps
                } else if entry.in_reveal {
                    reveals += 1;
                    1.0 + eps * eps * sigma * sigma * inner
                } else {
                    off += 1;
                    1.0
                };
                assert!(
                    (entry.value - expected).abs() <= 1e-12,
                    "step {} obs {:?} acts {:?}: value {} expected {expected}",
                    entry.step,
                    entry.observations,
                    entry.actions,
                    entry.value
                );
            }
            // The echo can fire after each of the two on-schedule steps
            // following the exit, and exactly one full-password prefix hits
            // the correct-guess event.
            assert_eq!(reveals, 2, "inner {inner}");
            assert_eq!(corrects, 1, "inner {inner}");
            assert!(off >= 10, "profile should cover the whole prefix tree, got {off}");
        }
    }

    /// In the single-step geometry the first flash is exact (no coins seen
    /// yet, posterior exactly ε) and later values obey the amplification
    /// bound with `C = (1+σ)^{2H}`.
    #[test]
    fn single_step_profile_exact_first_flash_then_bounded() {
        let (family, theta) = single_step_fixture();
        let (eps, sigma, hh) = (0.125f64, 0.5f64, 4usize);
        let c = (1.0 + sigma).powi(2 * hh as i32);
        for (mu_prime, inner) in [([1i8], 1.0f64), ([-1i8], -1.0f64)] {
            let profile = i_profile(&family, &theta, &[1], &mu_prime, 1_000_000).unwrap();
            let (mut reveals, mut corrects) = (0, 0);
            for entry in &profile {
                if entry.in_reveal {
                    reveals += 1;
                    // Horizon 4 leaves a single flash position, which is the
                    // first one: the value is exact there.
                    let expected = 1.0 + eps * eps * sigma * sigma * inner;
                    assert!((entry.value - expected).abs() <= 1e-12, "value {}", entry.value);
                    assert!((entry.value - 1.0).abs() <= c * sigma * sigma * eps * eps);
                } else if entry.in_correct {
                    corrects += 1;
                    // The good/bad contrast always inflates the moment, by at
                    // most the amplified (4/3)ε².
                    assert!(entry.value > 1.0, "value {}", entry.value);
                    assert!(entry.value <= 1.0 + 4.0 / 3.0 * c * eps * eps + 1e-12);
                } else {
                    assert!(
                        (entry.value - 1.0).abs() <= 1e-12,
                        "off-event step {} obs {:?} acts {:?}: value {}",
                        entry.step,
                        entry.observations,
                        entry.actions,
                        entry.value
                    );
                }
            }
            assert_eq!(reveals, 1);
            // One correct-guess prefix per coin outcome observed en route.
            assert_eq!(corrects, 2);
        }
    }

    /// Event structure: nested prefix events for the single-step geometry,
    /// pairwise-disjoint echo events for the lock geometry.
    #[test]
    fn events_nest_or_stay_disjoint() {
        let (family, theta) = single_step_fixture();
        let events = PlantedEvents::from_family(&family, &theta).unwrap();
        let model = family.build(&theta, &[1]).unwrap();
        let uniform = Policy::uniform_random(4, model.n_observations(), 2);
        let dist = enumerate_distribution(&model, &uniform, 1_000_000).unwrap();
        assert!(dist.items.iter().any(|i| events.reveal_count(&i.observations, &i.actions) > 0));
        for item in &dist.items {
            for g in 2..4 {
                if events.reveal_at(g, &item.observations, &item.actions) {
                    assert!(
                        events.reveal_at(g - 1, &item.observations, &item.actions)
                            || g - 1 <= events.h_star,
                        "single-step reveal events must be nested"
                    );
                }
            }
        }

        let (family, theta) = regret_fixture();
        let events = PlantedEvents::from_family(&family, &theta).unwrap();
        let model = family.build(&theta, &[1]).unwrap();
        let uniform = Policy::uniform_random(4, model.n_observations(), 2);
        let dist = enumerate_distribution(&model, &uniform, 1_000_000).unwrap();
        let mut hit = 0;
        for item in &dist.items {
            let count = events.reveal_count(&item.observations, &item.actions);
            assert!(count <= 1, "echo events must be pairwise disjoint");
            assert!(
                !(count == 1 && events.correct(&item.observations, &item.actions)),
                "an echo forfeits the correct-guess event"
            );
            hit += count;
        }
        assert!(hit > 0);
    }

    /// A schedule that never enters the planted branch has ratio moment
    /// exactly 1, matching a zero budget even for opposed biases.
    #[test]
    fn stay_home_schedule_has_unit_moment() {
        let (family, theta) = regret_fixture();
        let home = Policy::ActionSequence(vec![0; 4]);
        let schedule = Schedule::PerEpisode(vec![home.clone(), home]);
        let report = chi2_inner_product_check(
            &family,
            &theta,
            &[1],
            &[-1],
            &schedule,
            EventBudgets { reveals: 0, corrects: 0 },
            1_000_000,
        )
        .unwrap();
        assert!((report.lhs - 1.0).abs() < 1e-12, "lhs {}", report.lhs);
        assert!((report.bound - 1.0).abs() < 1e-15);
        assert!(report.ok);
    }

    /// One echo visit: the moment is exactly `1 + ε²σ²⟨μ,μ'⟩` and the budget
    /// accounting demands one reveal.
    #[test]
    fn single_echo_episode_is_exact() {
        let (family, theta) = regret_fixture();
        let (eps, sigma) = (0.125f64, 0.5f64);
        let echo = Policy::ActionSequence(vec![1, 0, 0, 0]);
        let schedule = Schedule::PerEpisode(vec![echo]);
        for (mu_prime, inner) in [([1i8], 1.0), ([-1i8], -1.0)] {
            let report = chi2_inner_product_check(
                &family,
                &theta,
                &[1],
                &mu_prime,
                &schedule,
                EventBudgets { reveals: 1, corrects: 0 },
                1_000_000,
            )
            .unwrap();
            let exact = 1.0 + eps * eps * sigma * sigma * inner;
            assert!((report.lhs - exact).abs() <= 1e-12, "lhs {}", report.lhs);
            assert!(report.ok, "lhs {} bound {}", report.lhs, report.bound);
            assert!((report.inner - inner).abs() < 1e-15);
            assert!((report.amplification - 1.0).abs() < 1e-15);
        }
        assert!(matches!(
            chi2_inner_product_check(
                &family,
                &theta,
                &[1],
                &[1],
                &schedule,
                EventBudgets { reveals: 0, corrects: 0 },
                1_000_000,
            ),
            Err(LabError::BadParams(_))
        ));
    }

    /// A full planted walk hits only the correct-guess event, whose moment is
    /// exactly `1 + (4/3)ε²` — independently of the coin biases, since no
    /// coin is ever observed.
    #[test]
    fn correct_guess_episode_is_exact() {
        let (family, theta) = regret_fixture();
        let eps = 0.125f64;
        let walk = family.optimal_policy(&theta).unwrap();
        let schedule = Schedule::PerEpisode(vec![walk.clone()]);
        for mu_prime in [[1i8], [-1i8]] {
            let report = chi2_inner_product_check(
                &family,
                &theta,
                &[1],
                &mu_prime,
                &schedule,
                EventBudgets { reveals: 0, corrects: 1 },
                1_000_000,
            )
            .unwrap();
            let exact = 1.0 + 4.0 / 3.0 * eps * eps;
            assert!((report.lhs - exact).abs() <= 1e-12, "lhs {}", report.lhs);
            assert!(report.ok);
        }

        // Two such episodes square the moment and need twice the budget.
        let schedule = Schedule::PerEpisode(vec![walk.clone(), walk]);
        assert!(matches!(
            chi2_inner_product_check(
                &family,
                &theta,
                &[1],
                &[1],
                &schedule,
                EventBudgets { reveals: 0, corrects: 1 },
                1_000_000,
            ),
            Err(LabError::BadParams(_))
        ));
        let report = chi2_inner_product_check(
            &family,
            &theta,
            &[1],
            &[1],
            &schedule,
            EventBudgets { reveals: 0, corrects: 2 },
            1_000_000,
        )
        .unwrap();
        let exact = (1.0 + 4.0 / 3.0 * eps * eps).powi(2);
        assert!((report.lhs - exact).abs() <= 1e-12, "lhs {}", report.lhs);
        assert!(report.ok);
    }

    /// The single-step geometry amplifies posteriors along observed coins;
    /// one planted walk stays within the `C = (1+σ)^{2H}` bound.
    #[test]
    fn single_step_walk_is_bounded_with_amplification() {
        let (family, theta) = single_step_fixture();
        let walk = family.optimal_policy(&theta).unwrap();
        let schedule = Schedule::PerEpisode(vec![walk]);
        for mu_prime in [[1i8], [-1i8]] {
            let report = chi2_inner_product_check(
                &family,
                &theta,
                &[1],
                &mu_prime,
                &schedule,
                EventBudgets { reveals: 1, corrects: 1 },
                1_000_000,
            )
            .unwrap();
            assert!(report.ok, "lhs {} bound {}", report.lhs, report.bound);
            assert!(report.amplification > 1.0);
            if mu_prime == [1i8] {
                assert!(report.lhs > 1.0, "aligned biases must inflate the moment");
            }
        }
    }

    #[test]
    fn parallel_copy_family_is_rejected() {
        let fam = PacFamily::new(PacParams {
            horizon: 6,
            tree_level: 1,
            n_actions: 3,
            coin_pairs: 2,
            stride: 2,
            lock_copies: 2,
            eps: 0.1,
            sigma: 0.5,
            unchecked: true,
        })
        .unwrap();
        let theta =
            PacTheta { h_star: 0, s_star: 0, a_star: 1, password: vec![1, 1, 1, 1] };
        let family = Family::Pac(fam);
        let theta = Theta::Pac(theta);
        assert!(matches!(
            PlantedEvents::from_family(&family, &theta),
            Err(LabError::BadParams(_))
        ));
        let schedule = Schedule::PerEpisode(vec![Policy::ActionSequence(vec![0; 6])]);
        assert!(chi2_inner_product_check(
            &family,
            &theta,
            &[1, 1, 1, 1],
            &[1, 1, 1, 1],
            &schedule,
            EventBudgets { reveals: 0, corrects: 0 },
            1_000_000,
        )
        .is_err());
    }

    #[test]
    fn mismatched_bias_lengths_are_rejected() {
        let (family, theta) = regret_fixture();
        let schedule = Schedule::PerEpisode(vec![Policy::ActionSequence(vec![0; 4])]);
        assert!(matches!(
            chi2_inner_product_check(
                &family,
                &theta,
                &[1],
                &[1, -1],
                &schedule,
                EventBudgets { reveals: 0, corrects: 0 },
                1_000_000,
            ),
            Err(LabError::BadParams(_))
        ));
    }
}
