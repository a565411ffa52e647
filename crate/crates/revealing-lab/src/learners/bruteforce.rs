//! Exhaustive two-stage learner for the planted-secret families.
//!
//! The families hide `θ = (h*, s*, a*, …, password)` behind one statistical
//! needle: an open-loop route that exits the planted cell and then inspects
//! the guarded coins sees the alphabet distribution `(1 ± εσμ)/D`, while
//! **every** other route sees it exactly uniform. The learner therefore
//! reduces identification to uniformity testing at total variation
//! `t = εσ/2`:
//!
//! - **Stage 1** scans every exit cell — step `h` from the candidate list,
//!   leaf `s`, exit action `a`, plus the in-between password actions and the
//!   reveal action where the family has a reveal schedule — and funnels the
//!   first guarded coin (for the lock-copy family, the announced copy and
//!   its coin jointly) into a collision uniformity test. Exit steps with no
//!   later reveal opportunity cannot echo a coin, so they are scanned by
//!   reward probing instead: the full remaining password is enumerated
//!   jointly and the terminal good-outcome frequency is compared against
//!   the midpoint `1/4 + ε/4` between the planted `1/4 + ε/2` and the
//!   off-route `1/4`.
//! - **Stage 2** extends the identified prefix down the remaining password:
//!   one block per reveal opportunity (tested by revealing at the *next*
//!   opportunity), and a final reward-probed tail for the positions after
//!   the last opportunity.
//!
//! The failure budget `δ = 1 − confidence` is split evenly over every test
//! the scan could run (stage 1 plus the worst case of stage 2 over `h*`),
//! so each uniformity test runs at confidence `1 − δ/#tests` and each
//! reward probe takes `⌈c·ln(2·#tests/δ)/ε²⌉` episodes. If the requested
//! accuracy is no tighter than `ε/4`, staying at the root is already good
//! enough under both hypotheses and the learner returns it without a single
//! episode.

use crate::error::{LabError, Result};
use crate::instances::tree::{BinaryTree, WAIT};
use crate::instances::{
    mixed_products, Family, FamilyConfig, FamilyKind, FamilyMeta, PacTheta, RegretTheta,
    SingleStepTheta, Theta,
};
use crate::learners::env::{EnvironmentHandle, EventTally, Finding, LearnerReport};
use crate::learners::uniformity::{
    collision_midpoint, median_collision_statistic, TesterConfig, UniformityPlan,
};
use crate::pomdp::Policy;

/// Tunable constants of the scan, fixed once by the calibration experiment.
#[derive(Clone, Debug)]
pub struct BruteforceConfig {
    pub tester: TesterConfig,
    /// Constant `c` in the reward-probe count `⌈c·ln(2/δ')/ε²⌉`.
    pub reward_c: f64,
    /// Multiplier on the per-cell budgets (uniformity batch sizes and
    /// reward probes). Exploration phases with a fixed episode allowance
    /// shrink it below 1; correctness guarantees assume 1.
    pub scale: f64,
}

impl Default for BruteforceConfig {
    fn default() -> Self {
        BruteforceConfig { tester: TesterConfig::default(), reward_c: 8.0, scale: 1.0 }
    }
}

/// The episode bill of one full scan, computed before any sampling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BruteforceBudget {
    /// Tests sharing the failure budget: stage 1 plus the worst stage 2.
    pub tests: usize,
    /// Per-test failure allowance `δ/tests`.
    pub delta_prime: f64,
    /// Alphabet size of the uniformity tests.
    pub domain: usize,
    /// Total-variation gap `εσ/2` the tests must detect.
    pub far_tv: f64,
    /// Per-cell uniformity budget (already scaled).
    pub plan: UniformityPlan,
    /// Episodes per reward probe (already scaled).
    pub reward_probes: usize,
    pub stage1_coin_cells: usize,
    pub stage1_reward_cells: usize,
    /// Stage-2 cells for the costliest `h*`.
    pub stage2_coin_cells: usize,
    pub stage2_reward_cells: usize,
    /// Worst-case total episodes of the full scan.
    pub episodes: usize,
}

/// Scan geometry shared by the budget and the learner: which routes exist
/// and what each one lets us sample.
struct Geometry {
    kind: FamilyKind,
    horizon: usize,
    n_actions: usize,
    tree: BinaryTree,
    leaves: Vec<usize>,
    schedule: Vec<usize>,
    stride: usize,
    reveal_actions: Vec<usize>,
    /// Password choices at schedule steps.
    transit: Vec<usize>,
    /// Password choices everywhere else.
    free: Vec<usize>,
    exit_actions: Vec<usize>,
    h_star_choices: Vec<usize>,
    /// Exit steps with a later reveal opportunity (coin-testable).
    testable_h: Vec<usize>,
    /// Exit steps identifiable only through the terminal reward.
    reward_h: Vec<usize>,
    domain: usize,
    far_tv: f64,
    coin_base: usize,
    coin_count: usize,
    eps: f64,
    good_obs: usize,
    lock_obs: Vec<usize>,
}

impl Geometry {
    fn new(family: &Family) -> Self {
        let meta = family.meta();
        let a = meta.n_actions;
        let last_coin_exit = meta.horizon.saturating_sub(3);
        let (schedule, stride, reveal_actions, transit, copies) = match family {
            Family::SingleStep(_) => (Vec::new(), 1, Vec::new(), Vec::new(), 1),
            Family::Regret(f) => {
                let a1 = f.reveal_action_count();
                (meta.reveal_steps.clone(), f.params().stride, (0..a1).collect(), (a1..a).collect(), 1)
            }
            Family::Pac(f) => (
                meta.reveal_steps.clone(),
                f.params().stride,
                vec![0],
                (1..a).collect(),
                f.params().lock_copies,
            ),
        };
        let (testable_h, reward_h) = if schedule.is_empty() {
            // No reveal structure: a coin follows the exit directly, except
            // when the exit step is the last one before the final reward.
            let t: Vec<usize> =
                meta.h_star_choices.iter().copied().filter(|&h| h <= last_coin_exit).collect();
            let r: Vec<usize> =
                meta.h_star_choices.iter().copied().filter(|&h| h > last_coin_exit).collect();
            (t, r)
        } else {
            let m = schedule.len();
            (schedule[..m - 1].to_vec(), vec![schedule[m - 1]])
        };
        Geometry {
            kind: meta.kind,
            horizon: meta.horizon,
            n_actions: a,
            tree: BinaryTree::new(meta.tree_level),
            leaves: meta.leaf_states.clone(),
            schedule,
            stride,
            reveal_actions,
            transit,
            free: (0..a).collect(),
            exit_actions: (1..a).collect(),
            h_star_choices: meta.h_star_choices.clone(),
            testable_h,
            reward_h,
            domain: meta.coin_obs.len() * copies,
            far_tv: meta.eps * meta.sigma / 2.0,
            coin_base: meta.coin_obs[0],
            coin_count: meta.coin_obs.len(),
            eps: meta.eps,
            good_obs: meta.good_obs,
            lock_obs: meta.lock_obs.clone(),
        }
    }

    /// Open-loop base route: descend to `s`, wait, exit with `a` at `h`,
    /// then wait out the horizon. Callers overwrite the post-exit steps.
    fn route(&self, s: usize, h: usize, a_exit: usize) -> Vec<usize> {
        let mut seq = self.tree.path_actions(s);
        debug_assert!(seq.len() <= h);
        seq.resize(h, WAIT);
        seq.push(a_exit);
        seq.resize(self.horizon, WAIT);
        seq
    }

    /// Password choice sets for positions `from..=to` (inclusive), transit
    /// at schedule steps and free elsewhere.
    fn choice_sets(&self, from: usize, to_inclusive: usize) -> Vec<Vec<usize>> {
        (from..=to_inclusive)
            .map(|g| {
                if self.schedule.binary_search(&g).is_ok() {
                    self.transit.clone()
                } else {
                    self.free.clone()
                }
            })
            .collect()
    }

    /// Stage-2 cell counts `(uniformity, reward)` for a given planted step.
    fn stage2_counts(&self, h_star: usize) -> Option<(u128, u128)> {
        let a = self.n_actions as u128;
        match self.kind {
            FamilyKind::SingleStep => {
                if h_star + 1 >= self.horizon - 1 {
                    return Some((0, 0)); // empty password, nothing to learn
                }
                let coin_positions = (self.horizon - 3).saturating_sub(h_star) as u128;
                Some((coin_positions.checked_mul(a)?, a))
            }
            FamilyKind::Regret | FamilyKind::Pac => {
                let after: Vec<usize> =
                    self.schedule.iter().copied().filter(|&g| g > h_star).collect();
                if after.is_empty() {
                    return Some((0, 0)); // stage 1 reward scan carries the whole password
                }
                let transit = self.transit.len() as u128;
                let block = transit.checked_mul(a.checked_pow((self.stride - 1) as u32)?)?;
                let blocks = (after.len() - 1) as u128;
                let l_last = *after.last().unwrap();
                let tail =
                    transit.checked_mul(a.checked_pow((self.horizon - 2 - l_last) as u32)?)?;
                Some((blocks.checked_mul(block)?, tail))
            }
        }
    }

    fn stage1_counts(&self) -> Option<(u128, u128)> {
        let a = self.n_actions as u128;
        let exits = (self.leaves.len() as u128).checked_mul(self.exit_actions.len() as u128)?;
        let per_coin_h = match self.kind {
            FamilyKind::SingleStep => exits,
            FamilyKind::Regret | FamilyKind::Pac => exits
                .checked_mul(a.checked_pow((self.stride - 1) as u32)?)?
                .checked_mul(self.reveal_actions.len().max(1) as u128)?,
        };
        let coin = per_coin_h.checked_mul(self.testable_h.len() as u128)?;
        let mut reward: u128 = 0;
        for &h in &self.reward_h {
            let free = a.checked_pow((self.horizon - 2 - h) as u32)?;
            reward = reward.checked_add(exits.checked_mul(free)?)?;
        }
        Some((coin, reward))
    }
}

fn too_large() -> LabError {
    LabError::BadParams("instance too large for an exhaustive scan".into())
}

fn as_usize(x: u128) -> Result<usize> {
    usize::try_from(x).map_err(|_| too_large())
}

/// Worst-case episode bill of [`bruteforce_learn_with`] under `cfg`,
/// without touching an environment. Exploration planners use it to fit the
/// scan into an episode allowance via [`BruteforceConfig::scale`].
pub fn bruteforce_budget(
    spec: &FamilyConfig,
    accuracy: f64,
    confidence: f64,
    cfg: &BruteforceConfig,
) -> Result<BruteforceBudget> {
    validate_request(accuracy, confidence, cfg)?;
    let family = spec.clone().into_family()?;
    let geo = Geometry::new(&family);
    let delta = 1.0 - confidence;
    if accuracy >= geo.eps / 4.0 {
        // Staying home is already `ε/4`-optimal under either hypothesis.
        return Ok(BruteforceBudget {
            tests: 0,
            delta_prime: delta,
            domain: geo.domain,
            far_tv: geo.far_tv,
            plan: UniformityPlan { batch_size: 0, batches: 0 },
            reward_probes: 0,
            stage1_coin_cells: 0,
            stage1_reward_cells: 0,
            stage2_coin_cells: 0,
            stage2_reward_cells: 0,
            episodes: 0,
        });
    }

    let (s1_coin, s1_reward) = geo.stage1_counts().ok_or_else(too_large)?;
    let mut s2: Vec<(u128, u128)> = Vec::with_capacity(geo.h_star_choices.len());
    for &h in &geo.h_star_choices {
        s2.push(geo.stage2_counts(h).ok_or_else(too_large)?);
    }
    let s2_tests = s2.iter().map(|&(c, r)| c + r).max().unwrap_or(0);
    let tests = as_usize(s1_coin + s1_reward + s2_tests)?;

    let delta_prime = delta / tests.max(1) as f64;
    let plan = scaled_plan(
        UniformityPlan::new(geo.domain, geo.far_tv, 1.0 - delta_prime, &cfg.tester)?,
        cfg.scale,
    );
    let n_r = (((cfg.reward_c * (2.0 / delta_prime).ln() / (geo.eps * geo.eps)).ceil()
        * cfg.scale)
        .ceil() as usize)
        .max(1);

    let per_cell = plan.total_samples() as u128;
    let mut s2_episodes: Vec<u128> = Vec::with_capacity(s2.len());
    for &(c, r) in &s2 {
        let cost = c
            .checked_mul(per_cell)
            .and_then(|ce| Some(ce.checked_add(r.checked_mul(n_r as u128)?)?))
            .ok_or_else(too_large)?;
        s2_episodes.push(cost);
    }
    let (best_idx, worst_cost) =
        s2_episodes.iter().copied().enumerate().max_by_key(|&(_, e)| e).unwrap_or((0, 0));
    let (s2_coin, s2_reward) = s2.get(best_idx).copied().unwrap_or((0, 0));
    let episodes = s1_coin
        .checked_mul(per_cell)
        .and_then(|x| x.checked_add(s1_reward.checked_mul(n_r as u128)?))
        .and_then(|x| x.checked_add(worst_cost))
        .ok_or_else(too_large)?;

    Ok(BruteforceBudget {
        tests,
        delta_prime,
        domain: geo.domain,
        far_tv: geo.far_tv,
        plan,
        reward_probes: n_r,
        stage1_coin_cells: as_usize(s1_coin)?,
        stage1_reward_cells: as_usize(s1_reward)?,
        stage2_coin_cells: as_usize(s2_coin)?,
        stage2_reward_cells: as_usize(s2_reward)?,
        episodes: as_usize(episodes)?,
    })
}

fn scaled_plan(plan: UniformityPlan, scale: f64) -> UniformityPlan {
    UniformityPlan {
        batch_size: (((plan.batch_size as f64) * scale).ceil() as usize).max(2),
        batches: plan.batches,
    }
}

fn validate_request(accuracy: f64, confidence: f64, cfg: &BruteforceConfig) -> Result<()> {
    if !(accuracy > 0.0) {
        return Err(LabError::BadParams(format!("accuracy {accuracy} must be > 0")));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(LabError::BadParams(format!("confidence {confidence} outside (0,1)")));
    }
    if !(cfg.scale > 0.0 && cfg.scale.is_finite()) || !(cfg.reward_c > 0.0) {
        return Err(LabError::BadParams("scale and reward_c must be positive".into()));
    }
    Ok(())
}

/// A stage-1 uniformity cell: exit `(h, s, a)` plus the route decorations
/// needed to reach the next coin.
#[derive(Clone, Debug)]
struct CoinCell {
    h: usize,
    s: usize,
    a: usize,
    prelude: Vec<usize>,
    a_rev: usize,
}

/// Sampling state shared by both stages.
struct Scan<'a> {
    meta: &'a FamilyMeta,
    geo: &'a Geometry,
    plan: UniformityPlan,
    n_r: usize,
    midpoint: f64,
    tally: EventTally,
}

impl Scan<'_> {
    /// Run one uniformity cell: collect the plan's samples along `route`
    /// and return the median collision statistic (`> midpoint` ⇒ far).
    fn cell_statistic(
        &mut self,
        env: &mut EnvironmentHandle,
        route: Vec<usize>,
        coin_step: usize,
        lock_step: Option<usize>,
    ) -> Result<f64> {
        let n = self.plan.total_samples();
        let mut samples = Vec::with_capacity(n);
        let policy = Policy::ActionSequence(route);
        for _ in 0..n {
            let ep = env.episode(&policy)?;
            self.tally.observe(self.meta, &ep);
            let o = ep.observations[coin_step];
            if o < self.geo.coin_base || o >= self.geo.coin_base + self.geo.coin_count {
                return Err(LabError::UnsupportedStructure(format!(
                    "expected a coin observation at step {coin_step}, saw observation {o}"
                )));
            }
            let coin = o - self.geo.coin_base;
            let symbol = match lock_step {
                None => coin,
                Some(ls) => {
                    let lo = ep.observations[ls];
                    let copy = self
                        .geo
                        .lock_obs
                        .iter()
                        .position(|&x| x == lo)
                        .and_then(|p| p.checked_sub(1))
                        .ok_or_else(|| {
                            LabError::UnsupportedStructure(format!(
                                "expected a copy-lock observation at step {ls}, saw observation {lo}"
                            ))
                        })?;
                    copy * self.geo.coin_count + coin
                }
            };
            samples.push(symbol);
        }
        median_collision_statistic(&samples, self.geo.domain, &self.plan)
    }

    /// Terminal good-outcome frequency over `n_r` episodes of `route`.
    fn good_frequency(&mut self, env: &mut EnvironmentHandle, route: Vec<usize>) -> Result<f64> {
        let policy = Policy::ActionSequence(route);
        let mut good = 0usize;
        for _ in 0..self.n_r {
            let ep = env.episode(&policy)?;
            self.tally.observe(self.meta, &ep);
            if ep.observations.last() == Some(&self.geo.good_obs) {
                good += 1;
            }
        }
        Ok(good as f64 / self.n_r as f64)
    }

    /// Stage 2: given the identified exit cell, learn the rest of the
    /// password and assemble the full parameter.
    fn complete_theta(&mut self, env: &mut EnvironmentHandle, cell: &CoinCell) -> Result<Theta> {
        let geo = self.geo;
        let hh = geo.horizon;
        let mut password = cell.prelude.clone();
        match geo.kind {
            FamilyKind::SingleStep => {
                // One coin test per position while a later coin exists…
                for g in cell.h + 1..hh - 2 {
                    let mut best = (f64::NEG_INFINITY, 0usize);
                    for &cand in &geo.free {
                        let mut route = geo.route(cell.s, cell.h, cell.a);
                        route[cell.h + 1..g].copy_from_slice(&password);
                        route[g] = cand;
                        let stat = self.cell_statistic(env, route, g + 1, None)?;
                        if stat > best.0 {
                            best = (stat, cand);
                        }
                    }
                    password.push(best.1);
                }
                // …then the final position by reward probing.
                let g = hh - 2;
                let mut best = (f64::NEG_INFINITY, 0usize);
                for &cand in &geo.free {
                    let mut route = geo.route(cell.s, cell.h, cell.a);
                    route[cell.h + 1..g].copy_from_slice(&password);
                    route[g] = cand;
                    let freq = self.good_frequency(env, route)?;
                    if freq > best.0 {
                        best = (freq, cand);
                    }
                }
                password.push(best.1);
                Ok(Theta::SingleStep(SingleStepTheta {
                    h_star: cell.h,
                    s_star: cell.s,
                    a_star: cell.a,
                    password,
                }))
            }
            FamilyKind::Regret | FamilyKind::Pac => {
                let after: Vec<usize> =
                    geo.schedule.iter().copied().filter(|&g| g > cell.h).collect();
                // One block per consecutive pair of reveal opportunities,
                // tested by echoing a coin at the later one.
                for w in 0..after.len().saturating_sub(1) {
                    let (li, lnext) = (after[w], after[w + 1]);
                    let mut best: Option<(f64, Vec<usize>)> = None;
                    for cand in mixed_products(&geo.choice_sets(li, lnext - 1)) {
                        let mut route = geo.route(cell.s, cell.h, cell.a);
                        route[cell.h + 1..li].copy_from_slice(&password);
                        route[li..lnext].copy_from_slice(&cand);
                        route[lnext] = cell.a_rev;
                        let lock = (geo.kind == FamilyKind::Pac).then_some(lnext);
                        let stat = self.cell_statistic(env, route, lnext + 1, lock)?;
                        if best.as_ref().is_none_or(|(b, _)| stat > *b) {
                            best = Some((stat, cand));
                        }
                    }
                    password.extend(best.expect("transit choices are never empty").1);
                }
                // Tail after the last opportunity: reward probing.
                let l_last = *after.last().expect("coin-testable cells have a later opportunity");
                let mut best: Option<(f64, Vec<usize>)> = None;
                for cand in mixed_products(&geo.choice_sets(l_last, hh - 2)) {
                    let mut route = geo.route(cell.s, cell.h, cell.a);
                    route[cell.h + 1..l_last].copy_from_slice(&password);
                    route[l_last..hh - 1].copy_from_slice(&cand);
                    let freq = self.good_frequency(env, route)?;
                    if best.as_ref().is_none_or(|(b, _)| freq > *b) {
                        best = Some((freq, cand));
                    }
                }
                password.extend(best.expect("transit choices are never empty").1);
                Ok(self.assembled(cell, password))
            }
        }
    }

    fn assembled(&self, cell: &CoinCell, password: Vec<usize>) -> Theta {
        match self.geo.kind {
            FamilyKind::SingleStep => Theta::SingleStep(SingleStepTheta {
                h_star: cell.h,
                s_star: cell.s,
                a_star: cell.a,
                password,
            }),
            FamilyKind::Regret => Theta::Regret(RegretTheta {
                h_star: cell.h,
                s_star: cell.s,
                a_star: cell.a,
                a_rev_star: cell.a_rev,
                password,
            }),
            FamilyKind::Pac => Theta::Pac(PacTheta {
                h_star: cell.h,
                s_star: cell.s,
                a_star: cell.a,
                password,
            }),
        }
    }
}

/// Identify the planted secret (or certify its absence) with the default
/// constants: find a policy within `accuracy` of optimal with probability
/// at least `confidence`.
pub fn bruteforce_learn(
    spec: &FamilyConfig,
    env: &mut EnvironmentHandle,
    accuracy: f64,
    confidence: f64,
) -> Result<LearnerReport> {
    bruteforce_learn_with(spec, env, accuracy, confidence, &BruteforceConfig::default())
}

pub fn bruteforce_learn_with(
    spec: &FamilyConfig,
    env: &mut EnvironmentHandle,
    accuracy: f64,
    confidence: f64,
    cfg: &BruteforceConfig,
) -> Result<LearnerReport> {
    let family = spec.clone().into_family()?;
    let meta = family.meta();
    if env.horizon() != meta.horizon
        || env.n_observations() != meta.n_observations
        || env.n_actions() != meta.n_actions
    {
        return Err(LabError::UnsupportedStructure(format!(
            "environment interface (H={}, O={}, A={}) does not match the declared family \
             (H={}, O={}, A={})",
            env.horizon(),
            env.n_observations(),
            env.n_actions(),
            meta.horizon,
            meta.n_observations,
            meta.n_actions
        )));
    }
    let budget = bruteforce_budget(spec, accuracy, confidence, cfg)?;
    let geo = Geometry::new(&family);
    let start_episodes = env.episodes();
    let trace_start = env.regret_trace().len();

    let mut scan = Scan {
        meta: &meta,
        geo: &geo,
        plan: budget.plan,
        n_r: budget.reward_probes,
        midpoint: collision_midpoint(geo.domain, geo.far_tv),
        tally: EventTally::default(),
    };

    let finding = if budget.tests == 0 {
        // Either the accuracy target is loose enough for the universal
        // stay-home policy, or the family admits no planted parameter.
        if accuracy >= geo.eps / 4.0 {
            None
        } else {
            Some(Finding::Null)
        }
    } else {
        Some(run_scan(&mut scan, env)?)
    };

    let policy = match &finding {
        Some(Finding::Planted { theta }) => family.optimal_policy(theta)?,
        _ => family.null_optimal_policy(),
    };
    Ok(LearnerReport {
        episodes: env.episodes() - start_episodes,
        policy,
        regret_trace: env.regret_trace()[trace_start..].to_vec(),
        event_counts: scan.tally.into_counts(),
        finding,
        survival: None,
    })
}

fn run_scan(scan: &mut Scan<'_>, env: &mut EnvironmentHandle) -> Result<Finding> {
    let geo = scan.geo;

    // Stage 1a: coin-testable exit cells, best far cell wins.
    let mut best_far: Option<(f64, CoinCell)> = None;
    for &h in &geo.testable_h {
        for &s in &geo.leaves {
            for &a in &geo.exit_actions {
                if geo.schedule.is_empty() {
                    let stat =
                        scan.cell_statistic(env, geo.route(s, h, a), h + 1, None)?;
                    if stat > scan.midpoint
                        && best_far.as_ref().is_none_or(|(b, _)| stat > *b)
                    {
                        best_far =
                            Some((stat, CoinCell { h, s, a, prelude: Vec::new(), a_rev: 0 }));
                    }
                    continue;
                }
                let reveal_at = h + geo.stride;
                let prelude_sets = vec![geo.free.clone(); geo.stride - 1];
                for prelude in mixed_products(&prelude_sets) {
                    for &a_rev in &geo.reveal_actions {
                        let mut route = geo.route(s, h, a);
                        route[h + 1..reveal_at].copy_from_slice(&prelude);
                        route[reveal_at] = a_rev;
                        let lock = (geo.kind == FamilyKind::Pac).then_some(reveal_at);
                        let stat = scan.cell_statistic(env, route, reveal_at + 1, lock)?;
                        if stat > scan.midpoint
                            && best_far.as_ref().is_none_or(|(b, _)| stat > *b)
                        {
                            best_far =
                                Some((stat, CoinCell { h, s, a, prelude: prelude.clone(), a_rev }));
                        }
                    }
                }
            }
        }
    }
    if let Some((_, cell)) = best_far {
        return Ok(Finding::Planted { theta: scan.complete_theta(env, &cell)? });
    }

    // Stage 1b: exit steps with no later reveal opportunity — enumerate the
    // whole remaining password and probe the terminal reward.
    let threshold = 0.25 + geo.eps / 4.0;
    let mut best_reward: Option<(f64, Theta)> = None;
    for &h in &geo.reward_h {
        let sets = vec![geo.free.clone(); geo.horizon - 2 - h];
        for &s in &geo.leaves {
            for &a in &geo.exit_actions {
                for password in mixed_products(&sets) {
                    let mut route = geo.route(s, h, a);
                    route[h + 1..geo.horizon - 1].copy_from_slice(&password);
                    let freq = scan.good_frequency(env, route)?;
                    if freq > threshold && best_reward.as_ref().is_none_or(|(b, _)| freq > *b) {
                        let cell = CoinCell {
                            h,
                            s,
                            a,
                            prelude: Vec::new(),
                            a_rev: geo.reveal_actions.first().copied().unwrap_or(0),
                        };
                        best_reward = Some((freq, scan.assembled(&cell, password.clone())));
                    }
                }
            }
        }
    }
    Ok(match best_reward {
        Some((_, theta)) => Finding::Planted { theta },
        None => Finding::Null,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{PacParams, RegretParams, SingleStepParams};

    fn single_step_spec() -> FamilyConfig {
        FamilyConfig::SingleStep(SingleStepParams {
            horizon: 4,
            tree_level: 1,
            n_actions: 2,
            coin_pairs: 1,
            eps: 0.25,
            sigma: 1.0,
            unchecked: true,
        })
    }

    fn regret_spec() -> FamilyConfig {
        FamilyConfig::Regret(RegretParams {
            horizon: 4,
            tree_level: 1,
            n_actions: 3,
            coin_pairs: 1,
            stride: 1,
            eps: 0.3,
            sigma: 1.0,
            unchecked: true,
        })
    }

    fn pac_spec() -> FamilyConfig {
        FamilyConfig::Pac(PacParams {
            horizon: 4,
            tree_level: 1,
            n_actions: 3,
            coin_pairs: 1,
            stride: 1,
            lock_copies: 2,
            eps: 0.3,
            sigma: 1.0,
            unchecked: true,
        })
    }

    fn quick() -> BruteforceConfig {
        BruteforceConfig { scale: 0.5, ..BruteforceConfig::default() }
    }

    #[test]
    fn loose_accuracy_takes_the_free_exit() {
        let spec = single_step_spec();
        let fam = spec.clone().into_family().unwrap();
        let mut env = EnvironmentHandle::from_family(&fam, None, 5).unwrap();
        // ε/4 = 0.0625: staying home is already that close to optimal.
        let report = bruteforce_learn(&spec, &mut env, 0.0625, 0.9).unwrap();
        assert_eq!(report.episodes, 0);
        assert_eq!(report.finding, None);
        assert_eq!(report.policy, fam.null_optimal_policy());
        assert!(report.regret_trace.is_empty());
        let budget = bruteforce_budget(&spec, 0.0625, 0.9, &Default::default()).unwrap();
        assert_eq!(budget.episodes, 0);
    }

    #[test]
    fn budget_counts_are_frozen_for_the_small_chain() {
        // Schedule {0,1,2}, one leaf, exits {1,2}, reveal action {0}:
        //   stage 1 coins: h ∈ {0,1} × 2 exits          = 4
        //   stage 1 reward: h = 2, empty password       = 2
        //   stage 2 worst (h* = 0): one block of 2 transit
        //   candidates + a 2-candidate tail             = 4
        let budget = bruteforce_budget(&regret_spec(), 0.05, 0.9, &Default::default()).unwrap();
        assert_eq!(budget.stage1_coin_cells, 4);
        assert_eq!(budget.stage1_reward_cells, 2);
        assert_eq!(budget.stage2_coin_cells, 2);
        assert_eq!(budget.stage2_reward_cells, 2);
        assert_eq!(budget.tests, 10);
        assert!((budget.delta_prime - 0.01).abs() < 1e-12);
        assert_eq!(budget.domain, 2);
        assert!((budget.far_tv - 0.15).abs() < 1e-12);
        let expected = (4 + 2) * budget.plan.total_samples() + (2 + 2) * budget.reward_probes;
        assert_eq!(budget.episodes, expected);
    }

    #[test]
    fn recovers_a_single_step_secret_and_its_password() {
        let spec = single_step_spec();
        let fam = spec.clone().into_family().unwrap();
        let theta = Theta::SingleStep(SingleStepTheta {
            h_star: 1,
            s_star: 0,
            a_star: 1,
            password: vec![1],
        });
        let mu = vec![1i8];
        let mut env = EnvironmentHandle::from_family(&fam, Some((&theta, &mu)), 71).unwrap();
        let report = bruteforce_learn_with(&spec, &mut env, 0.05, 0.9, &quick()).unwrap();
        assert_eq!(report.finding, Some(Finding::Planted { theta: theta.clone() }));
        assert_eq!(report.policy, fam.optimal_policy(&theta).unwrap());
        assert_eq!(report.episodes, report.regret_trace.len());
        assert!(report.event_counts["leaf-exit"] > 0);
    }

    #[test]
    fn recovers_a_secret_hidden_at_the_last_step_by_reward_probing() {
        let spec = single_step_spec();
        let fam = spec.clone().into_family().unwrap();
        // h* = H−2: no coin ever follows the exit, only the final reward.
        let theta = Theta::SingleStep(SingleStepTheta {
            h_star: 2,
            s_star: 0,
            a_star: 1,
            password: vec![],
        });
        let mu = vec![1i8];
        let mut env = EnvironmentHandle::from_family(&fam, Some((&theta, &mu)), 72).unwrap();
        let report = bruteforce_learn_with(&spec, &mut env, 0.05, 0.9, &quick()).unwrap();
        assert_eq!(report.finding, Some(Finding::Planted { theta }));
    }

    #[test]
    fn reads_null_when_nothing_is_planted() {
        let spec = single_step_spec();
        let fam = spec.clone().into_family().unwrap();
        let mut env = EnvironmentHandle::from_family(&fam, None, 73).unwrap();
        let report = bruteforce_learn_with(&spec, &mut env, 0.05, 0.9, &quick()).unwrap();
        assert_eq!(report.finding, Some(Finding::Null));
        assert_eq!(report.policy, fam.null_optimal_policy());
        // Staying home is exactly optimal under null, so the committed
        // policy carries no regret; the scan itself pays plenty.
        assert!(report.cumulative_regret() > 0.0);
    }

    #[test]
    fn recovers_a_regret_secret_through_the_reveal_chain() {
        let spec = regret_spec();
        let fam = spec.clone().into_family().unwrap();
        let theta = Theta::Regret(RegretTheta {
            h_star: 0,
            s_star: 0,
            a_star: 2,
            a_rev_star: 0,
            password: vec![2, 1],
        });
        let mu = vec![1i8];
        let mut env = EnvironmentHandle::from_family(&fam, Some((&theta, &mu)), 74).unwrap();
        let report = bruteforce_learn_with(&spec, &mut env, 0.05, 0.9, &quick()).unwrap();
        assert_eq!(report.finding, Some(Finding::Planted { theta: theta.clone() }));
        assert_eq!(report.policy, fam.optimal_policy(&theta).unwrap());
        assert!(report.event_counts["reveal-echo"] > 0);
    }

    #[test]
    fn recovers_a_lock_copy_secret_from_joint_copy_coin_samples() {
        let spec = pac_spec();
        let fam = spec.clone().into_family().unwrap();
        let theta = Theta::Pac(PacTheta {
            h_star: 0,
            s_star: 0,
            a_star: 1,
            password: vec![2, 1],
        });
        // Copy-major bias rows: copy 0 heads-heavy, copy 1 tails-heavy.
        let mu = vec![1i8, -1];
        let mut env = EnvironmentHandle::from_family(&fam, Some((&theta, &mu)), 75).unwrap();
        let report = bruteforce_learn_with(&spec, &mut env, 0.05, 0.9, &quick()).unwrap();
        assert_eq!(report.finding, Some(Finding::Planted { theta }));
        assert!(report.event_counts["reveal-echo"] > 0);
    }

    #[test]
    fn mismatched_environment_is_rejected() {
        let other = single_step_spec().into_family().unwrap();
        let mut env = EnvironmentHandle::from_family(&other, None, 76).unwrap();
        match bruteforce_learn(&regret_spec(), &mut env, 0.05, 0.9) {
            Err(LabError::UnsupportedStructure(msg)) => {
                assert!(msg.contains("does not match"), "{msg}")
            }
            other => panic!("expected a structure error, got {other:?}"),
        }
        let mut env = EnvironmentHandle::from_family(&other, None, 77).unwrap();
        assert!(bruteforce_learn(&single_step_spec(), &mut env, 0.0, 0.9).is_err());
        assert!(bruteforce_learn(&single_step_spec(), &mut env, 0.05, 1.0).is_err());
    }
}
