//! Explore-then-exploit on a fixed episode allowance.
//!
//! The exhaustive scan prescribes a worst-case episode bill up front
//! ([`bruteforce_budget`]); given a total allowance `T` and a split
//! `ρ ∈ (0,1)`, this wrapper shrinks the scan's per-cell budgets by
//! `min(1, ρT / prescribed)` so exploration fits in roughly `ρT` episodes,
//! runs the scan, and then commits to the returned policy for every
//! remaining episode. The committed policy is exactly optimal when the
//! scan identified the environment and `ε/4`-suboptimal at worst when it
//! did not, so the cumulative regret curve flattens after the exploration
//! prefix — the familiar `T^{2/3}`-style trade-off when `ρT` is tuned
//! against the scan's statistical needs.

use crate::error::{LabError, Result};
use crate::instances::FamilyConfig;
use crate::learners::bruteforce::{bruteforce_budget, bruteforce_learn_with, BruteforceConfig};
use crate::learners::env::{EnvironmentHandle, EventTally};
use crate::learners::LearnerReport;

/// [`explore_then_exploit_with`] at accuracy `ε/8`, confidence `0.9`, and
/// the default scan constants.
pub fn explore_then_exploit(
    spec: &FamilyConfig,
    env: &mut EnvironmentHandle,
    total_episodes: usize,
    split: f64,
) -> Result<LearnerReport> {
    let eps = spec.clone().into_family()?.meta().eps;
    explore_then_exploit_with(
        spec,
        env,
        total_episodes,
        split,
        eps / 8.0,
        0.9,
        &BruteforceConfig::default(),
    )
}

/// Spend `⌈split·total⌉` episodes on the (budget-fitted) exhaustive scan,
/// then play its policy for the rest of the allowance. The report covers
/// all `total_episodes`, with the scan's finding and the merged event
/// counts of both phases.
pub fn explore_then_exploit_with(
    spec: &FamilyConfig,
    env: &mut EnvironmentHandle,
    total_episodes: usize,
    split: f64,
    accuracy: f64,
    confidence: f64,
    cfg: &BruteforceConfig,
) -> Result<LearnerReport> {
    if !(split > 0.0 && split < 1.0) {
        return Err(LabError::BadParams(format!("split {split} outside (0,1)")));
    }
    if total_episodes == 0 {
        return Err(LabError::BadParams("need at least one episode".into()));
    }
    let meta = spec.clone().into_family()?.meta();
    let explore_allowance = ((split * total_episodes as f64).ceil() as usize).max(1);
    let prescribed = bruteforce_budget(spec, accuracy, confidence, cfg)?;
    let mut fitted = cfg.clone();
    if prescribed.episodes > explore_allowance {
        fitted.scale = cfg.scale * explore_allowance as f64 / prescribed.episodes as f64;
    }
    let trace_start = env.regret_trace().len();
    let mut report = bruteforce_learn_with(spec, env, accuracy, confidence, &fitted)?;

    // Per-cell floors can leave the scan slightly over the allowance;
    // account for what actually ran and commit for whatever remains.
    let exploit = total_episodes.saturating_sub(report.episodes);
    let mut tally = EventTally::default();
    for _ in 0..exploit {
        let ep = env.episode(&report.policy)?;
        tally.observe(&meta, &ep);
    }
    for (event, n) in tally.into_counts() {
        *report.event_counts.entry(event).or_insert(0) += n;
    }
    report.episodes += exploit;
    report.regret_trace = env.regret_trace()[trace_start..].to_vec();
    Ok(report)
}
