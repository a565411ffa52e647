//! Collision-based uniformity testing on a finite alphabet.
//!
//! For i.i.d. samples from `p` on `[D]`, the pairwise collision rate
//! estimates `Σ_x p(x)²`. Uniformity pins it at `1/D`; any `p` at total
//! variation ≥ `t` from uniform satisfies (Cauchy–Schwarz on `p − u`)
//!
//! ```text
//! Σ p² = 1/D + ‖p − u‖₂² ≥ (1 + 4t²)/D,
//! ```
//!
//! with equality for constant-magnitude perturbations `(1 ± 2t)/D` — exactly
//! the coin patterns the hard instances emit. The tester therefore compares
//! the empirical collision rate of a batch against the midpoint threshold
//! `(1 + 2t²)/D` and amplifies by taking the median statistic over an odd
//! number of batches. A batch of `⌈c·√D/t²⌉` samples puts both error rates
//! well under 1/3 (the √D high-collision regime), and `O(log 1/δ)` batches
//! drive the failure probability to `δ`.

use rand::Rng;

use crate::error::{LabError, Result};
use crate::util::{child_seed, rng_from_seed};

/// Outcome of a uniformity test.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UniformityVerdict {
    /// Consistent with the uniform distribution.
    Uniform,
    /// At least `far_tv` from uniform in total variation.
    Far,
}

/// Tunable constants, fixed once by the calibration experiment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TesterConfig {
    /// Batch size multiplier `c` in `⌈c·√D/t²⌉`.
    pub batch_c: f64,
    /// Batch count multiplier `κ` in the median amplification.
    pub amplification_kappa: f64,
}

impl Default for TesterConfig {
    fn default() -> Self {
        TesterConfig { batch_c: 8.0, amplification_kappa: 3.0 }
    }
}

/// Sample budget of one test: `batches` batches of `batch_size` samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UniformityPlan {
    pub batch_size: usize,
    pub batches: usize,
}

impl UniformityPlan {
    pub fn new(domain_size: usize, far_tv: f64, confidence: f64, cfg: &TesterConfig) -> Result<Self> {
        if domain_size < 2 {
            return Err(LabError::BadParams("uniformity domain must have ≥ 2 symbols".into()));
        }
        if !(far_tv > 0.0 && far_tv < 1.0) {
            return Err(LabError::BadParams(format!("far_tv {far_tv} outside (0,1)")));
        }
        if !(confidence > 0.0 && confidence < 1.0) {
            return Err(LabError::BadParams(format!("confidence {confidence} outside (0,1)")));
        }
        let d = domain_size as f64;
        let batch_size =
            ((cfg.batch_c * d.sqrt() / (far_tv * far_tv)).ceil() as usize).max(2);
        let fail = 1.0 - confidence;
        let batches = if fail >= 1.0 / 3.0 {
            1
        } else {
            next_odd(((cfg.amplification_kappa * (1.0 / (3.0 * fail)).ln()).ceil() as usize).max(1))
        };
        Ok(UniformityPlan { batch_size, batches })
    }

    pub fn total_samples(&self) -> usize {
        self.batch_size * self.batches
    }
}

fn next_odd(x: usize) -> usize {
    if x % 2 == 0 {
        x + 1
    } else {
        x
    }
}

/// Decision threshold between the uniform collision rate `1/D` and the
/// far-case floor `(1 + 4t²)/D`.
pub fn collision_midpoint(domain_size: usize, far_tv: f64) -> f64 {
    (1.0 + 2.0 * far_tv * far_tv) / domain_size as f64
}

/// Fraction of colliding pairs among `m·(m−1)/2`; unbiased for `Σ p²`.
pub fn collision_statistic(samples: &[usize], domain_size: usize) -> Result<f64> {
    let m = samples.len();
    if m < 2 {
        return Err(LabError::BadParams(format!("need ≥ 2 samples for collisions, got {m}")));
    }
    let mut counts = vec![0usize; domain_size];
    for &x in samples {
        if x >= domain_size {
            return Err(LabError::BadParams(format!("sample {x} outside domain [{domain_size}]")));
        }
        counts[x] += 1;
    }
    let pairs: usize = counts.iter().map(|&c| c * c.saturating_sub(1) / 2).sum();
    Ok(pairs as f64 / (m * (m - 1) / 2) as f64)
}

/// Test `samples` for uniformity on `[domain_size]` against the alternative
/// "≥ `far_tv` away in total variation", with the default constants.
///
/// The caller supplies the samples; the verdict uses as many whole batches
/// as the plan wants and the samples allow (at least one, else a budget
/// error).
pub fn collision_uniformity_test(
    samples: &[usize],
    domain_size: usize,
    far_tv: f64,
    confidence: f64,
) -> Result<UniformityVerdict> {
    collision_uniformity_test_with(samples, domain_size, far_tv, confidence, &TesterConfig::default())
}

pub fn collision_uniformity_test_with(
    samples: &[usize],
    domain_size: usize,
    far_tv: f64,
    confidence: f64,
    cfg: &TesterConfig,
) -> Result<UniformityVerdict> {
    let plan = UniformityPlan::new(domain_size, far_tv, confidence, cfg)?;
    let median = median_collision_statistic(samples, domain_size, &plan)?;
    Ok(if median <= collision_midpoint(domain_size, far_tv) {
        UniformityVerdict::Uniform
    } else {
        UniformityVerdict::Far
    })
}

/// Median per-batch collision statistic under `plan`, using as many whole
/// batches as the plan wants and the samples allow (made odd; at least one,
/// else a budget error). The verdict is `median ≤ midpoint ⇒ Uniform`;
/// scanners also use the raw median to rank competing alternatives.
pub fn median_collision_statistic(
    samples: &[usize],
    domain_size: usize,
    plan: &UniformityPlan,
) -> Result<f64> {
    let available = samples.len() / plan.batch_size;
    if available == 0 {
        return Err(LabError::BadParams(format!(
            "sample budget too small: one batch needs {} samples, got {}",
            plan.batch_size,
            samples.len()
        )));
    }
    let batches = {
        let b = available.min(plan.batches);
        if b % 2 == 0 {
            b - 1
        } else {
            b
        }
    };
    let mut stats = Vec::with_capacity(batches);
    for b in 0..batches {
        let chunk = &samples[b * plan.batch_size..(b + 1) * plan.batch_size];
        stats.push(collision_statistic(chunk, domain_size)?);
    }
    stats.sort_by(f64::total_cmp);
    Ok(stats[batches / 2])
}

/// Empirically calibrate the smallest single-batch size at which both error
/// rates stay ≤ 1/3, against the worst-case alternative `(1 ± 2t)/D`.
///
/// Bisects over `[base/8, 8·base]` with `base = ⌈√D/t²⌉`, estimating each
/// error rate from `trials` seeded Monte-Carlo batches.
pub fn calibrate_min_batch(
    domain_size: usize,
    far_tv: f64,
    trials: usize,
    seed: u64,
) -> Result<usize> {
    if domain_size < 2 || !(far_tv > 0.0 && far_tv <= 0.5) {
        return Err(LabError::BadParams(
            "calibration needs domain ≥ 2 and far_tv ∈ (0, 1/2]".into(),
        ));
    }
    if trials == 0 {
        return Err(LabError::BadParams("calibration needs ≥ 1 trial".into()));
    }
    let base = ((domain_size as f64).sqrt() / (far_tv * far_tv)).ceil() as usize;
    let (mut lo, mut hi) = ((base / 8).max(2), base * 8);
    let far_cdf = perturbed_cdf(domain_size, far_tv);
    let mid = collision_midpoint(domain_size, far_tv);
    let errs_ok = |m: usize, probe: u64| -> Result<bool> {
        let mut rng = rng_from_seed(child_seed(seed, "calibrate", probe));
        let mut batch = vec![0usize; m];
        let mut miss_u = 0;
        let mut miss_f = 0;
        for _ in 0..trials {
            for slot in batch.iter_mut() {
                *slot = rng.gen_range(0..domain_size);
            }
            if collision_statistic(&batch, domain_size)? > mid {
                miss_u += 1;
            }
            for slot in batch.iter_mut() {
                *slot = far_cdf.partition_point(|&c| c < rng.gen::<f64>());
            }
            if collision_statistic(&batch, domain_size)? <= mid {
                miss_f += 1;
            }
        }
        Ok(3 * miss_u <= trials && 3 * miss_f <= trials)
    };
    if !errs_ok(hi, 0)? {
        return Err(LabError::BadParams(format!(
            "calibration bracket exhausted: batch {hi} still fails at tv {far_tv}"
        )));
    }
    let mut probe = 1;
    while lo < hi {
        let m = lo + (hi - lo) / 2;
        if errs_ok(m, probe)? {
            hi = m;
        } else {
            lo = m + 1;
        }
        probe += 1;
    }
    Ok(hi)
}

/// CDF of the worst-case alternative `(1 ± 2t)/D` with alternating signs.
fn perturbed_cdf(domain_size: usize, far_tv: f64) -> Vec<f64> {
    let d = domain_size as f64;
    let mut acc = 0.0;
    let mut cdf = Vec::with_capacity(domain_size);
    for x in 0..domain_size {
        let sign = if x % 2 == 0 { 1.0 } else { -1.0 };
        acc += (1.0 + sign * 2.0 * far_tv) / d;
        cdf.push(acc);
    }
    // Odd domains leave the tail short; renormalize the last entry so the
    // inverse-CDF sampler never falls off the end.
    if let Some(last) = cdf.last_mut() {
        *last = 1.0;
    }
    cdf
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_arithmetic_is_frozen() {
        let cfg = TesterConfig::default();
        let plan = UniformityPlan::new(20, 0.1, 2.0 / 3.0, &cfg).unwrap();
        // ⌈8·√20 / 0.01⌉ = ⌈3577.70…⌉, one batch at confidence 2/3.
        assert_eq!(plan, UniformityPlan { batch_size: 3578, batches: 1 });
        let amped = UniformityPlan::new(20, 0.1, 0.99, &cfg).unwrap();
        // ⌈3·ln(1/0.03)⌉ = 11, already odd.
        assert_eq!(amped.batches, 11);
        assert_eq!(amped.total_samples(), 11 * 3578);
        assert!(UniformityPlan::new(1, 0.1, 0.9, &cfg).is_err());
        assert!(UniformityPlan::new(20, 0.0, 0.9, &cfg).is_err());
        assert!(UniformityPlan::new(20, 0.1, 1.0, &cfg).is_err());
    }

    #[test]
    fn collision_statistic_hand_counts() {
        assert_eq!(collision_statistic(&[0, 0, 1], 4).unwrap(), 1.0 / 3.0);
        assert_eq!(collision_statistic(&[0, 1, 2, 3], 4).unwrap(), 0.0);
        assert_eq!(collision_statistic(&[2, 2, 2], 4).unwrap(), 1.0);
        assert!(collision_statistic(&[0], 4).is_err());
        assert!(collision_statistic(&[0, 9], 4).is_err());
    }

    #[test]
    fn all_equal_samples_read_as_far() {
        // Maximal collisions: every pair collides.
        let samples = vec![7usize; 125];
        let verdict = collision_uniformity_test(&samples, 10, 0.45, 0.6).unwrap();
        assert_eq!(verdict, UniformityVerdict::Far);
    }

    #[test]
    fn too_few_samples_is_a_budget_error() {
        let samples = vec![0usize; 100];
        match collision_uniformity_test(&samples, 10, 0.45, 0.6) {
            Err(LabError::BadParams(msg)) => assert!(msg.contains("budget"), "{msg}"),
            other => panic!("expected budget error, got {other:?}"),
        }
    }

    #[test]
    fn uniform_sampler_reads_uniform_at_least_two_thirds_of_the_time() {
        let mut rng = rng_from_seed(2024);
        let plan = UniformityPlan::new(20, 0.1, 2.0 / 3.0, &TesterConfig::default()).unwrap();
        let mut hits = 0;
        for _ in 0..300 {
            let samples: Vec<usize> = (0..plan.total_samples()).map(|_| rng.gen_range(0..20)).collect();
            if collision_uniformity_test(&samples, 20, 0.1, 2.0 / 3.0).unwrap()
                == UniformityVerdict::Uniform
            {
                hits += 1;
            }
        }
        assert!(hits >= 200, "only {hits}/300 uniform verdicts");
    }

    #[test]
    fn perturbed_sampler_reads_far_at_least_two_thirds_of_the_time() {
        // (1 ± 2t)/D with t = 0.1: total variation from uniform is exactly
        // D·(2t/D)/2 = t.
        let cdf = perturbed_cdf(20, 0.1);
        let mut rng = rng_from_seed(4048);
        let plan = UniformityPlan::new(20, 0.1, 2.0 / 3.0, &TesterConfig::default()).unwrap();
        let mut hits = 0;
        for _ in 0..300 {
            let samples: Vec<usize> = (0..plan.total_samples())
                .map(|_| cdf.partition_point(|&c| c < rng.gen::<f64>()))
                .collect();
            if collision_uniformity_test(&samples, 20, 0.1, 2.0 / 3.0).unwrap()
                == UniformityVerdict::Far
            {
                hits += 1;
            }
        }
        assert!(hits >= 200, "only {hits}/300 far verdicts");
    }

    #[test]
    fn amplification_uses_the_median_batch() {
        // Two far batches outvote one uniform-looking batch (batches = 3 at
        // confidence 0.95 with κ tuned small).
        let cfg = TesterConfig { batch_c: 2.0, amplification_kappa: 0.8 };
        let plan = UniformityPlan::new(4, 0.4, 0.95, &cfg).unwrap();
        assert_eq!(plan.batches, 3);
        let m = plan.batch_size;
        let mut samples = Vec::new();
        samples.extend(vec![1usize; m]); // all-collide
        samples.extend((0..m).map(|i| i % 4)); // spread
        samples.extend(vec![2usize; m]); // all-collide
        let verdict = collision_uniformity_test_with(&samples, 4, 0.4, 0.95, &cfg).unwrap();
        assert_eq!(verdict, UniformityVerdict::Far);
    }

    #[test]
    fn calibrated_batch_grows_like_sqrt_domain() {
        let small = calibrate_min_batch(20, 0.1, 300, 9).unwrap();
        let large = calibrate_min_batch(80, 0.1, 300, 9).unwrap();
        // √(80/20) = 2: allow generous Monte-Carlo slack around it.
        let ratio = large as f64 / small as f64;
        assert!(small >= 2 && large > small, "small {small}, large {large}");
        assert!((1.2..=3.4).contains(&ratio), "ratio {ratio}");
        // The default c = 8 sits far above the calibrated minimum, as a
        // one-batch budget should.
        let default_batch =
            UniformityPlan::new(20, 0.1, 0.5, &TesterConfig::default()).unwrap().batch_size;
        assert!(default_batch >= 4 * small, "default {default_batch} vs calibrated {small}");
    }
}
