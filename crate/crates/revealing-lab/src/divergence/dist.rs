use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::pomdp::TrajectoryDist;
use crate::util::Kahan;

/// A probability distribution on an explicit finite support. Keys are
/// arbitrary hashable values — outcome indices, trajectories, or tuples of
/// trajectories — and alignment between two distributions happens by key,
/// so the two supports need not be listed in the same order or even agree.
#[derive(Clone, Debug)]
pub struct FiniteDistribution<T> {
    pub support: Vec<T>,
    pub probs: Vec<f64>,
}

impl<T: Eq + Hash + Clone> FiniteDistribution<T> {
    /// Checks lengths, key uniqueness, nonnegativity, and normalization to
    /// within `1e-10`.
    pub fn new(support: Vec<T>, probs: Vec<f64>) -> Result<Self> {
        if support.len() != probs.len() {
            return Err(LabError::BadParams(format!(
                "support has {} entries but probs has {}",
                support.len(),
                probs.len()
            )));
        }
        if probs.iter().any(|&p| !p.is_finite() || p < 0.0) {
            return Err(LabError::BadParams(
                "probabilities must be finite and nonnegative".into(),
            ));
        }
        let mut seen = HashMap::with_capacity(support.len());
        for (i, key) in support.iter().enumerate() {
            if seen.insert(key, i).is_some() {
                return Err(LabError::BadParams(format!("duplicate support key at index {i}")));
            }
        }
        let total = crate::util::kahan_sum(probs.iter().copied());
        if (total - 1.0).abs() > 1e-10 {
            return Err(LabError::BadParams(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(FiniteDistribution { support, probs })
    }

    /// Pairs of `(p(ω), q(ω))` over the union of the two supports.
    fn aligned(&self, other: &FiniteDistribution<T>) -> Vec<(f64, f64)> {
        let index: HashMap<&T, usize> = other
            .support
            .iter()
            .enumerate()
            .map(|(i, k)| (k, i))
            .collect();
        let mut pairs = Vec::with_capacity(self.support.len() + other.support.len());
        let mut matched = vec![false; other.support.len()];
        for (key, &p) in self.support.iter().zip(&self.probs) {
            let q = match index.get(key) {
                Some(&j) => {
                    matched[j] = true;
                    other.probs[j]
                }
                None => 0.0,
            };
            pairs.push((p, q));
        }
        for (j, &q) in other.probs.iter().enumerate() {
            if !matched[j] {
                pairs.push((0.0, q));
            }
        }
        pairs
    }
}

impl FiniteDistribution<(Vec<usize>, Vec<usize>)> {
    /// The exact distribution over complete trajectories of a
    /// (model, policy) pair, keyed by `(observations, actions)`.
    pub fn from_trajectories(dist: &TrajectoryDist) -> Result<Self> {
        FiniteDistribution::new(
            dist.items
                .iter()
                .map(|i| (i.observations.clone(), i.actions.clone()))
                .collect(),
            dist.items.iter().map(|i| i.prob).collect(),
        )
    }
}

/// The four f-divergences used throughout: total variation, squared
/// Hellinger distance, Kullback–Leibler, and chi-square. `kl` and `chi_sq`
/// are `+∞` when `P` puts mass where `Q` has none; `tv` and `hellinger_sq`
/// are always finite.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DivergenceSet {
    /// `TV(P,Q) = ½ Σ_ω |P(ω) − Q(ω)| ∈ [0, 1]`.
    pub tv: f64,
    /// `H²(P,Q) = Σ_ω (√P(ω) − √Q(ω))² ∈ [0, 2]`.
    pub hellinger_sq: f64,
    /// `KL(P‖Q) = Σ_{P(ω)>0} P(ω) ln(P(ω)/Q(ω))`.
    pub kl: f64,
    /// `χ²(P‖Q) = Σ_{Q(ω)>0} P(ω)²/Q(ω) − 1`.
    pub chi_sq: f64,
}

/// Computes all four divergences of `P` from `Q` in one pass over the
/// union of supports, with compensated summation.
pub fn divergences<T: Eq + Hash + Clone>(
    p: &FiniteDistribution<T>,
    q: &FiniteDistribution<T>,
) -> DivergenceSet {
    let mut tv = Kahan::new();
    let mut hel = Kahan::new();
    let mut kl = Kahan::new();
    let mut chi = Kahan::new();
    let mut dominated = true;
    for (pw, qw) in p.aligned(q) {
        tv.add((pw - qw).abs());
        let d = pw.sqrt() - qw.sqrt();
        hel.add(d * d);
        if pw > 0.0 {
            if qw > 0.0 {
                kl.add(pw * (pw / qw).ln());
                chi.add(pw * pw / qw);
            } else {
                dominated = false;
            }
        } else if qw > 0.0 {
            chi.add(0.0); // p² / q = 0
        }
    }
    DivergenceSet {
        tv: 0.5 * tv.total(),
        hellinger_sq: hel.total(),
        kl: if dominated { kl.total() } else { f64::INFINITY },
        chi_sq: if dominated { chi.total() - 1.0 } else { f64::INFINITY },
    }
}

/// Outcome of the Hellinger conditioning inequality
/// `E_{X∼P}[H²(P_{Y|X}, Q_{Y|X})] ≤ 2 H²(P_{XY}, Q_{XY})`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct HellingerConditioningReport {
    /// `E_{X∼P}[H²(P_{Y|X}, Q_{Y|X})]`.
    pub lhs: f64,
    /// `2 H²(P_{XY}, Q_{XY})`.
    pub rhs: f64,
    pub ok: bool,
}

/// Verifies the conditioning inequality on a pair of joint distributions
/// given as `[x][y]` tables. When `Q(x) = 0` but `P(x) > 0` the conditional
/// `Q_{Y|X=x}` is taken as orthogonal to `P_{Y|X=x}` (squared Hellinger
/// distance 2), the limit under which the inequality is tightest.
pub fn hellinger_conditioning_check(
    joint_p: &[Vec<f64>],
    joint_q: &[Vec<f64>],
) -> Result<HellingerConditioningReport> {
    let rows = joint_p.len();
    if rows == 0 || joint_q.len() != rows || joint_p[0].is_empty() {
        return Err(LabError::BadParams("joint tables must be nonempty and same shape".into()));
    }
    let cols = joint_p[0].len();
    for (rp, rq) in joint_p.iter().zip(joint_q) {
        if rp.len() != cols || rq.len() != cols {
            return Err(LabError::BadParams("ragged joint table".into()));
        }
        if rp.iter().chain(rq).any(|&v| !v.is_finite() || v < 0.0) {
            return Err(LabError::BadParams("joint entries must be finite and nonnegative".into()));
        }
    }
    for (name, table) in [("P", joint_p), ("Q", joint_q)] {
        let total = crate::util::kahan_sum(table.iter().flatten().copied());
        if (total - 1.0).abs() > 1e-10 {
            return Err(LabError::BadParams(format!("joint {name} sums to {total}, not 1")));
        }
    }

    // Left side: P-weighted conditional squared Hellinger distances, via the
    // affinity form H² = 2 − 2 Σ_y √(p(y|x) q(y|x)).
    let mut lhs = Kahan::new();
    for (rp, rq) in joint_p.iter().zip(joint_q) {
        let px = crate::util::kahan_sum(rp.iter().copied());
        if px == 0.0 {
            continue;
        }
        let qx = crate::util::kahan_sum(rq.iter().copied());
        let affinity = if qx == 0.0 {
            0.0
        } else {
            crate::util::kahan_sum(
                rp.iter()
                    .zip(rq)
                    .map(|(&pxy, &qxy)| ((pxy / px) * (qxy / qx)).sqrt()),
            )
        };
        lhs.add(px * (2.0 - 2.0 * affinity));
    }

    // Right side through the generic divergence path on the flattened joints.
    let keys: Vec<(usize, usize)> = (0..rows)
        .flat_map(|x| (0..cols).map(move |y| (x, y)))
        .collect();
    let flat_p = FiniteDistribution::new(keys.clone(), joint_p.iter().flatten().copied().collect())?;
    let flat_q = FiniteDistribution::new(keys, joint_q.iter().flatten().copied().collect())?;
    let rhs = 2.0 * divergences(&flat_p, &flat_q).hellinger_sq;

    let lhs = lhs.total();
    Ok(HellingerConditioningReport { lhs, rhs, ok: lhs <= rhs + 1e-10 })
}
