use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::pomdp::TabularPomdp;
use crate::revealing::inverse::{
    block_left_inverse, product_via_model, product_with_block, residual_on_transitions,
    LeftInverse,
};
use crate::revealing::matrix::reachable_block;
use crate::util::{checked_pow, index_to_seq};

/// Format tag stamped into serialized certificates.
pub const CERT_FORMAT: &str = "revealing-certificate/v1";

/// Default acceptance threshold for `‖M⁺M t - t‖∞` over required columns.
pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-9;

/// How a step certificate's inverse was produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Construction {
    /// Closed-form block inverse at the full window.
    Block {
        base_actions: Vec<usize>,
    },
    /// Closed-form block inverse at a shorter window, lifted up by
    /// repeatedly appending `lift_action` and marginalizing observations.
    Lifted {
        base_window: usize,
        base_actions: Vec<usize>,
        lift_action: usize,
    },
    /// Supplied externally (e.g. a pseudoinverse); carries no structure.
    UserSupplied,
}

/// A certified generalized left inverse for one step's window matrix.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepCertificate {
    pub step: usize,
    pub construction: Construction,
    /// Exact `(*→1)` operator norm of `inverse`.
    pub star_to_one: f64,
    /// `max ‖M⁺M t - t‖∞` over required direction columns, recomputed
    /// directly at the full window from the model.
    pub residual: f64,
    pub inverse: LeftInverse,
}

/// Certificates for every window position, establishing the revealing
/// constant bound `α⁻¹ ≤ alpha_inv`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertificateReport {
    pub format: String,
    pub window: usize,
    pub alpha_inv: f64,
    pub max_residual: f64,
    pub steps: Vec<StepCertificate>,
}

/// Search for a certified inverse at one step: base windows `r = 1..=window`
/// in increasing order, action sequences in lexicographic order, first
/// verified construction wins. The returned residual is recomputed at the
/// target window directly from the model (not inherited from the base).
pub fn certify_step(
    pomdp: &TabularPomdp,
    step: usize,
    window: usize,
    residual_tol: f64,
) -> Result<StepCertificate> {
    for r in 1..=window {
        let blocks = checked_pow(pomdp.n_actions(), r - 1)
            .ok_or_else(|| LabError::BadParams("action block count overflow".into()))?;
        for a_idx in 0..blocks {
            let a_seq = index_to_seq(a_idx, pomdp.n_actions(), r - 1);
            let block = reachable_block(pomdp, step, r, &a_seq)?;
            let base = match block_left_inverse(pomdp, &block) {
                Ok(inv) => inv,
                Err(LabError::UnsupportedStructure(_)) => continue,
                Err(e) => return Err(e),
            };
            // Cheap screening at the base window.
            let g = product_with_block(&base, &block);
            if residual_on_transitions(pomdp, step, &g) > residual_tol {
                continue;
            }
            let mut inv = base;
            for _ in r..window {
                inv = inv.lift(0);
            }
            // Honest re-verification at the target window.
            let g_w = product_via_model(pomdp, step, &inv)?;
            let residual = residual_on_transitions(pomdp, step, &g_w);
            if residual > residual_tol {
                continue;
            }
            let star_to_one = inv.star_to_one()?;
            let construction = if r == window {
                Construction::Block { base_actions: a_seq }
            } else {
                Construction::Lifted {
                    base_window: r,
                    base_actions: a_seq,
                    lift_action: 0,
                }
            };
            return Ok(StepCertificate {
                step,
                construction,
                star_to_one,
                residual,
                inverse: inv,
            });
        }
    }
    Err(LabError::UnsupportedStructure(format!(
        "no certified construction found at step {step}, window {window}"
    )))
}

/// Certify all window positions `step ∈ 0..=H-window`. Failure at any step
/// aborts; failure is not a proof of non-revealing (the constructor only
/// handles support components of one or two columns) — see
/// [`non_revealing_witness`] for positive impossibility certificates.
pub fn certify(pomdp: &TabularPomdp, window: usize) -> Result<CertificateReport> {
    certify_with(pomdp, window, DEFAULT_RESIDUAL_TOL)
}

pub fn certify_with(
    pomdp: &TabularPomdp,
    window: usize,
    residual_tol: f64,
) -> Result<CertificateReport> {
    if window == 0 || window > pomdp.horizon {
        return Err(LabError::BadParams(format!(
            "window {window} outside 1..={}",
            pomdp.horizon
        )));
    }
    let steps: Vec<StepCertificate> = (0..=pomdp.horizon - window)
        .map(|h| certify_step(pomdp, h, window, residual_tol))
        .collect::<Result<_>>()?;
    let alpha_inv = steps.iter().map(|s| s.star_to_one).fold(0.0, f64::max);
    let max_residual = steps.iter().map(|s| s.residual).fold(0.0, f64::max);
    Ok(CertificateReport {
        format: CERT_FORMAT.to_string(),
        window,
        alpha_inv,
        max_residual,
        steps,
    })
}

/// Result of re-checking a stored certificate against a model.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertificateCheck {
    /// Residuals recomputed from scratch (max over steps).
    pub max_residual: f64,
    /// Norms recomputed from scratch (max over steps).
    pub alpha_inv: f64,
    /// Largest |stored − recomputed| norm discrepancy.
    pub norm_gap: f64,
}

/// Re-verify a certificate: recompute every step's product `M⁺M` from the
/// model and its `(*→1)` norm from the stored inverse, independently of how
/// the certificate was produced.
pub fn verify_certificate(
    pomdp: &TabularPomdp,
    report: &CertificateReport,
) -> Result<CertificateCheck> {
    if report.window == 0 || report.window > pomdp.horizon {
        return Err(LabError::Format("certificate window mismatch".into()));
    }
    let expected: Vec<usize> = (0..=pomdp.horizon - report.window).collect();
    let got: Vec<usize> = report.steps.iter().map(|s| s.step).collect();
    if expected != got {
        return Err(LabError::Format(format!(
            "certificate covers steps {got:?}, expected {expected:?}"
        )));
    }
    let mut max_residual = 0.0f64;
    let mut alpha_inv = 0.0f64;
    let mut norm_gap = 0.0f64;
    for sc in &report.steps {
        if sc.inverse.n_states != pomdp.n_states()
            || sc.inverse.n_obs != pomdp.n_observations()
            || sc.inverse.n_actions != pomdp.n_actions()
            || sc.inverse.window != report.window
        {
            return Err(LabError::Format(format!(
                "certificate dimensions mismatch model at step {}",
                sc.step
            )));
        }
        let g = product_via_model(pomdp, sc.step, &sc.inverse)?;
        max_residual = max_residual.max(residual_on_transitions(pomdp, sc.step, &g));
        let norm = sc.inverse.star_to_one()?;
        alpha_inv = alpha_inv.max(norm);
        norm_gap = norm_gap.max((norm - sc.star_to_one).abs());
    }
    Ok(CertificateCheck {
        max_residual,
        alpha_inv,
        norm_gap,
    })
}

pub fn certificate_to_json(report: &CertificateReport) -> Result<String> {
    Ok(serde_json::to_string(report)?)
}

pub fn certificate_from_json(text: &str) -> Result<CertificateReport> {
    let report: CertificateReport = serde_json::from_str(text)?;
    if report.format != CERT_FORMAT {
        return Err(LabError::Format(format!(
            "expected format {CERT_FORMAT:?}, found {:?}",
            report.format
        )));
    }
    Ok(report)
}

/// A programmatic impossibility certificate: at `step`, the states in each
/// of `equal_pairs` have exactly equal window-matrix columns, yet the two
/// step-`step-1` transition columns selected by `prev_state` and `actions`
/// differ along the span of those pairs. Any generalized left inverse then
/// incurs residual at least `residual_lower_bound` on one of the two
/// columns, so no window-`window` certificate can exist.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NonRevealingWitness {
    pub step: usize,
    pub window: usize,
    pub equal_pairs: Vec<(usize, usize)>,
    pub prev_state: usize,
    pub actions: (usize, usize),
    pub residual_lower_bound: f64,
}

/// Search for a non-revealing witness at the given window. Returns the
/// witness with the largest residual lower bound, or `None`.
///
/// Soundness: if `M e_s = M e_{s'}` exactly for each pair and
/// `t1 - t2 = Σ_p c_p (e_{s_p} - e_{s'_p})`, then `M⁺M(t1 - t2) = 0` for
/// every `M⁺`, so the residuals `r_i = M⁺M t_i - t_i` satisfy
/// `r1 - r2 = -(t1 - t2)`, forcing `max(‖r1‖∞, ‖r2‖∞) ≥ ‖t1 - t2‖∞ / 2`.
pub fn non_revealing_witness(
    pomdp: &TabularPomdp,
    window: usize,
) -> Result<Option<NonRevealingWitness>> {
    if window == 0 || window > pomdp.horizon {
        return Err(LabError::BadParams(format!(
            "window {window} outside 1..={}",
            pomdp.horizon
        )));
    }
    let ns = pomdp.n_states();
    let blocks = checked_pow(pomdp.n_actions(), window - 1)
        .ok_or_else(|| LabError::BadParams("action block count overflow".into()))?;
    let mut best: Option<NonRevealingWitness> = None;
    for step in 1..=pomdp.horizon - window {
        let unmasked: Vec<usize> = (0..ns).filter(|&s| pomdp.reachable[step][s]).collect();
        if unmasked.len() < 2 {
            continue;
        }
        // Exact column equality must hold in every action block.
        let mut equal = vec![vec![true; unmasked.len()]; unmasked.len()];
        for a_idx in 0..blocks {
            let a_seq = index_to_seq(a_idx, pomdp.n_actions(), window - 1);
            let block = reachable_block(pomdp, step, window, &a_seq)?;
            for (i, &si) in unmasked.iter().enumerate() {
                for (j, &sj) in unmasked.iter().enumerate().skip(i + 1) {
                    if equal[i][j] {
                        let diff = (0..block.obs_rows.len())
                            .map(|r| (block.mat[(r, si)] - block.mat[(r, sj)]).abs())
                            .fold(0.0, f64::max);
                        if diff > 1e-14 {
                            equal[i][j] = false;
                        }
                    }
                }
            }
        }
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for i in 0..unmasked.len() {
            for j in i + 1..unmasked.len() {
                if equal[i][j] {
                    pairs.push((unmasked[i], unmasked[j]));
                }
            }
        }
        if pairs.is_empty() {
            continue;
        }
        let d = DMatrix::from_fn(ns, pairs.len(), |s, p| {
            if s == pairs[p].0 {
                1.0
            } else if s == pairs[p].1 {
                -1.0
            } else {
                0.0
            }
        });
        let svd = d.clone().svd(true, true);
        for s_prev in 0..ns {
            if !pomdp.reachable[step - 1][s_prev] {
                continue;
            }
            for a1 in 0..pomdp.n_actions() {
                for a2 in a1 + 1..pomdp.n_actions() {
                    let t1 = &pomdp.transitions[step - 1][s_prev][a1];
                    let t2 = &pomdp.transitions[step - 1][s_prev][a2];
                    let delta = DVector::from_fn(ns, |s, _| t1[s] - t2[s]);
                    let linf = delta.iter().map(|v| v.abs()).fold(0.0, f64::max);
                    if linf < 1e-14 {
                        continue;
                    }
                    let Ok(coeff) = svd.solve(&delta, 1e-12) else {
                        continue;
                    };
                    let resid = (&d * &coeff - &delta)
                        .iter()
                        .map(|v| v.abs())
                        .fold(0.0, f64::max);
                    if resid > 1e-12 {
                        continue;
                    }
                    let bound = linf / 2.0;
                    if best
                        .as_ref()
                        .map(|w| bound > w.residual_lower_bound)
                        .unwrap_or(true)
                    {
                        best = Some(NonRevealingWitness {
                            step,
                            window,
                            equal_pairs: pairs.clone(),
                            prev_state: s_prev,
                            actions: (a1, a2),
                            residual_lower_bound: bound,
                        });
                    }
                }
            }
        }
    }
    Ok(best)
}
