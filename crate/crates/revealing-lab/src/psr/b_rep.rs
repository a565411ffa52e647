use nalgebra::{DMatrix, DVector};

use crate::error::{LabError, Result};
use crate::pomdp::TabularPomdp;
use crate::psr::core_tests::{core_tests, TestSet};
use crate::revealing::{full_matrix, CertificateReport};
use crate::util::checked_pow;

/// Observable-operator factorization of a POMDP over the core test sets of
/// an `m`-step view: matrices `B_h(o,a) ∈ R^{U_{h+1} × U_h}` and an initial
/// predictive state `q_0 ∈ R^{U_0}` such that, for every history
/// `τ = (o_0, a_0, …, o_{h-1}, a_{h-1})` and test `t ∈ U_h`,
///
/// ```text
/// P(τ.obs, t.obs | do(τ.acts, t.acts)) = e_tᵀ B_{h-1}(o_{h-1}, a_{h-1}) ⋯ B_0(o_0, a_0) q_0.
/// ```
///
/// Full-window steps use `B_h(o,a) = M_{h+1} T_{h,a} diag(O_h(o|·)) M⁺_h`
/// with the certified left inverses; the last `m` steps use 0/1 prefix
/// indicators (and the final step collapses onto the dummy empty test).
#[derive(Clone, Debug)]
pub struct BRepresentation {
    /// The window `m` of the originating certificates.
    pub window: usize,
    pub horizon: usize,
    pub n_obs: usize,
    pub n_actions: usize,
    /// Core test sets per step, `tests[h] = U_h`.
    pub tests: Vec<TestSet>,
    /// `ops[h][o][a] = B_h(o,a)`; at `h = H-1` these are `1 × O` rows.
    pub ops: Vec<Vec<Vec<DMatrix<f64>>>>,
    /// `q_0(t) = P(t)` under the initial distribution.
    pub q0: DVector<f64>,
    /// PSR rank bound: the number of latent states.
    pub rank_bound: usize,
    /// `R_B = 1 + max_{h,o,a} ‖B_h(o,a)‖_{1→1}` (largest column ℓ1).
    pub r_b: f64,
}

impl BRepresentation {
    pub fn op(&self, h: usize, o: usize, a: usize) -> &DMatrix<f64> {
        &self.ops[h][o][a]
    }

    /// `B_{h-1}(o_{h-1},a_{h-1}) ⋯ B_0(o_0,a_0) q_0` — the predictive state
    /// after a history, computed purely inside the representation. Zero
    /// exactly on histories the model cannot produce.
    pub fn predictive_state(&self, history: &[(usize, usize)]) -> DVector<f64> {
        let mut v = self.q0.clone();
        for (h, &(o, a)) in history.iter().enumerate() {
            v = &self.ops[h][o][a] * v;
        }
        v
    }

    /// Total number of (history, test) comparison pairs
    /// [`verify_factorization`] would enumerate.
    pub fn factorization_pairs(&self) -> Option<usize> {
        let oa = self.n_obs.checked_mul(self.n_actions)?;
        let mut total: usize = 0;
        let mut histories: usize = 1;
        for ts in &self.tests {
            total = total.checked_add(histories.checked_mul(ts.size().ok()?)?)?;
            histories = histories.checked_mul(oa)?;
        }
        total.checked_add(histories)
    }
}

/// Assemble the two-regime B-representation from a window-`m` certificate
/// report. `cap` bounds the number of dense matrix elements (per matrix and
/// for the stacked inverses).
pub fn build_brep(
    pomdp: &TabularPomdp,
    report: &CertificateReport,
    cap: usize,
) -> Result<BRepresentation> {
    let m = report.window;
    let hh = pomdp.horizon;
    let (ns, no, na) = (pomdp.n_states(), pomdp.n_observations(), pomdp.n_actions());
    let tests = core_tests(pomdp, m)?;
    let expected: Vec<usize> = (0..=hh - m).collect();
    let got: Vec<usize> = report.steps.iter().map(|s| s.step).collect();
    if got != expected {
        return Err(LabError::Format(format!(
            "certificate covers steps {got:?}, expected {expected:?}"
        )));
    }

    let mut ops: Vec<Vec<Vec<DMatrix<f64>>>> = Vec::with_capacity(hh);
    for h in 0..hh {
        if h + m < hh {
            // Full-window regime: B_h(o,a) = M_{h+1} T_{h,a} diag(O_h(o|·)) M⁺_h.
            let mplus = report.steps[h].inverse.to_dense(cap)?;
            if report.steps[h].inverse.window != m {
                return Err(LabError::Format(format!(
                    "certificate at step {h} has window {}, expected {m}",
                    report.steps[h].inverse.window
                )));
            }
            let rows = tests[h + 1].size()?;
            let elems = rows.saturating_mul(tests[h].size()?);
            if elems > cap {
                return Err(LabError::CapExceeded { visited: elems, cap });
            }
            let m_next = full_matrix(pomdp, h + 1, m, cap)?;
            let mut per_o = Vec::with_capacity(no);
            for o in 0..no {
                let mut per_a = Vec::with_capacity(na);
                for a in 0..na {
                    // (T_{h,a} diag(O_h(o|·)))[s2, s] = P(s2|s,a)·O_h(o|s).
                    let core = DMatrix::from_fn(ns, ns, |s2, s| {
                        pomdp.transitions[h][s][a][s2] * pomdp.emissions[h][s][o]
                    });
                    per_a.push(&m_next * &(core * &mplus));
                }
                per_o.push(per_a);
            }
            ops.push(per_o);
        } else {
            // Truncated regime: 0/1 indicators onto the (o,a)-prefixed test.
            let w = tests[h].window;
            let n_rows = if h + 1 == hh { 1 } else { tests[h + 1].size()? };
            let n_cols = tests[h].size()?;
            let sub_obs = checked_pow(no, w - 1)
                .ok_or_else(|| LabError::BadParams("indicator rows overflow".into()))?;
            let mut per_o = Vec::with_capacity(no);
            for o in 0..no {
                let mut per_a = Vec::with_capacity(na);
                for a in 0..na {
                    let mut b = DMatrix::zeros(n_rows, n_cols);
                    if w == 1 {
                        // Final step: tests are single observations; every
                        // action collapses onto the dummy empty test.
                        b[(0, o)] = 1.0;
                    } else {
                        let sub_act = checked_pow(na, w - 2)
                            .ok_or_else(|| LabError::BadParams("indicator blocks overflow".into()))?;
                        for ap in 0..sub_act {
                            for op in 0..sub_obs {
                                let row = ap * sub_obs + op;
                                let col = (a * sub_act + ap) * (sub_obs * no)
                                    + (o * sub_obs + op);
                                b[(row, col)] = 1.0;
                            }
                        }
                    }
                    per_a.push(b);
                }
                per_o.push(per_a);
            }
            ops.push(per_o);
        }
    }

    let m0 = full_matrix(pomdp, 0, tests[0].window, cap)?;
    let init = DVector::from_column_slice(&pomdp.init);
    let q0 = &m0 * init;

    let mut max_col = 0.0f64;
    for per_o in &ops {
        for per_a in per_o {
            for b in per_a {
                for c in 0..b.ncols() {
                    let l1: f64 = b.column(c).iter().map(|v| v.abs()).sum();
                    max_col = max_col.max(l1);
                }
            }
        }
    }

    Ok(BRepresentation {
        window: m,
        horizon: hh,
        n_obs: no,
        n_actions: na,
        tests,
        ops,
        q0,
        rank_bound: ns,
        r_b: 1.0 + max_col,
    })
}

/// Predictive state computed directly from the model: forward-filter the
/// unnormalized belief over the history, then push it through the dense
/// window matrix at the current step. Independent of the B-operators.
pub fn predictive_state_from_model(
    pomdp: &TabularPomdp,
    m: usize,
    history: &[(usize, usize)],
    cap: usize,
) -> Result<DVector<f64>> {
    let h = history.len();
    if h >= pomdp.horizon {
        return Err(LabError::BadParams(
            "history leaves no room for a test".into(),
        ));
    }
    let b = belief_after(pomdp, history);
    let w = m.min(pomdp.horizon - h);
    let mat = full_matrix(pomdp, h, w, cap)?;
    Ok(&mat * b)
}

/// Unnormalized belief `P(history.obs, s_h = s | do(history.acts))`.
fn belief_after(pomdp: &TabularPomdp, history: &[(usize, usize)]) -> DVector<f64> {
    let ns = pomdp.n_states();
    let mut b = DVector::from_column_slice(&pomdp.init);
    for (g, &(o, a)) in history.iter().enumerate() {
        let mut next = DVector::zeros(ns);
        for s in 0..ns {
            let w = b[s] * pomdp.emissions[g][s][o];
            if w == 0.0 {
                continue;
            }
            for s2 in 0..ns {
                next[s2] += w * pomdp.transitions[g][s][a][s2];
            }
        }
        b = next;
    }
    b
}

/// Exhaustively compare the operator products against direct model
/// probabilities: the returned value is
/// `max |e_tᵀ B_{h-1:0}(τ) q_0 − P(τ, t)|` over *every* history `τ` of every
/// length (including unreachable ones) and every core test `t`, plus the
/// full-trajectory dummy tests at the horizon. Errors with `CapExceeded`
/// when the pair count exceeds `cap`.
pub fn verify_factorization(
    brep: &BRepresentation,
    pomdp: &TabularPomdp,
    cap: usize,
) -> Result<f64> {
    if brep.horizon != pomdp.horizon
        || brep.n_obs != pomdp.n_observations()
        || brep.n_actions != pomdp.n_actions()
    {
        return Err(LabError::Format(
            "representation dimensions do not match the model".into(),
        ));
    }
    let pairs = brep
        .factorization_pairs()
        .ok_or_else(|| LabError::BadParams("factorization pair count overflow".into()))?;
    if pairs > cap {
        return Err(LabError::CapExceeded {
            visited: pairs,
            cap,
        });
    }
    // Dense window matrices per step for the model-side predictive states.
    let mats: Vec<DMatrix<f64>> = (0..pomdp.horizon)
        .map(|h| full_matrix(pomdp, h, brep.tests[h].window, usize::MAX))
        .collect::<Result<_>>()?;

    fn rec(
        brep: &BRepresentation,
        pomdp: &TabularPomdp,
        mats: &[DMatrix<f64>],
        h: usize,
        belief: &DVector<f64>,
        v: &DVector<f64>,
        worst: &mut f64,
    ) {
        if h == pomdp.horizon {
            let total: f64 = belief.iter().sum();
            *worst = worst.max((v[0] - total).abs());
            return;
        }
        let q_model = &mats[h] * belief;
        for t in 0..v.len() {
            *worst = worst.max((v[t] - q_model[t]).abs());
        }
        for o in 0..pomdp.n_observations() {
            let weighted = DVector::from_fn(pomdp.n_states(), |s, _| {
                belief[s] * pomdp.emissions[h][s][o]
            });
            for a in 0..pomdp.n_actions() {
                let v2 = &brep.ops[h][o][a] * v;
                let b2 = if h + 1 == pomdp.horizon {
                    weighted.clone()
                } else {
                    DVector::from_fn(pomdp.n_states(), |s2, _| {
                        (0..pomdp.n_states())
                            .map(|s| weighted[s] * pomdp.transitions[h][s][a][s2])
                            .sum()
                    })
                };
                rec(brep, pomdp, mats, h + 1, &b2, &v2, worst);
            }
        }
    }

    let mut worst = 0.0;
    let init = DVector::from_column_slice(&pomdp.init);
    rec(brep, pomdp, &mats, 0, &init, &brep.q0, &mut worst);
    Ok(worst)
}

/// Numerical PSR rank: stack the predictive states of all histories at each
/// step and take the largest numerical rank (singular values above
/// `1e-8 · σ_max`). Errors with `CapExceeded` if some step would need more
/// than `cap` history columns.
pub fn numerical_psr_rank(brep: &BRepresentation, cap: usize) -> Result<usize> {
    let oa = brep.n_obs * brep.n_actions;
    let mut best = 0usize;
    let mut frontier: Vec<DVector<f64>> = vec![brep.q0.clone()];
    for h in 0..brep.horizon {
        // D_h has one column per length-h history; rank is unaffected by
        // dropping duplicate and zero columns.
        let d = DMatrix::from_columns(&frontier);
        let svd = d.svd(false, false);
        let smax = svd.singular_values.iter().fold(0.0f64, |a, &b| a.max(b));
        if smax > 0.0 {
            let rank = svd
                .singular_values
                .iter()
                .filter(|&&s| s > 1e-8 * smax)
                .count();
            best = best.max(rank);
        }
        if h + 1 == brep.horizon {
            break;
        }
        if frontier.len().checked_mul(oa).map(|n| n > cap).unwrap_or(true) {
            return Err(LabError::CapExceeded {
                visited: frontier.len() * oa,
                cap,
            });
        }
        let mut next = Vec::with_capacity(frontier.len() * oa);
        for v in &frontier {
            for o in 0..brep.n_obs {
                for a in 0..brep.n_actions {
                    next.push(&brep.ops[h][o][a] * v);
                }
            }
        }
        frontier = next;
    }
    Ok(best)
}
