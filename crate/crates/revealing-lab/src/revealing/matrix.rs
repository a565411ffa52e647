use nalgebra::DMatrix;

use crate::error::{LabError, Result};
use crate::pomdp::TabularPomdp;
use crate::util::{checked_pow, index_to_seq};

/// One action-sequence block of the window-`w` observable matrix
/// `M ∈ R^{O^w·A^{w-1} × S}` at a given step, restricted to observation
/// sequences that have positive probability from some state unmasked at
/// `step`. Entries are `P(o_{step..step+w-1} = o | s_step = s, do(actions))`;
/// columns of masked states are identically zero.
#[derive(Clone, Debug)]
pub struct ReachableBlock {
    pub step: usize,
    pub window: usize,
    /// Action sequence of length `window - 1` indexing this block.
    pub actions: Vec<usize>,
    /// Row labels: observation-sequence indices (big-endian base `O`),
    /// strictly increasing.
    pub obs_rows: Vec<usize>,
    /// `obs_rows.len() × n_states`.
    pub mat: DMatrix<f64>,
}

fn check_window(pomdp: &TabularPomdp, step: usize, window: usize) -> Result<()> {
    if window == 0 || step + window > pomdp.horizon {
        return Err(LabError::BadParams(format!(
            "window {window} at step {step} does not fit horizon {}",
            pomdp.horizon
        )));
    }
    Ok(())
}

/// Build one action block, pruned to observation sequences reachable from
/// unmasked states. Cost scales with the support size, not with `O^w`.
pub fn reachable_block(
    pomdp: &TabularPomdp,
    step: usize,
    window: usize,
    actions: &[usize],
) -> Result<ReachableBlock> {
    check_window(pomdp, step, window)?;
    if actions.len() + 1 != window {
        return Err(LabError::BadParams(format!(
            "expected {} actions for window {window}, got {}",
            window - 1,
            actions.len()
        )));
    }
    let ns = pomdp.n_states();
    // Per-level transition matrices T[s, s'] for the fixed action sequence.
    let trans: Vec<DMatrix<f64>> = (0..window - 1)
        .map(|t| {
            DMatrix::from_fn(ns, ns, |s, s2| pomdp.transitions[step + t][s][actions[t]][s2])
        })
        .collect();

    struct Walk<'a> {
        pomdp: &'a TabularPomdp,
        step: usize,
        window: usize,
        trans: &'a [DMatrix<f64>],
        rows: Vec<(usize, Vec<f64>)>,
    }
    // `alpha[s0, st] = P(o_{step..step+t-1} = prefix, s_{step+t} = st | s0)`.
    fn rec(w: &mut Walk<'_>, t: usize, prefix: usize, alpha: &DMatrix<f64>) {
        let ns = alpha.nrows();
        for o in 0..w.pomdp.n_observations() {
            let mut beta = alpha.clone();
            let mut any = false;
            for st in 0..ns {
                let e = w.pomdp.emissions[w.step + t][st][o];
                for s0 in 0..ns {
                    beta[(s0, st)] *= e;
                    any |= beta[(s0, st)] > 0.0;
                }
            }
            if !any {
                continue;
            }
            if t + 1 == w.window {
                let row: Vec<f64> = (0..ns)
                    .map(|s0| crate::util::kahan_sum((0..ns).map(|st| beta[(s0, st)])))
                    .collect();
                w.rows.push((prefix * w.pomdp.n_observations() + o, row));
            } else {
                let next = &beta * &w.trans[t];
                rec(w, t + 1, prefix * w.pomdp.n_observations() + o, &next);
            }
        }
    }

    let alpha0 = DMatrix::from_fn(ns, ns, |i, j| {
        if i == j && pomdp.reachable[step][i] {
            1.0
        } else {
            0.0
        }
    });
    let mut walk = Walk {
        pomdp,
        step,
        window,
        trans: &trans,
        rows: Vec::new(),
    };
    rec(&mut walk, 0, 0, &alpha0);
    let obs_rows: Vec<usize> = walk.rows.iter().map(|(o, _)| *o).collect();
    let mat = DMatrix::from_fn(walk.rows.len(), ns, |r, s| walk.rows[r].1[s]);
    Ok(ReachableBlock {
        step,
        window,
        actions: actions.to_vec(),
        obs_rows,
        mat,
    })
}

/// Exact `P(o-seq | s, do(a-seq))` for an explicit list of
/// `(obs_idx, act_idx)` columns, for every start state at once (backward
/// pass, `O(window·S²)` per column). Masked states' entries are zeroed.
pub fn column_probs(
    pomdp: &TabularPomdp,
    step: usize,
    window: usize,
    cols: &[(usize, usize)],
) -> Result<DMatrix<f64>> {
    check_window(pomdp, step, window)?;
    let ns = pomdp.n_states();
    let mut out = DMatrix::zeros(cols.len(), ns);
    for (ci, &(o_idx, a_idx)) in cols.iter().enumerate() {
        let o_seq = index_to_seq(o_idx, pomdp.n_observations(), window);
        let a_seq = index_to_seq(a_idx, pomdp.n_actions(), window - 1);
        let mut beta = vec![1.0; ns];
        for t in (0..window).rev() {
            let mut next = vec![0.0; ns];
            for s in 0..ns {
                let tail = if t + 1 == window {
                    1.0
                } else {
                    let row = &pomdp.transitions[step + t][s][a_seq[t]];
                    crate::util::kahan_sum(row.iter().zip(&beta).map(|(&p, &b)| p * b))
                };
                next[s] = pomdp.emissions[step + t][s][o_seq[t]] * tail;
            }
            beta = next;
        }
        for s in 0..ns {
            out[(ci, s)] = if pomdp.reachable[step][s] { beta[s] } else { 0.0 };
        }
    }
    Ok(out)
}

/// Dense window-`w` observable matrix `(A^{w-1}·O^w) × S` with rows ordered
/// `act_idx · O^w + obs_idx`. Only intended for small windows; errors if the
/// row count exceeds `max_rows`.
pub fn full_matrix(
    pomdp: &TabularPomdp,
    step: usize,
    window: usize,
    max_rows: usize,
) -> Result<DMatrix<f64>> {
    check_window(pomdp, step, window)?;
    let obs_rows = checked_pow(pomdp.n_observations(), window)
        .ok_or_else(|| LabError::BadParams("observation rows overflow".into()))?;
    let blocks = checked_pow(pomdp.n_actions(), window - 1)
        .ok_or_else(|| LabError::BadParams("action blocks overflow".into()))?;
    let rows = obs_rows
        .checked_mul(blocks)
        .filter(|&r| r <= max_rows)
        .ok_or(LabError::CapExceeded {
            visited: usize::MAX,
            cap: max_rows,
        })?;
    let cols: Vec<(usize, usize)> = (0..blocks)
        .flat_map(|a| (0..obs_rows).map(move |o| (o, a)))
        .collect();
    let probs = column_probs(pomdp, step, window, &cols)?;
    Ok(DMatrix::from_fn(rows, pomdp.n_states(), |r, s| probs[(r, s)]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pomdp::model::testkit::random_pomdp;
    use crate::pomdp::{enumerate_distribution, Policy};

    /// Columns of the window matrix must be probability distributions over
    /// observation sequences for every unmasked state and action sequence.
    #[test]
    fn block_columns_are_distributions() {
        let m = random_pomdp(11, 4, 3, 3, 2);
        for step in 0..3 {
            for a in 0..2 {
                let b = reachable_block(&m, step, 2, &[a]).unwrap();
                for s in 0..3 {
                    let total: f64 = (0..b.obs_rows.len()).map(|r| b.mat[(r, s)]).sum();
                    assert!((total - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    /// Dual-route check: the window matrix computed by linear algebra must
    /// match probabilities read off an exhaustive trajectory enumeration
    /// under the corresponding open-loop policy.
    #[test]
    fn matrix_matches_trajectory_enumeration() {
        let m = random_pomdp(21, 3, 3, 2, 2);
        let window = 3;
        let step = 0;
        let full = full_matrix(&m, step, window, 100_000).unwrap();
        let obs_rows = 8usize; // 2^3
        for a_idx in 0..4usize {
            let a_seq = index_to_seq(a_idx, 2, 2);
            let mut acts = a_seq.clone();
            acts.push(0); // action at the last window step is irrelevant
            let pi = Policy::ActionSequence(acts);
            let dist = enumerate_distribution(&m, &pi, 1_000_000).unwrap();
            for o_idx in 0..obs_rows {
                let o_seq = index_to_seq(o_idx, 2, window);
                let p_traj = dist.prob_of(|it| it.observations == o_seq);
                // Start-state mixture: init-weighted matrix column entries.
                let p_mat: f64 = (0..3).map(|s| m.init[s] * full[(a_idx * obs_rows + o_idx, s)]).sum();
                assert!(
                    (p_traj - p_mat).abs() < 1e-12,
                    "a={a_idx} o={o_idx}: {p_traj} vs {p_mat}"
                );
            }
        }
    }

    /// The pruned block must agree entry-for-entry with the dense matrix.
    #[test]
    fn pruned_block_matches_full_matrix() {
        let m = random_pomdp(31, 4, 3, 2, 2);
        let window = 2;
        let obs_rows = 4usize;
        for step in 0..=2 {
            let full = full_matrix(&m, step, window, 100_000).unwrap();
            for a in 0..2usize {
                let block = reachable_block(&m, step, window, &[a]).unwrap();
                let mut seen = vec![false; obs_rows];
                for (r, &o_idx) in block.obs_rows.iter().enumerate() {
                    seen[o_idx] = true;
                    for s in 0..3 {
                        assert!(
                            (block.mat[(r, s)] - full[(a * obs_rows + o_idx, s)]).abs() < 1e-14
                        );
                    }
                }
                // Rows pruned away must be identically zero in the dense form.
                for o_idx in 0..obs_rows {
                    if !seen[o_idx] {
                        for s in 0..3 {
                            assert_eq!(full[(a * obs_rows + o_idx, s)], 0.0);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn column_probs_match_full_matrix() {
        let m = random_pomdp(41, 3, 2, 2, 2);
        let full = full_matrix(&m, 0, 2, 100_000).unwrap();
        let cols = vec![(0usize, 0usize), (3, 1), (2, 0), (1, 1)];
        let probs = column_probs(&m, 0, 2, &cols).unwrap();
        for (ci, &(o, a)) in cols.iter().enumerate() {
            for s in 0..2 {
                assert!((probs[(ci, s)] - full[(a * 4 + o, s)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn window_must_fit_horizon() {
        let m = random_pomdp(5, 3, 2, 2, 2);
        assert!(reachable_block(&m, 2, 2, &[0]).is_err());
        assert!(full_matrix(&m, 1, 3, 1000).is_err());
    }
}
