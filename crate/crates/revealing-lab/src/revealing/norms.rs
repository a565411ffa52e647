use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{LabError, Result};

/// Hard cap on the number of states entering the exact sign enumeration.
pub const MAX_SIGN_STATES: usize = 24;

/// `‖x‖_* = [Σ_a (Σ_o |x(o,a)|)²]^{1/2}` for a vector over
/// `(obs-seq, act-seq)` pairs laid out in blocks of `obs_rows` consecutive
/// observation entries per action sequence.
pub fn star_norm(x: &DVector<f64>, obs_rows: usize) -> f64 {
    assert_eq!(x.len() % obs_rows, 0, "vector not block-aligned");
    let mut sq = 0.0;
    for block in 0..x.len() / obs_rows {
        let l1: f64 = (0..obs_rows)
            .map(|o| x[block * obs_rows + o].abs())
            .sum();
        sq += l1 * l1;
    }
    sq.sqrt()
}

/// Dual of the star norm: `[Σ_a (max_o |x(o,a)|)²]^{1/2}`.
pub fn star_dual_norm(x: &DVector<f64>, obs_rows: usize) -> f64 {
    assert_eq!(x.len() % obs_rows, 0, "vector not block-aligned");
    let mut sq = 0.0;
    for block in 0..x.len() / obs_rows {
        let linf = (0..obs_rows)
            .map(|o| x[block * obs_rows + o].abs())
            .fold(0.0, f64::max);
        sq += linf * linf;
    }
    sq.sqrt()
}

/// Largest-column ℓ1 norm, i.e. the `(1→1)` operator norm.
pub fn one_to_one_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.ncols())
        .map(|c| m.column(c).iter().map(|v| v.abs()).sum())
        .fold(0.0, f64::max)
}

/// Result of an exact `(*→1)` operator-norm computation together with a
/// primal witness certifying attainment: `norm` comes from the dual route
/// (maximization over sign vectors), `witness_value = ‖M x‖₁` re-evaluates
/// the found maximizer directly. The two must agree to float precision.
#[derive(Clone, Debug)]
pub struct StarToOne {
    pub norm: f64,
    pub witness: DVector<f64>,
    pub witness_value: f64,
}

/// Build the unit-star-norm witness maximizing `zᵀMx` for fixed signs `z`,
/// given `c = Mᵀz`: put all mass of each action block on its largest-|c|
/// observation row, with block weights ℓ2-proportional to those maxima.
fn witness_for_scores(c: &DVector<f64>, obs_rows: usize) -> DVector<f64> {
    let blocks = c.len() / obs_rows;
    let mut picks = Vec::with_capacity(blocks);
    let mut l2 = 0.0;
    for b in 0..blocks {
        let mut best_o = 0;
        let mut best = 0.0;
        for o in 0..obs_rows {
            let v = c[b * obs_rows + o].abs();
            if v > best {
                best = v;
                best_o = o;
            }
        }
        l2 += best * best;
        picks.push((best_o, best));
    }
    let mut x = DVector::zeros(c.len());
    let l2 = l2.sqrt();
    if l2 == 0.0 {
        return x;
    }
    for (b, (o, w)) in picks.into_iter().enumerate() {
        if w > 0.0 {
            x[b * obs_rows + o] = (w / l2) * c[b * obs_rows + o].signum();
        }
    }
    x
}

/// Exact `(*→1)` operator norm `max_{‖x‖_* ≤ 1} ‖M x‖₁`.
///
/// If all nonzero columns of `M` fall in a single action block the norm
/// reduces to the largest column ℓ1 norm within that block (the star ball
/// restricted to one block is the ℓ1 ball). Otherwise the dual route
/// enumerates sign vectors over rows with nonzero entries:
/// `max_{z ∈ {±1}} ‖Mᵀz‖_{dual-*}`, which is exact because the objective is
/// convex in `z`. Errors if more than [`MAX_SIGN_STATES`] rows are active.
pub fn star_to_one_norm(m: &DMatrix<f64>, obs_rows: usize) -> Result<StarToOne> {
    if m.ncols() % obs_rows != 0 {
        return Err(LabError::BadParams(format!(
            "matrix with {} columns is not aligned to obs_rows={obs_rows}",
            m.ncols()
        )));
    }
    let blocks: Vec<usize> = (0..m.ncols() / obs_rows)
        .filter(|&b| (0..obs_rows).any(|o| m.column(b * obs_rows + o).iter().any(|&v| v != 0.0)))
        .collect();
    if blocks.len() <= 1 {
        // Single active block: norm = max column ℓ1 there, witnessed by a
        // coordinate vector.
        let mut norm = 0.0;
        let mut best_col = 0;
        if let Some(&b) = blocks.first() {
            for o in 0..obs_rows {
                let col = b * obs_rows + o;
                let l1: f64 = m.column(col).iter().map(|v| v.abs()).sum();
                if l1 > norm {
                    norm = l1;
                    best_col = col;
                }
            }
        }
        let mut witness = DVector::zeros(m.ncols());
        if norm > 0.0 {
            witness[best_col] = 1.0;
        }
        let witness_value = (m * &witness).iter().map(|v| v.abs()).sum();
        return Ok(StarToOne {
            norm,
            witness,
            witness_value,
        });
    }

    let active_rows: Vec<usize> = (0..m.nrows())
        .filter(|&r| m.row(r).iter().any(|&v| v != 0.0))
        .collect();
    if active_rows.len() > MAX_SIGN_STATES {
        return Err(LabError::BadParams(format!(
            "{} active rows exceed the exact-norm cap of {MAX_SIGN_STATES}",
            active_rows.len()
        )));
    }
    let active_cols: Vec<usize> = (0..m.ncols())
        .filter(|&c| m.column(c).iter().any(|&v| v != 0.0))
        .collect();
    let mut best = (0.0, DVector::zeros(m.ncols()));
    for mask in 0..(1u64 << active_rows.len()) {
        let mut c = DVector::zeros(m.ncols());
        for (bit, &r) in active_rows.iter().enumerate() {
            let z = if mask >> bit & 1 == 1 { 1.0 } else { -1.0 };
            for &col in &active_cols {
                c[col] += z * m[(r, col)];
            }
        }
        let dual = star_dual_norm(&c, obs_rows);
        if dual > best.0 {
            best = (dual, c);
        }
    }
    let witness = witness_for_scores(&best.1, obs_rows);
    let witness_value = (m * &witness).iter().map(|v| v.abs()).sum();
    Ok(StarToOne {
        norm: best.0,
        witness,
        witness_value,
    })
}

/// Lower-bound search for the `(*→1)` norm by alternating maximization:
/// from random sign vectors, alternate between the optimal witness for the
/// current signs and the optimal signs for the current witness. Each round
/// is monotone, so every restart converges; the max over restarts is a
/// certified lower bound that matches the exact norm on small instances.
pub fn star_to_one_search(
    m: &DMatrix<f64>,
    obs_rows: usize,
    restarts: usize,
    rng: &mut impl Rng,
) -> f64 {
    let mut best = 0.0f64;
    for _ in 0..restarts {
        let mut z = DVector::from_fn(m.nrows(), |_, _| {
            if rng.gen::<bool>() {
                1.0
            } else {
                -1.0
            }
        });
        let mut value = 0.0f64;
        for _ in 0..64 {
            let c = m.transpose() * &z;
            let x = witness_for_scores(&c, obs_rows);
            let y = m * &x;
            let v: f64 = y.iter().map(|v| v.abs()).sum();
            if v <= value + 1e-15 {
                break;
            }
            value = v;
            for i in 0..z.len() {
                z[i] = if y[i] >= 0.0 { 1.0 } else { -1.0 };
            }
        }
        best = best.max(value);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::rng_from_seed;
    use rand::Rng;

    fn random_matrix(seed: u64, rows: usize, cols: usize) -> DMatrix<f64> {
        let mut rng = rng_from_seed(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    /// Hand-frozen star norm: blocks (|1|+|−2|, |3|) → √(9+9) = √18.
    #[test]
    fn star_norm_hand_case() {
        let x = DVector::from_vec(vec![1.0, -2.0, 3.0, 0.0]);
        assert!((star_norm(&x, 2) - 18.0f64.sqrt()).abs() < 1e-15);
        assert!((star_dual_norm(&x, 2) - 13.0f64.sqrt()).abs() < 1e-15);
    }

    /// Hölder-type duality: `⟨x, y⟩ ≤ ‖x‖_* · ‖y‖_dual`, tight for the
    /// witness construction.
    #[test]
    fn dual_pairing_is_tight() {
        let mut rng = rng_from_seed(7);
        for _ in 0..50 {
            let c = DVector::from_fn(6, |_, _| rng.gen_range(-2.0..2.0));
            let x = witness_for_scores(&c, 3);
            assert!((star_norm(&x, 3) - 1.0).abs() < 1e-12);
            let pairing: f64 = c.dot(&x);
            assert!((pairing - star_dual_norm(&c, 3)).abs() < 1e-12);
        }
    }

    /// The dual enumeration and the primal witness evaluation are two
    /// independent routes to the same number.
    #[test]
    fn witness_value_matches_dual_norm() {
        for seed in 0..20 {
            let m = random_matrix(seed, 3, 8); // 2 blocks of 4 obs rows
            let r = star_to_one_norm(&m, 4).unwrap();
            assert!(
                (r.norm - r.witness_value).abs() < 1e-12,
                "seed {seed}: dual {} vs primal {}",
                r.norm,
                r.witness_value
            );
        }
    }

    /// Random-restart ascent must reach the exact norm on small instances.
    #[test]
    fn search_matches_exact_norm() {
        let mut rng = rng_from_seed(99);
        for seed in 0..20 {
            let m = random_matrix(seed + 1000, 3, 6); // 3 blocks of 2
            let exact = star_to_one_norm(&m, 2).unwrap().norm;
            let found = star_to_one_search(&m, 2, 64, &mut rng);
            assert!(found <= exact + 1e-12, "search exceeded exact norm");
            assert!(
                exact - found < 1e-6,
                "seed {seed}: search {found} below exact {exact}"
            );
        }
    }

    /// Any admissible x must satisfy ‖Mx‖₁ ≤ norm (soundness of the bound).
    #[test]
    fn norm_dominates_random_probes() {
        let mut rng = rng_from_seed(13);
        let m = random_matrix(5, 4, 8);
        let exact = star_to_one_norm(&m, 2).unwrap().norm;
        for _ in 0..200 {
            let mut x = DVector::from_fn(8, |_, _| rng.gen_range(-1.0..1.0));
            let s = star_norm(&x, 2);
            x /= s;
            let v: f64 = (&m * &x).iter().map(|v| v.abs()).sum();
            assert!(v <= exact + 1e-12);
        }
    }

    /// Single-block fast path agrees with the generic sign enumeration.
    #[test]
    fn single_block_fast_path_is_exact() {
        for seed in 30..40 {
            let mut m = random_matrix(seed, 3, 8);
            // Zero out all but block 1 → single active block.
            for o in 0..4 {
                for r in 0..3 {
                    m[(r, o)] = 0.0;
                }
            }
            let fast = star_to_one_norm(&m, 4).unwrap();
            // Generic route on the same matrix, forced by treating each
            // column as its own block (obs_rows = 1 keeps it multi-block).
            let generic = star_to_one_norm(&m, 1).unwrap();
            // With obs_rows = 1 the star norm is the ℓ2 norm, so the two
            // norms differ in general; instead check the fast path against
            // the explicit column maximum.
            let col_max = one_to_one_norm(&m);
            assert!((fast.norm - col_max).abs() < 1e-12);
            assert!(generic.norm >= fast.norm - 1e-12);
        }
    }
}
