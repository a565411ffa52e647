use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::pomdp::TabularPomdp;
use crate::revealing::star_norm;
use crate::util::{checked_pow, index_to_seq, seq_to_index};

/// The core test set `U_h` at one step: all futures of `window`
/// observations interleaved with `window − 1` actions,
/// `(o_h, a_h, …, o_{h+w-1})`. Vectors over `U_h` use the dense layout
/// `act_idx · O^w + obs_idx` with big-endian sequence indices, matching the
/// window-matrix row layout used by the certification machinery.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSet {
    pub step: usize,
    pub window: usize,
    pub n_obs: usize,
    pub n_actions: usize,
}

impl TestSet {
    pub fn obs_rows(&self) -> Result<usize> {
        checked_pow(self.n_obs, self.window)
            .ok_or_else(|| LabError::BadParams("test-set observation rows overflow".into()))
    }

    pub fn action_blocks(&self) -> Result<usize> {
        checked_pow(self.n_actions, self.window - 1)
            .ok_or_else(|| LabError::BadParams("test-set action blocks overflow".into()))
    }

    pub fn size(&self) -> Result<usize> {
        self.obs_rows()?
            .checked_mul(self.action_blocks()?)
            .ok_or_else(|| LabError::BadParams("test-set size overflow".into()))
    }

    /// Index of the test with the given observation and action sequences.
    pub fn index(&self, obs: &[usize], acts: &[usize]) -> Result<usize> {
        if obs.len() != self.window || acts.len() + 1 != self.window {
            return Err(LabError::BadParams(format!(
                "test must have {} observations and {} actions",
                self.window,
                self.window - 1
            )));
        }
        Ok(seq_to_index(acts, self.n_actions) * self.obs_rows()? + seq_to_index(obs, self.n_obs))
    }

    /// Observation and action sequences of the test at `idx`.
    pub fn test(&self, idx: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        let obs_rows = self.obs_rows()?;
        Ok((
            index_to_seq(idx % obs_rows, self.n_obs, self.window),
            index_to_seq(idx / obs_rows, self.n_actions, self.window - 1),
        ))
    }

    /// The `(1,2)`-norm on `R^{U_h}`: ℓ2 over action sequences of the ℓ1
    /// over observation sequences. For single-observation tests this is the
    /// plain ℓ1 norm.
    pub fn star_norm(&self, x: &DVector<f64>) -> Result<f64> {
        let obs_rows = self.obs_rows()?;
        if x.len() != self.size()? {
            return Err(LabError::BadParams(format!(
                "vector length {} does not match test-set size {}",
                x.len(),
                self.size()?
            )));
        }
        Ok(star_norm(x, obs_rows))
    }

    /// The `Π'`-norm: the largest policy-weighted ℓ1 mass
    /// `max_π Σ_t π(t)|x(t)|`, where `π(t)` is the probability the policy
    /// plays the actions in `t` upon seeing its observations. Computed by
    /// the exact interleaved recursion — sum over each observation, then
    /// maximize over the next action. All tests in a full product set have
    /// equal length, so none is a strict prefix of another and the
    /// restriction to maximal tests is vacuous.
    pub fn pi_prime_norm(&self, x: &DVector<f64>) -> Result<f64> {
        let obs_rows = self.obs_rows()?;
        if x.len() != self.size()? {
            return Err(LabError::BadParams(format!(
                "vector length {} does not match test-set size {}",
                x.len(),
                self.size()?
            )));
        }
        fn after_obs(
            ts: &TestSet,
            x: &DVector<f64>,
            obs_rows: usize,
            level: usize,
            op: usize,
            ap: usize,
        ) -> f64 {
            if level + 1 == ts.window {
                return x[ap * obs_rows + op].abs();
            }
            (0..ts.n_actions)
                .map(|a| seen_prefix(ts, x, obs_rows, level + 1, op, ap * ts.n_actions + a))
                .fold(f64::NEG_INFINITY, f64::max)
        }
        fn seen_prefix(
            ts: &TestSet,
            x: &DVector<f64>,
            obs_rows: usize,
            level: usize,
            op: usize,
            ap: usize,
        ) -> f64 {
            crate::util::kahan_sum(
                (0..ts.n_obs).map(|o| after_obs(ts, x, obs_rows, level, op * ts.n_obs + o, ap)),
            )
        }
        Ok(seen_prefix(self, x, obs_rows, 0, 0, 0))
    }
}

/// Core test sets for an `m`-step view of the model: at step `h` the window
/// is `min(m, H − h)`, so the last `m − 1` steps carry truncated tests and
/// the final step's tests are single observations.
pub fn core_tests(pomdp: &TabularPomdp, m: usize) -> Result<Vec<TestSet>> {
    if m == 0 || m > pomdp.horizon {
        return Err(LabError::BadParams(format!(
            "window {m} outside 1..={}",
            pomdp.horizon
        )));
    }
    Ok((0..pomdp.horizon)
        .map(|h| TestSet {
            step: h,
            window: m.min(pomdp.horizon - h),
            n_obs: pomdp.n_observations(),
            n_actions: pomdp.n_actions(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pomdp::model::testkit::random_pomdp;

    #[test]
    fn window_one_tests_are_observations() {
        let m = random_pomdp(3, 4, 3, 5, 2);
        let sets = core_tests(&m, 1).unwrap();
        assert_eq!(sets.len(), 4);
        for ts in &sets {
            assert_eq!(ts.window, 1);
            assert_eq!(ts.size().unwrap(), 5);
        }
    }

    #[test]
    fn windows_truncate_near_the_horizon() {
        let m = random_pomdp(5, 5, 2, 3, 2);
        let sets = core_tests(&m, 3).unwrap();
        assert_eq!(
            sets.iter().map(|t| t.window).collect::<Vec<_>>(),
            vec![3, 3, 3, 2, 1]
        );
        // |U_h| = O^w · A^{w-1}.
        assert_eq!(
            sets.iter().map(|t| t.size().unwrap()).collect::<Vec<_>>(),
            vec![108, 108, 108, 18, 3]
        );
    }

    #[test]
    fn index_round_trip() {
        let ts = TestSet {
            step: 0,
            window: 3,
            n_obs: 4,
            n_actions: 3,
        };
        for idx in 0..ts.size().unwrap() {
            let (obs, acts) = ts.test(idx).unwrap();
            assert_eq!(ts.index(&obs, &acts).unwrap(), idx);
        }
        assert!(ts.index(&[0, 1], &[2]).is_err());
    }

    /// Hand-frozen norms at window 2 with O = A = 2: tests are
    /// (o1, a, o2) with index a·4 + o1·2 + o2.
    #[test]
    fn norms_match_hand_computation() {
        let ts = TestSet {
            step: 0,
            window: 2,
            n_obs: 2,
            n_actions: 2,
        };
        // x(o1 a o2): a=0 block [1, -2, 0, 3]; a=1 block [0, 1, -1, 1].
        let x = DVector::from_vec(vec![1.0, -2.0, 0.0, 3.0, 0.0, 1.0, -1.0, 1.0]);
        // Star: sqrt((1+2+0+3)^2 + (0+1+1+1)^2) = sqrt(36 + 9).
        assert!((ts.star_norm(&x).unwrap() - 45.0f64.sqrt()).abs() < 1e-15);
        // Π': Σ_{o1} max_a Σ_{o2} |x|:
        //   o1=0: max(1+2, 0+1) = 3; o1=1: max(0+3, 1+1) = 3.
        assert!((ts.pi_prime_norm(&x).unwrap() - 6.0).abs() < 1e-15);
        // Π' is sandwiched between the best single block's ℓ1 and the full ℓ1.
        assert!(ts.pi_prime_norm(&x).unwrap() <= x.iter().map(|v| v.abs()).sum::<f64>());
    }

    #[test]
    fn single_observation_norms_collapse_to_l1() {
        let ts = TestSet {
            step: 2,
            window: 1,
            n_obs: 4,
            n_actions: 3,
        };
        let x = DVector::from_vec(vec![0.5, -1.5, 2.0, -0.25]);
        let l1 = 4.25;
        assert!((ts.star_norm(&x).unwrap() - l1).abs() < 1e-15);
        assert!((ts.pi_prime_norm(&x).unwrap() - l1).abs() < 1e-15);
    }
}
