use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// What a policy prescribes at a decision point: either a single action or a
/// distribution over actions.
pub enum ActionChoice {
    Det(usize),
    Stoch(Vec<f64>),
}

/// History-dependent policies over observable histories.
///
/// The observable history before acting at step `h` is
/// `(o_0, a_0, …, o_{h-1}, a_{h-1}, o_h)`. Keys for [`Policy::HistoryDet`]
/// are the colon-joined index string of exactly that sequence (see
/// [`history_key`]), which keeps the table serializable as ordinary JSON.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub enum Policy {
    /// Open-loop: the action at step `h` is `seq[h]` regardless of history.
    ActionSequence(Vec<usize>),
    /// Deterministic reactive: `table[h][o]` is the action on observing `o`.
    ReactiveDet(Vec<Vec<usize>>),
    /// Stochastic reactive: `table[h][o]` is a distribution over actions.
    ReactiveStoch(Vec<Vec<Vec<f64>>>),
    /// Deterministic map from full observable histories to actions.
    HistoryDet(HistoryPolicy),
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct HistoryPolicy {
    /// Action taken when a history is missing from the table (only happens
    /// off the support the policy was computed on).
    pub default_action: usize,
    pub table: BTreeMap<String, usize>,
}

/// Encode `(o_0, a_0, …, o_{h-1}, a_{h-1}, o_h)` as a lookup key.
pub fn history_key(prefix: &[(usize, usize)], o: usize) -> String {
    let mut s = String::with_capacity(prefix.len() * 6 + 4);
    for (po, pa) in prefix {
        s.push_str(&po.to_string());
        s.push(':');
        s.push_str(&pa.to_string());
        s.push(':');
    }
    s.push_str(&o.to_string());
    s
}

impl Policy {
    /// Uniform-random policy (the canonical exploration baseline).
    pub fn uniform_random(horizon: usize, n_obs: usize, n_actions: usize) -> Self {
        let row = vec![1.0 / n_actions as f64; n_actions];
        Policy::ReactiveStoch(vec![vec![row; n_obs]; horizon])
    }

    /// The decision at step `h` given the observable prefix and the current
    /// observation.
    pub fn decide(&self, h: usize, prefix: &[(usize, usize)], o: usize) -> ActionChoice {
        match self {
            Policy::ActionSequence(seq) => ActionChoice::Det(seq[h]),
            Policy::ReactiveDet(t) => ActionChoice::Det(t[h][o]),
            Policy::ReactiveStoch(t) => ActionChoice::Stoch(t[h][o].clone()),
            Policy::HistoryDet(hp) => {
                let key = history_key(prefix, o);
                ActionChoice::Det(*hp.table.get(&key).unwrap_or(&hp.default_action))
            }
        }
    }

    /// Probability of taking `a` at `(h, prefix, o)`.
    pub fn action_prob(&self, h: usize, prefix: &[(usize, usize)], o: usize, a: usize) -> f64 {
        match self.decide(h, prefix, o) {
            ActionChoice::Det(chosen) => {
                if chosen == a {
                    1.0
                } else {
                    0.0
                }
            }
            ActionChoice::Stoch(dist) => dist[a],
        }
    }

    /// True when the action depends on at most the current step and
    /// observation; such policies admit the linear forward evaluator.
    pub fn is_reactive(&self) -> bool {
        !matches!(self, Policy::HistoryDet(_))
    }
}
