//! Small probability-row constructors shared by the family builders.

/// Point mass on `idx`.
pub(crate) fn point_row(len: usize, idx: usize) -> Vec<f64> {
    let mut row = vec![0.0; len];
    row[idx] = 1.0;
    row
}

/// Biased coin-pair emission row: observation `coin_base + 2i` (heads of
/// pair `i`) gets `(1+σ·μ_i)/(2K)` and `coin_base + 2i + 1` (tails) gets
/// `(1−σ·μ_i)/(2K)`, with `K = μ.len()`.
pub(crate) fn signal_coin_row(n_obs: usize, coin_base: usize, sigma: f64, mu: &[i8]) -> Vec<f64> {
    let k = mu.len();
    let mut row = vec![0.0; n_obs];
    for (i, &m) in mu.iter().enumerate() {
        let bias = sigma * f64::from(m);
        row[coin_base + 2 * i] = (1.0 + bias) / (2.0 * k as f64);
        row[coin_base + 2 * i + 1] = (1.0 - bias) / (2.0 * k as f64);
    }
    row
}

/// Uniform emission row over the `2K` coin observations.
pub(crate) fn uniform_coin_row(n_obs: usize, coin_base: usize, k: usize) -> Vec<f64> {
    let mut row = vec![0.0; n_obs];
    for slot in &mut row[coin_base..coin_base + 2 * k] {
        *slot = 1.0 / (2.0 * k as f64);
    }
    row
}

/// Two-point emission row: `p1` on `o1`, `1−p1` on `o2`.
pub(crate) fn binary_row(n_obs: usize, o1: usize, o2: usize, p1: f64) -> Vec<f64> {
    let mut row = vec![0.0; n_obs];
    row[o1] = p1;
    row[o2] = 1.0 - p1;
    row
}
