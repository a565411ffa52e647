//! Small numeric and indexing helpers shared across modules.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Deterministic RNG from a seed. Every randomized routine in the crate
/// funnels through this so that seeds reproduce runs bit-for-bit.
pub fn rng_from_seed(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Derive a child seed for a named sub-experiment. Cheap splittable seeding:
/// FNV-1a over the label mixed into the parent seed.
pub fn child_seed(parent: u64, label: &str, index: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ parent;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h ^= index;
    h = h.wrapping_mul(0x1000_0000_01b3);
    h
}

/// Compensated (Kahan) summation; used where many small terms of mixed sign
/// accumulate (divergence sums, enumeration totals).
#[derive(Clone, Copy, Debug, Default)]
pub struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum
    }
}

pub fn kahan_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = Kahan::new();
    for x in xs {
        acc.add(x);
    }
    acc.total()
}

/// Sample an index from an unnormalized nonnegative weight slice.
/// The total mass is taken as the slice sum; callers pass validated rows.
pub fn sample_index<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            return i;
        }
    }
    // Fall back to the last positive weight under floating-point leakage.
    weights
        .iter()
        .rposition(|&w| w > 0.0)
        .expect("sample_index: all-zero weight vector")
}

/// Decode `index` as a length-`len` sequence over `{0..base-1}`, big-endian
/// (first element is the most significant digit). Inverse of [`seq_to_index`].
pub fn index_to_seq(index: usize, base: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0usize; len];
    let mut rem = index;
    for slot in out.iter_mut().rev() {
        *slot = rem % base;
        rem /= base;
    }
    debug_assert_eq!(rem, 0, "index out of range for base^len");
    out
}

/// Big-endian sequence-to-index encoding over `{0..base-1}`.
pub fn seq_to_index(seq: &[usize], base: usize) -> usize {
    seq.iter().fold(0usize, |acc, &d| {
        debug_assert!(d < base);
        acc * base + d
    })
}

/// `base^exp` with overflow check; enumeration sizes must fit in usize.
pub fn checked_pow(base: usize, exp: usize) -> Option<usize> {
    let mut acc: usize = 1;
    for _ in 0..exp {
        acc = acc.checked_mul(base)?;
    }
    Some(acc)
}

/// Ordinary least-squares slope of `y` against `x`. Used for log-log scaling
/// fits; callers pass already-transformed coordinates.
pub fn lsq_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Random probability vector of dimension `dim`: exponential weights
/// normalized to sum 1 (flat Dirichlet).
pub fn random_simplex<R: Rng>(dim: usize, rng: &mut R) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim)
        .map(|_| -(1.0 - rng.gen::<f64>()).ln())
        .collect();
    let s: f64 = v.iter().sum();
    for x in &mut v {
        *x /= s;
    }
    v
}

/// FNV-1a hex digest of a byte string; used to fingerprint run configs in
/// experiment records without pulling in a hash crate.
pub fn fnv1a_hex(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    format!("{h:016x}")
}
