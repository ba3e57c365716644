//! Small numeric helpers shared across modules.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mixes a base seed with a path of indices (splitmix64 finalizer per step).
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mut s = base ^ 0x9E37_79B9_7F4A_7C15;
    for &p in path {
        s = splitmix(s.wrapping_add(p.wrapping_mul(0xD1B5_4A32_D192_ED03)));
    }
    splitmix(s)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Pairwise (tree) summation; the result depends only on the slice contents
/// and order, never on how callers partition work.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 64;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    pairwise_sum(xs) / xs.len() as f64
}

pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Whole-sample symmetric reflection of an index into `0..n`
/// (`-1 -> 0`, `n -> n-1`).
#[inline]
pub fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}
