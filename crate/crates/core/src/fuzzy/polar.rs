//! Polar code over `GF(2)` with successive-cancellation decoding.
//!
//! Codewords are `x = u F^{(x)n}` with `F = [[1, 0], [1, 1]]` and no bit
//! reversal. The information set holds the `k` synthetic channels with the
//! smallest Bhattacharyya parameter for a design BSC; ties are broken by a
//! seeded permutation so the construction is fully determined by
//! `(n, k, p_design, seed)`.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::util::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct PolarCode {
    n: usize,
    k: usize,
    p_design: f64,
    seed: u64,
    frozen: Vec<bool>,
    info: Vec<usize>,
}

impl PolarCode {
    pub fn new(n: usize, k: usize, p_design: f64, seed: u64) -> Result<Self> {
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::InvalidParameter(format!("code length {n} is not a power of two")));
        }
        if k == 0 || k > n {
            return Err(Error::InvalidParameter(format!("message length {k} for code length {n}")));
        }
        if !(p_design > 0.0 && p_design < 0.5) {
            return Err(Error::InvalidParameter(format!("design crossover {p_design} not in (0, 0.5)")));
        }
        let z = log_bhattacharyya(n, p_design);
        let mut tie: Vec<usize> = (0..n).collect();
        tie.shuffle(&mut rng(seed));
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| z[a].total_cmp(&z[b]).then(tie[a].cmp(&tie[b])));
        let mut info: Vec<usize> = order[..k].to_vec();
        info.sort_unstable();
        let mut frozen = vec![true; n];
        for &i in &info {
            frozen[i] = false;
        }
        Ok(Self { n, k, p_design, seed, frozen, info })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn p_design(&self) -> f64 {
        self.p_design
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Information positions in increasing order.
    pub fn info_set(&self) -> &[usize] {
        &self.info
    }

    pub fn encode(&self, message: &[bool]) -> Result<Vec<bool>> {
        if message.len() != self.k {
            return Err(Error::InvalidParameter(format!(
                "message has {} bits, code carries {}",
                message.len(),
                self.k
            )));
        }
        let mut u = vec![false; self.n];
        for (&i, &b) in self.info.iter().zip(message) {
            u[i] = b;
        }
        transform(&mut u);
        Ok(u)
    }

    /// Successive-cancellation decoding of a hard-decision word received
    /// over BSC(`p_design`).
    pub fn decode(&self, word: &[bool]) -> Result<Vec<bool>> {
        if word.len() != self.n {
            return Err(Error::InvalidParameter(format!(
                "word has {} bits, code length is {}",
                word.len(),
                self.n
            )));
        }
        let mag = ((1.0 - self.p_design) / self.p_design).ln();
        let llr: Vec<f64> = word.iter().map(|&b| if b { -mag } else { mag }).collect();
        let mut u = Vec::with_capacity(self.n);
        sc(&llr, &self.frozen, &mut u);
        Ok(self.info.iter().map(|&i| u[i]).collect())
    }
}

/// In-place `u -> u F^{(x)n}`.
pub(crate) fn transform(x: &mut [bool]) {
    let n = x.len();
    let mut half = 1;
    while half < n {
        for block in x.chunks_mut(2 * half) {
            let (a, b) = block.split_at_mut(half);
            for (p, q) in a.iter_mut().zip(b.iter()) {
                *p ^= *q;
            }
        }
        half *= 2;
    }
}

/// `ln Z` for each synthetic channel of BSC(p). The top split is applied
/// first: bit 0 of the channel index's MSB-first expansion takes the worse
/// branch `2Z - Z^2`, bit 1 the better branch `Z^2`.
fn log_bhattacharyya(n: usize, p: f64) -> Vec<f64> {
    let mut z = vec![(2.0 * (p * (1.0 - p)).sqrt()).ln()];
    while z.len() < n {
        let mut next = Vec::with_capacity(2 * z.len());
        for &lz in &z {
            next.push(lz + (2.0 - lz.exp()).ln());
            next.push(2.0 * lz);
        }
        z = next;
    }
    z
}

/// Exact check-node update in the log-likelihood domain.
fn boxplus(a: f64, b: f64) -> f64 {
    let s = a.signum() * b.signum();
    s * a.abs().min(b.abs()) + (-(a + b).abs()).exp().ln_1p() - (-(a - b).abs()).exp().ln_1p()
}

/// Decodes `llr` into `u` (appending) and returns the re-encoded
/// partial sums for this subtree.
fn sc(llr: &[f64], frozen: &[bool], u: &mut Vec<bool>) -> Vec<bool> {
    let n = llr.len();
    if n == 1 {
        let bit = !frozen[0] && llr[0] < 0.0;
        u.push(bit);
        return vec![bit];
    }
    let h = n / 2;
    let (la, lb) = llr.split_at(h);
    let left: Vec<f64> = la.iter().zip(lb).map(|(&a, &b)| boxplus(a, b)).collect();
    let a = sc(&left, &frozen[..h], u);
    let right: Vec<f64> =
        la.iter().zip(lb).zip(&a).map(|((&x, &y), &s)| if s { y - x } else { y + x }).collect();
    let b = sc(&right, &frozen[h..], u);
    let mut out: Vec<bool> = a.iter().zip(&b).map(|(&p, &q)| p ^ q).collect();
    out.extend_from_slice(&b);
    out
}
