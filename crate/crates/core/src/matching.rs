//! Similarity measures and the threshold decision.

use crate::error::{Error, Result};
use crate::model::Fingerprint;
use crate::pipeline::BlockWeightMask;
use crate::spectral::{fft2, to_complex};
use crate::util::pairwise_sum;

/// Side of the square excluded around the correlation peak in PCE.
pub const PCE_EXCLUSION: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measure {
    Ncc,
    WeightedBlockNcc,
    Pce,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionConfig {
    pub tau: f64,
    pub measure: Measure,
}

impl DecisionConfig {
    pub fn new(tau: f64, measure: Measure) -> Result<Self> {
        if !tau.is_finite() {
            return Err(Error::InvalidParameter(format!("threshold {tau} is not finite")));
        }
        Ok(Self { tau, measure })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Match,
    NoMatch,
}

/// `Match` iff `similarity > tau`.
pub fn decide(similarity: f64, cfg: &DecisionConfig) -> Decision {
    if similarity > cfg.tau {
        Decision::Match
    } else {
        Decision::NoMatch
    }
}

/// Zero-mean normalized dot product of two equal-length arrays.
pub fn ncc_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} values", a.len()),
            actual: format!("{} values", b.len()),
        });
    }
    if a.is_empty() {
        return Err(Error::Empty("ncc of empty arrays".into()));
    }
    let n = a.len() as f64;
    let ma = pairwise_sum(a) / n;
    let mb = pairwise_sum(b) / n;
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x - ma, y - mb);
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa <= 0.0 || bb <= 0.0 {
        return Err(Error::UndefinedSimilarity("input has zero variance".into()));
    }
    Ok((ab / (aa.sqrt() * bb.sqrt())).clamp(-1.0, 1.0))
}

pub fn ncc(a: &Fingerprint, b: &Fingerprint) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::dims(a.dims(), b.dims()));
    }
    ncc_slices(a.values(), b.values())
}

/// `sum(w_i * ncc_i) / sum(w_i)` over blocks; blocks where either input
/// is constant drop out.
pub fn weighted_block_ncc(a: &Fingerprint, b: &Fingerprint, mask: &BlockWeightMask) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::dims(a.dims(), b.dims()));
    }
    if (mask.width, mask.height) != a.dims() {
        return Err(Error::dims(a.dims(), (mask.width, mask.height)));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for by in 0..mask.rows() {
        for bx in 0..mask.cols() {
            let w = mask.weight(bx, by);
            if w <= 0.0 {
                continue;
            }
            let (x0, y0, bw, bh) = mask.block_rect(bx, by);
            let pa = a.crop(x0, y0, bw, bh);
            let pb = b.crop(x0, y0, bw, bh);
            match ncc_slices(pa.values(), pb.values()) {
                Ok(r) => {
                    num += w * r;
                    den += w;
                }
                Err(Error::UndefinedSimilarity(_)) => {}
                Err(e) => return Err(e),
            }
        }
    }
    if den <= 0.0 {
        return Err(Error::UndefinedSimilarity("no block with positive weight and variance".into()));
    }
    Ok(num / den)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pce {
    /// PCE at zero shift, the aligned hypothesis.
    pub value: f64,
    /// Circular shift `(row, col)` of the correlation maximum:
    /// `residual(y, x)` best matches `fp(y - row, x - col)`.
    pub peak: (usize, usize),
    /// PCE evaluated at `peak`.
    pub peak_value: f64,
}

/// Peak-to-correlation energy from the circular cross-correlation surface.
pub fn pce(residual: &Fingerprint, fp: &Fingerprint) -> Result<Pce> {
    if residual.dims() != fp.dims() {
        return Err(Error::dims(residual.dims(), fp.dims()));
    }
    let (w, h) = fp.dims();
    let centred = |v: &[f64]| {
        let m = pairwise_sum(v) / v.len() as f64;
        to_complex(&v.iter().map(|x| x - m).collect::<Vec<_>>())
    };
    let mut r = centred(residual.values());
    let mut f = centred(fp.values());
    if r.iter().all(|c| c.re == 0.0) || f.iter().all(|c| c.re == 0.0) {
        return Err(Error::UndefinedSimilarity("pce of a constant input".into()));
    }
    fft2(&mut r, w, h, false);
    fft2(&mut f, w, h, false);
    for (a, b) in r.iter_mut().zip(&f) {
        *a *= b.conj();
    }
    fft2(&mut r, w, h, true);
    let n = (w * h) as f64;
    let corr: Vec<f64> = r.iter().map(|c| c.re / n).collect();

    let (idx, _) = corr
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .expect("non-empty surface");
    let peak = (idx / w, idx % w);
    Ok(Pce {
        value: pce_at(&corr, w, h, (0, 0))?,
        peak,
        peak_value: pce_at(&corr, w, h, peak)?,
    })
}

/// Signed squared correlation at `at` over the mean squared correlation
/// outside the exclusion window centred there.
fn pce_at(corr: &[f64], w: usize, h: usize, at: (usize, usize)) -> Result<f64> {
    let (py, px) = at;
    let half = PCE_EXCLUSION / 2;
    let near = |d: usize, n: usize| d.min(n - d) <= half;
    let mut off = Vec::with_capacity(corr.len());
    for y in 0..h {
        let dy = (y + h - py) % h;
        for x in 0..w {
            let dx = (x + w - px) % w;
            if !(near(dy, h) && near(dx, w)) {
                off.push(corr[y * w + x] * corr[y * w + x]);
            }
        }
    }
    if off.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "{w}x{h} surface has no values outside the {PCE_EXCLUSION}x{PCE_EXCLUSION} peak window"
        )));
    }
    let energy = pairwise_sum(&off) / off.len() as f64;
    if energy <= 0.0 {
        return Err(Error::UndefinedSimilarity("zero off-peak correlation energy".into()));
    }
    let c = corr[py * w + px];
    Ok(c.signum() * c * c / energy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::SelectionMode;
    use crate::sim::gauss;
    use crate::util::{derive_seed, rng};
    use proptest::prelude::*;

    fn gaussian(w: usize, h: usize, seed: u64) -> Fingerprint {
        let mut r = rng(seed);
        Fingerprint::from_values(w, h, (0..w * h).map(|_| gauss(&mut r)).collect()).unwrap()
    }

    #[test]
    fn ncc_self_and_negation() {
        let a = gaussian(16, 16, 1);
        let neg = Fingerprint::from_values(16, 16, a.values().iter().map(|v| -v).collect()).unwrap();
        assert!((ncc(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!((ncc(&a, &neg).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn ncc_constant_is_undefined() {
        let a = gaussian(4, 4, 1);
        let c = Fingerprint::from_values(4, 4, vec![2.0; 16]).unwrap();
        assert!(matches!(ncc(&a, &c), Err(Error::UndefinedSimilarity(_))));
        let other = gaussian(4, 5, 1);
        assert!(matches!(ncc(&a, &other), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn ncc_of_independent_arrays_is_small() {
        let mean_abs = (0..100)
            .map(|t| {
                ncc(&gaussian(64, 64, derive_seed(3, &[t, 0])), &gaussian(64, 64, derive_seed(3, &[t, 1])))
                    .unwrap()
                    .abs()
            })
            .sum::<f64>()
            / 100.0;
        assert!(mean_abs < 0.05, "{mean_abs}");
    }

    proptest! {
        #[test]
        fn ncc_symmetric_and_scale_invariant(
            seed in any::<u64>(), alpha in 0.01f64..100.0, beta in -50.0f64..50.0
        ) {
            let a = gaussian(9, 7, seed);
            let b = gaussian(9, 7, seed ^ 1);
            prop_assert!((ncc(&a, &b).unwrap() - ncc(&b, &a).unwrap()).abs() < 1e-12);
            let scaled = Fingerprint::from_values(
                9, 7, a.values().iter().map(|v| alpha * v + beta).collect()).unwrap();
            prop_assert!((ncc(&scaled, &b).unwrap() - ncc(&a, &b).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn single_block_mask_equals_ncc(seed in any::<u64>()) {
            let a = gaussian(16, 16, seed);
            let b = gaussian(16, 16, seed ^ 7);
            let mask = BlockWeightMask::new(16, 16, 16, SelectionMode::Float, vec![1.0]).unwrap();
            let wb = weighted_block_ncc(&a, &b, &mask).unwrap();
            prop_assert!((wb - ncc(&a, &b).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn weighted_selection_contract() {
        let a = gaussian(16, 8, 4);
        let mut v = a.values().to_vec();
        for y in 0..8 {
            for x in 8..16 {
                v[y * 16 + x] = -v[y * 16 + x];
            }
        }
        let b = Fingerprint::from_values(16, 8, v).unwrap();
        let mask = BlockWeightMask::new(16, 8, 8, SelectionMode::Float, vec![1.0, 0.0]).unwrap();
        assert!((weighted_block_ncc(&a, &b, &mask).unwrap() - 1.0).abs() < 1e-12);
        let all = BlockWeightMask::uniform(16, 8, 8).unwrap();
        assert!((weighted_block_ncc(&a, &a, &all).unwrap() - 1.0).abs() < 1e-12);
        assert!(weighted_block_ncc(&a, &b, &all).unwrap().abs() < 1e-12);
    }

    #[test]
    fn weighted_all_constant_blocks_is_error() {
        let a = gaussian(16, 8, 4);
        let mut v = a.values().to_vec();
        v[..8].fill(1.0);
        (1..8).for_each(|y| v[y * 16..y * 16 + 8].fill(1.0));
        let b = Fingerprint::from_values(16, 8, v).unwrap();
        let mask = BlockWeightMask::new(16, 8, 8, SelectionMode::Float, vec![1.0, 0.0]).unwrap();
        assert!(matches!(weighted_block_ncc(&a, &b, &mask), Err(Error::UndefinedSimilarity(_))));
    }

    #[test]
    fn pce_identical_inputs_peak_at_origin() {
        let a = gaussian(64, 64, 9);
        let p = pce(&a, &a).unwrap();
        assert_eq!(p.peak, (0, 0));
        assert!(p.value > 100.0, "{}", p.value);
        assert_eq!(p.value, p.peak_value);
    }

    #[test]
    fn pce_finds_circular_shift() {
        let (w, h) = (48, 40);
        let a = gaussian(w, h, 10);
        let shifted: Vec<f64> = (0..w * h)
            .map(|i| {
                let (y, x) = (i / w, i % w);
                a.values()[((y + h - 5) % h) * w + (x + w - 3) % w]
            })
            .collect();
        let s = Fingerprint::from_values(w, h, shifted).unwrap();
        let p = pce(&s, &a).unwrap();
        assert_eq!(p.peak, (5, 3));
        assert!(p.peak_value > 100.0 && p.value < p.peak_value);
    }

    #[test]
    fn pce_of_independent_arrays_is_order_one() {
        let mut vals: Vec<f64> = (0..100)
            .map(|t| {
                pce(&gaussian(32, 32, derive_seed(4, &[t, 0])), &gaussian(32, 32, derive_seed(4, &[t, 1])))
                    .unwrap()
                    .value
            })
            .collect();
        vals.sort_by(f64::total_cmp);
        assert!(vals[50] < 10.0, "median {}", vals[50]);
    }

    #[test]
    fn pce_degenerate_inputs() {
        let z = Fingerprint::from_values(16, 16, vec![0.0; 256]).unwrap();
        assert!(pce(&z, &z).is_err());
        let tiny = gaussian(8, 8, 1);
        assert!(pce(&tiny, &tiny).is_err());
    }

    #[test]
    fn decision_is_strict() {
        let cfg = DecisionConfig::new(0.2, Measure::Ncc).unwrap();
        assert_eq!(decide(0.5, &cfg), Decision::Match);
        assert_eq!(decide(0.2, &cfg), Decision::NoMatch);
        assert_eq!(decide(f64::NAN, &cfg), Decision::NoMatch);
        assert!(DecisionConfig::new(f64::NAN, Measure::Pce).is_err());
    }
}
