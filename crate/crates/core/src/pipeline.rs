//! Fingerprint estimation and hardening: MLE aggregation, ZM/WF
//! postprocessing, odd/even splitting, burst integration, luminance block
//! weighting and the Cramer-Rao variance bound.

use rayon::prelude::*;

use crate::denoise::{noise_residual, Denoiser};
use crate::error::{Error, Result};
use crate::model::{Fingerprint, ImageMeta, ImageRaster, PartTag, Provenance};
use crate::spectral::{fft2, to_complex};
use crate::util::{median, pairwise_sum};

/// Default block edge for luminance weighting.
pub const DEFAULT_BLOCK: usize = 64;

/// Blocks brighter than this fraction of full scale count as saturated.
pub const SATURATION: f64 = 0.95;

/// Pixels within this Chebyshev distance of a clipped pixel (0 or full
/// scale) are left out of [`estimate_from_images`].
pub const CLIP_GUARD: usize = 4;

/// Result of the MLE aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub fingerprint: Fingerprint,
    /// Pixels where every image was zero; their estimate is set to 0.
    pub undefined_pixels: usize,
}

/// `K = sum(W_k * I_k) / sum(I_k^2)`, per pixel.
///
/// Each pixel's sums run over images in input order with pairwise
/// summation, so the result does not depend on how rows are scheduled.
pub fn estimate_fingerprint_mle(images: &[ImageRaster], residuals: &[Fingerprint]) -> Result<Estimate> {
    mle(images, residuals, None)
}

fn mle(images: &[ImageRaster], residuals: &[Fingerprint], keep: Option<&[Vec<bool>]>) -> Result<Estimate> {
    if images.is_empty() {
        return Err(Error::Empty("no images for estimation".into()));
    }
    if images.len() != residuals.len() {
        return Err(Error::Validation(format!(
            "{} images but {} residuals",
            images.len(),
            residuals.len()
        )));
    }
    let dims = images[0].dims();
    for (img, w) in images.iter().zip(residuals) {
        if img.dims() != dims {
            return Err(Error::dims(dims, img.dims()));
        }
        if w.dims() != dims {
            return Err(Error::dims(dims, w.dims()));
        }
    }
    let part = residuals[0].provenance().part;
    if residuals.iter().any(|w| w.provenance().part != part) {
        return Err(Error::Validation("residuals mix image parts".into()));
    }

    let (width, height) = dims;
    let n = images.len();
    let rows: Vec<(Vec<f64>, usize)> = (0..height)
        .into_par_iter()
        .map(|y| {
            let mut num = vec![0.0; n];
            let mut den = vec![0.0; n];
            let mut out = Vec::with_capacity(width);
            let mut undefined = 0;
            for x in 0..width {
                let i = y * width + x;
                for k in 0..n {
                    let kept = keep.is_none_or(|m| m[k][i]);
                    let p = if kept { f64::from(images[k].pixels()[i]) } else { 0.0 };
                    num[k] = residuals[k].values()[i] * p;
                    den[k] = p * p;
                }
                let d = pairwise_sum(&den);
                if d > 0.0 {
                    out.push(pairwise_sum(&num) / d);
                } else {
                    undefined += 1;
                    out.push(0.0);
                }
            }
            (out, undefined)
        })
        .collect();

    let undefined_pixels = rows.iter().map(|r| r.1).sum();
    let values: Vec<f64> = rows.into_iter().flat_map(|r| r.0).collect();
    let prov = Provenance {
        denoiser: residuals[0].provenance().denoiser,
        part,
        zero_mean: false,
        wiener: false,
    };
    let fingerprint = Fingerprint::new(width, height, values, n as u32, prov)?;
    Ok(Estimate { fingerprint, undefined_pixels })
}

/// Residuals for every image, then the MLE over all of them. Clipped
/// pixels and their [`CLIP_GUARD`] neighbourhood drop out of the sums, so a
/// pixel clipped in every image is undefined.
pub fn estimate_from_images(images: &[ImageRaster], denoiser: &dyn Denoiser) -> Result<Estimate> {
    let residuals = images
        .par_iter()
        .map(|img| noise_residual(img, denoiser))
        .collect::<Result<Vec<_>>>()?;
    let keep: Vec<Vec<bool>> = images.iter().map(|img| unclipped_mask(img, CLIP_GUARD)).collect();
    mle(images, &residuals, Some(&keep))
}

/// False at clipped pixels and everything within `guard` of one.
pub fn unclipped_mask(img: &ImageRaster, guard: usize) -> Vec<bool> {
    let (w, h) = img.dims();
    let max = img.max_value();
    let clipped: Vec<bool> = img.pixels().iter().map(|&p| p == 0 || u32::from(p) == max).collect();
    if !clipped.contains(&true) {
        return vec![true; w * h];
    }
    let mut rows = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let lo = x.saturating_sub(guard);
            let hi = (x + guard).min(w - 1);
            rows[y * w + x] = clipped[y * w + lo..=y * w + hi].contains(&true);
        }
    }
    let mut keep = vec![true; w * h];
    for y in 0..h {
        let lo = y.saturating_sub(guard);
        let hi = (y + guard).min(h - 1);
        for x in 0..w {
            keep[y * w + x] = !(lo..=hi).any(|yy| rows[yy * w + x]);
        }
    }
    keep
}

/// MLE over `images` followed by ZM and WF postprocessing.
pub fn extract_fingerprint(images: &[ImageRaster], denoiser: &dyn Denoiser) -> Result<Fingerprint> {
    Ok(postprocess_zm_wf(&estimate_from_images(images, denoiser)?.fingerprint))
}

/// Subtracts every row mean, then every column mean.
pub fn zero_mean(fp: &Fingerprint) -> Fingerprint {
    let (w, h) = fp.dims();
    let mut v = fp.values().to_vec();
    for row in v.chunks_mut(w) {
        let m = pairwise_sum(row) / w as f64;
        row.iter_mut().for_each(|x| *x -= m);
    }
    let mut col = vec![0.0; h];
    for x in 0..w {
        for y in 0..h {
            col[y] = v[y * w + x];
        }
        let m = pairwise_sum(&col) / h as f64;
        for y in 0..h {
            v[y * w + x] -= m;
        }
    }
    let prov = Provenance { zero_mean: true, ..fp.provenance() };
    fp.with_values(v, prov).expect("finite input stays finite")
}

/// Global-spectrum Wiener whitening.
///
/// The noise floor is the spectrum's median power divided by ln 2 (the mean
/// of an exponential law with that median). Bins above `ln(bins)` times the
/// floor are treated as periodic artifacts and attenuated with the Wiener
/// gain `T / (T + S)`, where `S` is their excess power over the threshold
/// `T`. The DC bin is dropped.
pub fn wiener_whiten(fp: &Fingerprint) -> Fingerprint {
    let (w, h) = fp.dims();
    let n = w * h;
    let mut spec = to_complex(fp.values());
    fft2(&mut spec, w, h, false);
    let power: Vec<f64> = spec.iter().map(|c| c.norm_sqr()).collect();
    let floor = median(&power[1..].iter().copied().filter(|&p| p > 0.0).collect::<Vec<_>>())
        / std::f64::consts::LN_2;
    let mut out: Vec<f64> = if floor.is_finite() && floor > 0.0 && n > 1 {
        let threshold = (n as f64).ln().max(1.0) * floor;
        spec[0] = Default::default();
        for (c, &p) in spec.iter_mut().zip(&power).skip(1) {
            if p > threshold {
                *c *= threshold / p;
            }
        }
        fft2(&mut spec, w, h, true);
        spec.iter().map(|c| c.re / n as f64).collect()
    } else {
        fp.values().to_vec()
    };
    out.iter_mut().filter(|x| x.abs() < 1e-300).for_each(|x| *x = 0.0);
    let prov = Provenance { wiener: true, ..fp.provenance() };
    fp.with_values(out, prov).expect("finite input stays finite")
}

/// ZM followed by WF; both flags are set on the result.
pub fn postprocess_zm_wf(fp: &Fingerprint) -> Fingerprint {
    wiener_whiten(&zero_mean(fp))
}

/// Splits a full raster into `(odd, even)` row sets. Row 0 is even.
pub fn split_odd_even(img: &ImageRaster) -> Result<(ImageRaster, ImageRaster)> {
    if img.part() != PartTag::Full {
        return Err(Error::Validation("only full rasters can be split".into()));
    }
    let (w, h) = img.dims();
    if h < 2 {
        return Err(Error::InvalidParameter(format!("height {h} is too small to split")));
    }
    let take = |parity: usize| -> Vec<u16> {
        (parity..h).step_by(2).flat_map(|y| img.row(y).iter().copied()).collect()
    };
    let meta = |part| ImageMeta { part, full_height: h as u32, ..img.meta().clone() };
    let odd = ImageRaster::with_meta(w, h / 2, img.bit_depth(), take(1), meta(PartTag::Odd))?;
    let even =
        ImageRaster::with_meta(w, h.div_ceil(2), img.bit_depth(), take(0), meta(PartTag::Even))?;
    Ok((odd, even))
}

/// Inverse of [`split_odd_even`].
pub fn interleave(odd: &ImageRaster, even: &ImageRaster) -> Result<ImageRaster> {
    if odd.part() != PartTag::Odd || even.part() != PartTag::Even {
        return Err(Error::Validation("interleave needs an odd and an even part".into()));
    }
    let full = even.meta().full_height;
    if odd.meta().full_height != full {
        return Err(Error::Validation(format!(
            "parts disagree on full height ({} vs {full})",
            odd.meta().full_height
        )));
    }
    if odd.width() != even.width() {
        return Err(Error::dims(even.dims(), odd.dims()));
    }
    if odd.bit_depth() != even.bit_depth() {
        return Err(Error::Validation("parts disagree on bit depth".into()));
    }
    let h = full as usize;
    let mut pixels = Vec::with_capacity(even.width() * h);
    for y in 0..h {
        let src = if y % 2 == 0 { even.row(y / 2) } else { odd.row(y / 2) };
        pixels.extend_from_slice(src);
    }
    let meta = ImageMeta { part: PartTag::Full, full_height: 0, ..even.meta().clone() };
    ImageRaster::with_meta(even.width(), h, even.bit_depth(), pixels, meta)
}

/// MLE over a burst of captures of one scene.
pub fn burst_integrate(burst: &[ImageRaster], denoiser: &dyn Denoiser) -> Result<Fingerprint> {
    let first = burst.first().ok_or_else(|| Error::Empty("empty burst".into()))?;
    for img in burst {
        if img.dims() != first.dims() {
            return Err(Error::dims(first.dims(), img.dims()));
        }
        if img.meta().camera != first.meta().camera || img.meta().burst != first.meta().burst {
            return Err(Error::Validation("burst mixes cameras or burst groups".into()));
        }
    }
    Ok(estimate_from_images(burst, denoiser)?.fingerprint)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SelectionMode {
    /// Weight = block mean luminance over full scale.
    Float,
    /// Weight 1 for blocks whose mean is at least this fraction of full scale.
    Threshold(f64),
    /// Weight 1 for the brightest `ceil(p * blocks)` blocks.
    Percentage(f64),
}

/// Per-block weights over a `ceil(h/B) x ceil(w/B)` grid. Edge blocks may
/// be partial.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockWeightMask {
    pub block: usize,
    pub width: usize,
    pub height: usize,
    pub mode: SelectionMode,
    weights: Vec<f64>,
}

impl BlockWeightMask {
    /// Builds a mask from explicit weights; at least one must be positive.
    pub fn new(
        width: usize,
        height: usize,
        block: usize,
        mode: SelectionMode,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if block == 0 || width == 0 || height == 0 {
            return Err(Error::InvalidParameter("empty block grid".into()));
        }
        let expected = width.div_ceil(block) * height.div_ceil(block);
        if weights.len() != expected {
            return Err(Error::Validation(format!(
                "{} weights for a grid of {expected} blocks",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::Validation("block weights must lie in [0, 1]".into()));
        }
        if !weights.iter().any(|&w| w > 0.0) {
            return Err(Error::Validation("no block has positive weight".into()));
        }
        Ok(Self { block, width, height, mode, weights })
    }

    /// Every block weighted 1.
    pub fn uniform(width: usize, height: usize, block: usize) -> Result<Self> {
        let n = width.div_ceil(block.max(1)) * height.div_ceil(block.max(1));
        Self::new(width, height, block, SelectionMode::Float, vec![1.0; n])
    }

    pub fn cols(&self) -> usize {
        self.width.div_ceil(self.block)
    }

    pub fn rows(&self) -> usize {
        self.height.div_ceil(self.block)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, bx: usize, by: usize) -> f64 {
        self.weights[by * self.cols() + bx]
    }

    /// Pixel rectangle `(x0, y0, w, h)` of block `(bx, by)`.
    pub fn block_rect(&self, bx: usize, by: usize) -> (usize, usize, usize, usize) {
        let x0 = bx * self.block;
        let y0 = by * self.block;
        (x0, y0, self.block.min(self.width - x0), self.block.min(self.height - y0))
    }

    pub fn selected(&self) -> usize {
        self.weights.iter().filter(|&&w| w > 0.0).count()
    }
}

/// Luminance-driven block weights for `img`.
pub fn block_weights(img: &ImageRaster, block: usize, mode: SelectionMode) -> Result<BlockWeightMask> {
    let (w, h) = img.dims();
    if block < 8 {
        return Err(Error::InvalidParameter(format!("block size {block} is below 8")));
    }
    if block > w || block > h {
        return Err(Error::InvalidParameter(format!("block size {block} exceeds {w}x{h} image")));
    }
    let max = f64::from(img.max_value());
    let (cols, rows) = (w.div_ceil(block), h.div_ceil(block));
    let mut means = Vec::with_capacity(cols * rows);
    for by in 0..rows {
        for bx in 0..cols {
            let (x0, y0) = (bx * block, by * block);
            let (x1, y1) = ((x0 + block).min(w), (y0 + block).min(h));
            let vals: Vec<f64> = (y0..y1)
                .flat_map(|y| img.row(y)[x0..x1].iter().map(|&p| f64::from(p)))
                .collect();
            means.push(pairwise_sum(&vals) / vals.len() as f64 / max);
        }
    }
    let saturated = |m: f64| m > SATURATION;
    let weights: Vec<f64> = match mode {
        SelectionMode::Float => {
            means.iter().map(|&m| if saturated(m) { 0.0 } else { m }).collect()
        }
        SelectionMode::Threshold(t) => {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::InvalidParameter(format!("threshold {t} outside [0, 1]")));
            }
            means.iter().map(|&m| if !saturated(m) && m >= t { 1.0 } else { 0.0 }).collect()
        }
        SelectionMode::Percentage(p) => {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidParameter(format!("percentage {p} outside (0, 1]")));
            }
            let want = (p * means.len() as f64).ceil() as usize;
            let mut order: Vec<usize> = (0..means.len()).filter(|&i| !saturated(means[i])).collect();
            order.sort_by(|&a, &b| means[b].total_cmp(&means[a]).then(a.cmp(&b)));
            let mut weights = vec![0.0; means.len()];
            for &i in order.iter().take(want) {
                weights[i] = 1.0;
            }
            weights
        }
    };
    BlockWeightMask::new(w, h, block, mode, weights)
}

/// Per-pixel Cramer-Rao bound `sigma^2 / sum_k I_k^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrlbBound {
    pub width: usize,
    pub height: usize,
    pub sigma: f64,
    /// `+inf` where every image is zero.
    pub map: Vec<f64>,
    /// Mean over the bounded pixels.
    pub mean: f64,
    pub unbounded: usize,
}

pub fn crlb_variance_bound(images: &[ImageRaster], sigma: f64) -> Result<CrlbBound> {
    let first = images.first().ok_or_else(|| Error::Empty("no images for bound".into()))?;
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!("noise scale {sigma}")));
    }
    let (w, h) = first.dims();
    if let Some(bad) = images.iter().find(|i| i.dims() != (w, h)) {
        return Err(Error::dims((w, h), bad.dims()));
    }
    let var = sigma * sigma;
    let mut terms = vec![0.0; images.len()];
    let map: Vec<f64> = (0..w * h)
        .map(|i| {
            for (t, img) in terms.iter_mut().zip(images) {
                let p = f64::from(img.pixels()[i]);
                *t = p * p;
            }
            let s = pairwise_sum(&terms);
            if s > 0.0 {
                var / s
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let bounded: Vec<f64> = map.iter().copied().filter(|v| v.is_finite()).collect();
    let mean = if bounded.is_empty() {
        f64::INFINITY
    } else {
        pairwise_sum(&bounded) / bounded.len() as f64
    };
    Ok(CrlbBound { width: w, height: h, sigma, unbounded: map.len() - bounded.len(), map, mean })
}

/// Robust noise scale from residuals: median absolute deviation times
/// 1.4826, pooled over all residuals.
pub fn estimate_noise_sigma(residuals: &[Fingerprint]) -> Result<f64> {
    let all: Vec<f64> = residuals.iter().flat_map(|r| r.values().iter().copied()).collect();
    if all.is_empty() {
        return Err(Error::Empty("no residual values".into()));
    }
    let m = median(&all);
    let dev: Vec<f64> = all.iter().map(|v| (v - m).abs()).collect();
    Ok(1.4826 * median(&dev))
}
