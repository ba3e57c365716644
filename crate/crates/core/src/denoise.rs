//! Denoising filters `F(.)` and noise residuals `W = I - F(I)`.
//!
//! The built-in filter is the classical two-stage wavelet Wiener filter:
//! an orthonormal Daubechies 8-tap transform (4 levels by default), a
//! local-variance estimate for each detail coefficient taken as the minimum
//! over square windows of size 3, 5, 7 and 9, and per-coefficient shrinkage
//! `c * v / (v + sigma0^2)`. The approximation band is left untouched.
//!
//! Boundaries are handled by symmetric padding before a periodic transform.
//! Images larger than the block size are cut into independent tiles.

use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{decode_real_image, DenoiserId, Fingerprint, ImageRaster, Provenance, RealImage};
use crate::util::reflect;

/// Daubechies 4 (8-tap) low-pass analysis filter, orthonormal.
const DB4: [f64; 8] = [
    0.230_377_813_308_855_23,
    0.714_846_570_552_541_5,
    0.630_880_767_929_590_4,
    -0.027_983_769_416_983_85,
    -0.187_034_811_718_881_14,
    0.030_841_381_835_986_965,
    0.032_883_011_666_982_945,
    -0.010_597_401_784_997_278,
];

const WINDOWS: [usize; 4] = [3, 5, 7, 9];

/// Smallest side the filter accepts.
pub const MIN_SIDE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenoiserConfig {
    /// Noise scale on the 0..255 range; rescaled for deeper rasters.
    pub sigma0: f64,
    pub levels: usize,
    pub block_size: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self { sigma0: 5.0, levels: 4, block_size: 512 }
    }
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma0 > 0.0) || !self.sigma0.is_finite() {
            return Err(Error::InvalidParameter(format!("sigma0 must be > 0, got {}", self.sigma0)));
        }
        if self.levels == 0 {
            return Err(Error::InvalidParameter("levels must be >= 1".into()));
        }
        if self.block_size < MIN_SIDE {
            return Err(Error::InvalidParameter(format!("block size {}", self.block_size)));
        }
        Ok(())
    }
}

/// A denoising filter producing `F(I)`.
pub trait Denoiser: Sync {
    fn id(&self) -> DenoiserId;
    fn denoise(&self, img: &ImageRaster) -> Result<RealImage>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct WaveletDenoiser {
    pub cfg: DenoiserConfig,
}

impl WaveletDenoiser {
    pub fn new(cfg: DenoiserConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }
}

impl Denoiser for WaveletDenoiser {
    fn id(&self) -> DenoiserId {
        DenoiserId::WaveletDb4
    }

    fn denoise(&self, img: &ImageRaster) -> Result<RealImage> {
        wavelet_denoise(img, &self.cfg)
    }
}

/// `F(I) = I`, so every residual is zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityDenoiser;

impl Denoiser for IdentityDenoiser {
    fn id(&self) -> DenoiserId {
        DenoiserId::Identity
    }

    fn denoise(&self, img: &ImageRaster) -> Result<RealImage> {
        Ok(img.to_real())
    }
}

/// A denoised image produced elsewhere (e.g. by a learned extractor).
#[derive(Debug, Clone)]
pub struct ExternalDenoised {
    pub image: RealImage,
}

impl Denoiser for ExternalDenoised {
    fn id(&self) -> DenoiserId {
        DenoiserId::External
    }

    fn denoise(&self, img: &ImageRaster) -> Result<RealImage> {
        if img.dims() != self.image.dims() {
            return Err(Error::dims(img.dims(), self.image.dims()));
        }
        Ok(self.image.clone())
    }
}

pub fn load_external_denoised(path: &Path) -> Result<RealImage> {
    let bytes = std::fs::read(path)?;
    let (img, _, _) = decode_real_image(&bytes)?;
    Ok(img)
}

/// `W = I - F(I)` with provenance from the denoiser and the raster's part.
pub fn noise_residual(img: &ImageRaster, denoiser: &dyn Denoiser) -> Result<Fingerprint> {
    let d = denoiser.denoise(img)?;
    if d.dims() != img.dims() {
        return Err(Error::dims(img.dims(), d.dims()));
    }
    let values = img.pixels().iter().zip(&d.data).map(|(&p, &q)| f64::from(p) - q).collect();
    let prov = Provenance { denoiser: denoiser.id(), part: img.part(), ..Provenance::default() };
    Fingerprint::new(img.width(), img.height(), values, 1, prov)
}

pub fn wavelet_denoise(img: &ImageRaster, cfg: &DenoiserConfig) -> Result<RealImage> {
    let sigma0 = cfg.sigma0 * f64::from(img.max_value()) / 255.0;
    wavelet_denoise_real(&img.to_real(), sigma0, cfg)
}

/// Wavelet Wiener filter on a real plane; `sigma0` is in the plane's units.
pub fn wavelet_denoise_real(img: &RealImage, sigma0: f64, cfg: &DenoiserConfig) -> Result<RealImage> {
    cfg.validate()?;
    let (w, h) = img.dims();
    if w < MIN_SIDE || h < MIN_SIDE {
        return Err(Error::InvalidParameter(format!(
            "image {w}x{h} is smaller than the {MIN_SIDE}-pixel wavelet support"
        )));
    }
    let xs = tile_ranges(w, cfg.block_size);
    let ys = tile_ranges(h, cfg.block_size);
    if xs.len() == 1 && ys.len() == 1 {
        return Ok(denoise_block(img, sigma0, cfg.levels));
    }
    let tiles: Vec<(usize, usize, usize, usize)> = ys
        .iter()
        .flat_map(|&(y0, th)| xs.iter().map(move |&(x0, tw)| (x0, y0, tw, th)))
        .collect();
    let outputs: Vec<RealImage> = tiles
        .par_iter()
        .map(|&(x0, y0, tw, th)| denoise_block(&img.crop(x0, y0, tw, th), sigma0, cfg.levels))
        .collect();
    let mut out = RealImage::zeros(w, h);
    for (&(x0, y0, tw, th), tile) in tiles.iter().zip(&outputs) {
        for y in 0..th {
            out.data[(y0 + y) * w + x0..(y0 + y) * w + x0 + tw]
                .copy_from_slice(&tile.data[y * tw..(y + 1) * tw]);
        }
    }
    Ok(out)
}

/// Splits `0..n` into runs of `block`; a short trailing run is merged into
/// its predecessor so every tile meets the minimum support.
pub fn tile_ranges(n: usize, block: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < n {
        let len = block.min(n - start);
        out.push((start, len));
        start += len;
    }
    if out.len() > 1 && out.last().unwrap().1 < MIN_SIDE {
        let (_, tail) = out.pop().unwrap();
        out.last_mut().unwrap().1 += tail;
    }
    out
}

fn denoise_block(img: &RealImage, sigma0: f64, levels: usize) -> RealImage {
    let (w, h) = img.dims();
    let unit = 1usize << levels;
    let margin = 2 * unit;
    let pw = (w + 2 * margin).div_ceil(unit) * unit;
    let ph = (h + 2 * margin).div_ceil(unit) * unit;

    let mut buf = vec![0.0; pw * ph];
    for y in 0..ph {
        let sy = reflect(y as isize - margin as isize, h);
        for x in 0..pw {
            let sx = reflect(x as isize - margin as isize, w);
            buf[y * pw + x] = img.data[sy * w + sx];
        }
    }

    let noise_var = sigma0 * sigma0;
    let (mut cw, mut ch) = (pw, ph);
    for _ in 0..levels {
        dwt2_level(&mut buf, pw, cw, ch);
        let (hw, hh) = (cw / 2, ch / 2);
        // detail bands: top-right, bottom-left, bottom-right quadrants
        for (ox, oy) in [(hw, 0), (0, hh), (hw, hh)] {
            let mut band = extract(&buf, pw, ox, oy, hw, hh);
            wiener_shrink(&mut band, hw, hh, noise_var);
            insert(&mut buf, pw, ox, oy, hw, hh, &band);
        }
        cw = hw;
        ch = hh;
    }
    for _ in 0..levels {
        cw *= 2;
        ch *= 2;
        idwt2_level(&mut buf, pw, cw, ch);
    }

    let mut out = RealImage::zeros(w, h);
    for y in 0..h {
        let src = (y + margin) * pw + margin;
        out.data[y * w..(y + 1) * w].copy_from_slice(&buf[src..src + w]);
    }
    out
}

fn extract(buf: &[f64], stride: usize, ox: usize, oy: usize, w: usize, h: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        out.extend_from_slice(&buf[(oy + y) * stride + ox..(oy + y) * stride + ox + w]);
    }
    out
}

fn insert(buf: &mut [f64], stride: usize, ox: usize, oy: usize, w: usize, h: usize, band: &[f64]) {
    for y in 0..h {
        buf[(oy + y) * stride + ox..(oy + y) * stride + ox + w]
            .copy_from_slice(&band[y * w..(y + 1) * w]);
    }
}

/// Stage one: local variance as the minimum over window sizes of
/// `max(0, mean(c^2) - sigma0^2)`. Stage two: Wiener shrinkage.
fn wiener_shrink(band: &mut [f64], w: usize, h: usize, noise_var: f64) {
    let sq: Vec<f64> = band.iter().map(|c| c * c).collect();
    let mut var = vec![f64::INFINITY; w * h];
    for &win in &WINDOWS {
        let means = box_mean(&sq, w, h, win / 2);
        for (v, m) in var.iter_mut().zip(&means) {
            let est = (m - noise_var).max(0.0);
            if est < *v {
                *v = est;
            }
        }
    }
    for (c, v) in band.iter_mut().zip(&var) {
        *c *= v / (v + noise_var);
    }
}

/// Mean over a `(2r+1)^2` window with symmetric boundary reflection.
pub(crate) fn box_mean(data: &[f64], w: usize, h: usize, r: usize) -> Vec<f64> {
    let r = r as isize;
    let mut rows = vec![0.0; w * h];
    for y in 0..h {
        let line = &data[y * w..(y + 1) * w];
        for x in 0..w {
            let mut s = 0.0;
            for dx in -r..=r {
                s += line[reflect(x as isize + dx, w)];
            }
            rows[y * w + x] = s;
        }
    }
    let norm = ((2 * r + 1) * (2 * r + 1)) as f64;
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for dy in -r..=r {
            let sy = reflect(y as isize + dy, h);
            let src = &rows[sy * w..(sy + 1) * w];
            let dst = &mut out[y * w..(y + 1) * w];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
        for d in &mut out[y * w..(y + 1) * w] {
            *d /= norm;
        }
    }
    out
}

#[inline]
fn highpass(k: usize) -> f64 {
    let v = DB4[DB4.len() - 1 - k];
    if k.is_multiple_of(2) {
        v
    } else {
        -v
    }
}

/// One periodic analysis step of length `n` (even): `out = [approx | detail]`.
fn dwt1(x: &[f64], out: &mut [f64]) {
    let n = x.len();
    let half = n / 2;
    for i in 0..half {
        let (mut a, mut d) = (0.0, 0.0);
        for k in 0..DB4.len() {
            let v = x[(2 * i + k) % n];
            a += DB4[k] * v;
            d += highpass(k) * v;
        }
        out[i] = a;
        out[half + i] = d;
    }
}

/// Inverse of [`dwt1`] (transpose of the orthonormal analysis operator).
fn idwt1(c: &[f64], out: &mut [f64]) {
    let n = c.len();
    let half = n / 2;
    out.fill(0.0);
    for i in 0..half {
        let (a, d) = (c[i], c[half + i]);
        for k in 0..DB4.len() {
            out[(2 * i + k) % n] += DB4[k] * a + highpass(k) * d;
        }
    }
}

fn dwt2_level(buf: &mut [f64], stride: usize, w: usize, h: usize) {
    let mut line = vec![0.0; w.max(h)];
    let mut tmp = vec![0.0; w.max(h)];
    for y in 0..h {
        let row = &mut buf[y * stride..y * stride + w];
        line[..w].copy_from_slice(row);
        dwt1(&line[..w], &mut tmp[..w]);
        row.copy_from_slice(&tmp[..w]);
    }
    for x in 0..w {
        for y in 0..h {
            line[y] = buf[y * stride + x];
        }
        dwt1(&line[..h], &mut tmp[..h]);
        for y in 0..h {
            buf[y * stride + x] = tmp[y];
        }
    }
}

fn idwt2_level(buf: &mut [f64], stride: usize, w: usize, h: usize) {
    let mut line = vec![0.0; w.max(h)];
    let mut tmp = vec![0.0; w.max(h)];
    for x in 0..w {
        for y in 0..h {
            line[y] = buf[y * stride + x];
        }
        idwt1(&line[..h], &mut tmp[..h]);
        for y in 0..h {
            buf[y * stride + x] = tmp[y];
        }
    }
    for y in 0..h {
        let row = &mut buf[y * stride..y * stride + w];
        line[..w].copy_from_slice(row);
        idwt1(&line[..w], &mut tmp[..w]);
        row.copy_from_slice(&tmp[..w]);
    }
}
