//! Shared domain types: rasters, real-valued fingerprints and their
//! sign-packed form, plus dataset manifests.
//!
//! All values are immutable after construction and validated on the way in,
//! so downstream code can rely on the invariants without re-checking.

mod codec;
mod manifest;

pub use codec::{
    canonical_digest, decode_binary_fp, decode_fingerprint, decode_image, decode_real_image,
    encode_binary_fp, encode_fingerprint, encode_image, encode_real_image,
};
pub use manifest::{DatasetManifest, ManifestEntry};
pub(crate) use codec::Reader;

use crate::error::{Error, Result};

/// Which rows of the original capture a raster or fingerprint covers.
///
/// Row 0 is even; even rows are the public part of a photo.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum PartTag {
    #[default]
    Full,
    Odd,
    Even,
}

impl PartTag {
    pub fn code(self) -> u8 {
        match self {
            PartTag::Full => 0,
            PartTag::Odd => 1,
            PartTag::Even => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(PartTag::Full),
            1 => Ok(PartTag::Odd),
            2 => Ok(PartTag::Even),
            other => Err(Error::Format(format!("unknown part tag {other}"))),
        }
    }

    /// Rows a part of an image with `full_height` rows contains.
    pub fn rows_of(self, full_height: usize) -> usize {
        match self {
            PartTag::Full => full_height,
            PartTag::Even => full_height.div_ceil(2),
            PartTag::Odd => full_height / 2,
        }
    }
}

/// Capture metadata carried alongside pixels.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ImageMeta {
    pub camera: Option<String>,
    pub burst: Option<u32>,
    pub part: PartTag,
    /// Height of the unsplit capture; 0 for full rasters.
    pub full_height: u32,
}

/// Single-channel integer pixel grid, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRaster {
    width: usize,
    height: usize,
    bit_depth: u8,
    pixels: Vec<u16>,
    meta: ImageMeta,
}

impl ImageRaster {
    pub fn new(width: usize, height: usize, bit_depth: u8, pixels: Vec<u16>) -> Result<Self> {
        Self::with_meta(width, height, bit_depth, pixels, ImageMeta::default())
    }

    pub fn with_meta(
        width: usize,
        height: usize,
        bit_depth: u8,
        pixels: Vec<u16>,
        meta: ImageMeta,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Validation("raster must have positive area".into()));
        }
        if bit_depth != 8 && bit_depth != 16 {
            return Err(Error::Validation(format!("unsupported bit depth {bit_depth}")));
        }
        if pixels.len() != width * height {
            return Err(Error::Validation(format!(
                "pixel count {} does not match {}x{}",
                pixels.len(),
                width,
                height
            )));
        }
        let max = max_value(bit_depth);
        if let Some(p) = pixels.iter().find(|&&p| u32::from(p) > max) {
            return Err(Error::Validation(format!("pixel {p} exceeds {max}")));
        }
        match meta.part {
            PartTag::Full => {
                if meta.full_height != 0 {
                    return Err(Error::Validation("full raster records a split height".into()));
                }
            }
            part => {
                if part.rows_of(meta.full_height as usize) != height {
                    return Err(Error::Validation(format!(
                        "{part:?} part of {} rows cannot have {height} rows",
                        meta.full_height
                    )));
                }
            }
        }
        Ok(Self { width, height, bit_depth, pixels, meta })
    }

    /// Builds a raster from wide values, rejecting anything out of range.
    pub fn from_u32(width: usize, height: usize, bit_depth: u8, values: &[u32]) -> Result<Self> {
        let max = max_value(bit_depth);
        let pixels = values
            .iter()
            .map(|&v| {
                if v > max {
                    Err(Error::Validation(format!("pixel {v} exceeds {max}")))
                } else {
                    Ok(v as u16)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(width, height, bit_depth, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bit_depth(&self) -> u8 {
        self.bit_depth
    }

    pub fn max_value(&self) -> u32 {
        max_value(self.bit_depth)
    }

    pub fn pixels(&self) -> &[u16] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.pixels[y * self.width + x]
    }

    pub fn meta(&self) -> &ImageMeta {
        &self.meta
    }

    pub fn part(&self) -> PartTag {
        self.meta.part
    }

    pub fn with_camera(mut self, camera: impl Into<String>, burst: Option<u32>) -> Self {
        self.meta.camera = Some(camera.into());
        self.meta.burst = burst;
        self
    }

    pub fn to_real(&self) -> RealImage {
        RealImage {
            width: self.width,
            height: self.height,
            data: self.pixels.iter().map(|&p| f64::from(p)).collect(),
        }
    }

    pub fn row(&self, y: usize) -> &[u16] {
        &self.pixels[y * self.width..(y + 1) * self.width]
    }
}

pub(crate) fn max_value(bit_depth: u8) -> u32 {
    (1u32 << bit_depth) - 1
}

/// Real-valued image plane (denoised images, gradient maps, intermediates).
#[derive(Debug, Clone, PartialEq)]
pub struct RealImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl RealImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::Validation(format!(
                "real image {}x{} with {} values",
                width,
                height,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height] }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copies the `w`x`h` window whose top-left corner is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> RealImage {
        let mut data = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            data.extend_from_slice(&self.data[y * self.width + x0..y * self.width + x0 + w]);
        }
        RealImage { width: w, height: h, data }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

/// Outcome of a verification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject(String),
}

impl Verdict {
    pub fn accepted(&self) -> bool {
        matches!(self, Verdict::Accept)
    }
}

/// Denoiser that produced a residual; stored in the fingerprint flags byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DenoiserId {
    #[default]
    Unknown,
    Identity,
    /// Orthonormal Daubechies 8-tap wavelet, 4 levels, local Wiener shrinkage.
    WaveletDb4,
    /// Denoised image supplied from outside the toolkit.
    External,
}

impl DenoiserId {
    pub fn code(self) -> u8 {
        match self {
            DenoiserId::Unknown => 0,
            DenoiserId::Identity => 1,
            DenoiserId::WaveletDb4 => 2,
            DenoiserId::External => 3,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(DenoiserId::Unknown),
            1 => Ok(DenoiserId::Identity),
            2 => Ok(DenoiserId::WaveletDb4),
            3 => Ok(DenoiserId::External),
            other => Err(Error::Format(format!("unknown denoiser code {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Provenance {
    pub denoiser: DenoiserId,
    pub part: PartTag,
    pub zero_mean: bool,
    pub wiener: bool,
}

/// Real-valued residual or fingerprint estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Fingerprint {
    width: usize,
    height: usize,
    values: Vec<f64>,
    n_images: u32,
    provenance: Provenance,
}

impl Fingerprint {
    pub fn new(
        width: usize,
        height: usize,
        values: Vec<f64>,
        n_images: u32,
        provenance: Provenance,
    ) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(Error::Validation(format!(
                "fingerprint {}x{} with {} values",
                width,
                height,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("fingerprint contains non-finite values".into()));
        }
        Ok(Self { width, height, values, n_images, provenance })
    }

    /// Wraps plain values with default provenance; handy for tests and
    /// externally supplied arrays.
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(width, height, values, 1, Provenance::default())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn n_images(&self) -> u32 {
        self.n_images
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub(crate) fn with_values(&self, values: Vec<f64>, provenance: Provenance) -> Result<Self> {
        Self::new(self.width, self.height, values, self.n_images, provenance)
    }

    pub fn as_real_image(&self) -> RealImage {
        RealImage { width: self.width, height: self.height, data: self.values.clone() }
    }

    /// Extracts a rectangular window as a new fingerprint.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Fingerprint {
        let img = self.as_real_image().crop(x0, y0, w, h);
        Fingerprint {
            width: w,
            height: h,
            values: img.data,
            n_images: self.n_images,
            provenance: self.provenance,
        }
    }
}

/// Sign-quantized fingerprint, one bit per pixel (1 means +1).
///
/// Bits are stored MSB-first in big-endian 64-bit words so the byte
/// serialization is a plain prefix of the word bytes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryFingerprint {
    width: usize,
    height: usize,
    words: Vec<u64>,
}

impl BinaryFingerprint {
    pub fn from_bits(width: usize, height: usize, bits: &[bool]) -> Result<Self> {
        if width == 0 || height == 0 || bits.len() != width * height {
            return Err(Error::Validation(format!(
                "binary fingerprint {}x{} with {} bits",
                width,
                height,
                bits.len()
            )));
        }
        Ok(Self { width, height, words: pack_words(bits) })
    }

    pub(crate) fn from_words(width: usize, height: usize, words: Vec<u64>) -> Self {
        debug_assert_eq!(words.len(), (width * height).div_ceil(64));
        Self { width, height, words }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn bit(&self, i: usize) -> bool {
        get_bit(&self.words, i)
    }

    pub fn to_bits(&self) -> Vec<bool> {
        (0..self.len()).map(|i| self.bit(i)).collect()
    }

    /// +1/-1 values as reals.
    pub fn to_signs(&self) -> Vec<f64> {
        (0..self.len()).map(|i| if self.bit(i) { 1.0 } else { -1.0 }).collect()
    }

    pub fn packed_bytes(&self) -> Vec<u8> {
        words_to_bytes(&self.words, self.len())
    }
}

pub(crate) fn pack_words(bits: &[bool]) -> Vec<u64> {
    let mut words = vec![0u64; bits.len().div_ceil(64)];
    for (i, &b) in bits.iter().enumerate() {
        if b {
            words[i / 64] |= 1u64 << (63 - (i % 64));
        }
    }
    words
}

#[inline]
pub(crate) fn get_bit(words: &[u64], i: usize) -> bool {
    (words[i / 64] >> (63 - (i % 64))) & 1 == 1
}

pub(crate) fn words_to_bytes(words: &[u64], n_bits: usize) -> Vec<u8> {
    let mut out: Vec<u8> = words.iter().flat_map(|w| w.to_be_bytes()).collect();
    out.truncate(n_bits.div_ceil(8));
    out
}

pub(crate) fn bytes_to_words(bytes: &[u8], n_bits: usize) -> Result<Vec<u64>> {
    if bytes.len() != n_bits.div_ceil(8) {
        return Err(Error::Format(format!(
            "{} packed bytes cannot hold exactly {} bits",
            bytes.len(),
            n_bits
        )));
    }
    let pad = n_bits % 8;
    if pad != 0 {
        let last = bytes[bytes.len() - 1];
        if last & (0xFFu8 >> pad) != 0 {
            return Err(Error::Format("non-zero padding bits".into()));
        }
    }
    let mut words = vec![0u64; n_bits.div_ceil(64)];
    for (i, chunk) in bytes.chunks(8).enumerate() {
        let mut buf = [0u8; 8];
        buf[..chunk.len()].copy_from_slice(chunk);
        words[i] = u64::from_be_bytes(buf);
    }
    Ok(words)
}
