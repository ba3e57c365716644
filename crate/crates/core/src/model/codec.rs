//! Bit-exact little-endian file codecs.
//!
//! ```text
//! SPI1 | u32 w | u32 h | u8 depth | u8 part | u32 full_h | u16 pixels...
//! SPF1 | u32 w | u32 h | u8 flags | u32 n_images | f32 values...
//! SPB1 | u32 w | u32 h | packed bits, MSB first
//! ```
//!
//! SPF1 flags: bit0 zero-mean, bit1 Wiener, bits2-3 part, bit4 marks a
//! denoised image rather than a residual, bits5-7 denoiser code.

use sha2::{Digest, Sha256};

use super::{
    bytes_to_words, BinaryFingerprint, DenoiserId, Fingerprint, ImageMeta, ImageRaster, PartTag,
    Provenance, RealImage,
};
use crate::error::{Error, Result};

const IMAGE_MAGIC: &[u8; 4] = b"SPI1";
const FINGERPRINT_MAGIC: &[u8; 4] = b"SPF1";
const BINARY_MAGIC: &[u8; 4] = b"SPB1";

const FLAG_ZM: u8 = 1;
const FLAG_WF: u8 = 1 << 1;
const FLAG_DENOISED: u8 = 1 << 4;

/// SHA-256 of the exact bytes.
pub fn canonical_digest(payload: &[u8]) -> [u8; 32] {
    Sha256::digest(payload).into()
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                Error::Format(format!(
                    "truncated input: need {} bytes at offset {}, have {}",
                    n,
                    self.pos,
                    self.buf.len() - self.pos
                ))
            })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub(crate) fn magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != magic {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(got),
                String::from_utf8_lossy(magic)
            )));
        }
        Ok(())
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::Format(format!("{} trailing bytes", self.remaining())));
        }
        Ok(())
    }
}

fn dims_u32(w: usize, h: usize) -> Result<(u32, u32)> {
    let w = u32::try_from(w).map_err(|_| Error::Validation("width exceeds u32".into()))?;
    let h = u32::try_from(h).map_err(|_| Error::Validation("height exceeds u32".into()))?;
    Ok((w, h))
}

fn area(w: u32, h: u32) -> Result<usize> {
    (w as usize)
        .checked_mul(h as usize)
        .filter(|&a| a > 0)
        .ok_or_else(|| Error::Format(format!("invalid dimensions {w}x{h}")))
}

pub fn encode_image(raster: &ImageRaster) -> Vec<u8> {
    let mut out = Vec::with_capacity(18 + 2 * raster.pixels().len());
    out.extend_from_slice(IMAGE_MAGIC);
    out.extend_from_slice(&(raster.width() as u32).to_le_bytes());
    out.extend_from_slice(&(raster.height() as u32).to_le_bytes());
    out.push(raster.bit_depth());
    out.push(raster.part().code());
    out.extend_from_slice(&raster.meta().full_height.to_le_bytes());
    for &p in raster.pixels() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn decode_image(bytes: &[u8]) -> Result<ImageRaster> {
    let mut r = Reader::new(bytes);
    r.magic(IMAGE_MAGIC)?;
    let w = r.u32()?;
    let h = r.u32()?;
    let depth = r.u8()?;
    let part = PartTag::from_code(r.u8()?)?;
    let full_height = r.u32()?;
    let n = area(w, h)?;
    if r.remaining() != 2 * n {
        return Err(Error::Format(format!(
            "header claims {} pixels, payload holds {} bytes",
            n,
            r.remaining()
        )));
    }
    let pixels = (0..n).map(|_| r.u16()).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    let meta = ImageMeta { part, full_height, ..ImageMeta::default() };
    ImageRaster::with_meta(w as usize, h as usize, depth, pixels, meta)
}

fn flags_of(p: Provenance, denoised: bool) -> u8 {
    let mut flags = (p.part.code() << 2) | (p.denoiser.code() << 5);
    if p.zero_mean {
        flags |= FLAG_ZM;
    }
    if p.wiener {
        flags |= FLAG_WF;
    }
    if denoised {
        flags |= FLAG_DENOISED;
    }
    flags
}

fn encode_spf(w: usize, h: usize, flags: u8, n_images: u32, values: &[f64]) -> Result<Vec<u8>> {
    let (w, h) = dims_u32(w, h)?;
    let mut out = Vec::with_capacity(17 + 4 * values.len());
    out.extend_from_slice(FINGERPRINT_MAGIC);
    out.extend_from_slice(&w.to_le_bytes());
    out.extend_from_slice(&h.to_le_bytes());
    out.push(flags);
    out.extend_from_slice(&n_images.to_le_bytes());
    for &v in values {
        let f = v as f32;
        if !f.is_finite() {
            return Err(Error::Validation(format!("value {v} is not finite in binary32")));
        }
        out.extend_from_slice(&f.to_le_bytes());
    }
    Ok(out)
}

struct SpfHeader {
    w: usize,
    h: usize,
    flags: u8,
    n_images: u32,
    values: Vec<f64>,
}

fn decode_spf(bytes: &[u8]) -> Result<SpfHeader> {
    let mut r = Reader::new(bytes);
    r.magic(FINGERPRINT_MAGIC)?;
    let w = r.u32()?;
    let h = r.u32()?;
    let flags = r.u8()?;
    let n_images = r.u32()?;
    let n = area(w, h)?;
    if r.remaining() != 4 * n {
        return Err(Error::Format(format!(
            "header claims {}x{} values, payload holds {} bytes",
            w,
            h,
            r.remaining()
        )));
    }
    let values = (0..n)
        .map(|_| {
            let v = r.f32()?;
            if v.is_finite() {
                Ok(f64::from(v))
            } else {
                Err(Error::Format("non-finite value in payload".into()))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SpfHeader { w: w as usize, h: h as usize, flags, n_images, values })
}

/// Values are stored as binary32; anything not exactly representable is
/// rounded on the way out.
pub fn encode_fingerprint(fp: &Fingerprint) -> Result<Vec<u8>> {
    encode_spf(
        fp.width(),
        fp.height(),
        flags_of(fp.provenance(), false),
        fp.n_images(),
        fp.values(),
    )
}

pub fn decode_fingerprint(bytes: &[u8]) -> Result<Fingerprint> {
    let spf = decode_spf(bytes)?;
    if spf.flags & FLAG_DENOISED != 0 {
        return Err(Error::Format("file holds a denoised image, not a fingerprint".into()));
    }
    let provenance = Provenance {
        zero_mean: spf.flags & FLAG_ZM != 0,
        wiener: spf.flags & FLAG_WF != 0,
        part: PartTag::from_code((spf.flags >> 2) & 0b11)?,
        denoiser: DenoiserId::from_code(spf.flags >> 5)?,
    };
    Fingerprint::new(spf.w, spf.h, spf.values, spf.n_images, provenance)
}

/// Denoised image in the SPF1 container with the denoised-image flag set.
pub fn encode_real_image(img: &RealImage, part: PartTag, denoiser: DenoiserId) -> Result<Vec<u8>> {
    let p = Provenance { part, denoiser, ..Provenance::default() };
    encode_spf(img.width, img.height, flags_of(p, true), 0, &img.data)
}

pub fn decode_real_image(bytes: &[u8]) -> Result<(RealImage, PartTag, DenoiserId)> {
    let spf = decode_spf(bytes)?;
    if spf.flags & FLAG_DENOISED == 0 {
        return Err(Error::Format("file holds a fingerprint, not a denoised image".into()));
    }
    let part = PartTag::from_code((spf.flags >> 2) & 0b11)?;
    let denoiser = DenoiserId::from_code(spf.flags >> 5)?;
    Ok((RealImage::new(spf.w, spf.h, spf.values)?, part, denoiser))
}

pub fn encode_binary_fp(fp: &BinaryFingerprint) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + fp.len().div_ceil(8));
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&(fp.width() as u32).to_le_bytes());
    out.extend_from_slice(&(fp.height() as u32).to_le_bytes());
    out.extend_from_slice(&fp.packed_bytes());
    out
}

pub fn decode_binary_fp(bytes: &[u8]) -> Result<BinaryFingerprint> {
    let mut r = Reader::new(bytes);
    r.magic(BINARY_MAGIC)?;
    let w = r.u32()?;
    let h = r.u32()?;
    let n = area(w, h)?;
    let payload = r.take(r.remaining())?;
    let words = bytes_to_words(payload, n)?;
    Ok(BinaryFingerprint::from_words(w as usize, h as usize, words))
}
