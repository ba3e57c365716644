//! Sign quantization and random-projection compression.
//!
//! ```text
//! SPC1 | u32 n | u64 seed | u32 q | q x u32 outlier index | packed bits
//! SPC0 | u32 n | u64 seed | u32 q | q x u32 outlier index
//! ```

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{bytes_to_words, words_to_bytes, BinaryFingerprint, Fingerprint, Reader};

const COMPRESSED_MAGIC: &[u8; 4] = b"SPC1";
const SIDE_INFO_MAGIC: &[u8; 4] = b"SPC0";

/// Default compressed length for 256x256 odd-part fingerprints.
pub const DEFAULT_N: usize = 4096;

/// Default share of source entries excluded as outliers.
pub const DEFAULT_OUTLIER_FRACTION: f64 = 0.01;

/// Bit 1 where the value is `>= 0`.
pub fn binarize(fp: &Fingerprint) -> BinaryFingerprint {
    let bits: Vec<bool> = fp.values().iter().map(|&v| v >= 0.0).collect();
    BinaryFingerprint::from_bits(fp.width(), fp.height(), &bits).expect("dims come from fp")
}

/// Number of differing bits, by XOR and popcount over packed words.
pub fn hamming_distance(a: &BinaryFingerprint, b: &BinaryFingerprint) -> Result<u64> {
    if a.dims() != b.dims() {
        return Err(Error::dims(a.dims(), b.dims()));
    }
    Ok(a.words().iter().zip(b.words()).map(|(x, y)| u64::from((x ^ y).count_ones())).sum())
}

/// `1 - 2 d / n`: the correlation of the two +1/-1 sequences.
pub fn binary_similarity(a: &BinaryFingerprint, b: &BinaryFingerprint) -> Result<f64> {
    let d = hamming_distance(a, b)?;
    Ok(1.0 - 2.0 * d as f64 / a.len() as f64)
}

/// Projection parameters that travel with a registration: everything
/// needed to recompress a fresh fingerprint, but none of the bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SideInfo {
    pub n: usize,
    pub seed: u64,
    /// Sorted, unique source indices left out of the projection.
    pub outliers: Vec<u32>,
}

impl SideInfo {
    pub fn new(n: usize, seed: u64, outliers: Vec<u32>) -> Result<Self> {
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::InvalidParameter(format!("n = {n} is not a power of two")));
        }
        if u32::try_from(n).is_err() || u32::try_from(outliers.len()).is_err() {
            return Err(Error::InvalidParameter("side info exceeds u32 fields".into()));
        }
        if outliers.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation("outlier indices must be sorted and unique".into()));
        }
        Ok(Self { n, seed, outliers })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompressedFingerprint {
    pub side: SideInfo,
    /// `n x 1` packed bits.
    pub bits: BinaryFingerprint,
}

impl CompressedFingerprint {
    pub fn n(&self) -> usize {
        self.side.n
    }

    pub fn seed(&self) -> u64 {
        self.side.seed
    }

    pub fn outliers(&self) -> &[u32] {
        &self.side.outliers
    }
}

/// Indices of the `q` largest magnitudes, ties to the lower index, sorted.
pub fn select_outliers(values: &[f64], q: usize) -> Vec<u32> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    if q < values.len() {
        order.select_nth_unstable_by(q, |&a, &b| {
            values[b].abs().total_cmp(&values[a].abs()).then(a.cmp(&b))
        });
    }
    let mut out: Vec<u32> = order.into_iter().take(q).map(|i| i as u32).collect();
    out.sort_unstable();
    out
}

/// Projects `fp` onto `n` pseudo-random +1/-1 rows after excluding its `q`
/// largest-magnitude entries.
pub fn compress(fp: &Fingerprint, n: usize, seed: u64, q: usize) -> Result<CompressedFingerprint> {
    let m = fp.len();
    if n > m {
        return Err(Error::InvalidParameter(format!("n = {n} exceeds source length {m}")));
    }
    if q >= m {
        return Err(Error::InvalidParameter(format!("q = {q} must be below source length {m}")));
    }
    let side = SideInfo::new(n, seed, select_outliers(fp.values(), q))?;
    compress_with(fp, &side)
}

/// Recompresses with stored side information (outliers reused verbatim).
pub fn compress_with(fp: &Fingerprint, side: &SideInfo) -> Result<CompressedFingerprint> {
    let m = fp.len();
    if side.n > m {
        return Err(Error::InvalidParameter(format!("n = {} exceeds source length {m}", side.n)));
    }
    if side.outliers.last().is_some_and(|&i| i as usize >= m) {
        return Err(Error::Validation(format!("outlier index beyond source length {m}")));
    }
    let mut v = fp.values().to_vec();
    for &i in &side.outliers {
        v[i as usize] = 0.0;
    }
    let tables = sign_tables(&v);
    const ROWS: usize = 256;
    let bits: Vec<bool> = (0..side.n.div_ceil(ROWS))
        .into_par_iter()
        .flat_map_iter(|c| {
            let first = c * ROWS;
            project_rows(&tables, side.seed, first as u64, ROWS.min(side.n - first))
        })
        .map(|p| p >= 0.0)
        .collect();
    Ok(CompressedFingerprint {
        side: side.clone(),
        bits: BinaryFingerprint::from_bits(side.n, 1, &bits)?,
    })
}

/// Signed sums of each run of 8 entries: `t[g][b]` adds entry `8g + i`
/// where bit `i` of `b` is set and subtracts it elsewhere. A short final
/// run is padded with zeros.
fn sign_tables(v: &[f64]) -> Vec<[f64; 256]> {
    v.chunks(8)
        .map(|run| {
            let mut x = [0.0; 8];
            x[..run.len()].copy_from_slice(run);
            let mut t = [0.0; 256];
            t[0] = x.iter().fold(0.0, |acc, &e| acc - e);
            for b in 1..256usize {
                t[b] = t[b & (b - 1)] + 2.0 * x[b.trailing_zeros() as usize];
            }
            t
        })
        .collect()
}

/// Dot product of the source with row `row` of the sign matrix. Each row
/// is its own ChaCha8 stream, so rows can be generated in any order. Bit
/// `j` of the `c`-th 64-bit draw is the sign of entry `64c + j`, 1 meaning
/// `+1`.
#[cfg(test)]
fn project_row(tables: &[[f64; 256]], seed: u64, row: u64) -> f64 {
    project_rows(tables, seed, row, 1)[0]
}

/// [`project_row`] for `count` consecutive rows, walking the tables in
/// cache-sized blocks. The per-row summation order is the same.
fn project_rows(tables: &[[f64; 256]], seed: u64, first: u64, count: usize) -> Vec<f64> {
    const BLOCK_WORDS: usize = 32;
    let mut rngs: Vec<ChaCha8Rng> = (0..count as u64)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(first + r);
            rng
        })
        .collect();
    let mut lanes = vec![[0.0f64; 4]; count];
    for block in tables.chunks(8 * BLOCK_WORDS) {
        for (rng, acc) in rngs.iter_mut().zip(lanes.iter_mut()) {
            for group in block.chunks(8) {
                let word = rng.next_u64();
                for (g, t) in group.iter().enumerate() {
                    acc[g % 4] += t[((word >> (8 * g)) & 0xFF) as usize];
                }
            }
        }
    }
    lanes.iter().map(|l| (l[0] + l[1]) + (l[2] + l[3])).collect()
}

fn put_side(out: &mut Vec<u8>, side: &SideInfo) {
    out.extend_from_slice(&(side.n as u32).to_le_bytes());
    out.extend_from_slice(&side.seed.to_le_bytes());
    out.extend_from_slice(&(side.outliers.len() as u32).to_le_bytes());
    for &i in &side.outliers {
        out.extend_from_slice(&i.to_le_bytes());
    }
}

fn read_side(r: &mut Reader) -> Result<SideInfo> {
    let n = r.u32()? as usize;
    let seed = r.u64()?;
    let q = r.u32()? as usize;
    if q.checked_mul(4).is_none_or(|b| b > r.remaining()) {
        return Err(Error::Format(format!("truncated outlier list of {q} entries")));
    }
    let outliers = (0..q).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    SideInfo::new(n, seed, outliers).map_err(|e| Error::Format(e.to_string()))
}

pub fn encode_side_info(side: &SideInfo) -> Vec<u8> {
    let mut out = SIDE_INFO_MAGIC.to_vec();
    put_side(&mut out, side);
    out
}

pub fn decode_side_info(bytes: &[u8]) -> Result<SideInfo> {
    let mut r = Reader::new(bytes);
    r.magic(SIDE_INFO_MAGIC)?;
    let side = read_side(&mut r)?;
    r.finish()?;
    Ok(side)
}

pub fn encode_compressed(cf: &CompressedFingerprint) -> Vec<u8> {
    let mut out = COMPRESSED_MAGIC.to_vec();
    put_side(&mut out, &cf.side);
    out.extend_from_slice(&words_to_bytes(cf.bits.words(), cf.n()));
    out
}

pub fn decode_compressed(bytes: &[u8]) -> Result<CompressedFingerprint> {
    let mut r = Reader::new(bytes);
    r.magic(COMPRESSED_MAGIC)?;
    let side = read_side(&mut r)?;
    let packed = r.take(side.n.div_ceil(8))?;
    r.finish()?;
    let words = bytes_to_words(packed, side.n)?;
    let bits = BinaryFingerprint::from_words(side.n, 1, words);
    Ok(CompressedFingerprint { side, bits })
}
