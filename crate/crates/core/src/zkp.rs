//! Photo-provenance statement, consistency checking, and prove/verify
//! around a pluggable proof backend.
//!
//! The statement holds when
//!
//! - (a) the odd part `O` and even part `E` interleave into a well-formed photo,
//! - (b) `E` equals the public even photo `E'` bit-exactly,
//! - (c) the denoised image `D` is consistent with `O`,
//! - (d) `ncc(O - D, K) >= tau` for the registered binary fingerprint `K`,
//! - (e) the SHA-256 of `K`'s SPB1 encoding equals the registered digest `h`.
//!
//! The default [`TransparentBackend`] evaluates the statement in the clear
//! and emits the claim transcript with an HMAC integrity tag keyed by the
//! public digests. It shows the protocol shape and the verifier logic; it
//! offers no zero knowledge and cannot stop a prover that skips the
//! evaluation, since the tag key is derivable from public data.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use hmac::{Hmac, Mac};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::matching::ncc_slices;
use crate::model::{
    canonical_digest, encode_binary_fp, encode_image, BinaryFingerprint, ImageRaster, RealImage,
    Verdict,
};
use crate::pipeline::interleave;
use crate::util::{pairwise_sum, reflect};

pub const PROOF_VERSION: u32 = 1;

/// Binary mask over a `width x height` grid, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::Validation(format!("{} mask bits for {width}x{height}", bits.len())));
        }
        Ok(Self { width, height, bits })
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Gradient magnitude with the 3x3 Sobel kernels and symmetric padding.
pub fn sobel3(img: &RealImage) -> Result<RealImage> {
    let (w, h) = img.dims();
    if w < 3 || h < 3 {
        return Err(Error::InvalidParameter(format!("sobel needs at least 3x3, got {w}x{h}")));
    }
    let at = |x: isize, y: isize| img.data[reflect(y, h) * w + reflect(x, w)];
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            out.push(gx.hypot(gy));
        }
    }
    RealImage::new(w, h, out)
}

/// 1 where the pixel is at least the image mean.
pub fn threshold_mean(img: &RealImage) -> Mask {
    let m = pairwise_sum(&img.data) / img.data.len() as f64;
    Mask { width: img.width, height: img.height, bits: img.data.iter().map(|&v| v >= m).collect() }
}

/// Non-overlapping `k x k` block means; sides that `k` does not divide are
/// padded symmetrically.
pub fn mean_pool(img: &RealImage, k: usize) -> Result<RealImage> {
    if k == 0 {
        return Err(Error::InvalidParameter("pool kernel must be positive".into()));
    }
    let (w, h) = img.dims();
    let (ow, oh) = (w.div_ceil(k), h.div_ceil(k));
    let mut out = Vec::with_capacity(ow * oh);
    let area = (k * k) as f64;
    for by in 0..oh {
        for bx in 0..ow {
            let mut s = 0.0;
            for y in by * k..(by + 1) * k {
                let row = reflect(y as isize, h) * w;
                for x in bx * k..(bx + 1) * k {
                    s += img.data[row + reflect(x as isize, w)];
                }
            }
            out.push(s / area);
        }
    }
    RealImage::new(ow, oh, out)
}

fn same_dims(x: &Mask, y: &Mask) -> Result<()> {
    if (x.width, x.height) != (y.width, y.height) {
        return Err(Error::dims((x.width, x.height), (y.width, y.height)));
    }
    Ok(())
}

/// `|X and Y| / |X or Y|`, and 1 when both masks are empty.
pub fn jaccard(x: &Mask, y: &Mask) -> Result<f64> {
    same_dims(x, y)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&a, &b) in x.bits.iter().zip(&y.bits) {
        inter += usize::from(a && b);
        union += usize::from(a || b);
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// `1 - |X xor Y| / |X|`. Not clamped: it goes negative once the xor count
/// exceeds `|X|`.
pub fn ioa(x: &Mask, y: &Mask) -> Result<f64> {
    same_dims(x, y)?;
    let area = x.count();
    if area == 0 {
        return Err(Error::UndefinedSimilarity("IoA with an empty reference mask".into()));
    }
    let xor = x.bits.iter().zip(&y.bits).filter(|(a, b)| a != b).count();
    Ok(1.0 - xor as f64 / area as f64)
}

/// Edge-map agreement: Jaccard of the mean-thresholded Sobel magnitudes.
pub fn c1(o: &RealImage, d: &RealImage) -> Result<f64> {
    if o.dims() != d.dims() {
        return Err(Error::dims(o.dims(), d.dims()));
    }
    jaccard(&threshold_mean(&sobel3(o)?), &threshold_mean(&sobel3(d)?))
}

/// Contour agreement on pooled maps: `max(v, 1 - v)` with
/// `v = IoA(T(Pool(o)), T(Pool(Sobel(d))))`. With `symmetric` the odd side
/// also goes through Sobel first.
pub fn c2(o: &RealImage, d: &RealImage, k_pool: usize, symmetric: bool) -> Result<f64> {
    if o.dims() != d.dims() {
        return Err(Error::dims(o.dims(), d.dims()));
    }
    let o_side = if symmetric { mean_pool(&sobel3(o)?, k_pool)? } else { mean_pool(o, k_pool)? };
    let x = threshold_mean(&o_side);
    let y = threshold_mean(&mean_pool(&sobel3(d)?, k_pool)?);
    let v = ioa(&x, &y)?;
    Ok(v.max(1.0 - v))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyConfig {
    pub patch: usize,
    pub c1_thld: f64,
    pub c2_thld: f64,
    pub count_thld: usize,
    pub k_pool: usize,
    /// Use Sobel on both sides of C2; for comparison runs only.
    #[serde(skip)]
    pub symmetric_c2: bool,
}

impl Default for ConsistencyConfig {
    fn default() -> Self {
        Self {
            patch: 128,
            c1_thld: DEFAULT_C1_THLD,
            c2_thld: DEFAULT_C2_THLD,
            count_thld: 2,
            k_pool: 8,
            symmetric_c2: false,
        }
    }
}

/// Grid-search optimum over about 10k positive and 30k negative simulated
/// 128x128 patch pairs.
pub const DEFAULT_C1_THLD: f64 = 0.35;
pub const DEFAULT_C2_THLD: f64 = 1.0;

impl ConsistencyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch < 3 {
            return Err(Error::InvalidParameter(format!("patch size {}", self.patch)));
        }
        if self.k_pool == 0 {
            return Err(Error::InvalidParameter("pool kernel must be positive".into()));
        }
        for t in [self.c1_thld, self.c2_thld] {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::InvalidParameter(format!("threshold {t} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchScore {
    pub x: usize,
    pub y: usize,
    pub c1: f64,
    pub c2: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    pub patches: Vec<PatchScore>,
    pub pass_count: usize,
    pub consistent: bool,
}

impl ConsistencyReport {
    pub fn n_patches(&self) -> usize {
        self.patches.len()
    }
}

/// Scores the co-located `(o_k, d_k)` patch pairs of a full-patch grid
/// (partial patches at the right and bottom edges are not scored).
pub fn patch_scores(o: &RealImage, d: &RealImage, cfg: &ConsistencyConfig) -> Result<Vec<(usize, usize, f64, f64)>> {
    cfg.validate()?;
    if o.dims() != d.dims() {
        return Err(Error::dims(o.dims(), d.dims()));
    }
    let (w, h) = o.dims();
    let p = cfg.patch;
    if p > w || p > h {
        return Err(Error::InvalidParameter(format!("patch size {p} exceeds {w}x{h} image")));
    }
    let cells: Vec<(usize, usize)> =
        (0..h / p).flat_map(|by| (0..w / p).map(move |bx| (bx * p, by * p))).collect();
    cells
        .into_par_iter()
        .map(|(x, y)| {
            let ok = o.crop(x, y, p, p);
            let dk = d.crop(x, y, p, p);
            Ok((x, y, c1(&ok, &dk)?, c2(&ok, &dk, cfg.k_pool, cfg.symmetric_c2)?))
        })
        .collect()
}

/// Counts patches with `c1 >= C1_thld` or `c2 >= C2_thld` and compares the
/// count with `count_thld`.
pub fn check_consistency(o: &RealImage, d: &RealImage, cfg: &ConsistencyConfig) -> Result<ConsistencyReport> {
    let scores = patch_scores(o, d, cfg)?;
    if cfg.count_thld > scores.len() {
        return Err(Error::InvalidParameter(format!(
            "count threshold {} exceeds {} patches",
            cfg.count_thld,
            scores.len()
        )));
    }
    let patches: Vec<PatchScore> = scores
        .into_iter()
        .map(|(x, y, c1, c2)| PatchScore { x, y, c1, c2, pass: c1 >= cfg.c1_thld || c2 >= cfg.c2_thld })
        .collect();
    let pass_count = patches.iter().filter(|p| p.pass).count();
    Ok(ConsistencyReport { consistent: pass_count >= cfg.count_thld, pass_count, patches })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdGrid {
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
}

impl ThresholdGrid {
    /// `n + 1` evenly spaced points on `[0, 1]` per axis, `n = round(1 / step)`.
    pub fn uniform(step: f64) -> Self {
        let n = (1.0 / step).round() as usize;
        let axis: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        Self { c1: axis.clone(), c2: axis }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub c1_thld: f64,
    pub c2_thld: f64,
    pub min_error: f64,
    /// `surface[i][j]` is the error at `(grid.c1[i], grid.c2[j])`.
    pub surface: Vec<Vec<f64>>,
    pub grid: ThresholdGrid,
}

impl Calibration {
    /// Share of grid cells whose error is within `factor` times the minimum.
    pub fn plateau_fraction(&self, factor: f64) -> f64 {
        let limit = self.min_error * factor;
        let cells = self.surface.iter().flatten();
        let total = self.surface.iter().map(Vec::len).sum::<usize>();
        cells.filter(|&&e| e <= limit).count() as f64 / total as f64
    }
}

/// Error of the patch-level OR decision at every grid point. At a fixed
/// threshold pair the decision has a single operating point, so the
/// per-cell error is the half total error rate `(FAR + FRR) / 2`, which
/// equals the EER where the two rates meet. Ties in the minimum go to the
/// smaller `C1_thld`, then the smaller `C2_thld`.
pub fn calibrate_thresholds(
    positives: &[(f64, f64)],
    negatives: &[(f64, f64)],
    grid: &ThresholdGrid,
) -> Result<Calibration> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::Empty("calibration needs positive and negative pairs".into()));
    }
    if grid.c1.is_empty() || grid.c2.is_empty() {
        return Err(Error::Empty("empty threshold grid".into()));
    }
    let pass = |s: &(f64, f64), t1: f64, t2: f64| s.0 >= t1 || s.1 >= t2;
    let surface: Vec<Vec<f64>> = grid
        .c1
        .par_iter()
        .map(|&t1| {
            grid.c2
                .iter()
                .map(|&t2| {
                    let frr = positives.iter().filter(|s| !pass(s, t1, t2)).count() as f64
                        / positives.len() as f64;
                    let far = negatives.iter().filter(|s| pass(s, t1, t2)).count() as f64
                        / negatives.len() as f64;
                    0.5 * (far + frr)
                })
                .collect()
        })
        .collect();
    let mut best = (0, 0);
    for (i, row) in surface.iter().enumerate() {
        for (j, &e) in row.iter().enumerate() {
            if e < surface[best.0][best.1] {
                best = (i, j);
            }
        }
    }
    Ok(Calibration {
        c1_thld: grid.c1[best.0],
        c2_thld: grid.c2[best.1],
        min_error: surface[best.0][best.1],
        surface,
        grid: grid.clone(),
    })
}

/// Default NCC threshold for clause (d), from honest vs. random-key runs
/// on the simulated fleet.
pub const DEFAULT_TAU_ZKP: f64 = 0.28;

/// Equal-error threshold between honest and forged clause-(d) scores.
/// When the two sets separate, every threshold in the gap has zero error
/// and the midpoint of the gap is returned; otherwise the first cut where
/// the false-accept rate drops to the false-reject rate.
pub fn calibrate_tau(honest: &[f64], forged: &[f64]) -> Result<f64> {
    if honest.is_empty() || forged.is_empty() {
        return Err(Error::Empty("tau calibration needs honest and forged scores".into()));
    }
    if honest.iter().chain(forged).any(|v| !v.is_finite()) {
        return Err(Error::Validation("non-finite score".into()));
    }
    let lo = honest.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = forged.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi < lo {
        return Ok(0.5 * (hi + lo));
    }
    let mut cuts: Vec<f64> = honest.iter().chain(forged).copied().collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let rates = |t: f64| {
        let far = forged.iter().filter(|&&v| v >= t).count() as f64 / forged.len() as f64;
        let frr = honest.iter().filter(|&&v| v < t).count() as f64 / honest.len() as f64;
        (far, frr)
    };
    Ok(cuts.iter().copied().find(|&t| {
        let (far, frr) = rates(t);
        far <= frr
    }).unwrap_or(cuts[cuts.len() - 1]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatementConfig {
    #[serde(flatten)]
    pub consistency: ConsistencyConfig,
    pub tau_zkp: f64,
}

impl Default for StatementConfig {
    fn default() -> Self {
        Self { consistency: ConsistencyConfig::default(), tau_zkp: DEFAULT_TAU_ZKP }
    }
}

/// Private inputs.
#[derive(Debug, Clone)]
pub struct Witness {
    pub odd: ImageRaster,
    pub even: ImageRaster,
    pub denoised: RealImage,
    pub fingerprint: BinaryFingerprint,
}

/// Public inputs.
#[derive(Debug, Clone)]
pub struct Publics {
    pub even: ImageRaster,
    pub h: [u8; 32],
}

impl Publics {
    pub fn even_digest(&self) -> [u8; 32] {
        canonical_digest(&encode_image(&self.even))
    }
}

/// Registered digest of a binary fingerprint.
pub fn fingerprint_digest(k: &BinaryFingerprint) -> [u8; 32] {
    canonical_digest(&encode_binary_fp(k))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Claims {
    pub pass_count: usize,
    pub n_patches: usize,
    pub ncc_ok: bool,
}

/// Everything the statement evaluation established.
#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub h: [u8; 32],
    pub even_digest: [u8; 32],
    pub cfg: StatementConfig,
    pub claims: Claims,
    pub ncc: f64,
    pub patches: Vec<PatchScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProofScript {
    pub version: u32,
    pub backend: String,
    pub h_hex: String,
    pub even_digest_hex: String,
    pub cfg: StatementConfig,
    pub claims: Claims,
    pub tag_hex: String,
    pub payload_b64: String,
}

impl ProofScript {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain data serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("proof script: {e}")))
    }

    /// Canonical JSON with an empty tag: the bytes the tag covers.
    pub fn tagged_bytes(&self) -> Vec<u8> {
        let mut body = self.clone();
        body.tag_hex.clear();
        body.to_json().into_bytes()
    }
}

pub trait ProofBackend: Sync {
    fn id(&self) -> &'static str;
    fn seal(&self, transcript: &Transcript) -> Result<ProofScript>;
    fn check(&self, script: &ProofScript, publics: &Publics) -> Result<Verdict>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TransparentBackend;

impl TransparentBackend {
    pub const ID: &'static str = "transparent-hmac-sha256";

    fn mac(h: &[u8; 32], even_digest: &[u8; 32]) -> Hmac<Sha256> {
        let key = Sha256::new()
            .chain_update(b"camprint/zkp/tag-key")
            .chain_update(h)
            .chain_update(even_digest)
            .finalize();
        Hmac::<Sha256>::new_from_slice(&key).expect("hmac takes any key length")
    }
}

fn payload_bytes(t: &Transcript) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 16 * t.patches.len());
    out.extend_from_slice(&t.ncc.to_le_bytes());
    for p in &t.patches {
        out.extend_from_slice(&(p.x as u32).to_le_bytes());
        out.extend_from_slice(&(p.y as u32).to_le_bytes());
        out.extend_from_slice(&(p.c1 as f32).to_le_bytes());
        out.extend_from_slice(&(p.c2 as f32).to_le_bytes());
    }
    out
}

impl ProofBackend for TransparentBackend {
    fn id(&self) -> &'static str {
        Self::ID
    }

    fn seal(&self, t: &Transcript) -> Result<ProofScript> {
        let mut script = ProofScript {
            version: PROOF_VERSION,
            backend: Self::ID.to_string(),
            h_hex: hex::encode(t.h),
            even_digest_hex: hex::encode(t.even_digest),
            cfg: t.cfg,
            claims: t.claims,
            tag_hex: String::new(),
            payload_b64: B64.encode(payload_bytes(t)),
        };
        let mut mac = Self::mac(&t.h, &t.even_digest);
        mac.update(&script.tagged_bytes());
        script.tag_hex = hex::encode(mac.finalize().into_bytes());
        Ok(script)
    }

    fn check(&self, script: &ProofScript, publics: &Publics) -> Result<Verdict> {
        let even_digest = publics.even_digest();
        if script.h_hex != hex::encode(publics.h) {
            return Ok(Verdict::Reject("script is bound to a different fingerprint digest".into()));
        }
        if script.even_digest_hex != hex::encode(even_digest) {
            return Ok(Verdict::Reject("script is bound to a different even photo".into()));
        }
        let tag = hex::decode(&script.tag_hex).map_err(|e| Error::Format(format!("tag: {e}")))?;
        B64.decode(&script.payload_b64).map_err(|e| Error::Format(format!("payload: {e}")))?;
        let mut mac = Self::mac(&publics.h, &even_digest);
        mac.update(&script.tagged_bytes());
        if mac.verify_slice(&tag).is_err() {
            return Ok(Verdict::Reject("integrity tag mismatch".into()));
        }
        Ok(Verdict::Accept)
    }
}

fn refuse(clause: char, reason: impl Into<String>) -> Error {
    Error::StatementFalse { clause, reason: reason.into() }
}

/// Evaluates clauses (a) to (e) in order and seals a script when all hold.
pub fn prove(
    witness: &Witness,
    publics: &Publics,
    cfg: &StatementConfig,
    backend: &dyn ProofBackend,
) -> Result<ProofScript> {
    if cfg.consistency.symmetric_c2 {
        return Err(Error::InvalidParameter("the symmetric C2 variant is for comparison only".into()));
    }
    if !cfg.tau_zkp.is_finite() {
        return Err(Error::InvalidParameter(format!("tau {}", cfg.tau_zkp)));
    }
    interleave(&witness.odd, &witness.even).map_err(|e| refuse('a', e.to_string()))?;

    if encode_image(&witness.even) != encode_image(&publics.even) {
        return Err(refuse('b', "even part differs from the public even photo"));
    }

    let o = witness.odd.to_real();
    let report = check_consistency(&o, &witness.denoised, &cfg.consistency)?;
    if !report.consistent {
        return Err(refuse(
            'c',
            format!("{} of {} patches consistent", report.pass_count, report.n_patches()),
        ));
    }

    if witness.fingerprint.dims() != witness.odd.dims() {
        return Err(refuse('d', "fingerprint and odd part differ in size"));
    }
    let residual: Vec<f64> = o.data.iter().zip(&witness.denoised.data).map(|(a, b)| a - b).collect();
    let r = ncc_slices(&residual, &witness.fingerprint.to_signs())
        .map_err(|e| refuse('d', e.to_string()))?;
    if r < cfg.tau_zkp {
        return Err(refuse('d', format!("ncc {r:.4} below {}", cfg.tau_zkp)));
    }

    if fingerprint_digest(&witness.fingerprint) != publics.h {
        return Err(refuse('e', "fingerprint digest differs from the registered digest"));
    }

    let transcript = Transcript {
        h: publics.h,
        even_digest: publics.even_digest(),
        cfg: *cfg,
        claims: Claims { pass_count: report.pass_count, n_patches: report.n_patches(), ncc_ok: true },
        ncc: r,
        patches: report.patches,
    };
    backend.seal(&transcript)
}

/// Checks the script's claims against its own configuration, then the
/// backend binding to these publics.
pub fn verify(script: &ProofScript, publics: &Publics) -> Result<Verdict> {
    if script.version != PROOF_VERSION {
        return Ok(Verdict::Reject(format!("unsupported version {}", script.version)));
    }
    let backend: &dyn ProofBackend = match script.backend.as_str() {
        TransparentBackend::ID => &TransparentBackend,
        other => return Ok(Verdict::Reject(format!("unknown backend {other:?}"))),
    };
    let c = &script.claims;
    let cfg = &script.cfg.consistency;
    if cfg.validate().is_err() || cfg.count_thld > c.n_patches || c.pass_count > c.n_patches {
        return Ok(Verdict::Reject("inconsistent configuration or claims".into()));
    }
    if c.pass_count < cfg.count_thld {
        return Ok(Verdict::Reject("consistency claim below the count threshold".into()));
    }
    if !c.ncc_ok {
        return Ok(Verdict::Reject("correlation claim not established".into()));
    }
    backend.check(script, publics)
}
