//! Fuzzy-extractor signatures bound to a camera fingerprint.
//!
//! Enrollment draws a fresh 256-bit secret, hashes it to a 128-bit code
//! message, publishes the public key of the signing key derived from that
//! message, and stores the sketch `s = K xor C(message)` for the compressed
//! registration fingerprint `K`. A fresh photo yields `K'`; decoding
//! `K' xor s` recovers the message whenever `K'` is close to `K`, which
//! re-derives the same signing key.
//!
//! ```text
//! SPS1 | u32 n | u32 lambda | f32 p_design | u64 construction seed | packed s
//! signature | u16 len, algorithm id | u16 len, pk | 32-byte digest | u16 len, signature
//! SPK1 | u16 len, algorithm id | u16 len, pk
//! ```

pub mod polar;
mod signature;

pub use polar::PolarCode;
pub use signature::{scheme_by_id, zeroized_key_buffers, Ed25519, SignatureScheme};

use rand::RngCore;
use sha2::{Digest, Sha256};

use crate::compress::{compress_with, CompressedFingerprint, SideInfo};
use crate::denoise::Denoiser;
use crate::error::{Error, Result};
use crate::model::{
    bytes_to_words, canonical_digest, words_to_bytes, BinaryFingerprint, ImageRaster, Reader,
    Verdict,
};
use crate::pipeline::extract_fingerprint;
use crate::util::rng;
use signature::Secret;

const SKETCH_MAGIC: &[u8; 4] = b"SPS1";
const PUBLIC_KEY_MAGIC: &[u8; 4] = b"SPK1";

/// Security parameter and code message length.
pub const LAMBDA: usize = 128;

/// Design crossover of the BSC used to build and decode the code. Set
/// above the 95th-percentile bit error rate of honest single-photo
/// fingerprints on the simulated fleet (about 0.32 at n = 4096).
pub const DEFAULT_P_DESIGN: f32 = 0.36;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SketchParams {
    pub n: usize,
    pub lambda: usize,
    pub p_design: f32,
    pub construction_seed: u64,
}

impl SketchParams {
    pub fn new(n: usize, p_design: f32, construction_seed: u64) -> Self {
        Self { n, lambda: LAMBDA, p_design, construction_seed }
    }

    pub fn code(&self) -> Result<PolarCode> {
        PolarCode::new(self.n, self.lambda, f64::from(self.p_design), self.construction_seed)
    }
}

/// `s = K xor C(message)` plus the code it was built with.
#[derive(Debug, Clone, PartialEq)]
pub struct SecureSketch {
    pub params_n: usize,
    pub lambda: usize,
    pub p_design: f32,
    pub construction_seed: u64,
    /// `n x 1` packed bits.
    pub s: BinaryFingerprint,
}

impl SecureSketch {
    pub fn params(&self) -> SketchParams {
        SketchParams {
            n: self.params_n,
            lambda: self.lambda,
            p_design: self.p_design,
            construction_seed: self.construction_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicKey {
    pub algorithm: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Enrollment {
    pub pk: PublicKey,
    pub sketch: SecureSketch,
    pub side: SideInfo,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhotoSignature {
    pub algorithm: String,
    /// Public key of the signing key that was used.
    pub pk: Vec<u8>,
    /// SHA-256 of the even-photo file bytes.
    pub digest: [u8; 32],
    pub signature: Vec<u8>,
}

fn message_from_secret(secret: &[u8; 32]) -> Secret<Vec<bool>> {
    let h = Secret(<[u8; 32]>::from(Sha256::new_with_prefix(b"camprint/fe/message").chain_update(secret).finalize()));
    let bits = (0..LAMBDA).map(|i| (h.0[i / 8] >> (7 - i % 8)) & 1 == 1).collect();
    Secret(bits)
}

fn signing_seed(message: &[bool]) -> Secret<[u8; 32]> {
    let mut packed = Secret(vec![0u8; message.len().div_ceil(8)]);
    for (i, &b) in message.iter().enumerate() {
        if b {
            packed.0[i / 8] |= 1 << (7 - i % 8);
        }
    }
    Secret(Sha256::new_with_prefix(b"camprint/fe/signing-key").chain_update(&packed.0).finalize().into())
}

fn xor_bits(a: &BinaryFingerprint, b: &BinaryFingerprint) -> Result<BinaryFingerprint> {
    if a.dims() != b.dims() {
        return Err(Error::dims(a.dims(), b.dims()));
    }
    let words = a.words().iter().zip(b.words()).map(|(x, y)| x ^ y).collect();
    Ok(BinaryFingerprint::from_words(a.width(), a.height(), words))
}

/// Registers a compressed fingerprint. The secret comes from an RNG seeded
/// with `seed` and never leaves this call.
pub fn enroll(
    fp: &CompressedFingerprint,
    params: &SketchParams,
    scheme: &dyn SignatureScheme,
    seed: u64,
) -> Result<Enrollment> {
    if fp.n() != params.n {
        return Err(Error::Validation(format!(
            "fingerprint has {} bits, code length is {}",
            fp.n(),
            params.n
        )));
    }
    let code = params.code()?;
    let mut secret = Secret([0u8; 32]);
    rng(seed).fill_bytes(&mut secret.0);
    let message = message_from_secret(&secret.0);
    let key = signing_seed(&message.0);
    let pk = scheme.public_key(&key.0);
    let codeword = Secret(code.encode(&message.0)?);
    let c = BinaryFingerprint::from_bits(params.n, 1, &codeword.0)?;
    let s = xor_bits(&fp.bits, &c)?;
    Ok(Enrollment {
        pk: PublicKey { algorithm: scheme.id().to_string(), bytes: pk },
        sketch: SecureSketch {
            params_n: params.n,
            lambda: params.lambda,
            p_design: params.p_design,
            construction_seed: params.construction_seed,
            s,
        },
        side: fp.side.clone(),
    })
}

/// Recovers the signing key from compressed bits and signs the even-photo
/// bytes with it. A wrong key is not detected here.
pub fn sign_with_bits(
    bits: &BinaryFingerprint,
    even_photo_bytes: &[u8],
    sketch: &SecureSketch,
    scheme: &dyn SignatureScheme,
) -> Result<PhotoSignature> {
    let word = xor_bits(bits, &sketch.s)?;
    let code = sketch.params().code()?;
    let message = Secret(code.decode(&word.to_bits())?);
    let key = signing_seed(&message.0);
    let digest = canonical_digest(even_photo_bytes);
    Ok(PhotoSignature {
        algorithm: scheme.id().to_string(),
        pk: scheme.public_key(&key.0),
        digest,
        signature: scheme.sign(&key.0, &digest),
    })
}

/// Public key the sketch yields for the given compressed bits; used to
/// test a candidate fingerprint without signing anything.
pub fn recovered_public_key(
    bits: &BinaryFingerprint,
    sketch: &SecureSketch,
    scheme: &dyn SignatureScheme,
) -> Result<Vec<u8>> {
    let word = xor_bits(bits, &sketch.s)?;
    let message = Secret(sketch.params().code()?.decode(&word.to_bits())?);
    let key = signing_seed(&message.0);
    Ok(scheme.public_key(&key.0))
}

/// Fresh fingerprint from an odd-part photo, recompressed with the stored
/// side information, then [`sign_with_bits`].
pub fn reproduce_and_sign(
    photo_odd: &ImageRaster,
    even_photo_bytes: &[u8],
    sketch: &SecureSketch,
    side: &SideInfo,
    denoiser: &dyn Denoiser,
    scheme: &dyn SignatureScheme,
) -> Result<PhotoSignature> {
    let fp = extract_fingerprint(std::slice::from_ref(photo_odd), denoiser)?;
    let cf = compress_with(&fp, side)?;
    sign_with_bits(&cf.bits, even_photo_bytes, sketch, scheme)
}

pub fn verify_signature(even_photo_bytes: &[u8], sig: &PhotoSignature, pk: &PublicKey) -> Verdict {
    if sig.algorithm != pk.algorithm {
        return Verdict::Reject(format!(
            "signature algorithm {} does not match registered {}",
            sig.algorithm, pk.algorithm
        ));
    }
    let scheme = match scheme_by_id(&sig.algorithm) {
        Ok(s) => s,
        Err(e) => return Verdict::Reject(e.to_string()),
    };
    if canonical_digest(even_photo_bytes) != sig.digest {
        return Verdict::Reject("even photo digest mismatch".into());
    }
    if sig.pk != pk.bytes {
        return Verdict::Reject("signed under a different public key".into());
    }
    match scheme.verify(&pk.bytes, &sig.digest, &sig.signature) {
        Ok(true) => Verdict::Accept,
        Ok(false) => Verdict::Reject("signature does not verify".into()),
        Err(e) => Verdict::Reject(format!("malformed signature: {e}")),
    }
}

fn put_blob(out: &mut Vec<u8>, bytes: &[u8]) -> Result<()> {
    let len = u16::try_from(bytes.len()).map_err(|_| Error::Validation("field exceeds 65535 bytes".into()))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(bytes);
    Ok(())
}

fn read_blob<'a>(r: &mut Reader<'a>) -> Result<&'a [u8]> {
    let len = r.u16()? as usize;
    r.take(len)
}

fn read_string(r: &mut Reader) -> Result<String> {
    String::from_utf8(read_blob(r)?.to_vec()).map_err(|_| Error::Format("algorithm id is not UTF-8".into()))
}

pub fn encode_sketch(sketch: &SecureSketch) -> Vec<u8> {
    let mut out = SKETCH_MAGIC.to_vec();
    out.extend_from_slice(&(sketch.params_n as u32).to_le_bytes());
    out.extend_from_slice(&(sketch.lambda as u32).to_le_bytes());
    out.extend_from_slice(&sketch.p_design.to_le_bytes());
    out.extend_from_slice(&sketch.construction_seed.to_le_bytes());
    out.extend_from_slice(&words_to_bytes(sketch.s.words(), sketch.params_n));
    out
}

pub fn decode_sketch(bytes: &[u8]) -> Result<SecureSketch> {
    let mut r = Reader::new(bytes);
    r.magic(SKETCH_MAGIC)?;
    let n = r.u32()? as usize;
    let lambda = r.u32()? as usize;
    let p_design = r.f32()?;
    let construction_seed = r.u64()?;
    if n == 0 || !n.is_power_of_two() || lambda == 0 || lambda > n {
        return Err(Error::Format(format!("invalid sketch parameters n={n} lambda={lambda}")));
    }
    if !(p_design > 0.0 && p_design < 0.5) {
        return Err(Error::Format(format!("invalid design crossover {p_design}")));
    }
    let packed = r.take(n.div_ceil(8))?;
    r.finish()?;
    let s = BinaryFingerprint::from_words(n, 1, bytes_to_words(packed, n)?);
    Ok(SecureSketch { params_n: n, lambda, p_design, construction_seed, s })
}

pub fn encode_signature(sig: &PhotoSignature) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    put_blob(&mut out, sig.algorithm.as_bytes())?;
    put_blob(&mut out, &sig.pk)?;
    out.extend_from_slice(&sig.digest);
    put_blob(&mut out, &sig.signature)?;
    Ok(out)
}

pub fn decode_signature(bytes: &[u8]) -> Result<PhotoSignature> {
    let mut r = Reader::new(bytes);
    let algorithm = read_string(&mut r)?;
    let pk = read_blob(&mut r)?.to_vec();
    let digest: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
    let signature = read_blob(&mut r)?.to_vec();
    r.finish()?;
    Ok(PhotoSignature { algorithm, pk, digest, signature })
}

pub fn encode_public_key(pk: &PublicKey) -> Result<Vec<u8>> {
    let mut out = PUBLIC_KEY_MAGIC.to_vec();
    put_blob(&mut out, pk.algorithm.as_bytes())?;
    put_blob(&mut out, &pk.bytes)?;
    Ok(out)
}

pub fn decode_public_key(bytes: &[u8]) -> Result<PublicKey> {
    let mut r = Reader::new(bytes);
    r.magic(PUBLIC_KEY_MAGIC)?;
    let algorithm = read_string(&mut r)?;
    let pk = read_blob(&mut r)?.to_vec();
    r.finish()?;
    Ok(PublicKey { algorithm, bytes: pk })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compress::{compress, encode_side_info};
    use crate::model::Fingerprint;
    use crate::sim::gauss;
    use crate::util::derive_seed;
    use rand::Rng;

    const N: usize = 512;

    fn registered(seed: u64) -> CompressedFingerprint {
        let mut r = rng(seed);
        let fp = Fingerprint::from_values(64, 32, (0..2048).map(|_| gauss(&mut r)).collect()).unwrap();
        compress(&fp, N, 11, 20).unwrap()
    }

    fn params() -> SketchParams {
        SketchParams::new(N, 0.11, 3)
    }

    fn flip(bits: &BinaryFingerprint, count: usize, seed: u64) -> BinaryFingerprint {
        let mut b = bits.to_bits();
        let mut r = rng(seed);
        let mut flipped = 0;
        while flipped < count {
            let i = r.random_range(0..b.len());
            b[i] = !b[i];
            flipped += 1;
        }
        BinaryFingerprint::from_bits(bits.width(), bits.height(), &b).unwrap()
    }

    #[test]
    fn enrollment_is_deterministic_in_seed() {
        let cf = registered(1);
        let a = enroll(&cf, &params(), &Ed25519, 42).unwrap();
        assert_eq!(a, enroll(&cf, &params(), &Ed25519, 42).unwrap());
        assert_ne!(a.pk, enroll(&cf, &params(), &Ed25519, 43).unwrap().pk);
    }

    #[test]
    fn sketch_xor_fingerprint_recovers_key() {
        let cf = registered(2);
        let e = enroll(&cf, &params(), &Ed25519, 7).unwrap();
        assert_eq!(recovered_public_key(&cf.bits, &e.sketch, &Ed25519).unwrap(), e.pk.bytes);
        let sig = sign_with_bits(&cf.bits, b"even photo", &e.sketch, &Ed25519).unwrap();
        assert_eq!(verify_signature(b"even photo", &sig, &e.pk), Verdict::Accept);
    }

    #[test]
    fn light_noise_is_corrected() {
        let cf = registered(3);
        let e = enroll(&cf, &params(), &Ed25519, 8).unwrap();
        for t in 0..20 {
            let noisy = flip(&cf.bits, 20, derive_seed(5, &[t]));
            assert_eq!(recovered_public_key(&noisy, &e.sketch, &Ed25519).unwrap(), e.pk.bytes);
        }
    }

    #[test]
    fn unrelated_fingerprint_fails() {
        let e = enroll(&registered(4), &params(), &Ed25519, 9).unwrap();
        let other = registered(5);
        assert_ne!(recovered_public_key(&other.bits, &e.sketch, &Ed25519).unwrap(), e.pk.bytes);
    }

    #[test]
    fn verification_rejects_tampering() {
        let cf = registered(6);
        let e = enroll(&cf, &params(), &Ed25519, 10).unwrap();
        let photo = b"raw even photo bytes".to_vec();
        let sig = sign_with_bits(&cf.bits, &photo, &e.sketch, &Ed25519).unwrap();
        let mut altered = photo.clone();
        altered[0] ^= 1;
        assert!(!verify_signature(&altered, &sig, &e.pk).accepted());
        let other = enroll(&cf, &params(), &Ed25519, 11).unwrap();
        assert!(!verify_signature(&photo, &sig, &other.pk).accepted());
        let mut bad = sig.clone();
        bad.signature[5] ^= 0x40;
        assert!(!verify_signature(&photo, &bad, &e.pk).accepted());
        bad.signature.truncate(7);
        assert!(matches!(verify_signature(&photo, &bad, &e.pk), Verdict::Reject(r) if r.contains("malformed")));
    }

    #[test]
    fn enroll_rejects_length_mismatch() {
        let cf = registered(7);
        assert!(enroll(&cf, &SketchParams::new(1024, 0.11, 0), &Ed25519, 1).is_err());
    }

    #[test]
    fn key_buffers_are_wiped() {
        let cf = registered(8);
        let before = zeroized_key_buffers();
        let e = enroll(&cf, &params(), &Ed25519, 12).unwrap();
        let mid = zeroized_key_buffers();
        assert!(mid >= before + 4);
        sign_with_bits(&cf.bits, b"x", &e.sketch, &Ed25519).unwrap();
        assert!(zeroized_key_buffers() >= mid + 3);
    }

    #[test]
    fn artifacts_hold_no_secret_material() {
        let cf = registered(9);
        let seed = 13;
        let e = enroll(&cf, &params(), &Ed25519, seed).unwrap();
        let mut secret = [0u8; 32];
        rng(seed).fill_bytes(&mut secret);
        let message = message_from_secret(&secret);
        let key = signing_seed(&message.0);
        let sig = sign_with_bits(&cf.bits, b"p", &e.sketch, &Ed25519).unwrap();
        let mut blobs = vec![
            encode_sketch(&e.sketch),
            encode_side_info(&e.side),
            encode_public_key(&e.pk).unwrap(),
            encode_signature(&sig).unwrap(),
        ];
        blobs.push(blobs.concat());
        let needles: [&[u8]; 2] = [&secret, &key.0];
        for blob in &blobs {
            for needle in needles {
                assert!(!blob.windows(needle.len()).any(|w| w == needle));
                assert!(!blob.windows(8).any(|w| w == &needle[..8]));
            }
        }
    }

    #[test]
    fn file_codecs_round_trip() {
        let cf = registered(10);
        let e = enroll(&cf, &params(), &Ed25519, 14).unwrap();
        assert_eq!(decode_sketch(&encode_sketch(&e.sketch)).unwrap(), e.sketch);
        let pk = encode_public_key(&e.pk).unwrap();
        assert_eq!(decode_public_key(&pk).unwrap(), e.pk);
        let sig = sign_with_bits(&cf.bits, b"p", &e.sketch, &Ed25519).unwrap();
        let bytes = encode_signature(&sig).unwrap();
        assert_eq!(decode_signature(&bytes).unwrap(), sig);
        assert!(matches!(decode_signature(&bytes[..bytes.len() - 1]), Err(Error::Format(_))));
        let sk = encode_sketch(&e.sketch);
        assert!(matches!(decode_sketch(&sk[..sk.len() - 1]), Err(Error::Format(_))));
    }
}
