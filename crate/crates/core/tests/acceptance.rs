//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Pass criterion names as arguments to run a subset.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use camprint::compress::{binarize, binary_similarity, compress, compress_with, DEFAULT_N};
use camprint::denoise::{wavelet_denoise, DenoiserConfig, WaveletDenoiser};
use camprint::error::Error;
use camprint::eval::{auc_split, eer_split, leakage_analysis_images, run_ablation_images, AblationConfig, Arm};
use camprint::fuzzy::{
    enroll, reproduce_and_sign, sign_with_bits, verify_signature, Ed25519, Enrollment, PolarCode,
    SketchParams, DEFAULT_P_DESIGN, LAMBDA,
};
use camprint::matching::{ncc, ncc_slices};
use camprint::model::{encode_image, BinaryFingerprint, Fingerprint, ImageRaster};
use camprint::pipeline::{
    crlb_variance_bound, estimate_fingerprint_mle, estimate_from_images, extract_fingerprint, split_odd_even,
};
use camprint::sim::{capture, new_camera, Fleet, FleetConfig, SceneKind, SceneSource};
use camprint::util::{derive_seed, rng};
use camprint::zkp::{
    calibrate_thresholds, fingerprint_digest, patch_scores, prove, verify, ConsistencyConfig, ProofScript,
    Publics, StatementConfig, ThresholdGrid, TransparentBackend, Witness,
};

type Check = fn() -> Result<(bool, String), Error>;

const TEXTURED: SceneKind = SceneKind::Textured { mean: 130.0, amplitude: 40.0 };
const HALF_DARK: SceneKind = SceneKind::HalfDark { dark: 12.0, bright: 180.0, amplitude: 30.0 };

fn main() {
    let criteria: [(&str, Check); 9] = [
        ("estimator", estimator),
        ("identification", identification),
        ("ablation", ablation),
        ("binary", binary_quantization),
        ("crlb", crlb),
        ("fuzzy-extractor", fuzzy_extractor),
        ("zkp", zkp),
        ("leakage", leakage),
        ("determinism", determinism),
    ];
    let wanted: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !wanted.is_empty() && !wanted.iter().any(|w| w == name) {
            continue;
        }
        let t = Instant::now();
        let (pass, detail) = match check() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        let secs = t.elapsed().as_secs_f64();
        println!("{} {name} [{secs:.1}s]: {detail}", if pass { "PASS" } else { "FAIL" });
        failed += usize::from(!pass);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn odd_parts(fleet: &Fleet, camera: usize, photos: std::ops::Range<usize>, kind: SceneKind) -> Vec<ImageRaster> {
    photos
        .map(|i| split_odd_even(&fleet.photo(camera, i, kind).unwrap()).unwrap().0)
        .collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Exact residuals give K back; NCC with the true K grows with N.
fn estimator() -> Result<(bool, String), Error> {
    let (w, h) = (64, 64);
    let mut r = rng(1);
    let k: Vec<f64> = (0..w * h).map(|_| r.random_range(-0.1..0.1)).collect();
    let mut worst = 0.0f64;
    for n in [1, 5, 20, 40] {
        let images: Vec<ImageRaster> = (0..n)
            .map(|_| {
                let px: Vec<u16> = (0..w * h).map(|_| r.random_range(1..=255)).collect();
                ImageRaster::new(w, h, 8, px).unwrap()
            })
            .collect();
        let residuals: Vec<Fingerprint> = images
            .iter()
            .map(|img| {
                let v = img.pixels().iter().zip(&k).map(|(&p, &k)| f64::from(p) * k).collect();
                Fingerprint::from_values(w, h, v).unwrap()
            })
            .collect();
        let est = estimate_fingerprint_mle(&images, &residuals)?;
        for (a, b) in est.fingerprint.values().iter().zip(&k) {
            worst = worst.max((a - b).abs());
        }
    }

    let ns = [1usize, 5, 20, 40];
    let den = WaveletDenoiser::default();
    let per_trial: Vec<Vec<f64>> = (0..10u64)
        .into_par_iter()
        .map(|t| {
            let fleet = Fleet::new(100 + t, &FleetConfig::default())?;
            let c = t as usize % fleet.cameras.len();
            let photos: Vec<ImageRaster> =
                (0..40).map(|i| fleet.photo(c, i, TEXTURED)).collect::<Result<_, _>>()?;
            let (cw, ch) = fleet.cameras[c].dims();
            let truth = Fingerprint::from_values(cw, ch, fleet.cameras[c].k_true().to_vec())?;
            ns.iter()
                .map(|&n| ncc(&estimate_from_images(&photos[..n], &den)?.fingerprint, &truth))
                .collect()
        })
        .collect::<Result<_, Error>>()?;
    let means: Vec<f64> = (0..ns.len()).map(|j| mean(&per_trial.iter().map(|t| t[j]).collect::<Vec<_>>())).collect();
    let increasing = means.windows(2).all(|p| p[1] > p[0]);
    let pass = worst <= 1e-9 && increasing;
    Ok((pass, format!("max |K^ - K| = {worst:.2e} (<= 1e-9); mean NCC at N=1,5,20,40: {means:.4?} (strictly increasing)")))
}

struct IdFleet {
    queries: Vec<(usize, Fingerprint)>,
    references: Vec<Fingerprint>,
}

/// 8 cameras x 20 single-photo queries, plus a 20-photo reference per
/// camera from photos disjoint from the queries.
fn id_fleet(seed: u64) -> Result<IdFleet, Error> {
    let fleet = Fleet::new(seed, &FleetConfig::default())?;
    let den = WaveletDenoiser::default();
    let nc = fleet.cameras.len();
    let queries = (0..nc * 20)
        .into_par_iter()
        .map(|q| {
            let (c, i) = (q / 20, q % 20);
            Ok((c, extract_fingerprint(&[fleet.photo(c, i, TEXTURED)?], &den)?))
        })
        .collect::<Result<_, Error>>()?;
    let references = (0..nc)
        .into_par_iter()
        .map(|c| {
            let imgs: Vec<ImageRaster> = (100..120).map(|i| fleet.photo(c, i, TEXTURED)).collect::<Result<_, _>>()?;
            extract_fingerprint(&imgs, &den)
        })
        .collect::<Result<_, Error>>()?;
    Ok(IdFleet { queries, references })
}

fn split_scores(f: &IdFleet, score: impl Fn(&Fingerprint, &Fingerprint) -> f64) -> (Vec<f64>, Vec<f64>) {
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for (c, q) in &f.queries {
        for (r, rf) in f.references.iter().enumerate() {
            let s = score(q, rf);
            if r == *c {
                pos.push(s)
            } else {
                neg.push(s)
            }
        }
    }
    (pos, neg)
}

fn single_image_scores(f: &IdFleet, score: impl Fn(&Fingerprint, &Fingerprint) -> f64) -> (Vec<f64>, Vec<f64>) {
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for (i, (ci, a)) in f.queries.iter().enumerate() {
        for (cj, b) in &f.queries[i + 1..] {
            let s = score(a, b);
            if ci == cj {
                pos.push(s)
            } else {
                neg.push(s)
            }
        }
    }
    (pos, neg)
}

fn identification() -> Result<(bool, String), Error> {
    let f = id_fleet(2026)?;
    let nccf = |a: &Fingerprint, b: &Fingerprint| ncc(a, b).unwrap();
    let (sp, sn) = single_image_scores(&f, nccf);
    let (rp, rn) = split_scores(&f, nccf);
    let single = auc_split(&sp, &sn)?;
    let reg = auc_split(&rp, &rn)?;
    let pass = single >= 0.95 && reg >= 0.99;
    Ok((
        pass,
        format!(
            "single-image AUC {single:.4} (>= 0.95, EER {:.4}); 20-photo registration AUC {reg:.4} (>= 0.99, EER {:.4})",
            eer_split(&sp, &sn)?,
            eer_split(&rp, &rn)?
        ),
    ))
}

fn ablation_run(sigma_k: f64) -> Result<(bool, String), Error> {
    let fleet = Fleet::new(7, &FleetConfig { sigma_k, ..FleetConfig::default() })?;
    let nc = fleet.cameras.len();
    let images: Vec<ImageRaster> = (0..nc * 20)
        .into_par_iter()
        .map(|g| fleet.burst(g / 20, g % 20, 3, HALF_DARK))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    let report = run_ablation_images(&images, &Arm::ALL, &AblationConfig::default(), &WaveletDenoiser::default())?;
    let auc = |a: Arm| report.row(a).map(|r| r.auc).unwrap_or(f64::NAN);
    let (base, block, burst, both) = (auc(Arm::Baseline), auc(Arm::BlockFilter), auc(Arm::Burst), auc(Arm::Both));
    let pass = block >= base && burst >= base && both >= block && both >= burst;
    Ok((
        pass,
        format!(
            "sigma_K {sigma_k}: AUC baseline {base:.4}, block-filter {block:.4}, burst {burst:.4}, both {both:.4}, binary {:.4}",
            auc(Arm::Binary)
        ),
    ))
}

/// Half-dark scenes in bursts of 3. The default fleet saturates at AUC 1,
/// so a weaker fingerprint is run as well to make the ordering visible.
fn ablation() -> Result<(bool, String), Error> {
    let (weak_ok, weak) = ablation_run(0.003)?;
    let (default_ok, default) = ablation_run(camprint::sim::DEFAULT_SIGMA_K)?;
    Ok((weak_ok && default_ok, format!("{weak}; {default}")))
}

fn best_of<T>(reps: usize, mut f: impl FnMut() -> T) -> Duration {
    (0..reps)
        .map(|_| {
            let t = Instant::now();
            std::hint::black_box(f());
            t.elapsed()
        })
        .min()
        .expect("reps > 0")
}

fn binary_quantization() -> Result<(bool, String), Error> {
    let f = id_fleet(2026)?;
    let (rp, rn) = split_scores(&f, |a, b| ncc(a, b).unwrap());
    let (bp, bn) = split_scores(&f, |a, b| binary_similarity(&binarize(a), &binarize(b)).unwrap());
    let (real_auc, bin_auc) = (auc_split(&rp, &rn)?, auc_split(&bp, &bn)?);
    let (sp, sn) = single_image_scores(&f, |a, b| ncc(a, b).unwrap());
    let (sbp, sbn) = single_image_scores(&f, |a, b| binary_similarity(&binarize(a), &binarize(b)).unwrap());
    let (s_real, s_bin) = (auc_split(&sp, &sn)?, auc_split(&sbp, &sbn)?);

    let side = 1024;
    let mut r = rng(3);
    let mut gaussian = || {
        let v: Vec<f64> = (0..side * side).map(|_| r.random_range(-1.0..1.0)).collect();
        Fingerprint::from_values(side, side, v).unwrap()
    };
    let (a, b) = (gaussian(), gaussian());
    let (ba, bb) = (binarize(&a), binarize(&b));
    let t_real = best_of(15, || ncc(&a, &b).unwrap());
    let t_bin = best_of(15, || binary_similarity(&ba, &bb).unwrap());
    let speedup = t_real.as_secs_f64() / t_bin.as_secs_f64();

    let loss = real_auc - bin_auc;
    let s_loss = s_real - s_bin;
    let pass = loss <= 0.01 && s_loss <= 0.01 && speedup >= 4.0;
    Ok((
        pass,
        format!(
            "AUC real {real_auc:.4} vs binary {bin_auc:.4} with registration (loss {loss:.4}), single-image {s_real:.4} vs {s_bin:.4} (loss {s_loss:.4}), limit 0.01; 1024x1024 match {:.3} ms real vs {:.3} ms packed = {speedup:.1}x (>= 4x)",
            t_real.as_secs_f64() * 1e3,
            t_bin.as_secs_f64() * 1e3
        ),
    ))
}

/// Per-pixel variance over runs, averaged over pixels.
fn mean_variance(runs: &[Vec<f64>]) -> f64 {
    let n = runs.len() as f64;
    let m = runs[0].len();
    let total: f64 = (0..m)
        .map(|p| {
            let mu = runs.iter().map(|r| r[p]).sum::<f64>() / n;
            runs.iter().map(|r| (r[p] - mu).powi(2)).sum::<f64>() / (n - 1.0)
        })
        .sum();
    total / m as f64
}

/// Pipeline and ideal-residual estimators at two luminances and three
/// burst sizes, 100 runs each.
fn crlb() -> Result<(bool, String), Error> {
    const SIGMA: f64 = 2.0;
    const RUNS: u64 = 100;
    let (w, h) = (64, 64);
    let cam = new_camera(9, (w, h), 0.02, SIGMA)?;
    let den = WaveletDenoiser::default();
    let mut pass = true;
    let mut lines = Vec::new();
    let mut bounds = std::collections::BTreeMap::new();
    for level in [40.0, 80.0] {
        for n in [1usize, 4, 16] {
            let runs: Vec<(Vec<f64>, Vec<f64>, f64)> = (0..RUNS)
                .into_par_iter()
                .map(|run| {
                    let imgs: Vec<ImageRaster> = (0..n)
                        .map(|k| capture(&cam, &SceneSource::flat(level), derive_seed(run, &[level as u64, n as u64, k as u64])))
                        .collect::<Result<_, _>>()?;
                    let pipeline = estimate_from_images(&imgs, &den)?.fingerprint.into_values();
                    let mut r = rng(derive_seed(run, &[0x1D, level as u64, n as u64]));
                    let residuals: Vec<Fingerprint> = imgs
                        .iter()
                        .map(|img| {
                            let v = img
                                .pixels()
                                .iter()
                                .zip(cam.k_true())
                                .map(|(&p, &k)| f64::from(p) * k + SIGMA * r.sample::<f64, _>(rand_distr::StandardNormal))
                                .collect();
                            Fingerprint::from_values(w, h, v)
                        })
                        .collect::<Result<_, _>>()?;
                    let ideal = estimate_fingerprint_mle(&imgs, &residuals)?.fingerprint.into_values();
                    Ok((pipeline, ideal, crlb_variance_bound(&imgs, SIGMA)?.mean))
                })
                .collect::<Result<_, Error>>()?;
            let bound = mean(&runs.iter().map(|r| r.2).collect::<Vec<_>>());
            let v_pipe = mean_variance(&runs.iter().map(|r| r.0.clone()).collect::<Vec<_>>());
            let v_ideal = mean_variance(&runs.iter().map(|r| r.1.clone()).collect::<Vec<_>>());
            pass &= v_pipe >= 0.9 * bound && v_ideal >= 0.9 * bound;
            lines.push(format!("L{level}/N{n}: pipeline {:.2}x ideal {:.2}x", v_pipe / bound, v_ideal / bound));
            bounds.insert((level as u32, n), bound);
        }
    }
    let mut ratios = Vec::new();
    for n in [1usize, 4, 16] {
        let r = (bounds[&(80, n)] / bounds[&(40, n)]).sqrt();
        pass &= (r - 0.5).abs() <= 0.05;
        ratios.push(format!("{r:.3}"));
    }
    Ok((
        pass,
        format!(
            "Var(K^)/bound (>= 0.9) {}; std bound ratio 80 vs 40 DN at N=1,4,16: {} (0.5 +- 10%)",
            lines.join(", "),
            ratios.join(", ")
        ),
    ))
}

fn attempt_accepted(bits: &BinaryFingerprint, even_bytes: &[u8], e: &Enrollment) -> Result<bool, Error> {
    let sig = sign_with_bits(bits, even_bytes, &e.sketch, &Ed25519)?;
    Ok(verify_signature(even_bytes, &sig, &e.pk).accepted())
}

fn fuzzy_extractor() -> Result<(bool, String), Error> {
    const ENROLLMENTS: usize = 7;
    const REGISTRATION: usize = 10;
    const QUERIES: usize = 179;
    let fleet = Fleet::new(41, &FleetConfig::default())?;
    let nc = fleet.cameras.len();
    let den = WaveletDenoiser::default();
    let params = |c: usize, e: usize| SketchParams::new(DEFAULT_N, DEFAULT_P_DESIGN, derive_seed(41, &[0x5E, c as u64, e as u64]));

    let enrollments: Vec<Vec<Enrollment>> = (0..nc)
        .into_par_iter()
        .map(|c| {
            (0..ENROLLMENTS)
                .map(|e| {
                    let odds = odd_parts(&fleet, c, e * REGISTRATION..(e + 1) * REGISTRATION, TEXTURED);
                    let fp = extract_fingerprint(&odds, &den)?;
                    let q = fp.len() / 100;
                    let cf = compress(&fp, DEFAULT_N, derive_seed(41, &[0xC0, c as u64, e as u64]), q)?;
                    enroll(&cf, &params(c, e), &Ed25519, derive_seed(41, &[0xE0, c as u64, e as u64]))
                })
                .collect()
        })
        .collect::<Result<_, Error>>()?;

    let honest: usize = (0..100)
        .into_par_iter()
        .map(|t| {
            let c = t % nc;
            let (odd, even) = split_odd_even(&fleet.photo(c, 500 + t, TEXTURED)?)?;
            let even_bytes = encode_image(&even);
            let e = &enrollments[c][0];
            let sig = reproduce_and_sign(&odd, &even_bytes, &e.sketch, &e.side, &den, &Ed25519)?;
            Ok(usize::from(verify_signature(&even_bytes, &sig, &e.pk).accepted()))
        })
        .sum::<Result<usize, Error>>()?;

    // Each query photo: its odd part against one enrollment of every other
    // camera, its public even part against all of its own camera's.
    let (cross, even_attacks): (Vec<usize>, Vec<usize>) = (0..nc * QUERIES)
        .into_par_iter()
        .map(|q| {
            let (c, i) = (q / QUERIES, 1000 + q % QUERIES);
            let (odd, even) = split_odd_even(&fleet.photo(c, i, TEXTURED)?)?;
            let even_bytes = encode_image(&even);
            let fo = extract_fingerprint(&[odd], &den)?;
            let fe = extract_fingerprint(&[even], &den)?;
            let mut cross = 0;
            for other in (0..nc).filter(|&o| o != c) {
                let e = &enrollments[other][(q + other) % ENROLLMENTS];
                cross += usize::from(attempt_accepted(&compress_with(&fo, &e.side)?.bits, &even_bytes, e)?);
            }
            let mut even_ok = 0;
            for e in &enrollments[c] {
                even_ok += usize::from(attempt_accepted(&compress_with(&fe, &e.side)?.bits, &even_bytes, e)?);
            }
            Ok((cross, even_ok))
        })
        .collect::<Result<Vec<(usize, usize)>, Error>>()?
        .into_iter()
        .unzip();
    let cross_attempts = nc * QUERIES * (nc - 1);
    let even_attempts = nc * QUERIES * ENROLLMENTS;
    let cross_ok: usize = cross.iter().sum();
    let even_ok: usize = even_attacks.iter().sum();

    let n = DEFAULT_N;
    let flips = (f64::from(DEFAULT_P_DESIGN) / 2.0 * n as f64).floor() as usize;
    let code = PolarCode::new(n, LAMBDA, f64::from(DEFAULT_P_DESIGN), 77)?;
    let corrected: usize = (0..1000u64)
        .into_par_iter()
        .map(|t| {
            let mut r = rng(derive_seed(77, &[t]));
            let msg: Vec<bool> = (0..LAMBDA).map(|_| r.random()).collect();
            let mut word = code.encode(&msg)?;
            for i in rand::seq::index::sample(&mut r, n, flips) {
                word[i] = !word[i];
            }
            Ok(usize::from(code.decode(&word)? == msg))
        })
        .sum::<Result<usize, Error>>()?;

    let pass = honest >= 95
        && cross_attempts >= 10_000
        && cross_ok == 0
        && even_attempts >= 10_000
        && even_ok == 0
        && corrected >= 990;
    Ok((
        pass,
        format!(
            "honest {honest}/100 (>= 95); cross-camera {cross_ok}/{cross_attempts} accepted; even-part {even_ok}/{even_attempts} accepted (0 required); polar n={n} corrects {flips} flips in {corrected}/1000 (>= 990)"
        ),
    ))
}

struct ZkpCase {
    witness: Witness,
    publics: Publics,
}

fn zkp() -> Result<(bool, String), Error> {
    let fleet = Fleet::new(23, &FleetConfig::default())?;
    let nc = fleet.cameras.len();
    let dc = DenoiserConfig::default();
    let den = WaveletDenoiser::new(dc)?;
    let cfg = StatementConfig::default();
    let registered: Vec<BinaryFingerprint> = (0..nc)
        .into_par_iter()
        .map(|c| Ok(binarize(&extract_fingerprint(&odd_parts(&fleet, c, 0..10, TEXTURED), &den)?)))
        .collect::<Result<_, Error>>()?;

    let cases: Vec<ZkpCase> = (0..100)
        .into_par_iter()
        .map(|t| {
            let c = t % nc;
            let (odd, even) = split_odd_even(&fleet.photo(c, 200 + t, TEXTURED)?)?;
            let denoised = wavelet_denoise(&odd, &dc)?;
            let k = registered[c].clone();
            let publics = Publics { even: even.clone(), h: fingerprint_digest(&k) };
            Ok(ZkpCase { witness: Witness { odd, even, denoised, fingerprint: k }, publics })
        })
        .collect::<Result<_, Error>>()?;
    let scripts: Vec<Option<ProofScript>> = cases
        .par_iter()
        .map(|z| prove(&z.witness, &z.publics, &cfg, &TransparentBackend).ok())
        .collect();
    let honest = cases
        .iter()
        .zip(&scripts)
        .filter(|(z, s)| s.as_ref().is_some_and(|s| verify(s, &z.publics).is_ok_and(|v| v.accepted())))
        .count();

    const ATTEMPTS: usize = 10_000;
    let valid: Vec<(&ZkpCase, &ProofScript)> =
        cases.iter().zip(&scripts).filter_map(|(z, s)| s.as_ref().map(|s| (z, s))).collect();
    if valid.is_empty() {
        return Ok((false, "no honest script to tamper with".into()));
    }
    let tampered_even: usize = (0..ATTEMPTS)
        .into_par_iter()
        .map(|a| {
            let (z, s) = valid[a % valid.len()];
            let mut r = rng(derive_seed(23, &[0xE1, a as u64]));
            let e = &z.publics.even;
            let mut px = e.pixels().to_vec();
            let i = r.random_range(0..px.len());
            px[i] = if px[i] == 0 { r.random_range(1..=255) } else { px[i] - r.random_range(1..=px[i].min(255)) };
            let publics = Publics { even: ImageRaster::new(e.width(), e.height(), e.bit_depth(), px)?, h: z.publics.h };
            Ok(usize::from(verify(s, &publics)?.accepted()))
        })
        .sum::<Result<usize, Error>>()?;
    let tampered_h: usize = (0..ATTEMPTS)
        .into_par_iter()
        .map(|a| {
            let (z, s) = valid[a % valid.len()];
            let mut r = rng(derive_seed(23, &[0xF1, a as u64]));
            let mut h = z.publics.h;
            if a % 2 == 0 {
                let bit = r.random_range(0..256);
                h[bit / 8] ^= 1 << (bit % 8);
            } else {
                r.fill(&mut h);
            }
            Ok(usize::from(verify(s, &Publics { even: z.publics.even.clone(), h })?.accepted()))
        })
        .sum::<Result<usize, Error>>()?;
    // Random K' against honest photos: prove must refuse, or the verifier
    // must reject whatever it produced.
    let forged: Vec<(usize, f64)> = (0..ATTEMPTS)
        .into_par_iter()
        .map(|a| {
            let z = &cases[a % cases.len()];
            let mut r = rng(derive_seed(23, &[0xA1, a as u64]));
            let (w, h) = z.witness.odd.dims();
            let bits: Vec<bool> = (0..w * h).map(|_| r.random()).collect();
            let k = BinaryFingerprint::from_bits(w, h, &bits)?;
            let residual: Vec<f64> =
                z.witness.odd.to_real().data.iter().zip(&z.witness.denoised.data).map(|(a, b)| a - b).collect();
            let corr = ncc_slices(&residual, &k.to_signs())?;
            let witness = Witness { fingerprint: k, ..z.witness.clone() };
            let accepted = match prove(&witness, &z.publics, &cfg, &TransparentBackend) {
                Ok(s) => verify(&s, &z.publics)?.accepted(),
                Err(Error::StatementFalse { .. }) => false,
                Err(e) => return Err(e),
            };
            Ok((usize::from(accepted), corr))
        })
        .collect::<Result<_, Error>>()?;
    let forged_ok: usize = forged.iter().map(|f| f.0).sum();
    let max_forged_ncc = forged.iter().map(|f| f.1).fold(f64::NEG_INFINITY, f64::max);

    let (pos, neg) = calibration_corpus()?;
    let cal = calibrate_thresholds(&pos, &neg, &ThresholdGrid::uniform(0.05))?;
    let plateau = cal.plateau_fraction(2.0);

    let pass = honest >= 95 && tampered_even == 0 && tampered_h == 0 && forged_ok == 0 && plateau >= 0.2;
    Ok((
        pass,
        format!(
            "honest {honest}/100 (>= 95); accepted forgeries: tampered E' {tampered_even}/{ATTEMPTS}, tampered h {tampered_h}/{ATTEMPTS}, random K' {forged_ok}/{ATTEMPTS} (max forged NCC {max_forged_ncc:.4} vs tau {}); calibration on {} positive / {} negative patches: min patch EER {:.4} at C1 {:.2}, C2 {:.2}, {:.1}% of grid within 2x min (>= 20%){}",
            cfg.tau_zkp,
            pos.len(),
            neg.len(),
            cal.min_error,
            cal.c1_thld,
            cal.c2_thld,
            plateau * 100.0,
            if 2.0 * cal.min_error >= 0.5 { "; 2x min is at or above chance, so the plateau is not low" } else { "" }
        ),
    ))
}

/// Odd-part patches of textured and half-dark photos against their own
/// denoised version and the co-located denoised patches of three other
/// photos.
fn calibration_corpus() -> Result<(Vec<(f64, f64)>, Vec<(f64, f64)>), Error> {
    let cfg_fleet = FleetConfig { width: 512, height: 1024, ..FleetConfig::default() };
    let fleet = Fleet::new(29, &cfg_fleet)?;
    let nc = fleet.cameras.len();
    let dc = DenoiserConfig::default();
    let cfg = ConsistencyConfig::default();
    let images = 640;
    let pairs: Vec<_> = (0..images)
        .into_par_iter()
        .map(|i| {
            let kind = if i % 2 == 0 { TEXTURED } else { HALF_DARK };
            let (odd, _) = split_odd_even(&fleet.photo(i % nc, i, kind)?)?;
            let d = wavelet_denoise(&odd, &dc)?;
            Ok((odd.to_real(), d))
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let scored: Vec<(Vec<(f64, f64)>, Vec<(f64, f64)>)> = (0..images)
        .into_par_iter()
        .map(|i| {
            let (o, d) = &pairs[i];
            let pos = patch_scores(o, d, &cfg)?.into_iter().map(|p| (p.2, p.3)).collect();
            let mut neg = Vec::new();
            for j in 1..=3 {
                let other = &pairs[(i + 7 * j) % images].1;
                neg.extend(patch_scores(o, other, &cfg)?.into_iter().map(|p| (p.2, p.3)));
            }
            Ok((pos, neg))
        })
        .collect::<Result<_, Error>>()?;
    let (pos, neg): (Vec<_>, Vec<_>) = scored.into_iter().unzip();
    Ok((pos.concat(), neg.concat()))
}

fn leakage_report(seed: u64, kind: SceneKind) -> Result<camprint::eval::LeakageReport, Error> {
    let fleet = Fleet::new(seed, &FleetConfig::default())?;
    let nc = fleet.cameras.len();
    let images: Vec<ImageRaster> =
        (0..nc * 20).into_par_iter().map(|q| fleet.photo(q / 20, q % 20, kind)).collect::<Result<_, _>>()?;
    leakage_analysis_images(&images, &WaveletDenoiser::default())
}

/// Cross-part leakage of the fingerprint itself is measured on scenes the
/// denoiser removes entirely. Textured scenes add shared scene residue to
/// both parts of a photo; that figure is reported, not gated.
fn leakage() -> Result<(bool, String), Error> {
    let flat = leakage_report(31, SceneKind::Flat { level: 128.0 })?;
    let gradient = leakage_report(32, SceneKind::Gradient { from: 40.0, to: 220.0 })?;
    let textured = leakage_report(33, TEXTURED)?;
    let pass = (flat.cross_part_auc - 0.5).abs() <= 0.1
        && (gradient.cross_part_auc - 0.5).abs() <= 0.1
        && textured.odd_auc >= 0.99
        && textured.even_auc >= 0.99;
    Ok((
        pass,
        format!(
            "odd-vs-even AUC flat {:.4}, gradient {:.4} (0.5 +- 0.1), textured {:.4} (scene residue, not gated); textured odd-part AUC {:.4}, even-part AUC {:.4} (>= 0.99)",
            flat.cross_part_auc, gradient.cross_part_auc, textured.cross_part_auc, textured.odd_auc, textured.even_auc
        ),
    ))
}

fn run_cli(dir: &Path, threads: &str, args: &[&str]) -> Result<(), Error> {
    let status = Command::new(env!("CARGO_BIN_EXE_camprint"))
        .current_dir(dir)
        .env("RAYON_NUM_THREADS", threads)
        .args(args)
        .output()?;
    if !status.status.success() {
        return Err(Error::Validation(format!(
            "camprint {} exited with {}: {}",
            args.join(" "),
            status.status,
            String::from_utf8_lossy(&status.stderr)
        )));
    }
    Ok(())
}

fn digests(root: &Path) -> Result<Vec<(PathBuf, String)>, Error> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir)? {
            let p = entry?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).expect("under root").to_path_buf();
                out.push((rel, hex::encode(Sha256::digest(std::fs::read(&p)?))));
            }
        }
    }
    out.sort();
    Ok(out)
}

/// The same command sequence twice, the second time with a different
/// worker count; every artifact must match byte for byte.
fn determinism() -> Result<(bool, String), Error> {
    let sequence = |dir: &Path, threads: &str| -> Result<(), Error> {
        let reg: Vec<String> = (0..10).map(|i| format!("fleet/cam00/p{i:04}_f0.spi")).collect();
        let reg: Vec<&str> = reg.iter().map(String::as_str).collect();
        let photo = "fleet/cam00/p0011_f0.spi";
        run_cli(dir, threads, &["--seed", "5", "--out", "fleet", "simulate", "--cameras", "3", "--photos", "12", "--burst", "2", "--scene", "textured"])?;
        run_cli(dir, threads, &["--out", "ext", "extract", "--binary", reg[0], reg[1], reg[2]])?;
        run_cli(dir, threads, &["--out", "split", "split", photo])?;
        run_cli(dir, threads, &[&["--seed", "9", "--out", "fe", "fe-enroll"][..], &reg].concat())?;
        run_cli(dir, threads, &["--out", "fe", "fe-sign", photo, "--enrollment", "fe"])?;
        run_cli(dir, threads, &["fe-verify", "--even", "fe/even.spi", "--signature", "fe/signature.sig", "--public-key", "fe/public.spk"])?;
        run_cli(dir, threads, &[&["--out", "zkp", "zkp-register"][..], &reg].concat())?;
        run_cli(dir, threads, &["--out", "zkp", "zkp-prove", photo, "--fingerprint", "zkp/fingerprint.spb", "--digest", "zkp/digest.hex"])?;
        run_cli(dir, threads, &["zkp-verify", "--even", "zkp/even.spi", "--proof", "zkp/proof.json", "--digest", "zkp/digest.hex"])?;
        let bench_cfg = dir.join("bench.cfg");
        std::fs::write(&bench_cfg, "registration_groups = 4\nburst_len = 2\n")?;
        run_cli(dir, threads, &["--config", "bench.cfg", "--out", "bench", "bench", "--manifest", "fleet/manifest.tsv"])?;
        run_cli(dir, threads, &["--out", "cal", "calibrate", "--manifest", "fleet/manifest.tsv"])?;
        Ok(())
    };
    let a = tempfile::tempdir()?;
    let b = tempfile::tempdir()?;
    sequence(a.path(), "1")?;
    sequence(b.path(), "4")?;
    let (da, db) = (digests(a.path())?, digests(b.path())?);
    let differing: Vec<String> = da
        .iter()
        .zip(&db)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.display().to_string())
        .collect();
    let pass = da.len() == db.len() && differing.is_empty() && da.len() > 40;
    Ok((
        pass,
        format!(
            "{} artifacts from 11 commands, 1 vs 4 worker threads: {} differ{}",
            da.len(),
            differing.len() + da.len().abs_diff(db.len()),
            if differing.is_empty() { String::new() } else { format!(" ({})", differing.join(", ")) }
        ),
    ))
}
