//! Evaluation: all-pairs score matrices, ROC AUC and EER, the odd/even
//! leakage analysis and the hardening ablation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::compress::{binarize, binary_similarity};
use crate::denoise::Denoiser;
use crate::error::{Error, Result};
use crate::matching::{ncc, pce, weighted_block_ncc, Measure};
use crate::model::{DatasetManifest, Fingerprint, ImageRaster};
use crate::pipeline::{
    block_weights, burst_integrate, extract_fingerprint, postprocess_zm_wf, split_odd_even,
    SelectionMode, DEFAULT_BLOCK,
};

/// Bins of every score histogram.
pub const HISTOGRAM_BINS: usize = 100;

/// Symmetric all-pairs scores with a camera label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub labels: Vec<String>,
    scores: Vec<f64>,
}

impl ScoreMatrix {
    /// Fills the upper triangle with `score(i, j)`, rows in parallel, and
    /// mirrors it. The diagonal is NaN.
    pub fn from_fn<F>(labels: Vec<String>, score: F) -> Result<Self>
    where
        F: Fn(usize, usize) -> Result<f64> + Sync,
    {
        let n = labels.len();
        if n < 2 {
            return Err(Error::Empty(format!("score matrix needs 2 entries, got {n}")));
        }
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| (i + 1..n).map(|j| score(i, j)).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?;
        let mut scores = vec![f64::NAN; n * n];
        for (i, row) in rows.iter().enumerate() {
            for (off, &v) in row.iter().enumerate() {
                let j = i + 1 + off;
                scores[i * n + j] = v;
                scores[j * n + i] = v;
            }
        }
        Ok(Self { labels, scores })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.scores[i * self.n() + j]
    }

    /// Off-diagonal pairs `i < j`, split by label equality.
    pub fn pair_scores(&self) -> PairScores {
        let mut out = PairScores::default();
        for i in 0..self.n() {
            for j in i + 1..self.n() {
                let v = self.get(i, j);
                if self.labels[i] == self.labels[j] {
                    out.pos.push(v);
                } else {
                    out.neg.push(v);
                }
            }
        }
        out
    }
}

/// Scores of matching (`pos`) and non-matching (`neg`) pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairScores {
    pub pos: Vec<f64>,
    pub neg: Vec<f64>,
}

impl PairScores {
    pub fn auc(&self) -> Result<f64> {
        auc_split(&self.pos, &self.neg)
    }

    pub fn eer(&self) -> Result<f64> {
        eer_split(&self.pos, &self.neg)
    }

    /// Shared-range histograms of both classes.
    pub fn histograms(&self) -> Result<(Vec<(f64, usize)>, Vec<(f64, usize)>)> {
        let all = self.pos.iter().chain(&self.neg).copied();
        let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !lo.is_finite() {
            return Err(Error::Empty("no scores to bin".into()));
        }
        Ok((histogram(&self.pos, lo, hi, HISTOGRAM_BINS), histogram(&self.neg, lo, hi, HISTOGRAM_BINS)))
    }
}

/// `(bin_center, count)` over `bins` uniform bins on `[lo, hi]`; the top
/// edge belongs to the last bin. A zero-width range puts everything in
/// the first bin.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<(f64, usize)> {
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = if width > 0.0 { ((v - lo) / width).floor() as isize } else { 0 };
        counts[b.clamp(0, bins as isize - 1) as usize] += 1;
    }
    counts.into_iter().enumerate().map(|(i, c)| (lo + (i as f64 + 0.5) * width, c)).collect()
}

/// All-pairs matrix of `fps` under `measure`. The weighted block measure
/// needs per-image masks and is not available here.
pub fn correlation_matrix(fps: &[Fingerprint], labels: &[String], measure: Measure) -> Result<ScoreMatrix> {
    if fps.len() != labels.len() {
        return Err(Error::Validation(format!("{} fingerprints but {} labels", fps.len(), labels.len())));
    }
    if let Some(f) = fps.iter().find(|f| f.dims() != fps[0].dims()) {
        return Err(Error::dims(fps[0].dims(), f.dims()));
    }
    ScoreMatrix::from_fn(labels.to_vec(), |i, j| match measure {
        Measure::Ncc => ncc(&fps[i], &fps[j]),
        Measure::Pce => Ok(pce(&fps[i], &fps[j])?.value),
        Measure::WeightedBlockNcc => {
            Err(Error::InvalidParameter("weighted block NCC needs block masks".into()))
        }
    })
}

fn split_labels(scores: &[f64], labels: &[bool]) -> Result<(Vec<f64>, Vec<f64>)> {
    if scores.len() != labels.len() {
        return Err(Error::Validation(format!("{} scores but {} labels", scores.len(), labels.len())));
    }
    let pos = scores.iter().zip(labels).filter(|p| *p.1).map(|p| *p.0).collect();
    let neg = scores.iter().zip(labels).filter(|p| !*p.1).map(|p| *p.0).collect();
    Ok((pos, neg))
}

fn check_classes(pos: &[f64], neg: &[f64]) -> Result<()> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Validation("both classes must be present".into()));
    }
    if pos.iter().chain(neg).any(|v| v.is_nan()) {
        return Err(Error::Validation("NaN score".into()));
    }
    Ok(())
}

/// Mann-Whitney AUC with mid-ranks, so ties count one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = split_labels(scores, labels)?;
    auc_split(&pos, &neg)
}

pub fn auc_split(pos: &[f64], neg: &[f64]) -> Result<f64> {
    check_classes(pos, neg)?;
    let mut all: Vec<(f64, bool)> =
        pos.iter().map(|&v| (v, true)).chain(neg.iter().map(|&v| (v, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * all[i..=j].iter().filter(|e| e.1).count() as f64;
        i = j + 1;
    }
    let (p, n) = (pos.len() as f64, neg.len() as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Rate where false accepts equal false rejects, for the rule
/// "accept iff score >= t", interpolated linearly between the operating
/// points on either side of the crossing.
pub fn eer(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = split_labels(scores, labels)?;
    eer_split(&pos, &neg)
}

pub fn eer_split(pos: &[f64], neg: &[f64]) -> Result<f64> {
    check_classes(pos, neg)?;
    let mut p = pos.to_vec();
    let mut q = neg.to_vec();
    p.sort_by(f64::total_cmp);
    q.sort_by(f64::total_cmp);
    let mut cuts: Vec<f64> = p.iter().chain(&q).copied().collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let (np, nn) = (p.len() as f64, q.len() as f64);
    let point = |t: f64| {
        let far = (q.len() - q.partition_point(|&v| v < t)) as f64 / nn;
        let frr = p.partition_point(|&v| v < t) as f64 / np;
        (far, frr)
    };
    let mut prev = (1.0, 0.0);
    for op in cuts.iter().map(|&t| point(t)).chain(std::iter::once((0.0, 1.0))) {
        let d1 = op.0 - op.1;
        if d1 <= 0.0 {
            let d0 = prev.0 - prev.1;
            if d0 == d1 {
                return Ok(op.0);
            }
            let t = d0 / (d0 - d1);
            return Ok(prev.0 + t * (op.0 - prev.0));
        }
        prev = op;
    }
    unreachable!("the last operating point has FAR 0 and FRR 1")
}

/// Cross-part scores of one camera.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraLeakage {
    pub camera: String,
    /// NCC between the odd and even fingerprints of each photo.
    pub same_photo: Vec<f64>,
    /// Same-photo cross-part NCC against cross-camera cross-part NCC.
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeakageReport {
    pub cameras: Vec<CameraLeakage>,
    /// All same-photo cross-part pairs against all cross-camera ones.
    pub cross_part_auc: f64,
    /// Same-camera identification among odd-part fingerprints.
    pub odd_auc: f64,
    pub even_auc: f64,
}

/// Single-image odd and even fingerprints for every photo. Even parts of
/// odd-height photos lose their last row so both parts align.
pub fn leakage_analysis_images(images: &[ImageRaster], denoiser: &dyn Denoiser) -> Result<LeakageReport> {
    let labels = camera_labels(images)?;
    let distinct: std::collections::BTreeSet<&String> = labels.iter().collect();
    if distinct.len() < 2 {
        return Err(Error::Validation("leakage analysis needs at least two cameras".into()));
    }
    let parts: Vec<(Fingerprint, Fingerprint)> = images
        .par_iter()
        .map(|img| {
            let (o, e) = split_odd_even(img)?;
            let fo = extract_fingerprint(std::slice::from_ref(&o), denoiser)?;
            let fe = extract_fingerprint(std::slice::from_ref(&e), denoiser)?;
            let (w, h) = fo.dims();
            Ok((fo, fe.crop(0, 0, w, h)))
        })
        .collect::<Result<_>>()?;
    let n = images.len();
    let cross: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).map(|j| ncc(&parts[i].0, &parts[j].1)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;

    let mut cameras = Vec::new();
    let (mut all_pos, mut all_neg) = (Vec::new(), Vec::new());
    for cam in distinct {
        let mine: Vec<usize> = (0..n).filter(|&i| &labels[i] == cam).collect();
        let pos: Vec<f64> = mine.iter().map(|&i| cross[i][i]).collect();
        let mut neg = Vec::new();
        for &i in &mine {
            for j in (0..n).filter(|&j| &labels[j] != cam) {
                neg.push(cross[i][j]);
            }
        }
        cameras.push(CameraLeakage { camera: cam.clone(), auc: auc_split(&pos, &neg)?, same_photo: pos.clone() });
        all_pos.extend(pos);
        all_neg.extend(neg);
    }
    let odd: Vec<Fingerprint> = parts.iter().map(|p| p.0.clone()).collect();
    let even: Vec<Fingerprint> = parts.into_iter().map(|p| p.1).collect();
    Ok(LeakageReport {
        cameras,
        cross_part_auc: auc_split(&all_pos, &all_neg)?,
        odd_auc: correlation_matrix(&odd, &labels, Measure::Ncc)?.pair_scores().auc()?,
        even_auc: correlation_matrix(&even, &labels, Measure::Ncc)?.pair_scores().auc()?,
    })
}

pub fn leakage_analysis(manifest: &DatasetManifest, denoiser: &dyn Denoiser) -> Result<LeakageReport> {
    leakage_analysis_images(&manifest.load_images()?, denoiser)
}

fn camera_labels(images: &[ImageRaster]) -> Result<Vec<String>> {
    images
        .iter()
        .map(|img| {
            img.meta().camera.clone().ok_or_else(|| Error::Validation("image without camera label".into()))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Arm {
    Baseline,
    BlockFilter,
    Burst,
    Both,
    Binary,
}

impl Arm {
    pub const ALL: [Arm; 5] = [Arm::Baseline, Arm::BlockFilter, Arm::Burst, Arm::Both, Arm::Binary];

    pub fn name(self) -> &'static str {
        match self {
            Arm::Baseline => "baseline",
            Arm::BlockFilter => "block-filter",
            Arm::Burst => "burst",
            Arm::Both => "block-filter+burst",
            Arm::Binary => "binary",
        }
    }

    fn uses_burst(self) -> bool {
        matches!(self, Arm::Burst | Arm::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AblationConfig {
    /// Leading burst groups per camera that form its reference.
    pub registration_groups: usize,
    pub burst_len: usize,
    pub block: usize,
    pub selection: SelectionMode,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            registration_groups: 5,
            burst_len: 3,
            block: DEFAULT_BLOCK,
            selection: SelectionMode::Percentage(0.5),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub arm: Arm,
    pub auc: f64,
    pub eer: f64,
    pub scores: PairScores,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, arm: Arm) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.arm == arm)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("arm,auc,eer,n_pos,n_neg\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{},{}",
                r.arm.name(),
                r.auc,
                r.eer,
                r.scores.pos.len(),
                r.scores.neg.len()
            );
        }
        out
    }
}

/// `bin_center,count` lines.
pub fn histogram_csv(hist: &[(f64, usize)]) -> String {
    let mut out = String::from("bin_center,count\n");
    for (c, n) in hist {
        let _ = writeln!(out, "{c:.6},{n}");
    }
    out
}

struct Group<'a> {
    camera: String,
    frames: Vec<&'a ImageRaster>,
}

fn group_images(images: &[ImageRaster]) -> Result<Vec<Group<'_>>> {
    let mut order: Vec<(String, u32)> = Vec::new();
    let mut groups: BTreeMap<(String, u32), Vec<&ImageRaster>> = BTreeMap::new();
    for img in images {
        let cam = img.meta().camera.clone().ok_or_else(|| Error::Validation("image without camera label".into()))?;
        let burst = img.meta().burst.ok_or_else(|| Error::Validation("image without burst group".into()))?;
        let key = (cam, burst);
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(img);
    }
    Ok(order
        .into_iter()
        .map(|k| {
            let frames = groups.remove(&k).expect("key was inserted");
            Group { camera: k.0, frames }
        })
        .collect())
}

/// Scores every query burst group against every camera reference under
/// each arm. A camera's first `registration_groups` groups (all frames)
/// build its reference; each later group is one query. Single-frame arms
/// use the group's first frame; burst arms integrate `burst_len` frames.
/// Block weights come from the query's first frame.
pub fn run_ablation_images(
    images: &[ImageRaster],
    arms: &[Arm],
    cfg: &AblationConfig,
    denoiser: &dyn Denoiser,
) -> Result<AblationReport> {
    if arms.is_empty() {
        return Err(Error::Empty("no ablation arms".into()));
    }
    let groups = group_images(images)?;
    let mut per_camera: BTreeMap<&str, Vec<&Group>> = BTreeMap::new();
    for g in &groups {
        per_camera.entry(&g.camera).or_default().push(g);
    }
    if per_camera.len() < 2 {
        return Err(Error::Validation("ablation needs at least two cameras".into()));
    }
    let mut refs = Vec::new();
    let mut queries = Vec::new();
    for (cam, gs) in &per_camera {
        if gs.len() <= cfg.registration_groups {
            return Err(Error::Validation(format!(
                "camera {cam} has {} groups, {} are needed for registration plus queries",
                gs.len(),
                cfg.registration_groups
            )));
        }
        let frames: Vec<ImageRaster> =
            gs[..cfg.registration_groups].iter().flat_map(|g| g.frames.iter().map(|&f| f.clone())).collect();
        refs.push((cam.to_string(), frames));
        queries.extend(gs[cfg.registration_groups..].iter().copied());
    }
    let need_burst = arms.iter().any(|a| a.uses_burst());
    if need_burst {
        if let Some(g) = queries.iter().find(|g| g.frames.len() < cfg.burst_len) {
            return Err(Error::Validation(format!(
                "burst arms need {} frames per group; a group of camera {} has {}",
                cfg.burst_len,
                g.camera,
                g.frames.len()
            )));
        }
    }

    let references: Vec<Fingerprint> =
        refs.iter().map(|(_, frames)| extract_fingerprint(frames, denoiser)).collect::<Result<_>>()?;
    let ref_bits: Vec<_> = references.iter().map(binarize).collect();

    struct Query {
        camera: String,
        single: Fingerprint,
        burst: Option<Fingerprint>,
        mask: crate::pipeline::BlockWeightMask,
    }
    let prepared: Vec<Query> = queries
        .par_iter()
        .map(|g| {
            let first = g.frames[0];
            let single = extract_fingerprint(std::slice::from_ref(first), denoiser)?;
            let burst = if need_burst {
                let frames: Vec<ImageRaster> = g.frames[..cfg.burst_len].iter().map(|&f| f.clone()).collect();
                Some(postprocess_zm_wf(&burst_integrate(&frames, denoiser)?))
            } else {
                None
            };
            let mask = block_weights(first, cfg.block, cfg.selection)?;
            Ok(Query { camera: g.camera.clone(), single, burst, mask })
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for &arm in arms {
        let mut scores = PairScores::default();
        for q in &prepared {
            for (r, (cam, _)) in refs.iter().enumerate() {
                let fp = if arm.uses_burst() { q.burst.as_ref().expect("built when needed") } else { &q.single };
                let s = match arm {
                    Arm::Baseline | Arm::Burst => ncc(fp, &references[r])?,
                    Arm::BlockFilter | Arm::Both => weighted_block_ncc(fp, &references[r], &q.mask)?,
                    Arm::Binary => binary_similarity(&binarize(fp), &ref_bits[r])?,
                };
                if *cam == q.camera {
                    scores.pos.push(s);
                } else {
                    scores.neg.push(s);
                }
            }
        }
        rows.push(AblationRow { arm, auc: scores.auc()?, eer: scores.eer()?, scores });
    }
    Ok(AblationReport { rows })
}

pub fn run_ablation(
    manifest: &DatasetManifest,
    arms: &[Arm],
    cfg: &AblationConfig,
    denoiser: &dyn Denoiser,
) -> Result<AblationReport> {
    run_ablation_images(&manifest.load_images()?, arms, cfg, denoiser)
}
