//! Synthetic camera fleet following the multiplicative sensor model
//! `I = I0 + I0*K + noise`, with per-camera ground-truth `K`.
//!
//! Every output is a pure function of its explicit seed.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{ImageMeta, ImageRaster};
use crate::util::{derive_seed, rng};

pub const DEFAULT_SIZE: usize = 256;
pub const DEFAULT_SIGMA_K: f64 = 0.02;
pub const DEFAULT_SIGMA_NOISE: f64 = 2.0;

/// One simulated sensor.
#[derive(Debug, Clone)]
pub struct CameraProfile {
    pub label: String,
    pub width: usize,
    pub height: usize,
    pub bit_depth: u8,
    pub sigma_k: f64,
    pub sigma_noise: f64,
    pub seed: u64,
    k_true: Vec<f64>,
    /// Optional 2x2-phase gain pattern `(even-phase gain, odd-phase gain)`;
    /// only used to exercise color-filter-aware layouts.
    checkerboard_gain: Option<(f64, f64)>,
}

impl CameraProfile {
    pub fn k_true(&self) -> &[f64] {
        &self.k_true
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_bit_depth(mut self, bit_depth: u8) -> Result<Self> {
        if bit_depth != 8 && bit_depth != 16 {
            return Err(Error::InvalidParameter(format!("bit depth {bit_depth}")));
        }
        self.bit_depth = bit_depth;
        Ok(self)
    }

    pub fn with_checkerboard_gain(mut self, even_gain: f64, odd_gain: f64) -> Self {
        self.checkerboard_gain = Some((even_gain, odd_gain));
        self
    }
}

pub(crate) fn gauss<R: Rng>(r: &mut R) -> f64 {
    StandardNormal.sample(r)
}

/// Draws a camera with i.i.d. zero-mean Gaussian `K` of scale `sigma_k`.
pub fn new_camera(
    seed: u64,
    dims: (usize, usize),
    sigma_k: f64,
    sigma_noise: f64,
) -> Result<CameraProfile> {
    let (width, height) = dims;
    if width == 0 || height == 0 {
        return Err(Error::InvalidParameter(format!("camera dims {width}x{height}")));
    }
    if !(sigma_k > 0.0) || !sigma_k.is_finite() {
        return Err(Error::InvalidParameter(format!("sigma_k must be positive, got {sigma_k}")));
    }
    if !(sigma_noise >= 0.0) || !sigma_noise.is_finite() {
        return Err(Error::InvalidParameter(format!("sigma_noise must be >= 0, got {sigma_noise}")));
    }
    let mut r = rng(derive_seed(seed, &[0x4B]));
    let k_true = (0..width * height)
        .map(|_| sigma_k * gauss(&mut r))
        .collect();
    Ok(CameraProfile {
        label: format!("cam-{seed:016x}"),
        width,
        height,
        bit_depth: 8,
        sigma_k,
        sigma_noise,
        seed,
        k_true,
        checkerboard_gain: None,
    })
}

/// Noise-free scene content generators. Levels are on the 8-bit scale and
/// are rescaled for deeper sensors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SceneKind {
    Flat { level: f64 },
    /// Horizontal ramp from `from` at the left edge to `to` at the right.
    Gradient { from: f64, to: f64 },
    /// Smooth pseudo-random field: a sum of low-frequency cosines around
    /// `mean` with standard deviation about `amplitude`.
    Textured { mean: f64, amplitude: f64 },
    /// Textured content where one randomly chosen half of the frame sits at
    /// a dark level and the other half at a bright level.
    HalfDark { dark: f64, bright: f64, amplitude: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneSource {
    pub kind: SceneKind,
    pub seed: u64,
}

impl SceneSource {
    pub fn new(kind: SceneKind, seed: u64) -> Self {
        Self { kind, seed }
    }

    pub fn flat(level: f64) -> Self {
        Self::new(SceneKind::Flat { level }, 0)
    }

    pub fn textured(seed: u64) -> Self {
        Self::new(SceneKind::Textured { mean: 130.0, amplitude: 40.0 }, seed)
    }

    /// Renders `I0` for a `width`x`height` frame at `bit_depth`.
    pub fn render(&self, width: usize, height: usize, bit_depth: u8) -> Vec<f64> {
        let scale = f64::from((1u32 << bit_depth) - 1) / 255.0;
        let max = f64::from((1u32 << bit_depth) - 1);
        let mut out = match self.kind {
            SceneKind::Flat { level } => vec![level; width * height],
            SceneKind::Gradient { from, to } => {
                let denom = (width.max(2) - 1) as f64;
                (0..height)
                    .flat_map(|_| (0..width).map(move |x| from + (to - from) * x as f64 / denom))
                    .collect()
            }
            SceneKind::Textured { mean, amplitude } => {
                let field = smooth_field(width, height, self.seed);
                field.into_iter().map(|f| mean + amplitude * f).collect()
            }
            SceneKind::HalfDark { dark, bright, amplitude } => {
                let field = smooth_field(width, height, self.seed);
                let side = rng(derive_seed(self.seed, &[0x5D])).random_range(0..4u32);
                let mut v = Vec::with_capacity(width * height);
                for y in 0..height {
                    for x in 0..width {
                        let in_dark = match side {
                            0 => x < width / 2,
                            1 => x >= width / 2,
                            2 => y < height / 2,
                            _ => y >= height / 2,
                        };
                        let f = field[y * width + x];
                        v.push(if in_dark {
                            dark * (1.0 + 0.25 * f)
                        } else {
                            bright + amplitude * f
                        });
                    }
                }
                v
            }
        };
        for p in &mut out {
            *p = (*p * scale).clamp(0.0, max);
        }
        out
    }
}

/// Unit-variance smooth random field: twelve cosines with periods of
/// 24-160 pixels, random orientations and phases.
fn smooth_field(width: usize, height: usize, seed: u64) -> Vec<f64> {
    const TERMS: usize = 12;
    let mut r = rng(derive_seed(seed, &[0x7E]));
    let waves: Vec<(f64, f64, f64)> = (0..TERMS)
        .map(|_| {
            let period: f64 = r.random_range(24.0..160.0);
            let theta: f64 = r.random_range(0.0..std::f64::consts::TAU);
            let phase: f64 = r.random_range(0.0..std::f64::consts::TAU);
            let k = std::f64::consts::TAU / period;
            (k * theta.cos(), k * theta.sin(), phase)
        })
        .collect();
    let norm = (2.0 / TERMS as f64).sqrt();
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let s: f64 = waves
                .iter()
                .map(|&(kx, ky, ph)| (kx * x as f64 + ky * y as f64 + ph).cos())
                .sum();
            out.push(norm * s);
        }
    }
    out
}

/// One exposure: `clamp(round(I0 + I0*K + noise))`.
pub fn capture(camera: &CameraProfile, scene: &SceneSource, seed: u64) -> Result<ImageRaster> {
    let content = scene.render(camera.width, camera.height, camera.bit_depth);
    capture_content(camera, &content, seed)
}

/// Like [`capture`], for pre-rendered scene content of the camera's size.
pub fn capture_content(camera: &CameraProfile, content: &[f64], seed: u64) -> Result<ImageRaster> {
    let n = camera.width * camera.height;
    if content.len() != n {
        return Err(Error::DimensionMismatch {
            expected: format!("{} scene values", n),
            actual: format!("{}", content.len()),
        });
    }
    let max = f64::from((1u32 << camera.bit_depth) - 1);
    let noise_scale = camera.sigma_noise * max / 255.0;
    let mut r = rng(derive_seed(seed, &[0xC4]));
    let mut pixels = Vec::with_capacity(n);
    for (i, (&i0, &k)) in content.iter().zip(&camera.k_true).enumerate() {
        let gain = match camera.checkerboard_gain {
            Some((even, odd)) => {
                let (x, y) = (i % camera.width, i / camera.width);
                if (x + y) % 2 == 0 {
                    even
                } else {
                    odd
                }
            }
            None => 1.0,
        };
        let base = i0 * gain;
        let noise = if noise_scale > 0.0 {
            noise_scale * gauss(&mut r)
        } else {
            0.0
        };
        let v = (base + base * k + noise).round().clamp(0.0, max);
        pixels.push(v as u16);
    }
    let meta = ImageMeta { camera: Some(camera.label.clone()), ..ImageMeta::default() };
    ImageRaster::with_meta(camera.width, camera.height, camera.bit_depth, pixels, meta)
}

/// `n` exposures of one scene with independent noise, sharing `burst_id`.
pub fn capture_burst(
    camera: &CameraProfile,
    scene: &SceneSource,
    n: usize,
    seed: u64,
    burst_id: u32,
) -> Result<Vec<ImageRaster>> {
    if n == 0 {
        return Err(Error::InvalidParameter("burst length must be at least 1".into()));
    }
    let content = scene.render(camera.width, camera.height, camera.bit_depth);
    (0..n)
        .map(|i| {
            let shot_seed = if i == 0 { seed } else { derive_seed(seed, &[i as u64]) };
            Ok(capture_content(camera, &content, shot_seed)?
                .with_camera(camera.label.clone(), Some(burst_id)))
        })
        .collect()
}

/// A labelled set of cameras drawn from one base seed.
#[derive(Debug, Clone)]
pub struct Fleet {
    pub cameras: Vec<CameraProfile>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FleetConfig {
    pub n_cameras: usize,
    pub width: usize,
    pub height: usize,
    pub sigma_k: f64,
    pub sigma_noise: f64,
}

impl Default for FleetConfig {
    fn default() -> Self {
        Self {
            n_cameras: 8,
            width: DEFAULT_SIZE,
            height: DEFAULT_SIZE,
            sigma_k: DEFAULT_SIGMA_K,
            sigma_noise: DEFAULT_SIGMA_NOISE,
        }
    }
}

impl Fleet {
    pub fn new(seed: u64, cfg: &FleetConfig) -> Result<Self> {
        let cameras = (0..cfg.n_cameras)
            .map(|c| {
                Ok(new_camera(
                    derive_seed(seed, &[0xCA, c as u64]),
                    (cfg.width, cfg.height),
                    cfg.sigma_k,
                    cfg.sigma_noise,
                )?
                .with_label(format!("cam{c:02}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { cameras, seed })
    }

    /// Scene seed for photo `index` of camera `camera`; distinct per photo.
    pub fn scene_seed(&self, camera: usize, index: usize) -> u64 {
        derive_seed(self.seed, &[0x5C, camera as u64, index as u64])
    }

    pub fn shot_seed(&self, camera: usize, index: usize) -> u64 {
        derive_seed(self.seed, &[0x50, camera as u64, index as u64])
    }

    /// Photo `index` of camera `camera` over a scene of the given kind.
    pub fn photo(&self, camera: usize, index: usize, kind: SceneKind) -> Result<ImageRaster> {
        let scene = SceneSource::new(kind, self.scene_seed(camera, index));
        let img = capture(&self.cameras[camera], &scene, self.shot_seed(camera, index))?;
        Ok(img.with_camera(self.cameras[camera].label.clone(), Some(burst_id(camera, index))))
    }

    pub fn burst(
        &self,
        camera: usize,
        index: usize,
        n: usize,
        kind: SceneKind,
    ) -> Result<Vec<ImageRaster>> {
        let scene = SceneSource::new(kind, self.scene_seed(camera, index));
        capture_burst(
            &self.cameras[camera],
            &scene,
            n,
            self.shot_seed(camera, index),
            burst_id(camera, index),
        )
    }
}

fn burst_id(camera: usize, index: usize) -> u32 {
    (camera as u32) << 16 | index as u32
}
