//! Command-line front end.
//!
//! Exit codes: 0 success or accept, 1 verification reject (or a false
//! proof statement), 2 usage error, 3 I/O or format error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::compress::{
    compress, decode_side_info, encode_side_info, DEFAULT_N, DEFAULT_OUTLIER_FRACTION,
};
use crate::denoise::{load_external_denoised, wavelet_denoise, Denoiser, DenoiserConfig, ExternalDenoised, WaveletDenoiser};
use crate::error::{Error, Result};
use crate::eval::{histogram_csv, run_ablation, AblationConfig, Arm};
use crate::fuzzy::{
    decode_public_key, decode_signature, decode_sketch, encode_public_key, encode_signature,
    encode_sketch, enroll, reproduce_and_sign, scheme_by_id, verify_signature, Ed25519,
    SketchParams, DEFAULT_P_DESIGN,
};
use crate::model::{
    canonical_digest, decode_binary_fp, decode_image, encode_binary_fp, encode_fingerprint,
    encode_image, DatasetManifest, ImageRaster, PartTag, RealImage, Verdict,
};
use crate::pipeline::{extract_fingerprint, split_odd_even, SelectionMode};
use crate::sim::{Fleet, FleetConfig, SceneKind};
use crate::util::derive_seed;
use crate::zkp::{
    calibrate_thresholds, fingerprint_digest, patch_scores, prove, verify, ConsistencyConfig,
    ProofScript, Publics, StatementConfig, ThresholdGrid, TransparentBackend, Witness,
};

#[derive(Debug, Parser)]
#[command(name = "camprint", version, about = "Camera fingerprint toolkit")]
struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Text file of key=value overrides.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print a JSON summary instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Scene {
    Textured,
    HalfDark,
    Flat,
    Gradient,
}

impl Scene {
    fn kind(self) -> SceneKind {
        match self {
            Scene::Textured => SceneKind::Textured { mean: 130.0, amplitude: 40.0 },
            Scene::HalfDark => SceneKind::HalfDark { dark: 12.0, bright: 180.0, amplitude: 30.0 },
            Scene::Flat => SceneKind::Flat { level: 128.0 },
            Scene::Gradient => SceneKind::Gradient { from: 40.0, to: 220.0 },
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a simulated camera fleet and its manifest.
    Simulate {
        #[arg(long, default_value_t = 8)]
        cameras: usize,
        #[arg(long, default_value_t = 20)]
        photos: usize,
        /// Frames per photo.
        #[arg(long, default_value_t = 1)]
        burst: usize,
        #[arg(long, value_enum, default_value = "textured")]
        scene: Scene,
    },
    /// Estimate a fingerprint from one or more images.
    Extract {
        #[arg(required = true)]
        images: Vec<PathBuf>,
        /// Externally denoised version of the single input image.
        #[arg(long)]
        denoised: Option<PathBuf>,
        /// Also write the sign-packed fingerprint.
        #[arg(long)]
        binary: bool,
    },
    /// Split a full image into its odd and even row parts.
    Split { image: PathBuf },
    /// Register a camera for fingerprint-bound signatures.
    FeEnroll {
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Sign the even part of a photo with the key recovered from its odd part.
    FeSign {
        photo: PathBuf,
        /// Directory holding sketch.sps and side.spc.
        #[arg(long)]
        enrollment: PathBuf,
        #[arg(long)]
        denoised: Option<PathBuf>,
    },
    /// Check an even photo against a signature and registered public key.
    FeVerify {
        #[arg(long)]
        even: PathBuf,
        #[arg(long)]
        signature: PathBuf,
        #[arg(long)]
        public_key: PathBuf,
    },
    /// Register a binary fingerprint and its digest.
    ZkpRegister {
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Prove that a photo's odd part carries the registered fingerprint.
    ZkpProve {
        photo: PathBuf,
        #[arg(long)]
        fingerprint: PathBuf,
        /// Registered digest (hex); defaults to the digest of --fingerprint.
        #[arg(long)]
        digest: Option<PathBuf>,
        /// Externally denoised odd part; the built-in filter otherwise.
        #[arg(long)]
        denoised: Option<PathBuf>,
    },
    /// Check a proof script against an even photo and registered digest.
    ZkpVerify {
        #[arg(long)]
        even: PathBuf,
        #[arg(long)]
        proof: PathBuf,
        #[arg(long)]
        digest: PathBuf,
    },
    /// Run the hardening ablation over a manifest.
    Bench {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Grid-search the consistency thresholds over a manifest.
    Calibrate {
        #[arg(long)]
        manifest: PathBuf,
    },
}

/// Result of one command.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutcome {
    pub code: i32,
    pub summary: String,
    pub json: Value,
}

impl CommandOutcome {
    fn ok(summary: impl Into<String>, json: Value) -> Self {
        Self { code: 0, summary: summary.into(), json }
    }

    fn verdict(v: Verdict, json: Value) -> Self {
        match v {
            Verdict::Accept => Self { code: 0, summary: "accept".into(), json },
            Verdict::Reject(reason) => {
                let mut json = json;
                json["reason"] = Value::String(reason.clone());
                Self { code: 1, summary: format!("reject: {reason}"), json }
            }
        }
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::StatementFalse { .. } => 1,
        Error::InvalidParameter(_) => 2,
        _ => 3,
    }
}

/// Key=value settings; `#` starts a comment.
#[derive(Debug, Default)]
struct Settings(BTreeMap<String, String>);

impl Settings {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)?;
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("config line {}: expected key=value", i + 1)))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(Self(map))
    }

    fn allow(&self, keys: &[&str]) -> Result<()> {
        match self.0.keys().find(|k| !keys.contains(&k.as_str())) {
            Some(k) => Err(Error::InvalidParameter(format!("unknown config key {k:?} for this command"))),
            None => Ok(()),
        }
    }

    fn get<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.0.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| Error::InvalidParameter(format!("config {key} = {v:?}"))),
        }
    }
}

const DENOISER_KEYS: [&str; 2] = ["sigma0", "levels"];

fn denoiser(s: &Settings) -> Result<WaveletDenoiser> {
    let d = DenoiserConfig::default();
    WaveletDenoiser::new(DenoiserConfig { sigma0: s.get("sigma0", d.sigma0)?, levels: s.get("levels", d.levels)?, ..d })
}

fn read(path: &Path) -> Result<Vec<u8>> {
    Ok(std::fs::read(path)?)
}

fn read_image(path: &Path) -> Result<ImageRaster> {
    decode_image(&read(path)?)
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, bytes)?;
    Ok(path)
}

fn read_digest(path: &Path) -> Result<[u8; 32]> {
    let text = std::fs::read_to_string(path)?;
    let bytes = hex::decode(text.trim()).map_err(|e| Error::Format(format!("digest: {e}")))?;
    bytes.try_into().map_err(|_| Error::Format("digest must be 32 bytes".into()))
}

/// Odd part of a full photo; odd parts pass through.
fn odd_part(img: ImageRaster) -> Result<ImageRaster> {
    match img.part() {
        PartTag::Full => Ok(split_odd_even(&img)?.0),
        PartTag::Odd => Ok(img),
        PartTag::Even => Err(Error::Validation("expected a full photo or its odd part".into())),
    }
}

fn load_odd_parts(paths: &[PathBuf]) -> Result<Vec<ImageRaster>> {
    paths.iter().map(|p| odd_part(read_image(p)?)).collect()
}

fn external(path: &Option<PathBuf>) -> Result<Option<RealImage>> {
    path.as_deref().map(load_external_denoised).transpose()
}

fn simulate(cli: &Cli, s: &Settings, cameras: usize, photos: usize, burst: usize, scene: Scene) -> Result<CommandOutcome> {
    s.allow(&["width", "height", "sigma_k", "sigma_noise"])?;
    let d = FleetConfig::default();
    let cfg = FleetConfig {
        n_cameras: cameras,
        width: s.get("width", d.width)?,
        height: s.get("height", d.height)?,
        sigma_k: s.get("sigma_k", d.sigma_k)?,
        sigma_noise: s.get("sigma_noise", d.sigma_noise)?,
    };
    if cameras == 0 || photos == 0 || burst == 0 {
        return Err(Error::InvalidParameter("cameras, photos and burst must be positive".into()));
    }
    let fleet = Fleet::new(cli.seed, &cfg)?;
    let mut manifest = DatasetManifest::default();
    for c in 0..cameras {
        let label = fleet.cameras[c].label.clone();
        for i in 0..photos {
            for (f, img) in fleet.burst(c, i, burst, scene.kind())?.iter().enumerate() {
                let rel = PathBuf::from(&label).join(format!("p{i:04}_f{f}.spi"));
                write(&cli.out.join(&label), &format!("p{i:04}_f{f}.spi"), &encode_image(img))?;
                manifest.entries.push(crate::model::ManifestEntry {
                    path: rel,
                    camera: label.clone(),
                    burst: img.meta().burst.unwrap_or(0),
                });
            }
        }
    }
    let path = write(&cli.out, "manifest.tsv", manifest.to_text().as_bytes())?;
    Ok(CommandOutcome::ok(
        format!("wrote {} images to {}", manifest.entries.len(), path.display()),
        json!({"images": manifest.entries.len(), "cameras": cameras, "manifest": path}),
    ))
}

fn extract(cli: &Cli, s: &Settings, images: &[PathBuf], denoised: &Option<PathBuf>, binary: bool) -> Result<CommandOutcome> {
    s.allow(&DENOISER_KEYS)?;
    let imgs: Vec<ImageRaster> = images.iter().map(|p| read_image(p)).collect::<Result<_>>()?;
    let fp = match external(denoised)? {
        Some(image) => {
            if imgs.len() != 1 {
                return Err(Error::InvalidParameter("--denoised takes exactly one input image".into()));
            }
            extract_fingerprint(&imgs, &ExternalDenoised { image })?
        }
        None => extract_fingerprint(&imgs, &denoiser(s)?)?,
    };
    let bytes = encode_fingerprint(&fp)?;
    let path = write(&cli.out, "fingerprint.spf", &bytes)?;
    let mut info = json!({
        "width": fp.width(), "height": fp.height(), "n_images": fp.n_images(),
        "digest": hex::encode(canonical_digest(&bytes)), "path": path,
    });
    if binary {
        let k = crate::compress::binarize(&fp);
        info["binary_path"] = json!(write(&cli.out, "fingerprint.spb", &encode_binary_fp(&k))?);
    }
    Ok(CommandOutcome::ok(format!("fingerprint {}x{} from {} images", fp.width(), fp.height(), fp.n_images()), info))
}

fn split(cli: &Cli, s: &Settings, image: &Path) -> Result<CommandOutcome> {
    s.allow(&[])?;
    let (odd, even) = split_odd_even(&read_image(image)?)?;
    write(&cli.out, "odd.spi", &encode_image(&odd))?;
    write(&cli.out, "even.spi", &encode_image(&even))?;
    Ok(CommandOutcome::ok(
        format!("odd {}x{}, even {}x{}", odd.width(), odd.height(), even.width(), even.height()),
        json!({"odd_rows": odd.height(), "even_rows": even.height()}),
    ))
}

fn fe_enroll(cli: &Cli, s: &Settings, images: &[PathBuf]) -> Result<CommandOutcome> {
    let mut keys = vec!["n", "p_design", "outlier_fraction"];
    keys.extend(DENOISER_KEYS);
    s.allow(&keys)?;
    let odds = load_odd_parts(images)?;
    let fp = extract_fingerprint(&odds, &denoiser(s)?)?;
    let n = s.get("n", DEFAULT_N)?;
    let q_frac: f64 = s.get("outlier_fraction", DEFAULT_OUTLIER_FRACTION)?;
    if !(0.0..1.0).contains(&q_frac) {
        return Err(Error::InvalidParameter(format!("outlier_fraction {q_frac}")));
    }
    let q = (q_frac * fp.len() as f64).floor() as usize;
    let cf = compress(&fp, n, derive_seed(cli.seed, &[0xC0]), q)?;
    let params = SketchParams::new(n, s.get("p_design", DEFAULT_P_DESIGN)?, derive_seed(cli.seed, &[0xC1]));
    let e = enroll(&cf, &params, &Ed25519, derive_seed(cli.seed, &[0xC2]))?;
    write(&cli.out, "sketch.sps", &encode_sketch(&e.sketch))?;
    write(&cli.out, "side.spc", &encode_side_info(&e.side))?;
    write(&cli.out, "public.spk", &encode_public_key(&e.pk)?)?;
    Ok(CommandOutcome::ok(
        format!("enrolled from {} photos; public key {}", odds.len(), hex::encode(&e.pk.bytes)),
        json!({"photos": odds.len(), "n": n, "public_key": hex::encode(&e.pk.bytes)}),
    ))
}

fn fe_sign(cli: &Cli, s: &Settings, photo: &Path, enrollment: &Path, denoised: &Option<PathBuf>) -> Result<CommandOutcome> {
    s.allow(&DENOISER_KEYS)?;
    let (odd, even) = split_odd_even(&read_image(photo)?)?;
    let sketch = decode_sketch(&read(&enrollment.join("sketch.sps"))?)?;
    let side = decode_side_info(&read(&enrollment.join("side.spc"))?)?;
    let even_bytes = encode_image(&even);
    let den: Box<dyn Denoiser> = match external(denoised)? {
        Some(image) => Box::new(ExternalDenoised { image }),
        None => Box::new(denoiser(s)?),
    };
    let sig = reproduce_and_sign(&odd, &even_bytes, &sketch, &side, den.as_ref(), &Ed25519)?;
    write(&cli.out, "even.spi", &even_bytes)?;
    write(&cli.out, "signature.sig", &encode_signature(&sig)?)?;
    Ok(CommandOutcome::ok(
        format!("signed even part with key {}", hex::encode(&sig.pk)),
        json!({"public_key": hex::encode(&sig.pk), "digest": hex::encode(sig.digest)}),
    ))
}

fn fe_verify(s: &Settings, even: &Path, signature: &Path, public_key: &Path) -> Result<CommandOutcome> {
    s.allow(&[])?;
    let even_bytes = read(even)?;
    let sig = decode_signature(&read(signature)?)?;
    let pk = decode_public_key(&read(public_key)?)?;
    scheme_by_id(&pk.algorithm).map_err(|e| Error::Format(e.to_string()))?;
    let v = verify_signature(&even_bytes, &sig, &pk);
    Ok(CommandOutcome::verdict(v, json!({"accepted": false})).mark_accepted())
}

impl CommandOutcome {
    fn mark_accepted(mut self) -> Self {
        self.json["accepted"] = json!(self.code == 0);
        self
    }
}

fn statement_config(s: &Settings) -> Result<StatementConfig> {
    let d = StatementConfig::default();
    let c = d.consistency;
    Ok(StatementConfig {
        consistency: ConsistencyConfig {
            patch: s.get("patch", c.patch)?,
            c1_thld: s.get("c1_thld", c.c1_thld)?,
            c2_thld: s.get("c2_thld", c.c2_thld)?,
            count_thld: s.get("count_thld", c.count_thld)?,
            k_pool: s.get("k_pool", c.k_pool)?,
            symmetric_c2: false,
        },
        tau_zkp: s.get("tau_zkp", d.tau_zkp)?,
    })
}

fn zkp_register(cli: &Cli, s: &Settings, images: &[PathBuf]) -> Result<CommandOutcome> {
    s.allow(&DENOISER_KEYS)?;
    let odds = load_odd_parts(images)?;
    let k = crate::compress::binarize(&extract_fingerprint(&odds, &denoiser(s)?)?);
    let h = fingerprint_digest(&k);
    write(&cli.out, "fingerprint.spb", &encode_binary_fp(&k))?;
    write(&cli.out, "digest.hex", format!("{}\n", hex::encode(h)).as_bytes())?;
    Ok(CommandOutcome::ok(format!("registered digest {}", hex::encode(h)), json!({"digest": hex::encode(h)})))
}

fn zkp_prove(
    cli: &Cli,
    s: &Settings,
    photo: &Path,
    fingerprint: &Path,
    digest: &Option<PathBuf>,
    denoised: &Option<PathBuf>,
) -> Result<CommandOutcome> {
    let mut keys = STATEMENT_KEYS.to_vec();
    keys.extend(DENOISER_KEYS);
    s.allow(&keys)?;
    let cfg = statement_config(s)?;
    let (odd, even) = split_odd_even(&read_image(photo)?)?;
    let k = decode_binary_fp(&read(fingerprint)?)?;
    let h = match digest {
        Some(p) => read_digest(p)?,
        None => fingerprint_digest(&k),
    };
    let d = match external(denoised)? {
        Some(img) => img,
        None => wavelet_denoise(&odd, &denoiser(s)?.cfg)?,
    };
    let publics = Publics { even: even.clone(), h };
    let witness = Witness { odd, even: even.clone(), denoised: d, fingerprint: k };
    let script = prove(&witness, &publics, &cfg, &TransparentBackend)?;
    write(&cli.out, "even.spi", &encode_image(&even))?;
    write(&cli.out, "proof.json", script.to_json().as_bytes())?;
    Ok(CommandOutcome::ok(
        format!("proof written; {} of {} patches consistent", script.claims.pass_count, script.claims.n_patches),
        json!({"pass_count": script.claims.pass_count, "n_patches": script.claims.n_patches}),
    ))
}

const STATEMENT_KEYS: [&str; 6] = ["patch", "c1_thld", "c2_thld", "count_thld", "k_pool", "tau_zkp"];

fn zkp_verify(s: &Settings, even: &Path, proof: &Path, digest: &Path) -> Result<CommandOutcome> {
    s.allow(&STATEMENT_KEYS)?;
    let policy = statement_config(s)?;
    let even = read_image(even)?;
    let text = std::fs::read_to_string(proof)?;
    let script = ProofScript::from_json(&text)?;
    let publics = Publics { even, h: read_digest(digest)? };
    let v = if script.cfg != policy {
        Verdict::Reject("proof uses a different statement configuration".into())
    } else {
        verify(&script, &publics)?
    };
    Ok(CommandOutcome::verdict(v, json!({})).mark_accepted())
}

fn bench(cli: &Cli, s: &Settings, manifest: &Path) -> Result<CommandOutcome> {
    let mut keys = vec!["registration_groups", "burst_len", "block", "selection"];
    keys.extend(DENOISER_KEYS);
    s.allow(&keys)?;
    let d = AblationConfig::default();
    let cfg = AblationConfig {
        registration_groups: s.get("registration_groups", d.registration_groups)?,
        burst_len: s.get("burst_len", d.burst_len)?,
        block: s.get("block", d.block)?,
        selection: SelectionMode::Percentage(s.get("selection", 0.5)?),
    };
    let m = DatasetManifest::load(manifest)?;
    let groups: std::collections::BTreeSet<(String, u32)> =
        m.entries.iter().map(|e| (e.camera.clone(), e.burst)).collect();
    let bursty = groups.len() < m.entries.len();
    let arms: Vec<Arm> = Arm::ALL.into_iter().filter(|a| bursty || !matches!(a, Arm::Burst | Arm::Both)).collect();
    let report = run_ablation(&m, &arms, &cfg, &denoiser(s)?)?;
    write(&cli.out, "ablation.csv", report.to_csv().as_bytes())?;
    for row in &report.rows {
        let (pos, neg) = row.scores.histograms()?;
        write(&cli.out, &format!("hist_{}_pos.csv", row.arm.name()), histogram_csv(&pos).as_bytes())?;
        write(&cli.out, &format!("hist_{}_neg.csv", row.arm.name()), histogram_csv(&neg).as_bytes())?;
    }
    let rows: Vec<Value> =
        report.rows.iter().map(|r| json!({"arm": r.arm.name(), "auc": r.auc, "eer": r.eer})).collect();
    Ok(CommandOutcome::ok(report.to_csv(), json!({ "arms": rows })))
}

fn calibrate(cli: &Cli, s: &Settings, manifest: &Path) -> Result<CommandOutcome> {
    let mut keys = vec!["patch", "k_pool", "step", "negatives"];
    keys.extend(DENOISER_KEYS);
    s.allow(&keys)?;
    let c = ConsistencyConfig::default();
    let cfg = ConsistencyConfig { patch: s.get("patch", c.patch)?, k_pool: s.get("k_pool", c.k_pool)?, ..c };
    let step: f64 = s.get("step", 0.05)?;
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::InvalidParameter(format!("step {step}")));
    }
    let negatives: usize = s.get("negatives", 3)?;
    let den = denoiser(s)?;
    let m = DatasetManifest::load(manifest)?;
    let pairs: Vec<(RealImage, RealImage)> = m
        .load_images()?
        .into_iter()
        .map(|img| {
            let odd = odd_part(img)?;
            let d = wavelet_denoise(&odd, &den.cfg)?;
            Ok((odd.to_real(), d))
        })
        .collect::<Result<_>>()?;
    if pairs.len() <= negatives {
        return Err(Error::Validation(format!("calibration needs more than {negatives} images")));
    }
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for (i, (o, d)) in pairs.iter().enumerate() {
        pos.extend(patch_scores(o, d, &cfg)?.into_iter().map(|p| (p.2, p.3)));
        for j in 1..=negatives {
            let other = &pairs[(i + j) % pairs.len()].1;
            neg.extend(patch_scores(o, other, &cfg)?.into_iter().map(|p| (p.2, p.3)));
        }
    }
    let cal = calibrate_thresholds(&pos, &neg, &ThresholdGrid::uniform(step))?;
    let mut csv = String::from("c1_thld,c2_thld,error\n");
    for (i, row) in cal.surface.iter().enumerate() {
        for (j, e) in row.iter().enumerate() {
            csv.push_str(&format!("{:.4},{:.4},{:.6}\n", cal.grid.c1[i], cal.grid.c2[j], e));
        }
    }
    write(&cli.out, "calibration.csv", csv.as_bytes())?;
    let plateau = cal.plateau_fraction(2.0);
    Ok(CommandOutcome::ok(
        format!(
            "c1_thld={:.4} c2_thld={:.4} min_error={:.4} plateau={:.3} ({} positive, {} negative patches)",
            cal.c1_thld, cal.c2_thld, cal.min_error, plateau, pos.len(), neg.len()
        ),
        json!({
            "c1_thld": cal.c1_thld, "c2_thld": cal.c2_thld, "min_error": cal.min_error,
            "plateau_fraction": plateau, "positives": pos.len(), "negatives": neg.len(),
        }),
    ))
}

fn dispatch(cli: &Cli) -> Result<CommandOutcome> {
    let s = Settings::load(cli.config.as_deref())?;
    match &cli.cmd {
        Command::Simulate { cameras, photos, burst, scene } => simulate(cli, &s, *cameras, *photos, *burst, *scene),
        Command::Extract { images, denoised, binary } => extract(cli, &s, images, denoised, *binary),
        Command::Split { image } => split(cli, &s, image),
        Command::FeEnroll { images } => fe_enroll(cli, &s, images),
        Command::FeSign { photo, enrollment, denoised } => fe_sign(cli, &s, photo, enrollment, denoised),
        Command::FeVerify { even, signature, public_key } => fe_verify(&s, even, signature, public_key),
        Command::ZkpRegister { images } => zkp_register(cli, &s, images),
        Command::ZkpProve { photo, fingerprint, digest, denoised } => {
            zkp_prove(cli, &s, photo, fingerprint, digest, denoised)
        }
        Command::ZkpVerify { even, proof, digest } => zkp_verify(&s, even, proof, digest),
        Command::Bench { manifest } => bench(cli, &s, manifest),
        Command::Calibrate { manifest } => calibrate(cli, &s, manifest),
    }
}

/// Parses `args` (program name first) and runs the command without
/// printing anything.
pub fn execute<I, T>(args: I) -> CommandOutcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            return CommandOutcome { code, summary: e.render().to_string(), json: json!({"error": e.kind().to_string()}) };
        }
    };
    let mut outcome = match dispatch(&cli) {
        Ok(o) => o,
        Err(e) => CommandOutcome { code: exit_code(&e), summary: format!("error: {e}"), json: json!({"error": e.to_string()}) },
    };
    outcome.json["exit_code"] = json!(outcome.code);
    if cli.json {
        outcome.summary = serde_json::to_string_pretty(&outcome.json).expect("values serialize");
    }
    outcome
}

/// Runs the command, prints its outcome and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let outcome = execute(args);
    if outcome.code == 0 {
        println!("{}", outcome.summary.trim_end());
    } else {
        eprintln!("{}", outcome.summary.trim_end());
    }
    outcome.code
}
