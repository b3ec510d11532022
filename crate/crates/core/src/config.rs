//! Flat `key=value` pipeline configuration with dotted namespaces.
//!
//! Unknown keys are rejected. The resolved configuration is rendered back to
//! canonical text whose SHA-256 (excluding `paths.*`) tags every artifact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rodforge_nn::{Backbone, ModelConfig, Reduction};
use sha2::{Digest, Sha256};

use crate::confmap::NmsParams;
use crate::error::{CoreError, Result};
use crate::geometry::KappaTable;
use crate::signal::RadarConfig;
use crate::teacher::{TeacherConfig, TeacherMode};
use crate::types::{CameraBev, FrameRange, ObjectClass};

/// How the camera degrader perturbs ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraNoise {
    /// Multiplicative depth bias (0.05 = 5 % too far).
    pub range_bias: f64,
    /// Depth noise standard deviation, metres.
    pub range_noise: f64,
    /// Azimuth noise standard deviation, radians.
    pub azimuth_noise: f64,
    /// Probability that an object is missed.
    pub dropout: f64,
    /// Mean number of spurious detections per frame.
    pub spurious_rate: f64,
    /// Reported depth confidence.
    pub confidence: f64,
}

impl Default for CameraNoise {
    fn default() -> Self {
        Self {
            range_bias: 0.0,
            range_noise: 0.5,
            azimuth_noise: 0.02,
            dropout: 0.0,
            spurious_rate: 0.0,
            confidence: 0.9,
        }
    }
}

/// Random scene generation used when no scene file is given.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneSettings {
    pub frames: u32,
    pub min_objects: usize,
    pub max_objects: usize,
    pub min_range: f64,
    pub max_range: f64,
    /// Largest |azimuth|, radians.
    pub max_azimuth: f64,
}

impl Default for SceneSettings {
    fn default() -> Self {
        Self {
            frames: 2000,
            min_objects: 1,
            max_objects: 4,
            min_range: 5.0,
            max_range: 22.0,
            max_azimuth: 0.9,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSettings {
    pub lr: f64,
    pub epochs: usize,
    pub reduction: Reduction,
    pub snippet_stride: usize,
    pub max_steps: Option<usize>,
    pub frames: FrameRange,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            epochs: 1,
            reduction: Reduction::Sum,
            snippet_stride: 4,
            max_steps: None,
            frames: FrameRange::ALL,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InferSettings {
    pub stride: usize,
    pub nms: NmsParams,
    pub frames: FrameRange,
}

impl Default for InferSettings {
    fn default() -> Self {
        Self {
            stride: 8,
            nms: NmsParams::default(),
            frames: FrameRange::ALL,
        }
    }
}

/// Artifact locations; `None` means the default inside the output directory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Paths {
    pub scene: Option<PathBuf>,
    pub rf: Option<PathBuf>,
    pub gt: Option<PathBuf>,
    pub camera: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub detections: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub radar: RadarConfig,
    pub noise_sigma: f64,
    pub kappa: KappaTable,
    pub teacher: TeacherConfig,
    pub camera: CameraNoise,
    pub scene: SceneSettings,
    pub model: ModelConfig,
    pub train: TrainSettings,
    pub infer: InferSettings,
    pub eval_frames: FrameRange,
    /// Frames per recorded sequence; snippets never straddle sequences.
    pub sequence_length: u32,
    /// Factor applied to RF values before they enter the network.
    pub input_scale: f64,
    pub paths: Paths,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            radar: RadarConfig::desk(),
            noise_sigma: 8.0,
            kappa: KappaTable::default(),
            teacher: TeacherConfig::default(),
            camera: CameraNoise::default(),
            scene: SceneSettings::default(),
            model: ModelConfig::default(),
            train: TrainSettings::default(),
            infer: InferSettings::default(),
            eval_frames: FrameRange::ALL,
            sequence_length: 100,
            input_scale: 1.0,
            paths: Paths::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| CoreError::validation(format!("{key}: cannot parse '{v}'")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(CoreError::validation(format!("{key}: expected a boolean, got '{v}'"))),
    }
}

fn parse_triple(key: &str, v: &str) -> Result<[usize; 3]> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(CoreError::validation(format!("{key}: expected three comma-separated integers, got '{v}'")));
    }
    Ok([parse(key, parts[0])?, parse(key, parts[1])?, parse(key, parts[2])?])
}

fn parse_pair(key: &str, v: &str) -> Result<(usize, usize)> {
    let (a, b) = v
        .split_once(',')
        .ok_or_else(|| CoreError::validation(format!("{key}: expected 'range,azimuth', got '{v}'")))?;
    Ok((parse(key, a.trim())?, parse(key, b.trim())?))
}

fn class_of(key: &str, name: &str) -> Result<ObjectClass> {
    ObjectClass::ALL
        .into_iter()
        .find(|c| c.name() == name)
        .ok_or_else(|| CoreError::validation(format!("{key}: unknown class '{name}'")))
}

fn triple(v: [usize; 3]) -> String {
    format!("{},{},{}", v[0], v[1], v[2])
}

/// Parses `key=value` lines; `#` starts a comment. Duplicate keys are errors.
pub fn parse_key_values(text: &str, path: &Path) -> Result<Vec<(String, String)>> {
    let mut seen = BTreeMap::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| CoreError::Parse {
            path: path.into(),
            line: i + 1,
            msg,
        };
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected key=value, got '{line}'")))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(err("empty key".into()));
        }
        if let Some(prev) = seen.insert(k.to_string(), i + 1) {
            return Err(err(format!("duplicate key '{k}' (first set on line {prev})")));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

impl PipelineConfig {
    /// Loads a config file; relative `paths.*` resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_text(&text, path, &base)
    }

    pub fn from_text(text: &str, path: &Path, base: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        let mut range_resolution = None;
        let mut bandwidth_set = false;
        for (k, v) in parse_key_values(text, path)? {
            match k.as_str() {
                "radar.range_resolution" => range_resolution = Some(parse::<f64>(&k, &v)?),
                "radar.bandwidth" => {
                    bandwidth_set = true;
                    cfg.set(&k, &v, base)?
                }
                _ => cfg.set(&k, &v, base)?,
            }
        }
        if let Some(dr) = range_resolution {
            if !(dr.is_finite() && dr > 0.0) {
                return Err(CoreError::validation(format!("radar.range_resolution must be positive, got {dr}")));
            }
            let implied = cfg.radar.clone().with_range_resolution(dr);
            if bandwidth_set && ((implied.bandwidth - cfg.radar.bandwidth) / cfg.radar.bandwidth).abs() > 1e-9 {
                return Err(CoreError::validation(format!(
                    "radar.bandwidth {} and radar.range_resolution {dr} are inconsistent",
                    cfg.radar.bandwidth
                )));
            }
            cfg.radar = implied;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one key. Unknown keys are validation errors.
    pub fn set(&mut self, key: &str, v: &str, base: &Path) -> Result<()> {
        let k = key;
        let path = || {
            let p = PathBuf::from(v);
            Some(if p.is_absolute() { p } else { base.join(p) })
        };
        let (ns, rest) = k.split_once('.').unwrap_or((k, ""));
        match (ns, rest) {
            ("seed", "") => self.seed = parse(k, v)?,
            ("radar", "carrier_freq") => self.radar.carrier_freq = parse(k, v)?,
            ("radar", "frame_rate") => self.radar.frame_rate = parse(k, v)?,
            ("radar", "chirps_per_frame") => self.radar.chirps_per_frame = parse(k, v)?,
            ("radar", "samples_per_chirp") => self.radar.samples_per_chirp = parse(k, v)?,
            ("radar", "num_rx") => self.radar.num_rx = parse(k, v)?,
            ("radar", "rx_spacing") => self.radar.rx_spacing = parse(k, v)?,
            ("radar", "bandwidth") => self.radar.bandwidth = parse(k, v)?,
            ("radar", "range_resolution") => self.radar = self.radar.clone().with_range_resolution(parse(k, v)?),
            ("radar", "range_bins") => self.radar.range_bins = parse(k, v)?,
            ("radar", "azimuth_bins") => self.radar.azimuth_bins = parse(k, v)?,
            ("radar", "lpf_window") => self.radar.lpf_window = parse(k, v)?,
            ("radar", "noise_sigma") => self.noise_sigma = parse(k, v)?,
            ("kappa", c) => *self.kappa.get_mut(class_of(k, c)?) = parse(k, v)?,
            ("fusion", r) => {
                let f = &mut self.teacher.fusion;
                match r.split_once('.') {
                    Some(("scale", c)) => *f.scale.get_mut(class_of(k, c)?) = parse(k, v)?,
                    Some(("azimuth_std", c)) => *f.azimuth_std.get_mut(class_of(k, c)?) = parse(k, v)?,
                    _ => match r {
                        "radar_range_std" => f.radar_range_std = parse(k, v)?,
                        "radar_azimuth_std" => f.radar_azimuth_std = parse(k, v)?,
                        "threshold" => f.threshold = parse(k, v)?,
                        "camera_fallback" => f.camera_fallback = parse_bool(k, v)?,
                        _ => return Err(unknown(k)),
                    },
                }
            }
            ("cfar", "guard") => self.teacher.cfar.guard = parse_pair(k, v)?,
            ("cfar", "train") => self.teacher.cfar.train = parse_pair(k, v)?,
            ("cfar", "alpha") => self.teacher.cfar.alpha = parse(k, v)?,
            ("teacher", "mode") => self.teacher.mode = parse(k, v)?,
            ("camera", "range_bias") => self.camera.range_bias = parse(k, v)?,
            ("camera", "range_noise") => self.camera.range_noise = parse(k, v)?,
            ("camera", "azimuth_noise") => self.camera.azimuth_noise = parse(k, v)?,
            ("camera", "dropout") => self.camera.dropout = parse(k, v)?,
            ("camera", "spurious_rate") => self.camera.spurious_rate = parse(k, v)?,
            ("camera", "confidence") => self.camera.confidence = parse(k, v)?,
            ("camera", "origin_x") => self.teacher.origin.x = parse(k, v)?,
            ("camera", "origin_z") => self.teacher.origin.z = parse(k, v)?,
            ("scene", "frames") => self.scene.frames = parse(k, v)?,
            ("scene", "min_objects") => self.scene.min_objects = parse(k, v)?,
            ("scene", "max_objects") => self.scene.max_objects = parse(k, v)?,
            ("scene", "min_range") => self.scene.min_range = parse(k, v)?,
            ("scene", "max_range") => self.scene.max_range = parse(k, v)?,
            ("scene", "max_azimuth") => self.scene.max_azimuth = parse(k, v)?,
            ("model", "backbone") => self.model.backbone = parse::<Backbone>(k, v)?,
            ("model", "mnet") => self.model.use_mnet = parse_bool(k, v)?,
            ("model", "tdc") => self.model.use_tdc = parse_bool(k, v)?,
            ("model", "inception") => self.model.use_inception = parse_bool(k, v)?,
            ("model", "snippet_len") => self.model.snippet_len = parse(k, v)?,
            ("model", "chirps") => self.model.chirps = parse(k, v)?,
            ("model", "channel_div") => self.model.channel_div = parse(k, v)?,
            ("model", "stages") => self.model.stages = parse(k, v)?,
            ("model", "front_kernel") => self.model.front_kernel = parse_triple(k, v)?,
            ("model", "body_kernel") => self.model.body_kernel = parse_triple(k, v)?,
            ("model", "up_kernel") => self.model.up_kernel = parse(k, v)?,
            ("model", "inception_lengths") => self.model.inception_lengths = parse_triple(k, v)?,
            ("model", "mnet_kernel") => self.model.mnet_kernel = parse(k, v)?,
            ("model", "offset_kernel") => self.model.offset_kernel = parse_triple(k, v)?,
            ("train", "lr") => self.train.lr = parse(k, v)?,
            ("train", "epochs") => self.train.epochs = parse(k, v)?,
            ("train", "reduction") => self.train.reduction = parse(k, v)?,
            ("train", "snippet_stride") => self.train.snippet_stride = parse(k, v)?,
            ("train", "max_steps") => {
                self.train.max_steps = if v == "none" { None } else { Some(parse(k, v)?) }
            }
            ("train", "frames") => self.train.frames = parse(k, v)?,
            ("infer", "stride") => self.infer.stride = parse(k, v)?,
            ("infer", "ols_threshold") => self.infer.nms.threshold = parse(k, v)?,
            ("infer", "floor") => self.infer.nms.floor = parse(k, v)?,
            ("infer", "frames") => self.infer.frames = parse(k, v)?,
            ("eval", "frames") => self.eval_frames = parse(k, v)?,
            ("data", "sequence_length") => self.sequence_length = parse(k, v)?,
            ("data", "input_scale") => self.input_scale = parse(k, v)?,
            ("paths", "scene") => self.paths.scene = path(),
            ("paths", "rf") => self.paths.rf = path(),
            ("paths", "gt") => self.paths.gt = path(),
            ("paths", "camera") => self.paths.camera = path(),
            ("paths", "annotations") => self.paths.annotations = path(),
            ("paths", "model") => self.paths.model = path(),
            ("paths", "detections") => self.paths.detections = path(),
            _ => return Err(unknown(k)),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.radar.validate()?;
        self.kappa.validate()?;
        self.teacher.fusion.validate()?;
        self.model.validate()?;
        let fail = |m: String| Err(CoreError::Validation(m));
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return fail(format!("radar.noise_sigma must be >= 0, got {}", self.noise_sigma));
        }
        let c = &self.camera;
        for (k, v) in [("camera.dropout", c.dropout)] {
            if !(0.0..=1.0).contains(&v) {
                return fail(format!("{k} must lie in [0, 1], got {v}"));
            }
        }
        if !(c.confidence > 0.0 && c.confidence <= 1.0) {
            return fail(format!("camera.confidence must lie in (0, 1], got {}", c.confidence));
        }
        for (k, v) in [
            ("camera.range_noise", c.range_noise),
            ("camera.azimuth_noise", c.azimuth_noise),
            ("camera.spurious_rate", c.spurious_rate),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(format!("{k} must be >= 0, got {v}"));
            }
        }
        if !(c.range_bias > -1.0 && c.range_bias.is_finite()) {
            return fail(format!("camera.range_bias must exceed -1, got {}", c.range_bias));
        }
        let s = &self.scene;
        if s.min_objects > s.max_objects || !(0.0 <= s.min_range && s.min_range < s.max_range) {
            return fail("scene object counts or ranges are inverted".into());
        }
        if !(s.max_azimuth > 0.0 && s.max_azimuth < std::f64::consts::FRAC_PI_2) {
            return fail(format!("scene.max_azimuth must lie in (0, pi/2), got {}", s.max_azimuth));
        }
        if self.model.chirps > self.radar.chirps_per_frame {
            return fail(format!(
                "model.chirps ({}) exceeds radar.chirps_per_frame ({})",
                self.model.chirps, self.radar.chirps_per_frame
            ));
        }
        let m = self.model.spatial_multiple();
        if self.radar.range_bins % m != 0 || self.radar.azimuth_bins % m != 0 {
            return fail(format!(
                "the {}x{} grid must be divisible by {m} for a {}-stage model",
                self.radar.range_bins, self.radar.azimuth_bins, self.model.stages
            ));
        }
        if self.train.snippet_stride == 0 || self.infer.stride == 0 {
            return fail("train.snippet_stride and infer.stride must be positive".into());
        }
        if self.infer.stride > self.model.snippet_len {
            return fail(format!(
                "infer.stride ({}) larger than the snippet length ({}) would skip frames",
                self.infer.stride, self.model.snippet_len
            ));
        }
        if !(self.train.lr.is_finite() && self.train.lr >= 0.0) {
            return fail(format!("train.lr must be >= 0, got {}", self.train.lr));
        }
        let n = &self.infer.nms;
        if !(0.0..=1.0).contains(&n.threshold) || !(0.0..=1.0).contains(&n.floor) {
            return fail("infer.ols_threshold and infer.floor must lie in [0, 1]".into());
        }
        if (self.sequence_length as usize) < self.model.snippet_len {
            return fail(format!(
                "data.sequence_length ({}) is shorter than model.snippet_len ({})",
                self.sequence_length, self.model.snippet_len
            ));
        }
        if !(self.input_scale.is_finite() && self.input_scale > 0.0) {
            return fail(format!("data.input_scale must be positive, got {}", self.input_scale));
        }
        Ok(())
    }

    /// Model configuration with its initialization seed tied to `seed`.
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            seed: self.seed,
            ..self.model.clone()
        }
    }

    /// Canonical `key=value` text of every setting except paths.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        let r = &self.radar;
        kv("seed", self.seed.to_string());
        kv("radar.carrier_freq", r.carrier_freq.to_string());
        kv("radar.frame_rate", r.frame_rate.to_string());
        kv("radar.chirps_per_frame", r.chirps_per_frame.to_string());
        kv("radar.samples_per_chirp", r.samples_per_chirp.to_string());
        kv("radar.num_rx", r.num_rx.to_string());
        kv("radar.rx_spacing", r.rx_spacing.to_string());
        kv("radar.bandwidth", r.bandwidth.to_string());
        kv("radar.range_bins", r.range_bins.to_string());
        kv("radar.azimuth_bins", r.azimuth_bins.to_string());
        kv("radar.lpf_window", r.lpf_window.to_string());
        kv("radar.noise_sigma", self.noise_sigma.to_string());
        for c in ObjectClass::ALL {
            kv(&format!("kappa.{c}"), self.kappa.get(c).to_string());
        }
        let f = &self.teacher.fusion;
        for c in ObjectClass::ALL {
            kv(&format!("fusion.scale.{c}"), f.scale.get(c).to_string());
            kv(&format!("fusion.azimuth_std.{c}"), f.azimuth_std.get(c).to_string());
        }
        kv("fusion.radar_range_std", f.radar_range_std.to_string());
        kv("fusion.radar_azimuth_std", f.radar_azimuth_std.to_string());
        kv("fusion.threshold", f.threshold.to_string());
        kv("fusion.camera_fallback", f.camera_fallback.to_string());
        let cf = &self.teacher.cfar;
        kv("cfar.guard", format!("{},{}", cf.guard.0, cf.guard.1));
        kv("cfar.train", format!("{},{}", cf.train.0, cf.train.1));
        kv("cfar.alpha", cf.alpha.to_string());
        kv("teacher.mode", self.teacher.mode.to_string());
        let c = &self.camera;
        kv("camera.range_bias", c.range_bias.to_string());
        kv("camera.range_noise", c.range_noise.to_string());
        kv("camera.azimuth_noise", c.azimuth_noise.to_string());
        kv("camera.dropout", c.dropout.to_string());
        kv("camera.spurious_rate", c.spurious_rate.to_string());
        kv("camera.confidence", c.confidence.to_string());
        kv("camera.origin_x", self.teacher.origin.x.to_string());
        kv("camera.origin_z", self.teacher.origin.z.to_string());
        let sc = &self.scene;
        kv("scene.frames", sc.frames.to_string());
        kv("scene.min_objects", sc.min_objects.to_string());
        kv("scene.max_objects", sc.max_objects.to_string());
        kv("scene.min_range", sc.min_range.to_string());
        kv("scene.max_range", sc.max_range.to_string());
        kv("scene.max_azimuth", sc.max_azimuth.to_string());
        let m = &self.model;
        kv("model.backbone", m.backbone.to_string());
        kv("model.mnet", m.use_mnet.to_string());
        kv("model.tdc", m.use_tdc.to_string());
        kv("model.inception", m.use_inception.to_string());
        kv("model.snippet_len", m.snippet_len.to_string());
        kv("model.chirps", m.chirps.to_string());
        kv("model.channel_div", m.channel_div.to_string());
        kv("model.stages", m.stages.to_string());
        kv("model.front_kernel", triple(m.front_kernel));
        kv("model.body_kernel", triple(m.body_kernel));
        kv("model.up_kernel", m.up_kernel.to_string());
        kv("model.inception_lengths", triple(m.inception_lengths));
        kv("model.mnet_kernel", m.mnet_kernel.to_string());
        kv("model.offset_kernel", triple(m.offset_kernel));
        let t = &self.train;
        kv("train.lr", t.lr.to_string());
        kv("train.epochs", t.epochs.to_string());
        kv("train.reduction", t.reduction.to_string());
        kv("train.snippet_stride", t.snippet_stride.to_string());
        kv("train.max_steps", t.max_steps.map_or("none".into(), |v| v.to_string()));
        kv("train.frames", t.frames.to_string());
        kv("infer.stride", self.infer.stride.to_string());
        kv("infer.ols_threshold", self.infer.nms.threshold.to_string());
        kv("infer.floor", self.infer.nms.floor.to_string());
        kv("infer.frames", self.infer.frames.to_string());
        kv("eval.frames", self.eval_frames.to_string());
        kv("data.sequence_length", self.sequence_length.to_string());
        kv("data.input_scale", self.input_scale.to_string());
        s
    }

    /// Hex SHA-256 of [`Self::canonical`].
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    /// Canonical text plus the resolved paths, for the run log.
    pub fn resolved(&self, out: &Path) -> String {
        let mut s = format!("# config-hash: {}\n", self.hash());
        s.push_str(&self.canonical());
        let l = self.layout(out);
        for (k, p) in [
            ("paths.scene", l.scene),
            ("paths.rf", l.rf),
            ("paths.gt", l.gt),
            ("paths.camera", l.camera),
            ("paths.annotations", l.annotations),
            ("paths.model", l.model),
            ("paths.detections", l.detections),
        ] {
            let _ = writeln!(s, "{k}={}", p.display());
        }
        s
    }

    /// Effective artifact paths for output directory `out`.
    pub fn layout(&self, out: &Path) -> Layout {
        let p = &self.paths;
        let or = |o: &Option<PathBuf>, d: &str| o.clone().unwrap_or_else(|| out.join(d));
        Layout {
            scene: or(&p.scene, "scene.txt"),
            rf: or(&p.rf, "rf"),
            gt: or(&p.gt, "gt.txt"),
            camera: or(&p.camera, "camera.txt"),
            annotations: or(&p.annotations, "annotations.txt"),
            model: or(&p.model, "model.rodw"),
            detections: or(&p.detections, "detections.txt"),
        }
    }

    pub fn teacher_mode(&self) -> TeacherMode {
        self.teacher.mode
    }

    pub fn origin(&self) -> CameraBev {
        self.teacher.origin
    }
}

fn unknown(k: &str) -> CoreError {
    CoreError::validation(format!("unknown configuration key '{k}'"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub scene: PathBuf,
    pub rf: PathBuf,
    pub gt: PathBuf,
    pub camera: PathBuf,
    pub annotations: PathBuf,
    pub model: PathBuf,
    pub detections: PathBuf,
}
