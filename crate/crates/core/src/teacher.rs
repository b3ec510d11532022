//! Camera-radar fusion labelling: CA-CFAR on the RF magnitude, per-class
//! camera probability maps, a classless radar probability map, and peaks of
//! their product.

use crate::error::{CoreError, Result};
use crate::geometry::{cam_to_range_azimuth, local_maxima, Grid};
use crate::types::{CameraBev, ObjectClass, ObjectRecord, PerClass, RangeAzimuth, Source};

/// Steepest off-boresight angle used in the radar azimuth spread.
const MAX_BEAM_ANGLE: f64 = 80.0 * std::f64::consts::PI / 180.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CfarParams {
    /// Guard half-widths (range, azimuth).
    pub guard: (usize, usize),
    /// Training band widths beyond the guard (range, azimuth).
    pub train: (usize, usize),
    pub alpha: f64,
}

impl Default for CfarParams {
    fn default() -> Self {
        Self {
            guard: (2, 2),
            train: (4, 4),
            alpha: 2.0,
        }
    }
}

/// A classless radar reflection found by CFAR.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadarPeak {
    pub row: usize,
    pub col: usize,
    pub location: RangeAzimuth,
    pub magnitude: f64,
}

/// Cell-averaging CFAR: a cell is flagged when it exceeds `alpha` times the
/// mean of its training cells (the window clipped at the grid border, minus
/// the guard box); flagged cells that are 3×3 local maxima are returned.
pub fn ca_cfar_2d(mag: &[f64], h: usize, w: usize, p: &CfarParams) -> Result<Vec<(usize, usize)>> {
    if mag.len() != h * w {
        return Err(CoreError::validation(format!(
            "magnitude grid has {} cells, expected {h}x{w}",
            mag.len()
        )));
    }
    let (or, oa) = (p.guard.0 + p.train.0, p.guard.1 + p.train.1);
    if 2 * or + 1 > h || 2 * oa + 1 > w {
        return Err(CoreError::validation(format!(
            "CFAR window {}x{} is larger than the {h}x{w} grid",
            2 * or + 1,
            2 * oa + 1
        )));
    }
    if p.train == (0, 0) {
        return Err(CoreError::validation("CFAR training band is empty"));
    }
    if !(p.alpha.is_finite() && p.alpha > 0.0) {
        return Err(CoreError::validation(format!("cfar.alpha must be positive, got {}", p.alpha)));
    }
    let mut flagged = vec![false; h * w];
    for r in 0..h {
        let (r0, r1) = (r.saturating_sub(or), (r + or).min(h - 1));
        for c in 0..w {
            let (c0, c1) = (c.saturating_sub(oa), (c + oa).min(w - 1));
            let mut sum = 0.0;
            let mut n = 0usize;
            for rr in r0..=r1 {
                let in_guard_rows = rr.abs_diff(r) <= p.guard.0;
                for cc in c0..=c1 {
                    if in_guard_rows && cc.abs_diff(c) <= p.guard.1 {
                        continue;
                    }
                    sum += mag[rr * w + cc];
                    n += 1;
                }
            }
            flagged[r * w + c] = n > 0 && mag[r * w + c] > p.alpha * (sum / n as f64);
        }
    }
    Ok(local_maxima(mag, h, w, f64::NEG_INFINITY)
        .into_iter()
        .filter(|&(r, c)| flagged[r * w + c])
        .collect())
}

/// CFAR peaks of a magnitude grid with their bin-centre locations.
pub fn detect_peaks(mag: &[f64], grid: &Grid, p: &CfarParams) -> Result<Vec<RadarPeak>> {
    Ok(ca_cfar_2d(mag, grid.range_bins, grid.azimuth_bins, p)?
        .into_iter()
        .map(|(row, col)| RadarPeak {
            row,
            col,
            location: grid.unmap(row, col),
            magnitude: mag[row * grid.azimuth_bins + col],
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraDetection {
    pub frame_id: u32,
    pub class: ObjectClass,
    pub bev: CameraBev,
    /// Estimated depth in metres.
    pub depth: f64,
    /// Depth confidence in (0, 1].
    pub depth_conf: f64,
}

impl CameraDetection {
    pub fn validate(&self) -> Result<()> {
        if !(self.depth > 0.0 && self.depth.is_finite()) {
            return Err(CoreError::validation(format!(
                "frame {}: camera depth must be positive, got {}",
                self.frame_id, self.depth
            )));
        }
        if !(self.depth_conf > 0.0 && self.depth_conf <= 1.0) {
            return Err(CoreError::validation(format!(
                "frame {}: depth confidence must lie in (0, 1], got {}",
                self.frame_id, self.depth_conf
            )));
        }
        if !(self.bev.x.is_finite() && self.bev.z.is_finite()) {
            return Err(CoreError::validation(format!("frame {}: non-finite camera position", self.frame_id)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusionParams {
    /// Camera range spread per metre of depth.
    pub scale: PerClass<f64>,
    /// Camera azimuth standard deviation, radians.
    pub azimuth_std: PerClass<f64>,
    /// Radar range standard deviation, metres.
    pub radar_range_std: f64,
    /// Radar azimuth standard deviation at boresight, radians.
    pub radar_azimuth_std: f64,
    pub threshold: f64,
    /// Emit camera-only labels where the radar gives no support.
    pub camera_fallback: bool,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            scale: PerClass([0.08, 0.08, 0.08]),
            azimuth_std: PerClass([0.05, 0.05, 0.05]),
            radar_range_std: 0.23,
            radar_azimuth_std: 0.13,
            threshold: 0.1,
            camera_fallback: false,
        }
    }
}

impl FusionParams {
    pub fn validate(&self) -> Result<()> {
        let mut vals = vec![
            ("fusion.radar_range_std", self.radar_range_std),
            ("fusion.radar_azimuth_std", self.radar_azimuth_std),
        ];
        for c in ObjectClass::ALL {
            vals.push(("fusion.scale", self.scale.get(c)));
            vals.push(("fusion.azimuth_std", self.azimuth_std.get(c)));
        }
        for (k, v) in vals {
            if !(v.is_finite() && v > 0.0) {
                return Err(CoreError::validation(format!("{k} must be positive, got {v}")));
            }
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(CoreError::validation(format!(
                "fusion.threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// Likelihood surface over the range-azimuth grid, values in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityMap {
    pub range_bins: usize,
    pub azimuth_bins: usize,
    pub data: Vec<f64>,
}

impl ProbabilityMap {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            range_bins: grid.range_bins,
            azimuth_bins: grid.azimuth_bins,
            data: vec![0.0; grid.cells()],
        }
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.azimuth_bins + c]
    }

    /// Pixelwise max with a unit-peak separable Gaussian in (range, azimuth).
    fn max_gaussian(&mut self, grid: &Grid, mean: RangeAzimuth, range_std: f64, azimuth_std: f64) {
        let rows: Vec<f64> = (0..grid.range_bins)
            .map(|r| {
                let d = grid.row_range(r) - mean.range;
                (-d * d / (2.0 * range_std * range_std)).exp()
            })
            .collect();
        let cols: Vec<f64> = (0..grid.azimuth_bins)
            .map(|c| {
                let d = grid.unmap(0, c).azimuth - mean.azimuth;
                (-d * d / (2.0 * azimuth_std * azimuth_std)).exp()
            })
            .collect();
        let peak = rows.iter().cloned().fold(0.0, f64::max) * cols.iter().cloned().fold(0.0, f64::max);
        if !(peak > 0.0) {
            return;
        }
        for (r, gr) in rows.iter().enumerate() {
            if *gr == 0.0 {
                continue;
            }
            for (c, gc) in cols.iter().enumerate() {
                let v = gr * gc / peak;
                let slot = &mut self.data[r * grid.azimuth_bins + c];
                if v > *slot {
                    *slot = v;
                }
            }
        }
    }

    pub fn product(&self, other: &ProbabilityMap) -> ProbabilityMap {
        ProbabilityMap {
            range_bins: self.range_bins,
            azimuth_bins: self.azimuth_bins,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect(),
        }
    }
}

/// Camera detections placed on the radar grid.
#[derive(Clone, Debug)]
pub struct CameraMaps {
    pub maps: PerClass<ProbabilityMap>,
    /// Detections with their polar locations, for those inside the grid.
    pub located: Vec<(CameraDetection, RangeAzimuth)>,
    /// Detections behind the radar or outside the grid.
    pub dropped: usize,
}

pub fn camera_prob_map(dets: &[CameraDetection], params: &FusionParams, grid: &Grid, origin: CameraBev) -> CameraMaps {
    let mut maps = PerClass([ProbabilityMap::zeros(grid), ProbabilityMap::zeros(grid), ProbabilityMap::zeros(grid)]);
    let mut located = Vec::new();
    let mut dropped = 0;
    for d in dets {
        let ra = match cam_to_range_azimuth(d.bev, origin) {
            Ok(ra) if grid.map(ra).is_ok() => ra,
            _ => {
                dropped += 1;
                continue;
            }
        };
        let range_std = d.depth * params.scale.get(d.class) / d.depth_conf;
        maps.0[d.class.index()].max_gaussian(grid, ra, range_std, params.azimuth_std.get(d.class));
        located.push((*d, ra));
    }
    CameraMaps { maps, located, dropped }
}

/// Azimuth spread of a radar peak, widening off boresight as `1 / cos θ`.
pub fn radar_azimuth_std(eps0: f64, azimuth: f64) -> f64 {
    eps0 / azimuth.abs().min(MAX_BEAM_ANGLE).cos()
}

pub fn radar_prob_map(peaks: &[RadarPeak], params: &FusionParams, grid: &Grid) -> ProbabilityMap {
    let mut map = ProbabilityMap::zeros(grid);
    for p in peaks {
        map.max_gaussian(
            grid,
            p.location,
            params.radar_range_std,
            radar_azimuth_std(params.radar_azimuth_std, p.location.azimuth),
        );
    }
    map
}

/// Peaks of the per-class product maps at or above `threshold`.
pub fn crf_fuse_and_annotate(
    frame_id: u32,
    cam: &PerClass<ProbabilityMap>,
    rad: &ProbabilityMap,
    threshold: f64,
    grid: &Grid,
) -> Vec<ObjectRecord> {
    let mut out = Vec::new();
    for class in ObjectClass::ALL {
        let fused = cam.get_ref(class).product(rad);
        for (r, c) in local_maxima(&fused.data, grid.range_bins, grid.azimuth_bins, threshold) {
            out.push(ObjectRecord {
                frame_id,
                class,
                location: grid.unmap(r, c),
                confidence: fused.at(r, c),
                source: Source::Crf,
            });
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TeacherMode {
    /// Camera-radar fusion.
    #[default]
    Crf,
    /// Camera locations only.
    CameraOnly,
}

impl std::str::FromStr for TeacherMode {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "crf" => Ok(Self::Crf),
            "co" => Ok(Self::CameraOnly),
            _ => Err(CoreError::validation(format!("teacher.mode must be crf or co, got '{s}'"))),
        }
    }
}

impl std::fmt::Display for TeacherMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Crf => "crf",
            Self::CameraOnly => "co",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TeacherConfig {
    pub mode: TeacherMode,
    pub cfar: CfarParams,
    pub fusion: FusionParams,
    /// Radar origin in camera BEV coordinates.
    pub origin: CameraBev,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            mode: TeacherMode::Crf,
            cfar: CfarParams::default(),
            fusion: FusionParams::default(),
            origin: CameraBev { x: 0.0, z: 0.0 },
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct FrameLabels {
    pub records: Vec<ObjectRecord>,
    pub radar_peaks: usize,
    pub dropped_camera: usize,
}

/// Labels of one frame from its RF magnitude and camera detections.
pub fn annotate_frame(
    frame_id: u32,
    mag: &[f64],
    cams: &[CameraDetection],
    cfg: &TeacherConfig,
    grid: &Grid,
) -> Result<FrameLabels> {
    let camera = camera_prob_map(cams, &cfg.fusion, grid, cfg.origin);
    let camera_only = |d: &CameraDetection, ra: RangeAzimuth| ObjectRecord {
        frame_id,
        class: d.class,
        location: ra,
        confidence: d.depth_conf,
        source: Source::CameraOnly,
    };
    if cfg.mode == TeacherMode::CameraOnly {
        return Ok(FrameLabels {
            records: camera.located.iter().map(|(d, ra)| camera_only(d, *ra)).collect(),
            radar_peaks: 0,
            dropped_camera: camera.dropped,
        });
    }
    let peaks = detect_peaks(mag, grid, &cfg.cfar)?;
    let radar = radar_prob_map(&peaks, &cfg.fusion, grid);
    let mut records = crf_fuse_and_annotate(frame_id, &camera.maps, &radar, cfg.fusion.threshold, grid);
    if cfg.fusion.camera_fallback {
        for (d, ra) in &camera.located {
            let (r, c) = grid.map(*ra).expect("located detections are on the grid");
            if radar.at(r, c) * camera.maps.get_ref(d.class).at(r, c) < cfg.fusion.threshold {
                records.push(camera_only(d, *ra));
            }
        }
    }
    Ok(FrameLabels {
        records,
        radar_peaks: peaks.len(),
        dropped_camera: camera.dropped,
    })
}
