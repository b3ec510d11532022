//! Synthetic scenes and the camera degrader that turns ground truth into
//! noisy camera detections.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::config::{CameraNoise, SceneSettings};
use crate::geometry::Grid;
use crate::signal::SceneObject;
use crate::teacher::CameraDetection;
use crate::types::{CameraBev, ObjectClass, ObjectRecord, RangeAzimuth, Source};

/// Independent random streams derived from one seed.
pub mod stream {
    pub const SCENE: u64 = 1;
    pub const CAMERA: u64 = 2;
    pub const TRAIN: u64 = 3;
    /// Per-frame radar noise uses `NOISE + frame_id`.
    pub const NOISE: u64 = 1 << 32;
}

pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Echo strength, spatial spread (m) and top speed (m/s) of each class.
pub fn class_signature(class: ObjectClass) -> (f64, f64, f64) {
    match class {
        ObjectClass::Pedestrian => (1.0, 0.2, 1.0),
        ObjectClass::Cyclist => (2.0, 0.4, 2.0),
        ObjectClass::Car => (4.0, 0.8, 3.0),
    }
}

/// Smallest azimuth gap between objects of one sequence.
const MIN_AZIMUTH_GAP: f64 = 0.2;

/// Sequences of `sequence_length` frames; each sequence holds a fixed set of
/// objects moving radially, bouncing between the range limits.
pub fn generate_scene(s: &SceneSettings, sequence_length: u32, frame_rate: f64, seed: u64) -> Vec<(u32, SceneObject)> {
    let mut rng = rng(seed, stream::SCENE);
    let mut out = Vec::new();
    let mut start = 0u32;
    while start < s.frames {
        let len = sequence_length.min(s.frames - start);
        let count = rng.random_range(s.min_objects..=s.max_objects);
        let mut azimuths: Vec<f64> = Vec::new();
        let mut objects = Vec::new();
        let mut attempts = 0;
        while objects.len() < count && attempts < 1000 {
            attempts += 1;
            let az = rng.random_range(-s.max_azimuth..=s.max_azimuth);
            if azimuths.iter().any(|a| (a - az).abs() < MIN_AZIMUTH_GAP) {
                continue;
            }
            let class = ObjectClass::ALL[rng.random_range(0..3)];
            let (rcs, extent, vmax) = class_signature(class);
            let r0 = rng.random_range(s.min_range..=s.max_range);
            let v = rng.random_range(-vmax..=vmax);
            azimuths.push(az);
            objects.push((class, rcs, extent, r0, v, az));
        }
        for k in 0..len {
            let t = k as f64 / frame_rate;
            for &(class, rcs, extent, r0, v, az) in &objects {
                let (range, vel) = bounce(r0 + v * t, v, s.min_range, s.max_range);
                out.push((
                    start + k,
                    SceneObject {
                        class,
                        range,
                        azimuth: az,
                        radial_velocity: vel,
                        rcs,
                        extent,
                    },
                ));
            }
        }
        start += len;
    }
    out
}

/// Folds an unbounded path back into `[lo, hi]`, flipping the velocity on
/// each reflection.
fn bounce(x: f64, v: f64, lo: f64, hi: f64) -> (f64, f64) {
    let span = hi - lo;
    if span <= 0.0 {
        return (lo, 0.0);
    }
    let u = (x - lo).rem_euclid(2.0 * span);
    if u <= span {
        (lo + u, v)
    } else {
        (hi - (u - span), -v)
    }
}

/// Ground-truth records for scene objects that land on the grid.
pub fn ground_truth(scene: &[(u32, SceneObject)], grid: &Grid) -> Vec<ObjectRecord> {
    scene
        .iter()
        .filter(|(_, o)| grid.map(o.location()).is_ok())
        .map(|&(f, o)| ObjectRecord {
            frame_id: f,
            class: o.class,
            location: o.location(),
            confidence: 1.0,
            source: Source::Human,
        })
        .collect()
}

/// Camera BEV position of a radar-polar location.
pub fn to_camera(ra: RangeAzimuth, origin: CameraBev) -> CameraBev {
    let (x, z) = ra.to_xz();
    CameraBev {
        x: x + origin.x,
        z: z + origin.z,
    }
}

/// Perturbs ground truth into camera detections: biased, noisy depth along
/// the line of sight, noisy azimuth, random misses and spurious detections.
pub fn degrade_camera(
    gt: &[ObjectRecord],
    frames: &[u32],
    noise: &CameraNoise,
    origin: CameraBev,
    scene: &SceneSettings,
    seed: u64,
) -> Vec<CameraDetection> {
    let mut rng = rng(seed, stream::CAMERA);
    let depth_noise = Normal::new(0.0, noise.range_noise).expect("validated noise");
    let az_noise = Normal::new(0.0, noise.azimuth_noise).expect("validated noise");
    let spurious = (noise.spurious_rate > 0.0).then(|| Poisson::new(noise.spurious_rate).expect("validated rate"));
    let mut out = Vec::new();
    let mut gt_sorted: Vec<&ObjectRecord> = gt.iter().collect();
    gt_sorted.sort_by_key(|r| r.frame_id);
    let mut i = 0;
    for &f in frames {
        while i < gt_sorted.len() && gt_sorted[i].frame_id < f {
            i += 1;
        }
        while i < gt_sorted.len() && gt_sorted[i].frame_id == f {
            let g = gt_sorted[i];
            i += 1;
            let miss = rng.random::<f64>() < noise.dropout;
            let dr = depth_noise.sample(&mut rng);
            let da = az_noise.sample(&mut rng);
            if miss {
                continue;
            }
            let depth = (g.location.range * (1.0 + noise.range_bias) + dr).max(0.1);
            let ra = RangeAzimuth::new(depth, g.location.azimuth + da);
            out.push(CameraDetection {
                frame_id: f,
                class: g.class,
                bev: to_camera(ra, origin),
                depth,
                depth_conf: noise.confidence,
            });
        }
        if let Some(p) = &spurious {
            let n = p.sample(&mut rng) as usize;
            for _ in 0..n {
                let depth = rng.random_range(scene.min_range..=scene.max_range);
                let ra = RangeAzimuth::new(depth, rng.random_range(-scene.max_azimuth..=scene.max_azimuth));
                out.push(CameraDetection {
                    frame_id: f,
                    class: ObjectClass::ALL[rng.random_range(0..3)],
                    bev: to_camera(ra, origin),
                    depth,
                    depth_conf: noise.confidence,
                });
            }
        }
    }
    out
}
