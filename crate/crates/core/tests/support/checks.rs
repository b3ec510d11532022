//! Randomised checks shared by the focused test files and the acceptance run.
//! Each function draws its fixtures from a seed and reports what it measured;
//! the callers decide the tolerance.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rodforge_core::confmap::{l_nms, NmsParams};
use rodforge_core::eval::match_detections;
use rodforge_core::fixture::{degrade_camera, generate_scene, ground_truth};
use rodforge_core::geometry::{Grid, KappaTable};
use rodforge_core::pipeline::simulate_rf;
use rodforge_core::signal::{simulate_frame, RadarConfig, RfProcessor, SceneObject};
use rodforge_core::teacher::{annotate_frame, ca_cfar_2d, CameraDetection, CfarParams};
use rodforge_core::{ObjectClass, ObjectRecord, PipelineConfig, RangeAzimuth, Source};
use rodforge_oracles as oracle;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Bin-centre polar location computed from first principles.
pub fn cell_location(cfg: &RadarConfig, row: usize, col: usize) -> RangeAzimuth {
    let dr = 299_792_458.0 / (2.0 * cfg.bandwidth);
    let w = cfg.azimuth_bins as f64;
    let u = (col as f64 - (cfg.azimuth_bins / 2) as f64) / (w * cfg.rx_spacing);
    RangeAzimuth::new(row as f64 * dr, u.clamp(-1.0, 1.0).asin())
}

/// BEV distance by the law of cosines.
pub fn polar_distance(a: RangeAzimuth, b: RangeAzimuth) -> f64 {
    let d2 = a.range * a.range + b.range * b.range - 2.0 * a.range * b.range * (a.azimuth - b.azimuth).cos();
    d2.max(0.0).sqrt()
}

pub fn similarity(a: RangeAzimuth, reference: RangeAzimuth, kappa: f64) -> f64 {
    let s = reference.range * kappa;
    let d = polar_distance(a, reference);
    if s == 0.0 {
        return if d == 0.0 { 1.0 } else { 0.0 };
    }
    (-d * d / (2.0 * s * s)).exp()
}

fn point_target(range: f64, azimuth: f64, rcs: f64) -> SceneObject {
    SceneObject {
        class: ObjectClass::Car,
        range,
        azimuth,
        radial_velocity: 0.0,
        rcs,
        extent: 0.05,
    }
}

fn mean_magnitude(cfg: &RadarConfig, scene: &[SceneObject], noise: f64, seed: u64) -> Vec<f64> {
    let raw = simulate_frame(scene, cfg, noise, seed).unwrap().raw;
    let chirps: Vec<usize> = (0..8).map(|i| i * cfg.chirps_per_frame / 8).collect();
    let imgs = RfProcessor::new(cfg).unwrap().process(&raw, &chirps).unwrap();
    let mut mag = vec![0.0; cfg.range_bins * cfg.azimuth_bins];
    for img in &imgs {
        for (m, v) in mag.iter_mut().zip(img.magnitude()) {
            *m += v / imgs.len() as f64;
        }
    }
    mag
}

/// Worst `(row, col)` distance between the RF-image argmax and the analytic
/// cell of a single noiseless point target, over `scenes` random scenes.
pub fn signal_argmax(cfg: &RadarConfig, scenes: usize, seed: u64) -> (f64, f64) {
    let mut rng = rng(seed);
    let dr = 299_792_458.0 / (2.0 * cfg.bandwidth);
    let max_range = (cfg.range_bins as f64 - 2.0) * dr;
    let (mut worst_r, mut worst_c) = (0.0f64, 0.0f64);
    for _ in 0..scenes {
        let range = rng.random_range(2.0 * dr..max_range);
        let azimuth = rng.random_range(-1.0f64..1.0);
        let rcs = rng.random_range(0.5..5.0);
        let mag = mean_magnitude(cfg, &[point_target(range, azimuth, rcs)], 0.0, 0);
        let (best, _) = mag
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
        let (r, c) = (best / cfg.azimuth_bins, best % cfg.azimuth_bins);
        let want_r = range / dr;
        let want_c = (cfg.azimuth_bins / 2) as f64 + azimuth.sin() * cfg.azimuth_bins as f64 * cfg.rx_spacing;
        worst_r = worst_r.max((r as f64 - want_r).abs());
        worst_c = worst_c.max((c as f64 - want_c).abs());
    }
    (worst_r, worst_c)
}

/// Largest deviation from superposition and scaling, relative to the peak
/// magnitude, over `trials` random pairs of multi-target scenes.
pub fn signal_linearity(cfg: &RadarConfig, trials: usize, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let proc = RfProcessor::new(cfg).unwrap();
    let chirps = [0, cfg.chirps_per_frame / 2];
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let scene = |rng: &mut ChaCha8Rng| -> Vec<SceneObject> {
            (0..rng.random_range(1..4))
                .map(|_| SceneObject {
                    class: ObjectClass::ALL[rng.random_range(0..3)],
                    range: rng.random_range(1.0..20.0),
                    azimuth: rng.random_range(-1.2..1.2),
                    radial_velocity: rng.random_range(-3.0..3.0),
                    rcs: rng.random_range(0.5..4.0),
                    extent: rng.random_range(0.05..0.8),
                })
                .collect()
        };
        let a = scene(&mut rng);
        let b = scene(&mut rng);
        let k = rng.random_range(0.2..3.0);
        let scaled: Vec<SceneObject> = a.iter().map(|o| SceneObject { rcs: o.rcs * k, ..*o }).collect();
        let both: Vec<SceneObject> = a.iter().chain(&b).copied().collect();
        let img = |s: &[SceneObject]| proc.process(&simulate_frame(s, cfg, 0.0, 0).unwrap().raw, &chirps).unwrap();
        let (ia, ib, iab, ik) = (img(&a), img(&b), img(&both), img(&scaled));
        for ch in 0..chirps.len() {
            let peak = iab[ch].magnitude().into_iter().fold(0.0f64, f64::max).max(1e-12);
            for i in 0..iab[ch].data.len() {
                let sum = ia[ch].data[i] + ib[ch].data[i];
                worst = worst.max((iab[ch].data[i] - sum).norm() / peak);
                worst = worst.max((ik[ch].data[i] - ia[ch].data[i] * k).norm() / (peak * k));
            }
        }
    }
    worst
}

/// Random magnitude grid: noise floor plus a few bumps, with occasional
/// plateaus to exercise ties.
fn random_magnitude(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..h * w).map(|_| rng.random_range(0.0..1.0)).collect();
    if rng.random_bool(0.3) {
        for x in &mut v {
            *x = (*x * 4.0).round();
        }
    }
    for _ in 0..rng.random_range(0..5) {
        let (r0, c0, a) = (rng.random_range(0..h), rng.random_range(0..w), rng.random_range(2.0..20.0));
        for r in 0..h {
            for c in 0..w {
                let d2 = (r as f64 - r0 as f64).powi(2) + (c as f64 - c0 as f64).powi(2);
                v[r * w + c] += a * (-d2 / 2.0).exp();
            }
        }
    }
    v
}

/// Number of random grids (out of `trials`) on which the CFAR detector and
/// the per-cell brute force disagree.
pub fn cfar_mismatches(trials: usize, seed: u64) -> usize {
    let mut rng = rng(seed);
    let mut bad = 0;
    for _ in 0..trials {
        let guard = (rng.random_range(0..3), rng.random_range(0..3));
        let train = (rng.random_range(1..4), rng.random_range(1..4));
        let h = rng.random_range(2 * (guard.0 + train.0) + 1..=32);
        let w = rng.random_range(2 * (guard.1 + train.1) + 1..=32);
        let alpha = rng.random_range(1.0..4.0);
        let mag = random_magnitude(&mut rng, h, w);
        let got = ca_cfar_2d(&mag, h, w, &CfarParams { guard, train, alpha }).unwrap();
        let want = oracle::ca_cfar(&mag, h, w, guard, train, alpha);
        bad += (got != want) as usize;
    }
    bad
}

/// Number of random ≤ 6-peak slices on which L-NMS and the exhaustive
/// suppression oracle disagree (same detections in the same order).
pub fn lnms_mismatches(trials: usize, seed: u64) -> usize {
    let mut rng = rng(seed);
    let cfg = RadarConfig::desk();
    let grid = Grid::new(&cfg);
    let (h, w) = (grid.range_bins, grid.azimuth_bins);
    let mut bad = 0;
    for _ in 0..trials {
        let kappa = KappaTable::default();
        let mut slice = vec![0.0f64; 3 * h * w];
        for _ in 0..rng.random_range(1..=6) {
            let k = rng.random_range(0..3);
            let (r0, c0) = (rng.random_range(0..h) as f64, rng.random_range(0..w) as f64);
            let (amp, s) = (rng.random_range(0.1..1.0), rng.random_range(0.6..2.5));
            for r in 0..h {
                for c in 0..w {
                    let d2 = (r as f64 - r0).powi(2) + (c as f64 - c0).powi(2);
                    let v = amp * (-d2 / (2.0 * s * s)).exp();
                    let slot = &mut slice[(k * h + r) * w + c];
                    *slot = slot.max(v);
                }
            }
        }
        let params = NmsParams {
            threshold: rng.random_range(0.1..0.6),
            floor: 0.05,
        };
        let got: Vec<(usize, usize, usize)> = l_nms(&slice, &kappa, &grid, &params, 0)
            .iter()
            .map(|d| {
                let (r, c) = grid.map(d.location).unwrap();
                (d.class.index(), r, c)
            })
            .collect();
        let want = oracle::lnms(&slice, 3, h, w, params.floor, params.threshold, |best, p| {
            let kb = kappa.get(ObjectClass::from_index(best.0).unwrap());
            similarity(cell_location(&cfg, p.1, p.2), cell_location(&cfg, best.1, best.2), kb)
        });
        bad += (got != want) as usize;
    }
    bad
}

/// Matching fixtures of up to 5 detections × 5 ground truths over two
/// frames. Returns the number of fixtures where the matcher differs from the
/// brute-force lexicographic assignment, and the number where its true
/// positives exceed the brute-force maximum matching (impossible if sound).
pub fn matching_mismatches(trials: usize, seed: u64) -> (usize, usize) {
    let mut rng = rng(seed);
    let kappa = KappaTable::default();
    let (mut differ, mut excess) = (0, 0);
    for _ in 0..trials {
        let nd = rng.random_range(0..=5);
        let ng = rng.random_range(0..=5);
        let threshold = rng.random_range(0.3..0.9);
        let rec = |rng: &mut ChaCha8Rng, conf: f64| ObjectRecord {
            frame_id: rng.random_range(0..2),
            class: ObjectClass::ALL[rng.random_range(0..2)],
            location: RangeAzimuth::new(rng.random_range(8.0..11.0), rng.random_range(-0.15..0.15)),
            confidence: conf,
            source: Source::Human,
        };
        let gts: Vec<ObjectRecord> = (0..ng).map(|_| rec(&mut rng, 1.0)).collect();
        let dets: Vec<ObjectRecord> = (0..nd)
            .map(|_| {
                let c = rng.random_range(0.05..1.0);
                rec(&mut rng, c)
            })
            .collect();
        let got = match_detections(&dets, &gts, threshold, &kappa);
        // Priority order for the oracle: confidence descending.
        let mut order: Vec<usize> = (0..nd).collect();
        order.sort_by(|&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence));
        let score = |i: usize, j: usize| {
            let (d, g) = (&dets[order[i]], &gts[j]);
            if d.frame_id != g.frame_id || d.class != g.class {
                return None;
            }
            let s = similarity(d.location, g.location, kappa.get(g.class));
            (s >= threshold).then_some(s)
        };
        let want = oracle::lexicographic_assignment(nd, ng, score);
        let mut want_by_det = vec![None; nd];
        for (i, g) in want.iter().enumerate() {
            want_by_det[order[i]] = *g;
        }
        differ += (got.det_to_gt != want_by_det) as usize;
        excess += (got.tp > oracle::max_matching(nd, ng, |i, j| score(i, j).is_some())) as usize;
    }
    (differ, excess)
}

#[derive(Clone, Copy, Debug)]
pub struct RangeErrors {
    pub camera: f64,
    pub crf: f64,
    pub pairs: usize,
}

/// Mean absolute range error of the camera detections and of the CRF labels
/// they turn into, paired per ground-truth object, on the full-size sensor
/// (0.23 m range bins) with camera depth noise of standard deviation
/// `camera_range_noise`.
pub fn crf_vs_camera(frames: u32, camera_range_noise: f64, seed: u64) -> RangeErrors {
    let mut cfg = PipelineConfig {
        seed,
        radar: RadarConfig::default(),
        ..PipelineConfig::default()
    };
    cfg.scene.frames = frames;
    cfg.camera.range_noise = camera_range_noise;
    // Camera depth spread in the fusion tracks the camera's noise level.
    let spread = camera_range_noise / 10.0;
    cfg.teacher.fusion.scale.0 = [spread; 3];
    let grid = Grid::new(&cfg.radar);
    let scene = generate_scene(&cfg.scene, cfg.sequence_length, cfg.radar.frame_rate, cfg.seed);
    let gt = ground_truth(&scene, &grid);
    let ids: Vec<u32> = (0..frames).collect();
    let cams = degrade_camera(&gt, &ids, &cfg.camera, cfg.origin(), &cfg.scene, cfg.seed);
    let mut scene_by: BTreeMap<u32, Vec<SceneObject>> = BTreeMap::new();
    for (f, o) in &scene {
        scene_by.entry(*f).or_default().push(*o);
    }
    let mut cam_by: BTreeMap<u32, Vec<CameraDetection>> = BTreeMap::new();
    for c in &cams {
        cam_by.entry(c.frame_id).or_default().push(*c);
    }
    let proc = RfProcessor::new(&cfg.radar).unwrap();
    let (mut cam_err, mut crf_err, mut pairs) = (0.0f64, 0.0f64, 0usize);
    for f in 0..frames {
        let objects = scene_by.get(&f).cloned().unwrap_or_default();
        let (rf, _) = simulate_rf(&cfg, &proc, f, &objects).unwrap();
        let dets = cam_by.get(&f).cloned().unwrap_or_default();
        let labels = annotate_frame(f, &rf.magnitude(), &dets, &cfg.teacher, &grid).unwrap();
        // The degrader emits one detection per ground truth, in order.
        let frame_gt: Vec<&ObjectRecord> = gt.iter().filter(|g| g.frame_id == f).collect();
        for (g, d) in frame_gt.iter().zip(&dets) {
            let Some(l) = labels
                .records
                .iter()
                .filter(|l| l.class == g.class)
                .min_by(|a, b| {
                    polar_distance(a.location, g.location).total_cmp(&polar_distance(b.location, g.location))
                })
            else {
                continue;
            };
            if polar_distance(l.location, g.location) > 2.0 {
                continue;
            }
            cam_err += (d.depth - g.location.range).abs();
            crf_err += (l.location.range - g.location.range).abs();
            pairs += 1;
        }
    }
    RangeErrors {
        camera: cam_err / pairs.max(1) as f64,
        crf: crf_err / pairs.max(1) as f64,
        pairs,
    }
}
