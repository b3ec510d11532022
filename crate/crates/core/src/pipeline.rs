//! The five pipeline commands: simulate, annotate, train, infer, evaluate.
//!
//! Every command reads a [`PipelineConfig`], writes its artifacts under the
//! output directory (or the configured paths) and records the resolved
//! configuration in `resolved_config.txt`. Text artifacts start with a
//! `# config-hash:` line.

use std::collections::BTreeMap;
use std::io::BufWriter;
use std::path::Path;

use rand::RngCore;
use rodforge_nn::checkpoint::{load_model, save_model};
use rodforge_nn::{sgd_train_with, Dataset, NnError, RodnetModel, Tensor, TrainConfig};

use crate::config::{Layout, PipelineConfig};
use crate::confmap::{average_overlapped, confmap_frame, l_nms};
use crate::error::{CoreError, Result};
use crate::eval::{evaluate, EvalResult};
use crate::fixture::{degrade_camera, generate_scene, ground_truth, rng, stream};
use crate::formats::{
    format_annotations, format_camera, format_scene, frame_file_name, list_frames, parse_annotations, parse_camera,
    parse_scene, read_rfd, read_text, write_rfd, write_text,
};
use crate::geometry::Grid;
use crate::signal::{chirp_indices, simulate_frame, snippet_starts, RfFrame, RfProcessor, SceneObject};
use crate::teacher::{annotate_frame, CameraDetection};
use crate::types::{FrameRange, ObjectRecord};

pub fn hash_header(cfg: &PipelineConfig) -> String {
    format!("# config-hash: {}\n", cfg.hash())
}

fn prepare_out(cfg: &PipelineConfig, out: &Path) -> Result<Layout> {
    std::fs::create_dir_all(out).map_err(|e| CoreError::io(out, e))?;
    write_text(&out.join("resolved_config.txt"), &cfg.resolved(out))?;
    Ok(cfg.layout(out))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => std::fs::create_dir_all(p).map_err(|e| CoreError::io(p, e)),
        _ => Ok(()),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulateSummary {
    pub frames: u32,
    pub objects: usize,
    pub gt_records: usize,
    pub camera_detections: usize,
    pub skipped_objects: usize,
}

/// Renders one frame through the simulator and FFT chain.
pub fn simulate_rf(cfg: &PipelineConfig, proc: &RfProcessor, frame_id: u32, objects: &[SceneObject]) -> Result<(RfFrame, usize)> {
    let chirps = chirp_indices(cfg.radar.chirps_per_frame, cfg.model.chirps)?;
    let seed = rng(cfg.seed, stream::NOISE + frame_id as u64).next_u64();
    let sim = simulate_frame(objects, &cfg.radar, cfg.noise_sigma, seed)?;
    let rf = RfFrame {
        frame_id,
        timestamp: frame_id as f64 / cfg.radar.frame_rate,
        chirps: proc.process(&sim.raw, &chirps)?,
    };
    Ok((rf, sim.skipped))
}

/// Scene (from `paths.scene` or generated) → RF frames, ground truth and
/// degraded camera detections.
pub fn cmd_simulate(cfg: &PipelineConfig, out: &Path) -> Result<SimulateSummary> {
    let layout = prepare_out(cfg, out)?;
    let header = hash_header(cfg);
    let (scene, frames) = match &cfg.paths.scene {
        Some(p) => {
            let scene = parse_scene(&read_text(p)?, p)?;
            let frames = scene.iter().map(|(f, _)| f + 1).max().unwrap_or(cfg.scene.frames);
            (scene, frames)
        }
        None => {
            let scene = generate_scene(&cfg.scene, cfg.sequence_length, cfg.radar.frame_rate, cfg.seed);
            ensure_parent(&layout.scene)?;
            write_text(&layout.scene, &format_scene(&scene, &header))?;
            (scene, cfg.scene.frames)
        }
    };
    let mut by_frame: BTreeMap<u32, Vec<SceneObject>> = BTreeMap::new();
    for (f, o) in &scene {
        by_frame.entry(*f).or_default().push(*o);
    }
    std::fs::create_dir_all(&layout.rf).map_err(|e| CoreError::io(&layout.rf, e))?;
    let proc = RfProcessor::new(&cfg.radar)?;
    let mut skipped = 0;
    for f in 0..frames {
        let objects = by_frame.get(&f).map(Vec::as_slice).unwrap_or(&[]);
        let (rf, s) = simulate_rf(cfg, &proc, f, objects)?;
        skipped += s;
        let path = layout.rf.join(frame_file_name(f));
        let file = std::fs::File::create(&path).map_err(|e| CoreError::io(&path, e))?;
        write_rfd(&mut BufWriter::new(file), &rf.to_tensor())?;
    }
    let grid = Grid::new(&cfg.radar);
    let gt = ground_truth(&scene, &grid);
    ensure_parent(&layout.gt)?;
    write_text(&layout.gt, &format_annotations(&gt, &header))?;
    let ids: Vec<u32> = (0..frames).collect();
    let cams = degrade_camera(&gt, &ids, &cfg.camera, cfg.origin(), &cfg.scene, cfg.seed);
    ensure_parent(&layout.camera)?;
    write_text(&layout.camera, &format_camera(&cams, &header))?;
    Ok(SimulateSummary {
        frames,
        objects: scene.len(),
        gt_records: gt.len(),
        camera_detections: cams.len(),
        skipped_objects: skipped,
    })
}

/// RF frames of a directory whose ids fall in `range`, in id order.
pub fn load_frames(dir: &Path, range: FrameRange) -> Result<Vec<(u32, Tensor<f32>)>> {
    list_frames(dir)?
        .into_iter()
        .filter(|(id, _)| range.contains(*id))
        .map(|(id, p)| Ok((id, read_rfd(&p)?)))
        .collect()
}

fn check_frame(cfg: &PipelineConfig, id: u32, t: &Tensor<f32>) -> Result<()> {
    let want = [2, 1, cfg.model.chirps, cfg.radar.range_bins, cfg.radar.azimuth_bins];
    if t.shape() != want {
        return Err(CoreError::validation(format!(
            "frame {id}: dims {:?} do not match the configured {:?}",
            t.shape(),
            want
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnnotateSummary {
    pub frames: usize,
    pub annotations: usize,
    pub mean_confidence: Option<f64>,
    pub radar_peaks: usize,
    pub dropped_camera: usize,
}

/// Teacher labels for every RF frame from its magnitude and the camera file.
pub fn cmd_annotate(cfg: &PipelineConfig, out: &Path) -> Result<AnnotateSummary> {
    let layout = prepare_out(cfg, out)?;
    let frames = load_frames(&layout.rf, FrameRange::ALL)?;
    let cams = parse_camera(&read_text(&layout.camera)?, &layout.camera)?;
    let (records, summary) = annotate_frames(cfg, &frames, &cams)?;
    ensure_parent(&layout.annotations)?;
    write_text(&layout.annotations, &format_annotations(&records, &hash_header(cfg)))?;
    Ok(summary)
}

/// In-memory teacher over decoded frames.
pub fn annotate_frames(
    cfg: &PipelineConfig,
    frames: &[(u32, Tensor<f32>)],
    cams: &[CameraDetection],
) -> Result<(Vec<ObjectRecord>, AnnotateSummary)> {
    let grid = Grid::new(&cfg.radar);
    let mut by_frame: BTreeMap<u32, Vec<CameraDetection>> = BTreeMap::new();
    for c in cams {
        by_frame.entry(c.frame_id).or_default().push(*c);
    }
    let known: std::collections::BTreeSet<u32> = frames.iter().map(|(id, _)| *id).collect();
    if let Some(bad) = by_frame.keys().find(|f| !known.contains(f)) {
        return Err(CoreError::validation(format!(
            "camera detections reference frame {bad}, which has no RF data"
        )));
    }
    let mut records = Vec::new();
    let mut summary = AnnotateSummary {
        frames: frames.len(),
        annotations: 0,
        mean_confidence: None,
        radar_peaks: 0,
        dropped_camera: 0,
    };
    for (id, t) in frames {
        check_frame(cfg, *id, t)?;
        let rf = RfFrame::from_tensor(*id, 0.0, t)?;
        let cams = by_frame.get(id).map(Vec::as_slice).unwrap_or(&[]);
        let labels = annotate_frame(*id, &rf.magnitude(), cams, &cfg.teacher, &grid)?;
        summary.radar_peaks += labels.radar_peaks;
        summary.dropped_camera += labels.dropped_camera;
        records.extend(labels.records);
    }
    summary.annotations = records.len();
    if !records.is_empty() {
        summary.mean_confidence = Some(records.iter().map(|r| r.confidence).sum::<f64>() / records.len() as f64);
    }
    Ok((records, summary))
}

/// Splits frame ids into runs that belong to one sequence and are
/// contiguous. Returns index ranges into `ids`.
pub fn sequences(ids: &[u32], sequence_length: u32) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=ids.len() {
        let split = i == ids.len() || ids[i] != ids[i - 1] + 1 || ids[i] / sequence_length != ids[i - 1] / sequence_length;
        if split {
            if i > start {
                out.push(start..i);
            }
            start = i;
        }
    }
    out
}

/// Snippets assembled on demand from decoded frames and per-frame targets.
pub struct SnippetDataset {
    frames: Vec<Tensor<f32>>,
    targets: Vec<Vec<f32>>,
    starts: Vec<usize>,
    t: usize,
    scale: f32,
    plane: usize,
}

impl SnippetDataset {
    pub fn new(cfg: &PipelineConfig, frames: Vec<(u32, Tensor<f32>)>, anns: &[ObjectRecord]) -> Result<Self> {
        let grid = Grid::new(&cfg.radar);
        let t = cfg.model.snippet_len;
        let mut by_frame: BTreeMap<u32, Vec<ObjectRecord>> = BTreeMap::new();
        for a in anns {
            by_frame.entry(a.frame_id).or_default().push(*a);
        }
        let ids: Vec<u32> = frames.iter().map(|(id, _)| *id).collect();
        let mut starts = Vec::new();
        for r in sequences(&ids, cfg.sequence_length) {
            starts.extend(snippet_starts(r.len(), t, cfg.train.snippet_stride).into_iter().map(|s| r.start + s));
        }
        let mut targets = Vec::with_capacity(frames.len());
        for (id, f) in &frames {
            check_frame(cfg, *id, f)?;
            let own = by_frame.get(id).map(Vec::as_slice).unwrap_or(&[]);
            targets.push(confmap_frame(own, &cfg.kappa, &grid).0.iter().map(|&v| v as f32).collect());
        }
        Ok(Self {
            frames: frames.into_iter().map(|(_, f)| f).collect(),
            targets,
            starts,
            t,
            scale: cfg.input_scale as f32,
            plane: grid.cells(),
        })
    }

    fn target(&self, start: usize) -> Tensor<f32> {
        let (t, p) = (self.t, self.plane);
        let classes = self.targets[start].len() / p;
        let mut data = vec![0f32; classes * t * p];
        for ti in 0..t {
            let tgt = &self.targets[start + ti];
            for c in 0..classes {
                data[(c * t + ti) * p..(c * t + ti + 1) * p].copy_from_slice(&tgt[c * p..(c + 1) * p]);
            }
        }
        let h = self.frames[start].shape()[3];
        Tensor::from_vec(&[classes, t, h, p / h], data).expect("consistent target dims")
    }
}

/// Stacks `t` frames into a network input scaled by `scale`.
pub fn snippet_input(frames: &[Tensor<f32>], start: usize, t: usize, scale: f32) -> Result<Tensor<f32>> {
    let mut x = crate::signal::stack_snippet(frames, start, t)?;
    if scale != 1.0 {
        x.data_mut().iter_mut().for_each(|v| *v *= scale);
    }
    Ok(x)
}

impl Dataset<f32> for SnippetDataset {
    fn len(&self) -> usize {
        self.starts.len()
    }

    fn get(&self, index: usize) -> rodforge_nn::Result<(Tensor<f32>, Tensor<f32>)> {
        let s = *self
            .starts
            .get(index)
            .ok_or_else(|| NnError::Value(format!("snippet {index} out of range")))?;
        let x = snippet_input(&self.frames, s, self.t, self.scale).map_err(|e| NnError::Value(e.to_string()))?;
        Ok((x, self.target(s)))
    }
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub snippets: usize,
    pub steps: usize,
    pub losses: Vec<f64>,
    pub parameters: usize,
}

pub fn train_seed(seed: u64) -> u64 {
    rng(seed, stream::TRAIN).next_u64()
}

/// Trains from the RF frames in `train.frames` against the annotation file.
pub fn cmd_train(cfg: &PipelineConfig, out: &Path, on_step: impl FnMut(usize, f64)) -> Result<TrainSummary> {
    let layout = prepare_out(cfg, out)?;
    let frames = load_frames(&layout.rf, cfg.train.frames)?;
    let anns = parse_annotations(&read_text(&layout.annotations)?, &layout.annotations)?;
    let data = SnippetDataset::new(cfg, frames, &anns)?;
    if data.is_empty() {
        return Err(CoreError::validation(format!(
            "no training snippets: need at least {} contiguous frames in {}",
            cfg.model.snippet_len, cfg.train.frames
        )));
    }
    let mut model = RodnetModel::<f32>::new(cfg.model_config())?;
    let tc = TrainConfig {
        lr: cfg.train.lr,
        epochs: cfg.train.epochs,
        seed: train_seed(cfg.seed),
        reduction: cfg.train.reduction,
        max_steps: cfg.train.max_steps,
    };
    let losses = sgd_train_with(&data, &mut model, &tc, on_step)?;
    ensure_parent(&layout.model)?;
    let file = std::fs::File::create(&layout.model).map_err(|e| CoreError::io(&layout.model, e))?;
    save_model(BufWriter::new(file), &model)?;
    let mut text = hash_header(cfg);
    text.push_str("# step loss\n");
    for (i, l) in losses.iter().enumerate() {
        text.push_str(&format!("{i} {l}\n"));
    }
    write_text(&out.join("losses.txt"), &text)?;
    Ok(TrainSummary {
        snippets: data.len(),
        steps: losses.len(),
        losses,
        parameters: model.param_count(),
    })
}

pub fn load_checkpoint(cfg: &PipelineConfig, path: &Path) -> Result<RodnetModel<f32>> {
    let file = std::fs::File::open(path).map_err(|e| CoreError::io(path, e))?;
    load_model(std::io::BufReader::new(file), cfg.model_config()).map_err(|e| match e {
        NnError::Io(source) => CoreError::io(path, source),
        e => CoreError::Validation(format!("{}: {e}", path.display())),
    })
}

/// Window starts covering every frame of a run of `len` frames: every
/// `stride` frames plus a final window flush with the end.
pub fn inference_starts(len: usize, t: usize, stride: usize) -> Vec<usize> {
    let mut s = snippet_starts(len, t, stride);
    if let Some(&last) = s.last() {
        if last + t < len {
            s.push(len - t);
        }
    }
    s
}

/// Averaged per-frame prediction slices `(C_cls, H, W)` for each frame.
pub fn predict_frames(
    cfg: &PipelineConfig,
    model: &RodnetModel<f32>,
    frames: &[(u32, Tensor<f32>)],
) -> Result<Vec<(u32, Vec<f64>)>> {
    let t = cfg.model.snippet_len;
    let ids: Vec<u32> = frames.iter().map(|(id, _)| *id).collect();
    let tensors: Vec<Tensor<f32>> = frames.iter().map(|(_, f)| f.clone()).collect();
    for (id, f) in frames {
        check_frame(cfg, *id, f)?;
    }
    let mut out = Vec::new();
    for run in sequences(&ids, cfg.sequence_length) {
        if run.len() < t {
            log::warn!(
                "frames {}..={} form a run shorter than the snippet length; skipped",
                ids[run.start],
                ids[run.end - 1]
            );
            continue;
        }
        let mut covering: Vec<Vec<Vec<f64>>> = vec![Vec::new(); run.len()];
        for s in inference_starts(run.len(), t, cfg.infer.stride) {
            let x = snippet_input(&tensors, run.start + s, t, cfg.input_scale as f32)?;
            let y = model.forward(&x)?;
            let sh = y.shape().to_vec();
            let (classes, plane) = (sh[0], sh[2] * sh[3]);
            for ti in 0..t {
                let mut slice = Vec::with_capacity(classes * plane);
                for c in 0..classes {
                    let start = (c * t + ti) * plane;
                    slice.extend(y.data()[start..start + plane].iter().map(|&v| v as f64));
                }
                covering[s + ti].push(slice);
            }
        }
        for (k, preds) in covering.iter().enumerate() {
            let refs: Vec<&[f64]> = preds.iter().map(Vec::as_slice).collect();
            out.push((ids[run.start + k], average_overlapped(&refs)?));
        }
    }
    Ok(out)
}

/// Detections for frames in `infer.frames` from a trained checkpoint.
pub fn cmd_infer(cfg: &PipelineConfig, out: &Path) -> Result<Vec<ObjectRecord>> {
    let layout = prepare_out(cfg, out)?;
    let model = load_checkpoint(cfg, &layout.model)?;
    let frames = load_frames(&layout.rf, cfg.infer.frames)?;
    let grid = Grid::new(&cfg.radar);
    let mut dets = Vec::new();
    for (id, slice) in predict_frames(cfg, &model, &frames)? {
        dets.extend(l_nms(&slice, &cfg.kappa, &grid, &cfg.infer.nms, id));
    }
    ensure_parent(&layout.detections)?;
    write_text(&layout.detections, &format_annotations(&dets, &hash_header(cfg)))?;
    Ok(dets)
}

/// Scores the detection file against ground truth over `eval.frames`.
pub fn cmd_evaluate(cfg: &PipelineConfig, out: &Path) -> Result<EvalResult> {
    let layout = prepare_out(cfg, out)?;
    let within = |r: &ObjectRecord| cfg.eval_frames.contains(r.frame_id);
    let dets: Vec<ObjectRecord> = parse_annotations(&read_text(&layout.detections)?, &layout.detections)?
        .into_iter()
        .filter(within)
        .collect();
    let gt: Vec<ObjectRecord> = parse_annotations(&read_text(&layout.gt)?, &layout.gt)?
        .into_iter()
        .filter(within)
        .collect();
    let result = evaluate(&dets, &gt, &cfg.kappa);
    let mut text = hash_header(cfg);
    text.push_str(&result.table());
    text.push_str(&result.key_values());
    write_text(&out.join("eval.txt"), &text)?;
    Ok(result)
}
