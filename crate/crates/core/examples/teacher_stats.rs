//! Per-class radar detectability and teacher label quality on a generated
//! scene: `cargo run --release -p rodforge-core --example teacher_stats -- <config> [frames]`.

use std::path::Path;

use rodforge_core::fixture::{degrade_camera, generate_scene, ground_truth};
use rodforge_core::geometry::{bev_distance, ols, Grid};
use rodforge_core::pipeline::simulate_rf;
use rodforge_core::signal::RfProcessor;
use rodforge_core::teacher::{annotate_frame, detect_peaks};
use rodforge_core::{ObjectClass, PipelineConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let mut cfg = PipelineConfig::load(Path::new(&args[1]))?;
    if let Some(n) = args.get(2) {
        cfg.scene.frames = n.parse()?;
    }
    let grid = Grid::new(&cfg.radar);
    let proc = RfProcessor::new(&cfg.radar)?;
    let scene = generate_scene(&cfg.scene, cfg.sequence_length, cfg.radar.frame_rate, cfg.seed);
    let gt = ground_truth(&scene, &grid);
    let ids: Vec<u32> = (0..cfg.scene.frames).collect();
    let cams = degrade_camera(&gt, &ids, &cfg.camera, cfg.origin(), &cfg.scene, cfg.seed);
    let mut seen = [0usize; 3];
    let mut total = [0usize; 3];
    let mut labelled = [0usize; 3];
    let mut peaks = 0usize;
    let mut false_peaks = 0usize;
    let mut peak_amp = [0.0f64; 3];
    for f in 0..cfg.scene.frames {
        let objs: Vec<_> = scene.iter().filter(|(id, _)| *id == f).map(|(_, o)| *o).collect();
        let (rf, _) = simulate_rf(&cfg, &proc, f, &objs)?;
        let mag = rf.magnitude();
        let p = detect_peaks(&mag, &grid, &cfg.teacher.cfar)?;
        peaks += p.len();
        let fc: Vec<_> = cams.iter().filter(|c| c.frame_id == f).copied().collect();
        let labels = annotate_frame(f, &mag, &fc, &cfg.teacher, &grid)?;
        for pk in &p {
            if !objs.iter().any(|o| bev_distance(o.location(), pk.location) < 1.5) {
                false_peaks += 1;
            }
        }
        for g in gt.iter().filter(|g| g.frame_id == f) {
            let c = g.class.index();
            total[c] += 1;
            let (r, col) = grid.map(g.location)?;
            peak_amp[c] += mag[r * grid.azimuth_bins + col];
            if p.iter().any(|pk| pk.row.abs_diff(r) <= 1 && pk.col.abs_diff(col) <= 1) {
                seen[c] += 1;
            }
            if labels.records.iter().any(|l| l.class == g.class && ols(l, g, &cfg.kappa) >= 0.5) {
                labelled[c] += 1;
            }
        }
    }
    for c in ObjectClass::ALL {
        let i = c.index();
        println!(
            "{c:>10}: {} objects, cfar hit {:.3}, label@0.5 {:.3}, mean cell magnitude {:.3}",
            total[i],
            seen[i] as f64 / total[i] as f64,
            labelled[i] as f64 / total[i] as f64,
            peak_amp[i] / total[i] as f64
        );
    }
    println!("peaks/frame {:.2}, unexplained peaks/frame {:.2}", peaks as f64 / cfg.scene.frames as f64, false_peaks as f64 / cfg.scene.frames as f64);
    Ok(())
}
