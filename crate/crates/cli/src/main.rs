use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use log::info;
use rodforge_core::pipeline::{cmd_annotate, cmd_evaluate, cmd_infer, cmd_simulate, cmd_train};
use rodforge_core::{CoreError, PipelineConfig};

#[derive(Parser)]
#[command(name = "rodforge", version, about = "Radar object detection with camera-radar supervision")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a scene into RF frames, ground truth and camera detections
    Simulate(Common),
    /// Label RF frames with the camera-radar teacher
    Annotate(Common),
    /// Train the detector on teacher labels
    Train(Common),
    /// Detect objects in RF frames with a trained checkpoint
    Infer(Common),
    /// Score detections against ground truth
    Evaluate(Common),
}

#[derive(Args)]
struct Common {
    /// Pipeline configuration (key=value)
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn load(&self) -> Result<PipelineConfig, CoreError> {
        let mut cfg = PipelineConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let started = Instant::now();
    match cli.command {
        Command::Simulate(c) => {
            let cfg = c.load()?;
            info!("config hash {}", cfg.hash());
            let s = cmd_simulate(&cfg, &c.out)?;
            info!(
                "simulated {} frames, {} object instances ({} off-grid), {} ground-truth records, {} camera detections",
                s.frames, s.objects, s.skipped_objects, s.gt_records, s.camera_detections
            );
        }
        Command::Annotate(c) => {
            let cfg = c.load()?;
            info!("config hash {}", cfg.hash());
            let s = cmd_annotate(&cfg, &c.out)?;
            let mean = s.mean_confidence.map_or("n/a".into(), |m| format!("{m:.3}"));
            info!(
                "{} frames: {} {} annotations, mean confidence {mean}, {} radar peaks, {} camera detections off-grid",
                s.frames,
                s.annotations,
                cfg.teacher.mode,
                s.radar_peaks,
                s.dropped_camera
            );
        }
        Command::Train(c) => {
            let cfg = c.load()?;
            info!("config hash {}", cfg.hash());
            let mut window = Vec::new();
            let s = cmd_train(&cfg, &c.out, |step, loss| {
                window.push(loss);
                if window.len() == 25 {
                    let mean = window.iter().sum::<f64>() / window.len() as f64;
                    info!("step {:>6}  mean loss {mean:.4}  ({:.0} s)", step + 1, started.elapsed().as_secs_f64());
                    window.clear();
                }
            })?;
            info!(
                "trained {} parameters for {} steps on {} snippets; final loss {:.4}",
                s.parameters,
                s.steps,
                s.snippets,
                s.losses.last().copied().unwrap_or(f64::NAN)
            );
        }
        Command::Infer(c) => {
            let cfg = c.load()?;
            info!("config hash {}", cfg.hash());
            let dets = cmd_infer(&cfg, &c.out)?;
            info!("{} detections", dets.len());
        }
        Command::Evaluate(c) => {
            let cfg = c.load()?;
            info!("config hash {}", cfg.hash());
            let r = cmd_evaluate(&cfg, &c.out)?;
            print!("{}", r.table());
            print!("{}", r.key_values());
        }
    }
    info!("done in {:.1} s", started.elapsed().as_secs_f64());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli).context("rodforge failed") {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e);
            let validation = e.chain().any(|c| c.downcast_ref::<CoreError>().is_some_and(CoreError::is_validation));
            ExitCode::from(if validation { 2 } else { 1 })
        }
    }
}
