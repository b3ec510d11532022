//! Radar scene simulation, camera-radar teacher labelling, confidence maps,
//! OLS evaluation and the command pipelines built on them.

pub mod config;
pub mod confmap;
pub mod error;
pub mod eval;
pub mod fixture;
pub mod formats;
pub mod geometry;
pub mod pipeline;
pub mod signal;
pub mod teacher;
pub mod types;

pub use config::PipelineConfig;
pub use error::{CoreError, Result};
pub use types::{CameraBev, FrameRange, ObjectClass, ObjectRecord, PerClass, RangeAzimuth, Source};
