use std::fmt;
use std::str::FromStr;

use crate::error::CoreError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ObjectClass {
    Pedestrian = 0,
    Cyclist = 1,
    Car = 2,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 3] = [Self::Pedestrian, Self::Cyclist, Self::Car];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Pedestrian => "pedestrian",
            Self::Cyclist => "cyclist",
            Self::Car => "car",
        }
    }
}

impl fmt::Display for ObjectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-class constants, indexed by [`ObjectClass::index`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerClass<T>(pub [T; 3]);

impl<T: Copy> PerClass<T> {
    pub fn get(&self, c: ObjectClass) -> T {
        self.0[c.index()]
    }
}

impl<T> PerClass<T> {
    pub fn get_ref(&self, c: ObjectClass) -> &T {
        &self.0[c.index()]
    }

    pub fn get_mut(&mut self, c: ObjectClass) -> &mut T {
        &mut self.0[c.index()]
    }
}

/// Polar position relative to the radar: range in metres, azimuth in radians
/// (positive towards +x).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RangeAzimuth {
    pub range: f64,
    pub azimuth: f64,
}

impl RangeAzimuth {
    pub fn new(range: f64, azimuth: f64) -> Self {
        Self { range, azimuth }
    }

    /// Bird's-eye-view Cartesian position relative to the radar.
    pub fn to_xz(self) -> (f64, f64) {
        (self.range * self.azimuth.sin(), self.range * self.azimuth.cos())
    }
}

/// Camera bird's-eye-view coordinates: `x` lateral, `z` forward, metres.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraBev {
    pub x: f64,
    pub z: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Source {
    Crf,
    CameraOnly,
    Cfar,
    Human,
    Rodnet,
}

impl Source {
    pub fn tag(self) -> &'static str {
        match self {
            Self::Crf => "crf",
            Self::CameraOnly => "co",
            Self::Cfar => "cfar",
            Self::Human => "human",
            Self::Rodnet => "rodnet",
        }
    }
}

impl FromStr for Source {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self, CoreError> {
        Ok(match s {
            "crf" => Self::Crf,
            "co" => Self::CameraOnly,
            "cfar" => Self::Cfar,
            "human" => Self::Human,
            "rodnet" => Self::Rodnet,
            _ => return Err(CoreError::validation(format!("unknown source tag '{s}'"))),
        })
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// A detection, annotation or ground-truth object.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectRecord {
    pub frame_id: u32,
    pub class: ObjectClass,
    pub location: RangeAzimuth,
    pub confidence: f64,
    pub source: Source,
}

/// Half-open frame interval `start..end`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrameRange {
    pub start: u32,
    pub end: u32,
}

impl FrameRange {
    pub const ALL: FrameRange = FrameRange {
        start: 0,
        end: u32::MAX,
    };

    pub fn contains(&self, f: u32) -> bool {
        f >= self.start && f < self.end
    }
}

impl FromStr for FrameRange {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self, CoreError> {
        if s == "all" {
            return Ok(Self::ALL);
        }
        let bad = || CoreError::validation(format!("frame range '{s}' is not of the form start..end"));
        let (a, b) = s.split_once("..").ok_or_else(bad)?;
        let start = if a.is_empty() { 0 } else { a.parse().map_err(|_| bad())? };
        let end = if b.is_empty() { u32::MAX } else { b.parse().map_err(|_| bad())? };
        if end < start {
            return Err(bad());
        }
        Ok(Self { start, end })
    }
}

impl fmt::Display for FrameRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == Self::ALL {
            return f.write_str("all");
        }
        write!(f, "{}..", self.start)?;
        if self.end != u32::MAX {
            write!(f, "{}", self.end)?;
        }
        Ok(())
    }
}
