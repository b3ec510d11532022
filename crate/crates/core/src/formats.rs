//! On-disk formats: RFD1 binary frames and the whitespace-separated scene,
//! camera-detection and annotation text files.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rodforge_nn::Tensor;

use crate::error::{CoreError, Result};
use crate::signal::SceneObject;
use crate::teacher::CameraDetection;
use crate::types::{CameraBev, ObjectClass, ObjectRecord, RangeAzimuth, Source};

pub const RFD_MAGIC: &[u8; 4] = b"RFD1";
pub const RFD_VERSION: u32 = 1;
/// Upper bound on payload elements accepted when reading.
pub const RFD_MAX_ELEMENTS: u64 = 1 << 28;

pub fn write_rfd(w: &mut impl Write, t: &Tensor<f32>) -> Result<()> {
    let s = t.shape();
    if s.len() != 5 {
        return Err(CoreError::Format(format!("RFD1 stores rank-5 tensors, got shape {s:?}")));
    }
    let mut buf = Vec::with_capacity(28 + 4 * t.len());
    buf.extend_from_slice(RFD_MAGIC);
    buf.extend_from_slice(&RFD_VERSION.to_le_bytes());
    for &d in s {
        let d = u32::try_from(d).map_err(|_| CoreError::Format(format!("extent {d} exceeds u32")))?;
        buf.extend_from_slice(&d.to_le_bytes());
    }
    for v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf).map_err(|e| CoreError::Format(format!("writing RFD1: {e}")))
}

/// Decodes one RFD1 record occupying the whole of `bytes`.
pub fn parse_rfd(bytes: &[u8]) -> Result<Tensor<f32>> {
    let bad = |m: &str| CoreError::Format(format!("RFD1: {m}"));
    if bytes.len() < 28 {
        return Err(bad("truncated header"));
    }
    if &bytes[..4] != RFD_MAGIC {
        return Err(bad("bad magic"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes"));
    let version = word(0);
    if version != RFD_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let dims: Vec<usize> = (1..=5).map(|i| word(i) as usize).collect();
    let count = dims.iter().try_fold(1u64, |acc, &d| acc.checked_mul(d as u64));
    let count = match count {
        Some(c) if c > 0 && c <= RFD_MAX_ELEMENTS => c as usize,
        _ => return Err(bad(&format!("implausible dims {dims:?}"))),
    };
    let payload = &bytes[28..];
    if payload.len() != 4 * count {
        return Err(bad(&format!(
            "payload is {} bytes, dims {dims:?} need {}",
            payload.len(),
            4 * count
        )));
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok(Tensor::from_vec(&dims, data)?)
}

pub fn read_rfd(path: &Path) -> Result<Tensor<f32>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| CoreError::io(path, e))?;
    parse_rfd(&bytes).map_err(|e| CoreError::Format(format!("{}: {e}", path.display())))
}

pub fn frame_file_name(frame_id: u32) -> String {
    format!("frame_{frame_id:06}.rfd")
}

/// Frame ids of the `frame_XXXXXX.rfd` files in `dir`, sorted.
pub fn list_frames(dir: &Path) -> Result<Vec<(u32, PathBuf)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| CoreError::io(dir, e))? {
        let entry = entry.map_err(|e| CoreError::io(dir, e))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        if let Some(id) = name.strip_prefix("frame_").and_then(|s| s.strip_suffix(".rfd")) {
            if let Ok(id) = id.parse() {
                out.push((id, entry.path()));
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Non-comment lines with their 1-based numbers, split on whitespace.
fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.split('#').next().unwrap_or("");
        let fields: Vec<&str> = line.split_whitespace().collect();
        (!fields.is_empty()).then_some((i + 1, fields))
    })
}

struct Fields<'a> {
    path: &'a Path,
    line: usize,
    fields: Vec<&'a str>,
}

impl<'a> Fields<'a> {
    fn new(path: &'a Path, line: usize, fields: Vec<&'a str>, want: usize, what: &str) -> Result<Self> {
        if fields.len() != want {
            return Err(CoreError::Parse {
                path: path.into(),
                line,
                msg: format!("{what} line needs {want} fields, found {}", fields.len()),
            });
        }
        Ok(Self { path, line, fields })
    }

    fn err(&self, msg: String) -> CoreError {
        CoreError::Parse {
            path: self.path.into(),
            line: self.line,
            msg,
        }
    }

    fn get<T: FromStr>(&self, i: usize, name: &str) -> Result<T> {
        self.fields[i]
            .parse()
            .map_err(|_| self.err(format!("invalid {name} '{}'", self.fields[i])))
    }

    fn finite(&self, i: usize, name: &str) -> Result<f64> {
        let v: f64 = self.get(i, name)?;
        if !v.is_finite() {
            return Err(self.err(format!("{name} must be finite")));
        }
        Ok(v)
    }

    fn class(&self, i: usize) -> Result<ObjectClass> {
        let id: usize = self.get(i, "class id")?;
        ObjectClass::from_index(id).ok_or_else(|| self.err(format!("class id {id} is not 0, 1 or 2")))
    }
}

/// Scene line: `frame_id class_id range azimuth velocity rcs extent`.
pub fn parse_scene(text: &str, path: &Path) -> Result<Vec<(u32, SceneObject)>> {
    records(text)
        .map(|(line, f)| {
            let f = Fields::new(path, line, f, 7, "scene")?;
            let o = SceneObject {
                class: f.class(1)?,
                range: f.finite(2, "range")?,
                azimuth: f.finite(3, "azimuth")?,
                radial_velocity: f.finite(4, "velocity")?,
                rcs: f.finite(5, "rcs")?,
                extent: f.finite(6, "extent")?,
            };
            if o.rcs < 0.0 || o.extent < 0.0 {
                return Err(f.err("rcs and extent must be non-negative".into()));
            }
            Ok((f.get(0, "frame id")?, o))
        })
        .collect()
}

pub fn format_scene(objects: &[(u32, SceneObject)], header: &str) -> String {
    let mut s = String::from(header);
    s.push_str("# frame_id class_id range_m azimuth_rad velocity rcs extent\n");
    for (f, o) in objects {
        let _ = writeln!(
            s,
            "{f} {} {} {} {} {} {}",
            o.class.index(),
            o.range,
            o.azimuth,
            o.radial_velocity,
            o.rcs,
            o.extent
        );
    }
    s
}

/// Camera line: `frame_id class_id x_bev z_bev depth depth_conf`.
pub fn parse_camera(text: &str, path: &Path) -> Result<Vec<CameraDetection>> {
    records(text)
        .map(|(line, f)| {
            let f = Fields::new(path, line, f, 6, "camera")?;
            let d = CameraDetection {
                frame_id: f.get(0, "frame id")?,
                class: f.class(1)?,
                bev: CameraBev {
                    x: f.finite(2, "x")?,
                    z: f.finite(3, "z")?,
                },
                depth: f.finite(4, "depth")?,
                depth_conf: f.finite(5, "depth confidence")?,
            };
            d.validate().map_err(|e| f.err(e.to_string()))?;
            Ok(d)
        })
        .collect()
}

pub fn format_camera(dets: &[CameraDetection], header: &str) -> String {
    let mut s = String::from(header);
    s.push_str("# frame_id class_id x_bev z_bev depth depth_conf\n");
    for d in dets {
        let _ = writeln!(
            s,
            "{} {} {} {} {} {}",
            d.frame_id,
            d.class.index(),
            d.bev.x,
            d.bev.z,
            d.depth,
            d.depth_conf
        );
    }
    s
}

/// Annotation line: `frame_id class_id range azimuth confidence source`.
pub fn parse_annotations(text: &str, path: &Path) -> Result<Vec<ObjectRecord>> {
    records(text)
        .map(|(line, f)| {
            let f = Fields::new(path, line, f, 6, "annotation")?;
            let confidence = f.finite(4, "confidence")?;
            if !(0.0..=1.0).contains(&confidence) {
                return Err(f.err(format!("confidence {confidence} outside [0, 1]")));
            }
            let range = f.finite(2, "range")?;
            if range < 0.0 {
                return Err(f.err("range must be non-negative".into()));
            }
            Ok(ObjectRecord {
                frame_id: f.get(0, "frame id")?,
                class: f.class(1)?,
                location: RangeAzimuth::new(range, f.finite(3, "azimuth")?),
                confidence,
                source: f.get::<Source>(5, "source")?,
            })
        })
        .collect()
}

pub fn format_annotations(recs: &[ObjectRecord], header: &str) -> String {
    let mut s = String::from(header);
    s.push_str("# frame_id class_id range_m azimuth_rad confidence source\n");
    for r in recs {
        let _ = writeln!(
            s,
            "{} {} {} {} {} {}",
            r.frame_id,
            r.class.index(),
            r.location.range,
            r.location.azimuth,
            r.confidence,
            r.source
        );
    }
    s
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CoreError::io(path, e))
}
