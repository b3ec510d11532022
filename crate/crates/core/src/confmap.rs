//! Confidence-map targets from annotations, location-based NMS on predicted
//! maps, and averaging of overlapping snippet predictions.

use crate::error::{CoreError, Result};
use crate::geometry::{bev_distance, local_maxima, ols_score, Grid, KappaTable};
use crate::types::{ObjectClass, ObjectRecord, RangeAzimuth, Source};

/// Annotations below this confidence do not produce a target bump.
pub const ANNOTATION_GATE: f64 = 0.1;

/// Per-class maps of consecutive frames, `(C_cls, T, H, W)` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfMapSet {
    pub frames: usize,
    pub range_bins: usize,
    pub azimuth_bins: usize,
    pub frame_ids: Vec<u32>,
    pub data: Vec<f64>,
}

impl ConfMapSet {
    pub fn zeros(grid: &Grid, frame_ids: Vec<u32>) -> Self {
        Self {
            frames: frame_ids.len(),
            range_bins: grid.range_bins,
            azimuth_bins: grid.azimuth_bins,
            data: vec![0.0; ObjectClass::COUNT * frame_ids.len() * grid.cells()],
            frame_ids,
        }
    }

    fn plane(&self) -> usize {
        self.range_bins * self.azimuth_bins
    }

    pub fn channel(&self, class: ObjectClass, t: usize) -> &[f64] {
        let p = self.plane();
        let start = (class.index() * self.frames + t) * p;
        &self.data[start..start + p]
    }

    pub fn channel_mut(&mut self, class: ObjectClass, t: usize) -> &mut [f64] {
        let p = self.plane();
        let start = (class.index() * self.frames + t) * p;
        &mut self.data[start..start + p]
    }

    /// The `(C_cls, H, W)` slice of frame `t`.
    pub fn frame(&self, t: usize) -> Vec<f64> {
        ObjectClass::ALL.iter().flat_map(|&c| self.channel(c, t).iter().copied()).collect()
    }

    /// Builds a set from frame slices, each `(C_cls, H, W)`.
    pub fn from_frames(grid: &Grid, frame_ids: Vec<u32>, frames: &[Vec<f64>]) -> Result<Self> {
        let mut set = Self::zeros(grid, frame_ids);
        if frames.len() != set.frames {
            return Err(CoreError::validation("frame count and frame ids differ"));
        }
        let p = set.plane();
        for (t, f) in frames.iter().enumerate() {
            if f.len() != ObjectClass::COUNT * p {
                return Err(CoreError::validation(format!(
                    "frame slice has {} values, expected {}",
                    f.len(),
                    ObjectClass::COUNT * p
                )));
            }
            for c in ObjectClass::ALL {
                set.channel_mut(c, t).copy_from_slice(&f[c.index() * p..(c.index() + 1) * p]);
            }
        }
        Ok(set)
    }
}

/// BEV positions of every cell centre, row-major.
fn cell_positions(grid: &Grid) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(grid.cells());
    for r in 0..grid.range_bins {
        for c in 0..grid.azimuth_bins {
            out.push(grid.unmap(r, c).to_xz());
        }
    }
    out
}

/// Target slice `(C_cls, H, W)` for the annotations of one frame. Each
/// annotation becomes a unit-peak Gaussian centred on its cell with a BEV
/// standard deviation of `range · κ_cls`; bumps of one class combine by max.
/// Returns the slice and the number of annotations that fell off the grid.
pub fn confmap_frame(anns: &[ObjectRecord], kappa: &KappaTable, grid: &Grid) -> (Vec<f64>, usize) {
    let p = grid.cells();
    let mut out = vec![0.0; ObjectClass::COUNT * p];
    let mut dropped = 0;
    let mut positions = None;
    for a in anns.iter().filter(|a| a.confidence >= ANNOTATION_GATE) {
        let Ok((row, col)) = grid.map(a.location) else {
            dropped += 1;
            continue;
        };
        let positions = positions.get_or_insert_with(|| cell_positions(grid));
        let centre = grid.unmap(row, col);
        let (cx, cz) = centre.to_xz();
        let s = centre.range;
        let k = kappa.get(a.class);
        let plane = &mut out[a.class.index() * p..(a.class.index() + 1) * p];
        for (v, &(x, z)) in plane.iter_mut().zip(positions.iter()) {
            let g = ols_score((x - cx).hypot(z - cz), s, k);
            if g > *v {
                *v = g;
            }
        }
        // The centre cell is exactly 1 regardless of rounding in the distance.
        plane[row * grid.azimuth_bins + col] = 1.0;
    }
    (out, dropped)
}

/// Target maps for consecutive frames; `anns` may cover other frames too.
pub fn confmap_from_annotations(anns: &[ObjectRecord], kappa: &KappaTable, grid: &Grid, frame_ids: &[u32]) -> ConfMapSet {
    let frames: Vec<Vec<f64>> = frame_ids
        .iter()
        .map(|&f| {
            let own: Vec<ObjectRecord> = anns.iter().filter(|a| a.frame_id == f).copied().collect();
            confmap_frame(&own, kappa, grid).0
        })
        .collect();
    ConfMapSet::from_frames(grid, frame_ids.to_vec(), &frames).expect("slices built on the same grid")
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NmsParams {
    pub threshold: f64,
    pub floor: f64,
}

impl Default for NmsParams {
    fn default() -> Self {
        Self {
            threshold: 0.3,
            floor: 0.05,
        }
    }
}

/// Location-based NMS over a `(C_cls, H, W)` slice. Candidate peaks (8-neighbour
/// maxima at or above the floor, in every class) are taken in decreasing
/// confidence; a candidate is emitted unless its OLS to an already emitted
/// detection exceeds the threshold, the tolerance and scale coming from the
/// emitted (higher-confidence) one.
pub fn l_nms(slice: &[f64], kappa: &KappaTable, grid: &Grid, params: &NmsParams, frame_id: u32) -> Vec<ObjectRecord> {
    let (h, w) = (grid.range_bins, grid.azimuth_bins);
    let p = h * w;
    let mut pool: Vec<(f64, ObjectClass, usize, usize)> = Vec::new();
    for class in ObjectClass::ALL {
        let plane = &slice[class.index() * p..(class.index() + 1) * p];
        for (r, c) in local_maxima(plane, h, w, params.floor) {
            pool.push((plane[r * w + c], class, r, c));
        }
    }
    pool.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2, a.3).cmp(&(b.1, b.2, b.3))));
    let mut kept: Vec<ObjectRecord> = Vec::new();
    for (conf, class, r, c) in pool {
        let loc = grid.unmap(r, c);
        let suppressed = kept.iter().any(|k| {
            ols_score(bev_distance(loc, k.location), k.location.range, kappa.get(k.class)) > params.threshold
        });
        if !suppressed {
            kept.push(ObjectRecord {
                frame_id,
                class,
                location: loc,
                confidence: conf,
                source: Source::Rodnet,
            });
        }
    }
    kept
}

/// Pixelwise mean of the predictions of one frame from every snippet that
/// covers it.
pub fn average_overlapped(slices: &[&[f64]]) -> Result<Vec<f64>> {
    let first = slices
        .first()
        .ok_or_else(|| CoreError::validation("no snippet covers the frame"))?;
    if slices.iter().any(|s| s.len() != first.len()) {
        return Err(CoreError::validation("overlapping predictions differ in size"));
    }
    let n = slices.len() as f64;
    let mut out = vec![0.0; first.len()];
    for s in slices {
        for (o, v) in out.iter_mut().zip(s.iter()) {
            *o += v;
        }
    }
    for o in &mut out {
        *o /= n;
    }
    Ok(out)
}

/// Bin-centre location of the annotation's cell, if on the grid.
pub fn snapped(grid: &Grid, loc: RangeAzimuth) -> Option<RangeAzimuth> {
    grid.map(loc).ok().map(|(r, c)| grid.unmap(r, c))
}
