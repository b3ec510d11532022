//! Camera BEV ↔ radar polar transforms, grid mapping and object location
//! similarity (OLS).

use crate::error::{CoreError, Result};
use crate::signal::RadarConfig;
use crate::types::{CameraBev, ObjectClass, ObjectRecord, PerClass, RangeAzimuth};

/// Per-class error tolerance, relative to object range (dimensionless).
pub type KappaTable = PerClass<f64>;

impl Default for KappaTable {
    fn default() -> Self {
        PerClass([0.10, 0.12, 0.15])
    }
}

impl KappaTable {
    pub fn validate(&self) -> Result<()> {
        for c in ObjectClass::ALL {
            let k = self.get(c);
            if !(k.is_finite() && k > 0.0) {
                return Err(CoreError::validation(format!("kappa.{c} must be positive, got {k}")));
            }
        }
        Ok(())
    }
}

/// Polar coordinates of a camera BEV point as seen from a radar at `origin`.
pub fn cam_to_range_azimuth(p: CameraBev, origin: CameraBev) -> Result<RangeAzimuth> {
    let (dx, dz) = (p.x - origin.x, p.z - origin.z);
    if !(dz > 0.0) || !dx.is_finite() {
        return Err(CoreError::validation(format!(
            "point ({}, {}) is not in front of the radar at ({}, {})",
            p.x, p.z, origin.x, origin.z
        )));
    }
    Ok(RangeAzimuth::new(dx.hypot(dz), (dx / dz).atan()))
}

/// Pixel geometry of the range-azimuth grid. Columns are uniform in `sin θ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub range_bins: usize,
    pub azimuth_bins: usize,
    pub range_resolution: f64,
    /// Step of `sin θ` between adjacent columns.
    pub sin_step: f64,
}

impl Grid {
    pub fn new(cfg: &RadarConfig) -> Self {
        Self {
            range_bins: cfg.range_bins,
            azimuth_bins: cfg.azimuth_bins,
            range_resolution: cfg.range_resolution(),
            sin_step: 1.0 / (cfg.azimuth_bins as f64 * cfg.rx_spacing),
        }
    }

    pub fn centre_col(&self) -> usize {
        self.azimuth_bins / 2
    }

    pub fn cells(&self) -> usize {
        self.range_bins * self.azimuth_bins
    }

    /// `sin θ` at the centre of column `col`.
    pub fn col_sin(&self, col: usize) -> f64 {
        (col as f64 - self.centre_col() as f64) * self.sin_step
    }

    pub fn row_range(&self, row: usize) -> f64 {
        row as f64 * self.range_resolution
    }

    /// Fractional column of `sin θ = u`.
    pub fn col_of_sin(&self, u: f64) -> f64 {
        self.centre_col() as f64 + u / self.sin_step
    }

    pub fn map(&self, ra: RangeAzimuth) -> Result<(usize, usize)> {
        let bad = || {
            CoreError::validation(format!(
                "location ({:.3} m, {:.4} rad) is outside the {}x{} grid",
                ra.range, ra.azimuth, self.range_bins, self.azimuth_bins
            ))
        };
        if !(ra.range >= 0.0) || !(ra.azimuth.abs() <= std::f64::consts::FRAC_PI_2) {
            return Err(bad());
        }
        let row = (ra.range / self.range_resolution).round();
        let col = self.col_of_sin(ra.azimuth.sin()).round();
        if row >= self.range_bins as f64 || col < 0.0 || col >= self.azimuth_bins as f64 {
            return Err(bad());
        }
        Ok((row as usize, col as usize))
    }

    pub fn unmap(&self, row: usize, col: usize) -> RangeAzimuth {
        RangeAzimuth::new(self.row_range(row), self.col_sin(col).clamp(-1.0, 1.0).asin())
    }

    /// Fractional `(row, col)` of a location, without bounds checks.
    pub fn fractional(&self, ra: RangeAzimuth) -> (f64, f64) {
        (ra.range / self.range_resolution, self.col_of_sin(ra.azimuth.sin()))
    }
}

pub fn grid_map(ra: RangeAzimuth, cfg: &RadarConfig) -> Result<(usize, usize)> {
    Grid::new(cfg).map(ra)
}

pub fn grid_unmap(row: usize, col: usize, cfg: &RadarConfig) -> RangeAzimuth {
    Grid::new(cfg).unmap(row, col)
}

/// BEV Euclidean distance between two polar locations.
pub fn bev_distance(a: RangeAzimuth, b: RangeAzimuth) -> f64 {
    let (ax, az) = a.to_xz();
    let (bx, bz) = b.to_xz();
    (ax - bx).hypot(az - bz)
}

/// `exp(−d² / (2 (s κ)²))`; with `s κ = 0` the score is 1 at `d = 0` and 0
/// elsewhere.
pub fn ols_score(d: f64, s: f64, kappa: f64) -> f64 {
    let sigma = s * kappa;
    if sigma == 0.0 {
        return if d == 0.0 { 1.0 } else { 0.0 };
    }
    (-d * d / (2.0 * sigma * sigma)).exp()
}

/// Similarity of `a` to `reference`; the scale and class tolerance come from
/// the reference.
pub fn ols(a: &ObjectRecord, reference: &ObjectRecord, kappa: &KappaTable) -> f64 {
    ols_score(
        bev_distance(a.location, reference.location),
        reference.location.range,
        kappa.get(reference.class),
    )
}

/// 8-neighbour peaks of a row-major `h × w` grid with value at least `floor`.
/// A cell is a peak when no in-grid neighbour is larger; on exact ties the
/// cell with the smaller linear index wins.
pub fn local_maxima(v: &[f64], h: usize, w: usize, floor: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for r in 0..h {
        for c in 0..w {
            let me = v[r * w + c];
            if !(me >= floor) {
                continue;
            }
            let peak = (r.saturating_sub(1)..(r + 2).min(h)).all(|rr| {
                (c.saturating_sub(1)..(c + 2).min(w)).all(|cc| {
                    let j = rr * w + cc;
                    let other = v[j];
                    j == r * w + c || other < me || (other == me && j > r * w + c)
                })
            });
            if peak {
                out.push((r, c));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Source;

    fn origin() -> CameraBev {
        CameraBev { x: 0.4, z: -1.5 }
    }

    fn at(dx: f64, dz: f64) -> RangeAzimuth {
        let o = origin();
        cam_to_range_azimuth(CameraBev { x: o.x + dx, z: o.z + dz }, o).unwrap()
    }

    #[test]
    fn camera_transform_examples() {
        let a = at(0.0, 5.0);
        assert!((a.range - 5.0).abs() < 1e-12 && a.azimuth.abs() < 1e-12);
        let b = at(3.0, 4.0);
        assert!((b.range - 5.0).abs() < 1e-12 && (b.azimuth - 0.6435011087932844).abs() < 1e-12);
        let c = at(-2.0, 2.0);
        assert!((c.range - 2.8284271247461903).abs() < 1e-12);
        assert!((c.azimuth + std::f64::consts::FRAC_PI_4).abs() < 1e-12);
    }

    #[test]
    fn behind_radar_is_rejected() {
        assert!(cam_to_range_azimuth(CameraBev { x: 1.0, z: -1.5 }, origin()).is_err());
        assert!(cam_to_range_azimuth(CameraBev { x: 1.0, z: -2.0 }, origin()).is_err());
    }

    #[test]
    fn grid_examples() {
        let cfg = RadarConfig::default().with_range_resolution(0.23);
        assert_eq!(grid_map(RangeAzimuth::new(0.0, 0.0), &cfg).unwrap(), (0, cfg.azimuth_bins / 2));
        assert_eq!(grid_map(RangeAzimuth::new(10.0, 0.0), &cfg).unwrap().0, 43);
        assert!(grid_map(RangeAzimuth::new(1000.0, 0.0), &cfg).is_err());
        assert!(grid_map(RangeAzimuth::new(-1.0, 0.0), &cfg).is_err());
    }

    #[test]
    fn ols_examples() {
        assert_eq!(ols_score(0.0, 5.0, 0.1), 1.0);
        assert!((ols_score(0.5, 5.0, 0.1) - (-0.5f64).exp()).abs() < 1e-15);
        assert!((ols_score(1.0, 5.0, 0.3) - 0.8007374029168081).abs() < 1e-12);
        assert_eq!(ols_score(0.0, 0.0, 0.1), 1.0);
        assert_eq!(ols_score(0.1, 0.0, 0.1), 0.0);
    }

    #[test]
    fn ols_uses_reference_class() {
        let rec = |class, range| ObjectRecord {
            frame_id: 0,
            class,
            location: RangeAzimuth::new(range, 0.0),
            confidence: 1.0,
            source: Source::Human,
        };
        let k = KappaTable::default();
        let a = rec(ObjectClass::Pedestrian, 10.0);
        let b = rec(ObjectClass::Car, 11.0);
        assert_eq!(ols(&a, &b, &k), ols_score(1.0, 11.0, 0.15));
    }
}
