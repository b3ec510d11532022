//! Synthetic FMCW capture and the FFT chain that turns raw chirp samples into
//! range-azimuth RF images.
//!
//! The receiver is modelled as a far-field uniform linear array (the virtual
//! array of the MIMO radar). After dechirping, a point reflector at range `ρ`
//! produces a complex tone at `ρ / Δr` cycles per chirp, so the range FFT puts
//! it in bin `ρ / Δr` regardless of the sample count. Radial velocity rotates
//! the phase from chirp to chirp and azimuth rotates it from antenna to
//! antenna.
//!
//! Azimuth is stored on the native FFT grid, which is uniform in `sin θ`:
//! column `b` holds `sin θ = (b − W/2)·2/W`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rodforge_nn::Tensor;
use rustfft::{Fft, FftPlanner};

use crate::error::{CoreError, Result};
use crate::types::{ObjectClass, RangeAzimuth};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Clone, Debug, PartialEq)]
pub struct RadarConfig {
    pub carrier_freq: f64,
    pub frame_rate: f64,
    pub chirps_per_frame: usize,
    pub samples_per_chirp: usize,
    pub num_rx: usize,
    /// Element spacing in wavelengths.
    pub rx_spacing: f64,
    pub bandwidth: f64,
    pub range_bins: usize,
    pub azimuth_bins: usize,
    /// Moving-average length across chirps.
    pub lpf_window: usize,
}

impl Default for RadarConfig {
    fn default() -> Self {
        Self {
            carrier_freq: 77e9,
            frame_rate: 30.0,
            chirps_per_frame: 255,
            samples_per_chirp: 128,
            num_rx: 8,
            rx_spacing: 0.5,
            bandwidth: SPEED_OF_LIGHT / (2.0 * 0.23),
            range_bins: 112,
            azimuth_bins: 121,
            lpf_window: 4,
        }
    }
}

impl RadarConfig {
    /// A 32×32 grid over 25 m, otherwise the default sensor.
    pub fn desk() -> Self {
        Self {
            samples_per_chirp: 32,
            range_bins: 32,
            azimuth_bins: 32,
            ..Self::default()
        }
        .with_range_resolution(25.0 / 32.0)
    }

    pub fn range_resolution(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.bandwidth)
    }

    pub fn max_range(&self) -> f64 {
        self.range_bins as f64 * self.range_resolution()
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq
    }

    /// Time between consecutive chirps.
    pub fn chirp_period(&self) -> f64 {
        1.0 / (self.frame_rate * self.chirps_per_frame as f64)
    }

    /// Sets the bandwidth that yields range resolution `dr` metres.
    pub fn with_range_resolution(mut self, dr: f64) -> Self {
        self.bandwidth = SPEED_OF_LIGHT / (2.0 * dr);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(CoreError::Validation(m));
        for (name, v) in [
            ("radar.carrier_freq", self.carrier_freq),
            ("radar.frame_rate", self.frame_rate),
            ("radar.bandwidth", self.bandwidth),
            ("radar.rx_spacing", self.rx_spacing),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        if self.num_rx < 2 {
            return fail(format!("radar.num_rx must be at least 2, got {}", self.num_rx));
        }
        if self.range_bins == 0 || self.azimuth_bins < self.num_rx {
            return fail(format!(
                "need range_bins > 0 and azimuth_bins >= num_rx, got {} and {}",
                self.range_bins, self.azimuth_bins
            ));
        }
        if self.samples_per_chirp < self.range_bins {
            return fail(format!(
                "radar.samples_per_chirp ({}) must be at least radar.range_bins ({})",
                self.samples_per_chirp, self.range_bins
            ));
        }
        if self.chirps_per_frame == 0 || self.lpf_window == 0 {
            return fail("radar.chirps_per_frame and radar.lpf_window must be positive".into());
        }
        Ok(())
    }
}

/// One reflector in one frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SceneObject {
    pub class: ObjectClass,
    pub range: f64,
    pub azimuth: f64,
    /// Positive when receding.
    pub radial_velocity: f64,
    /// Echo amplitude.
    pub rcs: f64,
    /// Spatial spread in metres (standard deviation of the rendered blur).
    pub extent: f64,
}

impl SceneObject {
    pub fn location(&self) -> RangeAzimuth {
        RangeAzimuth::new(self.range, self.azimuth)
    }
}

/// Dechirped samples, `(num_rx, chirps_per_frame, samples_per_chirp)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RawFrame {
    pub num_rx: usize,
    pub chirps: usize,
    pub samples: usize,
    pub data: Vec<Complex64>,
}

impl RawFrame {
    pub fn zeros(cfg: &RadarConfig) -> Self {
        Self {
            num_rx: cfg.num_rx,
            chirps: cfg.chirps_per_frame,
            samples: cfg.samples_per_chirp,
            data: vec![Complex64::new(0.0, 0.0); cfg.num_rx * cfg.chirps_per_frame * cfg.samples_per_chirp],
        }
    }

    fn at(&self, rx: usize, chirp: usize) -> &[Complex64] {
        let start = (rx * self.chirps + chirp) * self.samples;
        &self.data[start..start + self.samples]
    }
}

/// Complex range-azimuth image of one chirp slice, `(range_bins, azimuth_bins)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RfImage {
    pub range_bins: usize,
    pub azimuth_bins: usize,
    pub data: Vec<Complex64>,
}

impl RfImage {
    pub fn at(&self, r: usize, a: usize) -> Complex64 {
        self.data[r * self.azimuth_bins + a]
    }

    pub fn magnitude(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.norm()).collect()
    }
}

/// The selected chirp slices of one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct RfFrame {
    pub frame_id: u32,
    pub timestamp: f64,
    pub chirps: Vec<RfImage>,
}

impl RfFrame {
    /// Mean magnitude over the chirp slices, row-major `(range, azimuth)`.
    pub fn magnitude(&self) -> Vec<f64> {
        let n = self.chirps.len() as f64;
        let mut acc = vec![0.0; self.chirps[0].data.len()];
        for c in &self.chirps {
            for (a, v) in acc.iter_mut().zip(&c.data) {
                *a += v.norm() / n;
            }
        }
        acc
    }

    /// `(2, 1, n, H, W)` real/imaginary tensor, the on-disk frame layout.
    pub fn to_tensor(&self) -> Tensor<f32> {
        let n = self.chirps.len();
        let (h, w) = (self.chirps[0].range_bins, self.chirps[0].azimuth_bins);
        let plane = h * w;
        let mut data = vec![0f32; 2 * n * plane];
        for (k, c) in self.chirps.iter().enumerate() {
            for (i, v) in c.data.iter().enumerate() {
                data[k * plane + i] = v.re as f32;
                data[(n + k) * plane + i] = v.im as f32;
            }
        }
        Tensor::from_vec(&[2, 1, n, h, w], data).expect("consistent frame dimensions")
    }

    pub fn from_tensor(frame_id: u32, timestamp: f64, t: &Tensor<f32>) -> Result<Self> {
        let s = t.shape();
        if s.len() != 5 || s[0] != 2 || s[1] != 1 {
            return Err(CoreError::Format(format!(
                "frame {frame_id}: expected dims (2, 1, n, H, W), got {s:?}"
            )));
        }
        let (n, h, w) = (s[2], s[3], s[4]);
        let plane = h * w;
        let d = t.data();
        let chirps = (0..n)
            .map(|k| RfImage {
                range_bins: h,
                azimuth_bins: w,
                data: (0..plane)
                    .map(|i| Complex64::new(d[k * plane + i] as f64, d[(n + k) * plane + i] as f64))
                    .collect(),
            })
            .collect();
        Ok(Self {
            frame_id,
            timestamp,
            chirps,
        })
    }
}

/// Window whose DFT is a circular Gaussian of `sigma` bins with unit peak:
/// multiplying a tone by it spreads the tone's range response into that
/// Gaussian. `sigma = 0` gives the all-ones window.
fn range_spread_window(n: usize, sigma: f64) -> Vec<Complex64> {
    if sigma <= 0.0 {
        return vec![Complex64::new(1.0, 0.0); n];
    }
    let half = n as i64 / 2;
    let g: Vec<f64> = (0..n as i64)
        .map(|k| {
            let kk = if k >= half { k - n as i64 } else { k } as f64;
            (-kk * kk / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    (0..n)
        .map(|m| {
            g.iter()
                .enumerate()
                .map(|(k, &gk)| Complex64::from_polar(gk, 2.0 * PI * (k * m) as f64 / n as f64))
                .sum()
        })
        .collect()
}

/// Amplitude taper across the array that widens the azimuth response of an
/// object with lateral spread `extent` metres at `range`.
fn array_taper(cfg: &RadarConfig, extent: f64, range: f64) -> Vec<f64> {
    let centre = (cfg.num_rx as f64 - 1.0) / 2.0;
    if extent <= 0.0 || range <= 0.0 {
        return vec![1.0; cfg.num_rx];
    }
    // A Gaussian taper of std τ elements has a Gaussian response of std
    // 1/(2π·d·τ) in sin θ; pick τ so that this matches extent/range.
    let sigma_u = extent / range;
    let tau = 1.0 / (2.0 * PI * cfg.rx_spacing * sigma_u);
    (0..cfg.num_rx)
        .map(|a| {
            let d = a as f64 - centre;
            (-d * d / (2.0 * tau * tau)).exp()
        })
        .collect()
}

/// Outcome of [`simulate_frame`].
#[derive(Clone, Debug)]
pub struct Simulated {
    pub raw: RawFrame,
    /// Objects outside the field of view that were not rendered.
    pub skipped: usize,
}

/// Superposition of object echoes plus circular Gaussian noise of total
/// standard deviation `noise_sigma` per complex sample.
pub fn simulate_frame(scene: &[SceneObject], cfg: &RadarConfig, noise_sigma: f64, seed: u64) -> Result<Simulated> {
    cfg.validate()?;
    let mut raw = RawFrame::zeros(cfg);
    let (n, chirps, rx) = (cfg.samples_per_chirp, cfg.chirps_per_frame, cfg.num_rx);
    let lambda = cfg.wavelength();
    let mut skipped = 0;
    for o in scene {
        if !(o.range >= 0.0 && o.range <= cfg.max_range() && o.azimuth.abs() <= PI / 2.0) {
            skipped += 1;
            continue;
        }
        let bin = o.range / cfg.range_resolution();
        let window = range_spread_window(n, o.extent / cfg.range_resolution());
        let taper = array_taper(cfg, o.extent, o.range);
        let phase0 = 4.0 * PI * o.range / lambda;
        let doppler = 4.0 * PI * o.radial_velocity * cfg.chirp_period() / lambda;
        let spatial = 2.0 * PI * cfg.rx_spacing * o.azimuth.sin();
        let tone: Vec<Complex64> = (0..n)
            .map(|m| window[m] * Complex64::from_polar(1.0, 2.0 * PI * bin * m as f64 / n as f64))
            .collect();
        for a in 0..rx {
            for c in 0..chirps {
                let rot = Complex64::from_polar(o.rcs * taper[a], phase0 + doppler * c as f64 + spatial * a as f64);
                let start = (a * chirps + c) * n;
                for (dst, t) in raw.data[start..start + n].iter_mut().zip(&tone) {
                    *dst += rot * t;
                }
            }
        }
    }
    if skipped > 0 {
        log::warn!("{skipped} object(s) outside the field of view were skipped");
    }
    if noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_sigma / 2f64.sqrt()).expect("finite noise level");
        for v in &mut raw.data {
            *v += Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
        }
    }
    Ok(Simulated { raw, skipped })
}

/// `n` chirp indices spread evenly over `total`, starting at 0.
pub fn chirp_indices(total: usize, n: usize) -> Result<Vec<usize>> {
    if n == 0 || n > total {
        return Err(CoreError::validation(format!(
            "cannot select {n} chirps from {total}"
        )));
    }
    Ok((0..n).map(|i| i * total / n).collect())
}

/// Cached FFT plans for one radar configuration.
pub struct RfProcessor {
    cfg: RadarConfig,
    range_fft: Arc<dyn Fft<f64>>,
    azimuth_fft: Arc<dyn Fft<f64>>,
}

impl RfProcessor {
    pub fn new(cfg: &RadarConfig) -> Result<Self> {
        cfg.validate()?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            cfg: cfg.clone(),
            range_fft: planner.plan_fft_forward(cfg.samples_per_chirp),
            azimuth_fft: planner.plan_fft_forward(cfg.azimuth_bins),
        })
    }

    /// Range FFT per antenna and chirp, moving average across chirps, then the
    /// zero-padded, centred azimuth FFT for each chirp in `chirps`.
    pub fn process(&self, raw: &RawFrame, chirps: &[usize]) -> Result<Vec<RfImage>> {
        let cfg = &self.cfg;
        if raw.num_rx != cfg.num_rx || raw.chirps != cfg.chirps_per_frame || raw.samples != cfg.samples_per_chirp {
            return Err(CoreError::validation(format!(
                "raw frame ({}, {}, {}) does not match radar configuration ({}, {}, {})",
                raw.num_rx, raw.chirps, raw.samples, cfg.num_rx, cfg.chirps_per_frame, cfg.samples_per_chirp
            )));
        }
        if let Some(&bad) = chirps.iter().find(|&&c| c >= raw.chirps) {
            return Err(CoreError::validation(format!("chirp index {bad} out of range")));
        }
        let (hb, wb, rx) = (cfg.range_bins, cfg.azimuth_bins, cfg.num_rx);
        let norm = 1.0 / (cfg.samples_per_chirp * rx) as f64;
        // range[a][c] holds the first `hb` range bins of antenna a, chirp c.
        let mut range = vec![Complex64::new(0.0, 0.0); rx * raw.chirps * hb];
        let mut buf = vec![Complex64::new(0.0, 0.0); raw.samples];
        for a in 0..rx {
            for c in 0..raw.chirps {
                buf.copy_from_slice(raw.at(a, c));
                self.range_fft.process(&mut buf);
                let start = (a * raw.chirps + c) * hb;
                range[start..start + hb].copy_from_slice(&buf[..hb]);
            }
        }
        let l = cfg.lpf_window;
        let mut out = Vec::with_capacity(chirps.len());
        let mut az = vec![Complex64::new(0.0, 0.0); wb];
        for &c in chirps {
            let hi = (c + l).min(raw.chirps);
            let scale = norm / (hi - c) as f64;
            let mut img = vec![Complex64::new(0.0, 0.0); hb * wb];
            for r in 0..hb {
                az.fill(Complex64::new(0.0, 0.0));
                for (a, slot) in az.iter_mut().enumerate().take(rx) {
                    let mut s = Complex64::new(0.0, 0.0);
                    for cc in c..hi {
                        s += range[(a * raw.chirps + cc) * hb + r];
                    }
                    *slot = s * scale;
                }
                self.azimuth_fft.process(&mut az);
                // fftshift: zero spatial frequency lands on column W/2.
                for (k, v) in az.iter().enumerate() {
                    img[r * wb + (k + wb / 2) % wb] = *v;
                }
            }
            out.push(RfImage {
                range_bins: hb,
                azimuth_bins: wb,
                data: img,
            });
        }
        Ok(out)
    }
}

/// RF images of the `n` evenly spaced chirps of one raw frame.
pub fn rf_image_from_raw(raw: &RawFrame, cfg: &RadarConfig, n: usize) -> Result<Vec<RfImage>> {
    let idx = chirp_indices(raw.chirps, n)?;
    RfProcessor::new(cfg)?.process(raw, &idx)
}

/// Number of windows of length `t` every `stride` frames over `frames` frames.
pub fn snippet_count(frames: usize, t: usize, stride: usize) -> usize {
    if t == 0 || stride == 0 || frames < t {
        0
    } else {
        (frames - t) / stride + 1
    }
}

/// Start indices of the snippets of one sequence.
pub fn snippet_starts(frames: usize, t: usize, stride: usize) -> Vec<usize> {
    (0..snippet_count(frames, t, stride)).map(|i| i * stride).collect()
}

/// Stacks `t` consecutive frames (each `(2, 1, n, H, W)`) starting at `start`
/// into one `(2, T, n, H, W)` snippet.
pub fn stack_snippet(frames: &[Tensor<f32>], start: usize, t: usize) -> Result<Tensor<f32>> {
    if start + t > frames.len() || t == 0 {
        return Err(CoreError::validation(format!(
            "snippet of {t} frames at {start} exceeds {} available frames",
            frames.len()
        )));
    }
    let s = frames[start].shape().to_vec();
    let (n, h, w) = (s[2], s[3], s[4]);
    let block = n * h * w;
    let mut data = vec![0f32; 2 * t * block];
    for (ti, f) in frames[start..start + t].iter().enumerate() {
        if f.shape() != s.as_slice() {
            return Err(CoreError::Format(format!(
                "frame dims {:?} differ from {:?} within one snippet",
                f.shape(),
                s
            )));
        }
        for c in 0..2 {
            data[(c * t + ti) * block..(c * t + ti + 1) * block].copy_from_slice(&f.data()[c * block..(c + 1) * block]);
        }
    }
    Ok(Tensor::from_vec(&[2, t, n, h, w], data)?)
}

/// Windows of `t` frames every `stride` frames over each sequence, as
/// `(C_RF = 2, T, n, H, W)` tensors. Each frame must carry at least `n` chirps;
/// when it carries more, `n` of them are taken evenly.
pub fn assemble_snippets(sequences: &[Vec<RfFrame>], t: usize, n: usize, stride: usize) -> Result<Vec<Tensor<f32>>> {
    if stride == 0 {
        return Err(CoreError::validation("snippet stride must be positive"));
    }
    let mut out = Vec::new();
    for seq in sequences {
        if t > seq.len() {
            return Err(CoreError::validation(format!(
                "snippet length {t} exceeds the {} frames of a sequence",
                seq.len()
            )));
        }
        let frames = seq
            .iter()
            .map(|f| {
                let idx = chirp_indices(f.chirps.len(), n)?;
                Ok(RfFrame {
                    frame_id: f.frame_id,
                    timestamp: f.timestamp,
                    chirps: idx.iter().map(|&i| f.chirps[i].clone()).collect(),
                }
                .to_tensor())
            })
            .collect::<Result<Vec<_>>>()?;
        for start in snippet_starts(frames.len(), t, stride) {
            out.push(stack_snippet(&frames, start, t)?);
        }
    }
    Ok(out)
}
