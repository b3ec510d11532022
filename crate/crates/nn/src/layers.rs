//! Trainable building blocks with hand-written backward passes.
//!
//! A layer's gradient accumulator is another instance of the same layer
//! (see [`Layer::zeros_like`]); `backward` adds into it and returns the
//! gradient with respect to the layer input.

use rand::Rng;

use crate::conv::{
    conv3d_backward, conv3d_forward, conv_transpose3d_backward, conv_transpose3d_forward,
    Conv3dKernel, ConvTranspose3dKernel,
};
use crate::error::{NnError, Result};
use crate::real::Real;
use crate::tdc::{tdc_backward, tdc_forward};
use crate::tensor::{Dims4, Tensor};

pub trait Layer<T: Real>: Sized {
    type Cache;

    fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Self::Cache)>;

    fn backward(&self, cache: &Self::Cache, grad_y: &Tensor<T>, grads: &mut Self) -> Result<Tensor<T>>;

    fn zeros_like(&self) -> Self;

    /// Parameters in a fixed order, each with a short local name.
    fn params(&self) -> Vec<(String, &Tensor<T>)>;

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>>;
}

impl<T: Real> Layer<T> for Conv3dKernel<T> {
    type Cache = Tensor<T>;

    fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        Ok((conv3d_forward(x, self)?, x.clone()))
    }

    fn backward(&self, x: &Tensor<T>, grad_y: &Tensor<T>, grads: &mut Self) -> Result<Tensor<T>> {
        let g = conv3d_backward(x, self, grad_y)?;
        grads.weight.add_assign(&g.weight)?;
        grads.bias.add_assign(&g.bias)?;
        Ok(g.x)
    }

    fn zeros_like(&self) -> Self {
        Conv3dKernel::zeros_like(self)
    }

    fn params(&self) -> Vec<(String, &Tensor<T>)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

impl<T: Real> Layer<T> for ConvTranspose3dKernel<T> {
    type Cache = Tensor<T>;

    fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        Ok((conv_transpose3d_forward(x, self)?, x.clone()))
    }

    fn backward(&self, x: &Tensor<T>, grad_y: &Tensor<T>, grads: &mut Self) -> Result<Tensor<T>> {
        let g = conv_transpose3d_backward(x, self, grad_y)?;
        grads.weight.add_assign(&g.weight)?;
        grads.bias.add_assign(&g.bias)?;
        Ok(g.x)
    }

    fn zeros_like(&self) -> Self {
        ConvTranspose3dKernel::zeros_like(self)
    }

    fn params(&self) -> Vec<(String, &Tensor<T>)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Temporal deformable convolution whose offsets are predicted from the
/// layer input by a small convolution branch.
#[derive(Clone, Debug)]
pub struct TdcLayer<T> {
    pub kernel: Conv3dKernel<T>,
    /// Produces `2N` offset channels on the output grid of `kernel`.
    pub offset: Conv3dKernel<T>,
}

pub struct TdcCache<T> {
    x: Tensor<T>,
    off: Tensor<T>,
}

impl<T: Real> TdcLayer<T> {
    /// Main kernel is 'same'-padded; the offset branch starts at zero so the
    /// layer initially behaves as a classical convolution.
    pub fn init<R: Rng + ?Sized>(
        cin: usize,
        cout: usize,
        ksize: [usize; 3],
        stride: [usize; 3],
        offset_ksize: [usize; 3],
        rng: &mut R,
    ) -> Result<Self> {
        if ksize.iter().chain(&offset_ksize).any(|k| k % 2 == 0) {
            return Err(NnError::Config(format!(
                "deformable kernels must have odd extents, got {ksize:?} / {offset_ksize:?}"
            )));
        }
        let kernel = Conv3dKernel::init_same(cin, cout, ksize, stride, rng);
        let taps: usize = ksize.iter().product();
        let mut offset = Conv3dKernel::init_same(cin, 2 * taps, offset_ksize, stride, rng);
        offset.weight.fill(T::zero());
        offset.bias.fill(T::zero());
        Ok(Self { kernel, offset })
    }
}

impl<T: Real> Layer<T> for TdcLayer<T> {
    type Cache = TdcCache<T>;

    fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, TdcCache<T>)> {
        let off = conv3d_forward(x, &self.offset)?;
        let y = tdc_forward(x, &self.kernel, &off)?;
        Ok((y, TdcCache { x: x.clone(), off }))
    }

    fn backward(&self, c: &TdcCache<T>, grad_y: &Tensor<T>, grads: &mut Self) -> Result<Tensor<T>> {
        let g = tdc_backward(&c.x, &self.kernel, &c.off, grad_y)?;
        grads.kernel.weight.add_assign(&g.weight)?;
        grads.kernel.bias.add_assign(&g.bias)?;
        let mut gx = g.x;
        let go = conv3d_backward(&c.x, &self.offset, &g.offset)?;
        grads.offset.weight.add_assign(&go.weight)?;
        grads.offset.bias.add_assign(&go.bias)?;
        gx.add_assign(&go.x)?;
        Ok(gx)
    }

    fn zeros_like(&self) -> Self {
        Self {
            kernel: self.kernel.zeros_like(),
            offset: self.offset.zeros_like(),
        }
    }

    fn params(&self) -> Vec<(String, &Tensor<T>)> {
        vec![
            ("weight".into(), &self.kernel.weight),
            ("bias".into(), &self.kernel.bias),
            ("offset.weight".into(), &self.offset.weight),
            ("offset.bias".into(), &self.offset.bias),
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![
            &mut self.kernel.weight,
            &mut self.kernel.bias,
            &mut self.offset.weight,
            &mut self.offset.bias,
        ]
    }
}

/// Temporal inception: parallel convolutions with different temporal
/// lengths, outputs concatenated on the channel axis.
#[derive(Clone, Debug)]
pub struct Inception<T> {
    pub branches: Vec<Conv3dKernel<T>>,
}

impl<T: Real> Inception<T> {
    /// `lengths[i]` is the temporal extent of branch `i`; all branches share
    /// the spatial kernel and stride and use 'same' padding.
    pub fn init<R: Rng + ?Sized>(
        cin: usize,
        branch_channels: &[usize],
        lengths: &[usize],
        spatial: [usize; 2],
        stride: [usize; 3],
        rng: &mut R,
    ) -> Result<Self> {
        if branch_channels.len() != lengths.len() || lengths.is_empty() {
            return Err(NnError::Config(format!(
                "inception needs one channel count per branch, got {branch_channels:?} for lengths {lengths:?}"
            )));
        }
        if branch_channels.contains(&0) {
            return Err(NnError::Config(format!("empty inception branch in {branch_channels:?}")));
        }
        let branches = branch_channels
            .iter()
            .zip(lengths)
            .map(|(&c, &l)| Conv3dKernel::init_same(cin, c, [l, spatial[0], spatial[1]], stride, rng))
            .collect();
        Ok(Self { branches })
    }

    /// Splits `total` output channels in the 1:2:2 proportion of the
    /// reference layer (32/64/64 of 160).
    pub fn split_channels(total: usize) -> Result<[usize; 3]> {
        if total == 0 || total % 5 != 0 {
            return Err(NnError::Config(format!(
                "inception channels {total} not divisible into 1:2:2 branches"
            )));
        }
        let unit = total / 5;
        Ok([unit, 2 * unit, 2 * unit])
    }

    pub fn cout(&self) -> usize {
        self.branches.iter().map(|b| b.cout()).sum()
    }
}

pub fn inception_forward<T: Real>(x: &Tensor<T>, inc: &Inception<T>) -> Result<Tensor<T>> {
    let mut parts = Vec::with_capacity(inc.branches.len());
    for b in &inc.branches {
        parts.push(conv3d_forward(x, b)?);
    }
    concat_channels(&parts)
}

fn concat_channels<T: Real>(parts: &[Tensor<T>]) -> Result<Tensor<T>> {
    let first = Dims4::of("concat", &parts[0])?;
    let mut data = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
    let mut channels = 0;
    for p in parts {
        let d = Dims4::of("concat", p)?;
        if (d.t, d.h, d.w) != (first.t, first.h, first.w) {
            return Err(NnError::Value(format!(
                "inception branches disagree on output extent: {:?} vs {:?}",
                first.shape(),
                d.shape()
            )));
        }
        channels += d.c;
        data.extend_from_slice(p.data());
    }
    Tensor::from_vec(&[channels, first.t, first.h, first.w], data)
}

impl<T: Real> Layer<T> for Inception<T> {
    type Cache = Tensor<T>;

    fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        Ok((inception_forward(x, self)?, x.clone()))
    }

    fn backward(&self, x: &Tensor<T>, grad_y: &Tensor<T>, grads: &mut Self) -> Result<Tensor<T>> {
        let gd = Dims4::of("inception backward", grad_y)?;
        if gd.c != self.cout() {
            return Err(NnError::Shape {
                op: "inception backward",
                axis: "C",
                expected: self.cout(),
                got: gd.c,
            });
        }
        let vol = gd.volume();
        let mut gx = Tensor::zeros(x.shape());
        let mut start = 0;
        for (b, gb) in self.branches.iter().zip(grads.branches.iter_mut()) {
            let c = b.cout();
            let slice = grad_y.data()[start * vol..(start + c) * vol].to_vec();
            start += c;
            let g = conv3d_backward(x, b, &Tensor::from_vec(&[c, gd.t, gd.h, gd.w], slice)?)?;
            gb.weight.add_assign(&g.weight)?;
            gb.bias.add_assign(&g.bias)?;
            gx.add_assign(&g.x)?;
        }
        Ok(gx)
    }

    fn zeros_like(&self) -> Self {
        Self {
            branches: self.branches.iter().map(|b| b.zeros_like()).collect(),
        }
    }

    fn params(&self) -> Vec<(String, &Tensor<T>)> {
        self.branches
            .iter()
            .enumerate()
            .flat_map(|(i, b)| {
                [
                    (format!("branch{i}.weight"), &b.weight),
                    (format!("branch{i}.bias"), &b.bias),
                ]
            })
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.branches
            .iter_mut()
            .flat_map(|b| [&mut b.weight, &mut b.bias])
            .collect()
    }
}

/// Chirp-merging module: a temporal convolution across the chirps of one
/// frame followed by a max-pool that collapses the chirp axis.
#[derive(Clone, Debug)]
pub struct MNet<T> {
    /// `(C1, C_RF, k, 1, 1)` with 'same' padding along the chirp axis.
    pub conv: Conv3dKernel<T>,
}

pub struct MNetCache<T> {
    x: Tensor<T>,
    /// Chirp index of the maximum for every `(C1, T, H, W)` output cell.
    argmax: Vec<u32>,
}

impl<T: Real> MNet<T> {
    pub fn init<R: Rng + ?Sized>(rf_channels: usize, out_channels: usize, kernel: usize, rng: &mut R) -> Result<Self> {
        if kernel % 2 == 0 {
            return Err(NnError::Config(format!("M-Net kernel length {kernel} must be odd")));
        }
        Ok(Self {
            conv: Conv3dKernel::init_same(rf_channels, out_channels, [kernel, 1, 1], [1, 1, 1], rng),
        })
    }

    pub fn cout(&self) -> usize {
        self.conv.cout()
    }

    /// One frame `(C_RF, n, H, W)` to its features `(C1, H, W)` and the chirp
    /// index that won each max.
    fn frame(&self, frame: &Tensor<T>) -> Result<(Tensor<T>, Vec<u32>)> {
        let d = Dims4::of("mnet_forward", frame)?;
        if d.t == 0 {
            return Err(NnError::Value("mnet_forward: frame has no chirps".into()));
        }
        let r = conv3d_forward(frame, &self.conv)?;
        let plane = d.plane();
        let c1 = self.cout();
        let mut out = vec![T::zero(); c1 * plane];
        let mut arg = vec![0u32; c1 * plane];
        for c in 0..c1 {
            for p in 0..plane {
                let mut best = r.data()[c * d.t * plane + p];
                let mut bi = 0;
                for k in 1..d.t {
                    let v = r.data()[(c * d.t + k) * plane + p];
                    if v > best {
                        best = v;
                        bi = k;
                    }
                }
                out[c * plane + p] = best;
                arg[c * plane + p] = bi as u32;
            }
        }
        Ok((Tensor::from_vec(&[c1, d.h, d.w], out)?, arg))
    }
}

/// Frame features `(C1, H, W)` of one frame `(C_RF, n, H, W)`.
pub fn mnet_forward<T: Real>(frame: &Tensor<T>, mnet: &MNet<T>) -> Result<Tensor<T>> {
    mnet.frame(frame).map(|(y, _)| y)
}

/// Frame `t` of a `(C, T, n, H, W)` snippet as a `(C, n, H, W)` tensor.
pub fn snippet_frame<T: Real>(snippet: &Tensor<T>, t: usize) -> Result<Tensor<T>> {
    snippet.expect_rank("snippet_frame", 5)?;
    let s = snippet.shape();
    let (c, tt, n, h, w) = (s[0], s[1], s[2], s[3], s[4]);
    if t >= tt {
        return Err(NnError::Value(format!("frame {t} outside snippet of length {tt}")));
    }
    let block = n * h * w;
    let mut data = Vec::with_capacity(c * block);
    for ci in 0..c {
        let start = (ci * tt + t) * block;
        data.extend_from_slice(&snippet.data()[start..start + block]);
    }
    Tensor::from_vec(&[c, n, h, w], data)
}

impl<T: Real> Layer<T> for MNet<T> {
    type Cache = MNetCache<T>;

    /// `(C_RF, T, n, H, W)` snippet to `(C1, T, H, W)` features.
    fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, MNetCache<T>)> {
        x.expect_rank("mnet", 5)?;
        let s = x.shape();
        let (tt, h, w) = (s[1], s[3], s[4]);
        let c1 = self.cout();
        let plane = h * w;
        let mut out = vec![T::zero(); c1 * tt * plane];
        let mut argmax = vec![0u32; c1 * tt * plane];
        for t in 0..tt {
            let (f, arg) = self.frame(&snippet_frame(x, t)?)?;
            for c in 0..c1 {
                let dst = (c * tt + t) * plane;
                out[dst..dst + plane].copy_from_slice(&f.data()[c * plane..(c + 1) * plane]);
                argmax[dst..dst + plane].copy_from_slice(&arg[c * plane..(c + 1) * plane]);
            }
        }
        Ok((
            Tensor::from_vec(&[c1, tt, h, w], out)?,
            MNetCache { x: x.clone(), argmax },
        ))
    }

    fn backward(&self, cache: &MNetCache<T>, grad_y: &Tensor<T>, grads: &mut Self) -> Result<Tensor<T>> {
        let s = cache.x.shape();
        let (c_rf, tt, n, h, w) = (s[0], s[1], s[2], s[3], s[4]);
        let c1 = self.cout();
        let plane = h * w;
        crate::conv::expect_dims("mnet backward", grad_y, Dims4 { c: c1, t: tt, h, w })?;
        let mut gx = vec![T::zero(); cache.x.len()];
        for t in 0..tt {
            let frame = snippet_frame(&cache.x, t)?;
            let mut gr = vec![T::zero(); c1 * n * plane];
            for c in 0..c1 {
                for p in 0..plane {
                    let i = (c * tt + t) * plane + p;
                    let k = cache.argmax[i] as usize;
                    gr[(c * n + k) * plane + p] = grad_y.data()[i];
                }
            }
            let g = conv3d_backward(&frame, &self.conv, &Tensor::from_vec(&[c1, n, h, w], gr)?)?;
            grads.conv.weight.add_assign(&g.weight)?;
            grads.conv.bias.add_assign(&g.bias)?;
            let block = n * plane;
            for ci in 0..c_rf {
                let dst = (ci * tt + t) * block;
                gx[dst..dst + block].copy_from_slice(&g.x.data()[ci * block..(ci + 1) * block]);
            }
        }
        Tensor::from_vec(s, gx)
    }

    fn zeros_like(&self) -> Self {
        Self {
            conv: self.conv.zeros_like(),
        }
    }

    fn params(&self) -> Vec<(String, &Tensor<T>)> {
        self.conv.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.conv.params_mut()
    }
}

/// NaN passes through unchanged so that a diverged run is still detected.
pub fn relu_forward<T: Real>(x: &mut Tensor<T>) {
    x.data_mut().iter_mut().for_each(|v| {
        if *v < T::zero() {
            *v = T::zero();
        }
    });
}

/// Masks `grad` in place by the post-activation values `y`.
pub fn relu_backward<T: Real>(y: &Tensor<T>, grad: &mut Tensor<T>) {
    for (g, &v) in grad.data_mut().iter_mut().zip(y.data()) {
        if v <= T::zero() {
            *g = T::zero();
        }
    }
}

pub fn sigmoid<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mnet_single_chirp_is_conv_response() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = MNet::<f64>::init(2, 4, 3, &mut rng).unwrap();
        let frame = Tensor::uniform(&[2, 1, 3, 3], 1.0, &mut rng);
        let y = mnet_forward(&frame, &m).unwrap();
        let r = conv3d_forward(&frame, &m.conv).unwrap();
        assert_eq!(y.shape(), &[4, 3, 3]);
        assert_eq!(y.data(), r.data());
    }

    #[test]
    fn mnet_output_shape_any_chirps() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let m = MNet::<f32>::init(2, 5, 3, &mut rng).unwrap();
        for n in 1..6 {
            let frame = Tensor::uniform(&[2, n, 4, 6], 1.0, &mut rng);
            assert_eq!(mnet_forward(&frame, &m).unwrap().shape(), &[5, 4, 6]);
        }
        let empty = Tensor::<f32>::zeros(&[2, 0, 4, 6]);
        assert!(mnet_forward(&empty, &m).is_err());
    }

    #[test]
    fn inception_concatenates() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let inc = Inception::<f32>::init(3, &[8, 8, 8], &[5, 9, 13], [3, 3], [1, 1, 1], &mut rng).unwrap();
        let x = Tensor::uniform(&[3, 6, 4, 4], 1.0, &mut rng);
        let y = inception_forward(&x, &inc).unwrap();
        assert_eq!(y.shape(), &[24, 6, 4, 4]);
        assert_eq!(Inception::<f32>::split_channels(40).unwrap(), [8, 16, 16]);
        assert!(Inception::<f32>::split_channels(16).is_err());
    }

    #[test]
    fn inception_zero_in_zero_out() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut inc = Inception::<f64>::init(2, &[2, 3, 1], &[5, 9, 13], [3, 3], [1, 1, 1], &mut rng).unwrap();
        inc.branches.iter_mut().for_each(|b| b.bias.fill(0.0));
        let y = inception_forward(&Tensor::zeros(&[2, 4, 3, 3]), &inc).unwrap();
        assert_eq!(y.max_abs(), 0.0);
    }
}
