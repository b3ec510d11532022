//! Classical 3D convolution over `(C, T, H, W)` volumes and its transpose.
//!
//! Both are lowered to one GEMM per output time slice: the input
//! neighbourhoods of a slice are unrolled into a `(C_in·k_t·k_h·k_w) x (H'·W')`
//! column matrix whose row order matches the flattened weight layout
//! `(C_out, C_in, k_t, k_h, k_w)`. Zero padding is implicit in the unrolling.

use rand::Rng;

use crate::error::{NnError, Result};
use crate::real::Real;
use crate::tensor::{Dims4, Tensor};

/// Weights, bias and sampling geometry of a 3D convolution.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv3dKernel<T> {
    /// `(C_out, C_in, k_t, k_h, k_w)`
    pub weight: Tensor<T>,
    /// `(C_out)`
    pub bias: Tensor<T>,
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

#[derive(Clone, Debug)]
pub struct Conv3dGrads<T> {
    pub x: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> Conv3dKernel<T> {
    pub fn new(
        weight: Tensor<T>,
        bias: Tensor<T>,
        stride: [usize; 3],
        padding: [usize; 3],
    ) -> Result<Self> {
        weight.expect_rank("conv3d kernel", 5)?;
        bias.expect_rank("conv3d bias", 1)?;
        if bias.shape()[0] != weight.shape()[0] {
            return Err(NnError::Shape {
                op: "conv3d bias",
                axis: "C_out",
                expected: weight.shape()[0],
                got: bias.shape()[0],
            });
        }
        if stride.contains(&0) {
            return Err(NnError::Config(format!("zero stride {stride:?}")));
        }
        Ok(Self {
            weight,
            bias,
            stride,
            padding,
        })
    }

    /// He-uniform weights, `±sqrt(6/fan_in)`, which keep activation variance
    /// roughly constant through ReLU layers; zero bias.
    pub fn init<R: Rng + ?Sized>(
        cin: usize,
        cout: usize,
        ksize: [usize; 3],
        stride: [usize; 3],
        padding: [usize; 3],
        rng: &mut R,
    ) -> Self {
        let fan_in = (cin * ksize.iter().product::<usize>()) as f64;
        let bound = (6.0 / fan_in).sqrt();
        let weight = Tensor::uniform(&[cout, cin, ksize[0], ksize[1], ksize[2]], bound, rng);
        let bias = Tensor::zeros(&[cout]);
        Self {
            weight,
            bias,
            stride,
            padding,
        }
    }

    /// Odd kernel with `k/2` padding on every axis.
    pub fn init_same<R: Rng + ?Sized>(
        cin: usize,
        cout: usize,
        ksize: [usize; 3],
        stride: [usize; 3],
        rng: &mut R,
    ) -> Self {
        let padding = ksize.map(|k| k / 2);
        Self::init(cin, cout, ksize, stride, padding, rng)
    }

    pub fn cin(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn cout(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn ksize(&self) -> [usize; 3] {
        let s = self.weight.shape();
        [s[2], s[3], s[4]]
    }

    pub fn output_dims(&self, input: Dims4) -> Result<Dims4> {
        Geometry::new("conv3d", input, self.cout(), self.cin(), self.ksize(), self.stride, self.padding)
            .map(|g| g.output)
    }

    pub(crate) fn geometry(&self, op: &'static str, input: Dims4) -> Result<Geometry> {
        Geometry::new(op, input, self.cout(), self.cin(), self.ksize(), self.stride, self.padding)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            weight: Tensor::zeros(self.weight.shape()),
            bias: Tensor::zeros(self.bias.shape()),
            stride: self.stride,
            padding: self.padding,
        }
    }
}

/// Sampling geometry of one convolution applied to a concrete input volume.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Geometry {
    pub input: Dims4,
    pub output: Dims4,
    pub ksize: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

impl Geometry {
    pub fn new(
        op: &'static str,
        input: Dims4,
        cout: usize,
        cin: usize,
        ksize: [usize; 3],
        stride: [usize; 3],
        padding: [usize; 3],
    ) -> Result<Self> {
        if input.c != cin {
            return Err(NnError::Shape {
                op,
                axis: "C_in",
                expected: cin,
                got: input.c,
            });
        }
        let axes = ["T", "H", "W"];
        let extents = [input.t, input.h, input.w];
        let mut out = [0usize; 3];
        for i in 0..3 {
            let padded = extents[i] + 2 * padding[i];
            if padded < ksize[i] {
                return Err(NnError::Shape {
                    op,
                    axis: axes[i],
                    expected: ksize[i],
                    got: padded,
                });
            }
            out[i] = (padded - ksize[i]) / stride[i] + 1;
        }
        Ok(Self {
            input,
            output: Dims4 {
                c: cout,
                t: out[0],
                h: out[1],
                w: out[2],
            },
            ksize,
            stride,
            padding,
        })
    }

    /// Rows of the column matrix: `C_in · k_t · k_h · k_w`.
    pub fn rows(&self) -> usize {
        self.input.c * self.taps()
    }

    pub fn taps(&self) -> usize {
        self.ksize.iter().product()
    }

    pub fn cols(&self) -> usize {
        self.output.plane()
    }

    /// Input time index read by temporal tap `a` of output slice `to`.
    pub fn input_t(&self, to: usize, a: usize) -> Option<usize> {
        let t = (to * self.stride[0] + a) as isize - self.padding[0] as isize;
        (t >= 0 && (t as usize) < self.input.t).then_some(t as usize)
    }

    pub fn im2col<T: Real>(&self, x: &[T], to: usize, col: &mut [T]) {
        let [kt, kh, kw] = self.ksize;
        let (ho_n, wo_n) = (self.output.h, self.output.w);
        let (hi_n, wi_n) = (self.input.h as isize, self.input.w as isize);
        let [_, sh, sw] = self.stride;
        let [_, ph, pw] = self.padding;
        let cols = self.cols();
        let mut row = 0;
        for ci in 0..self.input.c {
            for a in 0..kt {
                let ti = self.input_t(to, a);
                for b in 0..kh {
                    for c in 0..kw {
                        let dst = &mut col[row * cols..(row + 1) * cols];
                        row += 1;
                        let Some(ti) = ti else {
                            dst.fill(T::zero());
                            continue;
                        };
                        let plane = &x[(ci * self.input.t + ti) * self.input.plane()..];
                        for ho in 0..ho_n {
                            let hi = (ho * sh + b) as isize - ph as isize;
                            let line = &mut dst[ho * wo_n..(ho + 1) * wo_n];
                            if hi < 0 || hi >= hi_n {
                                line.fill(T::zero());
                                continue;
                            }
                            let src = &plane[hi as usize * wi_n as usize..];
                            for (wo, v) in line.iter_mut().enumerate() {
                                let wi = (wo * sw + c) as isize - pw as isize;
                                *v = if wi >= 0 && wi < wi_n {
                                    src[wi as usize]
                                } else {
                                    T::zero()
                                };
                            }
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Geometry::im2col`]: accumulates column gradients into `gx`.
    pub fn col2im<T: Real>(&self, col: &[T], to: usize, gx: &mut [T]) {
        let [kt, kh, kw] = self.ksize;
        let (ho_n, wo_n) = (self.output.h, self.output.w);
        let (hi_n, wi_n) = (self.input.h as isize, self.input.w as isize);
        let [_, sh, sw] = self.stride;
        let [_, ph, pw] = self.padding;
        let cols = self.cols();
        let mut row = 0;
        for ci in 0..self.input.c {
            for a in 0..kt {
                let ti = self.input_t(to, a);
                for b in 0..kh {
                    for c in 0..kw {
                        let src = &col[row * cols..(row + 1) * cols];
                        row += 1;
                        let Some(ti) = ti else { continue };
                        let base = (ci * self.input.t + ti) * self.input.plane();
                        for ho in 0..ho_n {
                            let hi = (ho * sh + b) as isize - ph as isize;
                            if hi < 0 || hi >= hi_n {
                                continue;
                            }
                            let dst = &mut gx[base + hi as usize * wi_n as usize..];
                            for wo in 0..wo_n {
                                let wi = (wo * sw + c) as isize - pw as isize;
                                if wi >= 0 && wi < wi_n {
                                    dst[wi as usize] += src[ho * wo_n + wo];
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// `y[:, to, :, :] = W · col` (bias not included).
    pub fn gemm_forward<T: Real>(&self, w: &[T], col: &[T], y: &mut [T], to: usize) {
        let (k, p) = (self.rows(), self.cols());
        let y_rs = self.output.volume() as isize;
        T::gemm(
            self.output.c,
            k,
            p,
            T::one(),
            w,
            (k as isize, 1),
            col,
            (p as isize, 1),
            T::zero(),
            &mut y[to * p..],
            (y_rs, 1),
        );
    }

    /// `gw += gy[:, to] · colᵀ`.
    pub fn gemm_weight_grad<T: Real>(&self, gy: &[T], col: &[T], gw: &mut [T], to: usize) {
        let (k, p) = (self.rows(), self.cols());
        T::gemm(
            self.output.c,
            p,
            k,
            T::one(),
            &gy[to * p..],
            (self.output.volume() as isize, 1),
            col,
            (1, p as isize),
            T::one(),
            gw,
            (k as isize, 1),
        );
    }

    /// `gcol = Wᵀ · gy[:, to]`.
    pub fn gemm_col_grad<T: Real>(&self, w: &[T], gy: &[T], gcol: &mut [T], to: usize) {
        let (k, p) = (self.rows(), self.cols());
        T::gemm(
            k,
            self.output.c,
            p,
            T::one(),
            w,
            (1, k as isize),
            &gy[to * p..],
            (self.output.volume() as isize, 1),
            T::zero(),
            gcol,
            (p as isize, 1),
        );
    }

    fn forward<T: Real>(&self, x: &[T], w: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.output.c * self.output.volume()];
        let mut col = vec![T::zero(); self.rows() * self.cols()];
        for to in 0..self.output.t {
            self.im2col(x, to, &mut col);
            self.gemm_forward(w, &col, &mut y, to);
        }
        y
    }

    fn backward_data<T: Real>(&self, w: &[T], gy: &[T]) -> Vec<T> {
        let mut gx = vec![T::zero(); self.input.c * self.input.volume()];
        let mut gcol = vec![T::zero(); self.rows() * self.cols()];
        for to in 0..self.output.t {
            self.gemm_col_grad(w, gy, &mut gcol, to);
            self.col2im(&gcol, to, &mut gx);
        }
        gx
    }

    fn backward_weight<T: Real>(&self, x: &[T], gy: &[T], gw: &mut [T]) {
        let mut col = vec![T::zero(); self.rows() * self.cols()];
        for to in 0..self.output.t {
            self.im2col(x, to, &mut col);
            self.gemm_weight_grad(gy, &col, gw, to);
        }
    }
}

pub(crate) fn add_channel_bias<T: Real>(y: &mut [T], bias: &[T], volume: usize) {
    for (chunk, &b) in y.chunks_mut(volume).zip(bias) {
        chunk.iter_mut().for_each(|v| *v += b);
    }
}

pub(crate) fn channel_sums<T: Real>(gy: &[T], channels: usize, volume: usize) -> Vec<T> {
    (0..channels)
        .map(|c| gy[c * volume..(c + 1) * volume].iter().copied().sum())
        .collect()
}

pub(crate) fn expect_dims<T: Real>(op: &'static str, gy: &Tensor<T>, expected: Dims4) -> Result<()> {
    let got = Dims4::of(op, gy)?;
    let names = ["C", "T", "H", "W"];
    for (i, (e, g)) in expected.shape().iter().zip(got.shape()).enumerate() {
        if *e != g {
            return Err(NnError::Shape {
                op,
                axis: names[i],
                expected: *e,
                got: g,
            });
        }
    }
    Ok(())
}

/// `y(p0) = Σ_pn w(pn)·x(p0 + pn) + b` with zero padding outside the volume.
pub fn conv3d_forward<T: Real>(x: &Tensor<T>, k: &Conv3dKernel<T>) -> Result<Tensor<T>> {
    let g = k.geometry("conv3d_forward", Dims4::of("conv3d_forward", x)?)?;
    let mut y = g.forward(x.data(), k.weight.data());
    add_channel_bias(&mut y, k.bias.data(), g.output.volume());
    Tensor::from_vec(&g.output.shape(), y)
}

pub fn conv3d_backward<T: Real>(
    x: &Tensor<T>,
    k: &Conv3dKernel<T>,
    grad_y: &Tensor<T>,
) -> Result<Conv3dGrads<T>> {
    let g = k.geometry("conv3d_backward", Dims4::of("conv3d_backward", x)?)?;
    expect_dims("conv3d_backward", grad_y, g.output)?;
    let gx = g.backward_data(k.weight.data(), grad_y.data());
    let mut gw = Tensor::zeros(k.weight.shape());
    g.backward_weight(x.data(), grad_y.data(), gw.data_mut());
    let gb = channel_sums(grad_y.data(), g.output.c, g.output.volume());
    Ok(Conv3dGrads {
        x: Tensor::from_vec(&g.input.shape(), gx)?,
        weight: gw,
        bias: Tensor::from_vec(&[g.output.c], gb)?,
    })
}

/// Transposed 3D convolution (the adjoint of [`conv3d_forward`]'s linear part,
/// plus a bias). Weight layout is `(C_in, C_out, k_t, k_h, k_w)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvTranspose3dKernel<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

impl<T: Real> ConvTranspose3dKernel<T> {
    pub fn init<R: Rng + ?Sized>(
        cin: usize,
        cout: usize,
        ksize: [usize; 3],
        stride: [usize; 3],
        padding: [usize; 3],
        rng: &mut R,
    ) -> Self {
        // Each output cell receives about fan_in / prod(stride) contributions.
        let taps: usize = ksize.iter().product();
        let per_out = (cin * taps / stride.iter().product::<usize>()).max(1) as f64;
        let bound = (6.0 / per_out).sqrt();
        Self {
            weight: Tensor::uniform(&[cin, cout, ksize[0], ksize[1], ksize[2]], bound, rng),
            bias: Tensor::zeros(&[cout]),
            stride,
            padding,
        }
    }

    pub fn cin(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn cout(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn ksize(&self) -> [usize; 3] {
        let s = self.weight.shape();
        [s[2], s[3], s[4]]
    }

    pub fn output_dims(&self, input: Dims4) -> Result<Dims4> {
        self.geometry("conv_transpose3d", input).map(|g| g.input)
    }

    /// Geometry of the equivalent forward convolution, whose *input* is this
    /// layer's output.
    fn geometry(&self, op: &'static str, input: Dims4) -> Result<Geometry> {
        if input.c != self.cin() {
            return Err(NnError::Shape {
                op,
                axis: "C_in",
                expected: self.cin(),
                got: input.c,
            });
        }
        let k = self.ksize();
        let ext = [input.t, input.h, input.w];
        let axes = ["T", "H", "W"];
        let mut out = [0usize; 3];
        for i in 0..3 {
            let full = (ext[i] - 1) * self.stride[i] + k[i];
            if full <= 2 * self.padding[i] {
                return Err(NnError::Shape {
                    op,
                    axis: axes[i],
                    expected: 2 * self.padding[i] + 1,
                    got: full,
                });
            }
            out[i] = full - 2 * self.padding[i];
        }
        let out = Dims4 {
            c: self.cout(),
            t: out[0],
            h: out[1],
            w: out[2],
        };
        let g = Geometry::new(op, out, self.cin(), self.cout(), k, self.stride, self.padding)?;
        debug_assert_eq!(g.output.shape(), input.shape());
        Ok(g)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            weight: Tensor::zeros(self.weight.shape()),
            bias: Tensor::zeros(self.bias.shape()),
            stride: self.stride,
            padding: self.padding,
        }
    }
}

pub fn conv_transpose3d_forward<T: Real>(
    x: &Tensor<T>,
    k: &ConvTranspose3dKernel<T>,
) -> Result<Tensor<T>> {
    let g = k.geometry("conv_transpose3d_forward", Dims4::of("conv_transpose3d_forward", x)?)?;
    let mut y = g.backward_data(k.weight.data(), x.data());
    add_channel_bias(&mut y, k.bias.data(), g.input.volume());
    Tensor::from_vec(&g.input.shape(), y)
}

pub fn conv_transpose3d_backward<T: Real>(
    x: &Tensor<T>,
    k: &ConvTranspose3dKernel<T>,
    grad_y: &Tensor<T>,
) -> Result<Conv3dGrads<T>> {
    let g = k.geometry("conv_transpose3d_backward", Dims4::of("conv_transpose3d_backward", x)?)?;
    expect_dims("conv_transpose3d_backward", grad_y, g.input)?;
    let gx = g.forward(grad_y.data(), k.weight.data());
    let mut gw = Tensor::zeros(k.weight.shape());
    g.backward_weight(grad_y.data(), x.data(), gw.data_mut());
    let gb = channel_sums(grad_y.data(), g.input.c, g.input.volume());
    Ok(Conv3dGrads {
        x: Tensor::from_vec(&g.output.shape(), gx)?,
        weight: gw,
        bias: Tensor::from_vec(&[g.input.c], gb)?,
    })
}
