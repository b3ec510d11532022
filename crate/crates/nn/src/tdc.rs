//! Temporal deformable convolution.
//!
//! Every receptive-field tap `n` of every output cell is displaced by a 2D
//! offset `(Δh, Δw)` in the range/azimuth plane; the temporal coordinate of a
//! tap is never displaced. Fractional sample positions are read with bilinear
//! interpolation `G(q, p) = g(q_h, p_h)·g(q_w, p_w)`, `g(a, b) = max(0, 1 − |a − b|)`,
//! and integer locations outside the volume contribute zero.
//!
//! Offsets are laid out as `(2N, T', H', W')` on the output grid, where
//! `N = k_t·k_h·k_w`; channel `2n` holds the range (H) component of tap `n`
//! and channel `2n + 1` the azimuth (W) component.
//!
//! `g` has kinks at integer distances. At a sample position that lies exactly
//! on a grid line the derivative along that axis is taken as zero.

use crate::conv::{add_channel_bias, channel_sums, expect_dims, Conv3dKernel, Geometry};
use crate::error::{NnError, Result};
use crate::real::Real;
use crate::tensor::{Dims4, Tensor};

#[derive(Clone, Debug)]
pub struct TdcGrads<T> {
    pub x: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub offset: Tensor<T>,
}

/// Up to four in-bounds bilinear corners of one fractional sample position.
#[derive(Clone, Copy)]
struct Sample<T> {
    /// Offset of the corner inside an `H x W` plane; `usize::MAX` when out of range.
    idx: [usize; 4],
    weight: [T; 4],
    /// Fractional parts of the position.
    ly: T,
    lx: T,
}

impl<T: Real> Sample<T> {
    fn at(py: T, px: T, h: usize, w: usize) -> Self {
        // On the last grid line, take the lower cell so both corners of the
        // derivative stay inside the plane.
        let base = |p: T, n: usize| {
            let f = p.floor();
            if p == f && n > 1 && f.to_isize() == Some(n as isize - 1) {
                f - T::one()
            } else {
                f
            }
        };
        let y0f = base(py, h);
        let x0f = base(px, w);
        let ly = py - y0f;
        let lx = px - x0f;
        let (one, zero) = (T::one(), T::zero());
        let y0 = y0f.to_isize().unwrap_or(isize::MIN / 2);
        let x0 = x0f.to_isize().unwrap_or(isize::MIN / 2);
        let gy = [one - ly, ly];
        let gx = [one - lx, lx];
        let mut s = Sample {
            idx: [usize::MAX; 4],
            weight: [zero; 4],
            ly,
            lx,
        };
        for (i, (dy, dx)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
            let (yy, xx) = (y0 + dy, x0 + dx);
            if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
                continue;
            }
            s.idx[i] = yy as usize * w + xx as usize;
            s.weight[i] = gy[dy as usize] * gx[dx as usize];
        }
        s
    }

    fn read(&self, plane: &[T]) -> T {
        let mut acc = T::zero();
        for i in 0..4 {
            if self.idx[i] != usize::MAX {
                acc += self.weight[i] * plane[self.idx[i]];
            }
        }
        acc
    }

    /// `∂value/∂p_h` and `∂value/∂p_w`, written as weighted corner differences
    /// so that a locally constant plane gives exactly zero. On a grid line this
    /// is the derivative from above: zero offsets must still receive gradient.
    fn slope(&self, plane: &[T]) -> (T, T) {
        let v = self.idx.map(|i| if i == usize::MAX { T::zero() } else { plane[i] });
        let one = T::one();
        let dh = (one - self.lx) * (v[2] - v[0]) + self.lx * (v[3] - v[1]);
        let dw = (one - self.ly) * (v[1] - v[0]) + self.ly * (v[3] - v[2]);
        (dh, dw)
    }
}

struct Deform<'a, T> {
    g: Geometry,
    offset: &'a [T],
}

impl<T: Real> Deform<'_, T> {
    fn taps(&self) -> usize {
        self.g.taps()
    }

    fn sample(&self, n: usize, to: usize, ho: usize, wo: usize) -> Sample<T> {
        let g = &self.g;
        let [_, kh, kw] = g.ksize;
        let b = (n / kw) % kh;
        let c = n % kw;
        let p = g.output.plane();
        let pos = ho * g.output.w + wo;
        let base = to * p + pos;
        let vol = g.output.volume();
        let dh = self.offset[2 * n * vol + base];
        let dw = self.offset[(2 * n + 1) * vol + base];
        let py = T::from_usize(ho * g.stride[1] + b).unwrap() - T::from_usize(g.padding[1]).unwrap() + dh;
        let px = T::from_usize(wo * g.stride[2] + c).unwrap() - T::from_usize(g.padding[2]).unwrap() + dw;
        Sample::at(py, px, g.input.h, g.input.w)
    }

    fn tap_time(&self, n: usize, to: usize) -> Option<usize> {
        let [_, kh, kw] = self.g.ksize;
        self.g.input_t(to, n / (kh * kw))
    }

    fn im2col(&self, x: &[T], to: usize, col: &mut [T]) {
        let g = &self.g;
        let n_taps = self.taps();
        let p = g.cols();
        let in_plane = g.input.plane();
        for n in 0..n_taps {
            let ti = self.tap_time(n, to);
            for ho in 0..g.output.h {
                for wo in 0..g.output.w {
                    let pos = ho * g.output.w + wo;
                    let Some(ti) = ti else {
                        for ci in 0..g.input.c {
                            col[(ci * n_taps + n) * p + pos] = T::zero();
                        }
                        continue;
                    };
                    let s = self.sample(n, to, ho, wo);
                    for ci in 0..g.input.c {
                        let plane = &x[(ci * g.input.t + ti) * in_plane..(ci * g.input.t + ti + 1) * in_plane];
                        col[(ci * n_taps + n) * p + pos] = s.read(plane);
                    }
                }
            }
        }
    }

    /// Scatters column gradients into `gx` and accumulates offset gradients.
    fn col2im(&self, x: &[T], gcol: &[T], to: usize, gx: &mut [T], goff: &mut [T]) {
        let g = &self.g;
        let n_taps = self.taps();
        let p = g.cols();
        let vol = g.output.volume();
        let in_plane = g.input.plane();
        for n in 0..n_taps {
            let Some(ti) = self.tap_time(n, to) else { continue };
            for ho in 0..g.output.h {
                for wo in 0..g.output.w {
                    let pos = ho * g.output.w + wo;
                    let s = self.sample(n, to, ho, wo);
                    let (mut acc_h, mut acc_w) = (T::zero(), T::zero());
                    for ci in 0..g.input.c {
                        let gv = gcol[(ci * n_taps + n) * p + pos];
                        if gv == T::zero() {
                            continue;
                        }
                        let start = (ci * g.input.t + ti) * in_plane;
                        let plane = &x[start..start + in_plane];
                        let (sh, sw) = s.slope(plane);
                        acc_h += gv * sh;
                        acc_w += gv * sw;
                        let gplane = &mut gx[start..start + in_plane];
                        for i in 0..4 {
                            if s.idx[i] != usize::MAX {
                                gplane[s.idx[i]] += gv * s.weight[i];
                            }
                        }
                    }
                    goff[2 * n * vol + to * p + pos] += acc_h;
                    goff[(2 * n + 1) * vol + to * p + pos] += acc_w;
                }
            }
        }
    }
}

fn prepare<'a, T: Real>(
    op: &'static str,
    x: &Tensor<T>,
    k: &Conv3dKernel<T>,
    off: &'a Tensor<T>,
) -> Result<Deform<'a, T>> {
    let g = k.geometry(op, Dims4::of(op, x)?)?;
    let od = Dims4::of(op, off)?;
    let expected = Dims4 {
        c: 2 * g.taps(),
        ..g.output
    };
    if od != expected {
        let names = ["2N", "T", "H", "W"];
        let (i, (e, got)) = expected
            .shape()
            .into_iter()
            .zip(od.shape())
            .enumerate()
            .find(|(_, (e, g))| e != g)
            .expect("dims differ");
        return Err(NnError::Shape {
            op,
            axis: names[i],
            expected: e,
            got,
        });
    }
    Ok(Deform {
        g,
        offset: off.data(),
    })
}

/// `y(p0) = Σ_pn w(pn)·x(p0 + pn + Δpn) + b`.
pub fn tdc_forward<T: Real>(
    x: &Tensor<T>,
    k: &Conv3dKernel<T>,
    off: &Tensor<T>,
) -> Result<Tensor<T>> {
    let d = prepare("tdc_forward", x, k, off)?;
    let g = d.g;
    let mut y = vec![T::zero(); g.output.c * g.output.volume()];
    let mut col = vec![T::zero(); g.rows() * g.cols()];
    for to in 0..g.output.t {
        d.im2col(x.data(), to, &mut col);
        g.gemm_forward(k.weight.data(), &col, &mut y, to);
    }
    add_channel_bias(&mut y, k.bias.data(), g.output.volume());
    Tensor::from_vec(&g.output.shape(), y)
}

pub fn tdc_backward<T: Real>(
    x: &Tensor<T>,
    k: &Conv3dKernel<T>,
    off: &Tensor<T>,
    grad_y: &Tensor<T>,
) -> Result<TdcGrads<T>> {
    let d = prepare("tdc_backward", x, k, off)?;
    let g = d.g;
    expect_dims("tdc_backward", grad_y, g.output)?;
    let mut gx = vec![T::zero(); x.len()];
    let mut goff = vec![T::zero(); off.len()];
    let mut gw = Tensor::zeros(k.weight.shape());
    let mut col = vec![T::zero(); g.rows() * g.cols()];
    for to in 0..g.output.t {
        d.im2col(x.data(), to, &mut col);
        g.gemm_weight_grad(grad_y.data(), &col, gw.data_mut(), to);
        g.gemm_col_grad(k.weight.data(), grad_y.data(), &mut col, to);
        d.col2im(x.data(), &col, to, &mut gx, &mut goff);
    }
    Ok(TdcGrads {
        x: Tensor::from_vec(x.shape(), gx)?,
        weight: gw,
        bias: Tensor::from_vec(
            &[g.output.c],
            channel_sums(grad_y.data(), g.output.c, g.output.volume()),
        )?,
        offset: Tensor::from_vec(off.shape(), goff)?,
    })
}

/// Offset field shape expected by [`tdc_forward`] for this kernel and input.
pub fn offset_shape<T: Real>(x_dims: Dims4, k: &Conv3dKernel<T>) -> Result<[usize; 4]> {
    let out = k.output_dims(x_dims)?;
    let n: usize = k.ksize().iter().product();
    Ok([2 * n, out.t, out.h, out.w])
}
