//! Finite-difference and loop-oracle checks shared by the unit-level test
//! files and the acceptance run. Every check draws one random configuration
//! from `seed` (all extents ≤ 5) and returns the worst error it saw.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rodforge_nn::layers::Layer;
use rodforge_nn::tdc::offset_shape;
use rodforge_nn::{
    bce_loss, conv3d_backward, conv3d_forward, conv_transpose3d_backward, conv_transpose3d_forward, tdc_backward,
    tdc_forward, Backbone, Conv3dKernel, ConvTranspose3dKernel, Dims4, Inception, MNet, ModelConfig, Reduction,
    RodnetModel, Tensor,
};
use rodforge_oracles as oracle;

pub const H: f64 = 1e-4;
pub const REL_TOL: f64 = 1e-4;
/// Denominator floor of the relative error, for entries that are zero up to rounding.
pub const FLOOR: f64 = 1e-3;
/// Coordinates probed per checked tensor.
const PROBES: usize = 48;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::uniform(shape, 1.0, rng)
}

fn with_data(t: &Tensor<f64>, data: &[f64]) -> Tensor<f64> {
    Tensor::from_vec(t.shape(), data.to_vec()).unwrap()
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn probes(rng: &mut ChaCha8Rng, len: usize) -> Vec<usize> {
    if len <= PROBES {
        (0..len).collect()
    } else {
        (0..PROBES).map(|_| rng.random_range(0..len)).collect()
    }
}

/// Compares `analytic` against central differences of `f` around `at`.
fn fd_err(rng: &mut ChaCha8Rng, at: &[f64], analytic: &[f64], f: impl FnMut(&[f64]) -> f64) -> f64 {
    let idx = probes(rng, at.len());
    let numeric = oracle::central_diff(f, at, H, Some(&idx));
    let picked: Vec<f64> = idx.iter().map(|&i| analytic[i]).collect();
    oracle::max_rel_err(&picked, &numeric, FLOOR)
}

/// Like [`fd_err`] for piecewise-smooth objectives (ReLU, max-pool). A probe
/// whose central difference changes between step `h` and `h/2` straddles a
/// kink, where finite differences say nothing about the derivative; such
/// probes are skipped and counted in `skipped`.
fn fd_err_piecewise(
    rng: &mut ChaCha8Rng,
    at: &[f64],
    analytic: &[f64],
    mut f: impl FnMut(&[f64]) -> f64,
    skipped: &mut usize,
) -> f64 {
    let idx = probes(rng, at.len());
    let coarse = oracle::central_diff(&mut f, at, H, Some(&idx));
    let fine = oracle::central_diff(&mut f, at, H / 2.0, Some(&idx));
    let mut picked = Vec::new();
    let mut numeric = Vec::new();
    for (k, &i) in idx.iter().enumerate() {
        if oracle::max_rel_err(&[coarse[k]], &[fine[k]], FLOOR) > KINK_TOL {
            *skipped += 1;
            continue;
        }
        picked.push(analytic[i]);
        numeric.push(coarse[k]);
    }
    oracle::max_rel_err(&picked, &numeric, FLOOR)
}

/// Disagreement between step sizes beyond which a probe is taken to cross a kink.
const KINK_TOL: f64 = 1e-5;

#[derive(Clone, Copy, Debug)]
pub struct ConvCase {
    pub cin: usize,
    pub cout: usize,
    pub k: [usize; 3],
    pub stride: [usize; 3],
    pub pad: [usize; 3],
    pub input: [usize; 3],
}

impl ConvCase {
    /// Random small geometry. `odd` restricts kernel extents to odd values.
    pub fn random(rng: &mut ChaCha8Rng, odd: bool) -> Self {
        let mut k = [0; 3];
        let mut stride = [0; 3];
        let mut pad = [0; 3];
        let mut input = [0; 3];
        for a in 0..3 {
            k[a] = if odd { [1, 3][rng.random_range(0..2)] } else { rng.random_range(1..=3) };
            stride[a] = rng.random_range(1..=2);
            pad[a] = rng.random_range(0..=k[a] / 2);
            input[a] = rng.random_range(k[a].max(2)..=5);
        }
        Self {
            cin: rng.random_range(1..=3),
            cout: rng.random_range(1..=3),
            k,
            stride,
            pad,
            input,
        }
    }

    pub fn kernel(&self, rng: &mut ChaCha8Rng) -> Conv3dKernel<f64> {
        Conv3dKernel::init(self.cin, self.cout, self.k, self.stride, self.pad, rng)
    }

    pub fn x_shape(&self) -> [usize; 4] {
        [self.cin, self.input[0], self.input[1], self.input[2]]
    }

    pub fn dims(&self) -> Dims4 {
        let s = self.x_shape();
        Dims4 {
            c: s[0],
            t: s[1],
            h: s[2],
            w: s[3],
        }
    }
}

fn oracle_conv(x: &Tensor<f64>, k: &Conv3dKernel<f64>, off: Option<&Tensor<f64>>) -> Vec<f64> {
    let s = x.shape();
    let w = k.weight.shape();
    oracle::tdc(
        x.data(),
        [s[0], s[1], s[2], s[3]],
        k.weight.data(),
        [w[0], w[1], w[2], w[3], w[4]],
        k.bias.data(),
        k.stride,
        k.padding,
        off.map(|o| o.data()),
    )
    .0
}

/// Max |conv3d_forward − nested-loop oracle|.
pub fn conv_forward_vs_oracle(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let case = ConvCase::random(&mut rng, false);
    let k = case.kernel(&mut rng);
    let x = rand_tensor(&mut rng, &case.x_shape());
    let y = conv3d_forward(&x, &k).unwrap();
    let o = oracle_conv(&x, &k, None);
    y.data().iter().zip(&o).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

pub fn conv_backward(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let case = ConvCase::random(&mut rng, false);
    let k = case.kernel(&mut rng);
    let x = rand_tensor(&mut rng, &case.x_shape());
    let y = conv3d_forward(&x, &k).unwrap();
    let r = rand_tensor(&mut rng, y.shape());
    let g = conv3d_backward(&x, &k, &r).unwrap();
    let ex = fd_err(&mut rng, x.data(), g.x.data(), |p| {
        dot(&conv3d_forward(&with_data(&x, p), &k).unwrap(), &r)
    });
    let ew = fd_err(&mut rng, k.weight.data(), g.weight.data(), |p| {
        let mut k2 = k.clone();
        k2.weight = with_data(&k.weight, p);
        dot(&conv3d_forward(&x, &k2).unwrap(), &r)
    });
    let eb = fd_err(&mut rng, k.bias.data(), g.bias.data(), |p| {
        let mut k2 = k.clone();
        k2.bias = with_data(&k.bias, p);
        dot(&conv3d_forward(&x, &k2).unwrap(), &r)
    });
    ex.max(ew).max(eb)
}

pub fn conv_transpose_backward(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cin = rng.random_range(1..=3);
    let cout = rng.random_range(1..=3);
    let stride = [rng.random_range(1..=2), 2, rng.random_range(1..=2)];
    let ksize = stride.map(|s| if s == 2 { 4 } else { 3 });
    let k = ConvTranspose3dKernel::init(cin, cout, ksize, stride, [1, 1, 1], &mut rng);
    let shape = [cin, rng.random_range(1..=3), 2, rng.random_range(2..=3)];
    let x = rand_tensor(&mut rng, &shape);
    let y = conv_transpose3d_forward(&x, &k).unwrap();
    let r = rand_tensor(&mut rng, y.shape());
    let g = conv_transpose3d_backward(&x, &k, &r).unwrap();
    let ex = fd_err(&mut rng, x.data(), g.x.data(), |p| {
        dot(&conv_transpose3d_forward(&with_data(&x, p), &k).unwrap(), &r)
    });
    let ew = fd_err(&mut rng, k.weight.data(), g.weight.data(), |p| {
        let mut k2 = k.clone();
        k2.weight = with_data(&k.weight, p);
        dot(&conv_transpose3d_forward(&x, &k2).unwrap(), &r)
    });
    let eb = fd_err(&mut rng, k.bias.data(), g.bias.data(), |p| {
        let mut k2 = k.clone();
        k2.bias = with_data(&k.bias, p);
        dot(&conv_transpose3d_forward(&x, &k2).unwrap(), &r)
    });
    ex.max(ew).max(eb)
}

/// Offsets with magnitude in (0.1, 0.4) and random sign: clear of the kinks.
fn smooth_offsets(rng: &mut ChaCha8Rng, shape: [usize; 4]) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.random_range(0.1..0.4);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::from_vec(&shape, data).unwrap()
}

/// Max |tdc_forward − literal bilinear oracle| with fractional offsets.
pub fn tdc_forward_vs_oracle(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let case = ConvCase::random(&mut rng, true);
    let k = case.kernel(&mut rng);
    let x = rand_tensor(&mut rng, &case.x_shape());
    let shape = offset_shape(case.dims(), &k).unwrap();
    let n: usize = shape.iter().product();
    let off = Tensor::from_vec(&shape, (0..n).map(|_| rng.random_range(-1.7..1.7)).collect()).unwrap();
    let y = tdc_forward(&x, &k, &off).unwrap();
    let o = oracle_conv(&x, &k, Some(&off));
    y.data().iter().zip(&o).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Max |TDC with zero offsets − conv3d|.
pub fn tdc_zero_offsets(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let case = ConvCase::random(&mut rng, true);
    let k = case.kernel(&mut rng);
    let x = rand_tensor(&mut rng, &case.x_shape());
    let off = Tensor::zeros(&offset_shape(case.dims(), &k).unwrap());
    let a = tdc_forward(&x, &k, &off).unwrap();
    let b = conv3d_forward(&x, &k).unwrap();
    a.data().iter().zip(b.data()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

/// Uniform integer offset `(dr, dc)`: TDC versus conv3d on the input shifted
/// by that many bins, over output cells whose taps are all in bounds either
/// way. Returns the max difference and the number of cells compared.
pub fn tdc_integer_shift(seed: u64) -> (f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut case = ConvCase::random(&mut rng, true);
    case.input[1] = 5;
    case.input[2] = 5;
    let (dr, dc) = loop {
        let d = (rng.random_range(-1i64..=1), rng.random_range(-1i64..=1));
        if d != (0, 0) {
            break d;
        }
    };
    let k = case.kernel(&mut rng);
    let x = rand_tensor(&mut rng, &case.x_shape());
    let [c, t, h, w] = case.x_shape();
    let shape = offset_shape(case.dims(), &k).unwrap();
    let mut off = Tensor::zeros(&shape);
    let plane = shape[1] * shape[2] * shape[3];
    for n in 0..shape[0] / 2 {
        off.data_mut()[2 * n * plane..(2 * n + 1) * plane].fill(dr as f64);
        off.data_mut()[(2 * n + 1) * plane..(2 * n + 2) * plane].fill(dc as f64);
    }
    let mut shifted = Tensor::zeros(&[c, t, h, w]);
    for ci in 0..c {
        for ti in 0..t {
            for r in 0..h as i64 {
                for q in 0..w as i64 {
                    let (sr, sq) = (r + dr, q + dc);
                    if sr >= 0 && sq >= 0 && sr < h as i64 && sq < w as i64 {
                        shifted.data_mut()[((ci * t + ti) * h + r as usize) * w + q as usize] =
                            x.data()[((ci * t + ti) * h + sr as usize) * w + sq as usize];
                    }
                }
            }
        }
    }
    let a = tdc_forward(&x, &k, &off).unwrap();
    let b = conv3d_forward(&shifted, &k).unwrap();
    let [_, ot, oh, ow] = [a.shape()[0], a.shape()[1], a.shape()[2], a.shape()[3]];
    let inside = |o: usize, s: usize, p: usize, kk: usize, d: i64, n: usize| {
        let lo = (o * s) as i64 - p as i64;
        let hi = lo + kk as i64 - 1;
        lo >= 0 && hi < n as i64 && lo + d >= 0 && hi + d < n as i64
    };
    let mut worst = 0.0f64;
    let mut count = 0;
    for co in 0..a.shape()[0] {
        for to in 0..ot {
            for ho in 0..oh {
                for wo in 0..ow {
                    if !inside(ho, k.stride[1], k.padding[1], case.k[1], dr, h)
                        || !inside(wo, k.stride[2], k.padding[2], case.k[2], dc, w)
                    {
                        continue;
                    }
                    let i = ((co * ot + to) * oh + ho) * ow + wo;
                    worst = worst.max((a.data()[i] - b.data()[i]).abs());
                    count += 1;
                }
            }
        }
    }
    (worst, count)
}

pub fn tdc_backward_check(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let case = ConvCase::random(&mut rng, true);
    let k = case.kernel(&mut rng);
    let x = rand_tensor(&mut rng, &case.x_shape());
    let off = smooth_offsets(&mut rng, offset_shape(case.dims(), &k).unwrap());
    let y = tdc_forward(&x, &k, &off).unwrap();
    let r = rand_tensor(&mut rng, y.shape());
    let g = tdc_backward(&x, &k, &off, &r).unwrap();
    let f = |x: &Tensor<f64>, k: &Conv3dKernel<f64>, off: &Tensor<f64>| dot(&tdc_forward(x, k, off).unwrap(), &r);
    let ex = fd_err(&mut rng, x.data(), g.x.data(), |p| f(&with_data(&x, p), &k, &off));
    let ew = fd_err(&mut rng, k.weight.data(), g.weight.data(), |p| {
        let mut k2 = k.clone();
        k2.weight = with_data(&k.weight, p);
        f(&x, &k2, &off)
    });
    let eb = fd_err(&mut rng, k.bias.data(), g.bias.data(), |p| {
        let mut k2 = k.clone();
        k2.bias = with_data(&k.bias, p);
        f(&x, &k2, &off)
    });
    let eo = fd_err(&mut rng, off.data(), g.offset.data(), |p| f(&x, &k, &with_data(&off, p)));
    ex.max(ew).max(eb).max(eo)
}

/// Largest |grad_off| on a spatially constant input, with every sample kept
/// strictly inside the frame (no padding, offsets pointing inwards).
pub fn tdc_constant_input_offset_grad(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut case = ConvCase::random(&mut rng, true);
    case.pad[1] = 0;
    case.pad[2] = 0;
    let k = case.kernel(&mut rng);
    let [c, t, h, w] = case.x_shape();
    let mut x = Tensor::zeros(&[c, t, h, w]);
    for ci in 0..c {
        for ti in 0..t {
            let v = rng.random_range(-1.0..1.0);
            x.data_mut()[(ci * t + ti) * h * w..(ci * t + ti + 1) * h * w].fill(v);
        }
    }
    let shape = offset_shape(case.dims(), &k).unwrap();
    let plane = shape[1] * shape[2] * shape[3];
    let mut off = Tensor::zeros(&shape);
    let [_, kh, kw] = case.k;
    let inward = |rng: &mut ChaCha8Rng, i: usize, kk: usize| {
        let m = rng.random_range(0.1..0.4);
        if i == 0 {
            m
        } else if i + 1 == kk {
            -m
        } else if rng.random_bool(0.5) {
            m
        } else {
            -m
        }
    };
    for n in 0..shape[0] / 2 {
        let i = (n / kw) % kh;
        let j = n % kw;
        for v in 0..plane {
            off.data_mut()[2 * n * plane + v] = if kh == 1 { 0.0 } else { inward(&mut rng, i, kh) };
            off.data_mut()[(2 * n + 1) * plane + v] = if kw == 1 { 0.0 } else { inward(&mut rng, j, kw) };
        }
    }
    let y = tdc_forward(&x, &k, &off).unwrap();
    let r = rand_tensor(&mut rng, y.shape());
    tdc_backward(&x, &k, &off, &r).unwrap().offset.max_abs()
}

/// Full gradient check of any [`Layer`] through the objective `Σ r·y`.
fn layer_check<L: Layer<f64> + Clone>(rng: &mut ChaCha8Rng, layer: &L, x: &Tensor<f64>) -> f64 {
    let (y, cache) = layer.forward(x).unwrap();
    let r = rand_tensor(rng, y.shape());
    let mut grads = layer.zeros_like();
    let gx = layer.backward(&cache, &r, &mut grads).unwrap();
    let mut worst = fd_err(rng, x.data(), gx.data(), |p| dot(&layer.forward(&with_data(x, p)).unwrap().0, &r));
    let n = layer.params().len();
    for i in 0..n {
        let base = layer.params()[i].1.clone();
        let analytic = grads.params()[i].1.clone();
        let e = fd_err(rng, base.data(), analytic.data(), |p| {
            let mut l2 = layer.clone();
            *l2.params_mut()[i] = with_data(&base, p);
            dot(&l2.forward(x).unwrap().0, &r)
        });
        worst = worst.max(e);
    }
    worst
}

pub fn mnet_backward(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kernel = [1, 3, 5][rng.random_range(0..3)];
    let m = MNet::init(2, rng.random_range(1..=3), kernel, &mut rng).unwrap();
    let shape = [2, rng.random_range(1..=3), rng.random_range(1..=5), rng.random_range(2..=4), rng.random_range(2..=4)];
    let x = rand_tensor(&mut rng, &shape);
    layer_check(&mut rng, &m, &x)
}

pub fn inception_backward(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cin = rng.random_range(1..=3);
    let unit = rng.random_range(1..=2);
    let inc = Inception::init(cin, &[unit, 2 * unit, 2 * unit], &[1, 3, 5], [3, 3], [1, 1, 1], &mut rng).unwrap();
    let shape = [cin, rng.random_range(2..=5), 3, rng.random_range(2..=4)];
    let x = rand_tensor(&mut rng, &shape);
    layer_check(&mut rng, &inc, &x)
}

/// Loss versus a per-pixel loop, and gradient versus central differences.
pub fn bce_check(seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = [3, rng.random_range(1..=4), rng.random_range(1..=5), rng.random_range(1..=5)];
    let n: usize = shape.iter().product();
    let pred = Tensor::from_vec(&shape, (0..n).map(|_| rng.random_range(0.02..0.98)).collect()).unwrap();
    let target = Tensor::from_vec(&shape, (0..n).map(|_| rng.random_range(0.0..=1.0)).collect()).unwrap();
    let (loss, grad) = bce_loss(&pred, &target, Reduction::Sum).unwrap();
    let mut naive = 0.0f64;
    for i in 0..n {
        let (p, d): (f64, f64) = (pred.data()[i], target.data()[i]);
        naive += -(d * p.ln() + (1.0 - d) * (1.0 - p).ln());
    }
    let loss_err = (loss - naive).abs() / naive.abs().max(1.0);
    let grad_err = fd_err(&mut rng, pred.data(), grad.data(), |p| {
        bce_loss(&with_data(&pred, p), &target, Reduction::Sum).unwrap().0
    });
    (loss_err, grad_err)
}

/// Smallest configuration that still exercises every block of the network.
pub fn tiny_model_config(backbone: Backbone, seed: u64) -> ModelConfig {
    ModelConfig {
        backbone,
        snippet_len: 4,
        chirps: 3,
        channel_div: 32,
        stages: 1,
        front_kernel: [3, 3, 3],
        body_kernel: [3, 3, 3],
        up_kernel: 4,
        inception_lengths: [1, 3, 5],
        mnet_kernel: 3,
        offset_kernel: [1, 3, 3],
        seed,
        ..ModelConfig::default()
    }
}

/// BCE-through-network check on `params` and the input snippet. Offset
/// branches are biased to ±0.25 with small weights so that sampled positions
/// stay away from grid lines.
pub fn model_backward(seed: u64, backbone: Backbone) -> ModelCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = RodnetModel::<f64>::new(tiny_model_config(backbone, seed)).unwrap();
    // Zero biases leave padded regions exactly on a ReLU kink, where a
    // centred difference reads slope 1/2 at every step size.
    let names: Vec<bool> = model.named_params().iter().map(|(n, _)| n.ends_with("bias")).collect();
    for (p, is_bias) in model.params_mut().into_iter().zip(names) {
        if is_bias {
            for v in p.data_mut() {
                *v = rng.random_range(-0.1..0.1);
            }
        }
    }
    for b in model.front.iter_mut().chain(model.stages.iter_mut().flat_map(|s| [&mut s.a, &mut s.b])) {
        if let rodforge_nn::model::Block::Tdc(t) = b {
            for v in t.offset.weight.data_mut() {
                *v = rng.random_range(-0.02..0.02);
            }
            for v in t.offset.bias.data_mut() {
                *v = if rng.random_bool(0.5) { 0.25 } else { -0.25 };
            }
        }
    }
    let x = rand_tensor(&mut rng, &[2, 4, 3, 4, 4]);
    let out = model.forward(&x).unwrap();
    let n = out.len();
    let target = Tensor::from_vec(out.shape(), (0..n).map(|_| rng.random_range(0.0..=1.0)).collect()).unwrap();
    let loss_of = |m: &RodnetModel<f64>, x: &Tensor<f64>| {
        bce_loss(&m.forward(x).unwrap(), &target, Reduction::Sum).unwrap().0
    };
    let trace = model.forward_trace(&x).unwrap();
    let (_, g_out) = bce_loss(trace.output(), &target, Reduction::Sum).unwrap();
    let mut grads = model.zeros_like();
    let gx = model.backward(&trace, &g_out, &mut grads).unwrap();

    let mut skipped = 0;
    let mut probed = probes_for(x.len());
    let mut worst = fd_err_piecewise(&mut rng, x.data(), gx.data(), |p| loss_of(&model, &with_data(&x, p)), &mut skipped);
    let count = model.named_params().len();
    for i in 0..count {
        let base = model.named_params()[i].1.clone();
        let analytic = grads.named_params()[i].1.clone();
        let mut probe = model.clone();
        probed += probes_for(base.len());
        let e = fd_err_piecewise(
            &mut rng,
            base.data(),
            analytic.data(),
            |p| {
                *probe.params_mut()[i] = with_data(&base, p);
                loss_of(&probe, &x)
            },
            &mut skipped,
        );
        if e >= REL_TOL {
            eprintln!("{}: relative error {e:.3e}", model.named_params()[i].0);
        }
        worst = worst.max(e);
    }
    ModelCheck {
        max_rel_err: worst,
        probed,
        skipped,
    }
}

fn probes_for(len: usize) -> usize {
    len.min(PROBES)
}

#[derive(Clone, Copy, Debug)]
pub struct ModelCheck {
    pub max_rel_err: f64,
    pub probed: usize,
    /// Probes discarded because they straddle an activation kink.
    pub skipped: usize,
}

impl ModelCheck {
    /// Error within tolerance and at most a tenth of the probes discarded.
    pub fn passed(&self) -> bool {
        self.max_rel_err < REL_TOL && self.skipped * 10 <= self.probed
    }
}
