//! RODNet-lite: chirp merging, an encoder/decoder over `(C, T, H, W)` features
//! and a per-pixel logistic output.
//!
//! Layer plans follow the vanilla and hourglass reference tables with every
//! channel count divided by [`ModelConfig::channel_div`]. The first encoder
//! stage keeps the temporal extent (stride `(1, 2, 2)`) so that the decoder's
//! last transposed convolution, which only upsamples spatially, restores the
//! input snippet length.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::conv::{Conv3dKernel, ConvTranspose3dKernel};
use crate::error::{NnError, Result};
use crate::layers::{relu_backward, relu_forward, sigmoid, Inception, Layer, MNet, TdcLayer};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backbone {
    Vanilla,
    Hourglass,
}

impl std::str::FromStr for Backbone {
    type Err = NnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(Self::Vanilla),
            "hourglass" | "hg" => Ok(Self::Hourglass),
            _ => Err(NnError::Config(format!("unknown backbone '{s}'"))),
        }
    }
}

impl std::fmt::Display for Backbone {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Vanilla => "vanilla",
            Self::Hourglass => "hourglass",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub backbone: Backbone,
    pub use_mnet: bool,
    pub use_tdc: bool,
    pub use_inception: bool,
    pub rf_channels: usize,
    pub classes: usize,
    pub snippet_len: usize,
    pub chirps: usize,
    pub channel_div: usize,
    /// Encoder depth; spatial extents must be divisible by `2^stages`.
    pub stages: usize,
    pub front_kernel: [usize; 3],
    pub body_kernel: [usize; 3],
    /// Spatial extent of the transposed convolutions (even, stride 2).
    pub up_kernel: usize,
    pub inception_lengths: [usize; 3],
    pub mnet_kernel: usize,
    pub offset_kernel: [usize; 3],
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            backbone: Backbone::Hourglass,
            use_mnet: true,
            use_tdc: true,
            use_inception: true,
            rf_channels: 2,
            classes: 3,
            snippet_len: 16,
            chirps: 8,
            channel_div: 4,
            stages: 3,
            front_kernel: [5, 3, 3],
            body_kernel: [9, 5, 5],
            up_kernel: 6,
            inception_lengths: [5, 9, 13],
            mnet_kernel: 3,
            offset_kernel: [3, 3, 3],
            seed: 0,
        }
    }
}

const MNET_CHANNELS: usize = 32;
const HG_FRONT: [usize; 2] = [32, 64];
const STAGE_CHANNELS: [usize; 3] = [64, 128, 256];
const INCEPTION_CHANNELS: usize = 160;

impl ModelConfig {
    fn scaled(&self, c: usize) -> usize {
        (c / self.channel_div).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(NnError::Config(m));
        if self.channel_div == 0 {
            return fail("channel_div must be positive".into());
        }
        if self.stages == 0 || self.stages > STAGE_CHANNELS.len() {
            return fail(format!("stages must be in 1..=3, got {}", self.stages));
        }
        if self.snippet_len == 0 || self.chirps == 0 || self.classes == 0 || self.rf_channels == 0 {
            return fail("snippet_len, chirps, classes and rf_channels must be positive".into());
        }
        if !self.use_mnet && self.chirps != 1 {
            return fail(format!(
                "without M-Net the model takes one chirp per frame, got chirps={}",
                self.chirps
            ));
        }
        let stride_t: usize = 1 << (self.stages - 1);
        if self.snippet_len % stride_t != 0 {
            return fail(format!(
                "snippet_len {} not divisible by temporal downsampling {stride_t}",
                self.snippet_len
            ));
        }
        if self.up_kernel < 2 || self.up_kernel % 2 != 0 {
            return fail(format!("up_kernel must be even and >= 2, got {}", self.up_kernel));
        }
        for k in self.front_kernel.iter().chain(&self.body_kernel).chain(&self.offset_kernel) {
            if k % 2 == 0 {
                return fail(format!("kernel extents must be odd, got {k}"));
            }
        }
        if self.mnet_kernel % 2 == 0 || self.inception_lengths.iter().any(|k| k % 2 == 0) {
            return fail("temporal kernel lengths must be odd".into());
        }
        if self.use_inception {
            Inception::<f64>::split_channels(self.scaled(INCEPTION_CHANNELS))?;
        }
        Ok(())
    }

    fn stage_stride(&self, i: usize) -> [usize; 3] {
        if i == 0 {
            [1, 2, 2]
        } else {
            [2, 2, 2]
        }
    }

    fn up_geometry(&self, i: usize) -> ([usize; 3], [usize; 3], [usize; 3]) {
        let s = self.stage_stride(i);
        let kt = if s[0] == 2 { 4 } else { 3 };
        let ks = self.up_kernel;
        ([kt, ks, ks], s, [1, (ks - 2) / 2, (ks - 2) / 2])
    }

    /// Spatial extents the network accepts must be multiples of this.
    pub fn spatial_multiple(&self) -> usize {
        1 << self.stages
    }
}

/// One trainable block of the fixed layer plan.
#[derive(Clone, Debug)]
pub enum Block<T> {
    Conv(Conv3dKernel<T>),
    Tdc(TdcLayer<T>),
    Inception(Inception<T>),
    Up(ConvTranspose3dKernel<T>),
}

pub enum BlockCache<T: Real> {
    Conv(Tensor<T>),
    Tdc(<TdcLayer<T> as Layer<T>>::Cache),
    Inception(Tensor<T>),
    Up(Tensor<T>),
}

impl<T: Real> Layer<T> for Block<T> {
    type Cache = BlockCache<T>;

    fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, BlockCache<T>)> {
        Ok(match self {
            Block::Conv(l) => {
                let (y, c) = l.forward(x)?;
                (y, BlockCache::Conv(c))
            }
            Block::Tdc(l) => {
                let (y, c) = l.forward(x)?;
                (y, BlockCache::Tdc(c))
            }
            Block::Inception(l) => {
                let (y, c) = l.forward(x)?;
                (y, BlockCache::Inception(c))
            }
            Block::Up(l) => {
                let (y, c) = l.forward(x)?;
                (y, BlockCache::Up(c))
            }
        })
    }

    fn backward(&self, cache: &BlockCache<T>, gy: &Tensor<T>, grads: &mut Self) -> Result<Tensor<T>> {
        match (self, cache, grads) {
            (Block::Conv(l), BlockCache::Conv(c), Block::Conv(g)) => l.backward(c, gy, g),
            (Block::Tdc(l), BlockCache::Tdc(c), Block::Tdc(g)) => l.backward(c, gy, g),
            (Block::Inception(l), BlockCache::Inception(c), Block::Inception(g)) => l.backward(c, gy, g),
            (Block::Up(l), BlockCache::Up(c), Block::Up(g)) => l.backward(c, gy, g),
            _ => Err(NnError::Value("block/cache/gradient kinds disagree".into())),
        }
    }

    fn zeros_like(&self) -> Self {
        match self {
            Block::Conv(l) => Block::Conv(l.zeros_like()),
            Block::Tdc(l) => Block::Tdc(Layer::zeros_like(l)),
            Block::Inception(l) => Block::Inception(Layer::zeros_like(l)),
            Block::Up(l) => Block::Up(l.zeros_like()),
        }
    }

    fn params(&self) -> Vec<(String, &Tensor<T>)> {
        match self {
            Block::Conv(l) => Layer::params(l),
            Block::Tdc(l) => l.params(),
            Block::Inception(l) => l.params(),
            Block::Up(l) => Layer::params(l),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Block::Conv(l) => Layer::params_mut(l),
            Block::Tdc(l) => l.params_mut(),
            Block::Inception(l) => l.params_mut(),
            Block::Up(l) => Layer::params_mut(l),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Stage<T> {
    pub a: Block<T>,
    pub b: Block<T>,
    /// Hourglass only: the skip branch feeding the mirrored decoder level.
    pub skip: Option<(Block<T>, Block<T>)>,
}

#[derive(Clone, Debug)]
pub struct RodnetModel<T> {
    config: ModelConfig,
    pub mnet: Option<MNet<T>>,
    pub front: Vec<Block<T>>,
    pub stages: Vec<Stage<T>>,
    /// Decoder, ordered from the deepest level outwards.
    pub ups: Vec<Block<T>>,
    pub head: Option<Block<T>>,
}

/// Everything the backward pass needs from one forward pass.
pub struct ForwardTrace<T: Real> {
    input_shape: Vec<usize>,
    mnet: Option<<MNet<T> as Layer<T>>::Cache>,
    front: Vec<(BlockCache<T>, Tensor<T>)>,
    stages: Vec<StageTrace<T>>,
    ups: Vec<(BlockCache<T>, Tensor<T>)>,
    head: Option<BlockCache<T>>,
    output: Tensor<T>,
}

struct StageTrace<T: Real> {
    a: (BlockCache<T>, Tensor<T>),
    b: (BlockCache<T>, Tensor<T>),
    skip: Option<((BlockCache<T>, Tensor<T>), (BlockCache<T>, Tensor<T>))>,
}

impl<T: Real> ForwardTrace<T> {
    pub fn output(&self) -> &Tensor<T> {
        &self.output
    }
}

fn act_forward<T: Real>(block: &Block<T>, x: &Tensor<T>) -> Result<(BlockCache<T>, Tensor<T>)> {
    let (mut y, c) = block.forward(x)?;
    relu_forward(&mut y);
    Ok((c, y))
}

fn act_backward<T: Real>(
    block: &Block<T>,
    trace: &(BlockCache<T>, Tensor<T>),
    gy: &Tensor<T>,
    grads: &mut Block<T>,
) -> Result<Tensor<T>> {
    let mut g = gy.clone();
    relu_backward(&trace.1, &mut g);
    block.backward(&trace.0, &g, grads)
}

impl<T: Real> RodnetModel<T> {
    /// Builds the layer plan for `config` with weights drawn from `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let cfg = &config;
        let mnet = if cfg.use_mnet {
            Some(MNet::init(cfg.rf_channels, cfg.scaled(MNET_CHANNELS), cfg.mnet_kernel, &mut rng)?)
        } else {
            None
        };
        let mut c_in = mnet.as_ref().map_or(cfg.rf_channels, |m| m.cout());

        let deformable = |cin: usize, cout: usize, k: [usize; 3], s: [usize; 3], rng: &mut ChaCha8Rng| -> Result<Block<T>> {
            Ok(if cfg.use_tdc {
                Block::Tdc(TdcLayer::init(cin, cout, k, s, cfg.offset_kernel, rng)?)
            } else {
                Block::Conv(Conv3dKernel::init_same(cin, cout, k, s, rng))
            })
        };
        let body = |cin: usize, cout: usize, s: [usize; 3], rng: &mut ChaCha8Rng| {
            Block::Conv(Conv3dKernel::init_same(cin, cout, cfg.body_kernel, s, rng))
        };
        let inception = |cin: usize, rng: &mut ChaCha8Rng| -> Result<Block<T>> {
            let split = Inception::<T>::split_channels(cfg.scaled(INCEPTION_CHANNELS))?;
            let [_, kh, kw] = cfg.body_kernel;
            Ok(Block::Inception(Inception::init(
                cin,
                &split,
                &cfg.inception_lengths,
                [kh, kw],
                [1, 1, 1],
                rng,
            )?))
        };

        let mut front = Vec::new();
        if cfg.backbone == Backbone::Hourglass {
            for &c in &HG_FRONT {
                let cout = cfg.scaled(c);
                front.push(deformable(c_in, cout, cfg.front_kernel, [1, 1, 1], &mut rng)?);
                c_in = cout;
            }
        }

        let channels: Vec<usize> = STAGE_CHANNELS[..cfg.stages].iter().map(|&c| cfg.scaled(c)).collect();
        let mut stages = Vec::with_capacity(cfg.stages);
        for (i, &c) in channels.iter().enumerate() {
            let stride = cfg.stage_stride(i);
            let stage = match cfg.backbone {
                Backbone::Vanilla if i == 0 => Stage {
                    a: deformable(c_in, c, cfg.front_kernel, [1, 1, 1], &mut rng)?,
                    b: deformable(c, c, cfg.front_kernel, stride, &mut rng)?,
                    skip: None,
                },
                Backbone::Vanilla => {
                    let (a, mid) = if cfg.use_inception {
                        let a = inception(c_in, &mut rng)?;
                        (a, cfg.scaled(INCEPTION_CHANNELS))
                    } else {
                        (body(c_in, c, [1, 1, 1], &mut rng), c)
                    };
                    Stage {
                        a,
                        b: body(mid, c, stride, &mut rng),
                        skip: None,
                    }
                }
                Backbone::Hourglass => {
                    let (a, mid) = if cfg.use_inception {
                        (inception(c_in, &mut rng)?, cfg.scaled(INCEPTION_CHANNELS))
                    } else {
                        (body(c_in, c, [1, 1, 1], &mut rng), c)
                    };
                    let b = body(mid, c, stride, &mut rng);
                    let skip_a = body(c_in, c, [1, 1, 1], &mut rng);
                    let skip_b = body(c, c, stride, &mut rng);
                    Stage {
                        a,
                        b,
                        skip: Some((skip_a, skip_b)),
                    }
                }
            };
            stages.push(stage);
            c_in = c;
        }

        let mut ups = Vec::with_capacity(cfg.stages);
        for i in (0..cfg.stages).rev() {
            let cout = match (i, cfg.backbone) {
                (0, Backbone::Vanilla) => cfg.classes,
                (0, Backbone::Hourglass) => channels[0],
                _ => channels[i - 1],
            };
            let (k, s, p) = cfg.up_geometry(i);
            ups.push(Block::Up(ConvTranspose3dKernel::init(c_in, cout, k, s, p, &mut rng)));
            c_in = cout;
        }

        let head = (cfg.backbone == Backbone::Hourglass)
            .then(|| Block::Conv(Conv3dKernel::init_same(c_in, cfg.classes, cfg.body_kernel, [1, 1, 1], &mut rng)));
        Ok(Self {
            config,
            mnet,
            front,
            stages,
            ups,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        x.expect_rank("rodnet_forward", 5)?;
        let s = x.shape();
        let cfg = &self.config;
        let checks = [
            ("C_RF", cfg.rf_channels, s[0]),
            ("T", cfg.snippet_len, s[1]),
            ("n", if cfg.use_mnet { cfg.chirps } else { 1 }, s[2]),
        ];
        for (axis, expected, got) in checks {
            if expected != got {
                return Err(NnError::Shape {
                    op: "rodnet_forward",
                    axis,
                    expected,
                    got,
                });
            }
        }
        let m = cfg.spatial_multiple();
        for (axis, got) in [("H", s[3]), ("W", s[4])] {
            if got % m != 0 {
                return Err(NnError::Shape {
                    op: "rodnet_forward",
                    axis,
                    expected: got.div_ceil(m) * m,
                    got,
                });
            }
        }
        Ok(())
    }

    /// Snippet `(C_RF, T, n, H, W)` to confidence maps `(C_cls, T, H, W)` in (0, 1).
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_trace(x)?.output)
    }

    pub fn forward_trace(&self, x: &Tensor<T>) -> Result<ForwardTrace<T>> {
        self.check_input(x)?;
        let s = x.shape();
        let (mut h, mnet) = match &self.mnet {
            Some(m) => {
                let (y, c) = m.forward(x)?;
                (y, Some(c))
            }
            None => (x.clone().reshape(&[s[0], s[1], s[3], s[4]])?, None),
        };
        let mut front = Vec::with_capacity(self.front.len());
        for b in &self.front {
            let t = act_forward(b, &h)?;
            h = t.1.clone();
            front.push(t);
        }
        let mut stages = Vec::with_capacity(self.stages.len());
        let mut skips = Vec::with_capacity(self.stages.len());
        for st in &self.stages {
            let skip = match &st.skip {
                Some((sa, sb)) => {
                    let ta = act_forward(sa, &h)?;
                    let tb = act_forward(sb, &ta.1)?;
                    skips.push(Some(tb.1.clone()));
                    Some((ta, tb))
                }
                None => {
                    skips.push(None);
                    None
                }
            };
            let ta = act_forward(&st.a, &h)?;
            let tb = act_forward(&st.b, &ta.1)?;
            h = tb.1.clone();
            stages.push(StageTrace { a: ta, b: tb, skip });
        }
        let mut ups = Vec::with_capacity(self.ups.len());
        let last = self.ups.len() - 1;
        for (j, up) in self.ups.iter().enumerate() {
            let level = self.stages.len() - 1 - j;
            if let Some(sk) = &skips[level] {
                h.add_assign(sk)?;
            }
            let (mut y, c) = up.forward(&h)?;
            if j != last {
                relu_forward(&mut y);
            }
            h = y.clone();
            ups.push((c, y));
        }
        let head = match &self.head {
            Some(b) => {
                let (y, c) = b.forward(&h)?;
                h = y;
                Some(c)
            }
            None => None,
        };
        let output = h.map(sigmoid);
        Ok(ForwardTrace {
            input_shape: s.to_vec(),
            mnet,
            front,
            stages,
            ups,
            head,
            output,
        })
    }

    /// Accumulates parameter gradients into `grads` given `∂ℓ/∂output`, and
    /// returns `∂ℓ/∂input`.
    pub fn backward(&self, trace: &ForwardTrace<T>, grad_out: &Tensor<T>, grads: &mut Self) -> Result<Tensor<T>> {
        trace.output.expect_same_shape("rodnet backward", grad_out)?;
        // Through the logistic output.
        let mut g = grad_out.clone();
        for (gv, &p) in g.data_mut().iter_mut().zip(trace.output.data()) {
            *gv *= p * (T::one() - p);
        }
        if let (Some(head), Some(c)) = (&self.head, &trace.head) {
            g = head.backward(c, &g, grads.head.as_mut().expect("gradient layout matches model"))?;
        }
        let last = self.ups.len() - 1;
        let mut skip_grads: Vec<Option<Tensor<T>>> = vec![None; self.stages.len()];
        for j in (0..self.ups.len()).rev() {
            let (c, y) = &trace.ups[j];
            if j != last {
                relu_backward(y, &mut g);
            }
            g = self.ups[j].backward(c, &g, &mut grads.ups[j])?;
            let level = self.stages.len() - 1 - j;
            if self.stages[level].skip.is_some() {
                skip_grads[level] = Some(g.clone());
            }
        }
        for i in (0..self.stages.len()).rev() {
            let st = &self.stages[i];
            let tr = &trace.stages[i];
            let gs = &mut grads.stages[i];
            let gb = act_backward(&st.b, &tr.b, &g, &mut gs.b)?;
            g = act_backward(&st.a, &tr.a, &gb, &mut gs.a)?;
            if let (Some((sa, sb)), Some((ta, tb)), Some(gsk)) = (&st.skip, &tr.skip, skip_grads[i].take()) {
                let (gsa, gsb) = gs.skip.as_mut().map(|(a, b)| (a, b)).expect("gradient layout matches model");
                let gm = act_backward(sb, tb, &gsk, gsb)?;
                let gin = act_backward(sa, ta, &gm, gsa)?;
                g.add_assign(&gin)?;
            }
        }
        for j in (0..self.front.len()).rev() {
            g = act_backward(&self.front[j], &trace.front[j], &g, &mut grads.front[j])?;
        }
        match (&self.mnet, &trace.mnet) {
            (Some(m), Some(c)) => m.backward(c, &g, grads.mnet.as_mut().expect("gradient layout matches model")),
            _ => g.reshape(&trace.input_shape),
        }
    }

    /// Zero-valued gradient accumulator with this model's layout.
    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config.clone(),
            mnet: self.mnet.as_ref().map(|m| Layer::zeros_like(m)),
            front: self.front.iter().map(|b| b.zeros_like()).collect(),
            stages: self
                .stages
                .iter()
                .map(|s| Stage {
                    a: s.a.zeros_like(),
                    b: s.b.zeros_like(),
                    skip: s.skip.as_ref().map(|(a, b)| (a.zeros_like(), b.zeros_like())),
                })
                .collect(),
            ups: self.ups.iter().map(|b| b.zeros_like()).collect(),
            head: self.head.as_ref().map(|b| b.zeros_like()),
        }
    }

    /// Every parameter tensor with a stable dotted name, in checkpoint order.
    pub fn named_params(&self) -> Vec<(String, &Tensor<T>)> {
        fn collect<'a, T: Real>(m: &'a RodnetModel<T>) -> Vec<(String, Vec<(String, &'a Tensor<T>)>)> {
            let mut v = Vec::new();
            if let Some(mn) = &m.mnet {
                v.push(("mnet".to_string(), mn.params()));
            }
            for (i, b) in m.front.iter().enumerate() {
                v.push((format!("front{i}"), b.params()));
            }
            for (i, s) in m.stages.iter().enumerate() {
                v.push((format!("stage{i}.a"), s.a.params()));
                v.push((format!("stage{i}.b"), s.b.params()));
                if let Some((a, b)) = &s.skip {
                    v.push((format!("stage{i}.skip_a"), a.params()));
                    v.push((format!("stage{i}.skip_b"), b.params()));
                }
            }
            for (i, b) in m.ups.iter().enumerate() {
                v.push((format!("up{i}"), b.params()));
            }
            if let Some(h) = &m.head {
                v.push(("head".to_string(), h.params()));
            }
            v
        }
        collect(self)
            .into_iter()
            .flat_map(|(prefix, block)| block.into_iter().map(move |(n, t)| (format!("{prefix}.{n}"), t)))
            .collect()
    }

    /// Mutable parameters in the same order as [`RodnetModel::named_params`].
    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v = Vec::new();
        if let Some(m) = &mut self.mnet {
            v.extend(m.params_mut());
        }
        for b in &mut self.front {
            v.extend(b.params_mut());
        }
        for s in &mut self.stages {
            v.extend(s.a.params_mut());
            v.extend(s.b.params_mut());
            if let Some((a, b)) = &mut s.skip {
                v.extend(a.params_mut());
                v.extend(b.params_mut());
            }
        }
        for b in &mut self.ups {
            v.extend(b.params_mut());
        }
        if let Some(h) = &mut self.head {
            v.extend(h.params_mut());
        }
        v
    }

    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.len()).sum()
    }

    /// Same architecture and values in another precision.
    pub fn cast<U: Real>(&self) -> RodnetModel<U> {
        let mut out = RodnetModel::<U>::new(self.config.clone()).expect("config already validated");
        for (dst, (_, src)) in out.params_mut().into_iter().zip(self.named_params()) {
            *dst = src.cast();
        }
        out
    }
}

/// Confidence maps for one snippet.
pub fn rodnet_forward<T: Real>(snippet: &Tensor<T>, model: &RodnetModel<T>) -> Result<Tensor<T>> {
    model.forward(snippet)
}
