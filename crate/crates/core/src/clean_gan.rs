//! Grayscale unpaired image translation for signature cleaning.
//!
//! Two generators map between raw crops (domain X: signatures obscured by
//! stamps, text and form elements) and isolated signatures (domain Y), with
//! per-domain discriminators. Training mixes the adversarial terms, the L1
//! cycle-consistency reconstruction term, and an optional paired L1 term on
//! manually cleaned examples, which counters mode collapse at small data
//! scale.
//!
//! Generators are encoder-decoder networks with six residual blocks at the
//! bottleneck; discriminators reduce to a single realness scalar through
//! strided convolutions and global pooling. Both operate on the canonical
//! 256x256 grayscale canvas with outputs in `[0, 1]`.

use crate::nn::{
    bce, bce_grad, install_params, leaky_relu, leaky_relu_backward, load_checkpoint, relu,
    relu_backward, save_checkpoint, sigmoid, sigmoid_backward, sigmoid_scalar, Adam, Conv2d,
    Conv2dCtx, Conv2dGrads, Dense, DenseGrads, GlobalAvgPool, ModelError, ModelKind, Tensor3,
};
use crate::raster::{Pixels, CANVAS_SIZE};
use crate::types::{SignatureImage, SignatureState};
use ndarray::{Array1, Array3};
use rand::{seq::SliceRandom, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

const LRELU_SLOPE: f32 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanerDescriptor {
    pub input: usize,
    /// Channel width after the first convolution; deeper stages double it.
    pub base_channels: usize,
    pub residual_blocks: usize,
}

impl Default for CleanerDescriptor {
    fn default() -> Self {
        Self {
            input: CANVAS_SIZE,
            base_channels: 8,
            residual_blocks: 6,
        }
    }
}

impl CleanerDescriptor {
    /// Reduced width for fast desk-scale experiments and tests.
    pub fn toy() -> Self {
        Self {
            base_channels: 4,
            ..Self::default()
        }
    }
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

/// Encoder-decoder with residual blocks at the bottleneck and additive
/// skip connections between matching encoder/decoder scales. The skips
/// carry stroke-level detail past the bottleneck, which thin pen lines
/// need to survive reconstruction.
#[derive(Debug, Clone)]
pub struct Generator {
    head: Conv2d,
    downs: Vec<Conv2d>,
    res: Vec<(Conv2d, Conv2d)>,
    ups: Vec<Conv2d>,
    tail: Conv2d,
}

pub struct GeneratorGrads {
    head: Conv2dGrads,
    downs: Vec<Conv2dGrads>,
    res: Vec<(Conv2dGrads, Conv2dGrads)>,
    ups: Vec<Conv2dGrads>,
    tail: Conv2dGrads,
}

impl std::ops::AddAssign<&GeneratorGrads> for GeneratorGrads {
    fn add_assign(&mut self, rhs: &GeneratorGrads) {
        self.head += &rhs.head;
        for (a, b) in self.downs.iter_mut().zip(&rhs.downs) {
            *a += b;
        }
        for ((a1, a2), (b1, b2)) in self.res.iter_mut().zip(&rhs.res) {
            *a1 += b1;
            *a2 += b2;
        }
        for (a, b) in self.ups.iter_mut().zip(&rhs.ups) {
            *a += b;
        }
        self.tail += &rhs.tail;
    }
}

pub struct GeneratorCtx {
    head: (Conv2dCtx, Tensor3),
    downs: Vec<(Conv2dCtx, Tensor3)>,
    res: Vec<(Conv2dCtx, Tensor3, Conv2dCtx)>,
    ups: Vec<(Conv2dCtx, Tensor3)>,
    tail: (Conv2dCtx, Tensor3),
}

impl Generator {
    fn new(desc: &CleanerDescriptor, rng: &mut ChaCha8Rng) -> Self {
        let b = desc.base_channels;
        let widths = [b, 2 * b, 4 * b, 4 * b];
        let head = Conv2d::new(1, b, 3, 1, 1, rng);
        let downs = vec![
            Conv2d::new(widths[0], widths[1], 3, 2, 1, rng),
            Conv2d::new(widths[1], widths[2], 3, 2, 1, rng),
            Conv2d::new(widths[2], widths[3], 3, 2, 1, rng),
        ];
        let res = (0..desc.residual_blocks)
            .map(|_| {
                (
                    Conv2d::new(widths[3], widths[3], 3, 1, 1, rng),
                    Conv2d::new(widths[3], widths[3], 3, 1, 1, rng),
                )
            })
            .collect();
        // decoder stages add the encoder feature map of the same scale
        let ups = vec![
            Conv2d::new(widths[3], widths[2], 3, 1, 1, rng),
            Conv2d::new(widths[2], widths[1], 3, 1, 1, rng),
            Conv2d::new(widths[1], widths[0], 3, 1, 1, rng),
        ];
        let tail = Conv2d::new_small(widths[0], 1, 3, 1, 1, rng);
        Self {
            head,
            downs,
            res,
            ups,
            tail,
        }
    }

    /// Inference pass; output in `[0, 1]`, same spatial shape.
    pub fn infer(&self, x: &Tensor3) -> Tensor3 {
        let h0 = relu(self.head.infer(x));
        let h1 = relu(self.downs[0].infer(&h0));
        let h2 = relu(self.downs[1].infer(&h1));
        let mut cur = relu(self.downs[2].infer(&h2));
        for (c1, c2) in &self.res {
            let inner = c2.infer(&relu(c1.infer(&cur)));
            cur += &inner;
        }
        let skips = [h2, h1, h0];
        for (u, skip) in self.ups.iter().zip(skips.iter()) {
            let up = crate::nn::Upsample2x.forward(&cur);
            let mut pre = u.infer(&up);
            pre += skip;
            cur = relu(pre);
        }
        sigmoid(self.tail.infer(&cur))
    }

    fn forward(&self, x: &Tensor3) -> (Tensor3, GeneratorCtx) {
        let (h, hctx) = self.head.forward(x);
        let h = relu(h);
        let mut cur = h.clone();
        let head = (hctx, h);
        let mut downs = Vec::new();
        for d in &self.downs {
            let (y, ctx) = d.forward(&cur);
            let y = relu(y);
            cur = y.clone();
            downs.push((ctx, y));
        }
        let mut res = Vec::new();
        for (c1, c2) in &self.res {
            let (i1, ctx1) = c1.forward(&cur);
            let r1 = relu(i1);
            let (i2, ctx2) = c2.forward(&r1);
            cur += &i2;
            res.push((ctx1, r1, ctx2));
        }
        let mut ups = Vec::new();
        for (i, u) in self.ups.iter().enumerate() {
            let up = crate::nn::Upsample2x.forward(&cur);
            let (mut pre, ctx) = u.forward(&up);
            let skip = if i == 0 {
                &downs[1].1
            } else if i == 1 {
                &downs[0].1
            } else {
                &head.1
            };
            pre += skip;
            let y = relu(pre);
            cur = y.clone();
            ups.push((ctx, y));
        }
        let (t, tctx) = self.tail.forward(&cur);
        let out = sigmoid(t);
        let tail = (tctx, out.clone());
        (
            out,
            GeneratorCtx {
                head,
                downs,
                res,
                ups,
                tail,
            },
        )
    }

    fn backward(&self, ctx: &GeneratorCtx, dout: &Tensor3, grads: &mut GeneratorGrads) -> Tensor3 {
        let dt = sigmoid_backward(dout, &ctx.tail.1);
        let mut dcur = self.tail.backward(&ctx.tail.0, &dt, &mut grads.tail);
        // gradient flowing into each encoder skip from the decoder adds
        let mut skip_grads: [Option<Tensor3>; 3] = [None, None, None];
        for (i, u) in self.ups.iter().enumerate().rev() {
            let (uctx, uout) = &ctx.ups[i];
            let dpre = relu_backward(&dcur, uout);
            // the add routes the same gradient to the skip source:
            // skip index 0 -> downs[1], 1 -> downs[0], 2 -> head
            skip_grads[i] = Some(dpre.clone());
            let dup = u.backward(uctx, &dpre, &mut grads.ups[i]);
            dcur = crate::nn::Upsample2x.backward(&dup);
        }
        for (i, (c1, c2)) in self.res.iter().enumerate().rev() {
            let (ctx1, r1, ctx2) = &ctx.res[i];
            let (g1, g2) = &mut grads.res[i];
            let dinner = c2.backward(ctx2, &dcur, g2);
            let dinner = relu_backward(&dinner, r1);
            let dskip = c1.backward(ctx1, &dinner, g1);
            dcur += &dskip; // residual block passes the gradient through
        }
        for (i, d) in self.downs.iter().enumerate().rev() {
            match i {
                1 => dcur += skip_grads[0].as_ref().expect("set in decoder pass"),
                0 => dcur += skip_grads[1].as_ref().expect("set in decoder pass"),
                _ => {}
            }
            let (dctx, dout_relu) = &ctx.downs[i];
            let drelu = relu_backward(&dcur, dout_relu);
            dcur = d.backward(dctx, &drelu, &mut grads.downs[i]);
        }
        dcur += skip_grads[2].as_ref().expect("set in decoder pass");
        let drelu = relu_backward(&dcur, &ctx.head.1);
        self.head.backward(&ctx.head.0, &drelu, &mut grads.head)
    }

    fn zero_grads(&self) -> GeneratorGrads {
        GeneratorGrads {
            head: self.head.zero_grads(),
            downs: self.downs.iter().map(Conv2d::zero_grads).collect(),
            res: self
                .res
                .iter()
                .map(|(a, b)| (a.zero_grads(), b.zero_grads()))
                .collect(),
            ups: self.ups.iter().map(Conv2d::zero_grads).collect(),
            tail: self.tail.zero_grads(),
        }
    }

    fn adam_step(&mut self, grads: &GeneratorGrads, opt: &mut Adam, slot: &mut usize) {
        self.head.adam_step(&grads.head, opt, slot);
        for (d, g) in self.downs.iter_mut().zip(&grads.downs) {
            d.adam_step(g, opt, slot);
        }
        for ((c1, c2), (g1, g2)) in self.res.iter_mut().zip(&grads.res) {
            c1.adam_step(g1, opt, slot);
            c2.adam_step(g2, opt, slot);
        }
        for (u, g) in self.ups.iter_mut().zip(&grads.ups) {
            u.adam_step(g, opt, slot);
        }
        self.tail.adam_step(&grads.tail, opt, slot);
    }

    fn param_slices(&self) -> Vec<&[f32]> {
        let mut out = self.head.param_slices();
        for d in &self.downs {
            out.extend(d.param_slices());
        }
        for (c1, c2) in &self.res {
            out.extend(c1.param_slices());
            out.extend(c2.param_slices());
        }
        for u in &self.ups {
            out.extend(u.param_slices());
        }
        out.extend(self.tail.param_slices());
        out
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f32]> {
        let mut out = self.head.param_slices_mut();
        for d in &mut self.downs {
            out.extend(d.param_slices_mut());
        }
        for (c1, c2) in &mut self.res {
            out.extend(c1.param_slices_mut());
            out.extend(c2.param_slices_mut());
        }
        for u in &mut self.ups {
            out.extend(u.param_slices_mut());
        }
        out.extend(self.tail.param_slices_mut());
        out
    }
}

// ---------------------------------------------------------------------------
// Discriminator
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Discriminator {
    convs: Vec<Conv2d>,
    head: Dense,
}

pub struct DiscriminatorGrads {
    convs: Vec<Conv2dGrads>,
    head: DenseGrads,
}

impl std::ops::AddAssign<&DiscriminatorGrads> for DiscriminatorGrads {
    fn add_assign(&mut self, rhs: &DiscriminatorGrads) {
        for (a, b) in self.convs.iter_mut().zip(&rhs.convs) {
            *a += b;
        }
        self.head += &rhs.head;
    }
}

pub struct DiscriminatorCtx {
    convs: Vec<(Conv2dCtx, Tensor3)>,
    pooled: Array1<f32>,
    feat_dim: (usize, usize, usize),
    prob: f32,
}

impl Discriminator {
    fn new(desc: &CleanerDescriptor, rng: &mut ChaCha8Rng) -> Self {
        let b = desc.base_channels;
        let widths = [b, 2 * b, 4 * b, 4 * b];
        let mut convs = Vec::new();
        let mut ic = 1;
        for &oc in &widths {
            convs.push(Conv2d::new(ic, oc, 3, 2, 1, rng));
            ic = oc;
        }
        let head = Dense::new_small(ic, 1, rng);
        Self { convs, head }
    }

    /// Probability that the input is a real domain sample.
    pub fn prob_real(&self, x: &Tensor3) -> f32 {
        let mut cur = x.clone();
        for c in &self.convs {
            cur = leaky_relu(c.infer(&cur), LRELU_SLOPE);
        }
        let pooled = GlobalAvgPool.forward(&cur);
        sigmoid_scalar(self.head.forward(&pooled)[0])
    }

    fn forward(&self, x: &Tensor3) -> (f32, DiscriminatorCtx) {
        let mut cur = x.clone();
        let mut convs = Vec::new();
        for c in &self.convs {
            let (y, ctx) = c.forward(&cur);
            let y = leaky_relu(y, LRELU_SLOPE);
            cur = y.clone();
            convs.push((ctx, y));
        }
        let feat_dim = cur.dim();
        let pooled = GlobalAvgPool.forward(&cur);
        let prob = sigmoid_scalar(self.head.forward(&pooled)[0]);
        (
            prob,
            DiscriminatorCtx {
                convs,
                pooled,
                feat_dim,
                prob,
            },
        )
    }

    /// Backprop `d loss / d prob` through the net; returns the input
    /// gradient. Parameter gradients accumulate into `grads`.
    fn backward(
        &self,
        ctx: &DiscriminatorCtx,
        dprob: f32,
        grads: &mut DiscriminatorGrads,
    ) -> Tensor3 {
        let dlogit = dprob * ctx.prob * (1.0 - ctx.prob);
        let dpooled = self.head.backward(
            &ctx.pooled,
            &Array1::from_elem(1, dlogit),
            &mut grads.head,
        );
        let mut dcur = GlobalAvgPool.backward(&dpooled, ctx.feat_dim);
        for (i, c) in self.convs.iter().enumerate().rev() {
            let (cctx, cout) = &ctx.convs[i];
            let drelu = leaky_relu_backward(&dcur, cout, LRELU_SLOPE);
            dcur = c.backward(cctx, &drelu, &mut grads.convs[i]);
        }
        dcur
    }

    fn zero_grads(&self) -> DiscriminatorGrads {
        DiscriminatorGrads {
            convs: self.convs.iter().map(Conv2d::zero_grads).collect(),
            head: self.head.zero_grads(),
        }
    }

    fn adam_step(&mut self, grads: &DiscriminatorGrads, opt: &mut Adam, slot: &mut usize) {
        for (c, g) in self.convs.iter_mut().zip(&grads.convs) {
            c.adam_step(g, opt, slot);
        }
        self.head.adam_step(&grads.head, opt, slot);
    }

    fn param_slices(&self) -> Vec<&[f32]> {
        let mut out = Vec::new();
        for c in &self.convs {
            out.extend(c.param_slices());
        }
        out.extend(self.head.param_slices());
        out
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f32]> {
        let mut out = Vec::new();
        for c in &mut self.convs {
            out.extend(c.param_slices_mut());
        }
        out.extend(self.head.param_slices_mut());
        out
    }
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

/// The full cleaner: generators `g: X->Y`, `f: Y->X` and per-domain
/// discriminators.
#[derive(Debug, Clone)]
pub struct CleanerModel {
    descriptor: CleanerDescriptor,
    pub g: Generator,
    pub f: Generator,
    pub d_x: Discriminator,
    pub d_y: Discriminator,
}

impl CleanerModel {
    pub fn new(descriptor: CleanerDescriptor, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            g: Generator::new(&descriptor, &mut rng),
            f: Generator::new(&descriptor, &mut rng),
            d_x: Discriminator::new(&descriptor, &mut rng),
            d_y: Discriminator::new(&descriptor, &mut rng),
            descriptor,
        }
    }

    pub fn descriptor(&self) -> &CleanerDescriptor {
        &self.descriptor
    }

    /// Evaluate the cycle-consistency metric of this model's generators.
    pub fn cycle_loss_on(&self, batch_x: &[Pixels], batch_y: &[Pixels]) -> Result<f64, ModelError> {
        cycle_loss(
            |px| tensor_to_pixels(&self.g.infer(&pixels_to_tensor(px))),
            |px| tensor_to_pixels(&self.f.infer(&pixels_to_tensor(px))),
            batch_x,
            batch_y,
        )
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let mut params: Vec<&[f32]> = Vec::new();
        params.extend(self.g.param_slices());
        params.extend(self.f.param_slices());
        params.extend(self.d_x.param_slices());
        params.extend(self.d_y.param_slices());
        save_checkpoint(path, ModelKind::Cleaner, &self.descriptor, &params)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let (descriptor, blob): (CleanerDescriptor, Vec<f32>) =
            load_checkpoint(path, ModelKind::Cleaner)?;
        let mut model = Self::new(descriptor, 0);
        let mut tensors = model.g.param_slices_mut();
        tensors.extend(model.f.param_slices_mut());
        tensors.extend(model.d_x.param_slices_mut());
        tensors.extend(model.d_y.param_slices_mut());
        install_params(&blob, tensors)?;
        Ok(model)
    }
}

fn pixels_to_tensor(px: &Pixels) -> Tensor3 {
    let (h, w) = px.dim();
    Array3::from_shape_fn((1, h, w), |(_, y, x)| px[(y, x)])
}

fn tensor_to_pixels(t: &Tensor3) -> Pixels {
    let (_, h, w) = t.dim();
    ndarray::Array2::from_shape_fn((h, w), |(y, x)| t[(0, y, x)].clamp(0.0, 1.0))
}

/// Cycle-consistency loss over two batches: the mean over X of
/// `||F(G(x)) - x||_1` plus the mean over Y of `||G(F(y)) - y||_1`, where
/// the L1 norm sums absolute per-pixel differences. Accumulates in f64.
///
/// Generic over the mapping functions so reference maps (identity,
/// constants) evaluate the same formula as trained generators.
pub fn cycle_loss<G, F>(g: G, f: F, batch_x: &[Pixels], batch_y: &[Pixels]) -> Result<f64, ModelError>
where
    G: Fn(&Pixels) -> Pixels,
    F: Fn(&Pixels) -> Pixels,
{
    if batch_x.is_empty() || batch_y.is_empty() {
        return Err(ModelError::InvalidInput("empty batch".into()));
    }
    let mut x_term = 0.0f64;
    for x in batch_x {
        let rec = f(&g(x));
        if rec.dim() != x.dim() {
            return Err(ModelError::InvalidInput(format!(
                "round trip changed shape: {:?} -> {:?}",
                x.dim(),
                rec.dim()
            )));
        }
        x_term += l1(&rec, x);
    }
    let mut y_term = 0.0f64;
    for y in batch_y {
        let rec = g(&f(y));
        if rec.dim() != y.dim() {
            return Err(ModelError::InvalidInput(format!(
                "round trip changed shape: {:?} -> {:?}",
                y.dim(),
                rec.dim()
            )));
        }
        y_term += l1(&rec, y);
    }
    Ok(x_term / batch_x.len() as f64 + y_term / batch_y.len() as f64)
}

fn l1(a: &Pixels, b: &Pixels) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (f64::from(*x) - f64::from(*y)).abs())
        .sum()
}

/// Training images for the cleaner; unpaired sets must be non-empty.
#[derive(Debug, Clone, Default)]
pub struct CleanTrainingSet {
    pub unpaired_x: Vec<Pixels>,
    pub unpaired_y: Vec<Pixels>,
    pub paired: Vec<(Pixels, Pixels)>,
}

#[derive(Debug, Clone)]
pub struct CleanerTrainOptions {
    pub epochs: usize,
    pub seed: u64,
    pub lr: f32,
    pub lambda_cyc: f32,
    pub lambda_pair: f32,
    pub descriptor: CleanerDescriptor,
}

impl Default for CleanerTrainOptions {
    fn default() -> Self {
        Self {
            epochs: 200,
            seed: 7,
            lr: 2e-4,
            lambda_cyc: 10.0,
            lambda_pair: 5.0,
            descriptor: CleanerDescriptor::default(),
        }
    }
}

/// Per-epoch record; `cycle_metric` is the public cycle-consistency value
/// evaluated on the unpaired training sets at epoch end.
#[derive(Debug, Clone)]
pub struct CleanerEpochStats {
    pub epoch: usize,
    pub cycle_metric: f64,
    pub generator_adv_loss: f64,
    pub discriminator_loss: f64,
    pub paired_l1: f64,
}

struct PerPixel {
    scale: f32,
}

impl PerPixel {
    fn of(t: &Tensor3) -> Self {
        Self {
            scale: 1.0 / t.len() as f32,
        }
    }

    /// Mean-per-pixel L1 and its gradient w.r.t. the first argument.
    fn l1_with_grad(&self, a: &Tensor3, b: &Tensor3) -> (f64, Tensor3) {
        let mut grad = a.clone();
        let mut total = 0.0f64;
        grad.zip_mut_with(b, |ga, vb| {
            let diff = *ga - *vb;
            total += f64::from(diff.abs());
            *ga = if diff > 0.0 {
                self.scale
            } else if diff < 0.0 {
                -self.scale
            } else {
                0.0
            };
        });
        (total * f64::from(self.scale), grad)
    }
}

/// Train the cleaner. Requires non-empty unpaired sets; the paired set may
/// be empty (pure unpaired mode). Returns the model and per-epoch history.
pub fn train_cleaner(
    data: &CleanTrainingSet,
    opts: &CleanerTrainOptions,
) -> Result<(CleanerModel, Vec<CleanerEpochStats>), ModelError> {
    if data.unpaired_x.is_empty() || data.unpaired_y.is_empty() {
        return Err(ModelError::Data(
            "both unpaired domains must be non-empty".into(),
        ));
    }
    let n = opts.descriptor.input;
    for px in data
        .unpaired_x
        .iter()
        .chain(data.unpaired_y.iter())
        .chain(data.paired.iter().flat_map(|(a, b)| [a, b]))
    {
        if px.dim() != (n, n) {
            return Err(ModelError::InvalidInput(format!(
                "training images must be {n}x{n}"
            )));
        }
    }

    let mut model = CleanerModel::new(opts.descriptor.clone(), opts.seed);
    let mut opt_g = Adam::with_betas(opts.lr, 0.5, 0.999);
    let mut opt_f = Adam::with_betas(opts.lr, 0.5, 0.999);
    let mut opt_dx = Adam::with_betas(opts.lr, 0.5, 0.999);
    let mut opt_dy = Adam::with_betas(opts.lr, 0.5, 0.999);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xc1ea);
    let mut history = Vec::with_capacity(opts.epochs);

    let mut order_x: Vec<usize> = (0..data.unpaired_x.len()).collect();
    let mut order_y: Vec<usize> = (0..data.unpaired_y.len()).collect();
    let steps = data.unpaired_x.len().max(data.unpaired_y.len());

    for epoch in 1..=opts.epochs {
        order_x.shuffle(&mut rng);
        order_y.shuffle(&mut rng);
        let mut adv_sum = 0.0f64;
        let mut d_sum = 0.0f64;
        let mut pair_sum = 0.0f64;
        let mut cycle_sum = 0.0f64;
        for step in 0..steps {
            let x = pixels_to_tensor(&data.unpaired_x[order_x[step % order_x.len()]]);
            let y = pixels_to_tensor(&data.unpaired_y[order_y[step % order_y.len()]]);
            let paired = (!data.paired.is_empty() && opts.lambda_pair > 0.0).then(|| {
                let (raw, target) = &data.paired[(epoch * steps + step) % data.paired.len()];
                (pixels_to_tensor(raw), pixels_to_tensor(target))
            });

            // ---- generator step (D parameters frozen) ----
            // The two cycle directions are independent given the model, so
            // they run as parallel paths with their own gradient buffers.
            let per_px = PerPixel::of(&x);
            let lambda_cyc = opts.lambda_cyc;
            let path_x = || {
                // x -> G -> fake_y -> F -> rec_x, with D_Y scoring fake_y
                let mut g_grads = model.g.zero_grads();
                let mut f_grads = model.f.zero_grads();
                let mut d_scratch = model.d_y.zero_grads();
                let (fake_y, ctx_g) = model.g.forward(&x);
                let (rec_x, ctx_f) = model.f.forward(&fake_y);
                let (p_fy, dctx_y) = model.d_y.forward(&fake_y);
                let (cyc_l1, mut d_rec) = per_px.l1_with_grad(&rec_x, &x);
                d_rec.mapv_inplace(|v| v * lambda_cyc);
                let mut d_fake_y = model.f.backward(&ctx_f, &d_rec, &mut f_grads);
                let d_adv = model.d_y.backward(
                    &dctx_y,
                    bce_grad(f64::from(p_fy), 1.0) as f32,
                    &mut d_scratch,
                );
                d_fake_y += &d_adv;
                model.g.backward(&ctx_g, &d_fake_y, &mut g_grads);
                (g_grads, f_grads, fake_y, p_fy, dctx_y, cyc_l1)
            };
            let path_y = || {
                // y -> F -> fake_x -> G -> rec_y, with D_X scoring fake_x
                let mut g_grads = model.g.zero_grads();
                let mut f_grads = model.f.zero_grads();
                let mut d_scratch = model.d_x.zero_grads();
                let (fake_x, ctx_f) = model.f.forward(&y);
                let (rec_y, ctx_g) = model.g.forward(&fake_x);
                let (p_fx, dctx_x) = model.d_x.forward(&fake_x);
                let (cyc_l1, mut d_rec) = per_px.l1_with_grad(&rec_y, &y);
                d_rec.mapv_inplace(|v| v * lambda_cyc);
                let mut d_fake_x = model.g.backward(&ctx_g, &d_rec, &mut g_grads);
                let d_adv = model.d_x.backward(
                    &dctx_x,
                    bce_grad(f64::from(p_fx), 1.0) as f32,
                    &mut d_scratch,
                );
                d_fake_x += &d_adv;
                model.f.backward(&ctx_f, &d_fake_x, &mut f_grads);
                (g_grads, f_grads, fake_x, p_fx, dctx_x, cyc_l1)
            };
            let (
                (mut g_grads, f_grads_a, fake_y, p_fy, dctx_y, cyc_x),
                (g_grads_b, mut f_grads, fake_x, p_fx, dctx_x, cyc_y),
            ) = rayon::join(path_x, path_y);
            g_grads += &g_grads_b;
            f_grads += &f_grads_a;
            adv_sum += bce(f64::from(p_fy), 1.0) + bce(f64::from(p_fx), 1.0);
            // per-pixel means scale back to the L1-sum reading of the
            // cycle term (one x sample + one y sample per step)
            cycle_sum += (cyc_x + cyc_y) * f64::from(x.len() as u32);

            // paired supervision on G only (the clean direction has targets)
            if let Some((raw, target)) = &paired {
                let (out, ctx_p) = model.g.forward(raw);
                let (pl1, mut d_out) = per_px.l1_with_grad(&out, target);
                pair_sum += pl1;
                d_out.mapv_inplace(|v| v * opts.lambda_pair);
                model.g.backward(&ctx_p, &d_out, &mut g_grads);
            }

            opt_g.begin_step();
            let mut slot = 0;
            model.g.adam_step(&g_grads, &mut opt_g, &mut slot);
            opt_f.begin_step();
            slot = 0;
            model.f.adam_step(&f_grads, &mut opt_f, &mut slot);

            // ---- discriminator step ----
            // D parameters were untouched above, so the fake-side contexts
            // from the generator step are still valid here.
            let ((dy_grads, d_y_loss), (dx_grads, d_x_loss)) = rayon::join(
                || {
                    let mut grads = model.d_y.zero_grads();
                    let (p_real, ctx_real) = model.d_y.forward(&y);
                    let loss =
                        bce(f64::from(p_real), 1.0) + bce(f64::from(p_fy), 0.0);
                    model.d_y.backward(
                        &ctx_real,
                        bce_grad(f64::from(p_real), 1.0) as f32,
                        &mut grads,
                    );
                    model.d_y.backward(
                        &dctx_y,
                        bce_grad(f64::from(p_fy), 0.0) as f32,
                        &mut grads,
                    );
                    (grads, loss)
                },
                || {
                    let mut grads = model.d_x.zero_grads();
                    let (p_real, ctx_real) = model.d_x.forward(&x);
                    let loss =
                        bce(f64::from(p_real), 1.0) + bce(f64::from(p_fx), 0.0);
                    model.d_x.backward(
                        &ctx_real,
                        bce_grad(f64::from(p_real), 1.0) as f32,
                        &mut grads,
                    );
                    model.d_x.backward(
                        &dctx_x,
                        bce_grad(f64::from(p_fx), 0.0) as f32,
                        &mut grads,
                    );
                    (grads, loss)
                },
            );
            opt_dy.begin_step();
            let mut slot = 0;
            model.d_y.adam_step(&dy_grads, &mut opt_dy, &mut slot);
            opt_dx.begin_step();
            slot = 0;
            model.d_x.adam_step(&dx_grads, &mut opt_dx, &mut slot);
            d_sum += d_y_loss + d_x_loss;
            let _ = (fake_y, fake_x);
        }

        history.push(CleanerEpochStats {
            epoch,
            cycle_metric: cycle_sum / steps as f64,
            generator_adv_loss: adv_sum / steps as f64,
            discriminator_loss: d_sum / steps as f64,
            paired_l1: pair_sum / steps as f64,
        });
    }
    Ok((model, history))
}

/// Run the cleaner on a raw signature image; deterministic in inference
/// mode, provenance preserved.
pub fn clean(model: &CleanerModel, img: &SignatureImage) -> Result<SignatureImage, ModelError> {
    clean_pixels(model, img.pixels()).and_then(|px| {
        img.cleaned_from(px)
            .map_err(|e| ModelError::InvalidInput(e.to_string()))
    })
}

/// Run the cleaner generator on a raw pixel grid.
pub fn clean_pixels(model: &CleanerModel, px: &Pixels) -> Result<Pixels, ModelError> {
    let n = model.descriptor.input;
    if px.dim() != (n, n) {
        return Err(ModelError::InvalidInput(format!(
            "expected {n}x{n} input, got {}x{}",
            px.nrows(),
            px.ncols()
        )));
    }
    Ok(tensor_to_pixels(&model.g.infer(&pixels_to_tensor(px))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr2, Array2};

    #[test]
    fn cycle_loss_identity_is_exactly_zero() {
        let xs = vec![Array2::from_elem((4, 4), 0.3f32)];
        let ys = vec![Array2::from_elem((4, 4), 0.8f32)];
        let loss = cycle_loss(|p: &Pixels| p.clone(), |p: &Pixels| p.clone(), &xs, &ys).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn cycle_loss_single_pixel_constant_zero_maps() {
        // hand evaluation: x = 0.3, y = 0.8, both maps send everything to 0,
        // so |0 - 0.3| + |0 - 0.8| on the stored f32 values
        let xs = vec![arr2(&[[0.3f32]])];
        let ys = vec![arr2(&[[0.8f32]])];
        let zero = |_: &Pixels| arr2(&[[0.0f32]]);
        let loss = cycle_loss(zero, zero, &xs, &ys).unwrap();
        let expected = f64::from(0.3f32) + f64::from(0.8f32);
        assert!((loss - expected).abs() < 1e-12);
        // dyadic values are exact in binary floating point
        let xs = vec![arr2(&[[0.25f32]])];
        let ys = vec![arr2(&[[0.75f32]])];
        let loss = cycle_loss(zero, zero, &xs, &ys).unwrap();
        assert!((loss - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cycle_loss_mixed_maps_on_constant_batch() {
        // G = identity, F = 1 - v: x-term |F(G(0.5)) - 0.5| = 0,
        // y-term |G(F(0.5)) - 0.5| = 0 per pixel
        let xs = vec![Array2::from_elem((3, 3), 0.5f32)];
        let ys = vec![Array2::from_elem((3, 3), 0.5f32)];
        let loss = cycle_loss(
            |p: &Pixels| p.clone(),
            |p: &Pixels| p.mapv(|v| 1.0 - v),
            &xs,
            &ys,
        )
        .unwrap();
        assert!(loss.abs() < 1e-12);
    }

    #[test]
    fn cycle_loss_is_symmetric_under_domain_swap() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let xs: Vec<Pixels> = (0..2)
                .map(|_| Array2::from_shape_fn((5, 5), |_| rng.gen_range(0.0f32..1.0)))
                .collect();
            let ys: Vec<Pixels> = (0..3)
                .map(|_| Array2::from_shape_fn((5, 5), |_| rng.gen_range(0.0f32..1.0)))
                .collect();
            let g = |p: &Pixels| p.mapv(|v| (v * 0.7 + 0.1).clamp(0.0, 1.0));
            let f = |p: &Pixels| p.mapv(|v| (1.0 - v * 0.9).clamp(0.0, 1.0));
            let a = cycle_loss(g, f, &xs, &ys).unwrap();
            let b = cycle_loss(f, g, &ys, &xs).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn cycle_loss_zero_iff_exact_reconstruction() {
        let xs = vec![arr2(&[[0.5f32, 0.25]])];
        let ys = vec![arr2(&[[0.75f32, 1.0]])];
        // G shifts, F shifts back: exact reconstruction without identity maps
        let g = |p: &Pixels| p.mapv(|v| v * 0.5);
        let f_exact = |p: &Pixels| p.mapv(|v| v * 2.0);
        assert_eq!(cycle_loss(g, f_exact, &xs, &ys).unwrap(), 0.0);
        let f_off = |p: &Pixels| p.mapv(|v| v * 2.0 + 0.01);
        assert!(cycle_loss(g, f_off, &xs, &ys).unwrap() > 0.0);
    }

    #[test]
    fn cycle_loss_rejects_empty_and_shape_change() {
        let xs = vec![arr2(&[[0.5f32]])];
        let id = |p: &Pixels| p.clone();
        assert!(matches!(
            cycle_loss(id, id, &[], &xs),
            Err(ModelError::InvalidInput(_))
        ));
        let grow = |_: &Pixels| Array2::from_elem((2, 2), 0.0f32);
        assert!(matches!(
            cycle_loss(grow, id, &xs, &xs),
            Err(ModelError::InvalidInput(_))
        ));
    }

    #[test]
    fn generator_output_shape_and_range() {
        let model = CleanerModel::new(CleanerDescriptor::toy(), 5);
        let x = Array2::from_elem((256, 256), 0.5f32);
        let out = clean_pixels(&model, &x).unwrap();
        assert_eq!(out.dim(), (256, 256));
        assert!(out.iter().all(|v| (0.0..=1.0).contains(v)));
        // deterministic
        let again = clean_pixels(&model, &x).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn clean_rejects_wrong_shape() {
        let model = CleanerModel::new(CleanerDescriptor::toy(), 5);
        let x = Array2::from_elem((64, 64), 0.5f32);
        assert!(matches!(
            clean_pixels(&model, &x),
            Err(ModelError::InvalidInput(_))
        ));
    }

    #[test]
    fn train_rejects_empty_unpaired_sets() {
        let data = CleanTrainingSet {
            unpaired_x: vec![],
            unpaired_y: vec![Array2::from_elem((256, 256), 1.0f32)],
            paired: vec![],
        };
        let opts = CleanerTrainOptions {
            epochs: 1,
            descriptor: CleanerDescriptor::toy(),
            ..CleanerTrainOptions::default()
        };
        assert!(matches!(
            train_cleaner(&data, &opts),
            Err(ModelError::Data(_))
        ));
    }

    #[test]
    fn checkpoint_round_trips_generator_output() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cleaner.sgnm");
        let model = CleanerModel::new(CleanerDescriptor::toy(), 9);
        model.save(&path).unwrap();
        let back = CleanerModel::load(&path).unwrap();
        let x = crate::synth::signature_canvas(4, 0);
        assert_eq!(
            clean_pixels(&model, &x).unwrap(),
            clean_pixels(&back, &x).unwrap()
        );
    }
}
