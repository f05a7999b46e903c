//! Binary convolutional classifier scoring candidate regions as signature
//! vs non-signature, plus its training harness and augmentation.
//!
//! Architecture: four conv blocks (16/32/64/64 channels, 3x3 kernels, each
//! followed by 2x2 max pooling), a 128-wide hidden layer and a sigmoid
//! output. Input is the canonical 256x256 grayscale canvas; output is a
//! score in `[0, 1]`.

use crate::nn::{
    bce, install_params, load_checkpoint, relu, relu_backward, save_checkpoint,
    sigmoid_scalar, Adam, Conv2d, Conv2dGrads, Dense, DenseGrads, MaxPool2, ModelError,
    ModelKind, Tensor3,
};
use crate::raster::{self, Pixels, CANVAS_SIZE};
use crate::types::{CandidateRegion, SignatureImage};
use ndarray::{Array1, Array3};
use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterDescriptor {
    pub input: usize,
    pub conv_channels: Vec<usize>,
    pub dense_width: usize,
}

impl Default for FilterDescriptor {
    fn default() -> Self {
        Self {
            input: CANVAS_SIZE,
            conv_channels: vec![16, 32, 64, 64],
            dense_width: 128,
        }
    }
}

/// The candidate filter network.
#[derive(Debug, Clone)]
pub struct FilterModel {
    descriptor: FilterDescriptor,
    conv: Vec<Conv2d>,
    fc_hidden: Dense,
    fc_out: Dense,
}

pub struct FilterGrads {
    conv: Vec<Conv2dGrads>,
    fc_hidden: DenseGrads,
    fc_out: DenseGrads,
}

impl std::ops::AddAssign<&FilterGrads> for FilterGrads {
    fn add_assign(&mut self, rhs: &FilterGrads) {
        for (a, b) in self.conv.iter_mut().zip(rhs.conv.iter()) {
            *a += b;
        }
        self.fc_hidden += &rhs.fc_hidden;
        self.fc_out += &rhs.fc_out;
    }
}

impl FilterModel {
    pub fn new(seed: u64) -> Self {
        Self::from_descriptor(FilterDescriptor::default(), seed)
    }

    pub fn from_descriptor(descriptor: FilterDescriptor, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut conv = Vec::new();
        let mut ic = 1;
        for &oc in &descriptor.conv_channels {
            conv.push(Conv2d::new(ic, oc, 3, 1, 1, &mut rng));
            ic = oc;
        }
        let side = descriptor.input >> descriptor.conv_channels.len();
        let flat = ic * side * side;
        let fc_hidden = Dense::new(flat, descriptor.dense_width, &mut rng);
        // small head init keeps the untrained output at the 0.5 midpoint
        let fc_out = Dense::new_small(descriptor.dense_width, 1, &mut rng);
        Self {
            descriptor,
            conv,
            fc_hidden,
            fc_out,
        }
    }

    pub fn descriptor(&self) -> &FilterDescriptor {
        &self.descriptor
    }

    /// Inference-mode logit for a `(1, N, N)` input.
    fn infer_logit(&self, x: &Tensor3) -> f32 {
        let mut cur = x.clone();
        for conv in &self.conv {
            let y = relu(conv.infer(&cur));
            let (pooled, _) = MaxPool2.forward(&y);
            cur = pooled;
        }
        let flat_len = cur.len();
        let flat = cur
            .into_shape_with_order(flat_len)
            .expect("contiguous feature map");
        let hidden = self.fc_hidden.forward(&flat);
        let hidden = hidden.mapv(|v| v.max(0.0));
        self.fc_out.forward(&hidden)[0]
    }

    /// Forward + backward for one example; accumulates gradients and
    /// returns `(probability, bce loss)`.
    fn train_example(&self, x: &Tensor3, label: bool, grads: &mut FilterGrads) -> (f64, f64) {
        // forward, retaining per-layer contexts
        let mut cur = x.clone();
        let mut conv_ctx = Vec::new();
        let mut conv_out = Vec::new();
        let mut pool_ctx = Vec::new();
        let mut pool_in_dims = Vec::new();
        for conv in &self.conv {
            let (y, ctx) = conv.forward(&cur);
            let y = relu(y);
            pool_in_dims.push(y.dim());
            let (pooled, pctx) = MaxPool2.forward(&y);
            conv_ctx.push(ctx);
            conv_out.push(y);
            pool_ctx.push(pctx);
            cur = pooled;
        }
        let last_dim = cur.dim();
        let flat_len = cur.len();
        let flat = cur
            .into_shape_with_order(flat_len)
            .expect("contiguous feature map");
        let hidden_pre = self.fc_hidden.forward(&flat);
        let hidden = hidden_pre.mapv(|v| v.max(0.0));
        let logit = self.fc_out.forward(&hidden)[0];
        let p = f64::from(sigmoid_scalar(logit));
        let y = if label { 1.0 } else { 0.0 };
        let loss = bce(p, y);

        // backward: d loss / d logit = p - y for sigmoid + BCE
        let dlogit = (p.clamp(1e-7, 1.0 - 1e-7) - y) as f32;
        let dhidden = self
            .fc_out
            .backward(&hidden, &Array1::from_elem(1, dlogit), &mut grads.fc_out);
        let dhidden_pre = Array1::from_shape_fn(dhidden.len(), |i| {
            if hidden[i] > 0.0 {
                dhidden[i]
            } else {
                0.0
            }
        });
        let dflat = self
            .fc_hidden
            .backward(&flat, &dhidden_pre, &mut grads.fc_hidden);
        let mut dcur = dflat
            .into_shape_with_order(last_dim)
            .expect("gradient reshapes to feature map");
        for i in (0..self.conv.len()).rev() {
            let dpool = MaxPool2.backward(&pool_ctx[i], &dcur, pool_in_dims[i]);
            let drelu = relu_backward(&dpool, &conv_out[i]);
            dcur = self.conv[i].backward(&conv_ctx[i], &drelu, &mut grads.conv[i]);
        }
        (p, loss)
    }

    pub fn zero_grads(&self) -> FilterGrads {
        FilterGrads {
            conv: self.conv.iter().map(Conv2d::zero_grads).collect(),
            fc_hidden: self.fc_hidden.zero_grads(),
            fc_out: self.fc_out.zero_grads(),
        }
    }

    fn adam_step(&mut self, grads: &FilterGrads, opt: &mut Adam) {
        opt.begin_step();
        let mut slot = 0;
        for (conv, g) in self.conv.iter_mut().zip(grads.conv.iter()) {
            conv.adam_step(g, opt, &mut slot);
        }
        self.fc_hidden.adam_step(&grads.fc_hidden, opt, &mut slot);
        self.fc_out.adam_step(&grads.fc_out, opt, &mut slot);
    }

    fn param_slices(&self) -> Vec<&[f32]> {
        let mut out = Vec::new();
        for conv in &self.conv {
            out.extend(conv.param_slices());
        }
        out.extend(self.fc_hidden.param_slices());
        out.extend(self.fc_out.param_slices());
        out
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f32]> {
        let mut out = Vec::new();
        for conv in &mut self.conv {
            out.extend(conv.param_slices_mut());
        }
        out.extend(self.fc_hidden.param_slices_mut());
        out.extend(self.fc_out.param_slices_mut());
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        save_checkpoint(path, ModelKind::Filter, &self.descriptor, &self.param_slices())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let (descriptor, blob): (FilterDescriptor, Vec<f32>) =
            load_checkpoint(path, ModelKind::Filter)?;
        let mut model = Self::from_descriptor(descriptor, 0);
        install_params(&blob, model.param_slices_mut())?;
        Ok(model)
    }
}

fn to_input(px: &Pixels) -> Result<Tensor3, ModelError> {
    let (h, w) = px.dim();
    if (h, w) != (CANVAS_SIZE, CANVAS_SIZE) {
        return Err(ModelError::InvalidInput(format!(
            "expected {CANVAS_SIZE}x{CANVAS_SIZE} input, got {h}x{w}"
        )));
    }
    Ok(Array3::from_shape_fn((1, h, w), |(_, y, x)| px[(y, x)]))
}

/// Score a pixel grid; deterministic in inference mode.
pub fn predict_pixels(model: &FilterModel, px: &Pixels) -> Result<f64, ModelError> {
    let x = to_input(px)?;
    Ok(f64::from(sigmoid_scalar(model.infer_logit(&x))))
}

/// Score a signature image as signature vs non-signature.
pub fn predict_signature(model: &FilterModel, img: &SignatureImage) -> Result<f64, ModelError> {
    predict_pixels(model, img.pixels())
}

/// Keep the candidates scoring strictly above `threshold`, preserving
/// order. A threshold of 1.0 therefore retains nothing.
pub fn filter_candidates(
    model: &FilterModel,
    candidates: Vec<CandidateRegion>,
    threshold: f64,
) -> Result<Vec<CandidateRegion>, ModelError> {
    let scores: Vec<f64> = candidates
        .par_iter()
        .map(|c| predict_signature(model, &c.crop))
        .collect::<Result<_, _>>()?;
    Ok(candidates
        .into_iter()
        .zip(scores)
        .filter(|(_, s)| *s > threshold)
        .map(|(c, _)| c)
        .collect())
}

/// Parameters of one augmentation draw, exposed so tests can verify the
/// geometry independently.
#[derive(Debug, Clone, Copy)]
pub struct AugmentParams {
    pub crop_y0: usize,
    pub crop_x0: usize,
    pub crop_h: usize,
    pub crop_w: usize,
    pub rotation_deg: f32,
}

/// Random crop (each side keeps at least 80%) renormalized to the canvas,
/// then rotation uniform in [-10, +10] degrees. Fully determined by the
/// seed.
pub fn augment_pixels(px: &Pixels, seed: u64) -> (Pixels, AugmentParams) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = px.dim();
    let min_h = (h as f64 * 0.8).ceil() as usize;
    let min_w = (w as f64 * 0.8).ceil() as usize;
    let crop_h = rng.gen_range(min_h..=h);
    let crop_w = rng.gen_range(min_w..=w);
    let crop_y0 = rng.gen_range(0..=h - crop_h);
    let crop_x0 = rng.gen_range(0..=w - crop_w);
    let rotation_deg = rng.gen_range(-10.0f32..=10.0);
    let crop = px
        .slice(ndarray::s![
            crop_y0..crop_y0 + crop_h,
            crop_x0..crop_x0 + crop_w
        ])
        .to_owned();
    let canvas = raster::normalize_to_canvas(&crop).expect("crop is non-empty");
    let rotated = raster::rotate(&canvas, rotation_deg, raster::BACKGROUND);
    (
        rotated.mapv(|v| v.clamp(0.0, 1.0)),
        AugmentParams {
            crop_y0,
            crop_x0,
            crop_h,
            crop_w,
            rotation_deg,
        },
    )
}

/// Augment a signature image, preserving provenance and state.
pub fn augment(img: &SignatureImage, seed: u64) -> SignatureImage {
    let (px, _) = augment_pixels(img.pixels(), seed);
    SignatureImage::new(px, img.state(), img.provenance().clone())
        .expect("augmentation preserves the canvas contract")
}

/// Labelled candidate images with train/validation split tags.
#[derive(Debug, Clone, Default)]
pub struct LabeledRegionSet {
    pub train: Vec<(Pixels, bool)>,
    pub val: Vec<(Pixels, bool)>,
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub epochs: usize,
    pub seed: u64,
    pub lr: f32,
    pub batch_size: usize,
    /// Apply crop/rotation augmentation to training draws. Never applied to
    /// evaluation passes.
    pub augment: bool,
    /// Stop once clean training accuracy reaches this level.
    pub stop_at_train_accuracy: Option<f64>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 200,
            seed: 7,
            lr: 1e-3,
            batch_size: 8,
            augment: true,
            stop_at_train_accuracy: None,
        }
    }
}

/// Per-epoch training record. Entry 0 is the pre-training evaluation.
#[derive(Debug, Clone)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
}

fn eval_set(model: &FilterModel, set: &[(Pixels, bool)]) -> (f64, f64) {
    let scored: Vec<(f64, bool)> = set
        .par_iter()
        .map(|(px, label)| {
            let p = predict_pixels(model, px).expect("training images are canvas-shaped");
            (p, *label)
        })
        .collect();
    let loss = scored
        .iter()
        .map(|(p, l)| bce(*p, if *l { 1.0 } else { 0.0 }))
        .sum::<f64>()
        / scored.len() as f64;
    let correct = scored
        .iter()
        .filter(|(p, l)| (*p > 0.5) == *l)
        .count();
    (loss, correct as f64 / scored.len() as f64)
}

/// Train the filter on a labelled set. Requires both classes in TRAIN.
/// Returns the model and per-epoch history (entry 0 = untrained baseline).
pub fn train_filter(
    data: &LabeledRegionSet,
    opts: &TrainOptions,
) -> Result<(FilterModel, Vec<EpochStats>), ModelError> {
    if data.train.is_empty() {
        return Err(ModelError::Data("empty training set".into()));
    }
    let pos = data.train.iter().filter(|(_, l)| *l).count();
    if pos == 0 || pos == data.train.len() {
        return Err(ModelError::Data(
            "training set must contain both classes".into(),
        ));
    }
    for (px, _) in data.train.iter().chain(data.val.iter()) {
        if px.dim() != (CANVAS_SIZE, CANVAS_SIZE) {
            return Err(ModelError::InvalidInput(
                "training images must be canvas-shaped".into(),
            ));
        }
    }

    let mut model = FilterModel::new(opts.seed);
    let mut opt = Adam::new(opts.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed);
    let mut history = Vec::with_capacity(opts.epochs + 1);

    let (loss0, acc0) = eval_set(&model, &data.train);
    let val0 = (!data.val.is_empty()).then(|| eval_set(&model, &data.val).1);
    history.push(EpochStats {
        epoch: 0,
        loss: loss0,
        train_accuracy: acc0,
        val_accuracy: val0,
    });

    let mut order: Vec<usize> = (0..data.train.len()).collect();
    for epoch in 1..=opts.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut steps = 0;
        for batch in order.chunks(opts.batch_size.max(1)) {
            let aug_base: u64 = rng.gen();
            let items: Vec<(usize, u64)> = batch
                .iter()
                .enumerate()
                .map(|(j, &idx)| (idx, aug_base.wrapping_add(j as u64)))
                .collect();
            let workers = rayon::current_num_threads().clamp(1, items.len());
            let chunk = items.len().div_ceil(workers);
            let partials: Vec<(FilterGrads, f64)> = items
                .par_chunks(chunk)
                .map(|chunk_items| {
                    let mut grads = model.zero_grads();
                    let mut loss = 0.0;
                    for &(idx, aug_seed) in chunk_items {
                        let (px, label) = &data.train[idx];
                        let input = if opts.augment {
                            augment_pixels(px, aug_seed).0
                        } else {
                            px.clone()
                        };
                        let x = to_input(&input).expect("canvas-shaped");
                        let (_, l) = model.train_example(&x, *label, &mut grads);
                        loss += l;
                    }
                    (grads, loss)
                })
                .collect();
            let mut grads = model.zero_grads();
            let mut batch_loss = 0.0;
            for (g, l) in &partials {
                grads += g;
                batch_loss += l;
            }
            let scale = 1.0 / batch.len() as f32;
            for g in grads.conv.iter_mut() {
                g.dw *= scale;
                g.db *= scale;
            }
            grads.fc_hidden.dw *= scale;
            grads.fc_hidden.db *= scale;
            grads.fc_out.dw *= scale;
            grads.fc_out.db *= scale;
            model.adam_step(&grads, &mut opt);
            epoch_loss += batch_loss;
            steps += batch.len();
        }
        let (_, train_acc) = eval_set(&model, &data.train);
        let val_acc = (!data.val.is_empty()).then(|| eval_set(&model, &data.val).1);
        history.push(EpochStats {
            epoch,
            loss: epoch_loss / steps as f64,
            train_accuracy: train_acc,
            val_accuracy: val_acc,
        });
        if let Some(target) = opts.stop_at_train_accuracy {
            if train_acc >= target {
                break;
            }
        }
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use ndarray::Array2;

    #[test]
    fn predict_is_deterministic_and_bounded() {
        let model = FilterModel::new(3);
        let img = synth::signature_canvas(5, 0);
        let a = predict_pixels(&model, &img).unwrap();
        let b = predict_pixels(&model, &img).unwrap();
        assert_eq!(a, b);
        assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn predict_rejects_wrong_shape() {
        let model = FilterModel::new(3);
        let img = Array2::from_elem((128, 128), 0.5f32);
        assert!(matches!(
            predict_pixels(&model, &img),
            Err(ModelError::InvalidInput(_))
        ));
    }

    #[test]
    fn untrained_output_starts_near_half() {
        let model = FilterModel::new(11);
        for i in 0..4 {
            let p = predict_pixels(&model, &synth::signature_canvas(i, 0)).unwrap();
            assert!((p - 0.5).abs() < 0.05, "untrained score {p}");
        }
    }

    #[test]
    fn train_rejects_single_class() {
        let data = LabeledRegionSet {
            train: vec![(synth::signature_canvas(1, 0), true); 4],
            val: vec![],
        };
        assert!(matches!(
            train_filter(&data, &TrainOptions::default()),
            Err(ModelError::Data(_))
        ));
    }

    #[test]
    fn augment_is_seeded_and_keeps_blank_blank() {
        let img = synth::signature_canvas(9, 0);
        let (a, pa) = augment_pixels(&img, 123);
        let (b, pb) = augment_pixels(&img, 123);
        assert_eq!(a, b);
        assert_eq!(pa.crop_h, pb.crop_h);
        let (c, _) = augment_pixels(&img, 124);
        assert_ne!(a, c);
        // blank input stays blank under crop + rotation
        let blank = Array2::from_elem((CANVAS_SIZE, CANVAS_SIZE), 1.0f32);
        let (out, _) = augment_pixels(&blank, 5);
        assert!(out.iter().all(|v| (*v - 1.0).abs() < 1e-6));
    }

    #[test]
    fn augment_crop_bounds_track_marker_pixel() {
        // independent geometry oracle: push one marker through the recorded
        // crop/scale/rotation parameters and check the dark pixel lands there
        let mut img = Array2::from_elem((CANVAS_SIZE, CANVAS_SIZE), 1.0f32);
        let (my, mx) = (140usize, 120usize);
        img[(my, mx)] = 0.0;
        for seed in [1u64, 7, 42] {
            let (out, p) = augment_pixels(&img, seed);
            // marker must lie inside the crop for this oracle to apply
            if my < p.crop_y0
                || my >= p.crop_y0 + p.crop_h
                || mx < p.crop_x0
                || mx >= p.crop_x0 + p.crop_w
            {
                continue;
            }
            let long = p.crop_h.max(p.crop_w) as f64;
            let scale = CANVAS_SIZE as f64 / long;
            let out_h = if p.crop_h >= p.crop_w {
                CANVAS_SIZE
            } else {
                ((p.crop_h as f64 * scale).round() as usize).max(1)
            };
            let out_w = if p.crop_w > p.crop_h {
                CANVAS_SIZE
            } else {
                ((p.crop_w as f64 * scale).round() as usize).max(1)
            };
            let pad_y = (CANVAS_SIZE - out_h) / 2;
            let pad_x = (CANVAS_SIZE - out_w) / 2;
            // position on the canvas before rotation (pixel-center map)
            let cy = pad_y as f64 + ((my - p.crop_y0) as f64 + 0.5) * scale - 0.5;
            let cx = pad_x as f64 + ((mx - p.crop_x0) as f64 + 0.5) * scale - 0.5;
            // forward rotation about the canvas center
            let rad = f64::from(p.rotation_deg).to_radians();
            let (s, c) = rad.sin_cos();
            let ccy = (CANVAS_SIZE as f64 - 1.0) / 2.0;
            let ccx = ccy;
            let dy = cy - ccy;
            let dx = cx - ccx;
            let ey = s * dx + c * dy + ccy;
            let ex = c * dx - s * dy + ccx;
            let (darkest, v) = out
                .indexed_iter()
                .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap();
            assert!(*v < 0.9, "marker vanished (seed {seed})");
            let err = ((darkest.0 as f64 - ey).powi(2) + (darkest.1 as f64 - ex).powi(2)).sqrt();
            assert!(
                err <= 2.0,
                "seed {seed}: marker at {darkest:?}, expected ({ey:.1},{ex:.1})"
            );
        }
    }

    #[test]
    fn checkpoint_round_trips_scores() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("filter.sgnm");
        let model = FilterModel::new(21);
        model.save(&path).unwrap();
        let back = FilterModel::load(&path).unwrap();
        let img = synth::signature_canvas(3, 1);
        assert_eq!(
            predict_pixels(&model, &img).unwrap(),
            predict_pixels(&back, &img).unwrap()
        );
    }
}
