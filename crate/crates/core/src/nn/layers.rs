//! Dense, pooling and upsampling layers.

use super::{normal, Tensor3};
use ndarray::{Array1, Array2, Array3};
use rand_chacha::ChaCha8Rng;

/// Fully connected layer, `(out, in)` weight layout.
#[derive(Debug, Clone)]
pub struct Dense {
    pub w: Array2<f32>,
    pub b: Array1<f32>,
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub dw: Array2<f32>,
    pub db: Array1<f32>,
}

impl std::ops::AddAssign<&DenseGrads> for DenseGrads {
    fn add_assign(&mut self, rhs: &DenseGrads) {
        self.dw += &rhs.dw;
        self.db += &rhs.db;
    }
}

impl Dense {
    pub fn new(input: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        let std = (2.0 / input as f32).sqrt();
        Self {
            w: Array2::from_shape_fn((output, input), |_| normal(rng, std)),
            b: Array1::zeros(output),
        }
    }

    /// Small-scale init so the layer's output starts near zero (used for
    /// heads whose initial prediction should sit at the decision midpoint).
    pub fn new_small(input: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w: Array2::from_shape_fn((output, input), |_| normal(rng, 0.01)),
            b: Array1::zeros(output),
        }
    }

    pub fn forward(&self, x: &Array1<f32>) -> Array1<f32> {
        self.w.dot(x) + &self.b
    }

    pub fn zero_grads(&self) -> DenseGrads {
        DenseGrads {
            dw: Array2::zeros(self.w.dim()),
            db: Array1::zeros(self.b.dim()),
        }
    }

    /// Accumulate gradients given the forward input; returns the input
    /// gradient.
    pub fn backward(&self, x: &Array1<f32>, dy: &Array1<f32>, grads: &mut DenseGrads) -> Array1<f32> {
        grads.dw += &dy
            .view()
            .insert_axis(ndarray::Axis(1))
            .dot(&x.view().insert_axis(ndarray::Axis(0)));
        grads.db += dy;
        self.w.t().dot(dy)
    }

    pub fn param_slices(&self) -> Vec<&[f32]> {
        vec![
            self.w.as_slice().expect("contiguous"),
            self.b.as_slice().expect("contiguous"),
        ]
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f32]> {
        vec![
            self.w.as_slice_mut().expect("contiguous"),
            self.b.as_slice_mut().expect("contiguous"),
        ]
    }

    pub fn adam_step(&mut self, grads: &DenseGrads, opt: &mut super::Adam, slot: &mut usize) {
        opt.update(
            {
                let s = *slot;
                *slot += 1;
                s
            },
            self.w.as_slice_mut().expect("contiguous"),
            grads.dw.as_slice().expect("contiguous"),
        );
        opt.update(
            {
                let s = *slot;
                *slot += 1;
                s
            },
            self.b.as_slice_mut().expect("contiguous"),
            grads.db.as_slice().expect("contiguous"),
        );
    }
}

/// 2x2 max pooling with stride 2; input spatial dims must be even.
#[derive(Debug, Clone, Copy)]
pub struct MaxPool2;

/// Flat argmax index into the input per output cell.
pub struct MaxPool2Ctx {
    argmax: Vec<u32>,
}

impl MaxPool2 {
    pub fn forward(&self, x: &Tensor3) -> (Tensor3, MaxPool2Ctx) {
        let (c, h, w) = x.dim();
        debug_assert!(h % 2 == 0 && w % 2 == 0, "pooling needs even dims");
        let (oh, ow) = (h / 2, w / 2);
        let xs = x.as_slice().expect("contiguous");
        let mut y = Array3::<f32>::zeros((c, oh, ow));
        let ys = y.as_slice_mut().expect("contiguous");
        let mut argmax = vec![0u32; c * oh * ow];
        for ch in 0..c {
            let base = ch * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best_idx = base + (2 * oy) * w + 2 * ox;
                    let mut best = xs[best_idx];
                    for (dy, dx) in [(0usize, 1usize), (1, 0), (1, 1)] {
                        let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                        if xs[idx] > best {
                            best = xs[idx];
                            best_idx = idx;
                        }
                    }
                    let out_idx = ch * oh * ow + oy * ow + ox;
                    ys[out_idx] = best;
                    argmax[out_idx] = best_idx as u32;
                }
            }
        }
        (y, MaxPool2Ctx { argmax })
    }

    pub fn backward(&self, ctx: &MaxPool2Ctx, dy: &Tensor3, in_dim: (usize, usize, usize)) -> Tensor3 {
        let mut dx = Array3::<f32>::zeros(in_dim);
        let out = dx.as_slice_mut().expect("contiguous");
        for (i, g) in dy.iter().enumerate() {
            out[ctx.argmax[i] as usize] += *g;
        }
        dx
    }
}

/// Nearest-neighbour 2x upsampling.
#[derive(Debug, Clone, Copy)]
pub struct Upsample2x;

impl Upsample2x {
    pub fn forward(&self, x: &Tensor3) -> Tensor3 {
        let (c, h, w) = x.dim();
        Array3::from_shape_fn((c, h * 2, w * 2), |(ch, y, xx)| x[(ch, y / 2, xx / 2)])
    }

    pub fn backward(&self, dy: &Tensor3) -> Tensor3 {
        let (c, h, w) = dy.dim();
        let (oh, ow) = (h / 2, w / 2);
        let mut dx = Array3::<f32>::zeros((c, oh, ow));
        for ((ch, y, x), g) in dy.indexed_iter() {
            dx[(ch, y / 2, x / 2)] += *g;
        }
        dx
    }
}

/// Global average pooling to one value per channel.
#[derive(Debug, Clone, Copy)]
pub struct GlobalAvgPool;

impl GlobalAvgPool {
    pub fn forward(&self, x: &Tensor3) -> Array1<f32> {
        let (c, h, w) = x.dim();
        let n = (h * w) as f32;
        Array1::from_shape_fn(c, |ch| {
            x.index_axis(ndarray::Axis(0), ch).sum() / n
        })
    }

    pub fn backward(&self, dy: &Array1<f32>, in_dim: (usize, usize, usize)) -> Tensor3 {
        let (c, h, w) = in_dim;
        let n = (h * w) as f32;
        Array3::from_shape_fn((c, h, w), |(ch, _, _)| dy[ch] / n)
    }
}
