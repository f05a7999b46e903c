//! 2-D convolution as im2col + GEMM.

use super::{normal, Tensor3};
use ndarray::{Array1, Array2, Array3};
use rand_chacha::ChaCha8Rng;

/// Convolution layer. Weights are stored pre-flattened as
/// `(out_channels, in_channels * k * k)` so the forward pass is a single
/// matrix product against the im2col matrix.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub w: Array2<f32>,
    pub b: Array1<f32>,
    pub ic: usize,
    pub oc: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

/// Forward context kept for the backward pass. Stores the input rather
/// than the im2col matrix: columns are k^2 times larger and are cheap to
/// rebuild next to the GEMMs that consume them.
pub struct Conv2dCtx {
    x: Tensor3,
    out_hw: (usize, usize),
}

/// Parameter gradients, accumulated across a batch.
#[derive(Debug, Clone)]
pub struct Conv2dGrads {
    pub dw: Array2<f32>,
    pub db: Array1<f32>,
}

impl std::ops::AddAssign<&Conv2dGrads> for Conv2dGrads {
    fn add_assign(&mut self, rhs: &Conv2dGrads) {
        self.dw += &rhs.dw;
        self.db += &rhs.db;
    }
}

impl Conv2d {
    /// He-normal initialization scaled to the fan-in.
    pub fn new(ic: usize, oc: usize, k: usize, stride: usize, pad: usize, rng: &mut ChaCha8Rng) -> Self {
        let fan_in = ic * k * k;
        let std = (2.0 / fan_in as f32).sqrt();
        let w = Array2::from_shape_fn((oc, fan_in), |_| normal(rng, std));
        Self {
            w,
            b: Array1::zeros(oc),
            ic,
            oc,
            k,
            stride,
            pad,
        }
    }

    /// Near-zero init for output layers that should start neutral (a
    /// sigmoid on top then opens at the 0.5 midpoint with live gradients).
    pub fn new_small(ic: usize, oc: usize, k: usize, stride: usize, pad: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut conv = Self::new(ic, oc, k, stride, pad, rng);
        conv.w.mapv_inplace(|v| v * 0.02);
        conv
    }

    pub fn out_hw(&self, ih: usize, iw: usize) -> (usize, usize) {
        (
            (ih + 2 * self.pad - self.k) / self.stride + 1,
            (iw + 2 * self.pad - self.k) / self.stride + 1,
        )
    }

    pub fn zero_grads(&self) -> Conv2dGrads {
        Conv2dGrads {
            dw: Array2::zeros(self.w.dim()),
            db: Array1::zeros(self.b.dim()),
        }
    }

    /// Valid output-x span `[lo, hi)` for a kernel column at this stride
    /// and padding, given the input width.
    fn ox_span(&self, kx: usize, iw: usize, ow: usize) -> (usize, usize) {
        // need 0 <= ox*s + kx - p < iw
        let s = self.stride as isize;
        let off = kx as isize - self.pad as isize;
        let lo = (-off + s - 1).div_euclid(s).max(0) as usize;
        let hi_excl = (iw as isize - off + s - 1).div_euclid(s).max(0) as usize;
        (lo.min(ow), hi_excl.min(ow))
    }

    fn im2col(&self, x: &Tensor3) -> (Array2<f32>, (usize, usize)) {
        let (ic, ih, iw) = x.dim();
        debug_assert_eq!(ic, self.ic);
        let (oh, ow) = self.out_hw(ih, iw);
        let k = self.k;
        let mut cols = Array2::<f32>::zeros((ic * k * k, oh * ow));
        let xs = x.as_slice().expect("contiguous input");
        let cs = cols.as_slice_mut().expect("contiguous cols");
        let ncols = oh * ow;
        for c in 0..ic {
            let x_base = c * ih * iw;
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let out_base = row * ncols;
                    let (ox_lo, ox_hi) = self.ox_span(kx, iw, ow);
                    if ox_lo >= ox_hi {
                        continue;
                    }
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= ih as isize {
                            continue;
                        }
                        let in_row = x_base + iy as usize * iw;
                        let out_row = out_base + oy * ow;
                        if self.stride == 1 {
                            let ix0 = (ox_lo + kx) as isize - self.pad as isize;
                            let src = &xs[in_row + ix0 as usize..in_row + ix0 as usize + (ox_hi - ox_lo)];
                            cs[out_row + ox_lo..out_row + ox_hi].copy_from_slice(src);
                        } else {
                            for ox in ox_lo..ox_hi {
                                let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                                cs[out_row + ox] = xs[in_row + ix as usize];
                            }
                        }
                    }
                }
            }
        }
        (cols, (oh, ow))
    }

    fn col2im(&self, dcols: &Array2<f32>, in_dim: (usize, usize, usize)) -> Tensor3 {
        let (ic, ih, iw) = in_dim;
        let (oh, ow) = self.out_hw(ih, iw);
        let k = self.k;
        let mut dx = Array3::<f32>::zeros(in_dim);
        let ds = dcols.as_slice().expect("contiguous grad cols");
        let out = dx.as_slice_mut().expect("contiguous grad input");
        let ncols = oh * ow;
        for c in 0..ic {
            let x_base = c * ih * iw;
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let in_base = row * ncols;
                    let (ox_lo, ox_hi) = self.ox_span(kx, iw, ow);
                    if ox_lo >= ox_hi {
                        continue;
                    }
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= ih as isize {
                            continue;
                        }
                        let out_row = x_base + iy as usize * iw;
                        let in_row = in_base + oy * ow;
                        if self.stride == 1 {
                            let ix0 = ((ox_lo + kx) as isize - self.pad as isize) as usize;
                            let dst = &mut out[out_row + ix0..out_row + ix0 + (ox_hi - ox_lo)];
                            let src = &ds[in_row + ox_lo..in_row + ox_hi];
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d += *s;
                            }
                        } else {
                            for ox in ox_lo..ox_hi {
                                let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                                out[out_row + ix as usize] += ds[in_row + ox];
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    /// Forward pass retaining a context for backprop.
    pub fn forward(&self, x: &Tensor3) -> (Tensor3, Conv2dCtx) {
        let (cols, (oh, ow)) = self.im2col(x);
        let y = self.gemm_output(&cols, oh, ow);
        (
            y,
            Conv2dCtx {
                x: x.clone(),
                out_hw: (oh, ow),
            },
        )
    }

    /// Forward pass without keeping a context (inference).
    pub fn infer(&self, x: &Tensor3) -> Tensor3 {
        let (cols, (oh, ow)) = self.im2col(x);
        self.gemm_output(&cols, oh, ow)
    }

    fn gemm_output(&self, cols: &Array2<f32>, oh: usize, ow: usize) -> Tensor3 {
        let mut ym = self.w.dot(cols);
        for (o, mut row) in ym.outer_iter_mut().enumerate() {
            row += self.b[o];
        }
        ym.into_shape_with_order((self.oc, oh, ow))
            .expect("gemm output reshapes to feature map")
    }

    /// Accumulate parameter gradients and return the input gradient.
    pub fn backward(&self, ctx: &Conv2dCtx, dy: &Tensor3, grads: &mut Conv2dGrads) -> Tensor3 {
        let (oh, ow) = ctx.out_hw;
        let (cols, _) = self.im2col(&ctx.x);
        let dym = dy
            .to_owned()
            .into_shape_with_order((self.oc, oh * ow))
            .expect("grad reshapes to matrix");
        grads.dw += &dym.dot(&cols.t());
        grads.db += &dym.sum_axis(ndarray::Axis(1));
        let dcols = self.w.t().dot(&dym);
        self.col2im(&dcols, ctx.x.dim())
    }

    /// Parameter tensors in checkpoint order.
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

    /// Apply one Adam update using sequential slot ids from `slot`.
    pub fn adam_step(&mut self, grads: &Conv2dGrads, opt: &mut super::Adam, slot: &mut usize) {
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

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn identity_kernel_reproduces_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut conv = Conv2d::new(1, 1, 3, 1, 1, &mut rng);
        conv.w.fill(0.0);
        conv.w[(0, 4)] = 1.0; // center tap
        conv.b.fill(0.0);
        let x = Array3::from_shape_fn((1, 5, 5), |(_, y, xx)| (y * 5 + xx) as f32);
        let y = conv.infer(&x);
        assert_eq!(y, x);
    }

    #[test]
    fn stride_two_halves_spatial_dims() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let conv = Conv2d::new(3, 8, 3, 2, 1, &mut rng);
        let x = Array3::zeros((3, 32, 32));
        let (y, _) = conv.forward(&x);
        assert_eq!(y.dim(), (8, 16, 16));
    }
}
