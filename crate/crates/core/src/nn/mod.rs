//! Minimal CPU neural-network stack backing the learned stages.
//!
//! Feature maps are `Array3<f32>` in `(channels, height, width)` order and
//! convolutions run as im2col + GEMM, which keeps the heavy inner loops
//! inside the BLAS-style kernel. Layers expose explicit `forward`/`backward`
//! pairs with per-call contexts instead of a tape; the three model files
//! wire their own training steps from these pieces.
//!
//! Determinism: all randomness comes from caller-seeded ChaCha generators
//! and batch gradients are reduced in fixed index order, so identical seeds
//! give bit-identical training runs.

mod adam;
mod checkpoint;
mod conv;
mod layers;

pub use adam::Adam;
pub use checkpoint::{
    install_params, load_checkpoint, save_checkpoint, CheckpointError, ModelKind,
    CHECKPOINT_VERSION,
};
pub use conv::{Conv2d, Conv2dCtx, Conv2dGrads};

use thiserror::Error;

/// Errors shared by the learned-stage models.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("data error: {0}")]
    Data(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}
pub use layers::{Dense, DenseGrads, GlobalAvgPool, MaxPool2, MaxPool2Ctx, Upsample2x};

use ndarray::Array3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Feature map: `(channels, height, width)`.
pub type Tensor3 = Array3<f32>;

/// Sample from N(0, std^2) via Box-Muller so the init path does not depend
/// on distribution-crate versions.
pub(crate) fn normal(rng: &mut ChaCha8Rng, std: f32) -> f32 {
    let u1: f32 = rng.gen_range(f32::EPSILON..1.0);
    let u2: f32 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f32::consts::TAU * u2).cos() * std
}

/// ReLU applied in place; the output doubles as the backward mask.
pub fn relu(mut x: Tensor3) -> Tensor3 {
    x.mapv_inplace(|v| v.max(0.0));
    x
}

/// Gradient through ReLU given the forward output.
pub fn relu_backward(dy: &Tensor3, y: &Tensor3) -> Tensor3 {
    let mut dx = dy.clone();
    dx.zip_mut_with(y, |d, out| {
        if *out <= 0.0 {
            *d = 0.0;
        }
    });
    dx
}

/// Leaky ReLU with negative slope `alpha`, in place.
pub fn leaky_relu(mut x: Tensor3, alpha: f32) -> Tensor3 {
    x.mapv_inplace(|v| if v >= 0.0 { v } else { alpha * v });
    x
}

/// Gradient through leaky ReLU given the forward output (sign-preserving,
/// so the output sign recovers the input sign).
pub fn leaky_relu_backward(dy: &Tensor3, y: &Tensor3, alpha: f32) -> Tensor3 {
    let mut dx = dy.clone();
    dx.zip_mut_with(y, |d, out| {
        if *out < 0.0 {
            *d *= alpha;
        }
    });
    dx
}

/// Logistic sigmoid, in place.
pub fn sigmoid(mut x: Tensor3) -> Tensor3 {
    x.mapv_inplace(|v| 1.0 / (1.0 + (-v).exp()));
    x
}

/// Gradient through sigmoid given the forward output.
pub fn sigmoid_backward(dy: &Tensor3, y: &Tensor3) -> Tensor3 {
    let mut dx = dy.clone();
    dx.zip_mut_with(y, |d, out| *d *= out * (1.0 - out));
    dx
}

/// Scalar sigmoid.
pub fn sigmoid_scalar(v: f32) -> f32 {
    1.0 / (1.0 + (-v).exp())
}

/// Binary cross-entropy of probability `p` against label `y`, with the
/// probability clamped away from 0/1 for finite loss and gradients.
pub fn bce(p: f64, y: f64) -> f64 {
    let p = p.clamp(1e-7, 1.0 - 1e-7);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// d BCE / d p at clamped `p`.
pub fn bce_grad(p: f64, y: f64) -> f64 {
    let p = p.clamp(1e-7, 1.0 - 1e-7);
    (p - y) / (p * (1.0 - p))
}

#[cfg(test)]
mod grad_check {
    //! Finite-difference checks for every layer's backward pass.

    use super::*;
    use ndarray::{Array1, Array3};
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn rand_t3(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> Tensor3 {
        Array3::from_shape_fn((c, h, w), |_| rng.gen_range(-1.0f32..1.0))
    }

    /// Scalar objective: sum of elementwise product with fixed weights.
    fn loss_of(y: &Tensor3, probe: &Tensor3) -> f64 {
        y.iter()
            .zip(probe.iter())
            .map(|(a, b)| f64::from(*a) * f64::from(*b))
            .sum()
    }

    #[test]
    fn conv2d_gradients_match_finite_differences() {
        for (stride, pad) in [(1usize, 1usize), (2, 1)] {
            let mut r = rng(7 + stride as u64);
            let conv = Conv2d::new(2, 3, 3, stride, pad, &mut r);
            let x = rand_t3(&mut r, 2, 6, 6);
            let (y, ctx) = conv.forward(&x);
            let probe = rand_t3(&mut r, y.dim().0, y.dim().1, y.dim().2);
            let mut grads = conv.zero_grads();
            let dx = conv.backward(&ctx, &probe, &mut grads);

            let eps = 1e-2f32;
            // input gradient, sampled positions
            for &(c, i, j) in &[(0usize, 0usize, 0usize), (1, 3, 2), (0, 5, 5), (1, 2, 4)] {
                let mut xp = x.clone();
                xp[(c, i, j)] += eps;
                let lp = loss_of(&conv.infer(&xp), &probe);
                let mut xm = x.clone();
                xm[(c, i, j)] -= eps;
                let lm = loss_of(&conv.infer(&xm), &probe);
                let num = (lp - lm) / (2.0 * f64::from(eps));
                let ana = f64::from(dx[(c, i, j)]);
                assert!(
                    (num - ana).abs() < 1e-2 * (1.0 + num.abs()),
                    "dx({c},{i},{j}): num {num} vs ana {ana}"
                );
            }
            // weight gradient, sampled positions
            for &(o, idx) in &[(0usize, 0usize), (2, 7), (1, 17)] {
                let mut cp = conv.clone();
                cp.w[(o, idx)] += eps;
                let lp = loss_of(&cp.infer(&x), &probe);
                let mut cm = conv.clone();
                cm.w[(o, idx)] -= eps;
                let lm = loss_of(&cm.infer(&x), &probe);
                let num = (lp - lm) / (2.0 * f64::from(eps));
                let ana = f64::from(grads.dw[(o, idx)]);
                assert!(
                    (num - ana).abs() < 1e-2 * (1.0 + num.abs()),
                    "dw({o},{idx}): num {num} vs ana {ana}"
                );
            }
            // bias gradient
            let mut cp = conv.clone();
            cp.b[1] += eps;
            let lp = loss_of(&cp.infer(&x), &probe);
            let mut cm = conv.clone();
            cm.b[1] -= eps;
            let lm = loss_of(&cm.infer(&x), &probe);
            let num = (lp - lm) / (2.0 * f64::from(eps));
            assert!((num - f64::from(grads.db[1])).abs() < 1e-2 * (1.0 + num.abs()));
        }
    }

    #[test]
    fn dense_gradients_match_finite_differences() {
        let mut r = rng(11);
        let dense = Dense::new(10, 4, &mut r);
        let x = Array1::from_shape_fn(10, |_| r.gen_range(-1.0f32..1.0));
        let probe = Array1::from_shape_fn(4, |_| r.gen_range(-1.0f32..1.0));
        let y = dense.forward(&x);
        let loss = |y: &Array1<f32>| -> f64 {
            y.iter()
                .zip(probe.iter())
                .map(|(a, b)| f64::from(*a) * f64::from(*b))
                .sum()
        };
        let _ = loss(&y);
        let mut grads = dense.zero_grads();
        let dx = dense.backward(&x, &probe, &mut grads);
        let eps = 1e-2f32;
        for i in 0..10 {
            let mut xp = x.clone();
            xp[i] += eps;
            let mut xm = x.clone();
            xm[i] -= eps;
            let num = (loss(&dense.forward(&xp)) - loss(&dense.forward(&xm))) / (2.0 * f64::from(eps));
            assert!((num - f64::from(dx[i])).abs() < 1e-2 * (1.0 + num.abs()));
        }
        for &(o, i) in &[(0usize, 0usize), (3, 9), (1, 5)] {
            let mut dp = dense.clone();
            dp.w[(o, i)] += eps;
            let mut dm = dense.clone();
            dm.w[(o, i)] -= eps;
            let num = (loss(&dp.forward(&x)) - loss(&dm.forward(&x))) / (2.0 * f64::from(eps));
            assert!((num - f64::from(grads.dw[(o, i)])).abs() < 1e-2 * (1.0 + num.abs()));
        }
    }

    #[test]
    fn maxpool_routes_gradient_to_argmax() {
        let mut r = rng(13);
        let x = rand_t3(&mut r, 2, 4, 4);
        let pool = MaxPool2;
        let (y, ctx) = pool.forward(&x);
        assert_eq!(y.dim(), (2, 2, 2));
        let probe = rand_t3(&mut r, 2, 2, 2);
        let dx = pool.backward(&ctx, &probe, x.dim());
        let eps = 1e-3f32;
        for &(c, i, j) in &[(0usize, 0usize, 0usize), (1, 2, 3), (0, 3, 1)] {
            let mut xp = x.clone();
            xp[(c, i, j)] += eps;
            let mut xm = x.clone();
            xm[(c, i, j)] -= eps;
            let num = (loss_of(&pool.forward(&xp).0, &probe)
                - loss_of(&pool.forward(&xm).0, &probe))
                / (2.0 * f64::from(eps));
            assert!(
                (num - f64::from(dx[(c, i, j)])).abs() < 1e-2,
                "pool dx({c},{i},{j})"
            );
        }
    }

    #[test]
    fn upsample_backward_sums_quads() {
        let mut r = rng(17);
        let x = rand_t3(&mut r, 1, 3, 3);
        let up = Upsample2x;
        let y = up.forward(&x);
        assert_eq!(y.dim(), (1, 6, 6));
        let probe = rand_t3(&mut r, 1, 6, 6);
        let dx = up.backward(&probe);
        let eps = 1e-3f32;
        for &(i, j) in &[(0usize, 0usize), (2, 1), (1, 2)] {
            let mut xp = x.clone();
            xp[(0, i, j)] += eps;
            let mut xm = x.clone();
            xm[(0, i, j)] -= eps;
            let num = (loss_of(&up.forward(&xp), &probe) - loss_of(&up.forward(&xm), &probe))
                / (2.0 * f64::from(eps));
            assert!((num - f64::from(dx[(0, i, j)])).abs() < 1e-2);
        }
    }

    #[test]
    fn activation_backwards_match() {
        let mut r = rng(19);
        let x = rand_t3(&mut r, 1, 4, 4);
        let probe = rand_t3(&mut r, 1, 4, 4);
        let eps = 1e-3f32;
        type Fwd = fn(Tensor3) -> Tensor3;
        type Bwd = fn(&Tensor3, &Tensor3) -> Tensor3;
        let lrelu_fwd: Fwd = |t| leaky_relu(t, 0.2);
        let lrelu_bwd: Bwd = |dy, y| leaky_relu_backward(dy, y, 0.2);
        let relu_fwd: Fwd = relu;
        let relu_bwd: Bwd = relu_backward;
        let sig_fwd: Fwd = sigmoid;
        let sig_bwd: Bwd = sigmoid_backward;
        let cases: [(Fwd, Bwd); 3] = [
            (relu_fwd, relu_bwd),
            (lrelu_fwd, lrelu_bwd),
            (sig_fwd, sig_bwd),
        ];
        for (fwd, bwd) in cases {
            let y = fwd(x.clone());
            let dx = bwd(&probe, &y);
            for &(i, j) in &[(0usize, 1usize), (3, 2)] {
                let mut xp = x.clone();
                xp[(0, i, j)] += eps;
                let mut xm = x.clone();
                xm[(0, i, j)] -= eps;
                let num = (loss_of(&fwd(xp), &probe) - loss_of(&fwd(xm), &probe))
                    / (2.0 * f64::from(eps));
                assert!((num - f64::from(dx[(0, i, j)])).abs() < 2e-2);
            }
        }
    }

    #[test]
    fn adam_reduces_quadratic_loss() {
        // minimize ||p - target||^2 with Adam; must shrink fast
        let mut r = rng(23);
        let target: Vec<f32> = (0..8).map(|_| r.gen_range(-1.0f32..1.0)).collect();
        let mut p = vec![0.0f32; 8];
        let mut opt = Adam::new(0.05);
        for _ in 0..400 {
            let g: Vec<f32> = p.iter().zip(&target).map(|(a, b)| 2.0 * (a - b)).collect();
            opt.begin_step();
            opt.update(0, &mut p, &g);
        }
        let err: f32 = p
            .iter()
            .zip(&target)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        assert!(err < 1e-3, "remaining error {err}");
    }
}
