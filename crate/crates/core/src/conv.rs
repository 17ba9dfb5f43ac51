//! Multi-channel, zero-padded, same-size 2-D convolution (cross-correlation)
//! with its exact adjoint and tap gradient.
//!
//! Tensors are flat `channels × height × width` row-major buffers.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, DripError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl LatentShape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width }
    }

    pub fn image(height: usize, width: usize) -> Self {
        Self::new(1, height, width)
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }
}

/// Convolution weights laid out as `out × in × k × k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: usize,
    pub taps: Vec<f64>,
}

/// Valid index range `[lo, hi)` of `p` such that `p + offset` stays inside `0..len`.
#[inline]
fn valid_range(len: usize, offset: isize) -> (usize, usize) {
    let lo = (-offset).max(0) as usize;
    let hi = (len as isize - offset).clamp(0, len as isize) as usize;
    (lo.min(hi), hi)
}

impl Stencil {
    pub fn zeros(out_channels: usize, in_channels: usize, kernel: usize) -> Result<Self> {
        if kernel.is_multiple_of(2) || kernel == 0 {
            return Err(DripError::precondition(format!("stencil size must be odd, got {kernel}")));
        }
        Ok(Self { out_channels, in_channels, kernel, taps: vec![0.0; out_channels * in_channels * kernel * kernel] })
    }

    pub fn from_taps(out_channels: usize, in_channels: usize, kernel: usize, taps: Vec<f64>) -> Result<Self> {
        let mut s = Self::zeros(out_channels, in_channels, kernel)?;
        ensure_len("stencil taps", taps.len(), s.taps.len())?;
        s.taps = taps;
        Ok(s)
    }

    pub fn num_taps(&self) -> usize {
        self.taps.len()
    }

    #[inline]
    fn tap_index(&self, o: usize, i: usize, dy: usize, dx: usize) -> usize {
        ((o * self.in_channels + i) * self.kernel + dy) * self.kernel + dx
    }

    /// Visits every (output channel, input channel, tap) with its spatial offset.
    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize, isize, isize)) {
        let r = (self.kernel / 2) as isize;
        for o in 0..self.out_channels {
            for i in 0..self.in_channels {
                for dy in 0..self.kernel {
                    for dx in 0..self.kernel {
                        let t = self.tap_index(o, i, dy, dx);
                        f(o, i, t, dy as isize - r, dx as isize - r);
                    }
                }
            }
        }
    }

    /// `y[o, p] = Σ_{i, δ} K[o, i, δ] · x[i, p + δ]`
    pub fn apply(&self, x: &[f64], height: usize, width: usize) -> Vec<f64> {
        let plane = height * width;
        debug_assert_eq!(x.len(), self.in_channels * plane);
        let mut y = vec![0.0; self.out_channels * plane];
        self.for_each_tap(|o, i, t, oy, ox| {
            let k = self.taps[t];
            if k == 0.0 {
                return;
            }
            let (r0, r1) = valid_range(height, oy);
            let (c0, c1) = valid_range(width, ox);
            for row in r0..r1 {
                let src = i * plane + ((row as isize + oy) as usize) * width;
                let dst = o * plane + row * width;
                let xs = &x[(src as isize + c0 as isize + ox) as usize..(src as isize + c1 as isize + ox) as usize];
                let ys = &mut y[dst + c0..dst + c1];
                for (yv, xv) in ys.iter_mut().zip(xs) {
                    *yv += k * xv;
                }
            }
        });
        y
    }

    /// Exact transpose of [`Stencil::apply`].
    pub fn adjoint(&self, y: &[f64], height: usize, width: usize) -> Vec<f64> {
        let plane = height * width;
        debug_assert_eq!(y.len(), self.out_channels * plane);
        let mut x = vec![0.0; self.in_channels * plane];
        self.for_each_tap(|o, i, t, oy, ox| {
            let k = self.taps[t];
            if k == 0.0 {
                return;
            }
            let (r0, r1) = valid_range(height, oy);
            let (c0, c1) = valid_range(width, ox);
            for row in r0..r1 {
                let dst = i * plane + ((row as isize + oy) as usize) * width;
                let src = o * plane + row * width;
                let lo = (dst as isize + c0 as isize + ox) as usize;
                let hi = (dst as isize + c1 as isize + ox) as usize;
                let ys = &y[src + c0..src + c1];
                for (xv, yv) in x[lo..hi].iter_mut().zip(ys) {
                    *xv += k * yv;
                }
            }
        });
        x
    }

    /// Accumulates `∂⟨ȳ, K x⟩ / ∂K` into `grad` (same layout as `taps`).
    pub fn accumulate_tap_grad(&self, x: &[f64], y_bar: &[f64], height: usize, width: usize, grad: &mut [f64]) {
        let plane = height * width;
        debug_assert_eq!(grad.len(), self.taps.len());
        self.for_each_tap(|o, i, t, oy, ox| {
            let (r0, r1) = valid_range(height, oy);
            let (c0, c1) = valid_range(width, ox);
            let mut acc = 0.0;
            for row in r0..r1 {
                let src = i * plane + ((row as isize + oy) as usize) * width;
                let dst = o * plane + row * width;
                let lo = (src as isize + c0 as isize + ox) as usize;
                let hi = (src as isize + c1 as isize + ox) as usize;
                acc += x[lo..hi].iter().zip(&y_bar[dst + c0..dst + c1]).map(|(a, b)| a * b).sum::<f64>();
            }
            grad[t] += acc;
        });
    }
}

/// Adds a per-channel bias in place.
pub fn add_bias(y: &mut [f64], bias: &[f64], plane: usize) {
    for (chunk, b) in y.chunks_mut(plane).zip(bias) {
        for v in chunk {
            *v += b;
        }
    }
}

/// Accumulates per-channel sums of `y_bar` into `grad`.
pub fn accumulate_bias_grad(y_bar: &[f64], plane: usize, grad: &mut [f64]) {
    for (chunk, g) in y_bar.chunks(plane).zip(grad.iter_mut()) {
        *g += chunk.iter().sum::<f64>();
    }
}
