//! The convex learnable potential
//! `φ(z) = Σ_{c,p} exp(w_c) · σ((K z)_{c,p})` with the piecewise quadratic
//! `σ(t) = a t²/2 (t > 0), b t²/2 (t ≤ 0)`.
//!
//! `σ′` is a leaky ReLU, so `∇φ = Kᵀ(exp(w) ⊙ σ′(Kz))` is an ordinary
//! convolutional layer followed by its transpose. The Hessian uses the true
//! second derivative `σ″ ∈ {a, b}`, which keeps it positive semi-definite.

use std::sync::OnceLock;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::conv::{LatentShape, Stencil};
use crate::error::{ensure_len, DripError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Slopes {
    pub a: f64,
    pub b: f64,
}

impl Default for Slopes {
    fn default() -> Self {
        Self { a: 1.0, b: 0.01 }
    }
}

impl Slopes {
    pub fn validate(&self) -> Result<()> {
        if self.a > 0.0 && self.b > 0.0 && self.a.is_finite() && self.b.is_finite() {
            Ok(())
        } else {
            Err(DripError::precondition(format!("slopes must be positive, got a={} b={}", self.a, self.b)))
        }
    }

    /// Leaky-ReLU activation `σ′`.
    #[inline]
    pub fn activation(&self, t: f64) -> f64 {
        if t > 0.0 {
            self.a * t
        } else {
            self.b * t
        }
    }

    #[inline]
    pub fn activation_slope(&self, t: f64) -> f64 {
        if t > 0.0 {
            self.a
        } else {
            self.b
        }
    }
}

/// `(σ(t), σ′(t), σ″(t))`; at `t = 0` the `t ≤ 0` branch is used.
pub fn sigma_pair(t: f64, a: f64, b: f64) -> (f64, f64, f64) {
    if t > 0.0 {
        (0.5 * a * t * t, a * t, a)
    } else {
        (0.5 * b * t * t, b * t, b)
    }
}

const CURVATURE_GRID: usize = 32;
const CURVATURE_MARGIN: f64 = 1.1;

fn phase_table() -> &'static [(f64, f64); CURVATURE_GRID] {
    static TABLE: OnceLock<[(f64, f64); CURVATURE_GRID]> = OnceLock::new();
    TABLE.get_or_init(|| {
        std::array::from_fn(|m| {
            let t = 2.0 * std::f64::consts::PI * m as f64 / CURVATURE_GRID as f64;
            (t.cos(), t.sin())
        })
    })
}

#[inline]
fn phase(m: usize) -> (f64, f64) {
    phase_table()[m % CURVATURE_GRID]
}

/// Kernel symbol `Σ k[i,j] e^{−iω·(i,j)}` at grid frequency `(p, q)`.
fn symbol(taps: &[f64], k: usize, p: usize, q: usize) -> (f64, f64) {
    let (mut re, mut im) = (0.0, 0.0);
    for ki in 0..k {
        for kj in 0..k {
            let (cos, sin) = phase(p * ki + q * kj);
            re += taps[ki * k + kj] * cos;
            im -= taps[ki * k + kj] * sin;
        }
    }
    (re, im)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialLayer {
    /// `c_hidden × c_latent × k × k`
    pub stencil: Stencil,
    /// Per hidden channel, applied as `exp(w)`.
    pub log_weights: Vec<f64>,
    pub slopes: Slopes,
}

/// Gradient buffers with the same layout as a [`PotentialLayer`].
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialGrad {
    pub taps: Vec<f64>,
    pub log_weights: Vec<f64>,
}

impl PotentialLayer {
    pub fn zeros(hidden: usize, latent_channels: usize, kernel: usize, slopes: Slopes) -> Result<Self> {
        slopes.validate()?;
        Ok(Self { stencil: Stencil::zeros(hidden, latent_channels, kernel)?, log_weights: vec![0.0; hidden], slopes })
    }

    /// Gaussian taps with standard deviation `tap_std` and constant log-weights.
    pub fn random(
        hidden: usize,
        latent_channels: usize,
        kernel: usize,
        slopes: Slopes,
        tap_std: f64,
        log_weight: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut layer = Self::zeros(hidden, latent_channels, kernel, slopes)?;
        let normal = Normal::new(0.0, tap_std).map_err(|e| DripError::precondition(e.to_string()))?;
        layer.stencil.taps.iter_mut().for_each(|t| *t = normal.sample(rng));
        layer.log_weights.iter_mut().for_each(|w| *w = log_weight);
        Ok(layer)
    }

    pub fn hidden(&self) -> usize {
        self.stencil.out_channels
    }

    pub fn latent_channels(&self) -> usize {
        self.stencil.in_channels
    }

    pub fn num_params(&self) -> usize {
        self.stencil.num_taps() + self.log_weights.len()
    }

    pub fn zero_grad(&self) -> PotentialGrad {
        PotentialGrad { taps: vec![0.0; self.stencil.num_taps()], log_weights: vec![0.0; self.log_weights.len()] }
    }

    pub fn check_shape(&self, z: &[f64], shape: &LatentShape) -> Result<()> {
        if shape.channels != self.latent_channels() {
            return Err(DripError::precondition(format!(
                "potential expects {} latent channels, shape has {}",
                self.latent_channels(),
                shape.channels
            )));
        }
        ensure_len("latent state", z.len(), shape.len())
    }

    fn preactivation(&self, z: &[f64], shape: &LatentShape) -> Vec<f64> {
        self.stencil.apply(z, shape.height, shape.width)
    }

    pub(crate) fn value_unchecked(&self, z: &[f64], shape: &LatentShape) -> f64 {
        let plane = shape.plane();
        let pre = self.preactivation(z, shape);
        pre.chunks(plane)
            .zip(&self.log_weights)
            .map(|(chunk, w)| {
                let s: f64 = chunk.iter().map(|&t| sigma_pair(t, self.slopes.a, self.slopes.b).0).sum();
                w.exp() * s
            })
            .sum()
    }

    pub(crate) fn grad_unchecked(&self, z: &[f64], shape: &LatentShape) -> Vec<f64> {
        let plane = shape.plane();
        let mut q = self.preactivation(z, shape);
        for (chunk, w) in q.chunks_mut(plane).zip(&self.log_weights) {
            let ew = w.exp();
            for t in chunk {
                *t = ew * self.slopes.activation(*t);
            }
        }
        self.stencil.adjoint(&q, shape.height, shape.width)
    }

    pub(crate) fn hessian_vec_unchecked(&self, z: &[f64], v: &[f64], shape: &LatentShape) -> Vec<f64> {
        let plane = shape.plane();
        let pre = self.preactivation(z, shape);
        let mut kv = self.stencil.apply(v, shape.height, shape.width);
        for ((kv_c, pre_c), w) in kv.chunks_mut(plane).zip(pre.chunks(plane)).zip(&self.log_weights) {
            let ew = w.exp();
            for (x, &t) in kv_c.iter_mut().zip(pre_c) {
                *x *= ew * self.slopes.activation_slope(t);
            }
        }
        self.stencil.adjoint(&kv, shape.height, shape.width)
    }

    /// Upper bound on `‖∇²φ‖₂` over all states and grid sizes: `max(a, b)`
    /// times the largest trace of `Σ_c exp(w_c) k̂_cᴴ k̂_c` over a fine
    /// frequency grid, with a 10% margin.
    pub fn curvature_bound(&self) -> f64 {
        self.curvature_peak().0
    }

    /// Accumulates `scale · ∂(curvature_bound)/∂θ` into `grad`.
    pub fn curvature_bound_vjp(&self, scale: f64, grad: &mut PotentialGrad) {
        let (bound, p, q) = self.curvature_peak();
        if bound == 0.0 || scale == 0.0 {
            return;
        }
        let k = self.stencil.kernel;
        let factor = CURVATURE_MARGIN * self.slopes.a.max(self.slopes.b) * scale;
        for (pair, taps) in self.stencil.taps.chunks(k * k).enumerate() {
            let c = pair / self.latent_channels();
            let ew = self.log_weights[c].exp();
            let (re, im) = symbol(taps, k, p, q);
            grad.log_weights[c] += factor * ew * (re * re + im * im);
            for ki in 0..k {
                for kj in 0..k {
                    let (cos, sin) = phase(p * ki + q * kj);
                    grad.taps[pair * k * k + ki * k + kj] += factor * ew * 2.0 * (re * cos - im * sin);
                }
            }
        }
    }

    /// `(bound, p, q)` with `(p, q)` the maximizing frequency.
    fn curvature_peak(&self) -> (f64, usize, usize) {
        let k = self.stencil.kernel;
        let weights: Vec<f64> = self.log_weights.iter().map(|w| w.exp()).collect();
        let mut best = (0.0, 0, 0);
        for p in 0..CURVATURE_GRID {
            for q in 0..CURVATURE_GRID {
                let trace: f64 = self
                    .stencil
                    .taps
                    .chunks(k * k)
                    .enumerate()
                    .map(|(pair, taps)| {
                        let (re, im) = symbol(taps, k, p, q);
                        weights[pair / self.latent_channels()] * (re * re + im * im)
                    })
                    .sum();
                if trace > best.0 {
                    best = (trace, p, q);
                }
            }
        }
        let scale = CURVATURE_MARGIN * self.slopes.a.max(self.slopes.b);
        (scale * best.0, best.1, best.2)
    }

    /// Reverse-mode step through `z ↦ ∇φ(z; θ)` with output cotangent `g`:
    /// accumulates `∂⟨g, ∇φ⟩/∂θ` into `grad` and returns `∂⟨g, ∇φ⟩/∂z = H g`.
    pub fn grad_vjp(&self, z: &[f64], g: &[f64], shape: &LatentShape, grad: &mut PotentialGrad) -> Vec<f64> {
        let (h, w) = (shape.height, shape.width);
        let plane = shape.plane();
        let pre = self.preactivation(z, shape);
        let kg = self.stencil.apply(g, h, w);

        let mut q = vec![0.0; pre.len()];
        let mut pre_bar = vec![0.0; pre.len()];
        for c in 0..self.hidden() {
            let ew = self.log_weights[c].exp();
            let span = c * plane..(c + 1) * plane;
            let mut wsum = 0.0;
            for idx in span {
                let t = pre[idx];
                let act = self.slopes.activation(t);
                q[idx] = ew * act;
                wsum += ew * act * kg[idx];
                pre_bar[idx] = ew * self.slopes.activation_slope(t) * kg[idx];
            }
            grad.log_weights[c] += wsum;
        }
        // ⟨g, Kᵀq⟩ = ⟨Kg, q⟩ through the outer transpose.
        self.stencil.accumulate_tap_grad(g, &q, h, w, &mut grad.taps);
        // Through the pre-activation Kz.
        self.stencil.accumulate_tap_grad(z, &pre_bar, h, w, &mut grad.taps);
        self.stencil.adjoint(&pre_bar, h, w)
    }
}

pub fn phi_value(z: &[f64], shape: &LatentShape, layer: &PotentialLayer) -> Result<f64> {
    layer.check_shape(z, shape)?;
    Ok(layer.value_unchecked(z, shape))
}

pub fn phi_grad(z: &[f64], shape: &LatentShape, layer: &PotentialLayer) -> Result<Vec<f64>> {
    layer.check_shape(z, shape)?;
    Ok(layer.grad_unchecked(z, shape))
}

pub fn phi_hessian_vec(z: &[f64], shape: &LatentShape, layer: &PotentialLayer, v: &[f64]) -> Result<Vec<f64>> {
    layer.check_shape(z, shape)?;
    ensure_len("hessian direction", v.len(), shape.len())?;
    Ok(layer.hessian_vec_unchecked(z, v, shape))
}
