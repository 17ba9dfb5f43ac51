//! Neural-proximal baseline: `u_{ℓ+1} = f(u_ℓ − τ Aᵀ(A u_ℓ − b))` with `f` a
//! small residual convolution network shared across iterations.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::conv::{accumulate_bias_grad, add_bias, LatentShape, Stencil};
use crate::error::{DripError, Result};
use crate::linalg::all_finite;
use crate::operators::{LinearMap, Operator};
use crate::potential::Slopes;

/// One residual block `x ↦ x + W₂ ∗ σ′(W₁ ∗ x + b₁) + b₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxBlock {
    pub conv1: Stencil,
    pub bias1: Vec<f64>,
    pub conv2: Stencil,
    pub bias2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxNet {
    pub blocks: Vec<ProxBlock>,
    pub slopes: Slopes,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxBlockGrad {
    pub conv1: Vec<f64>,
    pub bias1: Vec<f64>,
    pub conv2: Vec<f64>,
    pub bias2: Vec<f64>,
}

pub const PROX_BLOCKS: usize = 5;

impl ProxNet {
    /// All-zero weights: `f` is the identity.
    pub fn identity(channels: usize, hidden: usize, kernel: usize, blocks: usize, slopes: Slopes) -> Result<Self> {
        slopes.validate()?;
        let blocks = (0..blocks)
            .map(|_| {
                Ok(ProxBlock {
                    conv1: Stencil::zeros(hidden, channels, kernel)?,
                    bias1: vec![0.0; hidden],
                    conv2: Stencil::zeros(channels, hidden, kernel)?,
                    bias2: vec![0.0; channels],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { blocks, slopes })
    }

    /// Random inner convolutions with zeroed output convolutions, so the
    /// network starts as the identity.
    pub fn random(
        channels: usize,
        hidden: usize,
        kernel: usize,
        blocks: usize,
        slopes: Slopes,
        std: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut net = Self::identity(channels, hidden, kernel, blocks, slopes)?;
        let normal = Normal::new(0.0, std).map_err(|e| DripError::precondition(e.to_string()))?;
        for b in &mut net.blocks {
            b.conv1.taps.iter_mut().for_each(|t| *t = normal.sample(rng));
        }
        Ok(net)
    }

    pub fn channels(&self) -> usize {
        self.blocks.first().map_or(1, |b| b.conv1.in_channels)
    }

    pub fn num_params(&self) -> usize {
        self.blocks.iter().map(|b| b.conv1.num_taps() + b.bias1.len() + b.conv2.num_taps() + b.bias2.len()).sum()
    }

    pub fn zero_grad(&self) -> Vec<ProxBlockGrad> {
        self.blocks
            .iter()
            .map(|b| ProxBlockGrad {
                conv1: vec![0.0; b.conv1.num_taps()],
                bias1: vec![0.0; b.bias1.len()],
                conv2: vec![0.0; b.conv2.num_taps()],
                bias2: vec![0.0; b.bias2.len()],
            })
            .collect()
    }

    fn block_pre(&self, block: &ProxBlock, x: &[f64], shape: &LatentShape) -> Vec<f64> {
        let mut h = block.conv1.apply(x, shape.height, shape.width);
        add_bias(&mut h, &block.bias1, shape.plane());
        h
    }

    /// Returns the output and the input of every block.
    fn forward_recorded(&self, x: &[f64], shape: &LatentShape) -> (Vec<f64>, Vec<Vec<f64>>) {
        let mut inputs = Vec::with_capacity(self.blocks.len());
        let mut cur = x.to_vec();
        for block in &self.blocks {
            let mut act = self.block_pre(block, &cur, shape);
            act.iter_mut().for_each(|t| *t = self.slopes.activation(*t));
            let mut out = block.conv2.apply(&act, shape.height, shape.width);
            add_bias(&mut out, &block.bias2, shape.plane());
            for (o, c) in out.iter_mut().zip(&cur) {
                *o += c;
            }
            inputs.push(std::mem::replace(&mut cur, out));
        }
        (cur, inputs)
    }

    pub fn forward(&self, x: &[f64], shape: &LatentShape) -> Vec<f64> {
        self.forward_recorded(x, shape).0
    }

    fn backward(
        &self,
        inputs: &[Vec<f64>],
        out_bar: Vec<f64>,
        shape: &LatentShape,
        grad: &mut [ProxBlockGrad],
    ) -> Vec<f64> {
        let (h, w) = (shape.height, shape.width);
        let plane = shape.plane();
        let mut bar = out_bar;
        for (j, block) in self.blocks.iter().enumerate().rev() {
            let x = &inputs[j];
            let pre = self.block_pre(block, x, shape);
            let act: Vec<f64> = pre.iter().map(|&t| self.slopes.activation(t)).collect();
            let g = &mut grad[j];
            accumulate_bias_grad(&bar, plane, &mut g.bias2);
            block.conv2.accumulate_tap_grad(&act, &bar, h, w, &mut g.conv2);
            let mut pre_bar = block.conv2.adjoint(&bar, h, w);
            for (pb, &t) in pre_bar.iter_mut().zip(&pre) {
                *pb *= self.slopes.activation_slope(t);
            }
            accumulate_bias_grad(&pre_bar, plane, &mut g.bias1);
            block.conv1.accumulate_tap_grad(x, &pre_bar, h, w, &mut g.conv1);
            let through = block.conv1.adjoint(&pre_bar, h, w);
            for (b, t) in bar.iter_mut().zip(&through) {
                *b += t;
            }
        }
        bar
    }
}

/// Step size `1/‖A‖²` from 30 power iterations.
pub fn default_step(a: &LinearMap) -> f64 {
    let sigma = crate::operators::operator_norm_estimate(a, 30);
    1.0 / (sigma * sigma).max(f64::MIN_POSITIVE)
}

fn gradient_step(a: &LinearMap, b: &[f64], u: &[f64], step: f64) -> Vec<f64> {
    let mut r = a.apply_vec(u);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri -= bi;
    }
    let g = a.adjoint_vec(&r);
    u.iter().zip(&g).map(|(ui, gi)| ui - step * gi).collect()
}

pub(crate) struct ProxRun {
    pub u: Vec<f64>,
    /// Per iteration: the inputs of every block of `f`.
    pub block_inputs: Vec<Vec<Vec<f64>>>,
}

pub(crate) fn prox_run(
    a: &LinearMap,
    b: &[f64],
    net: &ProxNet,
    shape: &LatentShape,
    iterations: usize,
    step: f64,
    record: bool,
) -> Result<ProxRun> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(DripError::precondition("baseline step must be positive"));
    }
    if iterations == 0 {
        return Err(DripError::precondition("baseline needs at least one iteration"));
    }
    crate::error::ensure_len("baseline data", b.len(), a.rows())?;
    crate::error::ensure_len("baseline image", shape.len(), a.cols())?;
    if net.channels() != shape.channels {
        return Err(DripError::precondition("baseline channel count mismatch"));
    }
    let mut u = vec![0.0; a.cols()];
    let mut block_inputs = Vec::new();
    for it in 0..iterations {
        let v = gradient_step(a, b, &u, step);
        let (out, inputs) = net.forward_recorded(&v, shape);
        if !all_finite(&out) {
            return Err(DripError::numerical("proximal_baseline", it + 1, "state blew up"));
        }
        if record {
            block_inputs.push(inputs);
        }
        u = out;
    }
    Ok(ProxRun { u, block_inputs })
}

/// Runs the neural-proximal iteration from `u_0 = 0`.
pub fn proximal_baseline_apply(
    b: &[f64],
    a: &LinearMap,
    net: &ProxNet,
    shape: &LatentShape,
    iterations: usize,
    step: f64,
) -> Result<Vec<f64>> {
    Ok(prox_run(a, b, net, shape, iterations, step, false)?.u)
}

/// Reverse pass of [`prox_run`] given `∂L/∂u_final`.
pub(crate) fn prox_backward(
    a: &LinearMap,
    net: &ProxNet,
    shape: &LatentShape,
    run: &ProxRun,
    step: f64,
    u_bar: Vec<f64>,
    grad: &mut [ProxBlockGrad],
) {
    let mut bar = u_bar;
    for inputs in run.block_inputs.iter().rev() {
        let v_bar = net.backward(inputs, bar, shape, grad);
        // v = u − τ AᵀA u + τ Aᵀb
        let ata = a.adjoint_vec(&a.apply_vec(&v_bar));
        bar = v_bar.iter().zip(&ata).map(|(v, g)| v - step * g).collect();
    }
}
