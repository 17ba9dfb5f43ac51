//! Shooting approximation of the least-action problem: a learned map
//! predicts `z_1` from `(z_0, z*)`, the Euler–Lagrange interior rows are
//! then marched forward as an initial value problem, and the mismatch at
//! the terminal row is reported as the shooting residual `r_s`.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::conv::{accumulate_bias_grad, add_bias, LatentShape, Stencil};
use crate::error::{ensure_len, DripError, Result};
use crate::leastaction::{check_dims, check_layers, DataFit, LAConfig, SolveMetrics, SolveOutput, Trajectory};
use crate::linalg::{all_finite, norm};
use crate::operators::LinearMap;
use crate::potential::{PotentialGrad, PotentialLayer, Slopes};

/// Two convolution layers with a residual connection from `z_0`:
/// `z_1 = W₂ ∗ σ′(W₁ ∗ [z_0; z*] + b₁) + b₂ + z_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitMapParams {
    /// `hidden × 2c × k × k`
    pub layer1: Stencil,
    pub bias1: Vec<f64>,
    /// `c × hidden × k × k`
    pub layer2: Stencil,
    pub bias2: Vec<f64>,
    pub slopes: Slopes,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitMapGrad {
    pub layer1: Vec<f64>,
    pub bias1: Vec<f64>,
    pub layer2: Vec<f64>,
    pub bias2: Vec<f64>,
}

impl InitMapParams {
    pub fn zeros(latent_channels: usize, hidden: usize, kernel: usize, slopes: Slopes) -> Result<Self> {
        slopes.validate()?;
        Ok(Self {
            layer1: Stencil::zeros(hidden, 2 * latent_channels, kernel)?,
            bias1: vec![0.0; hidden],
            layer2: Stencil::zeros(latent_channels, hidden, kernel)?,
            bias2: vec![0.0; latent_channels],
            slopes,
        })
    }

    /// Random first layer, zero second layer: starts as `z_1 = z_0`.
    pub fn random(
        latent_channels: usize,
        hidden: usize,
        kernel: usize,
        slopes: Slopes,
        std: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut p = Self::zeros(latent_channels, hidden, kernel, slopes)?;
        let normal = Normal::new(0.0, std).map_err(|e| DripError::precondition(e.to_string()))?;
        p.layer1.taps.iter_mut().for_each(|t| *t = normal.sample(rng));
        Ok(p)
    }

    pub fn latent_channels(&self) -> usize {
        self.layer2.out_channels
    }

    pub fn hidden(&self) -> usize {
        self.layer1.out_channels
    }

    pub fn num_params(&self) -> usize {
        self.layer1.num_taps() + self.bias1.len() + self.layer2.num_taps() + self.bias2.len()
    }

    pub fn zero_grad(&self) -> InitMapGrad {
        InitMapGrad {
            layer1: vec![0.0; self.layer1.num_taps()],
            bias1: vec![0.0; self.bias1.len()],
            layer2: vec![0.0; self.layer2.num_taps()],
            bias2: vec![0.0; self.bias2.len()],
        }
    }

    fn hidden_preactivation(&self, z0: &[f64], z_star: &[f64], shape: &LatentShape) -> Vec<f64> {
        let mut input = Vec::with_capacity(2 * shape.len());
        input.extend_from_slice(z0);
        input.extend_from_slice(z_star);
        let mut h = self.layer1.apply(&input, shape.height, shape.width);
        add_bias(&mut h, &self.bias1, shape.plane());
        h
    }

    pub(crate) fn forward(&self, z0: &[f64], z_star: &[f64], shape: &LatentShape) -> Vec<f64> {
        let mut act = self.hidden_preactivation(z0, z_star, shape);
        act.iter_mut().for_each(|t| *t = self.slopes.activation(*t));
        let mut out = self.layer2.apply(&act, shape.height, shape.width);
        add_bias(&mut out, &self.bias2, shape.plane());
        for (o, z) in out.iter_mut().zip(z0) {
            *o += z;
        }
        out
    }

    /// Reverse-mode step; accumulates parameter gradients and returns the
    /// cotangents of `(z_0, z*)`.
    pub(crate) fn vjp(
        &self,
        z0: &[f64],
        z_star: &[f64],
        out_bar: &[f64],
        shape: &LatentShape,
        grad: &mut InitMapGrad,
    ) -> (Vec<f64>, Vec<f64>) {
        let (h, w) = (shape.height, shape.width);
        let plane = shape.plane();
        let pre = self.hidden_preactivation(z0, z_star, shape);
        let act: Vec<f64> = pre.iter().map(|&t| self.slopes.activation(t)).collect();
        accumulate_bias_grad(out_bar, plane, &mut grad.bias2);
        self.layer2.accumulate_tap_grad(&act, out_bar, h, w, &mut grad.layer2);
        let mut pre_bar = self.layer2.adjoint(out_bar, h, w);
        for (pb, &t) in pre_bar.iter_mut().zip(&pre) {
            *pb *= self.slopes.activation_slope(t);
        }
        accumulate_bias_grad(&pre_bar, plane, &mut grad.bias1);
        let mut input = Vec::with_capacity(2 * shape.len());
        input.extend_from_slice(z0);
        input.extend_from_slice(z_star);
        self.layer1.accumulate_tap_grad(&input, &pre_bar, h, w, &mut grad.layer1);
        let in_bar = self.layer1.adjoint(&pre_bar, h, w);
        let (z0_part, zs_part) = in_bar.split_at(shape.len());
        let mut z0_bar = z0_part.to_vec();
        for (a, b) in z0_bar.iter_mut().zip(out_bar) {
            *a += b;
        }
        (z0_bar, zs_part.to_vec())
    }
}

/// Predicts `z_1` from `(z_0, z*)`.
pub fn init_map(z0: &[f64], z_star: &[f64], shape: &LatentShape, xi: &InitMapParams) -> Result<Vec<f64>> {
    ensure_len("z_0", z0.len(), shape.len())?;
    ensure_len("z*", z_star.len(), shape.len())?;
    if xi.latent_channels() != shape.channels || xi.layer1.in_channels != 2 * shape.channels {
        return Err(DripError::precondition(format!(
            "init map expects {} latent channels, shape has {}",
            xi.latent_channels(),
            shape.channels
        )));
    }
    Ok(xi.forward(z0, z_star, shape))
}

/// One explicit step `z_{ℓ+1} = 2z_ℓ − z_{ℓ−1} + ∇φ_ℓ(z_ℓ)`.
fn leapfrog(prev: &[f64], cur: &[f64], layer: &PotentialLayer, shape: &LatentShape) -> Vec<f64> {
    let mut next = layer.grad_unchecked(cur, shape);
    for ((n, c), p) in next.iter_mut().zip(cur).zip(prev) {
        *n += 2.0 * c - p;
    }
    next
}

/// Marches the interior Euler–Lagrange rows forward from `(z_0, z_1)` to
/// produce `z_2..z_N`.
///
/// The returned trajectory's `z_star` is the terminal state implied by the
/// last row, `2z_N − z_{N−1} + ∇φ_N(z_N)`.
pub fn propagate(
    z0: &[f64],
    z1: &[f64],
    layers: &[PotentialLayer],
    n: usize,
    shape: &LatentShape,
) -> Result<Trajectory> {
    if n == 0 {
        return Err(DripError::precondition("propagate: N must be at least 1"));
    }
    ensure_len("z_0", z0.len(), shape.len())?;
    ensure_len("z_1", z1.len(), shape.len())?;
    check_layers(layers, n, shape)?;
    let states = propagate_unchecked(z0, z1, layers, n, shape)?;
    let implied = leapfrog(&states[n - 1], &states[n], &layers[n - 1], shape);
    Ok(Trajectory { shape: *shape, states, z_star: implied })
}

pub(crate) fn propagate_unchecked(
    z0: &[f64],
    z1: &[f64],
    layers: &[PotentialLayer],
    n: usize,
    shape: &LatentShape,
) -> Result<Vec<Vec<f64>>> {
    let mut states = Vec::with_capacity(n + 1);
    states.push(z0.to_vec());
    states.push(z1.to_vec());
    for l in 1..n {
        let next = leapfrog(&states[l - 1], &states[l], &layers[l - 1], shape);
        if !all_finite(&next) {
            return Err(DripError::numerical("propagate", l, "state blew up"));
        }
        states.push(next);
    }
    Ok(states)
}

/// `r_s = 2z_N − z_{N−1} + ∇φ_N(z_N) − z*`; zero exactly when the
/// terminal Euler–Lagrange row holds.
pub fn shooting_residual(traj: &Trajectory, z_star: &[f64], layers: &[PotentialLayer]) -> Result<Vec<f64>> {
    ensure_len("z*", z_star.len(), traj.shape.len())?;
    check_layers(layers, traj.layers(), &traj.shape)?;
    Ok(shooting_residual_unchecked(traj, z_star, layers))
}

pub(crate) fn shooting_residual_unchecked(traj: &Trajectory, z_star: &[f64], layers: &[PotentialLayer]) -> Vec<f64> {
    let n = traj.layers();
    let mut r = leapfrog(&traj.states[n - 1], &traj.states[n], &layers[n - 1], &traj.shape);
    for (ri, zi) in r.iter_mut().zip(z_star) {
        *ri -= zi;
    }
    r
}

/// Accumulates the reverse-mode step through [`leapfrog`]: given the
/// cotangent `g` of `z_{ℓ+1}`, updates the cotangents of `z_ℓ`, `z_{ℓ−1}`
/// and the layer parameters.
pub(crate) fn leapfrog_vjp(
    cur: &[f64],
    g: &[f64],
    layer: &PotentialLayer,
    shape: &LatentShape,
    cur_bar: &mut [f64],
    prev_bar: &mut [f64],
    grad: &mut PotentialGrad,
) {
    let hg = layer.grad_vjp(cur, g, shape, grad);
    for k in 0..g.len() {
        cur_bar[k] += 2.0 * g[k] + hg[k];
        prev_bar[k] -= g[k];
    }
}

#[derive(Debug, Clone)]
pub(crate) struct HyperOuterRecord {
    pub z_star_in: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub(crate) struct HyperRun {
    pub output: SolveOutput,
    pub outer: Vec<HyperOuterRecord>,
}

pub(crate) fn hyper_resnet_run(
    a: &LinearMap,
    e: &LinearMap,
    b: &[f64],
    layers: &[PotentialLayer],
    xi: &InitMapParams,
    shape: &LatentShape,
    cfg: &LAConfig,
) -> Result<HyperRun> {
    cfg.validate()?;
    check_dims(a, e, b, shape)?;
    check_layers(layers, cfg.layers, shape)?;
    if xi.latent_channels() != shape.channels {
        return Err(DripError::precondition("init map channel count mismatch"));
    }
    let fit = DataFit { a, e, b, alpha: cfg.alpha, cgls: cfg.cgls };
    let zeros = vec![0.0; shape.len()];
    let (z0, mut cg_iters) = fit.solve(&zeros, &zeros)?;
    let mut z_star = z0.clone();
    let mut outer = Vec::with_capacity(cfg.max_outer_iterations);
    for _ in 0..cfg.max_outer_iterations {
        let z1 = xi.forward(&z0, &z_star, shape);
        let states = propagate_unchecked(&z0, &z1, layers, cfg.layers, shape)?;
        let (next, iters) = fit.solve(&states[cfg.layers], &z_star)?;
        cg_iters += iters;
        outer.push(HyperOuterRecord { z_star_in: std::mem::replace(&mut z_star, next), states });
    }
    let last = outer.last().expect("at least one outer iteration");
    let trajectory = Trajectory { shape: *shape, states: last.states.clone(), z_star: z_star.clone() };
    let r_s = shooting_residual_unchecked(&trajectory, &z_star, layers);
    let (u_star, residual, optimality) = fit.metrics(&z_star, trajectory.terminal());
    Ok(HyperRun {
        output: SolveOutput {
            metrics: SolveMetrics {
                residual,
                datafit_optimality: optimality,
                shooting_residual: norm(&r_s),
                el_residual: None,
                outer_iterations: cfg.max_outer_iterations,
                cgls_iterations: cg_iters,
            },
            z_star,
            u_star,
            trajectory,
            r_s,
        },
        outer,
    })
}

/// Hyper-ResNet: predict `z_1`, march the trajectory, then project onto the
/// data with the anchored data-fit solve; repeated `max_outer_iterations`
/// times.
pub fn hyper_resnet(
    a: &LinearMap,
    e: &LinearMap,
    b: &[f64],
    layers: &[PotentialLayer],
    xi: &InitMapParams,
    shape: &LatentShape,
    cfg: &LAConfig,
) -> Result<SolveOutput> {
    Ok(hyper_resnet_run(a, e, b, layers, xi, shape, cfg)?.output)
}
