//! Reverse-mode gradients of the training loss through each model's forward
//! pass. The data-fit solve is differentiated implicitly.

use crate::conv::LatentShape;
use crate::error::{DripError, Result};
use crate::leastaction::{la_net_run, shifted_coefficients, sweep_solve_with, SHIFT_FRACTION};
use crate::linalg::{axpy, dot, sub};
use crate::operators::{LinearMap, Operator};
use crate::potential::PotentialLayer;
use crate::shooting::{hyper_resnet_run, leapfrog_vjp};
use crate::solvers::datafit_anchor_vjp;
use crate::training::model::{ModelBundle, ModelGrad, ModelKind};
use crate::training::proximal::{prox_backward, prox_run};
use crate::training::{compute_losses, Losses, TrainConfig};

/// One supervised problem: data `b = A·u_true + ε`.
#[derive(Debug, Clone, Copy)]
pub struct Instance<'a> {
    pub a: &'a LinearMap,
    pub e: &'a LinearMap,
    pub b: &'a [f64],
    pub u_true: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientOutcome {
    pub losses: Losses,
    /// Same layout as [`ModelBundle::flatten`].
    pub gradient: Vec<f64>,
    pub u_star: Vec<f64>,
}

/// Loss value, its gradient w.r.t. every parameter, and the reconstruction.
pub fn backward_gradients(model: &ModelBundle, inst: &Instance<'_>, cfg: &TrainConfig) -> Result<GradientOutcome> {
    match model.kind() {
        ModelKind::HyperResNet => hyper_gradient(model, inst, cfg),
        ModelKind::LANet => lanet_gradient(model, inst, cfg),
        ModelKind::NeuralProximal => prox_gradient(model, inst, cfg),
    }
}

/// Loss-only evaluation along the same forward path as
/// [`backward_gradients`].
pub fn evaluate_loss(model: &ModelBundle, inst: &Instance<'_>, cfg: &TrainConfig) -> Result<Losses> {
    let la = model.config.la_config(cfg.cgls);
    let shape = model.shape();
    match model.kind() {
        ModelKind::HyperResNet => {
            let xi = init_map_of(model)?;
            let run = hyper_resnet_run(inst.a, inst.e, inst.b, &model.potential_layers, xi, shape, &la)?;
            let u_ref = embed(inst.e, &run.outer[0].z_star_in);
            compute_losses(&run.output.u_star, inst.u_true, &u_ref, inst.a, &run.output.r_s, cfg)
        }
        ModelKind::LANet => {
            let run = la_net_run(inst.a, inst.e, inst.b, &model.potential_layers, shape, &la, false)?;
            let u_ref = embed(inst.e, run.output.trajectory.z0());
            compute_losses(&run.output.u_star, inst.u_true, &u_ref, inst.a, &run.output.r_s, cfg)
        }
        ModelKind::NeuralProximal => {
            let net = model.baseline.as_ref().ok_or_else(|| DripError::precondition("missing baseline net"))?;
            let run = prox_run(inst.a, inst.b, net, shape, model.config.layers, model.config.baseline_step, false)?;
            Ok(baseline_losses(&run.u, inst, cfg).0)
        }
    }
}

fn init_map_of(model: &ModelBundle) -> Result<&crate::shooting::InitMapParams> {
    model.init_map.as_ref().ok_or_else(|| DripError::precondition("missing init map"))
}

fn embed(e: &LinearMap, z: &[f64]) -> Vec<f64> {
    if e.is_identity() {
        z.to_vec()
    } else {
        e.apply_vec(z)
    }
}

/// `∂L/∂u*` for the DRIP losses.
fn drip_u_bar(u: &[f64], u_true: &[f64], u_ref: &[f64], a: &LinearMap, cfg: &TrainConfig) -> Vec<f64> {
    let diff = sub(u, u_true);
    let through = a.adjoint_vec(&a.apply_vec(&diff));
    (0..u.len())
        .map(|i| 2.0 * diff[i] + 2.0 * cfg.loss_alpha * through[i] + 2.0 * cfg.loss_beta * (u[i] - u_ref[i]))
        .collect()
}

/// `Eᵀū − r̄`, the cotangent reaching the final `z*`.
fn z_star_bar(e: &LinearMap, u_bar: &[f64], r_bar: &[f64]) -> Vec<f64> {
    let mut zs = if e.is_identity() { u_bar.to_vec() } else { e.adjoint_vec(u_bar) };
    axpy(-1.0, r_bar, &mut zs);
    zs
}

fn r_bar(r_s: &[f64], cfg: &TrainConfig) -> Vec<f64> {
    r_s.iter().map(|r| 2.0 * cfg.loss_alpha * r).collect()
}

/// Reverse step through `next = 2·states[cur] − states[cur−1] + ∇φ(states[cur])`.
fn leapfrog_back(
    state: &[f64],
    g: &[f64],
    layer: &PotentialLayer,
    shape: &LatentShape,
    bars: &mut [Vec<f64>],
    cur: usize,
    grad: &mut crate::potential::PotentialGrad,
) {
    let (lo, hi) = bars.split_at_mut(cur);
    leapfrog_vjp(state, g, layer, shape, &mut hi[0], &mut lo[cur - 1], grad);
}

fn hyper_gradient(model: &ModelBundle, inst: &Instance<'_>, cfg: &TrainConfig) -> Result<GradientOutcome> {
    let la = model.config.la_config(cfg.cgls);
    let shape = model.shape();
    let layers = &model.potential_layers;
    let xi = init_map_of(model)?;
    let run = hyper_resnet_run(inst.a, inst.e, inst.b, layers, xi, shape, &la)?;
    let out = &run.output;
    let z0 = &run.outer[0].z_star_in;
    let u_ref = embed(inst.e, z0);
    let losses = compute_losses(&out.u_star, inst.u_true, &u_ref, inst.a, &out.r_s, cfg)?;

    let n = la.layers;
    let s = shape.len();
    let mut grad = model.zero_grad();
    let r_bar = r_bar(&out.r_s, cfg);
    let u_bar = drip_u_bar(&out.u_star, inst.u_true, &u_ref, inst.a, cfg);
    let mut zs_bar = z_star_bar(inst.e, &u_bar, &r_bar);

    let last = run.outer.last().expect("at least one outer iteration");
    let mut bars = vec![vec![0.0; s]; n + 1];
    leapfrog_back(&last.states[n], &r_bar, &layers[n - 1], shape, &mut bars, n, &mut grad.potentials[n - 1]);

    let xi_grad = grad.init_map.as_mut().expect("hyper model has init map grad");
    for (t, rec) in run.outer.iter().enumerate().rev() {
        if t + 1 < run.outer.len() {
            bars.iter_mut().for_each(|b| b.iter_mut().for_each(|v| *v = 0.0));
        }
        let anchor_bar = datafit_anchor_vjp(inst.a, inst.e, la.alpha, &zs_bar, &cfg.cgls)?;
        axpy(1.0, &anchor_bar, &mut bars[n]);
        for l in (1..n).rev() {
            let g = bars[l + 1].clone();
            leapfrog_back(&rec.states[l], &g, &layers[l - 1], shape, &mut bars, l, &mut grad.potentials[l - 1]);
        }
        let (_, zs_in_bar) = xi.vjp(z0, &rec.z_star_in, &bars[1], shape, xi_grad);
        zs_bar = zs_in_bar;
    }
    Ok(GradientOutcome { losses, gradient: grad.flatten(), u_star: out.u_star.clone() })
}

fn lanet_gradient(model: &ModelBundle, inst: &Instance<'_>, cfg: &TrainConfig) -> Result<GradientOutcome> {
    let la = model.config.la_config(cfg.cgls);
    let shape = model.shape();
    let layers = &model.potential_layers;
    let run = la_net_run(inst.a, inst.e, inst.b, layers, shape, &la, true)?;
    let out = &run.output;
    let z0 = out.trajectory.z0();
    let u_ref = embed(inst.e, z0);
    let losses = compute_losses(&out.u_star, inst.u_true, &u_ref, inst.a, &out.r_s, cfg)?;

    let n = la.layers;
    let s = shape.len();
    let coeffs = shifted_coefficients(&run.shifts)?;
    let mut grad = model.zero_grad();
    let r_bar = r_bar(&out.r_s, cfg);
    let u_bar = drip_u_bar(&out.u_star, inst.u_true, &u_ref, inst.a, cfg);
    let mut zs_bar = z_star_bar(inst.e, &u_bar, &r_bar);

    // Index 0 holds z_0 (constant); 1..=N the interior states.
    let mut bars = vec![vec![0.0; s]; n + 1];
    leapfrog_back(out.trajectory.terminal(), &r_bar, &layers[n - 1], shape, &mut bars, n, &mut grad.potentials[n - 1]);
    let mut interior_bar: Vec<Vec<f64>> = bars.split_off(1);

    for rec in run.outer.iter().rev() {
        let anchor_bar = datafit_anchor_vjp(inst.a, inst.e, la.alpha, &zs_bar, &cfg.cgls)?;
        axpy(1.0, &anchor_bar, &mut interior_bar[n - 1]);
        let mut zs_prev_bar = vec![0.0; s];
        for (k, input) in rec.sweep_inputs.iter().enumerate().rev() {
            let output = rec.sweep_inputs.get(k + 1).unwrap_or(&rec.sweep_output);
            let y = sweep_solve_with(interior_bar, &coeffs);
            axpy(1.0, &y[n - 1], &mut zs_prev_bar);
            interior_bar = (0..n)
                .map(|i| {
                    let neg: Vec<f64> = y[i].iter().map(|v| -v).collect();
                    let mut bar = layers[i].grad_vjp(&input[i], &neg, shape, &mut grad.potentials[i]);
                    if run.shifts[i] != 0.0 {
                        axpy(run.shifts[i], &y[i], &mut bar);
                        let shift_bar = dot(&y[i], &sub(&input[i], &output[i]));
                        layers[i].curvature_bound_vjp(SHIFT_FRACTION * shift_bar, &mut grad.potentials[i]);
                    }
                    bar
                })
                .collect();
        }
        zs_bar = zs_prev_bar;
    }
    Ok(GradientOutcome { losses, gradient: grad.flatten(), u_star: out.u_star.clone() })
}

/// Baseline losses (no similarity or shooting terms) and `∂L/∂u`.
fn baseline_losses(u: &[f64], inst: &Instance<'_>, cfg: &TrainConfig) -> (Losses, Vec<f64>) {
    let diff = sub(u, inst.u_true);
    let adiff = inst.a.apply_vec(&diff);
    let error: f64 = diff.iter().map(|d| d * d).sum();
    let residual: f64 = adiff.iter().map(|d| d * d).sum();
    let through = inst.a.adjoint_vec(&adiff);
    let u_bar = diff.iter().zip(&through).map(|(d, t)| 2.0 * d + 2.0 * cfg.loss_alpha * t).collect();
    (Losses { total: error + cfg.loss_alpha * residual, error, residual, sim: 0.0 }, u_bar)
}

fn prox_gradient(model: &ModelBundle, inst: &Instance<'_>, cfg: &TrainConfig) -> Result<GradientOutcome> {
    let net = model.baseline.as_ref().ok_or_else(|| DripError::precondition("missing baseline net"))?;
    let shape = model.shape();
    crate::error::ensure_len("u_true", inst.u_true.len(), inst.a.cols())?;
    let step = model.config.baseline_step;
    let run = prox_run(inst.a, inst.b, net, shape, model.config.layers, step, true)?;
    let (losses, u_bar) = baseline_losses(&run.u, inst, cfg);
    let mut grad: ModelGrad = model.zero_grad();
    prox_backward(inst.a, net, shape, &run, step, u_bar, &mut grad.baseline);
    Ok(GradientOutcome { losses, gradient: grad.flatten(), u_star: run.u })
}
