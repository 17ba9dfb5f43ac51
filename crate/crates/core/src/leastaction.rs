//! Least-action regularization: trajectory energy, the block-tridiagonal
//! Euler–Lagrange system and its analytic Cholesky sweeps, and the LA-Net
//! alternating solver.

use serde::{Deserialize, Serialize};

use crate::conv::LatentShape;
use crate::error::{ensure_len, DripError, Result};
use crate::linalg::{axpy, norm, sub};
use crate::operators::{LinearMap, Operator};
use crate::potential::PotentialLayer;
use crate::shooting::shooting_residual_unchecked;
use crate::solvers::{datafit_solve_from, forward_apply, CglsConfig, DataFitProblem};

/// Latent path `[z_0, …, z_N]` plus the data-consistent state `z*`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub shape: LatentShape,
    pub states: Vec<Vec<f64>>,
    pub z_star: Vec<f64>,
}

impl Trajectory {
    pub fn new(shape: LatentShape, states: Vec<Vec<f64>>, z_star: Vec<f64>) -> Result<Self> {
        if states.len() < 2 {
            return Err(DripError::precondition("trajectory needs N >= 1"));
        }
        for s in &states {
            ensure_len("trajectory state", s.len(), shape.len())?;
        }
        ensure_len("trajectory z*", z_star.len(), shape.len())?;
        Ok(Self { shape, states, z_star })
    }

    /// Number of layers `N`.
    pub fn layers(&self) -> usize {
        self.states.len() - 1
    }

    pub fn z0(&self) -> &[f64] {
        &self.states[0]
    }

    pub fn terminal(&self) -> &[f64] {
        &self.states[self.layers()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LAConfig {
    /// Layer count `N`.
    pub layers: usize,
    /// Data-fit weight.
    pub alpha: f64,
    pub fixed_point_sweeps: usize,
    pub max_outer_iterations: usize,
    pub cgls: CglsConfig,
    /// Optional early exit once the Euler–Lagrange residual drops below this.
    pub sweep_tolerance: Option<f64>,
    /// Shift each sweep by a curvature bound of its potential so that every
    /// sweep decreases the trajectory energy.
    pub majorize: bool,
}

impl Default for LAConfig {
    fn default() -> Self {
        Self {
            layers: 8,
            alpha: 0.1,
            fixed_point_sweeps: 3,
            max_outer_iterations: 1,
            cgls: CglsConfig::default(),
            sweep_tolerance: None,
            majorize: true,
        }
    }
}

impl LAConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0
            || self.fixed_point_sweeps == 0
            || self.max_outer_iterations == 0
            || !(self.alpha > 0.0 && self.alpha.is_finite())
        {
            return Err(DripError::precondition(format!("invalid LA config: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Energy {
    /// `½‖z* − z_N‖² + E_K + E_P`
    pub total: f64,
    pub kinetic: f64,
    pub potential: f64,
}

pub(crate) fn check_layers(layers: &[PotentialLayer], n: usize, shape: &LatentShape) -> Result<()> {
    if layers.len() < n {
        return Err(DripError::precondition(format!("need {n} potential layers, got {}", layers.len())));
    }
    for layer in &layers[..n] {
        if layer.latent_channels() != shape.channels {
            return Err(DripError::precondition(format!(
                "layer expects {} latent channels, state has {}",
                layer.latent_channels(),
                shape.channels
            )));
        }
    }
    Ok(())
}

/// Regularizer value and its parts. `φ(z_0)` uses the first layer's parameters.
pub fn la_energy(traj: &Trajectory, layers: &[PotentialLayer]) -> Result<Energy> {
    let n = traj.layers();
    check_layers(layers, n, &traj.shape)?;
    let kinetic: f64 = traj.states.windows(2).map(|w| 0.5 * norm(&sub(&w[1], &w[0])).powi(2)).sum();
    let mut potential = layers[0].value_unchecked(&traj.states[0], &traj.shape);
    for l in 1..=n {
        potential += layers[l - 1].value_unchecked(&traj.states[l], &traj.shape);
    }
    let coupling = 0.5 * norm(&sub(&traj.z_star, traj.terminal())).powi(2);
    Ok(Energy { total: coupling + kinetic + potential, kinetic, potential })
}

/// Diagonal of the analytic Cholesky factor, `a_j = √((j+1)/j)`.
pub fn tridiag_coefficients(n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(DripError::precondition("N must be at least 1"));
    }
    Ok((1..=n).map(|j| ((j + 1) as f64 / j as f64).sqrt()).collect())
}

/// Cholesky diagonal of `T + diag(c_ℓ) ⊗ I`: `a_1² = 2 + c_1`,
/// `a_j² = 2 + c_j − 1/a_{j−1}²`. Zero shifts reproduce
/// [`tridiag_coefficients`].
pub fn shifted_coefficients(shifts: &[f64]) -> Result<Vec<f64>> {
    if shifts.is_empty() {
        return Err(DripError::precondition("N must be at least 1"));
    }
    if shifts.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
        return Err(DripError::precondition("sweep shifts must be finite and nonnegative"));
    }
    if shifts.iter().all(|&c| c == 0.0) {
        return tridiag_coefficients(shifts.len());
    }
    let mut coeffs: Vec<f64> = Vec::with_capacity(shifts.len());
    for (j, c) in shifts.iter().enumerate() {
        let prev = if j == 0 { 0.0 } else { 1.0 / (coeffs[j - 1] * coeffs[j - 1]) };
        coeffs.push((2.0 + c - prev).sqrt());
    }
    Ok(coeffs)
}

pub(crate) const SHIFT_FRACTION: f64 = 0.5;

/// Per-layer sweep shifts: half the potentials' curvature bounds, or zeros.
/// With `T + C ⪰ (T + ∇²Φ)/2` each sweep is a descent step on the energy.
pub fn sweep_shifts(layers: &[PotentialLayer], cfg: &LAConfig) -> Vec<f64> {
    layers
        .iter()
        .take(cfg.layers)
        .map(|l| if cfg.majorize { SHIFT_FRACTION * l.curvature_bound() } else { 0.0 })
        .collect()
}

/// Solves `T Z = rhs` where `T = tridiag(−I, 2I, −I)` has `N` blocks,
/// using `T = CᵀC` with `C` upper bidiagonal (`a_j` on the diagonal,
/// `−1/a_j` above it).
pub fn sweep_solve(rhs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = rhs.len();
    if n == 0 {
        return Err(DripError::precondition("sweep_solve: empty right-hand side"));
    }
    let s = rhs[0].len();
    for r in rhs {
        ensure_len("sweep_solve block", r.len(), s)?;
    }
    let coeffs = tridiag_coefficients(n)?;
    Ok(sweep_solve_with(rhs.to_vec(), &coeffs))
}

pub(crate) fn sweep_solve_with(mut blocks: Vec<Vec<f64>>, coeffs: &[f64]) -> Vec<Vec<f64>> {
    let n = blocks.len();
    // Forward substitution with Cᵀ: y_j = (r_j + y_{j−1}/a_{j−1}) / a_j.
    for j in 0..n {
        if j > 0 {
            let (done, rest) = blocks.split_at_mut(j);
            axpy(1.0 / coeffs[j - 1], &done[j - 1], &mut rest[0]);
        }
        let inv = 1.0 / coeffs[j];
        blocks[j].iter_mut().for_each(|v| *v *= inv);
    }
    // Backward substitution with C: z_j = (y_j + z_{j+1}/a_j) / a_j.
    for j in (0..n).rev() {
        if j + 1 < n {
            let (head, tail) = blocks.split_at_mut(j + 1);
            axpy(1.0 / coeffs[j], &tail[0], &mut head[j]);
        }
        let inv = 1.0 / coeffs[j];
        blocks[j].iter_mut().for_each(|v| *v *= inv);
    }
    blocks
}

/// Residual blocks of the Euler–Lagrange system
/// `2z_ℓ − z_{ℓ−1} − z_{ℓ+1} + ∇φ_ℓ(z_ℓ) = 0`, `ℓ = 1..N`, with `z_{N+1} = z*`.
pub fn euler_lagrange_residual(
    z0: &[f64],
    z_star: &[f64],
    interior: &[Vec<f64>],
    layers: &[PotentialLayer],
    shape: &LatentShape,
) -> Vec<Vec<f64>> {
    let n = interior.len();
    (0..n)
        .map(|i| {
            let prev = if i == 0 { z0 } else { &interior[i - 1] };
            let next = if i + 1 == n { z_star } else { &interior[i + 1] };
            let mut r = layers[i].grad_unchecked(&interior[i], shape);
            for (k, v) in r.iter_mut().enumerate() {
                *v += 2.0 * interior[i][k] - prev[k] - next[k];
            }
            r
        })
        .collect()
}

fn block_norm(blocks: &[Vec<f64>]) -> f64 {
    blocks.iter().map(|b| norm(b).powi(2)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointResult {
    pub trajectory: Trajectory,
    /// `‖F(Z)‖₂` of the Euler–Lagrange system at the returned trajectory.
    pub el_residual: f64,
    pub sweeps: usize,
}

pub(crate) struct SweepRun {
    pub interior: Vec<Vec<f64>>,
    pub el_residual: f64,
    pub sweeps: usize,
    /// Interior states before each executed sweep (only when recording).
    pub inputs: Vec<Vec<Vec<f64>>>,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn run_sweeps(
    z0: &[f64],
    z_star: &[f64],
    layers: &[PotentialLayer],
    shape: &LatentShape,
    mut interior: Vec<Vec<f64>>,
    shifts: &[f64],
    sweeps: usize,
    tolerance: Option<f64>,
    record: bool,
) -> Result<SweepRun> {
    let n = interior.len();
    let coeffs = shifted_coefficients(shifts)?;
    let scale = 1.0 + norm(z0) + norm(z_star);
    let mut residual = block_norm(&euler_lagrange_residual(z0, z_star, &interior, layers, shape));
    let mut inputs = Vec::new();
    let mut done = 0;
    for k in 0..sweeps {
        if tolerance.is_some_and(|tol| residual <= tol) {
            break;
        }
        let rhs: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut r = layers[i].grad_unchecked(&interior[i], shape);
                r.iter_mut().for_each(|v| *v = -*v);
                if shifts[i] != 0.0 {
                    axpy(shifts[i], &interior[i], &mut r);
                }
                if i == 0 {
                    axpy(1.0, z0, &mut r);
                }
                if i + 1 == n {
                    axpy(1.0, z_star, &mut r);
                }
                r
            })
            .collect();
        if record {
            inputs.push(interior.clone());
        }
        interior = sweep_solve_with(rhs, &coeffs);
        let next = block_norm(&euler_lagrange_residual(z0, z_star, &interior, layers, shape));
        if !next.is_finite() {
            return Err(DripError::numerical("la_fixed_point", k + 1, "non-finite trajectory"));
        }
        if next > 10.0 * residual && next > 1e-8 * scale {
            return Err(DripError::numerical(
                "la_fixed_point",
                k + 1,
                format!("Euler-Lagrange residual grew from {residual:.3e} to {next:.3e}"),
            ));
        }
        residual = next;
        done = k + 1;
    }
    Ok(SweepRun { interior, el_residual: residual, sweeps: done, inputs })
}

/// Approximately solves the least-action boundary value problem by
/// `fixed_point_sweeps` linear sweeps starting from `Z = 0`.
///
/// Each sweep solves `(T + C) Z⁺ = b(z_0, z*) + C Z − ∇Φ(Z)` with
/// `C = diag(c_ℓ)` from [`sweep_shifts`]; the fixed point is the same for
/// any shifts, and with `majorize` every sweep decreases the energy.
pub fn la_fixed_point(
    z0: &[f64],
    z_star: &[f64],
    layers: &[PotentialLayer],
    shape: &LatentShape,
    cfg: &LAConfig,
) -> Result<FixedPointResult> {
    let zeros = vec![vec![0.0; shape.len()]; cfg.layers];
    la_fixed_point_from(z0, z_star, layers, shape, cfg, zeros)
}

/// As [`la_fixed_point`] but starting from the given interior states `z_1..z_N`.
pub fn la_fixed_point_from(
    z0: &[f64],
    z_star: &[f64],
    layers: &[PotentialLayer],
    shape: &LatentShape,
    cfg: &LAConfig,
    initial: Vec<Vec<f64>>,
) -> Result<FixedPointResult> {
    cfg.validate()?;
    ensure_len("z_0", z0.len(), shape.len())?;
    ensure_len("z*", z_star.len(), shape.len())?;
    ensure_len("initial trajectory", initial.len(), cfg.layers)?;
    for z in &initial {
        ensure_len("initial state", z.len(), shape.len())?;
    }
    check_layers(layers, cfg.layers, shape)?;
    let shifts = sweep_shifts(layers, cfg);
    let run =
        run_sweeps(z0, z_star, layers, shape, initial, &shifts, cfg.fixed_point_sweeps, cfg.sweep_tolerance, false)?;
    let mut states = Vec::with_capacity(cfg.layers + 1);
    states.push(z0.to_vec());
    states.extend(run.interior);
    Ok(FixedPointResult {
        trajectory: Trajectory { shape: *shape, states, z_star: z_star.to_vec() },
        el_residual: run.el_residual,
        sweeps: run.sweeps,
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolveMetrics {
    /// `‖A E z* − b‖ / ‖b‖`
    pub residual: f64,
    /// Relative optimality residual of the final data-fit solve.
    pub datafit_optimality: f64,
    /// `‖r_s‖` at exit.
    pub shooting_residual: f64,
    /// Euler–Lagrange residual of the last fixed-point solve (LA-Net only).
    pub el_residual: Option<f64>,
    pub outer_iterations: usize,
    pub cgls_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutput {
    pub z_star: Vec<f64>,
    pub u_star: Vec<f64>,
    /// Final trajectory `[z_0..z_N]` with the exit `z*`.
    pub trajectory: Trajectory,
    pub r_s: Vec<f64>,
    pub metrics: SolveMetrics,
}

/// Record of one outer LA-Net iteration, kept for reverse-mode differentiation.
#[derive(Debug, Clone)]
pub(crate) struct LaOuterRecord {
    pub sweep_inputs: Vec<Vec<Vec<f64>>>,
    pub sweep_output: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub(crate) struct LaNetRun {
    pub output: SolveOutput,
    pub outer: Vec<LaOuterRecord>,
    pub shifts: Vec<f64>,
}

pub(crate) struct DataFit<'a> {
    pub a: &'a LinearMap,
    pub e: &'a LinearMap,
    pub b: &'a [f64],
    pub alpha: f64,
    pub cgls: CglsConfig,
}

impl DataFit<'_> {
    pub fn solve(&self, anchor: &[f64], warm: &[f64]) -> Result<(Vec<f64>, usize)> {
        let p = DataFitProblem { a: self.a, e: self.e, b: self.b, alpha: self.alpha, z_anchor: anchor };
        let out = datafit_solve_from(&p, &self.cgls, warm)?;
        Ok((out.x, out.iterations))
    }

    pub fn metrics(&self, z_star: &[f64], anchor: &[f64]) -> (Vec<f64>, f64, f64) {
        let p = DataFitProblem { a: self.a, e: self.e, b: self.b, alpha: self.alpha, z_anchor: anchor };
        let u = if self.e.is_identity() { z_star.to_vec() } else { self.e.apply_vec(z_star) };
        let fit = forward_apply(self.a, self.e, z_star);
        let residual = norm(&sub(&fit, self.b)) / norm(self.b).max(f64::MIN_POSITIVE);
        (u, residual, p.optimality_residual(z_star))
    }
}

pub(crate) fn check_dims(a: &LinearMap, e: &LinearMap, b: &[f64], shape: &LatentShape) -> Result<()> {
    if a.cols() != e.rows() {
        return Err(DripError::precondition("A and E dimensions do not chain"));
    }
    ensure_len("data", b.len(), a.rows())?;
    ensure_len("latent size", shape.len(), e.cols())
}

pub(crate) fn la_net_run(
    a: &LinearMap,
    e: &LinearMap,
    b: &[f64],
    layers: &[PotentialLayer],
    shape: &LatentShape,
    cfg: &LAConfig,
    record: bool,
) -> Result<LaNetRun> {
    cfg.validate()?;
    check_dims(a, e, b, shape)?;
    check_layers(layers, cfg.layers, shape)?;
    let fit = DataFit { a, e, b, alpha: cfg.alpha, cgls: cfg.cgls };
    let s = shape.len();
    let zeros = vec![0.0; s];
    let (z0, mut cg_iters) = fit.solve(&zeros, &zeros)?;
    let mut z_star = z0.clone();
    // Start from the constant path at z_0, the exact solution for φ ≡ 0.
    let mut interior = vec![z0.clone(); cfg.layers];
    let mut outer = Vec::new();
    let mut el = 0.0;
    let shifts = sweep_shifts(layers, cfg);
    for _ in 0..cfg.max_outer_iterations {
        let run = run_sweeps(
            &z0,
            &z_star,
            layers,
            shape,
            interior,
            &shifts,
            cfg.fixed_point_sweeps,
            cfg.sweep_tolerance,
            record,
        )?;
        el = run.el_residual;
        interior = run.interior;
        let z_star_in = z_star;
        let (next, iters) = fit.solve(&interior[cfg.layers - 1], &z_star_in)?;
        cg_iters += iters;
        z_star = next;
        if record {
            outer.push(LaOuterRecord { sweep_inputs: run.inputs, sweep_output: interior.clone() });
        }
    }
    let mut states = Vec::with_capacity(cfg.layers + 1);
    states.push(z0);
    states.extend(interior);
    let trajectory = Trajectory { shape: *shape, states, z_star: z_star.clone() };
    let r_s = shooting_residual_unchecked(&trajectory, &z_star, layers);
    let (u_star, residual, optimality) = fit.metrics(&z_star, trajectory.terminal());
    debug_assert_eq!(u_star.len(), a.cols());
    Ok(LaNetRun {
        output: SolveOutput {
            metrics: SolveMetrics {
                residual,
                datafit_optimality: optimality,
                shooting_residual: norm(&r_s),
                el_residual: Some(el),
                outer_iterations: cfg.max_outer_iterations,
                cgls_iterations: cg_iters,
            },
            z_star,
            u_star,
            trajectory,
            r_s,
        },
        outer,
        shifts,
    })
}

/// LA-Net: alternate least-action sweeps with the anchored data-fit solve,
/// starting from the zero-anchor data-fit solution.
pub fn la_net(
    a: &LinearMap,
    e: &LinearMap,
    b: &[f64],
    layers: &[PotentialLayer],
    shape: &LatentShape,
    cfg: &LAConfig,
) -> Result<SolveOutput> {
    Ok(la_net_run(a, e, b, layers, shape, cfg, false)?.output)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::Slopes;

    fn zero_layers(n: usize) -> Vec<PotentialLayer> {
        (0..n).map(|_| PotentialLayer::zeros(2, 1, 3, Slopes::default()).unwrap()).collect()
    }

    #[test]
    fn coefficients() {
        let a = tridiag_coefficients(3).unwrap();
        assert!((a[0] - std::f64::consts::SQRT_2).abs() < 1e-15);
        assert!((a[1] - 1.224_744_871_391_589).abs() < 1e-15);
        assert!(tridiag_coefficients(0).is_err());
    }

    #[test]
    fn sweep_single_block() {
        let z = sweep_solve(&[vec![3.0, -1.0]]).unwrap();
        assert!((z[0][0] - 1.5).abs() < 1e-15 && (z[0][1] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn sweep_discrete_laplace() {
        let rhs = vec![vec![0.0], vec![0.0], vec![0.0], vec![1.0]];
        let z = sweep_solve(&rhs).unwrap();
        for (l, zl) in z.iter().enumerate() {
            assert!((zl[0] - (l + 1) as f64 / 5.0).abs() < 1e-14);
        }
    }

    #[test]
    fn scalar_chain_energy() {
        let shape = LatentShape::new(1, 1, 1);
        let traj = Trajectory::new(shape, vec![vec![0.0], vec![1.0], vec![2.0]], vec![2.0]).unwrap();
        let layers: Vec<_> = (0..2).map(|_| PotentialLayer::zeros(1, 1, 1, Slopes::default()).unwrap()).collect();
        let e = la_energy(&traj, &layers).unwrap();
        assert_eq!((e.kinetic, e.potential, e.total), (1.0, 0.0, 1.0));
    }

    #[test]
    fn linear_problem_solved_in_one_sweep() {
        let shape = LatentShape::image(2, 2);
        let z0 = vec![1.0, -1.0, 0.5, 2.0];
        let zs = vec![3.0, 0.0, -0.5, 1.0];
        let cfg = LAConfig { layers: 4, fixed_point_sweeps: 1, ..Default::default() };
        let out = la_fixed_point(&z0, &zs, &zero_layers(4), &shape, &cfg).unwrap();
        assert!(out.el_residual <= 1e-10);
        for (l, z) in out.trajectory.states.iter().enumerate() {
            let t = l as f64 / 5.0;
            for k in 0..4 {
                assert!((z[k] - ((1.0 - t) * z0[k] + t * zs[k])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_boundary_gives_constant_path() {
        let shape = LatentShape::image(1, 3);
        let c = vec![0.2, 0.4, -0.3];
        let cfg = LAConfig { layers: 5, fixed_point_sweeps: 1, ..Default::default() };
        let out = la_fixed_point(&c, &c, &zero_layers(5), &shape, &cfg).unwrap();
        for z in &out.trajectory.states {
            for k in 0..3 {
                assert!((z[k] - c[k]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn strong_potential_without_shift_diverges_with_error() {
        let shape = LatentShape::image(3, 3);
        let mut layers = zero_layers(6);
        for l in &mut layers {
            l.stencil.taps.iter_mut().for_each(|t| *t = 1.0);
            l.log_weights.iter_mut().for_each(|w| *w = 3.0);
        }
        let z0 = vec![1.0; 9];
        let cfg = LAConfig { layers: 6, fixed_point_sweeps: 10, majorize: false, ..Default::default() };
        let err = la_fixed_point(&z0, &z0, &layers, &shape, &cfg).unwrap_err();
        assert!(matches!(err, DripError::Numerical { stage: "la_fixed_point", .. }));
        let shifted = LAConfig { majorize: true, ..cfg };
        assert!(la_fixed_point(&z0, &z0, &layers, &shape, &shifted).is_ok());
    }
}
