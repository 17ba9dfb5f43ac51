//! CGLS and the regularized data-fit solve
//! `z* = (EᵀAᵀAE + αI)⁻¹ (EᵀAᵀb + α z_anchor)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, DripError, Result};
use crate::linalg::{all_finite, axpy, dot, norm};
use crate::operators::{materialize_dense, LinearMap, Operator};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CglsConfig {
    pub max_iterations: usize,
    /// Stop once `‖Aᵀ(Ax − b)‖ ≤ tolerance · ‖Aᵀb‖`.
    pub tolerance: f64,
}

impl Default for CglsConfig {
    fn default() -> Self {
        Self { max_iterations: 50, tolerance: 1e-8 }
    }
}

impl CglsConfig {
    /// Inner budget used while training.
    pub fn training() -> Self {
        Self { max_iterations: 20, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 || !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(DripError::precondition(format!("invalid CGLS config: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CglsOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `‖Aᵀ(Ax − b)‖ / ‖Aᵀb‖` at exit.
    pub relative_residual: f64,
}

/// Conjugate gradients on the normal equations of `min ‖op·x − b‖`.
pub fn cgls(op: &impl Operator, b: &[f64], x0: &[f64], cfg: &CglsConfig) -> Result<CglsOutcome> {
    cfg.validate()?;
    ensure_len("cgls data", b.len(), op.rows())?;
    ensure_len("cgls start", x0.len(), op.cols())?;
    if !all_finite(x0) || !all_finite(b) {
        return Err(DripError::precondition("cgls: non-finite input"));
    }

    let mut x = x0.to_vec();
    let mut r = b.to_vec();
    let mut q = vec![0.0; op.rows()];
    op.apply_into(&x, &mut q);
    axpy(-1.0, &q, &mut r);

    let mut s = vec![0.0; op.cols()];
    op.adjoint_into(b, &mut s);
    let mut reference = norm(&s);
    op.adjoint_into(&r, &mut s);
    if reference == 0.0 {
        reference = norm(&s);
    }
    if reference == 0.0 {
        return Ok(CglsOutcome { x, iterations: 0, relative_residual: 0.0 });
    }

    let mut gamma = dot(&s, &s);
    if gamma.sqrt() <= cfg.tolerance * reference {
        return Ok(CglsOutcome { x, iterations: 0, relative_residual: gamma.sqrt() / reference });
    }
    let mut p = s.clone();
    let mut objective = norm(&r);

    for k in 1..=cfg.max_iterations {
        op.apply_into(&p, &mut q);
        let delta = dot(&q, &q);
        if delta == 0.0 {
            return Ok(CglsOutcome { x, iterations: k - 1, relative_residual: gamma.sqrt() / reference });
        }
        let step = gamma / delta;
        axpy(step, &p, &mut x);
        axpy(-step, &q, &mut r);
        op.adjoint_into(&r, &mut s);
        let gamma_next = dot(&s, &s);
        if !gamma_next.is_finite() || !step.is_finite() {
            return Err(DripError::numerical("cgls", k, "non-finite iterate"));
        }
        let next_objective = norm(&r);
        debug_assert!(
            next_objective <= objective * (1.0 + 1e-10) + 1e-300,
            "CGLS objective increased at iteration {k}: {objective} -> {next_objective}"
        );
        objective = next_objective;

        let rel = gamma_next.sqrt() / reference;
        if rel <= cfg.tolerance || k == cfg.max_iterations {
            return Ok(CglsOutcome { x, iterations: k, relative_residual: rel });
        }
        let beta = gamma_next / gamma;
        gamma = gamma_next;
        for (pi, si) in p.iter_mut().zip(&s) {
            *pi = si + beta * *pi;
        }
    }
    unreachable!("loop returns on its last iteration")
}

/// `min ½‖A E z − b‖² + α/2 ‖z − z_anchor‖²`.
#[derive(Debug, Clone, Copy)]
pub struct DataFitProblem<'a> {
    pub a: &'a LinearMap,
    pub e: &'a LinearMap,
    pub b: &'a [f64],
    pub alpha: f64,
    pub z_anchor: &'a [f64],
}

impl DataFitProblem<'_> {
    pub fn latent_len(&self) -> usize {
        self.e.cols()
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(DripError::precondition(format!("data-fit alpha must be positive, got {}", self.alpha)));
        }
        if self.a.cols() != self.e.rows() {
            return Err(DripError::precondition(format!(
                "A has {} columns but E has {} rows",
                self.a.cols(),
                self.e.rows()
            )));
        }
        ensure_len("data-fit data", self.b.len(), self.a.rows())?;
        ensure_len("data-fit anchor", self.z_anchor.len(), self.e.cols())
    }

    /// `EᵀAᵀb + α z_anchor`
    pub fn normal_rhs(&self) -> Vec<f64> {
        let mut rhs = forward_adjoint(self.a, self.e, self.b);
        axpy(self.alpha, self.z_anchor, &mut rhs);
        rhs
    }

    /// `‖(EᵀAᵀAE + αI) z − (EᵀAᵀb + α z_anchor)‖ / ‖EᵀAᵀb + α z_anchor‖`
    pub fn optimality_residual(&self, z: &[f64]) -> f64 {
        let rhs = self.normal_rhs();
        let mut lhs = normal_apply(self.a, self.e, self.alpha, z);
        axpy(-1.0, &rhs, &mut lhs);
        norm(&lhs) / norm(&rhs).max(f64::MIN_POSITIVE)
    }
}

/// `(A E)ᵀ y`
pub(crate) fn forward_adjoint(a: &LinearMap, e: &LinearMap, y: &[f64]) -> Vec<f64> {
    let mid = a.adjoint_vec(y);
    if e.is_identity() {
        mid
    } else {
        e.adjoint_vec(&mid)
    }
}

/// `A E z`
pub(crate) fn forward_apply(a: &LinearMap, e: &LinearMap, z: &[f64]) -> Vec<f64> {
    if e.is_identity() {
        a.apply_vec(z)
    } else {
        a.apply_vec(&e.apply_vec(z))
    }
}

/// `(EᵀAᵀAE + αI) z`
pub(crate) fn normal_apply(a: &LinearMap, e: &LinearMap, alpha: f64, z: &[f64]) -> Vec<f64> {
    let mut out = forward_adjoint(a, e, &forward_apply(a, e, z));
    axpy(alpha, z, &mut out);
    out
}

/// `[A E ; √α I]`
struct Stacked<'a> {
    a: &'a LinearMap,
    e: &'a LinearMap,
    sqrt_alpha: f64,
}

impl Operator for Stacked<'_> {
    fn rows(&self) -> usize {
        self.a.rows() + self.e.cols()
    }

    fn cols(&self) -> usize {
        self.e.cols()
    }

    fn apply_into(&self, z: &[f64], y: &mut [f64]) {
        let m = self.a.rows();
        y[..m].copy_from_slice(&forward_apply(self.a, self.e, z));
        for (yi, zi) in y[m..].iter_mut().zip(z) {
            *yi = self.sqrt_alpha * zi;
        }
    }

    fn adjoint_into(&self, y: &[f64], z: &mut [f64]) {
        let m = self.a.rows();
        z.copy_from_slice(&forward_adjoint(self.a, self.e, &y[..m]));
        axpy(self.sqrt_alpha, &y[m..], z);
    }
}

fn stacked_solve(
    a: &LinearMap,
    e: &LinearMap,
    alpha: f64,
    top: &[f64],
    bottom: &[f64],
    x0: &[f64],
    cfg: &CglsConfig,
) -> Result<CglsOutcome> {
    let op = Stacked { a, e, sqrt_alpha: alpha.sqrt() };
    let mut data = Vec::with_capacity(op.rows());
    data.extend_from_slice(top);
    data.extend(bottom.iter().map(|v| op.sqrt_alpha * v));
    cgls(&op, &data, x0, cfg)
}

/// Data-fit solve from a zero start.
pub fn datafit_solve(p: &DataFitProblem<'_>, cfg: &CglsConfig) -> Result<Vec<f64>> {
    let zeros = vec![0.0; p.latent_len()];
    Ok(datafit_solve_from(p, cfg, &zeros)?.x)
}

/// Data-fit solve warm-started at `x0`.
pub fn datafit_solve_from(p: &DataFitProblem<'_>, cfg: &CglsConfig, x0: &[f64]) -> Result<CglsOutcome> {
    p.validate()?;
    stacked_solve(p.a, p.e, p.alpha, p.b, p.z_anchor, x0, cfg)
}

/// Vector-Jacobian product of `z_anchor ↦ z*`: returns `α (EᵀAᵀAE + αI)⁻¹ g`.
///
/// The map is affine with symmetric linear part, so one extra solve suffices.
pub fn datafit_anchor_vjp(
    a: &LinearMap,
    e: &LinearMap,
    alpha: f64,
    cotangent: &[f64],
    cfg: &CglsConfig,
) -> Result<Vec<f64>> {
    if cotangent.iter().all(|&v| v == 0.0) {
        return Ok(vec![0.0; cotangent.len()]);
    }
    let zeros_top = vec![0.0; a.rows()];
    let anchor: Vec<f64> = cotangent.iter().map(|g| g / alpha).collect();
    let zeros = vec![0.0; cotangent.len()];
    let mut x = stacked_solve(a, e, alpha, &zeros_top, &anchor, &zeros, cfg)?.x;
    x.iter_mut().for_each(|v| *v *= alpha);
    Ok(x)
}

/// Latent-size cap for [`dense_normal_solve`].
pub const DENSE_SOLVE_CAP: usize = 4096;

/// Reference solve of the normal equations by dense Cholesky.
pub fn dense_normal_solve(p: &DataFitProblem<'_>) -> Result<Vec<f64>> {
    p.validate()?;
    let s = p.latent_len();
    if s > DENSE_SOLVE_CAP {
        return Err(DripError::ResourceLimit(format!("latent size {s} exceeds dense cap {DENSE_SOLVE_CAP}")));
    }
    let ae = LinearMap::compose(p.a.clone(), p.e.clone())?;
    let m: DMatrix<f64> = materialize_dense(&ae, usize::MAX)?;
    let mut normal = m.transpose() * &m;
    for i in 0..s {
        normal[(i, i)] += p.alpha;
    }
    let rhs = DVector::from_vec(p.normal_rhs());
    let chol = normal
        .cholesky()
        .ok_or_else(|| DripError::numerical("dense_normal_solve", 0, "matrix not positive definite"))?;
    Ok(chol.solve(&rhs).iter().copied().collect())
}
