//! Brute-force references for validating `drip`: dense solves, a Newton
//! solver for the Euler–Lagrange system, central differences, a naive DFT.
//!
//! Everything here is O(n³) or worse and meant for tiny instances only.

use nalgebra::{DMatrix, DVector};

use drip::error::{DripError, Result};
use drip::leastaction::Trajectory;
use drip::operators::{materialize_dense, Operator};
use drip::potential::{phi_grad, phi_hessian_vec, PotentialLayer};
use drip::LatentShape;

pub const NEWTON_CAP: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    pub max_steps: usize,
    pub residual_tolerance: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self { max_steps: 50, residual_tolerance: 1e-12 }
    }
}

fn precondition(msg: impl Into<String>) -> DripError {
    DripError::Precondition(msg.into())
}

/// Stacked residual `2z_ℓ − z_{ℓ−1} − z_{ℓ+1} + ∇φ_ℓ(z_ℓ)`, ℓ = 1..N.
fn el_residual(
    z0: &[f64],
    z_star: &[f64],
    x: &DVector<f64>,
    layers: &[PotentialLayer],
    n: usize,
    shape: &LatentShape,
) -> Result<DVector<f64>> {
    let s = shape.len();
    let block = |l: usize| -> &[f64] {
        match l {
            0 => z0,
            l if l == n + 1 => z_star,
            l => &x.as_slice()[(l - 1) * s..l * s],
        }
    };
    let mut f = DVector::zeros(n * s);
    for l in 1..=n {
        let g = phi_grad(block(l), shape, &layers[l - 1])?;
        let (prev, cur, next) = (block(l - 1), block(l), block(l + 1));
        for k in 0..s {
            f[(l - 1) * s + k] = 2.0 * cur[k] - prev[k] - next[k] + g[k];
        }
    }
    Ok(f)
}

/// Solves the discrete Euler–Lagrange system by damped Newton with an
/// explicit Jacobian `T ⊗ I + blockdiag(∇²φ_ℓ)`.
pub fn newton_bvp(
    z0: &[f64],
    z_star: &[f64],
    layers: &[PotentialLayer],
    n: usize,
    shape: &LatentShape,
    cfg: &NewtonConfig,
) -> Result<Trajectory> {
    let s = shape.len();
    if n == 0 || layers.len() != n {
        return Err(precondition("newton_bvp: need N ≥ 1 and one layer per interior state"));
    }
    if n * s > NEWTON_CAP {
        return Err(DripError::ResourceLimit(format!("{} unknowns exceed {NEWTON_CAP}", n * s)));
    }
    if z0.len() != s || z_star.len() != s {
        return Err(precondition("newton_bvp: boundary length mismatch"));
    }
    let mut x = DVector::zeros(n * s);
    let mut f = el_residual(z0, z_star, &x, layers, n, shape)?;
    let mut step = 0;
    while f.norm() > cfg.residual_tolerance {
        if step == cfg.max_steps {
            return Err(DripError::Numerical {
                stage: "newton_bvp",
                iteration: step,
                detail: format!("residual {:.3e} above tolerance", f.norm()),
            });
        }
        step += 1;
        let mut jac = DMatrix::zeros(n * s, n * s);
        for l in 0..n {
            for k in 0..s {
                jac[(l * s + k, l * s + k)] += 2.0;
                if l + 1 < n {
                    jac[(l * s + k, (l + 1) * s + k)] -= 1.0;
                    jac[((l + 1) * s + k, l * s + k)] -= 1.0;
                }
            }
            let zl = &x.as_slice()[l * s..(l + 1) * s];
            let mut e = vec![0.0; s];
            for j in 0..s {
                e[j] = 1.0;
                let col = phi_hessian_vec(zl, shape, &layers[l], &e)?;
                e[j] = 0.0;
                for i in 0..s {
                    jac[(l * s + i, l * s + j)] += col[i];
                }
            }
        }
        let chol = jac.cholesky().ok_or_else(|| DripError::Numerical {
            stage: "newton_bvp",
            iteration: step,
            detail: "Jacobian not positive definite".into(),
        })?;
        let dx = chol.solve(&f);
        let current = f.norm();
        let mut t = 1.0;
        loop {
            let trial = &x - &dx * t;
            let ft = el_residual(z0, z_star, &trial, layers, n, shape)?;
            if ft.norm() < current || t < 1e-12 {
                x = trial;
                f = ft;
                break;
            }
            t *= 0.5;
        }
        if !f.norm().is_finite() {
            return Err(DripError::Numerical {
                stage: "newton_bvp",
                iteration: step,
                detail: "non-finite residual".into(),
            });
        }
    }
    let mut states = vec![z0.to_vec()];
    states.extend(x.as_slice().chunks(s).map(<[f64]>::to_vec));
    Trajectory::new(*shape, states, z_star.to_vec())
}

/// Central differences `(f(x + h e_i) − f(x − h e_i)) / 2h`.
pub fn finite_difference_grad(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], step: f64) -> Result<Vec<f64>> {
    if step.is_nan() || step <= 0.0 {
        return Err(precondition("finite-difference step must be positive"));
    }
    let mut p = x.to_vec();
    let mut g = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        p[i] = x[i] + step;
        let up = f(&p);
        p[i] = x[i] - step;
        let down = f(&p);
        p[i] = x[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(DripError::Numerical {
                stage: "finite_difference_grad",
                iteration: i,
                detail: "non-finite function value".into(),
            });
        }
        g.push((up - down) / (2.0 * step));
    }
    Ok(g)
}

/// Dense `tridiag(−1, 2, −1)` of order `n`.
pub fn dense_tridiagonal(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
        0 => 2.0,
        1 => -1.0,
        _ => 0.0,
    })
}

/// Solves `(T ⊗ I_s) Z = R` by dense LU on the `N × N` system.
pub fn dense_tridiagonal_solve(rhs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = rhs.len();
    let s = rhs.first().map_or(0, Vec::len);
    let lu = dense_tridiagonal(n).lu();
    let r = DMatrix::from_fn(n, s, |i, j| rhs[i][j]);
    let z = lu.solve(&r).ok_or_else(|| precondition("singular tridiagonal system"))?;
    Ok((0..n).map(|i| z.row(i).iter().copied().collect()).collect())
}

/// Dense normal-equation matrix `(AE)ᵀ(AE) + αI` and right-hand side.
pub fn dense_normal_system(
    ae: &impl Operator,
    b: &[f64],
    alpha: f64,
    anchor: &[f64],
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let m = materialize_dense(ae, usize::MAX)?;
    let mut normal = m.transpose() * &m;
    for i in 0..normal.nrows() {
        normal[(i, i)] += alpha;
    }
    let rhs = m.transpose() * DVector::from_column_slice(b) + DVector::from_column_slice(anchor) * alpha;
    Ok((normal, rhs))
}

/// Solves the regularized normal equations by dense LU.
pub fn dense_datafit(ae: &impl Operator, b: &[f64], alpha: f64, anchor: &[f64]) -> Result<Vec<f64>> {
    let (m, rhs) = dense_normal_system(ae, b, alpha, anchor)?;
    let z = m.lu().solve(&rhs).ok_or_else(|| precondition("singular normal matrix"))?;
    Ok(z.iter().copied().collect())
}

/// `|DFT₂(kernel)|` of an `h × w` row-major grid by direct summation.
pub fn dft2_magnitudes(kernel: &[f64], h: usize, w: usize) -> Vec<f64> {
    let tau = std::f64::consts::TAU;
    let mut out = Vec::with_capacity(h * w);
    for p in 0..h {
        for q in 0..w {
            let (mut re, mut im) = (0.0, 0.0);
            for i in 0..h {
                for j in 0..w {
                    let ang = tau * ((p * i) as f64 / h as f64 + (q * j) as f64 / w as f64);
                    re += kernel[i * w + j] * ang.cos();
                    im -= kernel[i * w + j] * ang.sin();
                }
            }
            out.push(re.hypot(im));
        }
    }
    out
}
