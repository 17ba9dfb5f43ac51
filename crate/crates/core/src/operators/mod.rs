//! Forward operators and the embedding map, plus dense utilities used to
//! study ill-posedness.

mod blur;
mod noise;
mod radon;

pub use blur::{blur_apply, BlurOperator, BlurSpec, Boundary};
pub use noise::{add_noise, NoiseSpec};
pub use radon::{radon_apply, RadonOperator, RadonSpec};

use nalgebra::DMatrix;

use crate::error::{ensure_len, DripError, Result};
use crate::linalg::{norm, scale};

/// Default cap on `rows · cols` for dense materialization.
pub const DENSE_CAP: usize = 1 << 22;

/// A matrix-free linear map with an exact adjoint.
pub trait Operator: Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    /// `y ← A x`; `x.len() == cols`, `y.len() == rows`.
    fn apply_into(&self, x: &[f64], y: &mut [f64]);
    /// `x ← Aᵀ y`.
    fn adjoint_into(&self, y: &[f64], x: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearMapKind {
    Blur,
    Radon,
    Identity,
    DenseMatrix,
    Composition,
}

#[derive(Debug, Clone)]
pub enum LinearMap {
    Identity(usize),
    Blur(BlurOperator),
    Radon(RadonOperator),
    Dense(DMatrix<f64>),
    /// `outer ∘ inner`, i.e. `x ↦ outer(inner(x))`.
    Composition(Box<LinearMap>, Box<LinearMap>),
}

impl LinearMap {
    pub fn blur(spec: BlurSpec) -> Result<Self> {
        Ok(LinearMap::Blur(BlurOperator::new(spec)?))
    }

    pub fn radon(spec: RadonSpec) -> Result<Self> {
        Ok(LinearMap::Radon(RadonOperator::new(spec)?))
    }

    pub fn dense(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 || m.ncols() == 0 {
            return Err(DripError::precondition("dense map must be non-empty"));
        }
        Ok(LinearMap::Dense(m))
    }

    /// `outer · inner`; fails unless `outer.cols == inner.rows`.
    pub fn compose(outer: LinearMap, inner: LinearMap) -> Result<Self> {
        if outer.cols() != inner.rows() {
            return Err(DripError::precondition(format!(
                "cannot compose {}x{} with {}x{}",
                outer.rows(),
                outer.cols(),
                inner.rows(),
                inner.cols()
            )));
        }
        Ok(LinearMap::Composition(Box::new(outer), Box::new(inner)))
    }

    pub fn kind(&self) -> LinearMapKind {
        match self {
            LinearMap::Identity(_) => LinearMapKind::Identity,
            LinearMap::Blur(_) => LinearMapKind::Blur,
            LinearMap::Radon(_) => LinearMapKind::Radon,
            LinearMap::Dense(_) => LinearMapKind::DenseMatrix,
            LinearMap::Composition(..) => LinearMapKind::Composition,
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, LinearMap::Identity(_))
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        ensure_len("apply input", x.len(), self.cols())?;
        let mut y = vec![0.0; self.rows()];
        self.apply_into(x, &mut y);
        Ok(y)
    }

    pub fn adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        ensure_len("adjoint input", y.len(), self.rows())?;
        let mut x = vec![0.0; self.cols()];
        self.adjoint_into(y, &mut x);
        Ok(x)
    }

    /// Unchecked variants for hot loops where dimensions are already known.
    pub(crate) fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows()];
        self.apply_into(x, &mut y);
        y
    }

    pub(crate) fn adjoint_vec(&self, y: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.cols()];
        self.adjoint_into(y, &mut x);
        x
    }
}

impl Operator for LinearMap {
    fn rows(&self) -> usize {
        match self {
            LinearMap::Identity(n) => *n,
            LinearMap::Blur(b) => b.len(),
            LinearMap::Radon(r) => r.rows(),
            LinearMap::Dense(m) => m.nrows(),
            LinearMap::Composition(outer, _) => outer.rows(),
        }
    }

    fn cols(&self) -> usize {
        match self {
            LinearMap::Identity(n) => *n,
            LinearMap::Blur(b) => b.len(),
            LinearMap::Radon(r) => r.cols(),
            LinearMap::Dense(m) => m.ncols(),
            LinearMap::Composition(_, inner) => inner.cols(),
        }
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        match self {
            LinearMap::Identity(_) => y.copy_from_slice(x),
            LinearMap::Blur(b) => b.apply_into(x, y),
            LinearMap::Radon(r) => r.apply_into(x, y),
            LinearMap::Dense(m) => {
                for (i, out) in y.iter_mut().enumerate() {
                    *out = (0..m.ncols()).map(|j| m[(i, j)] * x[j]).sum();
                }
            }
            LinearMap::Composition(outer, inner) => {
                let mid = inner.apply_vec(x);
                outer.apply_into(&mid, y);
            }
        }
    }

    fn adjoint_into(&self, y: &[f64], x: &mut [f64]) {
        match self {
            LinearMap::Identity(_) => x.copy_from_slice(y),
            LinearMap::Blur(b) => b.adjoint_into(y, x),
            LinearMap::Radon(r) => r.adjoint_into(y, x),
            LinearMap::Dense(m) => {
                for (j, out) in x.iter_mut().enumerate() {
                    *out = (0..m.nrows()).map(|i| m[(i, j)] * y[i]).sum();
                }
            }
            LinearMap::Composition(outer, inner) => {
                let mid = outer.adjoint_vec(y);
                inner.adjoint_into(&mid, x);
            }
        }
    }
}

/// Checked adjoint action `opᵀ y`.
pub fn op_adjoint(op: &LinearMap, y: &[f64]) -> Result<Vec<f64>> {
    op.adjoint(y)
}

/// Materializes `op` column by column (`column j = op(e_j)`).
pub fn materialize_dense(op: &impl Operator, cap: usize) -> Result<DMatrix<f64>> {
    let (m, n) = (op.rows(), op.cols());
    if m.saturating_mul(n) > cap {
        return Err(DripError::ResourceLimit(format!("dense {m}x{n} exceeds cap of {cap} entries")));
    }
    let mut out = DMatrix::zeros(m, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; m];
    for j in 0..n {
        e[j] = 1.0;
        op.apply_into(&e, &mut col);
        out.column_mut(j).copy_from_slice(&col);
        e[j] = 0.0;
    }
    Ok(out)
}

/// Singular values in nonincreasing order (`min(m, n)` of them).
pub fn singular_values(matrix: &DMatrix<f64>) -> Result<Vec<f64>> {
    if matrix.nrows() == 0 || matrix.ncols() == 0 {
        return Err(DripError::precondition("singular_values: empty matrix"));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(DripError::precondition("singular_values: matrix has non-finite entries"));
    }
    let mut sv: Vec<f64> = matrix.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

/// Estimates `‖op‖₂` by power iteration on `opᵀop` from a fixed start vector.
pub fn operator_norm_estimate(op: &impl Operator, iterations: usize) -> f64 {
    let n = op.cols();
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i % 7) as f64)).collect();
    let nv = norm(&v);
    scale(1.0 / nv, &mut v);
    let mut av = vec![0.0; op.rows()];
    let mut sigma2 = 0.0;
    for _ in 0..iterations.max(1) {
        op.apply_into(&v, &mut av);
        op.adjoint_into(&av, &mut v);
        sigma2 = norm(&v);
        if sigma2 == 0.0 {
            return 0.0;
        }
        scale(1.0 / sigma2, &mut v);
    }
    sigma2.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_adjoint_and_materialize() {
        let id = LinearMap::Identity(4);
        assert_eq!(op_adjoint(&id, &[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(materialize_dense(&id, DENSE_CAP).unwrap(), DMatrix::identity(4, 4));
    }

    #[test]
    fn toy_composition_materializes_to_2_0() {
        let a = LinearMap::dense(DMatrix::from_row_slice(1, 2, &[1.0, 1.0])).unwrap();
        let e = LinearMap::dense(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0])).unwrap();
        let ae = LinearMap::compose(a, e).unwrap();
        assert_eq!(ae.kind(), LinearMapKind::Composition);
        let m = materialize_dense(&ae, DENSE_CAP).unwrap();
        assert_eq!(m, DMatrix::from_row_slice(1, 2, &[2.0, 0.0]));
    }

    #[test]
    fn dense_adjoint_is_transpose() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let op = LinearMap::dense(m.clone()).unwrap();
        let y = [0.5, -1.0];
        let got = op.adjoint(&y).unwrap();
        for j in 0..3 {
            assert_eq!(got[j], m[(0, j)] * y[0] + m[(1, j)] * y[1]);
        }
    }

    #[test]
    fn length_mismatch_and_bad_composition() {
        let id = LinearMap::Identity(3);
        assert!(matches!(id.adjoint(&[1.0]), Err(DripError::Precondition(_))));
        assert!(LinearMap::compose(LinearMap::Identity(2), LinearMap::Identity(3)).is_err());
    }

    #[test]
    fn cap_is_enforced() {
        let id = LinearMap::Identity(100);
        assert!(matches!(materialize_dense(&id, 99), Err(DripError::ResourceLimit(_))));
    }

    #[test]
    fn small_singular_values() {
        assert_eq!(singular_values(&DMatrix::identity(5, 5)).unwrap(), vec![1.0; 5]);
        let sv = singular_values(&DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 4.0])).unwrap();
        assert!((sv[0] - 4.0).abs() < 1e-14 && (sv[1] - 3.0).abs() < 1e-14);
        let mut bad = DMatrix::identity(2, 2);
        bad[(0, 1)] = f64::NAN;
        assert!(singular_values(&bad).is_err());
    }

    #[test]
    fn norm_estimate_of_diagonal() {
        let op = LinearMap::dense(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, 3.0, 1.0]))).unwrap();
        assert!((operator_norm_estimate(&op, 200) - 3.0).abs() < 1e-8);
    }
}
