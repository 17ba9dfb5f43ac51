use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, DripError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    /// Circular convolution on the torus; diagonalized by the 2-D DFT.
    Periodic,
    /// Zero outside the image, kernel truncated at `truncation_radius`.
    ZeroPad,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlurSpec {
    pub height: usize,
    pub width: usize,
    pub sigma: f64,
    pub boundary: Boundary,
    pub truncation_radius: usize,
}

impl BlurSpec {
    /// Periodic Gaussian blur; truncation radius defaults to `ceil(4σ)`.
    pub fn periodic(height: usize, width: usize, sigma: f64) -> Self {
        Self { height, width, sigma, boundary: Boundary::Periodic, truncation_radius: default_radius(sigma) }
    }

    pub fn zero_pad(height: usize, width: usize, sigma: f64) -> Self {
        Self { boundary: Boundary::ZeroPad, ..Self::periodic(height, width, sigma) }
    }

    fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(DripError::precondition("blur grid must be non-empty"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(DripError::precondition(format!("blur sigma must be positive, got {}", self.sigma)));
        }
        if self.boundary == Boundary::ZeroPad && self.truncation_radius == 0 {
            return Err(DripError::precondition("truncation radius must be positive"));
        }
        Ok(())
    }
}

fn default_radius(sigma: f64) -> usize {
    ((4.0 * sigma).ceil() as usize).max(1)
}

#[inline]
fn gaussian(dy: f64, dx: f64, sigma: f64) -> f64 {
    (-(dy * dy + dx * dx) / (2.0 * sigma * sigma)).exp()
}

/// Gaussian blur as a linear map on row-major `height × width` images.
#[derive(Clone)]
pub struct BlurOperator {
    spec: BlurSpec,
    kind: BlurKernel,
}

#[derive(Clone)]
enum BlurKernel {
    /// Kernel collapsed to a discrete delta.
    Identity,
    Periodic(PeriodicKernel),
    /// `(2r+1)²` taps, row-major, centred.
    ZeroPad {
        radius: usize,
        taps: Vec<f64>,
    },
}

#[derive(Clone)]
struct PeriodicKernel {
    /// Kernel with its origin at index 0 and wrapped offsets.
    kernel: Vec<f64>,
    spectrum: Vec<Complex64>,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for BlurOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BlurOperator").field("spec", &self.spec).finish()
    }
}

impl BlurOperator {
    pub fn new(spec: BlurSpec) -> Result<Self> {
        spec.validate()?;
        let (h, w) = (spec.height, spec.width);
        let kind = match spec.boundary {
            Boundary::Periodic => {
                let mut kernel = vec![0.0; h * w];
                for i in 0..h {
                    let dy = i.min(h - i) as f64;
                    for j in 0..w {
                        let dx = j.min(w - j) as f64;
                        kernel[i * w + j] = gaussian(dy, dx, spec.sigma);
                    }
                }
                let total: f64 = kernel.iter().sum();
                kernel.iter_mut().for_each(|v| *v /= total);
                if kernel[0] == 1.0 {
                    BlurKernel::Identity
                } else {
                    let mut planner = FftPlanner::new();
                    let row_fwd = planner.plan_fft_forward(w);
                    let row_inv = planner.plan_fft_inverse(w);
                    let col_fwd = planner.plan_fft_forward(h);
                    let col_inv = planner.plan_fft_inverse(h);
                    let mut pk = PeriodicKernel { kernel, spectrum: Vec::new(), row_fwd, row_inv, col_fwd, col_inv };
                    let mut spec_buf: Vec<Complex64> = pk.kernel.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                    pk.fft2(&mut spec_buf, false);
                    pk.spectrum = spec_buf;
                    BlurKernel::Periodic(pk)
                }
            }
            Boundary::ZeroPad => {
                let r = spec.truncation_radius;
                let side = 2 * r + 1;
                let mut taps = vec![0.0; side * side];
                for i in 0..side {
                    for j in 0..side {
                        taps[i * side + j] = gaussian(i as f64 - r as f64, j as f64 - r as f64, spec.sigma);
                    }
                }
                let total: f64 = taps.iter().sum();
                taps.iter_mut().for_each(|v| *v /= total);
                if taps[r * side + r] == 1.0 {
                    BlurKernel::Identity
                } else {
                    BlurKernel::ZeroPad { radius: r, taps }
                }
            }
        };
        Ok(Self { spec, kind })
    }

    pub fn spec(&self) -> &BlurSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.spec.height * self.spec.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The normalized kernel as a full `height × width` grid with its origin
    /// at index 0 (periodic offsets) for the periodic mode, or the centred
    /// `(2r+1)²` window for the zero-padded mode.
    pub fn kernel(&self) -> Vec<f64> {
        match &self.kind {
            BlurKernel::Identity => {
                let mut k = vec![0.0; self.len()];
                k[0] = 1.0;
                k
            }
            BlurKernel::Periodic(pk) => pk.kernel.clone(),
            BlurKernel::ZeroPad { taps, .. } => taps.clone(),
        }
    }

    pub(crate) fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        match &self.kind {
            BlurKernel::Identity => y.copy_from_slice(x),
            BlurKernel::Periodic(pk) => pk.convolve(x, y, self.spec.height, self.spec.width),
            BlurKernel::ZeroPad { radius, taps } => {
                zero_pad_convolve(x, y, self.spec.height, self.spec.width, *radius, taps)
            }
        }
    }

    /// The kernel is symmetric under negation, so the operator is self-adjoint.
    pub(crate) fn adjoint_into(&self, y: &[f64], x: &mut [f64]) {
        self.apply_into(y, x)
    }
}

impl PeriodicKernel {
    fn fft2(&self, buf: &mut [Complex64], inverse: bool) {
        let w = self.row_fwd.len();
        let h = self.col_fwd.len();
        let (row, col) = if inverse { (&self.row_inv, &self.col_inv) } else { (&self.row_fwd, &self.col_fwd) };
        row.process(buf);
        let mut column = vec![Complex64::new(0.0, 0.0); h];
        for j in 0..w {
            for i in 0..h {
                column[i] = buf[i * w + j];
            }
            col.process(&mut column);
            for i in 0..h {
                buf[i * w + j] = column[i];
            }
        }
    }

    fn convolve(&self, x: &[f64], y: &mut [f64], h: usize, w: usize) {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft2(&mut buf, false);
        for (b, k) in buf.iter_mut().zip(&self.spectrum) {
            *b *= k;
        }
        self.fft2(&mut buf, true);
        let norm = 1.0 / (h * w) as f64;
        for (yv, b) in y.iter_mut().zip(&buf) {
            *yv = b.re * norm;
        }
    }
}

fn zero_pad_convolve(x: &[f64], y: &mut [f64], h: usize, w: usize, r: usize, taps: &[f64]) {
    let side = 2 * r + 1;
    y.iter_mut().for_each(|v| *v = 0.0);
    for ki in 0..side {
        let oy = ki as isize - r as isize;
        for kj in 0..side {
            let ox = kj as isize - r as isize;
            let k = taps[ki * side + kj];
            let rows = (oy.max(0) as usize).min(h)..((h as isize + oy.min(0)).max(0) as usize);
            let cols = (ox.max(0) as usize).min(w)..((w as isize + ox.min(0)).max(0) as usize);
            for i in rows {
                let src = (i as isize - oy) as usize * w;
                let dst = i * w;
                for j in cols.clone() {
                    y[dst + j] += k * x[(src as isize + j as isize - ox) as usize];
                }
            }
        }
    }
}

/// Blurs a row-major `height × width` image.
pub fn blur_apply(image: &[f64], spec: &BlurSpec) -> Result<Vec<f64>> {
    let op = BlurOperator::new(spec.clone())?;
    ensure_len("blur image", image.len(), op.len())?;
    let mut out = vec![0.0; image.len()];
    op.apply_into(image, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_sigma_is_exact_identity() {
        let img: Vec<f64> = (0..20).map(|v| (v as f64).sin()).collect();
        for spec in [BlurSpec::periodic(4, 5, 1e-3), BlurSpec::zero_pad(4, 5, 1e-3)] {
            assert_eq!(blur_apply(&img, &spec).unwrap(), img);
        }
    }

    #[test]
    fn constant_image_is_preserved_periodic() {
        let img = vec![0.7; 16 * 16];
        let out = blur_apply(&img, &BlurSpec::periodic(16, 16, 2.0)).unwrap();
        for v in out {
            assert!((v - 0.7).abs() < 1e-14);
        }
    }

    #[test]
    fn kernel_normalized_symmetric_nonnegative() {
        for spec in [BlurSpec::periodic(9, 8, 1.5), BlurSpec::zero_pad(9, 8, 1.5)] {
            let op = BlurOperator::new(spec.clone()).unwrap();
            let k = op.kernel();
            assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            assert!(k.iter().all(|&v| v >= 0.0));
            if spec.boundary == Boundary::Periodic {
                let (h, w) = (9, 8);
                for i in 0..h {
                    for j in 0..w {
                        assert_eq!(k[i * w + j], k[((h - i) % h) * w + (w - j) % w]);
                    }
                }
            } else {
                let n = k.len();
                for i in 0..n {
                    assert_eq!(k[i], k[n - 1 - i]);
                }
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let err = blur_apply(&[0.0; 10], &BlurSpec::periodic(4, 4, 1.0)).unwrap_err();
        assert!(matches!(err, DripError::Precondition(_)));
        assert!(BlurOperator::new(BlurSpec::periodic(4, 4, 0.0)).is_err());
    }
}
