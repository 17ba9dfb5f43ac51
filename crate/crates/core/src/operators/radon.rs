use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, DripError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadonSpec {
    pub height: usize,
    pub width: usize,
    /// Projection angles in radians, strictly increasing inside `[0, π)`.
    pub angles: Vec<f64>,
    pub detector_bins: usize,
    pub sample_step: f64,
}

impl RadonSpec {
    /// `count` equally spaced angles in `[0, π)` on a square grid, one
    /// detector bin per pixel and half-pixel line sampling.
    pub fn limited_angle(size: usize, count: usize) -> Self {
        Self {
            height: size,
            width: size,
            angles: (0..count).map(|k| k as f64 * PI / count as f64).collect(),
            detector_bins: size,
            sample_step: 0.5,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.angles.is_empty() {
            return Err(DripError::precondition("radon: angle list is empty"));
        }
        if self.height == 0 || self.width == 0 {
            return Err(DripError::precondition("radon: grid must be non-empty"));
        }
        if self.angles.iter().any(|a| !(0.0..PI).contains(a)) {
            return Err(DripError::precondition("radon: angles must lie in [0, π)"));
        }
        if self.angles.windows(2).any(|p| p[1] <= p[0]) {
            return Err(DripError::precondition("radon: angles must be strictly increasing"));
        }
        if self.detector_bins < self.height.max(self.width) {
            return Err(DripError::precondition("radon: detector_bins must be at least max(height, width)"));
        }
        if !(self.sample_step > 0.0 && self.sample_step.is_finite()) {
            return Err(DripError::precondition("radon: sample_step must be positive"));
        }
        Ok(())
    }
}

/// Parallel-beam line integrals sampled along each ray with bilinear
/// interpolation, stored as a sparse matrix so that the adjoint is the exact
/// transpose of the forward map.
#[derive(Debug, Clone)]
pub struct RadonOperator {
    spec: RadonSpec,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
}

impl RadonOperator {
    pub fn new(spec: RadonSpec) -> Result<Self> {
        spec.validate()?;
        let (h, w) = (spec.height, spec.width);
        let bins = spec.detector_bins;
        let step = spec.sample_step;
        let cy = (h as f64 - 1.0) / 2.0;
        let cx = (w as f64 - 1.0) / 2.0;
        let cd = (bins as f64 - 1.0) / 2.0;
        let half_len = 0.5 * ((h * h + w * w) as f64).sqrt() + 1.0;
        let samples = (2.0 * half_len / step).floor() as usize + 1;
        let tc = (samples as f64 - 1.0) / 2.0;

        let mut row_ptr = vec![0usize];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut scratch = vec![0.0f64; h * w];
        let mut touched: Vec<usize> = Vec::new();

        for &theta in &spec.angles {
            let (s, c) = theta.sin_cos();
            for bin in 0..bins {
                let d = bin as f64 - cd;
                for k in 0..samples {
                    let t = (k as f64 - tc) * step;
                    // Detector axis (c, s); ray direction (−s, c).
                    let x = d * c - t * s + cx;
                    let y = d * s + t * c + cy;
                    let (j0, i0) = (x.floor(), y.floor());
                    let (fx, fy) = (x - j0, y - i0);
                    for (di, wy) in [(0isize, 1.0 - fy), (1, fy)] {
                        for (dj, wx) in [(0isize, 1.0 - fx), (1, fx)] {
                            let i = i0 as isize + di;
                            let j = j0 as isize + dj;
                            let wgt = wy * wx * step;
                            if wgt == 0.0 || i < 0 || j < 0 || i >= h as isize || j >= w as isize {
                                continue;
                            }
                            let p = i as usize * w + j as usize;
                            if scratch[p] == 0.0 {
                                touched.push(p);
                            }
                            scratch[p] += wgt;
                        }
                    }
                }
                touched.sort_unstable();
                for &p in &touched {
                    col_idx.push(p as u32);
                    values.push(scratch[p]);
                    scratch[p] = 0.0;
                }
                touched.clear();
                row_ptr.push(col_idx.len());
            }
        }
        Ok(Self { spec, row_ptr, col_idx, values })
    }

    pub fn spec(&self) -> &RadonSpec {
        &self.spec
    }

    pub fn rows(&self) -> usize {
        self.spec.angles.len() * self.spec.detector_bins
    }

    pub fn cols(&self) -> usize {
        self.spec.height * self.spec.width
    }

    pub(crate) fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate() {
            let span = self.row_ptr[r]..self.row_ptr[r + 1];
            *out = self.col_idx[span.clone()].iter().zip(&self.values[span]).map(|(&c, &v)| v * x[c as usize]).sum();
        }
    }

    pub(crate) fn adjoint_into(&self, y: &[f64], x: &mut [f64]) {
        x.iter_mut().for_each(|v| *v = 0.0);
        for (r, &yr) in y.iter().enumerate() {
            let span = self.row_ptr[r]..self.row_ptr[r + 1];
            for (&c, &v) in self.col_idx[span.clone()].iter().zip(&self.values[span]) {
                x[c as usize] += v * yr;
            }
        }
    }
}

/// Sinogram (`angles × detector_bins`, row-major) of a row-major image.
pub fn radon_apply(image: &[f64], spec: &RadonSpec) -> Result<Vec<f64>> {
    let op = RadonOperator::new(spec.clone())?;
    ensure_len("radon image", image.len(), op.cols())?;
    let mut out = vec![0.0; op.rows()];
    op.apply_into(image, &mut out);
    Ok(out)
}
