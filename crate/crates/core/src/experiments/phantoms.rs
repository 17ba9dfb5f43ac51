//! Synthetic training and test images.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DripError, Result};
use crate::formats::read_pgm;
use crate::seeding::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhantomKind {
    Ellipses,
    SmoothBumps,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub size: usize,
    pub kind: PhantomKind,
    /// Inclusive range of shapes per image.
    pub count_range: (usize, usize),
    pub intensity: (f64, f64),
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self { size: 32, kind: PhantomKind::Ellipses, count_range: (2, 6), intensity: (0.0, 1.0), seed: 0 }
    }
}

fn coord(i: usize, n: usize) -> f64 {
    (2.0 * i as f64 + 1.0) / n as f64 - 1.0
}

fn phantom(spec: &PhantomSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = spec.size;
    let (lo, hi) = spec.intensity;
    let shapes = rng.random_range(spec.count_range.0..=spec.count_range.1);
    let mut img = vec![0.0; n * n];
    for _ in 0..shapes {
        let amp = lo + (hi - lo) * rng.random_range(0.15..=0.85);
        match spec.kind {
            PhantomKind::Ellipses => {
                let (cx, cy) = (rng.random_range(-0.55..0.55), rng.random_range(-0.55..0.55));
                let (ra, rb) = (rng.random_range(0.12..0.45), rng.random_range(0.12..0.45));
                let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
                let (s, c) = theta.sin_cos();
                for i in 0..n {
                    for j in 0..n {
                        let (dx, dy) = (coord(j, n) - cx, coord(i, n) - cy);
                        let (p, q) = (c * dx + s * dy, -s * dx + c * dy);
                        if (p / ra).powi(2) + (q / rb).powi(2) <= 1.0 {
                            img[i * n + j] += amp;
                        }
                    }
                }
            }
            PhantomKind::SmoothBumps => {
                let (cx, cy) = (rng.random_range(-0.7..0.7), rng.random_range(-0.7..0.7));
                let w: f64 = rng.random_range(0.1..0.35);
                for i in 0..n {
                    for j in 0..n {
                        let r2 = (coord(j, n) - cx).powi(2) + (coord(i, n) - cy).powi(2);
                        img[i * n + j] += amp * (-r2 / (2.0 * w * w)).exp();
                    }
                }
            }
        }
    }
    img.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
    img
}

/// `count` seeded images; image `k` depends only on `(seed, k)`.
pub fn gen_phantoms(spec: &PhantomSpec, count: usize) -> Result<Vec<Vec<f64>>> {
    let (lo, hi) = spec.intensity;
    if count == 0
        || spec.size == 0
        || spec.count_range.0 > spec.count_range.1
        || !(0.0..=1.0).contains(&lo)
        || !(lo..=1.0).contains(&hi)
    {
        return Err(DripError::precondition(format!("invalid phantom request: {spec:?} × {count}")));
    }
    Ok((0..count).map(|k| phantom(spec, &mut ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[k as u64])))).collect())
}

/// Loads every `.pgm` in `dir` (sorted by name) as a `size × size` image.
pub fn load_pgm_dir(dir: &Path, size: usize) -> Result<Vec<Vec<f64>>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(DripError::precondition(format!("no .pgm files in {}", dir.display())));
    }
    paths.iter().map(|p| Ok(read_pgm(p)?.to_square(size))).collect()
}
