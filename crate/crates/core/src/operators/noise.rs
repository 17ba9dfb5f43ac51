use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{DripError, Result};
use crate::linalg::norm;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Expected `‖ε‖ / ‖b‖`, e.g. `0.05` for 5 %.
    pub relative_level: f64,
    pub seed: u64,
}

/// Adds i.i.d. Gaussian noise with `σ = level · ‖b‖ / √m`.
///
/// Returns the noisy data and `σ`. Identical inputs give bitwise-identical output.
pub fn add_noise(b_clean: &[f64], spec: &NoiseSpec) -> Result<(Vec<f64>, f64)> {
    if b_clean.is_empty() {
        return Err(DripError::precondition("add_noise: empty data vector"));
    }
    if !(spec.relative_level >= 0.0 && spec.relative_level.is_finite()) {
        return Err(DripError::precondition("add_noise: level must be nonnegative"));
    }
    if spec.relative_level == 0.0 {
        return Ok((b_clean.to_vec(), 0.0));
    }
    let sigma = spec.relative_level * norm(b_clean) / (b_clean.len() as f64).sqrt();
    if sigma == 0.0 {
        return Ok((b_clean.to_vec(), 0.0));
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| DripError::precondition(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noisy = b_clean.iter().map(|&v| v + normal.sample(&mut rng)).collect();
    Ok((noisy, sigma))
}
