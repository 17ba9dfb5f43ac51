//! Evaluation: metrics, noise and iteration sweeps, spectra, CSV output.

pub mod phantoms;
pub mod tasks;

use std::fmt;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, DripError, Result};
use crate::linalg::{norm, sub};
use crate::operators::{add_noise, materialize_dense, singular_values, LinearMap, NoiseSpec, Operator, DENSE_CAP};
use crate::seeding::derive_seed;
use crate::solvers::{datafit_solve, CglsConfig, DataFitProblem};
use crate::training::{ModelBundle, ModelKind};

pub use phantoms::{gen_phantoms, load_pgm_dir, PhantomKind, PhantomSpec};
pub use tasks::{Task, TaskSetup, BLUR_SIGMA, TOMO_ANGLES};

/// `(‖A·u_pred − b‖/‖b‖, ‖u_pred − u_true‖/‖u_true‖)`.
pub fn compute_metrics(u_pred: &[f64], u_true: &[f64], a: &LinearMap, b: &[f64]) -> Result<(f64, f64)> {
    ensure_len("u_pred", u_pred.len(), a.cols())?;
    ensure_len("u_true", u_true.len(), a.cols())?;
    ensure_len("b", b.len(), a.rows())?;
    let (nb, nu) = (norm(b), norm(u_true));
    if nb == 0.0 || nu == 0.0 {
        return Err(DripError::precondition("metrics need nonzero b and u_true"));
    }
    Ok((norm(&sub(&a.apply_vec(u_pred), b)) / nb, norm(&sub(u_pred, u_true)) / nu))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MethodKind {
    LANet,
    HyperResNet,
    NeuralProximal,
    Tikhonov,
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MethodKind::LANet => "la-net",
            MethodKind::HyperResNet => "hyper",
            MethodKind::NeuralProximal => "prox",
            MethodKind::Tikhonov => "tikhonov",
        })
    }
}

impl From<ModelKind> for MethodKind {
    fn from(k: ModelKind) -> Self {
        match k {
            ModelKind::LANet => MethodKind::LANet,
            ModelKind::HyperResNet => MethodKind::HyperResNet,
            ModelKind::NeuralProximal => MethodKind::NeuralProximal,
        }
    }
}

/// A reconstruction method under evaluation.
#[derive(Debug, Clone, Copy)]
pub enum Method<'a> {
    Model(&'a ModelBundle),
    /// Zero-anchor data-fit solve, `(AᵀA + αI)⁻¹Aᵀb`.
    Tikhonov {
        alpha: f64,
    },
}

impl Method<'_> {
    pub fn kind(&self) -> MethodKind {
        match self {
            Method::Model(m) => m.kind().into(),
            Method::Tikhonov { .. } => MethodKind::Tikhonov,
        }
    }

    /// `iterations` is the outer-iteration count for DRIP models and the
    /// application count for the baseline; Tikhonov ignores it.
    pub fn reconstruct(&self, setup: &TaskSetup, b: &[f64], iterations: usize, cgls: CglsConfig) -> Result<Vec<f64>> {
        match self {
            Method::Model(m) => Ok(m.reconstruct(&setup.a, &setup.e, b, iterations, cgls)?.u),
            Method::Tikhonov { alpha } => {
                let zeros = vec![0.0; setup.e.cols()];
                let p = DataFitProblem { a: &setup.a, e: &setup.e, b, alpha: *alpha, z_anchor: &zeros };
                let z = datafit_solve(&p, &cgls)?;
                Ok(if setup.e.is_identity() { z } else { setup.e.apply(&z)? })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub task: Task,
    pub method: MethodKind,
    pub noise_percent: f64,
    pub iterations: usize,
    pub residual: f64,
    pub error: f64,
    pub seed: u64,
    pub status: String,
}

pub const CSV_HEADER: &str = "task,method,noise_percent,iterations,residual,error,seed,status";

impl ExperimentRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.8e},{},{:.8e},{:.8e},{},{}",
            self.task,
            self.method,
            self.noise_percent,
            self.iterations,
            self.residual,
            self.error,
            self.seed,
            self.status.replace([',', '\n', '\r'], ";")
        )
    }
}

pub fn write_csv(path: &Path, records: &[ExperimentRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{CSV_HEADER}")?;
    for r in records {
        writeln!(f, "{}", r.csv_row())?;
    }
    f.flush()?;
    Ok(())
}

/// Noisy measurement of test image `index` at `level`; the same for every method.
pub fn test_data(setup: &TaskSetup, u: &[f64], level: f64, seed: u64, index: usize) -> Result<(Vec<f64>, f64)> {
    let clean = setup.a.apply(u)?;
    add_noise(&clean, &NoiseSpec { relative_level: level, seed: derive_seed(seed, &[level.to_bits(), index as u64]) })
}

/// Per-sample metrics and measured noise level, in test-set order.
pub fn evaluate_samples(
    method: &Method<'_>,
    setup: &TaskSetup,
    test_set: &[Vec<f64>],
    level: f64,
    iterations: usize,
    seed: u64,
    cgls: CglsConfig,
) -> Vec<Result<(f64, f64, f64)>> {
    test_set
        .par_iter()
        .enumerate()
        .map(|(k, u)| {
            let (b, _) = test_data(setup, u, level, seed, k)?;
            let clean = setup.a.apply_vec(u);
            let noise_level = norm(&sub(&b, &clean)) / norm(&b).max(f64::MIN_POSITIVE);
            let pred = method.reconstruct(setup, &b, iterations, cgls)?;
            let (res, err) = compute_metrics(&pred, u, &setup.a, &b)?;
            Ok((res, err, noise_level))
        })
        .collect()
}

/// Mean residual and error over the test set; failures become NaN rows
/// with the first error as status.
pub fn evaluate_method(
    method: &Method<'_>,
    setup: &TaskSetup,
    test_set: &[Vec<f64>],
    level: f64,
    iterations: usize,
    seed: u64,
    cgls: CglsConfig,
) -> ExperimentRecord {
    let samples = evaluate_samples(method, setup, test_set, level, iterations, seed, cgls);
    let mut record = ExperimentRecord {
        task: setup.task,
        method: method.kind(),
        noise_percent: 100.0 * level,
        iterations,
        residual: 0.0,
        error: 0.0,
        seed,
        status: "ok".into(),
    };
    for (k, s) in samples.into_iter().enumerate() {
        match s {
            Ok((r, e, _)) => {
                record.residual += r;
                record.error += e;
            }
            Err(err) => {
                record.residual = f64::NAN;
                record.error = f64::NAN;
                record.status = format!("failed at sample {k}: {err}");
                return record;
            }
        }
    }
    record.residual /= test_set.len() as f64;
    record.error /= test_set.len() as f64;
    record
}

/// One row per `(method, noise level)`.
pub fn sweep_noise(
    methods: &[Method<'_>],
    setup: &TaskSetup,
    noise_levels: &[f64],
    test_set: &[Vec<f64>],
    iterations: usize,
    seed: u64,
    cgls: CglsConfig,
) -> Result<Vec<ExperimentRecord>> {
    if test_set.is_empty() || methods.is_empty() {
        return Err(DripError::precondition("sweep needs methods and test images"));
    }
    Ok(methods
        .iter()
        .flat_map(|m| {
            noise_levels.iter().map(move |&lvl| evaluate_method(m, setup, test_set, lvl, iterations, seed, cgls))
        })
        .collect())
}

/// One row per `(method, iteration count)` at a fixed noise level.
pub fn sweep_iterations(
    methods: &[Method<'_>],
    setup: &TaskSetup,
    iterations: &[usize],
    noise_level: f64,
    test_set: &[Vec<f64>],
    seed: u64,
    cgls: CglsConfig,
) -> Result<Vec<ExperimentRecord>> {
    if test_set.is_empty() || methods.is_empty() || iterations.contains(&0) {
        return Err(DripError::precondition("sweep needs methods, test images and positive iteration counts"));
    }
    Ok(methods
        .iter()
        .flat_map(|m| {
            iterations.iter().map(move |&it| evaluate_method(m, setup, test_set, noise_level, it, seed, cgls))
        })
        .collect())
}

/// Descending singular values of the task operator.
pub fn svd_report(task: Task, size: usize) -> Result<Vec<f64>> {
    let setup = TaskSetup::new(task, size)?;
    operator_spectrum(&setup.a)
}

/// Spectrum over the image domain: one value per unknown. A wide operator
/// (`m < n`) has `n − m` exactly zero singular values, appended at the tail.
pub fn operator_spectrum(a: &LinearMap) -> Result<Vec<f64>> {
    let dense = materialize_dense(a, DENSE_CAP)?;
    let mut sv = singular_values(&dense)?;
    sv.resize(dense.ncols(), 0.0);
    Ok(sv)
}

pub fn write_spectrum_csv(path: &Path, values: &[f64]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "index,singular_value")?;
    for (i, v) in values.iter().enumerate() {
        writeln!(f, "{i},{v:.8e}")?;
    }
    f.flush()?;
    Ok(())
}

/// Caps the global worker pool from `DRIP_THREADS`; a no-op once the pool
/// exists or when unset.
pub fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("DRIP_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| DripError::precondition(format!("DRIP_THREADS must be a positive integer, got {v:?}")))?;
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}
