use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use drip::experiments::{
    configure_threads, gen_phantoms, load_pgm_dir, svd_report, sweep_iterations, sweep_noise, write_csv,
    write_spectrum_csv, Method, PhantomKind, PhantomSpec, Task, TaskSetup,
};
use drip::formats::{load_checkpoint, read_tensor, save_checkpoint, write_pgm, write_tensor, GrayImage, Tensor};
use drip::operators::{add_noise, NoiseSpec};
use drip::seeding::derive_seed;
use drip::solvers::CglsConfig;
use drip::training::{default_step, train, ModelBundle, ModelConfig, ModelKind, TrainConfig};
use drip::{DripError, Result};

#[derive(Parser)]
#[command(name = "drip", version, about = "Learned least-action regularization for inverse problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Deblur,
    Tomo,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Deblur => Task::Deblur,
            TaskArg::Tomo => Task::Tomo,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    LaNet,
    Hyper,
    Prox,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::LaNet => ModelKind::LANet,
            ModelArg::Hyper => ModelKind::HyperResNet,
            ModelArg::Prox => ModelKind::NeuralProximal,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PhantomArg {
    Ellipses,
    Bumps,
}

#[derive(Args, Clone)]
struct Shared {
    #[arg(long, value_enum, default_value = "deblur")]
    task: TaskArg,
    #[arg(long, default_value_t = 32)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    cgls_iters: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Writes synthetic phantoms (and optionally noisy measurements) as DRT1 tensors.
    GenData {
        #[command(flatten)]
        shared: Shared,
        #[arg(long, default_value_t = 200)]
        count: usize,
        #[arg(long, value_enum, default_value = "ellipses")]
        phantom: PhantomArg,
        #[arg(long)]
        out: PathBuf,
        /// Also write `count × m` measurements at noise levels in [noise-min, noise-max].
        #[arg(long)]
        measurements: Option<PathBuf>,
        #[arg(long, default_value_t = 0.05)]
        noise_min: f64,
        #[arg(long, default_value_t = 0.10)]
        noise_max: f64,
        /// Also export every image as PGM into this directory.
        #[arg(long)]
        pgm_dir: Option<PathBuf>,
    },
    /// Trains a model and writes a checkpoint.
    Train {
        #[command(flatten)]
        shared: Shared,
        #[arg(long, value_enum, default_value = "hyper")]
        model: ModelArg,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long, default_value_t = 8)]
        layers: usize,
        #[arg(long, default_value_t = 1)]
        max_iter: usize,
        #[arg(long, default_value_t = 0.05)]
        noise_min: f64,
        #[arg(long, default_value_t = 0.10)]
        noise_max: f64,
        #[arg(long, default_value_t = 60)]
        epochs: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        /// DRT1 image tensor or PGM directory; synthetic phantoms when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        count: usize,
        #[arg(long, alias = "out")]
        checkpoint: PathBuf,
    },
    /// Reconstructs images from measurements with a trained model.
    Reconstruct {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        checkpoint: PathBuf,
        /// DRT1 measurements, rank 1 (`m`) or rank 2 (`k × m`).
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        max_iter: usize,
        /// Also write the first reconstruction as PGM.
        #[arg(long)]
        pgm: Option<PathBuf>,
    },
    /// Residual and error versus noise level.
    SweepNoise {
        #[command(flatten)]
        shared: Shared,
        #[arg(long, required = true)]
        checkpoint: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "0.005,0.01,0.02,0.05,0.10")]
        noise: Vec<f64>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long, default_value_t = 1)]
        max_iter: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Residual and error versus iteration count.
    SweepIters {
        #[command(flatten)]
        shared: Shared,
        #[arg(long, required = true)]
        checkpoint: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
        iters: Vec<usize>,
        #[arg(long, default_value_t = 0.01)]
        noise: f64,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Singular values of the forward operator.
    Svd {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        out: PathBuf,
    },
}

fn cgls(shared: &Shared) -> CglsConfig {
    CglsConfig { max_iterations: shared.cgls_iters, ..CglsConfig::default() }
}

fn read_tensor_file(path: &Path) -> Result<Tensor> {
    read_tensor(&mut std::io::BufReader::new(std::fs::File::open(path)?))
}

fn write_tensor_file(path: &Path, t: &Tensor) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_tensor(&mut f, t)?;
    std::io::Write::flush(&mut f)?;
    Ok(())
}

/// Images from a DRT1 `k × size × size` tensor, a PGM directory, or phantoms.
fn load_images(data: Option<&Path>, size: usize, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    match data {
        Some(p) if p.is_dir() => load_pgm_dir(p, size),
        Some(p) => {
            let t = read_tensor_file(p)?;
            if t.dims.len() != 3 || t.dims[1] != size || t.dims[2] != size {
                return Err(DripError::Format(format!("expected k×{size}×{size} images, got {:?}", t.dims)));
            }
            Ok(t.data.chunks(size * size).map(<[f64]>::to_vec).collect())
        }
        None => gen_phantoms(&PhantomSpec { size, seed, ..Default::default() }, count),
    }
}

fn load_models(paths: &[PathBuf]) -> Result<Vec<ModelBundle>> {
    paths.iter().map(|p| Ok(load_checkpoint(p)?.0)).collect()
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::GenData { shared, count, phantom, out, measurements, noise_min, noise_max, pgm_dir } => {
            let kind = match phantom {
                PhantomArg::Ellipses => PhantomKind::Ellipses,
                PhantomArg::Bumps => PhantomKind::SmoothBumps,
            };
            let spec = PhantomSpec { size: shared.size, kind, seed: shared.seed, ..Default::default() };
            let images = gen_phantoms(&spec, count)?;
            let flat: Vec<f64> = images.concat();
            write_tensor_file(&out, &Tensor::new(vec![count, shared.size, shared.size], flat)?)?;
            if let Some(dir) = pgm_dir {
                std::fs::create_dir_all(&dir)?;
                for (k, img) in images.iter().enumerate() {
                    let g = GrayImage { width: shared.size, height: shared.size, pixels: img.clone() };
                    write_pgm(&dir.join(format!("{k:05}.pgm")), &g)?;
                }
            }
            if let Some(path) = measurements {
                if !(0.0..=noise_max).contains(&noise_min) {
                    return Err(DripError::Precondition("need 0 ≤ noise-min ≤ noise-max".into()));
                }
                let setup = TaskSetup::new(shared.task.into(), shared.size)?;
                let mut rows = Vec::new();
                for (k, img) in images.iter().enumerate() {
                    let s = derive_seed(shared.seed, &[k as u64, 0x6d65]);
                    let t = (s >> 11) as f64 / (1u64 << 53) as f64;
                    let level = noise_min + t * (noise_max - noise_min);
                    let clean = setup.a.apply(img)?;
                    rows.extend(add_noise(&clean, &NoiseSpec { relative_level: level, seed: s })?.0);
                }
                let m = rows.len() / count;
                write_tensor_file(&path, &Tensor::new(vec![count, m], rows)?)?;
            }
            eprintln!("wrote {count} images to {}", out.display());
        }
        Command::Train {
            shared,
            model,
            alpha,
            layers,
            max_iter,
            noise_min,
            noise_max,
            epochs,
            lr,
            data,
            count,
            checkpoint,
        } => {
            let task: Task = shared.task.into();
            let setup = TaskSetup::new(task, shared.size)?;
            let images = load_images(data.as_deref(), shared.size, count, shared.seed)?;
            let mut cfg = ModelConfig::new(model.into(), setup.shape());
            cfg.alpha = alpha;
            cfg.layers = layers;
            cfg.max_outer_iterations = max_iter;
            if cfg.kind == ModelKind::NeuralProximal {
                cfg.baseline_step = default_step(&setup.a);
            }
            let mut bundle = ModelBundle::init(cfg, shared.seed)?;
            let tc = TrainConfig {
                learning_rate: lr,
                epochs,
                noise_range: (noise_min, noise_max),
                seed: shared.seed,
                ..Default::default()
            };
            train(&mut bundle, &images, &setup.a, &setup.e, &tc, |m| {
                eprintln!(
                    "epoch {:3}  loss {:.6e}  residual {:.5}  error {:.5}",
                    m.epoch, m.losses.total, m.residual, m.error
                );
            })?;
            save_checkpoint(&checkpoint, &bundle, Some(&task.to_string()))?;
            eprintln!("wrote {}", checkpoint.display());
        }
        Command::Reconstruct { shared, checkpoint, input, out, max_iter, pgm } => {
            let (model, manifest) = load_checkpoint(&checkpoint)?;
            let task: Task = manifest.task.as_deref().map_or(Ok(shared.task.into()), str::parse)?;
            let size = model.shape().height;
            let setup = TaskSetup::new(task, size)?;
            let t = read_tensor_file(&input)?;
            let m = drip::Operator::rows(&setup.a);
            if t.data.len() % m != 0 || t.data.is_empty() {
                return Err(DripError::Format(format!("measurements {:?} do not match m = {m}", t.dims)));
            }
            let mut recon = Vec::new();
            for b in t.data.chunks(m) {
                recon.extend(Method::Model(&model).reconstruct(&setup, b, max_iter, cgls(&shared))?);
            }
            let k = t.data.len() / m;
            if let Some(p) = pgm {
                let g = GrayImage { width: size, height: size, pixels: recon[..size * size].to_vec() };
                write_pgm(&p, &g)?;
            }
            write_tensor_file(&out, &Tensor::new(vec![k, size, size], recon)?)?;
        }
        Command::SweepNoise { shared, checkpoint, noise, data, count, alpha, max_iter, out } => {
            let setup = TaskSetup::new(shared.task.into(), shared.size)?;
            let models = load_models(&checkpoint)?;
            let test = load_images(data.as_deref(), shared.size, count, derive_seed(shared.seed, &[1]))?;
            let mut methods: Vec<Method<'_>> = models.iter().map(Method::Model).collect();
            methods.push(Method::Tikhonov { alpha });
            let per_method = |m: &Method<'_>| match m {
                Method::Model(b) if b.kind() == ModelKind::NeuralProximal => b.config.layers,
                _ => max_iter,
            };
            let mut rows = Vec::new();
            for m in &methods {
                rows.extend(sweep_noise(&[*m], &setup, &noise, &test, per_method(m), shared.seed, cgls(&shared))?);
            }
            write_csv(&out, &rows)?;
        }
        Command::SweepIters { shared, checkpoint, iters, noise, data, count, out } => {
            let setup = TaskSetup::new(shared.task.into(), shared.size)?;
            let models = load_models(&checkpoint)?;
            let test = load_images(data.as_deref(), shared.size, count, derive_seed(shared.seed, &[1]))?;
            let methods: Vec<Method<'_>> = models.iter().map(Method::Model).collect();
            let rows = sweep_iterations(&methods, &setup, &iters, noise, &test, shared.seed, cgls(&shared))?;
            write_csv(&out, &rows)?;
        }
        Command::Svd { shared, out } => {
            write_spectrum_csv(&out, &svd_report(shared.task.into(), shared.size)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
