//! Robustness of trained checkpoints: residual and error versus noise level
//! and versus iteration count, with Tikhonov as reference.
//!
//! `cargo run --release --example noise_sweep -- model.ckpt [more.ckpt ...]`
//! (checkpoints from `train_deblur` or `drip train`).

use drip::experiments::{
    gen_phantoms, sweep_iterations, sweep_noise, Method, PhantomSpec, Task, TaskSetup, CSV_HEADER,
};
use drip::formats::load_checkpoint;
use drip::solvers::CglsConfig;
use drip::training::ModelKind;

fn main() -> drip::Result<()> {
    let paths: Vec<String> = std::env::args().skip(1).collect();
    if paths.is_empty() {
        eprintln!("usage: noise_sweep CHECKPOINT...");
        std::process::exit(2);
    }
    let models = paths.iter().map(|p| Ok(load_checkpoint(p.as_ref())?.0)).collect::<drip::Result<Vec<_>>>()?;
    let setup = TaskSetup::new(Task::Deblur, models[0].shape().height)?;
    let test = gen_phantoms(&PhantomSpec { seed: 2, ..Default::default() }, 50)?;
    let cgls = CglsConfig::default();

    println!("{CSV_HEADER}");
    let levels = [0.005, 0.01, 0.02, 0.05, 0.10];
    for m in &models {
        let iters = if m.kind() == ModelKind::NeuralProximal { m.config.layers } else { 1 };
        for r in sweep_noise(&[Method::Model(m)], &setup, &levels, &test, iters, 0, cgls)? {
            println!("{}", r.csv_row());
        }
    }
    for r in sweep_noise(&[Method::Tikhonov { alpha: 0.1 }], &setup, &levels, &test, 1, 0, cgls)? {
        println!("{}", r.csv_row());
    }
    let methods: Vec<Method<'_>> = models.iter().map(Method::Model).collect();
    for r in sweep_iterations(&methods, &setup, &[1, 2, 4, 8, 16], 0.01, &test, 0, cgls)? {
        println!("{}", r.csv_row());
    }
    Ok(())
}
