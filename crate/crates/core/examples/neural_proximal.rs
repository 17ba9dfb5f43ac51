//! The unrolled neural-proximal baseline: gradient step on the data term
//! followed by a small residual network, trained for a few epochs on 16×16
//! deblurring. Error drops up to the trained depth and grows beyond it.
//!
//! `cargo run --release --example neural_proximal -- [epochs]`

use drip::experiments::{gen_phantoms, sweep_iterations, Method, PhantomSpec, Task, TaskSetup, CSV_HEADER};
use drip::solvers::CglsConfig;
use drip::training::{default_step, train, ModelBundle, ModelConfig, ModelKind, TrainConfig};

fn main() -> drip::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let setup = TaskSetup::new(Task::Deblur, 16)?;
    let train_set = gen_phantoms(&PhantomSpec { size: 16, seed: 1, ..Default::default() }, 64)?;
    let test_set = gen_phantoms(&PhantomSpec { size: 16, seed: 2, ..Default::default() }, 16)?;

    let mut cfg = ModelConfig::new(ModelKind::NeuralProximal, setup.shape());
    cfg.baseline_step = default_step(&setup.a);
    println!("step size 1/‖A‖² = {:.4}, {} blocks", cfg.baseline_step, cfg.layers);
    let mut model = ModelBundle::init(cfg, 7)?;
    let tc = TrainConfig { epochs, ..Default::default() };
    train(&mut model, &train_set, &setup.a, &setup.e, &tc, |m| {
        println!("epoch {:3}  loss {:.4e}  error {:.4}", m.epoch, m.losses.total, m.error);
    })?;

    println!("{CSV_HEADER}");
    let rows = sweep_iterations(
        &[Method::Model(&model)],
        &setup,
        &[1, 2, 4, 8, 16],
        0.01,
        &test_set,
        0,
        CglsConfig::default(),
    )?;
    for r in rows {
        println!("{}", r.csv_row());
    }
    Ok(())
}
