//! Trains a model (Hyper-ResNet by default) on synthetic 32×32 deblurring
//! data and compares it with the Tikhonov reconstruction at the same α on
//! held-out images.
//!
//! `cargo run --release --example train_deblur -- [epochs] [train_count] [hyper|la-net|prox] [checkpoint] [alpha]`

use std::time::Instant;

use drip::experiments::{evaluate_method, gen_phantoms, Method, PhantomSpec, Task, TaskSetup};
use drip::solvers::CglsConfig;
use drip::training::{train, ModelBundle, ModelConfig, ModelKind, TrainConfig};

fn main() -> drip::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().and_then(|s| s.parse().ok()).unwrap_or(60);
    let count = args.next().and_then(|s| s.parse().ok()).unwrap_or(200);
    let kind = args.next().map(|s| ModelKind::parse(&s)).transpose()?.unwrap_or(ModelKind::HyperResNet);
    let checkpoint = args.next().filter(|s| s != "-");
    let alpha: Option<f64> = args.next().and_then(|s| s.parse().ok());

    let setup = TaskSetup::new(Task::Deblur, 32)?;
    let train_set = gen_phantoms(&PhantomSpec { seed: 1, ..Default::default() }, count)?;
    let test_set = gen_phantoms(&PhantomSpec { seed: 2, ..Default::default() }, 50)?;

    let mut cfg = ModelConfig::new(kind, setup.shape());
    if let Some(alpha) = alpha {
        cfg.alpha = alpha;
    }
    if kind == ModelKind::NeuralProximal {
        cfg.baseline_step = drip::training::default_step(&setup.a);
    }
    let mut model = ModelBundle::init(cfg, 7)?;
    let tc = TrainConfig { epochs, ..Default::default() };
    let start = Instant::now();
    train(&mut model, &train_set, &setup.a, &setup.e, &tc, |m| {
        println!(
            "epoch {:3}  loss {:.4e}  residual {:.4}  error {:.4}  ({:.0?})",
            m.epoch,
            m.losses.total,
            m.residual,
            m.error,
            start.elapsed()
        );
    })?;

    if let Some(path) = checkpoint {
        drip::formats::save_checkpoint(path.as_ref(), &model, Some("deblur"))?;
    }

    let cgls = CglsConfig::default();
    let iterations = if kind == ModelKind::NeuralProximal { cfg.layers } else { 1 };
    for method in [Method::Model(&model), Method::Tikhonov { alpha: cfg.alpha }] {
        let r = evaluate_method(&method, &setup, &test_set, 0.075, iterations, 3, cgls);
        println!("{:>9}: residual {:.4}  error {:.4}  [{}]", r.method, r.residual, r.error, r.status);
    }
    Ok(())
}
