//! The two-pixel example: `A = [1 1]` cannot see `u₁ − u₂`. In the latent
//! coordinates `E = [[1, 1], [1, −1]]` the second component lies in the null
//! space of `A·E = [2, 0]`, so a plain data fit leaves it at zero. Training
//! on images with `u₂ = 0` teaches the terminal state to fill it in.
//!
//! `cargo run --release --example toy_null_space`

use drip::operators::materialize_dense;
use drip::solvers::{cgls, datafit_solve, CglsConfig, DataFitProblem};
use drip::training::{train, ModelBundle, ModelConfig, ModelKind, TrainConfig};
use drip::{LatentShape, LinearMap};
use nalgebra::DMatrix;

fn main() -> drip::Result<()> {
    let a = LinearMap::dense(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]))?;
    let e = LinearMap::dense(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]))?;
    let ae = LinearMap::dense(materialize_dense(&a, 4)? * materialize_dense(&e, 4)?)?;
    println!("A·E = {:?}", materialize_dense(&ae, 4)?.as_slice());

    let cfg = CglsConfig { max_iterations: 20, tolerance: 1e-14 };
    let min_norm = cgls(&ae, &[2.0], &[0.0, 0.0], &cfg)?;
    println!("CGLS on A·E z = 2: z = {:?} (minimum norm)", min_norm.x);
    for (name, embed) in [("identity", LinearMap::Identity(2)), ("paired", e.clone())] {
        let p = DataFitProblem { a: &a, e: &embed, b: &[1.0], alpha: 1.0, z_anchor: &[0.0, 0.0] };
        println!("data fit, {name} embedding, b = 1, α = 1: z* = {:?}", datafit_solve(&p, &cfg)?);
    }

    // Images (u₁, u₂) = (2t, 0): latent z = (t, t).
    let data: Vec<Vec<f64>> = (0..64).map(|k| vec![1.0 + 2.0 * (k as f64 / 63.0), 0.0]).collect();
    let mut mc = ModelConfig::new(ModelKind::HyperResNet, LatentShape::new(2, 1, 1));
    mc.layers = 3;
    mc.hidden = 4;
    mc.kernel = 1;
    mc.alpha = 1.0;
    let mut model = ModelBundle::init(mc, 5)?;
    let tc =
        TrainConfig { epochs: 150, learning_rate: 1e-2, noise_range: (0.0, 0.0), batch_size: 8, ..Default::default() };
    let history = train(&mut model, &data, &a, &e, &tc, |_| {})?;
    println!(
        "trained {} epochs: error {:.4} → {:.4}",
        tc.epochs,
        history[0].error,
        history.last().map_or(f64::NAN, |m| m.error)
    );
    for b in [1.0, 2.0, 3.0] {
        let rec = model.reconstruct(&a, &e, &[b], 1, CglsConfig::default())?;
        let z = rec.z_star.unwrap_or_default();
        println!("b = {b}: z* = [{:.4}, {:.4}]  u* = [{:.4}, {:.4}]", z[0], z[1], rec.u[0], rec.u[1]);
    }
    Ok(())
}
