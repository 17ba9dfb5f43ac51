//! Shooting: the least-action path is recovered by propagating the
//! Euler–Lagrange recursion forward from `(z_0, z_1)`. Starting from the exact
//! second state the shooting residual vanishes; a perturbed start misses
//! the endpoint.
//!
//! `cargo run --release --example hyper_resnet_shooting`

use drip::experiments::{gen_phantoms, test_data, PhantomSpec, Task, TaskSetup};
use drip::leastaction::{la_fixed_point, LAConfig};
use drip::potential::{PotentialLayer, Slopes};
use drip::shooting::{hyper_resnet, propagate, shooting_residual, InitMapParams};
use drip::LatentShape;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn main() -> drip::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let shape = LatentShape::image(16, 16);
    let n = 4;
    let layers = (0..n)
        .map(|_| PotentialLayer::random(4, 1, 3, Slopes::default(), 0.1, 0.5f64.ln(), &mut rng))
        .collect::<drip::Result<Vec<_>>>()?;

    let imgs = gen_phantoms(&PhantomSpec { size: 16, seed: 2, ..Default::default() }, 2)?;
    let (z0, zs) = (&imgs[0], &imgs[1]);
    let cfg = LAConfig { layers: n, fixed_point_sweeps: 5000, sweep_tolerance: Some(1e-13), ..Default::default() };
    let bvp = la_fixed_point(z0, zs, &layers, &shape, &cfg)?;
    println!("boundary value problem: {} sweeps, EL residual {:.2e}", bvp.sweeps, bvp.el_residual);

    for eps in [0.0, 1e-6, 1e-3] {
        let mut z1 = bvp.trajectory.states[1].clone();
        z1.iter_mut().for_each(|v| *v += eps);
        let ivp = propagate(z0, &z1, &layers, n, &shape)?;
        let r = shooting_residual(&ivp, zs, &layers)?;
        println!("z_1 perturbed by {eps:.0e}: ‖r_s‖ = {:.3e}", norm(&r));
    }

    let setup = TaskSetup::new(Task::Deblur, 16)?;
    let (b, _) = test_data(&setup, &imgs[0], 0.05, 0, 0)?;
    let mut xi = InitMapParams::random(1, 4, 3, Slopes::default(), 0.3, &mut rng)?;
    // A nonzero second layer makes z_1 depend on the current z*.
    let normal = rand_distr::Normal::new(0.0, 0.05).unwrap();
    xi.layer2.taps.iter_mut().for_each(|t| *t = normal.sample(&mut rng));
    for outer in [1, 2, 4] {
        let cfg = LAConfig { layers: n, max_outer_iterations: outer, ..Default::default() };
        let out = hyper_resnet(&setup.a, &setup.e, &b, &layers, &xi, &setup.shape(), &cfg)?;
        println!(
            "hyper-resnet, {outer} outer: residual {:.6}  ‖r_s‖ {:.4e}  data-fit optimality {:.1e}",
            out.metrics.residual, out.metrics.shooting_residual, out.metrics.datafit_optimality
        );
    }
    Ok(())
}
