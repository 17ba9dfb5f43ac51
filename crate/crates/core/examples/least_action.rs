//! Solving the least-action boundary value problem by block sweeps: energy
//! per sweep with and without the curvature shift, compared with Newton's
//! method on the full system.
//!
//! `cargo run --release --example least_action`

use drip::leastaction::{la_energy, la_fixed_point, sweep_shifts, LAConfig};
use drip::potential::{PotentialLayer, Slopes};
use drip::LatentShape;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> drip::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let shape = LatentShape::image(8, 8);
    let n = 6;
    let layers = (0..n)
        .map(|_| PotentialLayer::random(8, 1, 3, Slopes::default(), 0.5, 0.0, &mut rng))
        .collect::<drip::Result<Vec<_>>>()?;
    let mut draw = || -> Vec<f64> { (0..shape.len()).map(|_| StandardNormal.sample(&mut rng)).collect() };
    let (z0, zs) = (draw(), draw());

    let base = LAConfig { layers: n, ..Default::default() };
    let shifts = sweep_shifts(&layers, &base);
    println!("curvature shifts: {:?}", shifts.iter().map(|s| format!("{s:.2}")).collect::<Vec<_>>());

    println!("{:>6} {:>14} {:>14}", "sweeps", "energy", "EL residual");
    for sweeps in [1, 2, 4, 8, 16, 32, 64, 128] {
        let cfg = LAConfig { fixed_point_sweeps: sweeps, ..base };
        let r = la_fixed_point(&z0, &zs, &layers, &shape, &cfg)?;
        let e = la_energy(&r.trajectory, &layers)?;
        println!("{sweeps:>6} {:>14.8} {:>14.3e}", e.total, r.el_residual);
    }

    let plain = LAConfig { fixed_point_sweeps: 32, majorize: false, ..base };
    match la_fixed_point(&z0, &zs, &layers, &shape, &plain) {
        Ok(r) => println!("unshifted sweeps: EL residual {:.3e}", r.el_residual),
        Err(e) => println!("unshifted sweeps: {e}"),
    }

    let tight = LAConfig { fixed_point_sweeps: 5000, sweep_tolerance: Some(1e-12), ..base };
    let r = la_fixed_point(&z0, &zs, &layers, &shape, &tight)?;
    let e = la_energy(&r.trajectory, &layers)?;
    println!(
        "converged after {} sweeps: energy {:.8} (kinetic {:.6}, potential {:.6})",
        r.sweeps, e.total, e.kinetic, e.potential
    );
    Ok(())
}
