use drip::leastaction::{euler_lagrange_residual, la_net, LAConfig};
use drip::potential::{PotentialLayer, Slopes};
use drip::shooting::{hyper_resnet, init_map, propagate, shooting_residual, InitMapParams};
use drip::solvers::CglsConfig;
use drip::training::{train, ModelBundle, ModelConfig, ModelKind, TrainConfig};
use drip::{LatentShape, LinearMap};
use drip_oracle::{newton_bvp, NewtonConfig};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn mild_layers(rng: &mut ChaCha8Rng, n: usize, channels: usize) -> Vec<PotentialLayer> {
    (0..n).map(|_| PotentialLayer::random(4, channels, 3, Slopes::default(), 0.1, 0.5f64.ln(), rng).unwrap()).collect()
}

fn max_abs_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

#[test]
fn newton_solution_propagates_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let shape = LatentShape::image(2, 2);
    for n in 1..=4 {
        let layers = mild_layers(&mut rng, n, 1);
        let z0 = gaussian(&mut rng, 4);
        let zs = gaussian(&mut rng, 4);
        let bvp = newton_bvp(&z0, &zs, &layers, n, &shape, &NewtonConfig::default()).unwrap();
        let ivp = propagate(&z0, &bvp.states[1], &layers, n, &shape).unwrap();
        for (a, b) in ivp.states.iter().zip(&bvp.states) {
            assert!(max_abs_diff(a, b) <= 1e-8);
        }
        let r = shooting_residual(&ivp, &zs, &layers).unwrap();
        assert!(r.iter().all(|v| v.abs() <= 1e-8), "N={n}: {r:?}");
    }
}

#[test]
fn propagated_trajectory_satisfies_interior_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let shape = LatentShape::new(2, 3, 3);
    let n = 5;
    let layers = mild_layers(&mut rng, n, 2);
    let z0 = gaussian(&mut rng, shape.len());
    let z1 = gaussian(&mut rng, shape.len());
    let t = propagate(&z0, &z1, &layers, n, &shape).unwrap();
    // The implied terminal state closes the last row as well.
    let rows = euler_lagrange_residual(&z0, &t.z_star, &t.states[1..], &layers, &shape);
    assert_eq!(rows.len(), n);
    assert!(rows.iter().flatten().all(|v| v.abs() < 1e-10));
    let r = shooting_residual(&t, &t.z_star, &layers).unwrap();
    assert!(r.iter().all(|v| *v == 0.0));
}

#[test]
fn flat_potential_gives_straight_line() {
    let shape = LatentShape::image(1, 2);
    let layers: Vec<_> = (0..3).map(|_| PotentialLayer::zeros(1, 1, 1, Slopes::default()).unwrap()).collect();
    let t = propagate(&[0.0, 1.0], &[1.0, 1.5], &layers, 3, &shape).unwrap();
    assert_eq!(t.states[3], vec![3.0, 2.5]);
    assert_eq!(t.z_star, vec![4.0, 3.0]);
    assert!(propagate(&[0.0, 1.0], &[1.0, 1.5], &layers, 0, &shape).is_err());
}

#[test]
fn zero_init_map_is_identity_in_z0() {
    let shape = LatentShape::image(3, 3);
    let xi = InitMapParams::zeros(1, 4, 3, Slopes::default()).unwrap();
    let z0: Vec<f64> = (0..9).map(|k| k as f64 - 4.0).collect();
    let zs = vec![1.0; 9];
    assert_eq!(init_map(&z0, &zs, &shape, &xi).unwrap(), z0);
    assert!(init_map(&z0, &zs[..8], &shape, &xi).is_err());
}

#[test]
fn zero_hyper_matches_flat_la_net() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = LinearMap::dense(DMatrix::from_vec(10, 16, gaussian(&mut rng, 160))).unwrap();
    let e = LinearMap::Identity(16);
    let b = gaussian(&mut rng, 10);
    let shape = LatentShape::image(4, 4);
    let layers: Vec<_> = (0..3).map(|_| PotentialLayer::zeros(4, 1, 3, Slopes::default()).unwrap()).collect();
    let xi = InitMapParams::zeros(1, 4, 3, Slopes::default()).unwrap();
    let cfg = LAConfig { layers: 3, cgls: CglsConfig { max_iterations: 400, tolerance: 1e-13 }, ..Default::default() };
    let hy = hyper_resnet(&a, &e, &b, &layers, &xi, &shape, &cfg).unwrap();
    let la = la_net(&a, &e, &b, &layers, &shape, &cfg).unwrap();
    assert!(max_abs_diff(&hy.u_star, &la.u_star) <= 1e-8);
}

#[test]
fn null_space_component_is_learned() {
    let a = LinearMap::dense(DMatrix::from_row_slice(1, 2, &[1.0, 1.0])).unwrap();
    let e = LinearMap::dense(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0])).unwrap();
    let shape = LatentShape::new(2, 1, 1);
    // Latents with z₂ = z₁; AE = [2, 0] cannot see z₂.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let dataset: Vec<Vec<f64>> = (0..64)
        .map(|_| {
            let z1: f64 = rng.random_range(0.5..1.5);
            vec![2.0 * z1, 0.0]
        })
        .collect();
    let mut cfg = ModelConfig::new(ModelKind::HyperResNet, shape);
    cfg.layers = 3;
    cfg.hidden = 4;
    cfg.kernel = 1;
    cfg.alpha = 1.0;
    let mut model = ModelBundle::init(cfg, 5).unwrap();
    let tc =
        TrainConfig { epochs: 150, learning_rate: 1e-2, noise_range: (0.0, 0.0), batch_size: 8, ..Default::default() };
    train(&mut model, &dataset, &a, &e, &tc, |_| {}).unwrap();

    let plain = drip::solvers::datafit_solve(
        &drip::solvers::DataFitProblem { a: &a, e: &e, b: &[2.0], alpha: 1.0, z_anchor: &[0.0, 0.0] },
        &CglsConfig::default(),
    )
    .unwrap();
    assert!(plain[1].abs() < 1e-12);
    let rec = model.reconstruct(&a, &e, &[2.0], 1, CglsConfig::default()).unwrap();
    let z = rec.z_star.unwrap();
    assert!(z[1] > 0.2, "null-space component {z:?}");
}
