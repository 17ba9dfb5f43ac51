use drip::potential::{phi_grad, phi_hessian_vec, phi_value, sigma_pair, PotentialLayer, Slopes};
use drip::LatentShape;
use drip_oracle::finite_difference_grad;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn layer(rng: &mut ChaCha8Rng, channels: usize) -> PotentialLayer {
    let mut l = PotentialLayer::random(6, channels, 3, Slopes::default(), 0.5, 0.0, rng).unwrap();
    for w in &mut l.log_weights {
        *w = rng.random_range(-1.0..1.0);
    }
    l
}

#[test]
fn sigma_hand_values() {
    assert_eq!(sigma_pair(0.0, 1.0, 0.01), (0.0, 0.0, 0.01));
    assert_eq!(sigma_pair(2.0, 1.0, 0.01), (2.0, 2.0, 1.0));
    let (s, d, dd) = sigma_pair(-2.0, 1.0, 0.01);
    assert!((s - 0.02).abs() < 1e-16 && (d + 0.02).abs() < 1e-16 && dd == 0.01);
}

#[test]
fn scalar_layer() {
    let shape = LatentShape::image(1, 1);
    let mut l = PotentialLayer::zeros(1, 1, 1, Slopes::default()).unwrap();
    l.stencil.taps[0] = 1.0;
    assert_eq!(phi_value(&[2.0], &shape, &l).unwrap(), 2.0);
    assert_eq!(phi_grad(&[2.0], &shape, &l).unwrap(), vec![2.0]);
    assert_eq!(phi_hessian_vec(&[2.0], &shape, &l, &[1.0]).unwrap(), vec![1.0]);
    assert!(phi_value(&[2.0, 1.0], &shape, &l).is_err());
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let shape = LatentShape::image(8, 8);
    for _ in 0..10 {
        let l = layer(&mut rng, 1);
        let z = gaussian(&mut rng, 64);
        let g = phi_grad(&z, &shape, &l).unwrap();
        let fd = finite_difference_grad(|x| phi_value(x, &shape, &l).unwrap(), &z, 1e-5).unwrap();
        let err = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() / dot(&g, &g).sqrt();
        assert!(err <= 1e-6, "relative error {err}");
    }
}

#[test]
fn hessian_matches_gradient_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let shape = LatentShape::new(2, 5, 4);
    let l = layer(&mut rng, 2);
    let z = gaussian(&mut rng, shape.len());
    let v = gaussian(&mut rng, shape.len());
    let hv = phi_hessian_vec(&z, &shape, &l, &v).unwrap();
    let h = 1e-7;
    let zp: Vec<f64> = z.iter().zip(&v).map(|(a, b)| a + h * b).collect();
    let zm: Vec<f64> = z.iter().zip(&v).map(|(a, b)| a - h * b).collect();
    let (gp, gm) = (phi_grad(&zp, &shape, &l).unwrap(), phi_grad(&zm, &shape, &l).unwrap());
    for k in 0..hv.len() {
        assert!((hv[k] - (gp[k] - gm[k]) / (2.0 * h)).abs() < 1e-5 * (1.0 + hv[k].abs()));
    }
}

#[test]
fn hessian_is_psd_and_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let shape = LatentShape::image(6, 6);
    for _ in 0..100 {
        let l = layer(&mut rng, 1);
        let z = gaussian(&mut rng, 36);
        let v = gaussian(&mut rng, 36);
        let u = gaussian(&mut rng, 36);
        let hv = phi_hessian_vec(&z, &shape, &l, &v).unwrap();
        let hu = phi_hessian_vec(&z, &shape, &l, &u).unwrap();
        assert!(dot(&v, &hv) >= -1e-12);
        let (a, b) = (dot(&hv, &u), dot(&v, &hu));
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }
}

#[test]
fn log_weight_shift_scales_potential() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let shape = LatentShape::image(4, 4);
    let l = layer(&mut rng, 1);
    let z = gaussian(&mut rng, 16);
    let mut shifted = l.clone();
    shifted.log_weights.iter_mut().for_each(|w| *w += 2f64.ln());
    let (a, b) = (phi_value(&z, &shape, &l).unwrap(), phi_value(&z, &shape, &shifted).unwrap());
    assert!((b - 2.0 * a).abs() <= 1e-12 * b);
}

fn layer_and_states(seed: u64) -> (PotentialLayer, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = layer(&mut rng, 1);
    (l, gaussian(&mut rng, 25), gaussian(&mut rng, 25))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn positively_two_homogeneous(seed in any::<u64>(), c in 0.1f64..5.0) {
        let shape = LatentShape::image(5, 5);
        let (l, z, _) = layer_and_states(seed);
        let cz: Vec<f64> = z.iter().map(|v| c * v).collect();
        let (a, b) = (phi_value(&z, &shape, &l).unwrap(), phi_value(&cz, &shape, &l).unwrap());
        prop_assert!((b - c * c * a).abs() <= 1e-12 * b.max(1e-300));
        prop_assert!(a >= 0.0);
    }

    #[test]
    fn convex_chords(seed in any::<u64>(), lambda in 0.0f64..=1.0) {
        let shape = LatentShape::image(5, 5);
        let (l, x, y) = layer_and_states(seed);
        let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect();
        let (fx, fy) = (phi_value(&x, &shape, &l).unwrap(), phi_value(&y, &shape, &l).unwrap());
        let fm = phi_value(&mid, &shape, &l).unwrap();
        prop_assert!(fm <= lambda * fx + (1.0 - lambda) * fy + 1e-10 * (1.0 + fx.abs() + fy.abs()));
    }

    #[test]
    fn monotone_gradient(seed in any::<u64>()) {
        let shape = LatentShape::image(5, 5);
        let (l, x, y) = layer_and_states(seed);
        let (gx, gy) = (phi_grad(&x, &shape, &l).unwrap(), phi_grad(&y, &shape, &l).unwrap());
        let dg: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a - b).collect();
        let dz: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        prop_assert!(dot(&dg, &dz) >= -1e-10 * dot(&dz, &dz));
    }

    #[test]
    fn zero_state_is_minimum(seed in any::<u64>()) {
        let shape = LatentShape::image(5, 5);
        let (l, _, _) = layer_and_states(seed);
        let z = vec![0.0; 25];
        prop_assert_eq!(phi_value(&z, &shape, &l).unwrap(), 0.0);
        prop_assert!(phi_grad(&z, &shape, &l).unwrap().iter().all(|&g| g == 0.0));
    }
}

#[test]
fn curvature_bound_gradient_matches_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for channels in [1, 2] {
        let l = layer(&mut rng, channels);
        let mut grad = l.zero_grad();
        l.curvature_bound_vjp(1.0, &mut grad);
        let h = 1e-6;
        for t in 0..l.stencil.taps.len() {
            let (mut p, mut m) = (l.clone(), l.clone());
            p.stencil.taps[t] += h;
            m.stencil.taps[t] -= h;
            let fd = (p.curvature_bound() - m.curvature_bound()) / (2.0 * h);
            assert!((fd - grad.taps[t]).abs() <= 1e-6 * (1.0 + fd.abs()), "tap {t}: {fd} vs {}", grad.taps[t]);
        }
        for c in 0..l.log_weights.len() {
            let (mut p, mut m) = (l.clone(), l.clone());
            p.log_weights[c] += h;
            m.log_weights[c] -= h;
            let fd = (p.curvature_bound() - m.curvature_bound()) / (2.0 * h);
            assert!((fd - grad.log_weights[c]).abs() <= 1e-6 * (1.0 + fd.abs()));
        }
    }
}
