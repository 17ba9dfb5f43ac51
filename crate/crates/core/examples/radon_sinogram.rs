//! Limited-angle tomography on a phantom: sinogram, unfiltered
//! back-projection and a Tikhonov reconstruction, written as PGM files.
//!
//! `cargo run --release --example radon_sinogram -- [out_dir]`

use std::path::PathBuf;

use drip::experiments::{compute_metrics, gen_phantoms, test_data, Method, PhantomSpec, Task, TaskSetup};
use drip::formats::{write_pgm, GrayImage};
use drip::solvers::CglsConfig;
use drip::Operator;

/// Rescales to [0, 1] for display.
fn normalized(v: &[f64]) -> Vec<f64> {
    let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
    v.iter().map(|x| (x - lo) / (hi - lo).max(f64::MIN_POSITIVE)).collect()
}

fn main() -> drip::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "radon_out".into()));
    std::fs::create_dir_all(&out)?;
    let size = 32;
    let setup = TaskSetup::new(Task::Tomo, size)?;
    let u = gen_phantoms(&PhantomSpec { seed: 11, ..Default::default() }, 1)?.remove(0);
    let (b, noise) = test_data(&setup, &u, 0.02, 0, 0)?;
    let bins = setup.a.rows() / 18;
    println!(
        "sinogram 18 angles × {bins} bins, noise norm {noise:.4}, data norm {:.4}",
        b.iter().map(|v| v * v).sum::<f64>().sqrt()
    );

    let backprojection = setup.a.adjoint(&b)?;
    let cgls = CglsConfig::default();
    let mut images =
        vec![("phantom", u.clone(), size), ("sinogram", b.clone(), bins), ("backprojection", backprojection, size)];
    for alpha in [1.0, 0.1, 0.01] {
        let rec = Method::Tikhonov { alpha }.reconstruct(&setup, &b, 1, cgls)?;
        let (res, err) = compute_metrics(&rec, &u, &setup.a, &b)?;
        println!("tikhonov α={alpha:<5} residual {res:.4}  error {err:.4}");
        images.push((if alpha == 0.1 { "tikhonov" } else { "" }, rec, size));
    }
    for (name, data, width) in images.into_iter().filter(|i| !i.0.is_empty()) {
        let img = GrayImage { width, height: data.len() / width, pixels: normalized(&data) };
        write_pgm(&out.join(format!("{name}.pgm")), &img)?;
    }
    println!("wrote PGM files to {}", out.display());
    Ok(())
}
