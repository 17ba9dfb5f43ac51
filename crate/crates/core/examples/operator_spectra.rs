//! Singular spectra of the two forward operators: the Gaussian blur decays
//! smoothly, while 18-angle tomography on a 32×32 grid has a block of exact
//! zeros (fewer measurements than unknowns).
//!
//! `cargo run --release --example operator_spectra -- [out_dir]`

use drip::experiments::{svd_report, write_spectrum_csv, Task};

fn main() -> drip::Result<()> {
    let out = std::env::args().nth(1);
    for task in [Task::Deblur, Task::Tomo] {
        let sv = svd_report(task, 32)?;
        let top = sv[0];
        println!("{task}: {} values, σ_max {top:.4}", sv.len());
        for exp in [2, 4, 6, 10] {
            let below = sv.iter().filter(|&&s| s < top * 10f64.powi(-exp)).count();
            println!("  below 1e-{exp}·σ_max: {below}");
        }
        let deciles: Vec<String> = (0..=10).map(|k| format!("{:.2e}", sv[(k * (sv.len() - 1)) / 10])).collect();
        println!("  deciles: {}", deciles.join(" "));
        if let Some(dir) = &out {
            let path = std::path::Path::new(dir).join(format!("{task}_spectrum.csv"));
            write_spectrum_csv(&path, &sv)?;
            println!("  wrote {}", path.display());
        }
    }
    Ok(())
}
