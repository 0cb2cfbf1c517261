//! Sensitivity of α to the drift parameter σ: different σ change α only by
//! a bounded factor.
//!
//! ```bash
//! cargo run --release --example sigma_sweep
//! ```

use wpi_conv::config::{Preset, RunConfig, SweepParam};
use wpi_conv::pipeline::sweep;

fn main() {
    let mut cfg = RunConfig::preset(Preset::Example33);
    cfg.p = Some(2.0);
    let (report, _) = sweep(&cfg, SweepParam::Sigma, &[1.0, 2.0, 5.0]);
    for e in &report.entries {
        match (&e.fit, &e.error) {
            (Some(f), _) => println!(
                "sigma = {}: {} exponent {:.4}",
                e.value,
                f.best.family.name(),
                f.best.exponent
            ),
            (None, Some(err)) => println!("sigma = {}: {err}", e.value),
            _ => println!("sigma = {}: no fit", e.value),
        }
    }
    if let Some(r) = &report.ratio {
        for (i, j, spread) in &r.spreads {
            println!("{} vs {}: ratio spread {spread:.4}", r.labels[*i], r.labels[*j]);
        }
        println!("bounded within {}: {}", r.factor, r.bounded);
    }
}
